#include "cct/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cct/error.hpp"
#include "cct/rng.hpp"

namespace cct {

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ContractError("MlpSpec needs at least input and output sizes");
  for (auto s : layer_sizes)
    if (s == 0) throw ContractError("MlpSpec layer sizes must be positive");
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
  return n;
}

std::vector<Tensor> NetworkParams::parameters() const {
  std::vector<Tensor> out;
  out.reserve(weights.size() * 2);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

NetworkParams NetworkParams::clone() const {
  NetworkParams copy{spec, {}, {}, init_seed};
  for (const auto& w : weights) copy.weights.push_back(w.clone());
  for (const auto& b : biases) copy.biases.push_back(b.clone());
  return copy;
}

void NetworkParams::zero_grad() {
  for (auto& w : weights) w.zero_grad();
  for (auto& b : biases) b.zero_grad();
}

NetworkParams init_network(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkParams net{spec, {}, {}, seed};
  Rng rng(derive_seed(seed, "init"));
  for (std::size_t l = 0; l < spec.affine_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-limit, limit);
    net.weights.emplace_back(Shape{in, out}, std::move(w), true);
    net.biases.push_back(Tensor::zeros({out}, true));
  }
  return net;
}

Tensor forward(Tape& tape, const NetworkParams& net, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != net.spec.input_dim()) {
    throw DimensionError("forward: input " + shape_to_string(x.shape()) + " does not match network input width " +
                         std::to_string(net.spec.input_dim()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    h = add_row(tape, matmul(tape, h, net.weights[l]), net.biases[l]);
    if (l + 1 < net.weights.size()) h = relu(tape, h);
  }
  return h;
}

AdamState make_adam_state(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    if (state.m[i].size() != params[i].numel()) throw ContractError("adam_step: moment shape mismatch");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void sgd_step(std::span<Tensor> params, double lr) {
  if (!(lr > 0.0)) throw ContractError("sgd_step: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw ContractError("sgd_step: parameter " + std::to_string(i) + " has no gradient");
    auto w = params[i].data();
    auto g = params[i].grad();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
  }
}

double lr_at_epoch(double lr0, int epoch) {
  if (epoch < 0) throw ContractError("lr_at_epoch: epoch must be non-negative");
  return lr0 * std::pow(0.95, epoch);
}

// --- checkpoint encoding ----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'C', 'T', 'M'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ParseError("CCTM: truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_model(const NetworkParams& net) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(net.spec.layer_sizes.size()));
  for (auto s : net.spec.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
  for (const auto& p : net.parameters())
    for (double d : p.data()) put_f64(out, d);
  return out;
}

NetworkParams decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("CCTM: bad magic");
  Reader r(bytes.subspan(4));
  const auto version = r.u32();
  if (version != kModelFormatVersion) throw ParseError("CCTM: unsupported format version " + std::to_string(version));
  const auto count = r.u32();
  if (count < 2 || count > 4096) throw ParseError("CCTM: implausible layer count " + std::to_string(count));
  MlpSpec spec;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = r.u32();
    if (s == 0) throw ParseError("CCTM: zero layer size");
    spec.layer_sizes.push_back(s);
  }
  if (r.remaining() != spec.parameter_count() * 8) {
    throw ParseError("CCTM: expected " + std::to_string(spec.parameter_count() * 8) + " parameter bytes, found " +
                     std::to_string(r.remaining()));
  }
  NetworkParams net{spec, {}, {}, 0};
  for (std::size_t l = 0; l < spec.affine_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
    std::vector<double> w(in * out), b(out);
    for (auto& x : w) x = r.f64();
    for (auto& x : b) x = r.f64();
    net.weights.emplace_back(Shape{in, out}, std::move(w), true);
    net.biases.emplace_back(Shape{out}, std::move(b), true);
  }
  return net;
}

void save_model(const NetworkParams& net, const std::filesystem::path& path) {
  const auto bytes = encode_model(net);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

NetworkParams load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_model(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace cct

#include "cct/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cct/error.hpp"

namespace cct {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor() : s_(std::make_shared<detail::TensorStorage>()) {
  s_->shape = {1};
  s_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : s_(std::make_shared<detail::TensorStorage>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  return s_->shape.empty() ? 1 : s_->shape.front();
}

std::size_t Tensor::cols() const {
  if (s_->shape.size() != 2) throw DimensionError("cols() needs a matrix, got " + shape_to_string(shape()));
  return s_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return s_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!s_->leaf) throw ContractError("requires_grad can only be changed on leaf tensors");
  s_->requires_grad = on;
}

void Tensor::zero_grad() {
  s_->grad.assign(s_->data.size(), 0.0);
}

Tensor Tensor::clone() const {
  auto s = std::make_shared<detail::TensorStorage>(*s_);
  s->leaf = true;
  return Tensor(std::move(s));
}

Tensor Tensor::detach() const {
  auto s = std::make_shared<detail::TensorStorage>();
  s->shape = s_->shape;
  s->data = s_->data;
  return Tensor(std::move(s));
}

// --- Tape -----------------------------------------------------------------

Tape Tape::no_grad() {
  Tape t;
  t.recording_ = false;
  return t;
}

bool Tape::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool Tape::tracks(std::span<const Tensor> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::record(std::vector<Tensor> inputs, Tensor& output, BackwardFn backward) {
  output.s_->requires_grad = true;
  output.s_->leaf = false;
  nodes_.push_back(Node{std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  for (auto& node : nodes_) node.output.clear_grad();
  if (!loss.requires_grad()) return;

  if (loss.is_leaf()) {
    auto& g = loss.s_->grad;
    if (g.empty()) g.assign(1, 0.0);
    g[0] += 1.0;
    return;
  }
  loss.s_->grad.assign(1, 1.0);

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const auto& out_grad = it->output.s_->grad;
    if (out_grad.empty()) continue;  // not on a path to the loss
    for (auto& in : it->inputs) {
      if (in.requires_grad() && in.s_->grad.empty()) in.s_->grad.assign(in.numel(), 0.0);
    }
    it->backward(out_grad);
  }
}

// --- operations -------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_to_string(a.shape()));
  }
}

// Grad spans are only touched for inputs that track gradients.
std::span<double> grad_of(const Tensor& t) {
  Tensor handle = t;  // shares storage
  return handle.requires_grad() ? handle.grad() : std::span<double>{};
}

template <class Fn>
Tensor unary_map(const Tensor& a, Fn fn) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor result({m, n}, std::move(out));
  if (tape.tracks({&a, &b})) {
    tape.record({a, b}, result, [a, b, m, k, n](std::span<const double> g) mutable {
      const auto A = a.data();
      const auto B = b.data();
      if (auto ga = grad_of(a); !ga.empty()) {
        // ga += g * b^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (auto gb = grad_of(b); !gb.empty()) {
        // gb += a^T * g
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            double* dst = gb.data() + p * n;
            const double* src = g.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += aip * src[j];
          }
      }
    });
  }
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result(a.shape(), std::move(out));
  if (tape.tracks({&a, &b})) {
    tape.record({a, b}, result, [a, b](std::span<const double> g) mutable {
      if (auto ga = grad_of(a); !ga.empty())
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (auto gb = grad_of(b); !gb.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  }
  return result;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor result(a.shape(), std::move(out));
  if (tape.tracks({&a, &b})) {
    tape.record({a, b}, result, [a, b](std::span<const double> g) mutable {
      if (auto ga = grad_of(a); !ga.empty())
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (auto gb = grad_of(b); !gb.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  }
  return result;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor result(a.shape(), std::move(out));
  if (tape.tracks({&a, &b})) {
    tape.record({a, b}, result, [a, b](std::span<const double> g) mutable {
      if (auto ga = grad_of(a); !ga.empty())
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      if (auto gb = grad_of(b); !gb.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
    });
  }
  return result;
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias) {
  require_matrix("add_row", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n || bias.rank() != 1) {
    throw DimensionError("add_row: bias " + shape_to_string(bias.shape()) + " does not fit " +
                         shape_to_string(a.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  Tensor result(a.shape(), std::move(out));
  if (tape.tracks({&a, &bias})) {
    tape.record({a, bias}, result, [a, bias, m, n](std::span<const double> g) mutable {
      if (auto ga = grad_of(a); !ga.empty())
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (auto gb = grad_of(bias); !gb.empty())
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    });
  }
  return result;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor result = unary_map(a, [factor](double x) { return x * factor; });
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, factor](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return result;
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor result = unary_map(a, [](double x) { return x > 0.0 ? x : 0.0; });
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
    });
  }
  return result;
}

Tensor exp(Tape& tape, const Tensor& a) {
  Tensor result = unary_map(a, [](double x) { return std::exp(x); });
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, result](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * result[i];
    });
  }
  return result;
}

Tensor log_clamped(Tape& tape, const Tensor& a, double floor) {
  if (!(floor > 0.0)) throw ContractError("log_clamped: floor must be positive");
  Tensor result = unary_map(a, [floor](double x) { return std::log(std::max(x, floor)); });
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, floor](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > floor) ga[i] += g[i] / a[i];
    });
  }
  return result;
}

Tensor clamp_min(Tape& tape, const Tensor& a, double floor) {
  Tensor result = unary_map(a, [floor](double x) { return std::max(x, floor); });
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, floor](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > floor) ga[i] += g[i];
    });
  }
  return result;
}

Tensor log_softmax(Tape& tape, const Tensor& a) {
  require_matrix("log_softmax", a);
  const std::size_t m = a.rows(), c = a.cols();
  if (c < 2) throw DimensionError("log_softmax: need at least 2 classes, got " + shape_to_string(a.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  Tensor result(a.shape(), std::move(out));
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, result, m, c](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < m; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] - std::exp(result[i * c + j]) * gs;
      }
    });
  }
  return result;
}

Tensor softmax(Tape& tape, const Tensor& a) {
  require_matrix("softmax", a);
  const std::size_t m = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  Tensor result(a.shape(), std::move(out));
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, result, m, c](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * result[i * c + j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += result[i * c + j] * (g[i * c + j] - dot);
      }
    });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  Tensor result = Tensor::scalar(s);
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (auto& x : ga) x += g[0];
    });
  }
  return result;
}

Tensor mean(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor result = Tensor::scalar(s * inv);
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, inv](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (auto& x : ga) x += g[0] * inv;
    });
  }
  return result;
}

Tensor sum_rows(Tape& tape, const Tensor& a) {
  require_matrix("sum_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a[i * n + j];
  Tensor result({m}, std::move(out));
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, m, n](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
    });
  }
  return result;
}

Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const int> labels) {
  require_matrix("gather_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (labels.size() != m) {
    throw DimensionError("gather_rows: " + std::to_string(labels.size()) + " labels for " +
                         shape_to_string(a.shape()));
  }
  std::vector<int> idx(labels.begin(), labels.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) {
      throw ContractError("gather_rows: label " + std::to_string(idx[i]) + " out of range [0, " +
                          std::to_string(n) + ")");
    }
    out[i] = a[i * n + static_cast<std::size_t>(idx[i])];
  }
  Tensor result({m}, std::move(out));
  if (tape.tracks({&a})) {
    tape.record({a}, result, [a, idx = std::move(idx), n](std::span<const double> g) mutable {
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + static_cast<std::size_t>(idx[i])] += g[i];
    });
  }
  return result;
}

// --- gradient check -----------------------------------------------------------

double grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> params, double h) {
  if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");

  std::vector<std::vector<double>> analytic;
  {
    for (auto& p : params) p.zero_grad();
    Tape tape;
    const Tensor loss = f(tape);
    tape.backward(loss);
    for (auto& p : params) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    }
  }

  auto eval = [&f] {
    Tape tape = Tape::no_grad();
    return f(tape).item();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double fp = eval();
      values[i] = saved - h;
      const double fm = eval();
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace cct

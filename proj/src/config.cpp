#include "cct/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "cct/error.hpp"

namespace cct {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const auto x = to_integer(key, v);
  if (x < -1'000'000'000 || x > 1'000'000'000) throw ConfigError(key, "value out of range");
  return static_cast<int>(x);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const auto x = to_integer(key, v);
  if (x < 0) throw ConfigError(key, "must be non-negative");
  return static_cast<std::size_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class Fn>
std::vector<T> map_list(const std::string& v, Fn fn) {
  std::vector<T> out;
  for (const auto& s : to_list(v)) out.push_back(fn(s));
  return out;
}

template <class T, class Fn>
std::string join(const std::vector<T>& xs, Fn fn) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fn(xs[i]);
  }
  return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CCT_INT_FIELD(name, field)                                                               \
  Entry { name, [](RunConfig& c, const std::string& v) { c.field = to_int(name, v); },           \
          [](const RunConfig& c) { return std::to_string(c.field); } }
#define CCT_DOUBLE_FIELD(name, field)                                                            \
  Entry { name, [](RunConfig& c, const std::string& v) { c.field = to_double(name, v); },        \
          [](const RunConfig& c) { return format_double(c.field); } }
#define CCT_BOOL_FIELD(name, field)                                                              \
  Entry { name, [](RunConfig& c, const std::string& v) { c.field = to_bool(name, v); },          \
          [](const RunConfig& c) { return bool_text(c.field); } }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      CCT_INT_FIELD("k_networks", train.k_networks),
      CCT_INT_FIELD("epochs", train.epochs),
      CCT_INT_FIELD("ramp_len", train.ramp_len),
      CCT_DOUBLE_FIELD("lambda_max", train.lambda_max),
      CCT_DOUBLE_FIELD("beta", train.beta),
      CCT_DOUBLE_FIELD("lr0", train.lr0),
      CCT_INT_FIELD("batch_size", train.batch_size),
      Entry{"optimizer",
            [](RunConfig& c, const std::string& v) {
              if (v == "adam")
                c.train.optimizer = OptimizerKind::adam;
              else if (v == "sgd")
                c.train.optimizer = OptimizerKind::sgd;
              else
                throw ConfigError("optimizer", "expected sgd or adam, got '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(c.train.optimizer == OptimizerKind::adam ? "adam" : "sgd"); }},
      Entry{"base_seed", [](RunConfig& c, const std::string& v) { c.train.base_seed = to_unsigned("base_seed", v); },
            [](const RunConfig& c) { return std::to_string(c.train.base_seed); }},
      CCT_BOOL_FIELD("enable_sup", train.enable_sup),
      CCT_BOOL_FIELD("enable_cons", train.enable_cons),
      CCT_BOOL_FIELD("oversample", train.oversample),
      CCT_DOUBLE_FIELD("distill_temperature", train.distill_temperature),
      CCT_BOOL_FIELD("stop_gradient_kl", train.stop_gradient_kl),
      CCT_BOOL_FIELD("distill_scale_t2", train.distill_scale_t2),
      CCT_INT_FIELD("distill_epochs", train.distill_epochs),
      Entry{"hidden",
            [](RunConfig& c, const std::string& v) {
              c.train.hidden_layers = map_list<std::size_t>(v, [](const std::string& s) { return to_size("hidden", s); });
            },
            [](const RunConfig& c) {
              return join(c.train.hidden_layers, [](std::size_t h) { return std::to_string(h); });
            }},
      Entry{"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
            [](const RunConfig& c) { return c.dataset; }},
      Entry{"n_per_class", [](RunConfig& c, const std::string& v) { c.n_per_class = to_size("n_per_class", v); },
            [](const RunConfig& c) { return std::to_string(c.n_per_class); }},
      CCT_INT_FIELD("classes", classes),
      Entry{"dim", [](RunConfig& c, const std::string& v) { c.dim = to_size("dim", v); },
            [](const RunConfig& c) { return std::to_string(c.dim); }},
      CCT_DOUBLE_FIELD("spread", spread),
      CCT_DOUBLE_FIELD("noise_rate", noise_rate),
      CCT_DOUBLE_FIELD("train_fraction", train_fraction),
      Entry{"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; }},
      Entry{"distill_temperatures",
            [](RunConfig& c, const std::string& v) {
              c.distill_temperatures =
                  map_list<double>(v, [](const std::string& s) { return to_double("distill_temperatures", s); });
            },
            [](const RunConfig& c) { return join(c.distill_temperatures, format_double); }},
      Entry{"sweep_noise_rates",
            [](RunConfig& c, const std::string& v) {
              c.sweep_noise_rates =
                  map_list<double>(v, [](const std::string& s) { return to_double("sweep_noise_rates", s); });
            },
            [](const RunConfig& c) { return join(c.sweep_noise_rates, format_double); }},
      Entry{"sweep_k",
            [](RunConfig& c, const std::string& v) {
              c.sweep_k = map_list<int>(v, [](const std::string& s) { return to_int("sweep_k", s); });
            },
            [](const RunConfig& c) { return join(c.sweep_k, [](int k) { return std::to_string(k); }); }},
      Entry{"sweep_losses", [](RunConfig& c, const std::string& v) { c.sweep_losses = to_list(v); },
            [](const RunConfig& c) { return join(c.sweep_losses, [](const std::string& s) { return s; }); }},
      Entry{"bench_seeds",
            [](RunConfig& c, const std::string& v) {
              c.bench_seeds =
                  map_list<std::uint64_t>(v, [](const std::string& s) { return to_unsigned("bench_seeds", s); });
            },
            [](const RunConfig& c) {
              return join(c.bench_seeds, [](std::uint64_t s) { return std::to_string(s); });
            }},
      CCT_BOOL_FIELD("bench_distill", bench_distill),
  };
  return table;
}

#undef CCT_INT_FIELD
#undef CCT_DOUBLE_FIELD
#undef CCT_BOOL_FIELD

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (key == e.key) return e;
  throw ConfigError(key, "unknown configuration key");
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.emplace_back(e.key);
    return k;
  }();
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) { find_entry(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find_entry(key).get(*this); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  train.validate();
  if (dataset != "blobs" && dataset != "spirals" && dataset.rfind("idx:", 0) != 0) {
    throw ConfigError("dataset", "expected blobs, spirals or idx:<images>,<labels>, got '" + dataset + "'");
  }
  if (dataset.rfind("idx:", 0) == 0 && to_list(dataset.substr(4)).size() != 2) {
    throw ConfigError("dataset", "idx selector needs two comma-separated paths");
  }
  if (n_per_class == 0) throw ConfigError("n_per_class", "must be positive");
  if (classes < 2) throw ConfigError("classes", "must be at least 2");
  if (dim == 0) throw ConfigError("dim", "must be positive");
  if (!(spread >= 0.0)) throw ConfigError("spread", "must be non-negative");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise_rate", "must lie in [0, 1)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction", "must lie in (0, 1)");
  for (double u : distill_temperatures)
    if (!(u > 0.0)) throw ConfigError("distill_temperatures", "temperatures must be positive");
  for (double r : sweep_noise_rates)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("sweep_noise_rates", "rates must lie in [0, 1)");
  for (int k : sweep_k)
    if (k < 1) throw ConfigError("sweep_k", "network counts must be at least 1");
  for (const auto& l : sweep_losses)
    if (l != "both" && l != "sup" && l != "cons") throw ConfigError("sweep_losses", "expected both, sup or cons, got '" + l + "'");
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::istringstream is{std::string(text)};
  std::string line;
  for (std::size_t line_no = 1; std::getline(is, line); ++line_no) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", source + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + t + "'");
    }
    cfg.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace cct

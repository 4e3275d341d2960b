#pragma once

// Shared helpers for the unit tests: scratch directories, random generators
// for property tests, and straight-line reference implementations used as
// oracles (deliberately written without the library's tensor ops).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace testing {

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cct_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::string file_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Generator for property tests; independent of the library's Rng.
struct Gen {
  std::mt19937_64 eng;
  explicit Gen(std::uint64_t seed) : eng(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }
  std::vector<double> values(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  // Row-stochastic matrix with entries bounded away from zero.
  std::vector<double> distribution_rows(std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c] = uniform(0.05, 1.0);
      for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] /= s;
    }
    return v;
  }
};

// --- reference implementations (long double, plain loops) -------------------

inline std::vector<long double> ref_softmax(const std::vector<double>& logits, double temperature = 1.0) {
  long double m = logits[0] / temperature;
  for (double x : logits) m = std::max<long double>(m, x / temperature);
  long double s = 0.0L;
  std::vector<long double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) s += p[i] = std::exp(static_cast<long double>(logits[i]) / temperature - m);
  for (auto& x : p) x /= s;
  return p;
}

inline long double ref_kl(const std::vector<long double>& p, const std::vector<long double>& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

inline long double ref_lambda(long double e, long double lmax, long double beta, long double er) {
  if (e >= er) return lmax;
  const long double t = 1.0L - e / er;
  return lmax * std::exp(-beta * t * t);
}

}  // namespace testing

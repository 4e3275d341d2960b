#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cct/trainer.hpp"

namespace cct {

/// One experiment, read from a flat `key = value` file. Lines starting with
/// '#' are comments. Unknown keys and malformed values raise ConfigError
/// naming the key. See README.md for the key reference.
struct RunConfig {
  TrainConfig train;

  /// blobs | spirals | idx:<images-path>,<labels-path>
  std::string dataset = "blobs";
  std::size_t n_per_class = 250;
  int classes = 4;
  std::size_t dim = 16;
  /// Within-cluster std for blobs; jitter for spirals.
  double spread = 1.0;
  double noise_rate = 0.0;
  double train_fraction = 0.8;
  std::string out_dir = "runs/default";

  /// Temperatures for the distill command; empty means train.distill_temperature.
  std::vector<double> distill_temperatures;

  // Sweep axes for the bench command.
  std::vector<double> sweep_noise_rates = {0.0, 0.4};
  std::vector<int> sweep_k = {1, 2, 3};
  /// Loss variants: both | sup | cons.
  std::vector<std::string> sweep_losses = {"both"};
  /// Seeds per cell; empty means {train.base_seed}.
  std::vector<std::uint64_t> bench_seeds;
  bool bench_distill = true;

  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Canonical text: every key in a fixed order; parse(to_text()) == *this.
  std::string to_text() const;
  void validate() const;

  static const std::vector<std::string>& keys();
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace cct

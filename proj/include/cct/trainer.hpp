#pragma once

// Consensual co-training of K networks, ensemble-to-student distillation,
// evaluation and memorization diagnostics.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cct/data.hpp"
#include "cct/losses.hpp"
#include "cct/nn.hpp"

namespace cct {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int k_networks = 3;
  int epochs = 40;
  /// Ramp-up length e_r; 0 selects epochs / 2.
  int ramp_len = 0;
  double lambda_max = 0.9;
  double beta = 0.65;
  double lr0 = 0.001;
  int batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t base_seed = 1;
  bool enable_sup = true;
  bool enable_cons = true;
  bool oversample = false;
  double distill_temperature = 2.0;
  bool stop_gradient_kl = false;
  bool distill_scale_t2 = false;
  /// Distillation epochs; negative means "same as epochs".
  int distill_epochs = -1;
  std::vector<std::size_t> hidden_layers = {64};

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int effective_ramp_len() const;
  int effective_distill_epochs() const;
  ScheduleParams schedule() const;
  MlpSpec mlp_spec(std::size_t input_dim, int classes) const;
};

struct EnsembleState {
  MlpSpec spec;
  std::vector<NetworkParams> networks;
  std::vector<AdamState> optimizers;
  int epoch = 0;

  /// Fresh ensemble: network j initialized with seed base_seed + j.
  static EnsembleState create(const MlpSpec& spec, int k, std::uint64_t base_seed);
};

struct EpochMetrics {
  int epoch = 0;
  double lambda = 0.0;
  double lr = 0.0;
  double l_sup = 0.0;
  double l_cons = 0.0;
  double l_total = 0.0;
  /// Ensemble accuracy against the observed (possibly noisy) training labels.
  double train_acc = 0.0;
  std::optional<double> train_acc_clean;    // rows with an untouched label
  std::optional<double> train_acc_corrupt;  // rows whose label was corrupted
  std::vector<double> test_acc;             // per network
  double test_acc_ensemble = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

struct TrainResult {
  EnsembleState state;
  std::vector<EpochMetrics> metrics;
};

/// Runs `config.epochs` epochs of joint training. Epochs are numbered from 1;
/// epoch e uses lambda_schedule(e) and lr_at_epoch(lr0, e - 1).
TrainResult train_cct(const TrainConfig& config, const NoisyDataset& train, const LabeledDataset& test);
/// Same, continuing from a given state (its networks' seeds are kept).
TrainResult train_cct(const TrainConfig& config, EnsembleState initial, const NoisyDataset& train,
                      const LabeledDataset& test);

/// Trains a fresh student (seed base_seed + K) on the distillation loss with
/// frozen teachers, at `temperature` (defaults to config.distill_temperature).
NetworkParams distill_student(const EnsembleState& teacher, const LabeledDataset& train, const TrainConfig& config,
                              std::optional<double> temperature = std::nullopt);

struct Evaluation {
  double accuracy = 0.0;
  int class_count = 0;
  std::vector<std::size_t> confusion;  // row = true class, column = predicted
  std::vector<int> predictions;

  std::size_t at(int truth, int predicted) const {
    return confusion[static_cast<std::size_t>(truth * class_count + predicted)];
  }
};

/// Argmax of the mean softmax across networks; ties go to the lower class.
std::vector<int> predict(std::span<const NetworkParams> networks, const Tensor& features);
/// Mean softmax across networks, [batch x C].
Tensor ensemble_probabilities(std::span<const NetworkParams> networks, const Tensor& features);
Evaluation evaluate(std::span<const NetworkParams> networks, const LabeledDataset& data);
Evaluation evaluate(const NetworkParams& network, const LabeledDataset& data);

struct MemorizationRow {
  int epoch = 0;
  double train_acc = 0.0;
  std::optional<double> clean_acc;
  std::optional<double> corrupt_acc;
  double test_acc = 0.0;
};

struct MemorizationReport {
  std::vector<MemorizationRow> rows;
  /// False when no label was corrupted (the corrupt series is undefined).
  bool corrupt_series_defined = false;
  int peak_test_epoch = 0;
  double peak_test_acc = 0.0;

  std::string to_csv() const;
};

MemorizationReport memorization_report(std::span<const EpochMetrics> metrics);

}  // namespace cct

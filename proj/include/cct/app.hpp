#pragma once

// Experiment recipes behind the command-line tool: each writes its outputs
// under a caller-chosen directory and is deterministic given its config.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cct/config.hpp"
#include "cct/crowd.hpp"
#include "cct/trainer.hpp"

namespace cct::app {

namespace fs = std::filesystem;

struct PreparedData {
  NoisyDataset train;
  LabeledDataset test;
  std::vector<std::string> warnings;
};

/// Builds the dataset named by the config, splits it (stream "split") and
/// corrupts the training labels (stream "noise"), all keyed on base_seed.
PreparedData prepare_data(const RunConfig& config);

/// Loads a single CCTM file, or every net_<j>.cctm in a directory (ordered by j).
std::vector<NetworkParams> load_networks(const fs::path& path);
EnsembleState ensemble_from_networks(std::vector<NetworkParams> networks);

std::string run_id(const RunConfig& config);

std::string metrics_csv_header(std::size_t k_networks);
std::string metrics_csv_row(const std::string& run_id, const EpochMetrics& m);
std::string metrics_csv(const std::string& run_id, std::span<const EpochMetrics> metrics);
/// Parses a metrics CSV written by metrics_csv (run id is dropped).
std::vector<EpochMetrics> read_metrics_csv(const fs::path& path);

std::string confusion_csv(const Evaluation& ev);

struct TrainOutcome {
  PreparedData data;
  TrainResult result;
  Evaluation test_eval;  // ensemble, on the test split
};

/// Writes metrics.csv, manifest.txt, memorization.csv, confusion.csv and
/// teacher/net_<j>.cctm.
TrainOutcome run_train(const RunConfig& config, const fs::path& out_dir);

struct DistillRow {
  double temperature = 0.0;
  double student_test_acc = 0.0;
  double teacher_test_acc = 0.0;
  /// Fraction of test samples where student and teacher-ensemble argmax agree.
  double agreement = 0.0;
  fs::path student_path;
};

/// Distills one student per temperature from the teachers in `teacher_dir`.
/// Writes student_U<t>.cctm per temperature and distill.csv.
std::vector<DistillRow> run_distill(const fs::path& teacher_dir, const RunConfig& config,
                                    std::span<const double> temperatures, const fs::path& out_dir);

/// Evaluates a model file or teacher directory; writes the confusion matrix
/// CSV when a path is given.
Evaluation run_eval(const fs::path& model_path, const LabeledDataset& data, const std::optional<fs::path>& confusion_out);

struct PmOutcome {
  PmResult result;
  AnnotationTable table;
};

/// Writes <prefix>_labels.csv and <prefix>_expertise.csv.
PmOutcome run_pm(const fs::path& annotations_csv, const fs::path& out_prefix, const PmOptions& options);

struct BenchRow {
  double noise_rate = 0.0;
  int k_networks = 0;
  std::string losses;  // both | sup | cons
  std::string method;  // standard | cct | sup_only | cons_only | NA
  std::size_t seeds = 0;
  std::optional<double> ensemble_acc;  // medians over seeds
  std::optional<double> student_acc;
  std::optional<double> corrupt_train_acc;
};

/// Runs noise x K x loss-variant cells (each seed as a train run, plus
/// distillation when enabled) and writes summary.csv. Cells run on up to
/// `threads` threads, each inside its own subdirectory.
std::vector<BenchRow> run_bench(const RunConfig& config, const fs::path& out_dir, int threads);
std::string bench_csv(std::span<const BenchRow> rows);

struct NoiseOutcome {
  std::size_t total = 0;
  std::size_t corrupted = 0;
};

/// Corrupts an IDX label file; writes the noisy labels (IDX) and a mask CSV
/// (index,clean,observed,corrupted) when `mask_csv` is given.
NoiseOutcome run_noise(const fs::path& labels_in, const fs::path& labels_out, double rate, std::uint64_t seed,
                       int classes, const std::optional<fs::path>& mask_csv);

struct CrowdSpec {
  std::size_t items = 500;
  int classes = 8;
  std::size_t annotators = 16;
  double accuracy_min = 0.55;
  double accuracy_max = 0.95;
  double coverage = 1.0;
  std::uint64_t seed = 1;
};

struct SimulatedCrowd {
  std::vector<int> truth;
  std::vector<double> accuracies;
  AnnotationTable table;
};

/// Uniform true labels and accuracies ~ U[min, max], then simulate_crowd.
SimulatedCrowd simulate(const CrowdSpec& spec);
/// Writes the annotation CSV plus `<stem>_truth.csv` next to it.
SimulatedCrowd run_simulate_crowd(const CrowdSpec& spec, const fs::path& out_csv);

/// Worker count from CCT_THREADS (default 1).
int thread_budget();

}  // namespace cct::app

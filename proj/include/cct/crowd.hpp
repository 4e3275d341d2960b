#pragma once

// Truth inference from multi-annotator labels with the PM iteration:
//   (i)  v*_i = argmax_v sum_a e^a * [v == v^a_i]
//   (ii) e^a  = -log((m_a + s) / (max_b m_b + s)),  m_a = #{i : v*_i != v^a_i}
// starting from e^a = 1, until v* stops changing.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cct {

/// Label value for "none of the above".
inline constexpr int kNoneLabel = -1;
/// Inferred-label value for items whose vote winner is NONE (or unlabeled).
inline constexpr int kDiscarded = -2;

struct Annotation {
  std::size_t item = 0;
  std::size_t annotator = 0;
  int label = 0;  // [0, C) or kNoneLabel

  bool operator==(const Annotation&) const = default;
};

struct AnnotationTable {
  std::vector<Annotation> records;
  std::size_t item_count = 0;
  std::size_t annotator_count = 0;
  int class_count = 0;

  /// Checks ranges and that each (item, annotator) pair occurs once.
  void validate() const;
  /// Items with no non-NONE record.
  std::vector<std::size_t> unlabeled_items() const;
};

struct PmResult {
  std::vector<int> labels;      // per item: class, or kDiscarded
  std::vector<double> expertise;  // per annotator, >= 0
  int iterations = 0;            // number of voting steps run
  bool converged = false;
  std::size_t discarded_count() const;
};

struct PmOptions {
  double smoothing = 0.5;
  int max_iter = 100;
};

PmResult pm_infer(const AnnotationTable& table, const PmOptions& options = {});

/// Unweighted plurality vote; ties go to the lower class index and NONE
/// ranks after every class. NONE winners and unlabeled items are kDiscarded.
std::vector<int> majority_vote(const AnnotationTable& table);

/// Expertise-weighted vote (step i). Items whose total weight is zero fall
/// back to the unweighted vote.
std::vector<int> weighted_vote(const AnnotationTable& table, std::span<const double> expertise);

/// Each annotator labels round(coverage * N) (at least one) distinct items,
/// correct with probability accuracy[a], otherwise a uniformly drawn wrong class.
AnnotationTable simulate_crowd(std::span<const int> true_labels, int classes, std::span<const double> accuracies,
                               double coverage, std::uint64_t seed);

// --- CSV ------------------------------------------------------------------------

/// Header `item_id,annotator_id,label`; label is an integer or NONE.
/// Counts are inferred as max id + 1 and max label + 1 (at least `min_classes`).
AnnotationTable read_annotations_csv(const std::filesystem::path& path, int min_classes = 0);
void write_annotations_csv(const std::filesystem::path& path, const AnnotationTable& table);
/// Writes `<prefix>_labels.csv` (item_id,inferred_label) and
/// `<prefix>_expertise.csv` (annotator_id,expertise).
void write_pm_result(const std::filesystem::path& prefix, const PmResult& result);

}  // namespace cct

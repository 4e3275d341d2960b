#include "cct/crowd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "cct/error.hpp"
#include "cct/rng.hpp"

namespace cct {

void AnnotationTable::validate() const {
  if (class_count < 1) throw ContractError("annotation table: class count must be positive");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& r : records) {
    if (r.item >= item_count) throw ContractError("annotation table: item id " + std::to_string(r.item) + " out of range");
    if (r.annotator >= annotator_count) {
      throw ContractError("annotation table: annotator id " + std::to_string(r.annotator) + " out of range");
    }
    if (r.label != kNoneLabel && (r.label < 0 || r.label >= class_count)) {
      throw ContractError("annotation table: label " + std::to_string(r.label) + " out of range");
    }
    if (!seen.emplace(r.item, r.annotator).second) {
      throw ContractError("annotation table: item " + std::to_string(r.item) + " annotated twice by annotator " +
                          std::to_string(r.annotator));
    }
  }
}

std::vector<std::size_t> AnnotationTable::unlabeled_items() const {
  std::vector<bool> labeled(item_count, false);
  for (const auto& r : records)
    if (r.label != kNoneLabel) labeled[r.item] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < item_count; ++i)
    if (!labeled[i]) out.push_back(i);
  return out;
}

std::size_t PmResult::discarded_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kDiscarded));
}

namespace {

// Vote slot: classes keep their index, NONE takes slot C.
std::size_t slot_of(int label, int classes) {
  return label == kNoneLabel ? static_cast<std::size_t>(classes) : static_cast<std::size_t>(label);
}

int label_of_slot(std::size_t slot, int classes) {
  return slot == static_cast<std::size_t>(classes) ? kDiscarded : static_cast<int>(slot);
}

std::vector<int> vote(const AnnotationTable& table, std::span<const double> weights) {
  const std::size_t slots = static_cast<std::size_t>(table.class_count) + 1;
  std::vector<double> weighted(table.item_count * slots, 0.0);
  std::vector<double> plain(table.item_count * slots, 0.0);
  std::vector<double> total(table.item_count, 0.0);
  std::vector<bool> any(table.item_count, false);
  for (const auto& r : table.records) {
    const std::size_t s = slot_of(r.label, table.class_count);
    const double w = weights.empty() ? 1.0 : weights[r.annotator];
    weighted[r.item * slots + s] += w;
    plain[r.item * slots + s] += 1.0;
    total[r.item] += w;
    any[r.item] = true;
  }
  std::vector<int> out(table.item_count, kDiscarded);
  for (std::size_t i = 0; i < table.item_count; ++i) {
    if (!any[i]) continue;
    const double* scores = total[i] > 0.0 ? &weighted[i * slots] : &plain[i * slots];
    std::size_t best = 0;
    for (std::size_t s = 1; s < slots; ++s)
      if (scores[s] > scores[best]) best = s;
    out[i] = label_of_slot(best, table.class_count);
  }
  return out;
}

}  // namespace

std::vector<int> majority_vote(const AnnotationTable& table) {
  if (table.records.empty()) throw ContractError("majority_vote: empty annotation table");
  table.validate();
  return vote(table, {});
}

std::vector<int> weighted_vote(const AnnotationTable& table, std::span<const double> expertise) {
  if (expertise.size() != table.annotator_count) throw ContractError("weighted_vote: one expertise value per annotator required");
  table.validate();
  return vote(table, expertise);
}

PmResult pm_infer(const AnnotationTable& table, const PmOptions& options) {
  if (table.records.empty()) throw ContractError("pm_infer: empty annotation table");
  if (!(options.smoothing > 0.0)) throw ContractError("pm_infer: smoothing must be positive");
  if (options.max_iter < 1) throw ContractError("pm_infer: max_iter must be at least 1");
  table.validate();

  PmResult result;
  result.expertise.assign(table.annotator_count, 1.0);
  std::vector<std::size_t> mistakes(table.annotator_count);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    auto labels = vote(table, result.expertise);
    result.iterations = iter;
    if (iter > 1 && labels == result.labels) {
      result.converged = true;
      break;
    }
    result.labels = std::move(labels);

    std::fill(mistakes.begin(), mistakes.end(), 0);
    for (const auto& r : table.records) {
      const int inferred = result.labels[r.item];
      const int inferred_slot = inferred == kDiscarded ? table.class_count : inferred;
      if (static_cast<int>(slot_of(r.label, table.class_count)) != inferred_slot) ++mistakes[r.annotator];
    }
    const double worst = static_cast<double>(*std::max_element(mistakes.begin(), mistakes.end()));
    for (std::size_t a = 0; a < table.annotator_count; ++a) {
      const double ratio = (static_cast<double>(mistakes[a]) + options.smoothing) / (worst + options.smoothing);
      result.expertise[a] = 0.0 - std::log(ratio);
    }
  }
  return result;
}

AnnotationTable simulate_crowd(std::span<const int> true_labels, int classes, std::span<const double> accuracies,
                               double coverage, std::uint64_t seed) {
  if (classes < 2) throw ContractError("simulate_crowd: needs at least two classes");
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ContractError("simulate_crowd: coverage must lie in (0, 1]");
  if (true_labels.empty()) throw ContractError("simulate_crowd: no items");
  for (double acc : accuracies)
    if (!(acc >= 0.0 && acc <= 1.0)) throw ContractError("simulate_crowd: accuracy must lie in [0, 1]");
  for (int y : true_labels)
    if (y < 0 || y >= classes) throw ContractError("simulate_crowd: true label out of range");

  const std::size_t n = true_labels.size();
  const auto per_annotator = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(coverage * static_cast<double>(n))));
  AnnotationTable table{{}, n, accuracies.size(), classes};
  for (std::size_t a = 0; a < accuracies.size(); ++a) {
    Rng rng(derive_seed(seed, "crowd", a));
    std::vector<std::size_t> items(n);
    for (std::size_t i = 0; i < n; ++i) items[i] = i;
    for (std::size_t i = 0; i < per_annotator; ++i) std::swap(items[i], items[i + rng.below(n - i)]);
    items.resize(per_annotator);
    std::sort(items.begin(), items.end());
    for (auto item : items) {
      const int truth = true_labels[item];
      int label = truth;
      if (!rng.bernoulli(accuracies[a])) {
        const int draw = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
        label = draw < truth ? draw : draw + 1;
      }
      table.records.push_back({item, a, label});
    }
  }
  return table;
}

// --- CSV ------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

long long parse_integer(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ParseError(where + ": expected an integer, got '" + s + "'");
  }
  if (used != s.size()) throw ParseError(where + ": expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

AnnotationTable read_annotations_csv(const std::filesystem::path& path, int min_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != "item_id,annotator_id,label") {
    throw ParseError(path.string() + ":1: expected header 'item_id,annotator_id,label'");
  }
  AnnotationTable table;
  int max_label = -1;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t line_no = 2; std::getline(is, line); ++line_no) {
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_commas(trim(line));
    if (fields.size() != 3) throw ParseError(where + ": expected 3 fields, got " + std::to_string(fields.size()));
    const auto item = parse_integer(fields[0], where);
    const auto annotator = parse_integer(fields[1], where);
    if (item < 0 || annotator < 0) throw ParseError(where + ": ids must be non-negative");
    int label = kNoneLabel;
    if (fields[2] != "NONE") {
      const auto v = parse_integer(fields[2], where);
      if (v < 0 || v > 1'000'000) throw ParseError(where + ": label out of range");
      label = static_cast<int>(v);
      max_label = std::max(max_label, label);
    }
    const auto i = static_cast<std::size_t>(item), a = static_cast<std::size_t>(annotator);
    if (!seen.emplace(i, a).second) throw ParseError(where + ": duplicate (item, annotator) pair");
    table.records.push_back({i, a, label});
    table.item_count = std::max(table.item_count, i + 1);
    table.annotator_count = std::max(table.annotator_count, a + 1);
  }
  table.class_count = std::max({max_label + 1, min_classes, 1});
  return table;
}

void write_annotations_csv(const std::filesystem::path& path, const AnnotationTable& table) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "item_id,annotator_id,label\n";
  for (const auto& r : table.records) {
    os << r.item << ',' << r.annotator << ',';
    if (r.label == kNoneLabel)
      os << "NONE";
    else
      os << r.label;
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void write_pm_result(const std::filesystem::path& prefix, const PmResult& result) {
  const auto labels_path = prefix.string() + "_labels.csv";
  const auto expertise_path = prefix.string() + "_expertise.csv";
  std::ofstream labels(labels_path, std::ios::trunc);
  if (!labels) throw IoError("cannot write " + labels_path);
  labels << "item_id,inferred_label\n";
  for (std::size_t i = 0; i < result.labels.size(); ++i) {
    labels << i << ',';
    if (result.labels[i] == kDiscarded)
      labels << "DISCARDED";
    else
      labels << result.labels[i];
    labels << '\n';
  }
  std::ofstream expertise(expertise_path, std::ios::trunc);
  if (!expertise) throw IoError("cannot write " + expertise_path);
  expertise << "annotator_id,expertise\n";
  char buf[64];
  for (std::size_t a = 0; a < result.expertise.size(); ++a) {
    std::snprintf(buf, sizeof buf, "%.6f", result.expertise[a]);
    expertise << a << ',' << buf << '\n';
  }
  if (!labels || !expertise) throw IoError("failed writing PM result under " + prefix.string());
}

}  // namespace cct

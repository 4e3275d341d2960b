#include "cct/cct.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <string>

#include "cct/app.hpp"
#include "cct/error.hpp"
#include "format.hpp"

struct cct_config {
  cct::RunConfig value;
};

struct cct_model {
  std::vector<cct::NetworkParams> networks;
};

struct cct_evaluation {
  cct::Evaluation value;
};

struct cct_annotations {
  cct::AnnotationTable value;
};

struct cct_pm_result {
  cct::PmResult value;
};

namespace {

thread_local std::string g_last_error;

template <class Fn>
cct_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    return CCT_OK;
  } catch (const cct::Error& e) {
    g_last_error = e.what();
    return static_cast<cct_status>(static_cast<int>(e.kind()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CCT_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CCT_ERR_IO;
  } catch (...) {
    g_last_error = "unknown error";
    return CCT_ERR_IO;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw cct::ContractError(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* cct_last_error(void) { return g_last_error.c_str(); }

const char* cct_version(void) { return "1.0.0"; }

// --- config ---------------------------------------------------------------------

cct_status cct_config_new(cct_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cct_config{};
  });
}

cct_status cct_config_load(const char* path, cct_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cct_config{cct::RunConfig::load(path)};
  });
}

cct_status cct_config_set(cct_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->value.set(key, value);
  });
}

cct_status cct_config_get(const cct_config* cfg, const char* key, char* buf, size_t buf_len, size_t* needed) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    const auto v = cfg->value.get(key);
    if (needed) *needed = v.size() + 1;
    if (buf == nullptr || buf_len < v.size() + 1) throw cct::ContractError("buffer too small for value of " + std::string(key));
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

cct_status cct_config_write(const cct_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(path, "path");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw cct::IoError(std::string("cannot write ") + path);
    os << cfg->value.to_text();
  });
}

cct_status cct_config_validate(const cct_config* cfg) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->value.validate();
  });
}

void cct_config_free(cct_config* cfg) { delete cfg; }

// --- recipes ---------------------------------------------------------------------

cct_status cct_train(const cct_config* cfg, const char* out_dir, double* test_accuracy, size_t* corrupted) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const auto outcome = cct::app::run_train(cfg->value, out_dir);
    if (test_accuracy) *test_accuracy = outcome.test_eval.accuracy;
    if (corrupted) *corrupted = outcome.data.train.corrupted_count();
  });
}

cct_status cct_distill(const char* teacher_dir, const cct_config* cfg, const double* temperatures, size_t n,
                       const char* out_dir) {
  return guarded([&] {
    require(teacher_dir, "teacher_dir");
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    if (n > 0) require(temperatures, "temperatures");
    std::span<const double> temps;
    if (n > 0) temps = std::span<const double>(temperatures, n);
    else if (!cfg->value.distill_temperatures.empty()) temps = cfg->value.distill_temperatures;
    cct::app::run_distill(teacher_dir, cfg->value, temps, out_dir);
  });
}

cct_status cct_bench(const cct_config* cfg, const char* out_dir, int threads, size_t* rows) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const auto result = cct::app::run_bench(cfg->value, out_dir, threads);
    if (rows) *rows = result.size();
  });
}

// --- models ------------------------------------------------------------------------

cct_status cct_model_load(const char* path, cct_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cct_model{cct::app::load_networks(path)};
  });
}

size_t cct_model_network_count(const cct_model* model) { return model ? model->networks.size() : 0; }

size_t cct_model_input_dim(const cct_model* model) {
  return model && !model->networks.empty() ? model->networks.front().spec.input_dim() : 0;
}

size_t cct_model_class_count(const cct_model* model) {
  return model && !model->networks.empty() ? model->networks.front().spec.class_count() : 0;
}

size_t cct_model_parameter_count(const cct_model* model) {
  size_t n = 0;
  if (model)
    for (const auto& net : model->networks) n += net.spec.parameter_count();
  return n;
}

cct_status cct_model_save(const cct_model* model, size_t index, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    if (index >= model->networks.size()) throw cct::ContractError("network index out of range");
    cct::save_model(model->networks[index], path);
  });
}

cct_status cct_model_predict(const cct_model* model, const double* features, size_t rows, size_t dim,
                             int* out_labels) {
  return guarded([&] {
    require(model, "model");
    require(features, "features");
    require(out_labels, "out_labels");
    if (rows == 0) return;
    const auto x = cct::Tensor::matrix(rows, dim, std::vector<double>(features, features + rows * dim));
    const auto pred = cct::predict(model->networks, x);
    std::copy(pred.begin(), pred.end(), out_labels);
  });
}

void cct_model_free(cct_model* model) { delete model; }

// --- evaluation -----------------------------------------------------------------------

cct_status cct_evaluate_config(const cct_model* model, const cct_config* cfg, cct_evaluation** out) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(out, "out");
    const auto data = cct::app::prepare_data(cfg->value);
    *out = new cct_evaluation{cct::evaluate(model->networks, data.test)};
  });
}

cct_status cct_evaluate_idx(const cct_model* model, const char* images, const char* labels, cct_evaluation** out) {
  return guarded([&] {
    require(model, "model");
    require(images, "images");
    require(labels, "labels");
    require(out, "out");
    auto data = cct::load_idx(images, labels);
    data.class_count = std::max<int>(data.class_count, static_cast<int>(cct_model_class_count(model)));
    *out = new cct_evaluation{cct::evaluate(model->networks, data)};
  });
}

double cct_evaluation_accuracy(const cct_evaluation* ev) { return ev ? ev->value.accuracy : 0.0; }

int cct_evaluation_class_count(const cct_evaluation* ev) { return ev ? ev->value.class_count : 0; }

size_t cct_evaluation_confusion(const cct_evaluation* ev, int truth, int predicted) {
  if (!ev || truth < 0 || predicted < 0 || truth >= ev->value.class_count || predicted >= ev->value.class_count) return 0;
  return ev->value.at(truth, predicted);
}

cct_status cct_evaluation_write_csv(const cct_evaluation* ev, const char* path) {
  return guarded([&] {
    require(ev, "ev");
    require(path, "path");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw cct::IoError(std::string("cannot write ") + path);
    os << cct::app::confusion_csv(ev->value);
  });
}

void cct_evaluation_free(cct_evaluation* ev) { delete ev; }

// --- crowd -------------------------------------------------------------------------------

cct_status cct_annotations_new(size_t items, size_t annotators, int classes, cct_annotations** out) {
  return guarded([&] {
    require(out, "out");
    if (classes < 1) throw cct::ContractError("class count must be positive");
    *out = new cct_annotations{cct::AnnotationTable{{}, items, annotators, classes}};
  });
}

cct_status cct_annotations_add(cct_annotations* table, size_t item, size_t annotator, int label) {
  return guarded([&] {
    require(table, "table");
    auto& t = table->value;
    if (item >= t.item_count || annotator >= t.annotator_count) throw cct::ContractError("item or annotator id out of range");
    if (label != cct::kNoneLabel && (label < 0 || label >= t.class_count)) throw cct::ContractError("label out of range");
    for (const auto& r : t.records)
      if (r.item == item && r.annotator == annotator) throw cct::ContractError("(item, annotator) pair already present");
    t.records.push_back({item, annotator, label});
  });
}

cct_status cct_annotations_load(const char* csv_path, cct_annotations** out) {
  return guarded([&] {
    require(csv_path, "csv_path");
    require(out, "out");
    *out = new cct_annotations{cct::read_annotations_csv(csv_path)};
  });
}

cct_status cct_annotations_simulate(size_t items, int classes, size_t annotators, double acc_min, double acc_max,
                                    double coverage, uint64_t seed, const char* csv_path, cct_annotations** out) {
  return guarded([&] {
    require(out, "out");
    const cct::app::CrowdSpec spec{items, classes, annotators, acc_min, acc_max, coverage, seed};
    auto crowd = csv_path ? cct::app::run_simulate_crowd(spec, csv_path) : cct::app::simulate(spec);
    *out = new cct_annotations{std::move(crowd.table)};
  });
}

cct_status cct_annotations_write(const cct_annotations* table, const char* csv_path) {
  return guarded([&] {
    require(table, "table");
    require(csv_path, "csv_path");
    cct::write_annotations_csv(csv_path, table->value);
  });
}

size_t cct_annotations_record_count(const cct_annotations* t) { return t ? t->value.records.size() : 0; }
size_t cct_annotations_item_count(const cct_annotations* t) { return t ? t->value.item_count : 0; }
size_t cct_annotations_annotator_count(const cct_annotations* t) { return t ? t->value.annotator_count : 0; }
void cct_annotations_free(cct_annotations* table) { delete table; }

cct_status cct_pm_infer(const cct_annotations* table, double smoothing, int max_iter, cct_pm_result** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    *out = new cct_pm_result{cct::pm_infer(table->value, cct::PmOptions{smoothing, max_iter})};
  });
}

cct_status cct_majority_vote(const cct_annotations* table, int* out_labels) {
  return guarded([&] {
    require(table, "table");
    require(out_labels, "out_labels");
    const auto labels = cct::majority_vote(table->value);
    std::copy(labels.begin(), labels.end(), out_labels);
  });
}

int cct_pm_result_iterations(const cct_pm_result* r) { return r ? r->value.iterations : 0; }
int cct_pm_result_converged(const cct_pm_result* r) { return r && r->value.converged ? 1 : 0; }
size_t cct_pm_result_discarded(const cct_pm_result* r) { return r ? r->value.discarded_count() : 0; }
size_t cct_pm_result_item_count(const cct_pm_result* r) { return r ? r->value.labels.size() : 0; }
size_t cct_pm_result_annotator_count(const cct_pm_result* r) { return r ? r->value.expertise.size() : 0; }

int cct_pm_result_label(const cct_pm_result* r, size_t item) {
  return r && item < r->value.labels.size() ? r->value.labels[item] : CCT_LABEL_DISCARDED;
}

double cct_pm_result_expertise(const cct_pm_result* r, size_t annotator) {
  return r && annotator < r->value.expertise.size() ? r->value.expertise[annotator] : 0.0;
}

cct_status cct_pm_result_write(const cct_pm_result* result, const char* prefix) {
  return guarded([&] {
    require(result, "result");
    require(prefix, "prefix");
    cct::write_pm_result(prefix, result->value);
  });
}

void cct_pm_result_free(cct_pm_result* result) { delete result; }

// --- noise -------------------------------------------------------------------------------------

cct_status cct_noise_idx_labels(const char* labels_in, const char* labels_out, double rate, uint64_t seed, int classes,
                                const char* mask_csv, size_t* total, size_t* corrupted) {
  return guarded([&] {
    require(labels_in, "labels_in");
    require(labels_out, "labels_out");
    std::optional<std::filesystem::path> mask;
    if (mask_csv) mask = mask_csv;
    const auto outcome = cct::app::run_noise(labels_in, labels_out, rate, seed, classes, mask);
    if (total) *total = outcome.total;
    if (corrupted) *corrupted = outcome.corrupted;
  });
}

}  // extern "C"

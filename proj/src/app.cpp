#include "cct/app.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "cct/error.hpp"
#include "cct/rng.hpp"
#include "format.hpp"

namespace cct::app {

using detail::fixed6;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

std::optional<double> parse_optional(const std::string& s, const std::string& where) {
  if (s == "NA") return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ParseError(where + ": bad number '" + s + "'");
  return v;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double agreement(std::span<const int> a, std::span<const int> b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace

// --- data -------------------------------------------------------------------------

PreparedData prepare_data(const RunConfig& config) {
  config.validate();
  const auto seed = config.train.base_seed;
  LabeledDataset full;
  if (config.dataset == "blobs") {
    full = gen_blobs(config.n_per_class, config.classes, config.dim, config.spread, derive_seed(seed, "data"));
  } else if (config.dataset == "spirals") {
    full = gen_spirals(config.n_per_class, config.classes, config.spread, derive_seed(seed, "data"));
  } else {
    const auto paths = config.dataset.substr(4);
    const auto comma = paths.find(',');
    full = load_idx(paths.substr(0, comma), paths.substr(comma + 1));
  }
  auto parts = split(full, config.train_fraction, derive_seed(seed, "split"));
  PreparedData out;
  out.train = inject_symmetric_noise(parts.train, config.noise_rate, derive_seed(seed, "noise"));
  out.test = std::move(parts.test);
  out.warnings = std::move(parts.warnings);
  return out;
}

std::vector<NetworkParams> load_networks(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("model path does not exist: " + path.string());
  if (!fs::is_directory(path)) return {load_model(path)};

  const std::regex pattern(R"(net_(\d+)\.cctm)");
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(path)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoi(m[1].str()), entry.path());
  }
  if (found.empty()) throw IoError("no net_<j>.cctm checkpoints in " + path.string());
  std::sort(found.begin(), found.end());
  std::vector<NetworkParams> nets;
  for (const auto& [j, p] : found) nets.push_back(load_model(p));
  for (const auto& n : nets) {
    if (!(n.spec == nets.front().spec)) throw ParseError("checkpoints in " + path.string() + " disagree on architecture");
  }
  return nets;
}

EnsembleState ensemble_from_networks(std::vector<NetworkParams> networks) {
  if (networks.empty()) throw ContractError("ensemble needs at least one network");
  EnsembleState state;
  state.spec = networks.front().spec;
  state.networks = std::move(networks);
  for (const auto& n : state.networks) state.optimizers.push_back(make_adam_state(n.parameters()));
  return state;
}

// --- CSV ------------------------------------------------------------------------------

std::string run_id(const RunConfig& config) {
  const auto& t = config.train;
  const char* losses = t.enable_sup && t.enable_cons ? "both" : (t.enable_sup ? "sup" : "cons");
  const std::string data = config.dataset.rfind("idx:", 0) == 0 ? "idx" : config.dataset;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s_k%d_%s_noise%.2f_seed%llu", data.c_str(), t.k_networks, losses, config.noise_rate,
                static_cast<unsigned long long>(t.base_seed));
  return buf;
}

std::string metrics_csv_header(std::size_t k_networks) {
  std::string h = "run_id,epoch,lambda,lr,l_sup,l_cons,l_total,train_acc,train_acc_clean,train_acc_corrupt";
  for (std::size_t j = 1; j <= k_networks; ++j) h += ",test_acc_net" + std::to_string(j);
  return h + ",test_acc_ensemble";
}

std::string metrics_csv_row(const std::string& id, const EpochMetrics& m) {
  std::string r = id + "," + std::to_string(m.epoch) + "," + fixed6(m.lambda) + "," + fixed6(m.lr) + "," +
                  fixed6(m.l_sup) + "," + fixed6(m.l_cons) + "," + fixed6(m.l_total) + "," + fixed6(m.train_acc) +
                  "," + fixed6(m.train_acc_clean) + "," + fixed6(m.train_acc_corrupt);
  for (double a : m.test_acc) r += "," + fixed6(a);
  return r + "," + fixed6(m.test_acc_ensemble);
}

std::string metrics_csv(const std::string& id, std::span<const EpochMetrics> metrics) {
  std::string out = metrics_csv_header(metrics.empty() ? 0 : metrics.front().test_acc.size()) + "\n";
  for (const auto& m : metrics) out += metrics_csv_row(id, m) + "\n";
  return out;
}

std::vector<EpochMetrics> read_metrics_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string() + ": empty metrics file");
  const auto header = split_fields(line);
  if (header.size() < 12 || header[0] != "run_id" || header.back() != "test_acc_ensemble") {
    throw ParseError(path.string() + ":1: not a metrics CSV header");
  }
  const std::size_t k = header.size() - 11;
  std::vector<EpochMetrics> out;
  for (std::size_t line_no = 2; std::getline(is, line); ++line_no) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split_fields(line);
    if (f.size() != header.size()) throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields");
    auto req = [&](std::size_t i) {
      auto v = parse_optional(f[i], where);
      if (!v) throw ParseError(where + ": field " + header[i] + " may not be NA");
      return *v;
    };
    EpochMetrics m;
    m.epoch = static_cast<int>(req(1));
    m.lambda = req(2);
    m.lr = req(3);
    m.l_sup = req(4);
    m.l_cons = req(5);
    m.l_total = req(6);
    m.train_acc = req(7);
    m.train_acc_clean = parse_optional(f[8], where);
    m.train_acc_corrupt = parse_optional(f[9], where);
    for (std::size_t j = 0; j < k; ++j) m.test_acc.push_back(req(10 + j));
    m.test_acc_ensemble = req(10 + k);
    out.push_back(std::move(m));
  }
  return out;
}

std::string confusion_csv(const Evaluation& ev) {
  std::string out = "true_class";
  for (int c = 0; c < ev.class_count; ++c) out += ",pred_" + std::to_string(c);
  out += "\n";
  for (int r = 0; r < ev.class_count; ++r) {
    out += std::to_string(r);
    for (int c = 0; c < ev.class_count; ++c) out += "," + std::to_string(ev.at(r, c));
    out += "\n";
  }
  return out;
}

// --- commands -----------------------------------------------------------------------------

TrainOutcome run_train(const RunConfig& config, const fs::path& out_dir) {
  TrainOutcome out;
  out.data = prepare_data(config);
  out.result = train_cct(config.train, out.data.train, out.data.test);
  out.test_eval = evaluate(out.result.state.networks, out.data.test);

  make_dirs(out_dir / "teacher");
  const auto id = run_id(config);
  write_text(out_dir / "metrics.csv", metrics_csv(id, out.result.metrics));
  write_text(out_dir / "memorization.csv", memorization_report(out.result.metrics).to_csv());
  write_text(out_dir / "confusion.csv", confusion_csv(out.test_eval));

  std::string manifest = "# resolved configuration; loadable with --config\n" + config.to_text();
  manifest += "# n_train = " + std::to_string(out.data.train.base.size()) + "\n";
  manifest += "# n_test = " + std::to_string(out.data.test.size()) + "\n";
  manifest += "# corrupted = " + std::to_string(out.data.train.corrupted_count()) + "\n";
  manifest += "# ramp_len_effective = " + std::to_string(config.train.effective_ramp_len()) + "\n";
  manifest += "# final_test_acc_ensemble = " + fixed6(out.test_eval.accuracy) + "\n";
  for (const auto& w : out.data.warnings) manifest += "# warning: " + w + "\n";
  write_text(out_dir / "manifest.txt", manifest);

  for (std::size_t j = 0; j < out.result.state.networks.size(); ++j) {
    save_model(out.result.state.networks[j], out_dir / "teacher" / ("net_" + std::to_string(j + 1) + ".cctm"));
  }
  return out;
}

std::vector<DistillRow> run_distill(const fs::path& teacher_dir, const RunConfig& config,
                                    std::span<const double> temperatures, const fs::path& out_dir) {
  const auto teacher = ensemble_from_networks(load_networks(teacher_dir));
  const auto data = prepare_data(config);
  if (data.train.base.dim != teacher.spec.input_dim()) {
    throw DimensionError("teacher input width " + std::to_string(teacher.spec.input_dim()) +
                         " does not match data width " + std::to_string(data.train.base.dim));
  }
  std::vector<double> temps(temperatures.begin(), temperatures.end());
  if (temps.empty()) temps.push_back(config.train.distill_temperature);

  make_dirs(out_dir);
  const auto teacher_pred = predict(teacher.networks, data.test.all_features());
  const double teacher_acc = evaluate(teacher.networks, data.test).accuracy;

  std::vector<DistillRow> rows;
  std::string csv = "temperature,student_test_acc,teacher_test_acc,agreement\n";
  for (double u : temps) {
    const auto student = distill_student(teacher, data.train.base, config.train, u);
    DistillRow row;
    row.temperature = u;
    row.student_path = out_dir / ("student_U" + format_double(u) + ".cctm");
    save_model(student, row.student_path);
    const auto ev = evaluate(student, data.test);
    row.student_test_acc = ev.accuracy;
    row.teacher_test_acc = teacher_acc;
    row.agreement = agreement(ev.predictions, teacher_pred);
    csv += format_double(u) + "," + fixed6(row.student_test_acc) + "," + fixed6(row.teacher_test_acc) + "," +
           fixed6(row.agreement) + "\n";
    rows.push_back(std::move(row));
  }
  write_text(out_dir / "distill.csv", csv);
  return rows;
}

Evaluation run_eval(const fs::path& model_path, const LabeledDataset& data, const std::optional<fs::path>& confusion_out) {
  const auto nets = load_networks(model_path);
  const auto ev = evaluate(nets, data);
  if (confusion_out) {
    if (confusion_out->has_parent_path()) make_dirs(confusion_out->parent_path());
    write_text(*confusion_out, confusion_csv(ev));
  }
  return ev;
}

PmOutcome run_pm(const fs::path& annotations_csv, const fs::path& out_prefix, const PmOptions& options) {
  PmOutcome out;
  out.table = read_annotations_csv(annotations_csv);
  out.result = pm_infer(out.table, options);
  if (out_prefix.has_parent_path()) make_dirs(out_prefix.parent_path());
  write_pm_result(out_prefix, out.result);
  return out;
}

// --- bench ------------------------------------------------------------------------------------

std::string bench_csv(std::span<const BenchRow> rows) {
  std::string out = "noise_rate,k_networks,losses,method,seeds,ensemble_acc,student_acc,corrupt_train_acc\n";
  for (const auto& r : rows) {
    out += fixed6(r.noise_rate) + "," + std::to_string(r.k_networks) + "," + r.losses + "," + r.method + "," +
           std::to_string(r.seeds) + "," + fixed6(r.ensemble_acc) + "," + fixed6(r.student_acc) + "," +
           fixed6(r.corrupt_train_acc) + "\n";
  }
  return out;
}

std::vector<BenchRow> run_bench(const RunConfig& config, const fs::path& out_dir, int threads) {
  config.validate();
  std::vector<std::uint64_t> seeds = config.bench_seeds;
  if (seeds.empty()) seeds.push_back(config.train.base_seed);

  struct Job {
    std::size_t row;
    RunConfig cfg;
    fs::path dir;
    bool distill;
  };
  struct Outcome {
    double ensemble = 0.0;
    std::optional<double> student;
    std::optional<double> corrupt;
  };

  std::vector<BenchRow> rows;
  std::vector<Job> jobs;
  for (double noise : config.sweep_noise_rates) {
    for (int k : config.sweep_k) {
      for (const auto& losses : config.sweep_losses) {
        BenchRow row{noise, k, losses, "", 0, std::nullopt, std::nullopt, std::nullopt};
        if (k == 1 && losses == "cons") {
          row.method = "NA";
          rows.push_back(row);
          continue;
        }
        if (k == 1)
          row.method = "standard";
        else if (losses == "both")
          row.method = "cct";
        else
          row.method = losses == "sup" ? "sup_only" : "cons_only";
        row.seeds = seeds.size();

        char cell[96];
        std::snprintf(cell, sizeof cell, "noise%.2f_k%d_%s", noise, k, losses.c_str());
        for (auto s : seeds) {
          RunConfig c = config;
          c.noise_rate = noise;
          c.train.k_networks = k;
          c.train.base_seed = s;
          c.train.enable_sup = losses != "cons";
          c.train.enable_cons = k >= 2 && losses != "sup";
          jobs.push_back({rows.size(), c, out_dir / "cells" / cell / ("seed_" + std::to_string(s)),
                          config.bench_distill && k >= 2});
        }
        rows.push_back(row);
      }
    }
  }

  std::vector<Outcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto& job = jobs[i];
        const auto trained = run_train(job.cfg, job.dir);
        outcomes[i].ensemble = trained.test_eval.accuracy;
        if (!trained.result.metrics.empty()) outcomes[i].corrupt = trained.result.metrics.back().train_acc_corrupt;
        if (job.distill) {
          const double u = job.cfg.train.distill_temperature;
          outcomes[i].student = run_distill(job.dir / "teacher", job.cfg, std::span(&u, 1), job.dir)[0].student_test_acc;
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, threads));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(n_threads, jobs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<double> ens, stu, cor;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].row != r) continue;
      ens.push_back(outcomes[i].ensemble);
      if (outcomes[i].student) stu.push_back(*outcomes[i].student);
      if (outcomes[i].corrupt) cor.push_back(*outcomes[i].corrupt);
    }
    if (!ens.empty()) rows[r].ensemble_acc = median(ens);
    if (!stu.empty()) rows[r].student_acc = median(stu);
    if (!cor.empty()) rows[r].corrupt_train_acc = median(cor);
  }

  make_dirs(out_dir);
  write_text(out_dir / "summary.csv", bench_csv(rows));
  return rows;
}

// --- noise / crowd ------------------------------------------------------------------------------

NoiseOutcome run_noise(const fs::path& labels_in, const fs::path& labels_out, double rate, std::uint64_t seed,
                       int classes, const std::optional<fs::path>& mask_csv) {
  const auto raw = read_idx_labels(labels_in);
  std::vector<int> labels(raw.begin(), raw.end());
  int c = classes;
  if (c <= 0) c = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  for (int y : labels)
    if (y >= c) throw ContractError("label " + std::to_string(y) + " exceeds class count " + std::to_string(c));
  const auto noisy = corrupt_labels(labels, c, rate, seed);

  std::vector<std::uint8_t> bytes(noisy.labels.begin(), noisy.labels.end());
  if (labels_out.has_parent_path()) make_dirs(labels_out.parent_path());
  write_idx_labels(labels_out, bytes);

  NoiseOutcome out{labels.size(), 0};
  std::string csv = "index,clean,observed,corrupted\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.corrupted += noisy.corrupt_mask[i];
    csv += std::to_string(i) + "," + std::to_string(labels[i]) + "," + std::to_string(noisy.labels[i]) + "," +
           (noisy.corrupt_mask[i] ? "1" : "0") + "\n";
  }
  if (mask_csv) write_text(*mask_csv, csv);
  return out;
}

SimulatedCrowd simulate(const CrowdSpec& spec) {
  if (spec.items == 0 || spec.annotators == 0) throw ContractError("simulate-crowd: items and annotators must be positive");
  if (!(spec.accuracy_min <= spec.accuracy_max)) throw ContractError("simulate-crowd: accuracy range is empty");
  SimulatedCrowd out;
  Rng truth_rng(derive_seed(spec.seed, "crowd-truth"));
  for (std::size_t i = 0; i < spec.items; ++i) out.truth.push_back(static_cast<int>(truth_rng.below(static_cast<std::uint64_t>(spec.classes))));
  Rng acc_rng(derive_seed(spec.seed, "crowd-accuracy"));
  for (std::size_t a = 0; a < spec.annotators; ++a) out.accuracies.push_back(acc_rng.uniform(spec.accuracy_min, spec.accuracy_max));
  out.table = simulate_crowd(out.truth, spec.classes, out.accuracies, spec.coverage, spec.seed);
  return out;
}

SimulatedCrowd run_simulate_crowd(const CrowdSpec& spec, const fs::path& out_csv) {
  auto crowd = simulate(spec);
  if (out_csv.has_parent_path()) make_dirs(out_csv.parent_path());
  write_annotations_csv(out_csv, crowd.table);
  const auto stem = (out_csv.parent_path() / out_csv.stem()).string();
  std::string truth = "item_id,true_label\n";
  for (std::size_t i = 0; i < crowd.truth.size(); ++i) truth += std::to_string(i) + "," + std::to_string(crowd.truth[i]) + "\n";
  write_text(stem + "_truth.csv", truth);
  std::string acc = "annotator_id,accuracy\n";
  for (std::size_t a = 0; a < crowd.accuracies.size(); ++a) acc += std::to_string(a) + "," + fixed6(crowd.accuracies[a]) + "\n";
  write_text(stem + "_annotators.csv", acc);
  return crowd;
}

int thread_budget() {
  if (const char* env = std::getenv("CCT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

}  // namespace cct::app

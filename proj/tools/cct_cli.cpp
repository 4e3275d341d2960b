// Command-line front end. Talks to the library only through the C API.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cct/cct.h"

namespace {

struct Failure {
  cct_status status;
  std::string message;
};

void check(cct_status s) {
  if (s != CCT_OK) throw Failure{s, cct_last_error()};
}

// Owns a cct_config built from --config, --seed and --set overrides.
struct ConfigHandle {
  cct_config* ptr = nullptr;
  ConfigHandle() = default;
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
  ~ConfigHandle() { cct_config_free(ptr); }
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Flat key = value run configuration");
  cmd->add_option("--seed", o.seed, "Override base_seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--set", o.overrides, "Override a configuration key (key=value)");
}

void load_config(const CommonOptions& o, ConfigHandle& cfg) {
  if (o.config_path.empty())
    check(cct_config_new(&cfg.ptr));
  else
    check(cct_config_load(o.config_path.c_str(), &cfg.ptr));
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Failure{CCT_ERR_CONFIG, "--set expects key=value, got '" + kv + "'"};
    }
    check(cct_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (o.seed >= 0) check(cct_config_set(cfg.ptr, "base_seed", std::to_string(o.seed).c_str()));
  check(cct_config_validate(cfg.ptr));
}

std::string config_value(const ConfigHandle& cfg, const char* key) {
  size_t needed = 0;
  cct_config_get(cfg.ptr, key, nullptr, 0, &needed);
  std::string buf(needed, '\0');
  check(cct_config_get(cfg.ptr, key, buf.data(), buf.size(), &needed));
  buf.resize(needed - 1);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consensual collaborative training with noisy labels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cct_version()));

  CommonOptions train_opts;
  std::string train_out;
  auto* train = app.add_subcommand("train", "Co-train an ensemble on the configured dataset");
  add_common(train, train_opts);
  train->add_option("--out", train_out, "Output directory (defaults to out_dir from the config)");

  CommonOptions distill_opts;
  std::string teacher_dir, distill_out;
  std::vector<double> temperatures;
  auto* distill = app.add_subcommand("distill", "Distill a teacher ensemble into one student");
  add_common(distill, distill_opts);
  distill->add_option("--teacher", teacher_dir, "Directory holding net_<j>.cctm")->required();
  distill->add_option("--temperature", temperatures, "Softmax temperature(s) U; several values run a sweep")
      ->delimiter(',');
  distill->add_option("--out", distill_out, "Output directory")->required();

  CommonOptions eval_opts;
  std::string model_path, idx_images, idx_labels, confusion_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a model file or teacher directory");
  add_common(eval, eval_opts);
  eval->add_option("--model", model_path, "CCTM file or directory of net_<j>.cctm")->required();
  auto* images_opt = eval->add_option("--images", idx_images, "IDX image file (instead of the config's test split)");
  eval->add_option("--labels", idx_labels, "IDX label file")->needs(images_opt);
  images_opt->needs("--labels");
  eval->add_option("--confusion", confusion_out, "Write the confusion matrix CSV here");

  std::string pm_csv, pm_out;
  double smoothing = 0.5;
  int max_iter = 100;
  auto* pm = app.add_subcommand("pm", "Infer labels from crowd annotations");
  pm->add_option("--annotations", pm_csv, "CSV with item,annotator,label")->required();
  pm->add_option("--out", pm_out, "Output prefix")->required();
  pm->add_option("--smoothing", smoothing, "Smoothing constant in the expertise update")->capture_default_str();
  pm->add_option("--max-iter", max_iter, "Iteration cap")->capture_default_str();

  CommonOptions bench_opts;
  std::string bench_out;
  int bench_threads = 0;
  auto* bench = app.add_subcommand("bench", "Run the noise x K x loss sweep");
  add_common(bench, bench_opts);
  bench->add_option("--out", bench_out, "Output directory (defaults to out_dir from the config)");
  bench->add_option("--threads", bench_threads, "Worker threads (defaults to CCT_THREADS or 1)");

  std::string noise_in, noise_out, noise_mask;
  double noise_rate = 0.0;
  std::uint64_t noise_seed = 1;
  int noise_classes = 0;
  auto* noise = app.add_subcommand("noise", "Corrupt an IDX label file with symmetric noise");
  noise->add_option("--in", noise_in, "Input IDX label file")->required();
  noise->add_option("--out", noise_out, "Output IDX label file")->required();
  noise->add_option("--rate", noise_rate, "Noise rate in [0, 1)")->required();
  noise->add_option("--seed", noise_seed, "Seed")->capture_default_str();
  noise->add_option("--classes", noise_classes, "Class count (defaults to max label + 1)");
  noise->add_option("--mask", noise_mask, "Write index,clean,observed,corrupted CSV here");

  std::string crowd_out;
  std::size_t crowd_items = 500, crowd_annotators = 16;
  int crowd_classes = 8;
  double acc_min = 0.55, acc_max = 0.95, coverage = 1.0;
  std::uint64_t crowd_seed = 1;
  auto* crowd = app.add_subcommand("simulate-crowd", "Write a simulated annotation CSV");
  crowd->add_option("--out", crowd_out, "Annotation CSV path")->required();
  crowd->add_option("--items", crowd_items)->capture_default_str();
  crowd->add_option("--classes", crowd_classes)->capture_default_str();
  crowd->add_option("--annotators", crowd_annotators)->capture_default_str();
  crowd->add_option("--acc-min", acc_min)->capture_default_str();
  crowd->add_option("--acc-max", acc_max)->capture_default_str();
  crowd->add_option("--coverage", coverage, "Fraction of items each annotator labels")->capture_default_str();
  crowd->add_option("--seed", crowd_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : CCT_ERR_CONFIG;
  }

  try {
    if (*train) {
      ConfigHandle cfg;
      load_config(train_opts, cfg);
      const auto out = train_out.empty() ? config_value(cfg, "out_dir") : train_out;
      double acc = 0.0;
      size_t corrupted = 0;
      check(cct_train(cfg.ptr, out.c_str(), &acc, &corrupted));
      std::printf("test_accuracy %.6f\ncorrupted_labels %zu\noutput %s\n", acc, corrupted, out.c_str());
    } else if (*distill) {
      ConfigHandle cfg;
      load_config(distill_opts, cfg);
      check(cct_distill(teacher_dir.c_str(), cfg.ptr, temperatures.data(), temperatures.size(), distill_out.c_str()));
      std::printf("output %s/distill.csv\n", distill_out.c_str());
    } else if (*eval) {
      ConfigHandle cfg;
      load_config(eval_opts, cfg);
      cct_model* model = nullptr;
      check(cct_model_load(model_path.c_str(), &model));
      cct_evaluation* ev = nullptr;
      const auto s = idx_images.empty() ? cct_evaluate_config(model, cfg.ptr, &ev)
                                        : cct_evaluate_idx(model, idx_images.c_str(), idx_labels.c_str(), &ev);
      cct_model_free(model);
      check(s);
      std::printf("accuracy %.6f\n", cct_evaluation_accuracy(ev));
      const auto ws = confusion_out.empty() ? CCT_OK : cct_evaluation_write_csv(ev, confusion_out.c_str());
      cct_evaluation_free(ev);
      check(ws);
    } else if (*pm) {
      cct_annotations* table = nullptr;
      check(cct_annotations_load(pm_csv.c_str(), &table));
      cct_pm_result* result = nullptr;
      const auto s = cct_pm_infer(table, smoothing, max_iter, &result);
      cct_annotations_free(table);
      check(s);
      const auto ws = cct_pm_result_write(result, pm_out.c_str());
      std::printf("iterations %d\nconverged %s\ndiscarded %zu\n", cct_pm_result_iterations(result),
                  cct_pm_result_converged(result) ? "true" : "false", cct_pm_result_discarded(result));
      cct_pm_result_free(result);
      check(ws);
    } else if (*bench) {
      ConfigHandle cfg;
      load_config(bench_opts, cfg);
      const auto out = bench_out.empty() ? config_value(cfg, "out_dir") : bench_out;
      int threads = bench_threads;
      if (threads <= 0) {
        const char* env = std::getenv("CCT_THREADS");
        threads = env ? std::max(1, std::atoi(env)) : 1;
      }
      size_t rows = 0;
      check(cct_bench(cfg.ptr, out.c_str(), threads, &rows));
      std::printf("rows %zu\noutput %s/summary.csv\n", rows, out.c_str());
    } else if (*noise) {
      size_t total = 0, corrupted = 0;
      check(cct_noise_idx_labels(noise_in.c_str(), noise_out.c_str(), noise_rate, noise_seed, noise_classes,
                                 noise_mask.empty() ? nullptr : noise_mask.c_str(), &total, &corrupted));
      std::printf("labels %zu\ncorrupted %zu\n", total, corrupted);
    } else if (*crowd) {
      cct_annotations* table = nullptr;
      check(cct_annotations_simulate(crowd_items, crowd_classes, crowd_annotators, acc_min, acc_max, coverage,
                                     crowd_seed, crowd_out.c_str(), &table));
      std::printf("records %zu\n", cct_annotations_record_count(table));
      cct_annotations_free(table);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.status;
  }
  return 0;
}

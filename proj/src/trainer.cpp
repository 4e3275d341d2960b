#include "cct/trainer.hpp"

#include <algorithm>
#include <sstream>

#include "cct/error.hpp"
#include "cct/rng.hpp"
#include "format.hpp"

namespace cct {

void TrainConfig::validate() const {
  if (k_networks < 1) throw ConfigError("k_networks", "must be at least 1");
  if (epochs < 0) throw ConfigError("epochs", "must be non-negative");
  if (ramp_len < 0) throw ConfigError("ramp_len", "must be non-negative (0 selects epochs / 2)");
  if (ramp_len > epochs) throw ConfigError("ramp_len", "must not exceed epochs");
  if (!(lambda_max > 0.0 && lambda_max <= 1.0)) throw ConfigError("lambda_max", "must lie in (0, 1]");
  if (!(beta > 0.0)) throw ConfigError("beta", "must be positive");
  if (!(lr0 > 0.0)) throw ConfigError("lr0", "must be positive");
  if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (!enable_sup && !enable_cons) throw ConfigError("enable_sup", "at least one of enable_sup / enable_cons must be set");
  if (enable_cons && k_networks < 2) throw ConfigError("enable_cons", "consistency loss needs k_networks >= 2 (NA for one network)");
  if (!(distill_temperature > 0.0)) throw ConfigError("distill_temperature", "must be positive");
  for (auto h : hidden_layers)
    if (h == 0) throw ConfigError("hidden", "layer widths must be positive");
}

int TrainConfig::effective_ramp_len() const {
  if (ramp_len > 0) return ramp_len;
  return std::max(1, epochs / 2);
}

int TrainConfig::effective_distill_epochs() const { return distill_epochs < 0 ? epochs : distill_epochs; }

ScheduleParams TrainConfig::schedule() const { return ScheduleParams{lambda_max, beta, effective_ramp_len()}; }

MlpSpec TrainConfig::mlp_spec(std::size_t input_dim, int classes) const {
  MlpSpec spec;
  spec.layer_sizes.push_back(input_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden_layers.begin(), hidden_layers.end());
  spec.layer_sizes.push_back(static_cast<std::size_t>(classes));
  spec.validate();
  return spec;
}

EnsembleState EnsembleState::create(const MlpSpec& spec, int k, std::uint64_t base_seed) {
  EnsembleState state{spec, {}, {}, 0};
  for (int j = 0; j < k; ++j) {
    state.networks.push_back(init_network(spec, base_seed + static_cast<std::uint64_t>(j)));
    state.optimizers.push_back(make_adam_state(state.networks.back().parameters()));
  }
  return state;
}

namespace {

std::vector<std::size_t> epoch_order(const TrainConfig& config, std::span<const int> labels, int classes,
                                     std::string_view stream, int epoch) {
  const std::size_t n = labels.size();
  if (config.oversample) {
    return oversample_indices(labels, classes, n, derive_seed(config.base_seed, stream, static_cast<std::uint64_t>(epoch)));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(config.base_seed, std::string(stream) + "-shuffle", static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void optimizer_step(const TrainConfig& config, NetworkParams& net, AdamState& state, double lr) {
  auto params = net.parameters();
  if (config.optimizer == OptimizerKind::adam)
    adam_step(params, state, lr);
  else
    sgd_step(params, lr);
}

void check_data(const MlpSpec& spec, const LabeledDataset& data, const char* what) {
  data.validate();
  if (data.dim != spec.input_dim()) {
    throw DimensionError(std::string(what) + " feature width " + std::to_string(data.dim) +
                         " does not match network input " + std::to_string(spec.input_dim()));
  }
  if (static_cast<std::size_t>(data.class_count) > spec.class_count()) {
    throw DimensionError(std::string(what) + " has " + std::to_string(data.class_count) + " classes, network emits " +
                         std::to_string(spec.class_count()));
  }
}

double fraction_correct(std::span<const int> predicted, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

TrainResult train_cct(const TrainConfig& config, const NoisyDataset& train, const LabeledDataset& test) {
  config.validate();
  const auto spec = config.mlp_spec(train.base.dim, train.base.class_count);
  return train_cct(config, EnsembleState::create(spec, config.k_networks, config.base_seed), train, test);
}

TrainResult train_cct(const TrainConfig& config, EnsembleState state, const NoisyDataset& train,
                      const LabeledDataset& test) {
  config.validate();
  train.validate();
  check_data(state.spec, train.base, "training data");
  check_data(state.spec, test, "test data");
  if (state.networks.size() != static_cast<std::size_t>(config.k_networks)) {
    throw ConfigError("k_networks", "does not match the number of networks in the initial state");
  }
  if (state.optimizers.size() != state.networks.size()) {
    state.optimizers.clear();
    for (const auto& net : state.networks) state.optimizers.push_back(make_adam_state(net.parameters()));
  }

  const auto schedule = config.schedule();
  const JointLossOptions options{config.enable_sup, config.enable_cons, config.stop_gradient_kl, std::nullopt};
  const auto& data = train.base;
  const std::size_t k = state.networks.size();
  const Tensor train_x = data.all_features();
  const Tensor test_x = test.all_features();

  std::vector<std::size_t> clean_rows, corrupt_rows;
  for (std::size_t i = 0; i < data.size(); ++i) (train.corrupt_mask[i] ? corrupt_rows : clean_rows).push_back(i);

  TrainResult result;
  for (int e = 1; e <= config.epochs; ++e) {
    EpochMetrics m;
    m.epoch = e;
    m.lambda = lambda_schedule(e, schedule);
    m.lr = lr_at_epoch(config.lr0, e - 1);

    const auto order = epoch_order(config, data.labels, data.class_count, "train", e);
    double sup_sum = 0.0, cons_sum = 0.0, total_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor x = data.batch(rows);
      const auto y = data.batch_labels(rows);

      for (auto& net : state.networks) net.zero_grad();
      Tape tape;
      std::vector<Tensor> logits;
      for (const auto& net : state.networks) logits.push_back(forward(tape, net, x));
      const auto loss = joint_loss(tape, logits, y, e, schedule, options);
      tape.backward(loss.total);
      for (std::size_t j = 0; j < k; ++j) optimizer_step(config, state.networks[j], state.optimizers[j], m.lr);

      const auto w = static_cast<double>(rows.size());
      sup_sum += loss.l_sup * w;
      cons_sum += loss.l_cons * w;
      total_sum += loss.l_total * w;
    }
    const auto n = static_cast<double>(order.size());
    m.l_sup = sup_sum / n;
    m.l_cons = cons_sum / n;
    m.l_total = total_sum / n;

    const auto train_pred = predict(state.networks, train_x);
    m.train_acc = fraction_correct(train_pred, data.labels);
    auto subset_acc = [&](const std::vector<std::size_t>& rows) -> std::optional<double> {
      if (rows.empty()) return std::nullopt;
      std::size_t hits = 0;
      for (auto r : rows) hits += train_pred[r] == data.labels[r];
      return static_cast<double>(hits) / static_cast<double>(rows.size());
    };
    m.train_acc_clean = subset_acc(clean_rows);
    m.train_acc_corrupt = subset_acc(corrupt_rows);
    for (const auto& net : state.networks) {
      m.test_acc.push_back(fraction_correct(predict(std::span(&net, 1), test_x), test.labels));
    }
    m.test_acc_ensemble = fraction_correct(predict(state.networks, test_x), test.labels);

    state.epoch = e;
    result.metrics.push_back(std::move(m));
  }
  for (auto& net : state.networks) net.zero_grad();
  result.state = std::move(state);
  return result;
}

NetworkParams distill_student(const EnsembleState& teacher, const LabeledDataset& train, const TrainConfig& config,
                              std::optional<double> temperature) {
  config.validate();
  if (teacher.networks.empty()) throw ContractError("distill_student: teacher ensemble is empty");
  check_data(teacher.spec, train, "distillation data");
  const DistillOptions options{temperature.value_or(config.distill_temperature), config.distill_scale_t2};
  if (!(options.temperature > 0.0)) throw ContractError("distill_student: temperature must be positive");

  NetworkParams student = init_network(teacher.spec, config.base_seed + teacher.networks.size());
  AdamState adam = make_adam_state(student.parameters());

  for (int e = 1; e <= config.effective_distill_epochs(); ++e) {
    const double lr = lr_at_epoch(config.lr0, e - 1);
    const auto order = epoch_order(config, train.labels, train.class_count, "distill", e);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor x = train.batch(rows);
      const auto y = train.batch_labels(rows);

      std::vector<Tensor> teacher_logits;
      Tape frozen = Tape::no_grad();
      for (const auto& net : teacher.networks) teacher_logits.push_back(forward(frozen, net, x));

      student.zero_grad();
      Tape tape;
      const Tensor logits = forward(tape, student, x);
      tape.backward(distillation_loss(tape, teacher_logits, logits, y, options));
      optimizer_step(config, student, adam, lr);
    }
  }
  student.zero_grad();
  return student;
}

Tensor ensemble_probabilities(std::span<const NetworkParams> networks, const Tensor& features) {
  if (networks.empty()) throw ContractError("ensemble_probabilities: no networks");
  Tape tape = Tape::no_grad();
  Tensor acc = softmax(tape, forward(tape, networks.front(), features));
  for (std::size_t j = 1; j < networks.size(); ++j) acc = add(tape, acc, softmax(tape, forward(tape, networks[j], features)));
  return scale(tape, acc, 1.0 / static_cast<double>(networks.size()));
}

std::vector<int> predict(std::span<const NetworkParams> networks, const Tensor& features) {
  const Tensor probs = ensemble_probabilities(networks, features);
  const std::size_t rows = probs.rows(), c = probs.cols();
  std::vector<int> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (probs[i * c + j] > probs[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

Evaluation evaluate(std::span<const NetworkParams> networks, const LabeledDataset& data) {
  if (networks.empty()) throw ContractError("evaluate: no networks");
  check_data(networks.front().spec, data, "evaluation data");
  Evaluation ev;
  ev.class_count = static_cast<int>(networks.front().spec.class_count());
  ev.confusion.assign(static_cast<std::size_t>(ev.class_count * ev.class_count), 0);
  ev.predictions = predict(networks, data.all_features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ++ev.confusion[static_cast<std::size_t>(data.labels[i] * ev.class_count + ev.predictions[i])];
    hits += data.labels[i] == ev.predictions[i];
  }
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  return ev;
}

Evaluation evaluate(const NetworkParams& network, const LabeledDataset& data) {
  return evaluate(std::span(&network, 1), data);
}

MemorizationReport memorization_report(std::span<const EpochMetrics> metrics) {
  MemorizationReport report;
  for (const auto& m : metrics) {
    report.rows.push_back({m.epoch, m.train_acc, m.train_acc_clean, m.train_acc_corrupt, m.test_acc_ensemble});
    if (m.train_acc_corrupt) report.corrupt_series_defined = true;
    if (report.peak_test_epoch == 0 || m.test_acc_ensemble > report.peak_test_acc) {
      report.peak_test_epoch = m.epoch;
      report.peak_test_acc = m.test_acc_ensemble;
    }
  }
  return report;
}

std::string MemorizationReport::to_csv() const {
  using detail::fixed6;
  std::ostringstream os;
  os << "epoch,train_acc,train_acc_clean,train_acc_corrupt,test_acc\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << fixed6(r.train_acc) << ',' << fixed6(r.clean_acc) << ',' << fixed6(r.corrupt_acc) << ','
       << fixed6(r.test_acc) << '\n';
  }
  os << "# corrupt_series," << (corrupt_series_defined ? "defined" : "undefined (no corrupted labels)") << '\n';
  os << "# peak_test_epoch," << peak_test_epoch << '\n';
  os << "# peak_test_acc," << fixed6(peak_test_acc) << '\n';
  return os.str();
}

}  // namespace cct

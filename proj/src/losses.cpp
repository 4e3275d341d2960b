#include "cct/losses.hpp"

#include <cmath>
#include <string>

#include "cct/error.hpp"

namespace cct {

void ScheduleParams::validate() const {
  if (!(lambda_max > 0.0 && lambda_max <= 1.0)) throw ContractError("lambda_max must lie in (0, 1]");
  if (!(beta > 0.0)) throw ContractError("beta must be positive");
  if (ramp_len < 1) throw ContractError("ramp_len must be at least 1");
}

double lambda_schedule(double epoch, const ScheduleParams& params) {
  if (epoch < 0.0) throw ContractError("lambda_schedule: epoch must be non-negative");
  params.validate();
  const double e_r = static_cast<double>(params.ramp_len);
  if (epoch >= e_r) return params.lambda_max;
  const double x = 1.0 - epoch / e_r;
  return params.lambda_max * std::exp(-params.beta * x * x);
}

namespace {

void require_logit_batch(std::span<const Tensor> tensors, const char* what) {
  if (tensors.empty()) throw ContractError(std::string(what) + ": need at least one network");
  for (const auto& t : tensors) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected [batch x C], got " + shape_to_string(t.shape()));
    if (t.shape() != tensors.front().shape()) {
      throw DimensionError(std::string(what) + ": shapes differ, " + shape_to_string(tensors.front().shape()) +
                           " vs " + shape_to_string(t.shape()));
    }
  }
}

// -mean_i log_softmax(z)[i, y_i]
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  return scale(tape, mean(tape, gather_rows(tape, log_softmax(tape, logits), labels)), -1.0);
}

// -mean_i sum_c target[i, c] * log_q[i, c]
Tensor soft_cross_entropy(Tape& tape, const Tensor& target, const Tensor& log_q) {
  return scale(tape, mean(tape, sum_rows(tape, mul(tape, target, log_q))), -1.0);
}

Tensor add_all(Tape& tape, std::vector<Tensor> terms) {
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(tape, acc, terms[i]);
  return acc;
}

}  // namespace

Tensor supervision_loss(Tape& tape, std::span<const Tensor> logits_per_network, std::span<const int> labels) {
  require_logit_batch(logits_per_network, "supervision_loss");
  const std::size_t classes = logits_per_network.front().cols();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractError("supervision_loss: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<Tensor> terms;
  for (const auto& z : logits_per_network) terms.push_back(cross_entropy(tape, z, labels));
  return add_all(tape, std::move(terms));
}

Tensor consistency_loss(Tape& tape, std::span<const Tensor> probs_per_network, bool stop_gradient) {
  if (probs_per_network.size() < 2) {
    throw ContractError("consistency_loss: needs at least two networks, got " + std::to_string(probs_per_network.size()));
  }
  require_logit_batch(probs_per_network, "consistency_loss");
  for (const auto& p : probs_per_network) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double v = p[i * c + j];
        if (!(v >= 0.0)) throw ContractError("consistency_loss: negative probability in row " + std::to_string(i));
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        throw ContractError("consistency_loss: row " + std::to_string(i) + " sums to " + std::to_string(s));
      }
    }
  }

  const std::size_t k = probs_per_network.size();
  std::vector<Tensor> logs;
  std::vector<Tensor> logs_const;
  std::vector<Tensor> probs_const;
  for (const auto& p : probs_per_network) {
    logs.push_back(log_clamped(tape, p, kProbabilityFloor));
    if (stop_gradient) {
      probs_const.push_back(p.detach());
      logs_const.push_back(logs.back().detach());
    }
  }

  std::vector<Tensor> terms;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t q = 0; q < k; ++q) {
      if (q == j) continue;
      // KL(p_q || p_j)
      const Tensor& target = stop_gradient ? probs_const[q] : probs_per_network[q];
      const Tensor& log_target = stop_gradient ? logs_const[q] : logs[q];
      Tensor diff = sub(tape, log_target, logs[j]);
      terms.push_back(mean(tape, sum_rows(tape, mul(tape, target, diff))));
    }
  }
  return add_all(tape, std::move(terms));
}

LossBreakdown joint_loss(Tape& tape, std::span<const Tensor> logits_per_network, std::span<const int> labels,
                         double epoch, const ScheduleParams& schedule, const JointLossOptions& options) {
  if (!options.enable_sup && !options.enable_cons) {
    throw ContractError("joint_loss: at least one of supervision and consistency must be enabled");
  }
  require_logit_batch(logits_per_network, "joint_loss");
  const std::size_t k = logits_per_network.size();
  if (options.enable_cons && k < 2) {
    throw ContractError("joint_loss: consistency loss needs at least two networks");
  }

  auto consistency_of = [&](Tape& t, std::span<const Tensor> logits) {
    std::vector<Tensor> probs;
    for (const auto& z : logits) probs.push_back(softmax(t, z));
    return consistency_loss(t, probs, options.stop_gradient_kl);
  };
  auto detached = [&] {
    std::vector<Tensor> out;
    for (const auto& z : logits_per_network) out.push_back(z.detach());
    return out;
  };

  LossBreakdown out;
  if (options.enable_sup && options.enable_cons) {
    const double lambda = options.forced_lambda.value_or(lambda_schedule(epoch, schedule));
    Tensor sup = supervision_loss(tape, logits_per_network, labels);
    Tensor cons = consistency_of(tape, logits_per_network);
    out.total = add(tape, scale(tape, sup, 1.0 - lambda), scale(tape, cons, lambda));
    out.l_sup = sup.item();
    out.l_cons = cons.item();
    out.lambda = lambda;
  } else if (options.enable_sup) {
    out.total = supervision_loss(tape, logits_per_network, labels);
    out.l_sup = out.total.item();
    if (k >= 2) {
      Tape scratch = Tape::no_grad();
      out.l_cons = consistency_of(scratch, detached()).item();
    }
    out.lambda = 0.0;
  } else {
    out.total = consistency_of(tape, logits_per_network);
    out.l_cons = out.total.item();
    Tape scratch = Tape::no_grad();
    out.l_sup = supervision_loss(scratch, detached(), labels).item();
    out.lambda = 1.0;
  }
  out.l_total = out.total.item();
  return out;
}

Tensor softened_softmax(Tape& tape, const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("softened_softmax: temperature must be positive");
  return softmax(tape, scale(tape, logits, 1.0 / temperature));
}

Tensor distillation_soft_term(Tape& tape, std::span<const Tensor> teacher_logits, const Tensor& student_logits,
                              const DistillOptions& options) {
  if (teacher_logits.empty()) throw ContractError("distillation_loss: needs at least one teacher");
  if (!(options.temperature > 0.0)) throw ContractError("distillation_loss: temperature must be positive");
  for (const auto& t : teacher_logits) {
    if (t.shape() != student_logits.shape()) {
      throw DimensionError("distillation_loss: teacher " + shape_to_string(t.shape()) + " vs student " +
                           shape_to_string(student_logits.shape()));
    }
  }
  const double u = options.temperature;
  Tensor log_ps = clamp_min(tape, log_softmax(tape, scale(tape, student_logits, 1.0 / u)), std::log(kProbabilityFloor));

  std::vector<Tensor> terms;
  Tape frozen = Tape::no_grad();
  for (const auto& t : teacher_logits) {
    Tensor pt = softened_softmax(frozen, t.detach(), u);
    terms.push_back(soft_cross_entropy(tape, pt, log_ps));
  }
  const double weight = 0.5 * (options.scale_soft_by_t2 ? u * u : 1.0);
  return scale(tape, add_all(tape, std::move(terms)), weight);
}

Tensor distillation_loss(Tape& tape, std::span<const Tensor> teacher_logits, const Tensor& student_logits,
                         std::span<const int> labels, const DistillOptions& options) {
  Tensor soft = distillation_soft_term(tape, teacher_logits, student_logits, options);
  Tensor hard = scale(tape, cross_entropy(tape, student_logits, labels), 0.5);
  return add(tape, soft, hard);
}

}  // namespace cct

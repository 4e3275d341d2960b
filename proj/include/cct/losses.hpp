#pragma once

// Training objectives for consensual co-training and ensemble distillation.
// All losses are in nats and use the batch mean as reduction.

#include <optional>
#include <span>
#include <vector>

#include "cct/tensor.hpp"

namespace cct {

/// Floor applied to probabilities before taking logs inside KL / CE terms.
inline constexpr double kProbabilityFloor = 1e-12;

/// Ramp-up of the consistency weight:
///   lambda(e) = lambda_max * exp(-beta * (1 - e / ramp_len)^2), e <= ramp_len
/// and lambda_max afterwards.
struct ScheduleParams {
  double lambda_max = 0.9;
  double beta = 0.65;
  int ramp_len = 1;

  void validate() const;
};

double lambda_schedule(double epoch, const ScheduleParams& params);

/// Sum over networks of mean-over-batch cross-entropy against `labels`.
Tensor supervision_loss(Tape& tape, std::span<const Tensor> logits_per_network, std::span<const int> labels);

/// Sum over ordered pairs (j, k), k != j, of mean-over-batch KL(p_k || p_j).
/// With `stop_gradient` the target p_k of each term is treated as constant.
/// Throws ContractError for fewer than two networks or rows that are not
/// probability vectors.
Tensor consistency_loss(Tape& tape, std::span<const Tensor> probs_per_network, bool stop_gradient = false);

struct LossBreakdown {
  double l_sup = 0.0;
  double l_cons = 0.0;
  double lambda = 0.0;  // weight actually applied to l_cons
  double l_total = 0.0;
  Tensor total;  // scalar fed to backward
};

struct JointLossOptions {
  bool enable_sup = true;
  bool enable_cons = true;
  bool stop_gradient_kl = false;
  /// Overrides the scheduled weight (ablations and tests).
  std::optional<double> forced_lambda;
};

/// (1 - lambda) * L_sup + lambda * L_cons with lambda = lambda_schedule(epoch).
/// With only one loss enabled the total is that loss alone and the breakdown
/// reports lambda as 0 (supervision only) or 1 (consistency only).
LossBreakdown joint_loss(Tape& tape, std::span<const Tensor> logits_per_network, std::span<const int> labels,
                         double epoch, const ScheduleParams& schedule, const JointLossOptions& options = {});

/// softmax(logits / temperature), row-wise.
Tensor softened_softmax(Tape& tape, const Tensor& logits, double temperature);

struct DistillOptions {
  double temperature = 2.0;
  /// Multiply the soft term by temperature^2 (off by default).
  bool scale_soft_by_t2 = false;
};

/// 0.5 * sum_j CE(p_{j,T}, p_S) + 0.5 * CE(p_S^H, y). Teacher logits are
/// treated as constants; p_{j,T} and p_S are softened at the temperature,
/// p_S^H is the plain softmax of the student.
Tensor distillation_loss(Tape& tape, std::span<const Tensor> teacher_logits, const Tensor& student_logits,
                         std::span<const int> labels, const DistillOptions& options = {});

/// Soft term alone: 0.5 * sum_j CE(p_{j,T}, p_S).
Tensor distillation_soft_term(Tape& tape, std::span<const Tensor> teacher_logits, const Tensor& student_logits,
                              const DistillOptions& options = {});

}  // namespace cct

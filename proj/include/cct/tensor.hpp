#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double tensors. Operations are recorded on an explicit Tape (define by
// run); backward() replays the tape in reverse creation order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cct {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  bool leaf = true;
};
}  // namespace detail

/// Shared handle to tensor storage. Copying a Tensor aliases the same
/// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);

  const Shape& shape() const { return s_->shape; }
  std::size_t numel() const { return s_->data.size(); }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return s_->data; }
  std::span<const double> data() const { return s_->data; }
  double& operator[](std::size_t i) { return s_->data[i]; }
  double operator[](std::size_t i) const { return s_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return s_->data[r * cols() + c]; }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return s_->leaf; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<double> grad() { return s_->grad; }
  std::span<const double> grad() const { return s_->grad; }
  /// Sets the gradient buffer to zeros (allocating it if needed).
  void zero_grad();
  void clear_grad() { s_->grad.clear(); }

  /// Deep copy of data (and grad), with the same requires_grad flag, as a leaf.
  Tensor clone() const;
  /// Deep copy of data only; never tracked.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorStorage> s) : s_(std::move(s)) {}
  std::shared_ptr<detail::TensorStorage> s_;
};

/// Ordered record of differentiable operations for one forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  /// A tape that never records; ops return untracked tensors.
  static Tape no_grad();

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// True if an op over these inputs has to be recorded.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  bool tracks(std::span<const Tensor> inputs) const;

  /// Marks `output` as a non-leaf produced by an op over `inputs` and stores
  /// its backward rule. The rule receives d(loss)/d(output) and must
  /// accumulate into the inputs' grad buffers (already allocated).
  void record(std::vector<Tensor> inputs, Tensor& output, BackwardFn backward);

  /// Populates grads of every tracked tensor reachable from `loss`.
  /// Non-leaf grads are reset first; leaf grads accumulate across calls.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  bool recording_ = true;
  std::vector<Node> nodes_;
};

inline void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

// --- operations -----------------------------------------------------------

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// Elementwise a + b (same shape).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// Elementwise a - b (same shape).
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
/// Elementwise a * b (same shape).
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
/// [m x n] + bias[n], bias broadcast over rows.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor relu(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
/// log(max(a, floor)); zero gradient where clamped.
Tensor log_clamped(Tape& tape, const Tensor& a, double floor);
/// max(a, floor) elementwise; zero gradient where clamped.
Tensor clamp_min(Tape& tape, const Tensor& a, double floor);
/// Row-wise log-softmax of [batch x C], max-subtracted.
Tensor log_softmax(Tape& tape, const Tensor& a);
/// Row-wise softmax of [batch x C].
Tensor softmax(Tape& tape, const Tensor& a);
/// Sum of all elements -> scalar.
Tensor sum(Tape& tape, const Tensor& a);
/// Mean of all elements -> scalar.
Tensor mean(Tape& tape, const Tensor& a);
/// [m x n] -> [m], per-row sums.
Tensor sum_rows(Tape& tape, const Tensor& a);
/// [m x n], labels[m] -> [m] with out[i] = a[i, labels[i]].
Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const int> labels);

/// Central finite-difference gradient check. Evaluates `f` (which builds its
/// graph on the given tape) and compares the analytic gradient of every
/// component of `params` against (f(x+h) - f(x-h)) / 2h. Returns the max of
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> params, double h);

}  // namespace cct

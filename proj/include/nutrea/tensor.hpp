#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// Operations record onto the tape installed on the current thread by a
// TapeScope, and only when at least one input requires a gradient. Without an
// active tape every operation is a plain forward computation, which is what
// evaluation uses.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nutrea {

#ifdef NUTREA_EXTENDED_REAL
using Real = long double;
#else
using Real = double;
#endif
using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until a backward pass touches it
  bool requires_grad = false;

  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real fill);
  static Tensor from(Shape shape, std::vector<Real> values);
  static Tensor scalar(Real value);
  /// Trainable leaf; gradients accumulate into it until zero_grad().
  static Tensor parameter(Shape shape, std::vector<Real> values);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return data_->shape.at(axis); }
  std::size_t size() const { return data_->value.size(); }

  std::span<const Real> values() const { return data_->value; }
  std::span<Real> mutable_values() { return data_->value; }
  Real operator[](std::size_t i) const { return data_->value[i]; }
  Real at(std::size_t row, std::size_t col) const;
  Real item() const;

  bool requires_grad() const { return data_ && data_->requires_grad; }
  bool has_grad() const { return data_ && !data_->grad.empty(); }
  /// Gradient buffer; all zeros when no backward pass has reached this tensor.
  std::vector<Real> grad() const;
  void zero_grad() { data_->grad.clear(); }

  /// Copy of the values detached from any tape.
  Tensor detach() const;

  detail::TensorData* impl() const { return data_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}
  std::shared_ptr<detail::TensorData> data_;

  friend class Tape;
  friend Tensor make_result(Shape shape, std::vector<Real> values, bool requires_grad);
};

/// Ordered record of differentiable operations. Each entry owns references to
/// its inputs and output so the graph stays alive until backward().
class Tape {
 public:
  using BackwardFn = std::function<void(const std::vector<Real>& out_grad)>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
  /// Reverse sweep from a scalar loss. Each entry runs at most once, and a
  /// tape can be swept only once.
  void backward(const Tensor& loss);
  std::size_t size() const { return entries_.size(); }
  void clear();

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

/// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Runs backward on the active tape.
void backward(const Tensor& loss);

// --- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
/// x[m×n] + b[n] added to every row.
Tensor add_rowwise(const Tensor& x, const Tensor& b);
/// x[m×n] ⊙ v[n] applied to every row.
Tensor mul_rowwise(const Tensor& x, const Tensor& v);
Tensor relu(const Tensor& x);
/// Max-subtracted softmax over a vector. Masked-out entries (mask[i] false)
/// get exactly zero probability.
Tensor softmax(const Tensor& x, const std::vector<bool>& mask = {});
/// ln(max(x, floor)); the gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& x, Real floor);
Tensor sum(const Tensor& x);
/// Column means of a [k×d] matrix, returned as [1×d].
Tensor mean_rows(const Tensor& x);
/// Row sums of a [m×n] matrix, returned as a vector [m].
Tensor sum_cols(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
/// Columnwise maximum of a [k×d] matrix as a vector [d]. k == 0 yields zeros.
/// Ties route the gradient to the lowest row index.
Tensor maxpool_rows(const Tensor& rows);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
/// For each index set, the columnwise max over the gathered table rows:
/// equivalent to maxpool_rows(gather_rows(table, set)) stacked as [sets×d].
Tensor gather_maxpool(const Tensor& table, const std::vector<std::vector<std::size_t>>& sets);
/// Score-weighted incidence: out[tail][rel] += weights[head] over the given
/// edges, producing a [rows×cols] matrix.
Tensor scatter_edge_weights(const Tensor& weights, std::span<const std::size_t> heads,
                            std::span<const std::size_t> relations,
                            std::span<const std::size_t> tails, std::size_t rows,
                            std::size_t cols);

// --- gradient checking ----------------------------------------------------

/// Worst elementwise relative error between backward() gradients of f with
/// respect to each tensor in `inputs` and central finite differences. The
/// denominator is max(|analytic|, |numeric|, 1e-8).
Real finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, Real eps);
Real finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, Real eps);

}  // namespace nutrea

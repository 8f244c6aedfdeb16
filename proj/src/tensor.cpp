#include "nutrea/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "nutrea/error.hpp"

namespace nutrea {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

thread_local Tape* g_active_tape = nullptr;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const std::vector<Real>& values, const char* op) {
  for (Real v : values) {
    if (!std::isfinite(v)) {
      throw ContractError(std::string("non-finite value produced by ") + op);
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " but got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

std::vector<Real>& grad_of(const Tensor& t) { return t.impl()->ensure_grad(); }

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor make_result(Shape shape, std::vector<Real> values, bool requires_grad) {
  auto data = std::make_shared<detail::TensorData>();
  data->shape = std::move(shape);
  data->value = std::move(values);
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, Real fill) {
  auto n = shape_size(shape);
  return make_result(std::move(shape), std::vector<Real>(n, fill), false);
}

Tensor Tensor::from(Shape shape, std::vector<Real> values) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  return make_result(std::move(shape), std::move(values), false);
}

Tensor Tensor::scalar(Real value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<Real> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.data_->requires_grad = true;
  return t;
}

Real Tensor::at(std::size_t row, std::size_t col) const {
  return data_->value[row * data_->shape.at(1) + col];
}

Real Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return data_->value[0];
}

std::vector<Real> Tensor::grad() const {
  if (data_->grad.empty()) return std::vector<Real>(data_->value.size(), 0.0);
  return data_->grad;
}

Tensor Tensor::detach() const { return from(shape(), data_->value); }

// --- tape -----------------------------------------------------------------

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  entries_.push_back({std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (consumed_) throw ContractError("tape already swept by backward()");
  consumed_ = true;
  if (!loss.requires_grad()) return;
  grad_of(loss)[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto* out = it->output.impl();
    if (out->grad.empty()) continue;  // not on a path to the loss
    it->fn(out->grad);
  }
}

void Tape::clear() {
  entries_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw ContractError("backward() without an active tape");
  g_active_tape->backward(loss);
}

// --- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  std::vector<Real> out(m * n, 0.0);
  const auto ei = [](std::size_t x) { return static_cast<Eigen::Index>(x); };
  ConstMatrixMap av(a.values().data(), ei(m), ei(k));
  ConstMatrixMap bv(b.values().data(), ei(k), ei(n));
  MatrixMap(out.data(), ei(m), ei(n)).noalias() = av * bv;
  check_finite(out, "matmul");
  const bool rec = recording({&a, &b});
  Tensor c = make_result({m, n}, std::move(out), rec);
  if (rec) {
    active_tape()->record({a, b}, c, [a, b, m, k, n, ei](const std::vector<Real>& g) {
      ConstMatrixMap gv(g.data(), ei(m), ei(n));
      if (a.requires_grad()) {
        MatrixMap ga(grad_of(a).data(), ei(m), ei(k));
        ga.noalias() += gv * ConstMatrixMap(b.values().data(), ei(k), ei(n)).transpose();
      }
      if (b.requires_grad()) {
        MatrixMap gb(grad_of(b).data(), ei(k), ei(n));
        gb.noalias() += ConstMatrixMap(a.values().data(), ei(m), ei(k)).transpose() * gv;
      }
    });
  }
  return c;
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, BwdA da,
                          BwdB db) {
  require_same_shape(a, b, op);
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i], b[i]);
  check_finite(out, op);
  const bool rec = recording({&a, &b});
  Tensor c = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({a, b}, c, [a, b, da, db](const std::vector<Real>& g) {
      if (a.requires_grad()) {
        auto& ga = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da(g[i], a[i], b[i]);
      }
      if (b.requires_grad()) {
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db(g[i], a[i], b[i]);
      }
    });
  }
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real g, Real, Real) { return g; },
      [](Real g, Real, Real) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real g, Real, Real) { return g; },
      [](Real g, Real, Real) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real g, Real, Real y) { return g * y; },
      [](Real g, Real x, Real) { return g * x; });
}

Tensor scale(const Tensor& x, Real factor) {
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  check_finite(out, "scale");
  const bool rec = recording({&x});
  Tensor y = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x, factor](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return y;
}

namespace {

void require_row_operand(const Tensor& x, const Tensor& v, const char* op) {
  require_rank(x, 2, op);
  if (v.size() != x.dim(1)) {
    throw DimensionError(std::string(op) + ": row operand " + shape_string(v.shape()) +
                         " does not match " + shape_string(x.shape()));
  }
}

}  // namespace

Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  require_row_operand(x, b, "add_rowwise");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  check_finite(out, "add_rowwise");
  const bool rec = recording({&x, &b});
  Tensor y = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({x, b}, y, [x, b, m, n](const std::vector<Real>& g) {
      if (x.requires_grad()) {
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return y;
}

Tensor mul_rowwise(const Tensor& x, const Tensor& v) {
  require_row_operand(x, v, "mul_rowwise");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= v[j];
  check_finite(out, "mul_rowwise");
  const bool rec = recording({&x, &v});
  Tensor y = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({x, v}, y, [x, v, m, n](const std::vector<Real>& g) {
      if (x.requires_grad()) {
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * v[j];
      }
      if (v.requires_grad()) {
        auto& gv = grad_of(v);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j] * x[i * n + j];
      }
    });
  }
  return y;
}

Tensor relu(const Tensor& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  const bool rec = recording({&x});
  Tensor y = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      // subgradient 0 at x == 0
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
    });
  }
  return y;
}

Tensor softmax(const Tensor& x, const std::vector<bool>& mask) {
  require_rank(x, 1, "softmax");
  const std::size_t n = x.size();
  if (!mask.empty() && mask.size() != n) {
    throw DimensionError("softmax: mask of length " + std::to_string(mask.size()) +
                         " for vector of length " + std::to_string(n));
  }
  auto live = [&](std::size_t i) { return mask.empty() || mask[i]; };
  Real peak = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (live(i)) peak = std::max(peak, x[i]);
  if (!std::isfinite(peak)) throw ContractError("softmax: every entry is masked");
  std::vector<Real> out(n, 0.0);
  Real total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!live(i)) continue;
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  const bool rec = recording({&x});
  Tensor y = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x, y](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      Real dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - dot);
    });
  }
  return y;
}

Tensor log_clamped(const Tensor& x, Real floor) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x[i], floor));
  check_finite(out, "log_clamped");
  const bool rec = recording({&x});
  Tensor y = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x, floor](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > floor) gx[i] += g[i] / x[i];
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  Real total = 0.0;
  for (Real v : x.values()) total += v;
  const bool rec = recording({&x});
  Tensor y = make_result({}, {total}, rec);
  if (rec) {
    active_tape()->record({x}, y, [x](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      for (auto& v : gx) v += g[0];
    });
  }
  return y;
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t k = x.dim(0), d = x.dim(1);
  if (k == 0) throw ContractError("mean_rows of an empty matrix");
  std::vector<Real> out(d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x[i * d + j];
  for (auto& v : out) v /= static_cast<Real>(k);
  const bool rec = recording({&x});
  Tensor y = make_result({1, d}, std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x, k, d](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      const Real w = 1.0 / static_cast<Real>(k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] * w;
    });
  }
  return y;
}

Tensor sum_cols(const Tensor& x) {
  require_rank(x, 2, "sum_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  check_finite(out, "sum_cols");
  const bool rec = recording({&x});
  Tensor y = make_result({m}, std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x, m, n](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i];
    });
  }
  return y;
}

namespace {

// Views a tensor of rank 1 or 2 as outer × axis_len × inner blocks for the
// concat/slice axis.
struct AxisLayout {
  std::size_t outer, axis_len, inner;
};

AxisLayout layout_for(const Tensor& t, std::size_t axis, const char* op) {
  if (t.rank() == 0 || t.rank() > 2 || axis >= t.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + shape_string(t.shape()));
  }
  if (t.rank() == 1) return {1, t.dim(0), 1};
  if (axis == 0) return {1, t.dim(0), t.dim(1)};
  return {t.dim(0), t.dim(1), 1};
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero parts");
  const Tensor& first = parts.front();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) {
      throw DimensionError("concat: ragged ranks " + shape_string(first.shape()) + " vs " +
                           shape_string(p.shape()));
    }
    for (std::size_t d = 0; d < p.rank(); ++d) {
      if (d != axis && p.dim(d) != first.dim(d)) {
        throw DimensionError("concat: ragged shapes " + shape_string(first.shape()) + " vs " +
                             shape_string(p.shape()));
      }
    }
    total += layout_for(p, axis, "concat").axis_len;
  }
  Shape shape = first.shape();
  shape[axis] = total;
  const auto base = layout_for(first, axis, "concat");
  std::vector<Real> out(shape_size(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto lay = layout_for(p, axis, "concat");
    for (std::size_t o = 0; o < lay.outer; ++o) {
      const Real* src = p.values().data() + o * lay.axis_len * lay.inner;
      Real* dst = out.data() + (o * total + offset) * base.inner;
      std::copy(src, src + lay.axis_len * lay.inner, dst);
    }
    offset += lay.axis_len;
  }
  bool rec = false;
  if (active_tape() != nullptr)
    for (const auto& p : parts) rec = rec || p.requires_grad();
  Tensor y = make_result(std::move(shape), std::move(out), rec);
  if (rec) {
    active_tape()->record(parts, y, [parts, axis, total, inner = base.inner](const std::vector<Real>& g) {
      std::size_t offset = 0;
      for (const auto& p : parts) {
        const auto lay = layout_for(p, axis, "concat");
        if (p.requires_grad()) {
          auto& gp = grad_of(p);
          for (std::size_t o = 0; o < lay.outer; ++o) {
            const Real* src = g.data() + (o * total + offset) * inner;
            Real* dst = gp.data() + o * lay.axis_len * lay.inner;
            for (std::size_t i = 0; i < lay.axis_len * lay.inner; ++i) dst[i] += src[i];
          }
        }
        offset += lay.axis_len;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto lay = layout_for(x, axis, "slice");
  if (start + length > lay.axis_len) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for shape " +
                         shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<Real> out(shape_size(shape));
  for (std::size_t o = 0; o < lay.outer; ++o) {
    const Real* src = x.values().data() + (o * lay.axis_len + start) * lay.inner;
    std::copy(src, src + length * lay.inner, out.data() + o * length * lay.inner);
  }
  const bool rec = recording({&x});
  Tensor y = make_result(std::move(shape), std::move(out), rec);
  if (rec) {
    active_tape()->record({x}, y, [x, lay, start, length](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      for (std::size_t o = 0; o < lay.outer; ++o) {
        Real* dst = gx.data() + (o * lay.axis_len + start) * lay.inner;
        const Real* src = g.data() + o * length * lay.inner;
        for (std::size_t i = 0; i < length * lay.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  const bool rec = recording({&x});
  Tensor y = make_result(std::move(shape), std::vector<Real>(x.values().begin(), x.values().end()),
                         rec);
  if (rec) {
    active_tape()->record({x}, y, [x](const std::vector<Real>& g) {
      auto& gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

Tensor maxpool_rows(const Tensor& rows) {
  require_rank(rows, 2, "maxpool_rows");
  const std::size_t k = rows.dim(0), d = rows.dim(1);
  std::vector<Real> out(d, 0.0);
  std::vector<std::size_t> winner(d, 0);
  if (k > 0) {
    for (std::size_t j = 0; j < d; ++j) out[j] = rows[j];
    for (std::size_t i = 1; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (rows[i * d + j] > out[j]) {
          out[j] = rows[i * d + j];
          winner[j] = i;
        }
  }
  const bool rec = k > 0 && recording({&rows});
  Tensor y = make_result({d}, std::move(out), rec);
  if (rec) {
    active_tape()->record({rows}, y, [rows, winner, d](const std::vector<Real>& g) {
      auto& gr = grad_of(rows);
      for (std::size_t j = 0; j < d; ++j) gr[winner[j] * d + j] += g[j];
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank(table, 2, "gather_rows");
  const std::size_t n = table.dim(0), d = table.dim(1);
  std::vector<Real> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + shape_string(table.shape()));
    }
    std::copy_n(table.values().data() + indices[i] * d, d, out.data() + i * d);
  }
  const bool rec = recording({&table});
  Tensor y = make_result({indices.size(), d}, std::move(out), rec);
  if (rec) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    active_tape()->record({table}, y, [table, idx = std::move(idx), d](const std::vector<Real>& g) {
      auto& gt = grad_of(table);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
    });
  }
  return y;
}

Tensor gather_maxpool(const Tensor& table, const std::vector<std::vector<std::size_t>>& sets) {
  require_rank(table, 2, "gather_maxpool");
  const std::size_t n = table.dim(0), d = table.dim(1);
  std::vector<Real> out(sets.size() * d, 0.0);
  // winner holds the table row routed each output cell's gradient, or n if none
  std::vector<std::size_t> winner(sets.size() * d, n);
  const Real* tv = table.values().data();
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto& set = sets[s];
    Real* orow = out.data() + s * d;
    std::size_t* wrow = winner.data() + s * d;
    for (std::size_t pos = 0; pos < set.size(); ++pos) {
      const std::size_t r = set[pos];
      if (r >= n) {
        throw DimensionError("gather_maxpool: index " + std::to_string(r) + " out of range for " +
                             shape_string(table.shape()));
      }
      const Real* trow = tv + r * d;
      for (std::size_t j = 0; j < d; ++j) {
        if (pos == 0 || trow[j] > orow[j]) {
          orow[j] = trow[j];
          wrow[j] = r;
        }
      }
    }
  }
  const bool rec = recording({&table});
  Tensor y = make_result({sets.size(), d}, std::move(out), rec);
  if (rec) {
    active_tape()->record({table}, y, [table, winner = std::move(winner), n, d](const std::vector<Real>& g) {
      auto& gt = grad_of(table);
      for (std::size_t c = 0; c < winner.size(); ++c)
        if (winner[c] != n) gt[winner[c] * d + c % d] += g[c];
    });
  }
  return y;
}

Tensor scatter_edge_weights(const Tensor& weights, std::span<const std::size_t> heads,
                            std::span<const std::size_t> relations,
                            std::span<const std::size_t> tails, std::size_t rows,
                            std::size_t cols) {
  if (heads.size() != relations.size() || heads.size() != tails.size()) {
    throw DimensionError("scatter_edge_weights: edge arrays of unequal length");
  }
  std::vector<Real> out(rows * cols, 0.0);
  for (std::size_t e = 0; e < heads.size(); ++e) {
    if (heads[e] >= weights.size() || tails[e] >= rows || relations[e] >= cols) {
      throw DimensionError("scatter_edge_weights: edge " + std::to_string(e) + " out of range");
    }
    const Real w = weights[heads[e]];
    if (w == 0.0) continue;
    out[tails[e] * cols + relations[e]] += w;
  }
  check_finite(out, "scatter_edge_weights");
  const bool rec = recording({&weights});
  Tensor y = make_result({rows, cols}, std::move(out), rec);
  if (rec) {
    std::vector<std::size_t> h(heads.begin(), heads.end()), r(relations.begin(), relations.end()),
        t(tails.begin(), tails.end());
    active_tape()->record({weights}, y,
                          [weights, h = std::move(h), r = std::move(r), t = std::move(t),
                           cols](const std::vector<Real>& g) {
                            auto& gw = grad_of(weights);
                            for (std::size_t e = 0; e < h.size(); ++e)
                              gw[h[e]] += g[t[e] * cols + r[e]];
                          });
  }
  return y;
}

// --- gradient checking ----------------------------------------------------

Real finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, Real eps) {
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw ContractError("finite_diff_check input must require grad");
    x.zero_grad();
  }
  {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = f();
    }
    tape.backward(loss);
  }
  Real worst = 0.0;
  for (auto& x : inputs) {
    const auto analytic = x.grad();
    auto values = x.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = saved + eps;
      const Real plus = f().item();
      values[i] = saved - eps;
      const Real minus = f().item();
      values[i] = saved;
      const Real numeric = (plus - minus) / (2.0 * eps);
      const Real denom = std::max({std::abs(analytic[i]), std::abs(numeric), Real(1e-8)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    x.zero_grad();
  }
  return worst;
}

Real finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, Real eps) {
  Tensor p = Tensor::parameter(x.shape(), std::vector<Real>(x.values().begin(), x.values().end()));
  return finite_diff_check([&] { return f(p); }, {p}, eps);
}

}  // namespace nutrea

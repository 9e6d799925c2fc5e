#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "lcm/core/kernels.hpp"
#include "lcm/core/tape.hpp"

// Differentiable operators over Var. Matrices are row-major; a rank-1 tensor of
// length n reads as a single 1 x n row. Bias rows and row gathers are the only
// broadcasting forms.

namespace lcm {

namespace detail {

template <class T>
Tape<T>& tape_of(const Var<T>& v, const char* op) {
  if (v.tape() == nullptr) throw GraphError(std::string(op) + ": uninitialised variable");
  v.tape()->check_owned(v, op);
  return *v.tape();
}

template <class T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <class T, class F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  const T* src = x.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// tanh approximation of GELU
template <class T>
inline constexpr T kGeluC = static_cast<T>(0.79788456080286535588);  // sqrt(2/pi)
template <class T>
inline constexpr T kGeluA = static_cast<T>(0.044715);

template <class T>
Shape row_shape(std::size_t rows, std::size_t cols, bool keep_rank1) {
  return keep_rank1 ? Shape{cols} : Shape{rows, cols};
}

}  // namespace detail

/// Row reference into one of several source matrices (see gather_rows).
struct RowRef {
  std::uint32_t source = 0;
  std::uint32_t row = 0;
  friend bool operator==(const RowRef&, const RowRef&) = default;
};

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::tape_of(a, "add");
  detail::require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record("add", std::move(out), {a, b},
                     [ia, ib](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::tape_of(a, "sub");
  detail::require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record("sub", std::move(out), {a, b},
                     [ia, ib](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       t.accumulate(ia, g);
                       if (t.requires_grad(ib)) t.accumulate(ib, detail::map(g, [](T x) { return -x; }));
                     });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::tape_of(a, "mul");
  detail::require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record("mul", std::move(out), {a, b},
                     [ia, ib](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       if (t.requires_grad(ia)) {
                         Tensor<T> ga = g;
                         const auto& other = t.value(ib);
                         for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= other[i];
                         t.accumulate(ia, std::move(ga));
                       }
                       if (t.requires_grad(ib)) {
                         Tensor<T> gb = g;
                         const auto& other = t.value(ia);
                         for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= other[i];
                         t.accumulate(ib, std::move(gb));
                       }
                     });
}

/// s * a + c
template <class T>
Var<T> affine(const Var<T>& a, T s, T c) {
  auto& tape = detail::tape_of(a, "affine");
  Tensor<T> out = detail::map(a.value(), [s, c](T x) { return s * x + c; });
  const auto ia = a.id();
  return tape.record("affine", std::move(out), {a},
                     [ia, s](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       t.accumulate(ia, detail::map(g, [s](T x) { return s * x; }));
                     });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return affine(a, s, T{0});
}

template <class T>
Var<T> one_minus(const Var<T>& a) {
  return affine(a, T{-1}, T{1});
}

template <class T>
Var<T> square(const Var<T>& a) {
  auto& tape = detail::tape_of(a, "square");
  Tensor<T> out = detail::map(a.value(), [](T x) { return x * x; });
  const auto ia = a.id();
  return tape.record("square", std::move(out), {a},
                     [ia](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       const auto& av = t.value(ia);
                       Tensor<T> ga = g;
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= T{2} * av[i];
                       t.accumulate(ia, std::move(ga));
                     });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  auto& tape = detail::tape_of(a, "sigmoid");
  Tensor<T> out = detail::map(a.value(), [](T x) { return detail::stable_sigmoid(x); });
  const auto ia = a.id();
  return tape.record("sigmoid", std::move(out), {a},
                     [ia](Tape<T>& t, const Tensor<T>& g, std::size_t self) {
                       const auto& y = t.value(self);
                       Tensor<T> ga = g;
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i] * (T{1} - y[i]);
                       t.accumulate(ia, std::move(ga));
                     });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  auto& tape = detail::tape_of(a, "tanh");
  Tensor<T> out = detail::map(a.value(), [](T x) { return std::tanh(x); });
  const auto ia = a.id();
  return tape.record("tanh", std::move(out), {a},
                     [ia](Tape<T>& t, const Tensor<T>& g, std::size_t self) {
                       const auto& y = t.value(self);
                       Tensor<T> ga = g;
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= T{1} - y[i] * y[i];
                       t.accumulate(ia, std::move(ga));
                     });
}

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <class T>
Var<T> gelu(const Var<T>& a) {
  auto& tape = detail::tape_of(a, "gelu");
  Tensor<T> out = detail::map(a.value(), [](T x) {
    const T inner = detail::kGeluC<T> * (x + detail::kGeluA<T> * x * x * x);
    return T{0.5} * x * (T{1} + std::tanh(inner));
  });
  const auto ia = a.id();
  return tape.record("gelu", std::move(out), {a},
                     [ia](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       const auto& xv = t.value(ia);
                       Tensor<T> ga = g;
                       for (std::size_t i = 0; i < ga.size(); ++i) {
                         const T x = xv[i];
                         const T th = std::tanh(detail::kGeluC<T> * (x + detail::kGeluA<T> * x * x * x));
                         const T dinner = detail::kGeluC<T> * (T{1} + T{3} * detail::kGeluA<T> * x * x);
                         ga[i] *= T{0.5} * (T{1} + th) + T{0.5} * x * (T{1} - th * th) * dinner;
                       }
                       t.accumulate(ia, std::move(ga));
                     });
}

/// sqrt(max(x, 0)); the derivative is taken as 0 where the output is 0.
template <class T>
Var<T> safe_sqrt(const Var<T>& a) {
  auto& tape = detail::tape_of(a, "safe_sqrt");
  Tensor<T> out = detail::map(a.value(), [](T x) { return x > T{0} ? std::sqrt(x) : T{0}; });
  const auto ia = a.id();
  return tape.record("safe_sqrt", std::move(out), {a},
                     [ia](Tape<T>& t, const Tensor<T>& g, std::size_t self) {
                       const auto& y = t.value(self);
                       Tensor<T> ga = g;
                       for (std::size_t i = 0; i < ga.size(); ++i) {
                         ga[i] = y[i] > T{0} ? ga[i] * T{0.5} / y[i] : T{0};
                       }
                       t.accumulate(ia, std::move(ga));
                     });
}

// ------------------------------------------------------------------- algebra

/// a[m,k] x b[k,n]. A rank-1 `a` of length k yields a rank-1 result of length n.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::tape_of(a, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (bv.rank() != 2 || av.rank() > 2 || av.cols() != bv.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " x " +
                     to_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out(detail::row_shape<T>(m, n, av.rank() == 1));
  kernels::gemm(av.data(), bv.data(), out.data(), m, k, n, false);
  const auto ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(out), {a, b},
                     [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       const auto& av2 = t.value(ia);
                       const auto& bv2 = t.value(ib);
                       if (t.requires_grad(ia)) {
                         Tensor<T> ga(av2.shape());
                         const auto bt = kernels::transpose(bv2.data(), k, n);
                         kernels::gemm(g.data(), bt.data(), ga.data(), m, n, k, false);
                         t.accumulate(ia, std::move(ga));
                       }
                       if (t.requires_grad(ib)) {
                         Tensor<T> gb(bv2.shape());
                         const auto at = kernels::transpose(av2.data(), m, k);
                         kernels::gemm(at.data(), g.data(), gb.data(), k, m, n, false);
                         t.accumulate(ib, std::move(gb));
                       }
                     });
}

/// x[r,c] + bias[c] on every row.
template <class T>
Var<T> add_row(const Var<T>& x, const Var<T>& bias) {
  auto& tape = detail::tape_of(x, "add_row");
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_row: bias " + to_string(bv.shape()) + " does not match columns of " +
                     to_string(xv.shape()));
  }
  Tensor<T> out = xv;
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    T* dst = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += bv[c];
  }
  const auto ix = x.id(), ib = bias.id();
  return tape.record("add_row", std::move(out), {x, bias},
                     [ix, ib, rows, cols](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       t.accumulate(ix, g);
                       if (t.requires_grad(ib)) {
                         Tensor<T> gb(t.value(ib).shape());
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                         }
                         t.accumulate(ib, std::move(gb));
                       }
                     });
}

/// x * W + b
template <class T>
Var<T> dense(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias) {
  return add_row(matmul(x, kernel), bias);
}

/// Multiplies row r by the constant factors[r].
template <class T>
Var<T> scale_rows(const Var<T>& x, std::vector<T> factors) {
  auto& tape = detail::tape_of(x, "scale_rows");
  const auto& xv = x.value();
  if (factors.size() != xv.rows()) {
    throw ShapeError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                     std::to_string(xv.rows()) + " rows");
  }
  Tensor<T> out = xv;
  const std::size_t cols = xv.cols();
  for (std::size_t r = 0; r < factors.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= factors[r];
  }
  const auto ix = x.id();
  return tape.record("scale_rows", std::move(out), {x},
                     [ix, cols, f = std::move(factors)](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       Tensor<T> gx = g;
                       for (std::size_t r = 0; r < f.size(); ++r) {
                         for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] *= f[r];
                       }
                       t.accumulate(ix, std::move(gx));
                     });
}

// ------------------------------------------------------------- restructuring

/// Concatenation along the last axis. All inputs share their row count.
template <class T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  auto& tape = detail::tape_of(parts[0], "concat");
  const std::size_t rows = parts[0].value().rows();
  const bool rank1 = parts[0].value().rank() == 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (v.rows() != rows || (v.rank() == 1) != rank1) {
      throw ShapeError("concat: shape mismatch " + to_string(parts[0].shape()) + " vs " +
                       to_string(v.shape()));
    }
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor<T> out(detail::row_shape<T>(rows, total, rank1));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    }
    offset += widths[p];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return tape.record("concat", std::move(out), parts,
                     [ids, widths, rows, total](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < ids.size(); ++p) {
                         if (t.requires_grad(ids[p])) {
                           Tensor<T> gp(t.value(ids[p]).shape());
                           for (std::size_t r = 0; r < rows; ++r) {
                             std::copy_n(g.data() + r * total + off, widths[p], gp.data() + r * widths[p]);
                           }
                           t.accumulate(ids[p], std::move(gp));
                         }
                         off += widths[p];
                       }
                     });
}

template <class T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()));
}

/// Columns [begin, end) of the last axis.
template <class T>
Var<T> slice(const Var<T>& a, std::size_t begin, std::size_t end) {
  auto& tape = detail::tape_of(a, "slice");
  const auto& av = a.value();
  if (begin >= end || end > av.cols()) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for shape " + to_string(av.shape()));
  }
  const std::size_t rows = av.rows(), cols = av.cols(), width = end - begin;
  Tensor<T> out(detail::row_shape<T>(rows, width, av.rank() == 1));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * cols + begin, width, out.data() + r * width);
  }
  const auto ia = a.id();
  return tape.record("slice", std::move(out), {a},
                     [ia, rows, cols, begin, width](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       Tensor<T> ga(t.value(ia).shape());
                       for (std::size_t r = 0; r < rows; ++r) {
                         std::copy_n(g.data() + r * width, width, ga.data() + r * cols + begin);
                       }
                       t.accumulate(ia, std::move(ga));
                     });
}

/// Builds a [refs.size(), c] matrix whose row i is row refs[i].row of
/// sources[refs[i].source]. Rows may repeat; gradients scatter-add back.
template <class T>
Var<T> gather_rows(std::span<const Var<T>> sources, std::span<const RowRef> refs) {
  if (sources.empty() || refs.empty()) throw ShapeError("gather_rows: empty input");
  auto& tape = detail::tape_of(sources[0], "gather_rows");
  const std::size_t cols = sources[0].value().cols();
  for (const auto& s : sources) {
    if (s.value().cols() != cols) {
      throw ShapeError("gather_rows: column mismatch " + to_string(sources[0].shape()) + " vs " +
                       to_string(s.shape()));
    }
  }
  Tensor<T> out(Shape{refs.size(), cols});
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].source >= sources.size() || refs[i].row >= sources[refs[i].source].value().rows()) {
      throw ShapeError("gather_rows: row reference out of range");
    }
    const auto& src = sources[refs[i].source].value();
    std::copy_n(src.data() + refs[i].row * cols, cols, out.data() + i * cols);
  }
  std::vector<std::size_t> ids;
  for (const auto& s : sources) ids.push_back(s.id());
  return tape.record("gather_rows", std::move(out), sources,
                     [ids, cols, refs = std::vector<RowRef>(refs.begin(), refs.end())](
                         Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       std::vector<Tensor<T>> grads(ids.size());
                       for (std::size_t s = 0; s < ids.size(); ++s) {
                         if (t.requires_grad(ids[s])) grads[s] = Tensor<T>(t.value(ids[s]).shape());
                       }
                       for (std::size_t i = 0; i < refs.size(); ++i) {
                         auto& gs = grads[refs[i].source];
                         if (gs.empty()) continue;
                         T* dst = gs.data() + refs[i].row * cols;
                         const T* src = g.data() + i * cols;
                         for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                       }
                       for (std::size_t s = 0; s < ids.size(); ++s) {
                         if (!grads[s].empty()) t.accumulate(ids[s], std::move(grads[s]));
                       }
                     });
}

template <class T>
Var<T> gather_rows(const Var<T>& source, std::span<const std::size_t> rows) {
  std::vector<RowRef> refs;
  refs.reserve(rows.size());
  for (std::size_t r : rows) refs.push_back({0, static_cast<std::uint32_t>(r)});
  return gather_rows(std::span<const Var<T>>(&source, 1), std::span<const RowRef>(refs));
}

/// Stacks rows of several [r_i, c] matrices into one [sum r_i, c] matrix.
template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  std::vector<RowRef> refs;
  for (std::uint32_t p = 0; p < parts.size(); ++p) {
    const std::size_t rows = parts[p].value().rows();
    for (std::uint32_t r = 0; r < rows; ++r) refs.push_back({p, r});
  }
  return gather_rows(parts, std::span<const RowRef>(refs));
}

/// Copy of `base` whose rows `rows[i]` are replaced by row i of `values`.
template <class T>
Var<T> replace_rows(const Var<T>& base, std::span<const std::size_t> rows, const Var<T>& values) {
  auto& tape = detail::tape_of(base, "replace_rows");
  const auto& bv = base.value();
  const auto& vv = values.value();
  if (vv.cols() != bv.cols() || vv.rows() != rows.size()) {
    throw ShapeError("replace_rows: values " + to_string(vv.shape()) + " for " +
                     std::to_string(rows.size()) + " rows of " + to_string(bv.shape()));
  }
  const std::size_t cols = bv.cols();
  Tensor<T> out = bv;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= bv.rows()) throw ShapeError("replace_rows: row index out of range");
    std::copy_n(vv.data() + i * cols, cols, out.data() + rows[i] * cols);
  }
  const auto ib = base.id(), iv = values.id();
  return tape.record("replace_rows", std::move(out), {base, values},
                     [ib, iv, cols, idx = std::vector<std::size_t>(rows.begin(), rows.end())](
                         Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       if (t.requires_grad(iv)) {
                         Tensor<T> gv(t.value(iv).shape());
                         for (std::size_t i = 0; i < idx.size(); ++i) {
                           std::copy_n(g.data() + idx[i] * cols, cols, gv.data() + i * cols);
                         }
                         t.accumulate(iv, std::move(gv));
                       }
                       if (t.requires_grad(ib)) {
                         Tensor<T> gb = g;
                         for (std::size_t r : idx) std::fill_n(gb.data() + r * cols, cols, T{0});
                         t.accumulate(ib, std::move(gb));
                       }
                     });
}

/// Broadcasts a single row (rank 1 or [1, c]) into `count` rows.
template <class T>
Var<T> repeat_rows(const Var<T>& row, std::size_t count) {
  if (row.value().rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + to_string(row.shape()));
  std::vector<std::size_t> idx(count, 0);
  return gather_rows(row, std::span<const std::size_t>(idx));
}

// ---------------------------------------------------------------- reductions

/// Sum over an axis of a rank <= 2 tensor. Axis 0 of a matrix sums rows
/// (result: [cols]); the last axis sums columns (result: [rows]). Rank-1
/// inputs reduce to a scalar.
template <class T>
Var<T> sum(const Var<T>& a, std::size_t axis) {
  auto& tape = detail::tape_of(a, "sum");
  const auto& av = a.value();
  if (av.rank() > 2 || axis >= av.rank()) {
    throw ShapeError("sum: axis " + std::to_string(axis) + " invalid for shape " + to_string(av.shape()));
  }
  const std::size_t rows = av.rows(), cols = av.cols();
  const bool over_rows = av.rank() == 2 && axis == 0;
  Tensor<T> out = over_rows ? Tensor<T>(Shape{cols}) : Tensor<T>(Shape{av.rank() == 1 ? 1 : rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (over_rows) out[c] += av[r * cols + c];
      else out[r] += av[r * cols + c];
    }
  }
  const auto ia = a.id();
  return tape.record("sum", std::move(out), {a},
                     [ia, rows, cols, over_rows](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       Tensor<T> ga(t.value(ia).shape());
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] = over_rows ? g[c] : g[r];
                       }
                       t.accumulate(ia, std::move(ga));
                     });
}

template <class T>
Var<T> mean(const Var<T>& a, std::size_t axis) {
  const auto& av = a.value();
  const std::size_t count = (av.rank() == 2 && axis == 0) ? av.rows() : av.cols();
  return scale(sum(a, axis), T{1} / static_cast<T>(count));
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  auto& tape = detail::tape_of(a, "sum_all");
  T total{0};
  for (T v : a.value().values()) total += v;
  const auto ia = a.id();
  return tape.record("sum_all", Tensor<T>::scalar(total), {a},
                     [ia](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       t.accumulate(ia, Tensor<T>(t.value(ia).shape(), g[0]));
                     });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T{1} / static_cast<T>(a.value().size()));
}

/// Per-row sum of squares: [rows, c] -> [rows].
template <class T>
Var<T> row_sqnorm(const Var<T>& a) {
  return sum(square(a), a.value().rank() == 1 ? 0 : 1);
}

/// Scalar sum_i weights[i] * v[i] with constant weights.
template <class T>
Var<T> weighted_sum(const Var<T>& v, std::vector<T> weights) {
  auto& tape = detail::tape_of(v, "weighted_sum");
  const auto& vv = v.value();
  if (weights.size() != vv.size()) throw ShapeError("weighted_sum: weight count mismatch");
  T total{0};
  for (std::size_t i = 0; i < weights.size(); ++i) total += weights[i] * vv[i];
  const auto iv = v.id();
  return tape.record("weighted_sum", Tensor<T>::scalar(total), {v},
                     [iv, w = std::move(weights)](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       Tensor<T> gv(t.value(iv).shape());
                       for (std::size_t i = 0; i < w.size(); ++i) gv[i] = w[i] * g[0];
                       t.accumulate(iv, std::move(gv));
                     });
}

/// Segment-wise sum of rows: rows [offsets[s], offsets[s+1]) reduce to output
/// row s, left to right. Empty segments yield zero rows.
template <class T>
Var<T> segment_sum(const Var<T>& a, std::span<const std::size_t> offsets) {
  auto& tape = detail::tape_of(a, "segment_sum");
  const auto& av = a.value();
  if (offsets.size() < 2 || offsets.back() != av.rows()) {
    throw ShapeError("segment_sum: offsets do not cover the " + std::to_string(av.rows()) + " rows");
  }
  const std::size_t segments = offsets.size() - 1, cols = av.cols();
  Tensor<T> out(Shape{segments, cols});
  for (std::size_t s = 0; s < segments; ++s) {
    T* dst = out.data() + s * cols;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      const T* src = av.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  }
  const auto ia = a.id();
  return tape.record("segment_sum", std::move(out), {a},
                     [ia, cols, off = std::vector<std::size_t>(offsets.begin(), offsets.end())](
                         Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       Tensor<T> ga(t.value(ia).shape());
                       for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                         for (std::size_t r = off[s]; r < off[s + 1]; ++r) {
                           std::copy_n(g.data() + s * cols, cols, ga.data() + r * cols);
                         }
                       }
                       t.accumulate(ia, std::move(ga));
                     });
}

/// Segment-wise elementwise max. The gradient routes to the first row attaining
/// the maximum. Empty segments yield zero rows.
template <class T>
Var<T> segment_max(const Var<T>& a, std::span<const std::size_t> offsets) {
  auto& tape = detail::tape_of(a, "segment_max");
  const auto& av = a.value();
  if (offsets.size() < 2 || offsets.back() != av.rows()) {
    throw ShapeError("segment_max: offsets do not cover the " + std::to_string(av.rows()) + " rows");
  }
  const std::size_t segments = offsets.size() - 1, cols = av.cols();
  Tensor<T> out(Shape{segments, cols});
  std::vector<std::size_t> argmax(segments * cols, std::numeric_limits<std::size_t>::max());
  for (std::size_t s = 0; s < segments; ++s) {
    if (offsets[s] == offsets[s + 1]) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (av[r * cols + c] > av[best * cols + c]) best = r;
      }
      out[s * cols + c] = av[best * cols + c];
      argmax[s * cols + c] = best;
    }
  }
  const auto ia = a.id();
  return tape.record("segment_max", std::move(out), {a},
                     [ia, cols, arg = std::move(argmax)](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       Tensor<T> ga(t.value(ia).shape());
                       for (std::size_t i = 0; i < arg.size(); ++i) {
                         if (arg[i] == std::numeric_limits<std::size_t>::max()) continue;
                         ga[arg[i] * cols + i % cols] += g[i];
                       }
                       t.accumulate(ia, std::move(ga));
                     });
}

// -------------------------------------------------------------------- losses

/// Mean binary cross-entropy over all elements; probabilities are clamped to
/// [eps, 1 - eps] before the log.
template <class T>
Var<T> bce(const Var<T>& p, const Var<T>& target) {
  auto& tape = detail::tape_of(p, "bce");
  detail::require_same_shape("bce", p, target);
  constexpr T eps = std::is_same_v<T, float> ? T{1e-7} : T{1e-12};
  const auto& pv = p.value();
  const auto& yv = target.value();
  const T n = static_cast<T>(pv.size());
  T total{0};
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const T q = std::clamp(pv[i], eps, T{1} - eps);
    total -= yv[i] * std::log(q) + (T{1} - yv[i]) * std::log(T{1} - q);
  }
  const auto ip = p.id(), iy = target.id();
  return tape.record("bce", Tensor<T>::scalar(total / n), {p, target},
                     [ip, iy, n, eps](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       const auto& pv2 = t.value(ip);
                       const auto& yv2 = t.value(iy);
                       if (t.requires_grad(ip)) {
                         Tensor<T> gp(pv2.shape());
                         for (std::size_t i = 0; i < gp.size(); ++i) {
                           const T q = std::clamp(pv2[i], eps, T{1} - eps);
                           gp[i] = g[0] * (q - yv2[i]) / (q * (T{1} - q)) / n;
                         }
                         t.accumulate(ip, std::move(gp));
                       }
                       if (t.requires_grad(iy)) {
                         Tensor<T> gy(yv2.shape());
                         for (std::size_t i = 0; i < gy.size(); ++i) {
                           const T q = std::clamp(pv2[i], eps, T{1} - eps);
                           gy[i] = g[0] * (std::log(T{1} - q) - std::log(q)) / n;
                         }
                         t.accumulate(iy, std::move(gy));
                       }
                     });
}

/// Mean binary cross-entropy of sigmoid(logits), computed without forming the
/// probabilities: max(z,0) - z*y + log1p(exp(-|z|)).
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& target) {
  auto& tape = detail::tape_of(logits, "bce_with_logits");
  detail::require_same_shape("bce_with_logits", logits, target);
  const auto& zv = logits.value();
  const auto& yv = target.value();
  const T n = static_cast<T>(zv.size());
  T total{0};
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const T z = zv[i];
    total += std::max(z, T{0}) - z * yv[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const auto iz = logits.id(), iy = target.id();
  return tape.record("bce_with_logits", Tensor<T>::scalar(total / n), {logits, target},
                     [iz, iy, n](Tape<T>& t, const Tensor<T>& g, std::size_t) {
                       const auto& zv2 = t.value(iz);
                       const auto& yv2 = t.value(iy);
                       if (t.requires_grad(iz)) {
                         Tensor<T> gz(zv2.shape());
                         for (std::size_t i = 0; i < gz.size(); ++i) {
                           gz[i] = g[0] * (detail::stable_sigmoid(zv2[i]) - yv2[i]) / n;
                         }
                         t.accumulate(iz, std::move(gz));
                       }
                       if (t.requires_grad(iy)) {
                         Tensor<T> gy(yv2.shape());
                         for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = -g[0] * zv2[i] / n;
                         t.accumulate(iy, std::move(gy));
                       }
                     });
}

/// Mean squared error over all elements.
template <class T>
Var<T> mse(const Var<T>& prediction, const Var<T>& target) {
  detail::require_same_shape("mse", prediction, target);
  return mean_all(square(sub(prediction, target)));
}

// ----------------------------------------------------------------- operators

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, T s) { return scale(a, s); }

}  // namespace lcm

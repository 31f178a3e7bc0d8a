#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ben/diffmath/tape.hpp"

// Primitive differentiable ops over small dense tensors. Binary elementwise
// ops accept equal shapes, or one operand with a single element.

namespace ben::diff {

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw DomainError(std::string("non-finite value produced by ") + op);
}

inline Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("op on an unbound Var");
  return *a.tape();
}

inline Tape& tape_of(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("op on an unbound Var");
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

enum class Bcast { same, left_scalar, right_scalar };

inline Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (a.size() == b.size() && (a.rank() <= 1 && b.rank() <= 1)) return Bcast::same;
  if (a.size() == 1) return Bcast::left_scalar;
  if (b.size() == 1) return Bcast::right_scalar;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Shape out_shape(const Tensor& a, const Tensor& b, Bcast k) {
  if (k == Bcast::left_scalar) return b.shape();
  return a.shape();
}

inline Tensor reduce_to(const Tensor& g, const Tensor& like) {
  if (like.size() == g.size()) return Tensor(like.shape(), g.values());
  double s = 0.0;
  for (double v : g.values()) s += v;
  return Tensor(like.shape(), s);
}

// Elementwise binary op with derivative callbacks da(a,b), db(a,b).
template <class F, class DA, class DB>
Var binary(const char* name, const Var& x, const Var& y, F f, DA da, DB db) {
  Tape& tape = tape_of(x, y);
  const Tensor& a = x.value();
  const Tensor& b = y.value();
  const Bcast k = broadcast_kind(a, b, name);
  Tensor out(out_shape(a, b, k));
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ai = k == Bcast::left_scalar ? a[0] : a[i];
    const double bi = k == Bcast::right_scalar ? b[0] : b[i];
    out[i] = f(ai, bi);
  }
  check_finite(out, name);
  const int xi = x.id(), yi = y.id();
  return tape.record(std::move(out), {x, y}, [xi, yi, k, da, db](Tape& t, const Tensor& g) {
    const Tensor& a = t.value(xi);
    const Tensor& b = t.value(yi);
    const std::size_t n = g.size();
    Tensor ga(Shape{n}), gb(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
      const double ai = k == Bcast::left_scalar ? a[0] : a[i];
      const double bi = k == Bcast::right_scalar ? b[0] : b[i];
      ga[i] = g[i] * da(ai, bi);
      gb[i] = g[i] * db(ai, bi);
    }
    if (t.requires_grad(xi)) t.accumulate(xi, reduce_to(ga, a));
    if (t.requires_grad(yi)) t.accumulate(yi, reduce_to(gb, b));
  });
}

template <class F, class D>
Var unary(const char* name, const Var& x, F f, D d) {
  Tape& tape = tape_of(x);
  const Tensor& a = x.value();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  check_finite(out, name);
  const int xi = x.id();
  const int oi = static_cast<int>(tape.size());
  return tape.record(std::move(out), {x}, [xi, oi, d](Tape& t, const Tensor& g) {
    const Tensor& a = t.value(xi);
    const Tensor& y = t.value(oi);
    Tensor ga(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] = g[i] * d(a[i], y[i]);
    t.accumulate(xi, ga);
  });
}

inline double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline double softplus(double x) { return detail::softplus_value(x); }
/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

inline Var add(const Var& a, const Var& b) {
  return detail::binary("add", a, b, [](double x, double y) { return x + y; },
                        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}
inline Var sub(const Var& a, const Var& b) {
  return detail::binary("sub", a, b, [](double x, double y) { return x - y; },
                        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}
inline Var mul(const Var& a, const Var& b) {
  return detail::binary("mul", a, b, [](double x, double y) { return x * y; },
                        [](double, double y) { return y; }, [](double x, double) { return x; });
}
inline Var div(const Var& a, const Var& b) {
  for (double v : b.value().values())
    if (v == 0.0) throw DomainError("div: division by zero");
  return detail::binary("div", a, b, [](double x, double y) { return x / y; },
                        [](double, double y) { return 1.0 / y; },
                        [](double x, double y) { return -x / (y * y); });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

inline Var scale(const Var& x, double c) {
  return detail::unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}
inline Var shift(const Var& x, double c) {
  return detail::unary("shift", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}
inline Var neg(const Var& x) { return scale(x, -1.0); }
inline Var operator-(const Var& x) { return neg(x); }
inline Var operator*(double c, const Var& x) { return scale(x, c); }
inline Var operator*(const Var& x, double c) { return scale(x, c); }
inline Var operator+(const Var& x, double c) { return shift(x, c); }
inline Var operator-(const Var& x, double c) { return shift(x, -c); }

inline Var tanh(const Var& x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}
inline Var sigmoid(const Var& x) {
  return detail::unary("sigmoid", x, detail::sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}
inline Var relu(const Var& x) {
  return detail::unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}
inline Var exp(const Var& x) {
  return detail::unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}
inline Var log(const Var& x) {
  for (double v : x.value().values())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return detail::unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}
inline Var sqrt(const Var& x) {
  for (double v : x.value().values())
    if (!(v > 0.0)) throw DomainError("sqrt of non-positive value " + std::to_string(v));
  return detail::unary("sqrt", x, [](double v) { return std::sqrt(v); },
                       [](double, double y) { return 0.5 / y; });
}
// d|x|/dx at 0 is taken as 0.
inline Var abs(const Var& x) {
  return detail::unary("abs", x, [](double v) { return std::abs(v); },
                       [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}
inline Var square(const Var& x) {
  return detail::unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}
inline Var softplus(const Var& x) {
  return detail::unary("softplus", x, detail::softplus_value,
                       [](double v, double) { return detail::sigmoid_value(v); });
}

/// Sum of all elements, returned as a scalar.
inline Var sum(const Var& x) {
  Tape& tape = detail::tape_of(x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  Tensor out = Tensor::scalar(s);
  detail::check_finite(out, "sum");
  const int xi = x.id();
  return tape.record(std::move(out), {x}, [xi](Tape& t, const Tensor& g) {
    t.accumulate(xi, Tensor(t.value(xi).shape(), g[0]));
  });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Max over the last axis (vector -> scalar, matrix -> per-row). Gradient goes
/// to the first maximal entry.
inline Var max_over_axis(const Var& x) {
  Tape& tape = detail::tape_of(x);
  const Tensor& a = x.value();
  const std::size_t cols = a.rank() == 0 ? 1 : a.shape().back();
  const std::size_t rows = a.size() / cols;
  Tensor out = a.rank() <= 1 ? Tensor::scalar(0.0) : Tensor(Shape{rows});
  std::vector<std::size_t> arg(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (a[r * cols + c] > a[r * cols + best]) best = c;
    arg[r] = best;
    out[r] = a[r * cols + best];
  }
  const int xi = x.id();
  return tape.record(std::move(out), {x}, [xi, arg, cols](Tape& t, const Tensor& g) {
    Tensor ga(t.value(xi).shape(), 0.0);
    for (std::size_t r = 0; r < arg.size(); ++r) ga[r * cols + arg[r]] = g[r];
    t.accumulate(xi, ga);
  });
}

/// Index of the first maximal element of a vector.
inline std::size_t argmax(const Tensor& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Matrix product for (m,k)x(k,n), (m,k)x(k) and (k)x(k,n).
inline Var matmul(const Var& x, const Var& y) {
  Tape& tape = detail::tape_of(x, y);
  const Tensor& a = x.value();
  const Tensor& b = y.value();
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0 || (a_vec && b_vec))
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a_vec ? 1 : a.dim(0);
  const std::size_t k = a_vec ? a.dim(0) : a.dim(1);
  const std::size_t kb = b.dim(0);
  const std::size_t n = b_vec ? 1 : b.dim(1);
  if (k != kb) throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape os = a_vec ? Shape{n} : (b_vec ? Shape{m} : Shape{m, n});
  Tensor out(os, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * b[p * n + j];
    }
  detail::check_finite(out, "matmul");
  const int xi = x.id(), yi = y.id();
  return tape.record(std::move(out), {x, y}, [xi, yi, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& a = t.value(xi);
    const Tensor& b = t.value(yi);
    if (t.requires_grad(xi)) {
      Tensor ga(a.shape(), 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
          ga[i * k + p] = s;
        }
      t.accumulate(xi, ga);
    }
    if (t.requires_grad(yi)) {
      Tensor gb(b.shape(), 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      t.accumulate(yi, gb);
    }
  });
}

/// W x + b.
inline Var affine(const Var& w, const Var& x, const Var& b) { return add(matmul(w, x), b); }

/// Concatenates vectors (scalars count as length one).
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Tape& tape = detail::tape_of(parts.front());
  std::vector<double> vals;
  std::vector<std::pair<int, std::size_t>> spans;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat operands on different tapes");
    if (p.value().rank() > 1) throw ShapeError("concat expects vectors");
    spans.emplace_back(p.id(), p.size());
    const auto& v = p.value().values();
    vals.insert(vals.end(), v.begin(), v.end());
  }
  Tensor out = Tensor::vector(std::move(vals));
  return tape.record(std::move(out), parts, [spans](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& [id, len] : spans) {
      if (t.requires_grad(id)) {
        Tensor gi(t.value(id).shape());
        for (std::size_t i = 0; i < len; ++i) gi[i] = g[off + i];
        t.accumulate(id, gi);
      }
      off += len;
    }
  });
}

/// Elements [begin, end) of a vector.
inline Var slice(const Var& x, std::size_t begin, std::size_t end) {
  Tape& tape = detail::tape_of(x);
  const Tensor& a = x.value();
  if (a.rank() > 1 || begin > end || end > a.size())
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_str(a.shape()));
  std::vector<double> vals(a.values().begin() + static_cast<std::ptrdiff_t>(begin),
                           a.values().begin() + static_cast<std::ptrdiff_t>(end));
  const int xi = x.id();
  return tape.record(Tensor::vector(std::move(vals)), {x}, [xi, begin](Tape& t, const Tensor& g) {
    Tensor ga(t.value(xi).shape(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] = g[i];
    t.accumulate(xi, ga);
  });
}

/// Single element of a vector as a scalar.
inline Var index(const Var& x, std::size_t i) {
  Tape& tape = detail::tape_of(x);
  if (i >= x.size()) throw ShapeError("index " + std::to_string(i) + " out of range " + shape_str(x.shape()));
  const int xi = x.id();
  return tape.record(Tensor::scalar(x.value()[i]), {x}, [xi, i](Tape& t, const Tensor& g) {
    Tensor ga(t.value(xi).shape(), 0.0);
    ga[i] = g[0];
    t.accumulate(xi, ga);
  });
}

inline Var reshape(const Var& x, Shape s) {
  Tape& tape = detail::tape_of(x);
  Tensor out = x.value().reshaped(std::move(s));
  const int xi = x.id();
  return tape.record(std::move(out), {x}, [xi](Tape& t, const Tensor& g) {
    t.accumulate(xi, Tensor(t.value(xi).shape(), g.values()));
  });
}

/// Value copy with no gradient path.
inline Var stop_gradient(const Var& x) { return detail::tape_of(x).constant(x.value()); }

/// Strictly-lower part of a square matrix plus the identity.
inline Var unit_lower(const Var& x) {
  Tape& tape = detail::tape_of(x);
  const Tensor& a = x.value();
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw ShapeError("unit_lower expects a square matrix");
  const std::size_t n = a.dim(0);
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) out.at(i, j) = (i == j) ? 1.0 : a.at(i, j);
  const int xi = x.id();
  return tape.record(std::move(out), {x}, [xi, n](Tape& t, const Tensor& g) {
    Tensor ga(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) ga.at(i, j) = g.at(i, j);
    t.accumulate(xi, ga);
  });
}

/// Strictly-upper part of a square matrix plus diag(d).
inline Var upper_with_diag(const Var& x, const Var& d) {
  Tape& tape = detail::tape_of(x, d);
  const Tensor& a = x.value();
  const Tensor& dv = d.value();
  if (a.rank() != 2 || a.dim(0) != a.dim(1) || dv.size() != a.dim(0))
    throw ShapeError("upper_with_diag shape mismatch");
  const std::size_t n = a.dim(0);
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.at(i, i) = dv[i];
    for (std::size_t j = i + 1; j < n; ++j) out.at(i, j) = a.at(i, j);
  }
  const int xi = x.id(), di = d.id();
  return tape.record(std::move(out), {x, d}, [xi, di, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(xi)) {
      Tensor ga(Shape{n, n}, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) ga.at(i, j) = g.at(i, j);
      t.accumulate(xi, ga);
    }
    if (t.requires_grad(di)) {
      Tensor gd(t.value(di).shape());
      for (std::size_t i = 0; i < n; ++i) gd[i] = g.at(i, i);
      t.accumulate(di, gd);
    }
  });
}

/// Solves A x = y for triangular A (only the relevant triangle is read).
inline Var tri_solve(const Var& A, const Var& y, bool lower, bool unit_diag) {
  Tape& tape = detail::tape_of(A, y);
  const Tensor& a = A.value();
  const Tensor& b = y.value();
  if (a.rank() != 2 || a.dim(0) != a.dim(1) || b.size() != a.dim(0)) throw ShapeError("tri_solve shape mismatch");
  const std::size_t n = a.dim(0);
  auto solve = [n](const Tensor& m, const Tensor& rhs, bool low, bool unit, bool transposed) {
    // transposed: solve m^T x = rhs (m^T of lower is upper).
    Tensor x(Shape{n}, 0.0);
    const bool eff_lower = transposed ? !low : low;
    auto at = [&](std::size_t i, std::size_t j) { return transposed ? m.at(j, i) : m.at(i, j); };
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t i = eff_lower ? s : n - 1 - s;
      double acc = rhs[i];
      if (eff_lower)
        for (std::size_t j = 0; j < i; ++j) acc -= at(i, j) * x[j];
      else
        for (std::size_t j = i + 1; j < n; ++j) acc -= at(i, j) * x[j];
      const double diag = unit ? 1.0 : at(i, i);
      if (diag == 0.0) throw DomainError("tri_solve: singular triangular matrix");
      x[i] = acc / diag;
    }
    return x;
  };
  Tensor out = solve(a, b, lower, unit_diag, false);
  detail::check_finite(out, "tri_solve");
  const int ai = A.id(), yi = y.id();
  const int oi = static_cast<int>(tape.size());
  return tape.record(std::move(out), {A, y}, [ai, yi, oi, n, lower, unit_diag, solve](Tape& t, const Tensor& g) {
    const Tensor& a = t.value(ai);
    const Tensor& x = t.value(oi);
    Tensor gy = solve(a, g, lower, unit_diag, true);
    if (t.requires_grad(yi)) t.accumulate(yi, Tensor(t.value(yi).shape(), gy.values()));
    if (t.requires_grad(ai)) {
      Tensor ga(Shape{n, n}, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const bool in_tri = lower ? (j < i || (j == i && !unit_diag)) : (j > i || (j == i && !unit_diag));
          if (in_tri) ga.at(i, j) = -gy[i] * x[j];
        }
      t.accumulate(ai, ga);
    }
  });
}

/// Gathers vector elements by index (used for fixed permutations).
inline Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  Tape& tape = detail::tape_of(x);
  const Tensor& a = x.value();
  if (perm.size() != a.size()) throw ShapeError("permute: permutation length mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = a[perm[i]];
  const int xi = x.id();
  return tape.record(std::move(out), {x}, [xi, perm](Tape& t, const Tensor& g) {
    Tensor ga(t.value(xi).shape(), 0.0);
    for (std::size_t i = 0; i < perm.size(); ++i) ga[perm[i]] += g[i];
    t.accumulate(xi, ga);
  });
}

}  // namespace ben::diff

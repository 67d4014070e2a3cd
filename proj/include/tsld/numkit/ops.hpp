#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tsld/numkit/tape.hpp"

namespace tsld {

namespace detail {

inline void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ContractError("operands live on different tapes");
  }
}

inline void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shapes " + a.value().shape_string() + " and " +
                     b.value().shape_string() + " differ");
  }
}

inline void require_vector(const char* op, Var a) {
  if (!a.value().is_vector()) {
    throw ShapeError(std::string(op) + ": expected a vector, got " + a.value().shape_string());
  }
}

template <class F, class G>
Var unary(Var a, F f, G df_from_xy) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape->record(std::move(y), [a = a.id, df_from_xy](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(self);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df_from_xy(x[i], y[i]);
  });
}

}  // namespace detail

/// W x for a matrix W and vector x.
inline Var matvec(Var W, Var x) {
  detail::require_same_tape(W, x);
  const Tensor& w = W.value();
  const Tensor& v = x.value();
  if (!w.is_matrix() || !v.is_vector() || w.cols() != v.size()) {
    throw ShapeError("matvec: cannot multiply " + w.shape_string() + " by " + v.shape_string());
  }
  const std::size_t m = w.rows(), n = w.cols();
  Tensor y({m});
  const double* wd = w.values().data();
  const double* xd = v.values().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = wd + r * n;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * xd[c];
    y[r] = acc;
  }
  return W.tape->record(std::move(y), [W = W.id, x = x.id, m, n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const double* wd = t.value(W).values().data();
    const double* xd = t.value(x).values().data();
    {
      auto& gw = t.grad_buffer(W);
      for (std::size_t r = 0; r < m; ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        double* row = gw.data() + r * n;
        for (std::size_t c = 0; c < n; ++c) row[c] += gr * xd[c];
      }
    }
    auto& gx = t.grad_buffer(x);
    for (std::size_t r = 0; r < m; ++r) {
      const double gr = g[r];
      if (gr == 0.0) continue;
      const double* row = wd + r * n;
      for (std::size_t c = 0; c < n; ++c) gx[c] += gr * row[c];
    }
  });
}

/// W^T a for a matrix W and vector a.
inline Var matvec_t(Var W, Var a) {
  detail::require_same_tape(W, a);
  const Tensor& w = W.value();
  const Tensor& v = a.value();
  if (!w.is_matrix() || !v.is_vector() || w.rows() != v.size()) {
    throw ShapeError("matvec_t: cannot multiply transpose of " + w.shape_string() + " by " +
                     v.shape_string());
  }
  const std::size_t m = w.rows(), n = w.cols();
  Tensor y({n});
  for (std::size_t r = 0; r < m; ++r) {
    const double ar = v[r];
    for (std::size_t c = 0; c < n; ++c) y[c] += ar * w(r, c);
  }
  return W.tape->record(std::move(y), [W = W.id, a = a.id, m, n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const Tensor& w = t.value(W);
    const Tensor& av = t.value(a);
    {
      auto& gw = t.grad_buffer(W);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gw[r * n + c] += av[r] * g[c];
      }
    }
    auto& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < m; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += w(r, c) * g[c];
      ga[r] += acc;
    }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return a.tape->record(std::move(out), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape("sub", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return a.tape->record(std::move(out), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return a.tape->record(std::move(out), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    auto& gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
  });
}

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var shift(Var a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var affine(Var W, Var x, Var b) { return add(matvec(W, x), b); }

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
  return detail::unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}

/// Clamp into [lo, hi]; the gradient is zero where the clamp is active.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                       [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

/// max(a, floor) elementwise; the gradient is zero where the floor is active.
inline Var maximum(Var a, double floor) {
  return detail::unary(a, [floor](double x) { return std::max(x, floor); },
                       [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::size_t n = 0;
  for (Var p : parts) {
    detail::require_same_tape(parts[0], p);
    detail::require_vector("concat", p);
    n += p.size();
  }
  Tensor out({n});
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  std::size_t off = 0;
  for (Var p : parts) {
    const auto v = p.value().values();
    std::copy(v.begin(), v.end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
    ids.push_back(p.id);
  }
  return parts[0].tape->record(std::move(out), [ids = std::move(ids)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      auto& gp = t.grad_buffer(id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  });
}

inline Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

inline Var slice(Var a, std::size_t offset, std::size_t length) {
  detail::require_vector("slice", a);
  if (offset + length > a.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of range for length " + std::to_string(a.size()));
  }
  const auto v = a.value().values();
  Tensor out({length}, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(offset),
                                           v.begin() + static_cast<std::ptrdiff_t>(offset + length)));
  return a.tape->record(std::move(out), [a = a.id, offset](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->record(Tensor::scalar(s), [a = a.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    auto& ga = t.grad_buffer(a);
    for (double& v : ga) v += g;
  });
}

inline Var dot(Var a, Var b) {
  detail::require_same_shape("dot", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return a.tape->record(Tensor::scalar(s), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * y[i];
    auto& gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * x[i];
  });
}

inline Var sq_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return a.tape->record(Tensor::scalar(s), [a = a.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& x = t.value(a);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * x[i];
  });
}

/// Sum of same-shaped operands.
inline Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("add_n: no operands");
  Tensor out(terms[0].value().shape());
  std::vector<std::size_t> ids;
  ids.reserve(terms.size());
  for (Var v : terms) {
    detail::require_same_shape("add_n", terms[0], v);
    const auto x = v.value().values();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += x[i];
    ids.push_back(v.id);
  }
  return terms[0].tape->record(std::move(out), [ids = std::move(ids)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t id : ids) {
      auto& gi = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

inline Var softmax(Var a) {
  detail::require_vector("softmax", a);
  const Tensor& x = a.value();
  double mx = x[0];
  for (double v : x.values()) mx = std::max(mx, v);
  Tensor y(x.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (double& v : y.values()) v /= z;
  return a.tape->record(std::move(y), [a = a.id](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const Tensor& y = t.value(self);
    double gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - gy);
  });
}

/// Stack equal-length vectors as the rows of a matrix.
inline Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no operands");
  const std::size_t n = rows[0].size();
  std::vector<double> data;
  data.reserve(rows.size() * n);
  std::vector<std::size_t> ids;
  for (Var r : rows) {
    detail::require_same_shape("stack_rows", rows[0], r);
    detail::require_vector("stack_rows", r);
    const auto v = r.value().values();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(r.id);
  }
  return rows[0].tape->record(Tensor::matrix(rows.size(), n, std::move(data)),
                              [ids = std::move(ids), n](Tape& t, std::size_t self) {
                                const auto& g = t.grad(self);
                                for (std::size_t r = 0; r < ids.size(); ++r) {
                                  auto& gr = t.grad_buffer(ids[r]);
                                  for (std::size_t c = 0; c < n; ++c) gr[c] += g[r * n + c];
                                }
                              });
}

/// Sum over coordinates of log N(x; mean, exp(logstd)^2), diagonal covariance.
inline Var gaussian_log_density(Var x, Var mean, Var logstd) {
  detail::require_same_shape("gaussian_log_density", x, mean);
  detail::require_same_shape("gaussian_log_density", x, logstd);
  constexpr double half_log_2pi = 0.91893853320467274178;
  const Tensor& xv = x.value();
  const Tensor& mv = mean.value();
  const Tensor& sv = logstd.value();
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double u = (xv[i] - mv[i]) * std::exp(-sv[i]);
    s += -half_log_2pi - sv[i] - 0.5 * u * u;
  }
  return x.tape->record(
      Tensor::scalar(s), [x = x.id, m = mean.id, ls = logstd.id](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const Tensor& xv = t.value(x);
        const Tensor& mv = t.value(m);
        const Tensor& sv = t.value(ls);
        const std::size_t n = xv.size();
        std::vector<double> dmean(n), dls(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double inv_var = std::exp(-2.0 * sv[i]);
          const double r = xv[i] - mv[i];
          dmean[i] = r * inv_var;
          dls[i] = -1.0 + r * r * inv_var;
        }
        {
          auto& gx = t.grad_buffer(x);
          for (std::size_t i = 0; i < n; ++i) gx[i] -= g * dmean[i];
        }
        {
          auto& gm = t.grad_buffer(m);
          for (std::size_t i = 0; i < n; ++i) gm[i] += g * dmean[i];
        }
        auto& gs = t.grad_buffer(ls);
        for (std::size_t i = 0; i < n; ++i) gs[i] += g * dls[i];
      });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace tsld

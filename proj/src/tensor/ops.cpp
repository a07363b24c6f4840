#include "gnasforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gnasforge/kernels.hpp"

namespace gnasforge::ops {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require_matrix(const char* prim, const Tensor& t) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(prim) + ": expected a rank-2 tensor, got shape " +
                                shape_string(t.shape()));
  }
}

[[noreturn]] void shape_error(const char* prim, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(prim) + ": incompatible shapes " +
                              shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

Tensor transpose(const Tensor& t) {
  const std::size_t r = t.rows(), c = t.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = t(i, j);
  return out;
}

std::size_t broadcast_dim(const char* prim, const Tensor& a, const Tensor& b, std::size_t da,
                          std::size_t db) {
  if (da == db) return da;
  if (da == 1) return db;
  if (db == 1) return da;
  shape_error(prim, a, b);
}

Tensor expand(const Tensor& t, std::size_t rows, std::size_t cols) {
  const std::size_t tr = t.rows(), tc = t.cols();
  if (tr == rows && tc == cols) return t;
  Tensor out = Tensor::matrix(rows, cols);
  const double* src = t.data().data();
  double* dst = out.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = src + (tr == 1 ? 0 : i * tc);
    double* o = dst + i * cols;
    if (tc == 1)
      std::fill(o, o + cols, row[0]);
    else
      std::copy(row, row + cols, o);
  }
  return out;
}

// Sums a broadcast gradient back down to `target`'s shape.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target, 0.0);
  const bool row_b = target[0] == 1, col_b = target[1] == 1;
  const std::size_t rows = g.rows(), cols = g.cols(), oc = out.cols();
  const double* src = g.data().data();
  double* dst = out.data().data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst[(row_b ? 0 : i) * oc + (col_b ? 0 : j)] += src[i * cols + j];
  return out;
}

using KernelFn = void (*)(std::size_t, const double*, const double*, double*);

Tensor apply_binary(KernelFn fn, const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  fn(a.numel(), a.data().data(), b.data().data(), out.data().data());
  return out;
}

struct Operands {
  Tensor a, b;  // expanded to the output shape
  std::size_t rows, cols;
};

Operands broadcast(const char* prim, Var va, Var vb) {
  const Tensor& a = va.value();
  const Tensor& b = vb.value();
  require_matrix(prim, a);
  require_matrix(prim, b);
  const std::size_t rows = broadcast_dim(prim, a, b, a.rows(), b.rows());
  const std::size_t cols = broadcast_dim(prim, a, b, a.cols(), b.cols());
  return {expand(a, rows, cols), expand(b, rows, cols), rows, cols};
}

template <typename Derivative>
Var unary(const char* prim, Var a, Tensor out, Derivative df) {
  require_matrix(prim, a.value());
  const std::size_t ia = a.id();
  Tape& tape = *a.tape();
  const std::size_t io = tape.size();
  return tape.record(prim, std::move(out), {a}, [ia, io, df](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(io);
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) gx[i] = g[i] * df(x[i], y[i]);
    t.accumulate(ia, gx);
  });
}

template <typename Fn>
Tensor map(const Tensor& x, Fn f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_segments(const char* prim, const Tensor& values, std::span<const std::size_t> segment,
                    std::size_t num_segments) {
  require_matrix(prim, values);
  if (segment.size() != values.rows()) {
    throw std::invalid_argument(std::string(prim) + ": " + std::to_string(segment.size()) +
                                " segment ids for values of shape " +
                                shape_string(values.shape()));
  }
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] >= num_segments) {
      throw std::out_of_range(std::string(prim) + ": segment id " + std::to_string(segment[r]) +
                              " at row " + std::to_string(r) + " exceeds " +
                              std::to_string(num_segments) + " segments");
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix("matmul", x);
  require_matrix("matmul", y);
  if (x.cols() != y.rows()) shape_error("matmul", x, y);
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out = Tensor::matrix(m, n);
  K().gemm_acc(m, n, k, x.data().data(), y.data().data(), out.data().data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(out), {a, b},
                          [ia, ib, m, n, k](Tape& t, const Tensor& g) {
                            if (t.requires_grad(ia)) {
                              const Tensor bt = transpose(t.value(ib));
                              Tensor& ga = t.grad_buffer(ia);
                              K().gemm_acc(m, k, n, g.data().data(), bt.data().data(),
                                           ga.data().data());
                            }
                            if (t.requires_grad(ib)) {
                              const Tensor at = transpose(t.value(ia));
                              Tensor& gb = t.grad_buffer(ib);
                              K().gemm_acc(k, n, m, at.data().data(), g.data().data(),
                                           gb.data().data());
                            }
                          });
}

Var add(Var a, Var b) {
  Operands op = broadcast("add", a, b);
  Tensor out = apply_binary(K().add, op.a, op.b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, reduce_to(g, t.value(ia).shape()));
    if (t.requires_grad(ib)) t.accumulate(ib, reduce_to(g, t.value(ib).shape()));
  });
}

Var sub(Var a, Var b) {
  Operands op = broadcast("sub", a, b);
  Tensor out = apply_binary(K().sub, op.a, op.b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, reduce_to(g, t.value(ia).shape()));
    if (t.requires_grad(ib)) {
      Tensor neg(g.shape());
      K().scale(g.numel(), -1.0, g.data().data(), neg.data().data());
      t.accumulate(ib, reduce_to(neg, t.value(ib).shape()));
    }
  });
}

Var mul(Var a, Var b) {
  Operands op = broadcast("mul", a, b);
  Tensor out = apply_binary(K().mul, op.a, op.b);
  const std::size_t ia = a.id(), ib = b.id(), rows = op.rows, cols = op.cols;
  return a.tape()->record(
      "mul", std::move(out), {a, b}, [ia, ib, rows, cols](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
          const Tensor other = expand(t.value(ib), rows, cols);
          t.accumulate(ia, reduce_to(apply_binary(K().mul, g, other), t.value(ia).shape()));
        }
        if (t.requires_grad(ib)) {
          const Tensor other = expand(t.value(ia), rows, cols);
          t.accumulate(ib, reduce_to(apply_binary(K().mul, g, other), t.value(ib).shape()));
        }
      });
}

Var div(Var a, Var b) {
  Operands op = broadcast("div", a, b);
  Tensor out = apply_binary(K().div, op.a, op.b);
  const std::size_t ia = a.id(), ib = b.id(), rows = op.rows, cols = op.cols;
  const std::size_t io = a.tape()->size();
  return a.tape()->record(
      "div", std::move(out), {a, b}, [ia, ib, io, rows, cols](Tape& t, const Tensor& g) {
        const Tensor denom = expand(t.value(ib), rows, cols);
        const Tensor ga = apply_binary(K().div, g, denom);
        if (t.requires_grad(ia)) t.accumulate(ia, reduce_to(ga, t.value(ia).shape()));
        if (t.requires_grad(ib)) {
          // d(a/b)/db = -(a/b)/b
          Tensor gb = apply_binary(K().mul, ga, t.value(io));
          K().scale(gb.numel(), -1.0, gb.data().data(), gb.data().data());
          t.accumulate(ib, reduce_to(gb, t.value(ib).shape()));
        }
      });
}

Var scale(Var a, double factor) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  K().scale(x.numel(), factor, x.data().data(), out.data().data());
  const std::size_t ia = a.id();
  return a.tape()->record("scale", std::move(out), {a}, [ia, factor](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    K().axpy(g.numel(), factor, g.data().data(), ga.data().data());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_matrix("concat_cols", p.value());
    if (p.value().rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.value().cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(&v.data()[i * v.cols()], v.cols(), &out.data()[i * cols + off]);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return parts.front().tape()->record(
      "concat_cols", std::move(out), parts, [ids, offsets, rows, cols](Tape& t, const Tensor& g) {
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!t.requires_grad(ids[p])) continue;
          Tensor& gp = t.grad_buffer(ids[p]);
          const std::size_t w = gp.cols();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j) gp(i, j) += g.data()[i * cols + offsets[p] + j];
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix("slice_cols", x);
  if (begin > end || end > x.cols()) {
    throw std::out_of_range("slice_cols: range [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") outside shape " + shape_string(x.shape()));
  }
  const std::size_t rows = x.rows(), w = end - begin;
  Tensor out = Tensor::matrix(rows, w);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = x(i, begin + j);
  const std::size_t ia = a.id();
  return a.tape()->record("slice_cols", std::move(out), {a},
                          [ia, begin, rows, w](Tape& t, const Tensor& g) {
                            Tensor& ga = t.grad_buffer(ia);
                            for (std::size_t i = 0; i < rows; ++i)
                              for (std::size_t j = 0; j < w; ++j) ga(i, begin + j) += g(i, j);
                          });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix("softmax_rows", x);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) z += (out(i, j) = std::exp(x(i, j) - mx));
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= z;
  }
  const std::size_t ia = a.id(), io = a.tape()->size();
  return a.tape()->record("softmax_rows", std::move(out), {a}, [ia, io](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(io);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix("log_softmax_rows", x);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(x(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) - lse;
  }
  const std::size_t ia = a.id(), io = a.tape()->size();
  return a.tape()->record("log_softmax_rows", std::move(out), {a},
                          [ia, io](Tape& t, const Tensor& g) {
                            const Tensor& y = t.value(io);
                            Tensor& ga = t.grad_buffer(ia);
                            for (std::size_t i = 0; i < y.rows(); ++i) {
                              double gsum = 0.0;
                              for (std::size_t j = 0; j < y.cols(); ++j) gsum += g(i, j);
                              for (std::size_t j = 0; j < y.cols(); ++j)
                                ga(i, j) += g(i, j) - std::exp(y(i, j)) * gsum;
                            }
                          });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
  }
  return unary("log", a, map(a.value(), [](double v) { return std::log(v); }),
               [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary("exp", a, map(a.value(), [](double v) { return std::exp(v); }),
               [](double, double y) { return y; });
}

Var tanh(Var a) {
  return unary("tanh", a, map(a.value(), [](double v) { return std::tanh(v); }),
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, map(a.value(), stable_sigmoid),
               [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(Var a, double slope) {
  return unary("leaky_relu", a, map(a.value(), [slope](double v) { return v > 0 ? v : slope * v; }),
               [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var relu(Var a) {
  return unary("relu", a, map(a.value(), [](double v) { return v > 0 ? v : 0.0; }),
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var relu6(Var a) {
  return unary("relu6", a, map(a.value(), [](double v) { return std::min(std::max(v, 0.0), 6.0); }),
               [](double x, double) { return (x > 0 && x < 6) ? 1.0 : 0.0; });
}

Var elu(Var a) {
  return unary("elu", a, map(a.value(), [](double v) { return v > 0 ? v : std::expm1(v); }),
               [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var softplus(Var a) {
  return unary("softplus", a,
               map(a.value(),
                   [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }),
               [](double x, double) { return stable_sigmoid(x); });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  const Tensor& x = a.value();
  require_matrix("gather_rows", x);
  const std::size_t cols = x.cols();
  Tensor out = Tensor::matrix(index.size(), cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(index[r]) + " at position " +
                              std::to_string(r) + " out of range for shape " +
                              shape_string(x.shape()));
    }
    std::copy_n(&x.data()[index[r] * cols], cols, &out.data()[r * cols]);
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.tape()->record("gather_rows", std::move(out), {a},
                          [ia, idx = std::move(idx), cols](Tape& t, const Tensor& g) {
                            Tensor& ga = t.grad_buffer(ia);
                            for (std::size_t r = 0; r < idx.size(); ++r)
                              K().axpy(cols, 1.0, &g.data()[r * cols], &ga.data()[idx[r] * cols]);
                          });
}

Var segment_sum(Var values, std::span<const std::size_t> segment, std::size_t num_segments) {
  const Tensor& x = values.value();
  check_segments("segment_sum", x, segment, num_segments);
  const std::size_t cols = x.cols();
  Tensor out = Tensor::matrix(num_segments, cols);
  for (std::size_t r = 0; r < segment.size(); ++r)
    K().axpy(cols, 1.0, &x.data()[r * cols], &out.data()[segment[r] * cols]);
  const std::size_t ia = values.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return values.tape()->record("segment_sum", std::move(out), {values},
                               [ia, seg = std::move(seg), cols](Tape& t, const Tensor& g) {
                                 Tensor& ga = t.grad_buffer(ia);
                                 for (std::size_t r = 0; r < seg.size(); ++r)
                                   K().axpy(cols, 1.0, &g.data()[seg[r] * cols],
                                            &ga.data()[r * cols]);
                               });
}

Var segment_mean(Var values, std::span<const std::size_t> segment, std::size_t num_segments) {
  const Tensor& x = values.value();
  check_segments("segment_mean", x, segment, num_segments);
  const std::size_t cols = x.cols();
  std::vector<double> inv_count(num_segments, 0.0);
  for (std::size_t s : segment) inv_count[s] += 1.0;
  for (double& c : inv_count) c = c > 0 ? 1.0 / c : 0.0;
  Tensor out = Tensor::matrix(num_segments, cols);
  for (std::size_t r = 0; r < segment.size(); ++r)
    K().axpy(cols, 1.0, &x.data()[r * cols], &out.data()[segment[r] * cols]);
  for (std::size_t s = 0; s < num_segments; ++s)
    K().scale(cols, inv_count[s], &out.data()[s * cols], &out.data()[s * cols]);
  const std::size_t ia = values.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return values.tape()->record(
      "segment_mean", std::move(out), {values},
      [ia, seg = std::move(seg), inv_count = std::move(inv_count), cols](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < seg.size(); ++r)
          K().axpy(cols, inv_count[seg[r]], &g.data()[seg[r] * cols], &ga.data()[r * cols]);
      });
}

Var segment_max(Var values, std::span<const std::size_t> segment, std::size_t num_segments) {
  const Tensor& x = values.value();
  check_segments("segment_max", x, segment, num_segments);
  const std::size_t cols = x.cols();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> winner(num_segments * cols, kNone);
  Tensor out = Tensor::matrix(num_segments, cols);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const std::size_t s = segment[r];
    for (std::size_t j = 0; j < cols; ++j) {
      std::size_t& w = winner[s * cols + j];
      if (w == kNone || x(r, j) > x(w, j)) w = r;
    }
  }
  for (std::size_t k = 0; k < winner.size(); ++k)
    if (winner[k] != kNone) out.data()[k] = x(winner[k], k % cols);
  const std::size_t ia = values.id();
  return values.tape()->record("segment_max", std::move(out), {values},
                               [ia, winner = std::move(winner), cols](Tape& t, const Tensor& g) {
                                 Tensor& ga = t.grad_buffer(ia);
                                 for (std::size_t k = 0; k < winner.size(); ++k)
                                   if (winner[k] != kNone) ga(winner[k], k % cols) += g.data()[k];
                               });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (double& v : ga.data()) v += g[0];
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  const std::size_t ia = a.id();
  return a.tape()->record("mean", Tensor::scalar(s * inv), {a}, [ia, inv](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (double& v : ga.data()) v += g[0] * inv;
  });
}

Var row_sum(Var a) {
  const Tensor& x = a.value();
  require_matrix("row_sum", x);
  Tensor out = Tensor::matrix(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j);
    out(i, 0) = s;
  }
  const std::size_t ia = a.id();
  return a.tape()->record("row_sum", std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
  });
}

Var broadcast_rows(Var row, std::size_t rows) {
  const Tensor& x = row.value();
  require_matrix("broadcast_rows", x);
  if (x.rows() != 1) {
    throw std::invalid_argument("broadcast_rows: expected a [1,n] row, got shape " +
                                shape_string(x.shape()));
  }
  Tensor out = expand(x, rows, x.cols());
  const std::size_t ia = row.id();
  return row.tape()->record("broadcast_rows", std::move(out), {row},
                            [ia](Tape& t, const Tensor& g) {
                              t.accumulate(ia, reduce_to(g, t.value(ia).shape()));
                            });
}

Var detach(Var a) { return a.tape()->constant(a.value()); }

}  // namespace gnasforge::ops

#include "simsr/ad/ops.hpp"

#include "simsr/ad/trig.hpp"
#include "simsr/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace simsr::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || a.tape() != b.tape()) throw Error(Errc::invalid_argument, "operands live on different tapes");
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": " + shape_string(a.shape()) + " vs " +
                                          shape_string(b.shape()));
  }
}

void require_rank2(const Var& x, const char* op) {
  if (x.value().rank() != 2) {
    throw Error(Errc::shape_mismatch, std::string(op) + " expects a rank-2 tensor, got " + shape_string(x.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                          shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  const auto& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return x.tape()->record(std::move(out), {xid}, [xid, df](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xid);
    if (!gx) return;
    const auto& g = t.incoming(self);
    const auto& xin = t.value(xid);
    const auto& y = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * df(xin[i], y[i]);
  });
}

void accumulate(Tensor* target, const Tensor& g, double factor = 1.0) {
  if (!target) return;
  for (std::size_t i = 0; i < g.size(); ++i) (*target)[i] += factor * g[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    accumulate(t.grad_target(ai), g);
    accumulate(t.grad_target(bi), g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    accumulate(t.grad_target(ai), g);
    accumulate(t.grad_target(bi), g, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    if (Tensor* ga = t.grad_target(ai)) {
      const auto& bv = t.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = t.grad_target(bi)) {
      const auto& av = t.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(out), {ai}, [ai, c](Tape& t, std::size_t self) {
    accumulate(t.grad_target(ai), t.incoming(self), c);
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += c;
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(out), {ai}, [ai](Tape& t, std::size_t self) {
    accumulate(t.grad_target(ai), t.incoming(self));
  });
}

Var add_bias(const Var& x, const Var& b) {
  Tape& t = same_tape(x, b);
  require_rank2(x, "add_bias");
  const std::size_t rows = x.value().rows(), cols = x.value().cols();
  if (b.value().size() != cols) {
    throw Error(Errc::shape_mismatch, "add_bias: bias " + shape_string(b.shape()) + " for " + shape_string(x.shape()));
  }
  Tensor out = x.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  const std::size_t xi = x.id(), bi = b.id();
  return t.record(std::move(out), {xi, bi}, [xi, bi, rows, cols](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    accumulate(t.grad_target(xi), g);
    if (Tensor* gb = t.grad_target(bi)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += g[r * cols + c];
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Tape& t = same_tape(x, w);
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t m = x.value().rows(), k = x.value().cols(), n = w.value().cols();
  if (w.value().rows() != k || b.value().size() != n || b.tape() != &t) {
    throw Error(Errc::shape_mismatch, "linear: " + shape_string(x.shape()) + " x " + shape_string(w.shape()) + " + " +
                                          shape_string(b.shape()));
  }
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  Tensor out({m, n});
  MapMat o(out.data(), M, N);
  o.noalias() = ConstMapMat(x.value().data(), M, K) * ConstMapMat(w.value().data(), K, N);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), N);
  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return t.record(std::move(out), {xi, wi, bi}, [xi, wi, bi, M, K, N](Tape& t, std::size_t self) {
    ConstMapMat g(t.incoming(self).data(), M, N);
    if (Tensor* gx = t.grad_target(xi))
      MapMat(gx->data(), M, K).noalias() += g * ConstMapMat(t.value(wi).data(), K, N).transpose();
    if (Tensor* gw = t.grad_target(wi))
      MapMat(gw->data(), K, N).noalias() += ConstMapMat(t.value(xi).data(), M, K).transpose() * g;
    if (Tensor* gb = t.grad_target(bi)) Eigen::Map<Eigen::RowVectorXd>(gb->data(), N) += g.colwise().sum();
  });
}

Var sine(const Var& x, double omega) {
  const auto& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fast_sin(omega * xv[i]);
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, omega](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    const auto& xin = t.value(xi);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * omega * fast_cos(omega * xin[i]);
  });
}

Var broadcast_rows(const Var& v, std::size_t rows) {
  const auto& vv = v.value();
  const std::size_t cols = vv.size();
  if (!(vv.rank() == 1 || (vv.rank() == 2 && vv.dim(0) == 1))) {
    throw Error(Errc::shape_mismatch, "broadcast_rows expects [C] or [1, C], got " + shape_string(vv.shape()));
  }
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) std::copy(vv.data(), vv.data() + cols, out.data() + r * cols);
  const std::size_t vi = v.id();
  return v.tape()->record(std::move(out), {vi}, [vi, rows, cols](Tape& t, std::size_t self) {
    Tensor* gv = t.grad_target(vi);
    if (!gv) return;
    const auto& g = t.incoming(self);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) (*gv)[c] += g[r * cols + c];
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  if (b.value().rows() != k) {
    throw Error(Errc::shape_mismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  MapMat(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      ConstMapMat(a.value().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) *
      ConstMapMat(b.value().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi, m, k, n](Tape& t, std::size_t self) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    ConstMapMat g(t.incoming(self).data(), M, N);
    if (Tensor* ga = t.grad_target(ai)) {
      MapMat(ga->data(), M, K).noalias() += g * ConstMapMat(t.value(bi).data(), K, N).transpose();
    }
    if (Tensor* gb = t.grad_target(bi)) {
      MapMat(gb->data(), K, N).noalias() += ConstMapMat(t.value(ai).data(), M, K).transpose() * g;
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw Error(Errc::invalid_argument, "concat of nothing");
  Tape& t = *parts.front().tape();
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw Error(Errc::shape_mismatch, "concat axis out of range");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw Error(Errc::invalid_argument, "concat operands live on different tapes");
    Shape ps = p.shape();
    if (ps.size() != shape.size()) throw Error(Errc::shape_mismatch, "concat rank mismatch");
    for (std::size_t d = 0; d < ps.size(); ++d) {
      if (d != axis && ps[d] != shape[d]) {
        throw Error(Errc::shape_mismatch, "concat: " + shape_string(ps) + " vs " + shape_string(shape));
      }
    }
    extents.push_back(ps[axis]);
    total += ps[axis];
  }
  shape[axis] = total;
  const AxisSplit s = split_axis(shape, axis, "concat");
  Tensor out(shape);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = parts[p].value();
    const std::size_t block = extents[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy(pv.data() + o * block, pv.data() + (o + 1) * block, out.data() + o * total * s.inner + offset);
    }
    offset += block;
    ids.push_back(parts[p].id());
  }
  return t.record(std::move(out), ids, [ids, extents, s, total](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t block = extents[p] * s.inner;
      if (Tensor* gp = t.grad_target(ids[p])) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = g.data() + o * total * s.inner + offset;
          double* dst = gp->data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += block;
    }
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in_shape = x.shape();
  const AxisSplit s = split_axis(in_shape, axis, "slice");
  if (begin > end || end > s.extent) throw Error(Errc::shape_mismatch, "slice bounds out of range");
  Shape shape = in_shape;
  shape[axis] = end - begin;
  Tensor out(shape);
  const std::size_t width = (end - begin) * s.inner;
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = xv.data() + (o * s.extent + begin) * s.inner;
    std::copy(src, src + width, out.data() + o * width);
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, s, begin, width](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = gx->data() + (o * s.extent + begin) * s.inner;
      for (std::size_t i = 0; i < width; ++i) dst[i] += g[o * width + i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    accumulate(t.grad_target(xi), t.incoming(self));
  });
}

Var sin(const Var& x) {
  return unary(x, [](double v) { return fast_sin(v); }, [](double v, double) { return fast_cos(v); });
}

Var cos(const Var& x) {
  return unary(x, [](double v) { return fast_cos(v); }, [](double v, double) { return -fast_sin(v); });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var softmax(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  if (s.extent == 0) throw Error(Errc::invalid_argument, "softmax over an empty axis");
  const auto& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xv[base + e * s.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        double v = std::exp(xv[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, s](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    const auto& y = t.value(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) dot += g[base + e * s.inner] * y[base + e * s.inner];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = base + e * s.inner;
          (*gx)[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var reduce_sum(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_sum");
  const auto& xv = x.value();
  Tensor out(drop_axis(x.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t in = 0; in < s.inner; ++in) out[o * s.inner + in] += xv[(o * s.extent + e) * s.inner + in];
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, s](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t in = 0; in < s.inner; ++in) (*gx)[(o * s.extent + e) * s.inner + in] += g[o * s.inner + in];
  });
}

Var reduce_mean(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_mean");
  if (s.extent == 0) throw Error(Errc::invalid_argument, "mean over an empty axis");
  return scale(reduce_sum(x, axis), 1.0 / static_cast<double>(s.extent));
}

Var reduce_max(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_max");
  if (s.extent == 0) throw Error(Errc::invalid_argument, "max over an empty axis");
  const auto& xv = x.value();
  Tensor out(drop_axis(x.shape(), axis));
  std::vector<std::size_t> arg(out.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      std::size_t best = o * s.extent * s.inner + in;
      for (std::size_t e = 1; e < s.extent; ++e) {
        std::size_t i = (o * s.extent + e) * s.inner + in;
        if (xv[i] > xv[best]) best = i;
      }
      out[o * s.inner + in] = xv[best];
      arg[o * s.inner + in] = best;
    }
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, arg = std::move(arg)](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    for (std::size_t i = 0; i < arg.size(); ++i) (*gx)[arg[i]] += g[i];
  });
}

Var sum(const Var& x) {
  const auto& xv = x.value();
  double total = 0.0;
  for (double v : xv.values()) total += v;
  const std::size_t xi = x.id();
  return x.tape()->record(Tensor::scalar(total), {xi}, [xi](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const double g = t.incoming(self)[0];
    for (auto& v : gx->values()) v += g;
  });
}

Var mean(const Var& x) {
  if (x.value().size() == 0) throw Error(Errc::invalid_argument, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var l1_distance(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "l1_distance");
  const auto& av = a.value();
  const auto& bv = b.value();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += std::abs(av[i] - bv[i]);
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(Tensor::scalar(total), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const double g = t.incoming(self)[0];
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    Tensor* ga = t.grad_target(ai);
    Tensor* gb = t.grad_target(bi);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double sg = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
      if (ga) (*ga)[i] += sg;
      if (gb) (*gb)[i] -= sg;
    }
  });
}

Var l2_norm(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "l2_norm");
  const auto& xv = x.value();
  Tensor out(drop_axis(x.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double ss = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        double v = xv[(o * s.extent + e) * s.inner + in];
        ss += v * v;
      }
      out[o * s.inner + in] = std::sqrt(ss);
    }
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, s](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    const auto& y = t.value(self);
    const auto& xv = t.value(xi);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const double norm = y[o * s.inner + in];
        if (norm == 0.0) continue;
        const double f = g[o * s.inner + in] / norm;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = (o * s.extent + e) * s.inner + in;
          (*gx)[i] += f * xv[i];
        }
      }
    }
  });
}

Var cosine_similarity(const Var& a, const Var& b, std::size_t axis) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "cosine_similarity");
  const AxisSplit s = split_axis(a.shape(), axis, "cosine_similarity");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor out(drop_axis(a.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t i = (o * s.extent + e) * s.inner + in;
        ab += av[i] * bv[i];
        aa += av[i] * av[i];
        bb += bv[i] * bv[i];
      }
      const double denom = std::sqrt(aa) * std::sqrt(bb);
      if (!(denom > 0.0)) throw Error(Errc::degenerate_element, "cosine similarity of a zero vector");
      out[o * s.inner + in] = ab / denom;
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi, s](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    Tensor* ga = t.grad_target(ai);
    Tensor* gb = t.grad_target(bi);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = (o * s.extent + e) * s.inner + in;
          ab += av[i] * bv[i];
          aa += av[i] * av[i];
          bb += bv[i] * bv[i];
        }
        const double na = std::sqrt(aa), nb = std::sqrt(bb);
        const double c = ab / (na * nb);
        const double gi = g[o * s.inner + in];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = (o * s.extent + e) * s.inner + in;
          if (ga) (*ga)[i] += gi * (bv[i] / (na * nb) - c * av[i] / aa);
          if (gb) (*gb)[i] += gi * (av[i] / (na * nb) - c * bv[i] / bb);
        }
      }
    }
  });
}

Var gather_rows(const Var& x, std::vector<std::uint32_t> indices) {
  require_rank2(x, "gather_rows");
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) throw Error(Errc::index_out_of_range, "gather_rows index " + std::to_string(indices[r]));
    std::copy(xv.data() + indices[r] * cols, xv.data() + (indices[r] + 1) * cols, out.data() + r * cols);
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [xi, cols, idx = std::move(indices)](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_target(xi);
    if (!gx) return;
    const auto& g = t.incoming(self);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = gx->data() + idx[r] * cols;
      const double* src = g.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

Var weighted_gather(const Var& weights, std::vector<std::uint32_t> indices, const Var& z) {
  Tape& t = same_tape(weights, z);
  require_rank2(weights, "weighted_gather");
  require_rank2(z, "weighted_gather");
  const std::size_t m = weights.value().rows(), k = weights.value().cols();
  const std::size_t n = z.value().rows(), c = z.value().cols();
  if (indices.size() != m * k) throw Error(Errc::shape_mismatch, "weighted_gather: index count != M * k");
  for (auto i : indices)
    if (i >= n) throw Error(Errc::index_out_of_range, "weighted_gather index " + std::to_string(i));
  Tensor out({m, c});
  const auto& wv = weights.value();
  const auto& zv = z.value();
  for (std::size_t j = 0; j < m; ++j) {
    double* dst = out.data() + j * c;
    for (std::size_t s = 0; s < k; ++s) {
      const double w = wv[j * k + s];
      const double* src = zv.data() + indices[j * k + s] * c;
      for (std::size_t d = 0; d < c; ++d) dst[d] += w * src[d];
    }
  }
  const std::size_t wi = weights.id(), zi = z.id();
  return t.record(std::move(out), {wi, zi}, [wi, zi, m, k, c, idx = std::move(indices)](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    Tensor* gw = t.grad_target(wi);
    Tensor* gz = t.grad_target(zi);
    const auto& wv = t.value(wi);
    const auto& zv = t.value(zi);
    for (std::size_t j = 0; j < m; ++j) {
      const double* gj = g.data() + j * c;
      for (std::size_t s = 0; s < k; ++s) {
        const std::size_t i = idx[j * k + s];
        if (gw) {
          const double* zrow = zv.data() + i * c;
          double dot = 0.0;
          for (std::size_t d = 0; d < c; ++d) dot += gj[d] * zrow[d];
          (*gw)[j * k + s] += dot;
        }
        if (gz) {
          const double w = wv[j * k + s];
          double* dst = gz->data() + i * c;
          for (std::size_t d = 0; d < c; ++d) dst[d] += w * gj[d];
        }
      }
    }
  });
}

Var cross3(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "cross3");
  require_rank2(a, "cross3");
  if (a.value().cols() != 3) throw Error(Errc::shape_mismatch, "cross3 expects [R, 3]");
  const std::size_t rows = a.value().rows();
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor out({rows, 3});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = av.data() + 3 * r;
    const double* q = bv.data() + 3 * r;
    double* o = out.data() + 3 * r;
    o[0] = p[1] * q[2] - p[2] * q[1];
    o[1] = p[2] * q[0] - p[0] * q[2];
    o[2] = p[0] * q[1] - p[1] * q[0];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi, rows](Tape& t, std::size_t self) {
    const auto& g = t.incoming(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    Tensor* ga = t.grad_target(ai);
    Tensor* gb = t.grad_target(bi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* p = av.data() + 3 * r;
      const double* q = bv.data() + 3 * r;
      const double* o = g.data() + 3 * r;
      // d(p x q) . o = (q x o) . dp = (o x p) . dq
      if (ga) {
        double* d = ga->data() + 3 * r;
        d[0] += q[1] * o[2] - q[2] * o[1];
        d[1] += q[2] * o[0] - q[0] * o[2];
        d[2] += q[0] * o[1] - q[1] * o[0];
      }
      if (gb) {
        double* d = gb->data() + 3 * r;
        d[0] += o[1] * p[2] - o[2] * p[1];
        d[1] += o[2] * p[0] - o[0] * p[2];
        d[2] += o[0] * p[1] - o[1] * p[0];
      }
    }
  });
}

}  // namespace simsr::ad

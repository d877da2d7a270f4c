#include "ops.hpp"

#include <algorithm>
#include <cmath>

namespace hamlet {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

// Elementwise op with gradient factors computed from input/output values.
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd dfdx_from_in_out) {
    const auto& in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_op_output(x.shape(), std::move(out), name, {x}, [dfdx_from_in_out](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        const auto& in = p.data();
        const auto& ov = o.data();
        auto& pg = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * dfdx_from_in_out(in[i], ov[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const auto &av = a.data(), &bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op_output(a.shape(), std::move(out), "add", {a, b}, [](Tensor& o) {
        const auto& g = o.grad();
        for (int j = 0; j < 2; ++j) {
            Tensor& p = o.node()->parents[j];
            if (!p.requires_grad()) continue;
            auto& pg = p.grad();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const auto &av = a.data(), &bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_op_output(a.shape(), std::move(out), "sub", {a, b}, [](Tensor& o) {
        const auto& g = o.grad();
        Tensor& pa = o.node()->parents[0];
        Tensor& pb = o.node()->parents[1];
        if (pa.requires_grad()) {
            auto& pg = pa.grad();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        if (pb.requires_grad()) {
            auto& pg = pb.grad();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const auto &av = a.data(), &bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_op_output(a.shape(), std::move(out), "mul", {a, b}, [](Tensor& o) {
        const auto& g = o.grad();
        Tensor& pa = o.node()->parents[0];
        Tensor& pb = o.node()->parents[1];
        if (pa.requires_grad()) {
            auto& pg = pa.grad();
            const auto& bv = pb.data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * bv[i];
        }
        if (pb.requires_grad()) {
            auto& pg = pb.grad();
            const auto& av = pa.data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * av[i];
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    const auto &av = a.data(), &bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
    return make_op_output(a.shape(), std::move(out), "div", {a, b}, [](Tensor& o) {
        const auto& g = o.grad();
        Tensor& pa = o.node()->parents[0];
        Tensor& pb = o.node()->parents[1];
        const auto& av = pa.data();
        const auto& bv = pb.data();
        if (pa.requires_grad()) {
            auto& pg = pa.grad();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] / bv[i];
        }
        if (pb.requires_grad()) {
            auto& pg = pb.grad();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double c) {
    const auto& in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * c;
    return make_op_output(x.shape(), std::move(out), "scale", {x}, [c](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        auto& pg = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * c;
    });
}

Tensor add_scalar(const Tensor& x, double c) {
    const auto& in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] + c;
    return make_op_output(x.shape(), std::move(out), "add_scalar", {x}, [](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        auto& pg = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

Tensor silu(const Tensor& x) {
    return unary_op(
        x, "silu", [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary_op(
        x, "gelu", [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_t(const Tensor& x) {
    return unary_op(
        x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& x) {
    return unary_op(
        x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt_t(const Tensor& x) {
    return unary_op(
        x, "sqrt", [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != x.numel())
        throw ConfigError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<double> out = x.data();
    return make_op_output(std::move(shape), std::move(out), "reshape", {x}, [](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        auto& pg = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const auto& shape = x.shape();
    if (axes.size() != shape.size()) throw ConfigError("permute: axes rank mismatch");
    std::vector<std::size_t> out_shape(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = shape[axes[i]];
    const auto in_strides = strides_of(shape);
    const auto out_strides = strides_of(out_shape);
    // For input multi-index m, output offset = sum_j m[axes[j]] * out_strides[j];
    // fold into a per-input-axis stride table.
    std::vector<std::size_t> map(shape.size(), 0);
    for (std::size_t j = 0; j < axes.size(); ++j) map[axes[j]] = out_strides[j];
    const auto& in = x.data();
    std::vector<double> out(in.size());
    const std::size_t nd = shape.size();
    for (std::size_t idx = 0; idx < in.size(); ++idx) {
        std::size_t rem = idx, off = 0;
        for (std::size_t a = 0; a < nd; ++a) {
            off += (rem / in_strides[a]) * map[a];
            rem %= in_strides[a];
        }
        out[off] = in[idx];
    }
    auto fold = std::make_shared<std::vector<std::size_t>>(std::move(map));
    auto istr = std::make_shared<std::vector<std::size_t>>(in_strides);
    return make_op_output(std::move(out_shape), std::move(out), "permute", {x},
                          [fold, istr, nd](Tensor& o) {
                              Tensor& p = o.node()->parents[0];
                              if (!p.requires_grad()) return;
                              const auto& g = o.grad();
                              auto& pg = p.grad();
                              for (std::size_t idx = 0; idx < pg.size(); ++idx) {
                                  std::size_t rem = idx, off = 0;
                                  for (std::size_t a = 0; a < nd; ++a) {
                                      off += (rem / (*istr)[a]) * (*fold)[a];
                                      rem %= (*istr)[a];
                                  }
                                  pg[idx] += g[off];
                              }
                          });
}

Tensor transpose_last(const Tensor& x) {
    std::vector<std::size_t> axes(x.ndim());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    if (axes.size() < 2) throw ConfigError("transpose_last: need >= 2 dims");
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(x, axes);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    const auto& shape = x.shape();
    if (axis >= shape.size() || start + len > shape[axis])
        throw ConfigError("slice: out of range on axis " + std::to_string(axis));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t a = shape[axis];
    std::vector<std::size_t> out_shape = shape;
    out_shape[axis] = len;
    const auto& in = x.data();
    std::vector<double> out(outer * len * inner);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < len; ++j)
            std::copy_n(in.begin() + ((o * a + start + j) * inner), inner,
                        out.begin() + ((o * len + j) * inner));
    return make_op_output(std::move(out_shape), std::move(out), "slice", {x},
                          [outer, inner, a, start, len](Tensor& o) {
                              Tensor& p = o.node()->parents[0];
                              if (!p.requires_grad()) return;
                              const auto& g = o.grad();
                              auto& pg = p.grad();
                              for (std::size_t ob = 0; ob < outer; ++ob)
                                  for (std::size_t j = 0; j < len; ++j) {
                                      const std::size_t src = (ob * len + j) * inner;
                                      const std::size_t dst = (ob * a + start + j) * inner;
                                      for (std::size_t i = 0; i < inner; ++i) pg[dst + i] += g[src + i];
                                  }
                          });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ConfigError("concat: empty input");
    const auto& base = parts[0].shape();
    if (axis >= base.size()) throw ConfigError("concat: bad axis");
    std::size_t outer = 1, inner = 1, total = 0;
    for (std::size_t i = 0; i < axis; ++i) outer *= base[i];
    for (std::size_t i = axis + 1; i < base.size(); ++i) inner *= base[i];
    std::vector<std::size_t> lens;
    for (const auto& p : parts) {
        auto s = p.shape();
        auto t = base;
        t[axis] = s[axis];
        if (s != t) throw ConfigError("concat: incompatible shapes");
        lens.push_back(s[axis]);
        total += s[axis];
    }
    std::vector<std::size_t> out_shape = base;
    out_shape[axis] = total;
    std::vector<double> out(outer * total * inner);
    std::size_t at = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& in = parts[pi].data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(in.begin() + o * lens[pi] * inner, lens[pi] * inner,
                        out.begin() + (o * total + at) * inner);
        at += lens[pi];
    }
    auto lens_p = std::make_shared<std::vector<std::size_t>>(std::move(lens));
    return make_op_output(std::move(out_shape), std::move(out), "concat", parts,
                          [outer, inner, total, lens_p](Tensor& o) {
                              const auto& g = o.grad();
                              std::size_t at2 = 0;
                              for (std::size_t pi = 0; pi < o.node()->parents.size(); ++pi) {
                                  Tensor& p = o.node()->parents[pi];
                                  const std::size_t len = (*lens_p)[pi];
                                  if (p.requires_grad()) {
                                      auto& pg = p.grad();
                                      for (std::size_t ob = 0; ob < outer; ++ob) {
                                          const std::size_t src = (ob * total + at2) * inner;
                                          const std::size_t dst = ob * len * inner;
                                          for (std::size_t i = 0; i < len * inner; ++i)
                                              pg[dst + i] += g[src + i];
                                      }
                                  }
                                  at2 += len;
                              }
                          });
}

Tensor stack0(const std::vector<Tensor>& parts) {
    std::vector<Tensor> lifted;
    lifted.reserve(parts.size());
    for (const auto& p : parts) {
        std::vector<std::size_t> s{1};
        for (auto d : p.shape()) s.push_back(d);
        lifted.push_back(reshape(p, std::move(s)));
    }
    return concat(lifted, 0);
}

Tensor broadcast0(const Tensor& x, std::size_t copies) {
    const std::size_t n = x.numel();
    std::vector<std::size_t> out_shape{copies};
    for (auto d : x.shape()) out_shape.push_back(d);
    const auto& in = x.data();
    std::vector<double> out(copies * n);
    for (std::size_t c = 0; c < copies; ++c) std::copy_n(in.begin(), n, out.begin() + c * n);
    return make_op_output(std::move(out_shape), std::move(out), "broadcast0", {x},
                          [copies, n](Tensor& o) {
                              Tensor& p = o.node()->parents[0];
                              if (!p.requires_grad()) return;
                              const auto& g = o.grad();
                              auto& pg = p.grad();
                              for (std::size_t c = 0; c < copies; ++c)
                                  for (std::size_t i = 0; i < n; ++i) pg[i] += g[c * n + i];
                          });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.ndim() != 3 || v.ndim() != 2 || x.size(0) != v.size(0) || x.size(2) != v.size(1))
        throw ConfigError("add_rowvec: expected x [B,T,D], v [B,D]");
    const std::size_t B = x.size(0), T = x.size(1), D = x.size(2);
    const auto& xv = x.data();
    const auto& vv = v.data();
    std::vector<double> out(xv.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d)
                out[(b * T + t) * D + d] = xv[(b * T + t) * D + d] + vv[b * D + d];
    return make_op_output(x.shape(), std::move(out), "add_rowvec", {x, v}, [B, T, D](Tensor& o) {
        const auto& g = o.grad();
        Tensor& px = o.node()->parents[0];
        Tensor& pv = o.node()->parents[1];
        if (px.requires_grad()) {
            auto& pg = px.grad();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        if (pv.requires_grad()) {
            auto& pg = pv.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t d = 0; d < D; ++d) pg[b * D + d] += g[(b * T + t) * D + d];
        }
    });
}

namespace {
Tensor reduce_axis(const Tensor& x, std::size_t axis, bool mean, const char* name) {
    const auto& shape = x.shape();
    if (axis >= shape.size()) throw ConfigError(std::string(name) + ": bad axis");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t a = shape[axis];
    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) out_shape.push_back(shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    const double w = mean ? 1.0 / static_cast<double>(a) : 1.0;
    const auto& in = x.data();
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < a; ++j)
            for (std::size_t i = 0; i < inner; ++i)
                out[o * inner + i] += in[(o * a + j) * inner + i];
    if (mean)
        for (double& v : out) v *= w;
    return make_op_output(std::move(out_shape), std::move(out), name, {x},
                          [outer, inner, a, w](Tensor& o) {
                              Tensor& p = o.node()->parents[0];
                              if (!p.requires_grad()) return;
                              const auto& g = o.grad();
                              auto& pg = p.grad();
                              for (std::size_t ob = 0; ob < outer; ++ob)
                                  for (std::size_t j = 0; j < a; ++j)
                                      for (std::size_t i = 0; i < inner; ++i)
                                          pg[(ob * a + j) * inner + i] += g[ob * inner + i] * w;
                          });
}
}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, false, "sum_axis"); }
Tensor mean_axis(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, true, "mean_axis"); }

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op_output({1}, {s}, "sum_all", {x}, [](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const double g = o.grad()[0];
        auto& pg = p.grad();
        for (double& v : pg) v += g;
    });
}

Tensor mean_all(const Tensor& x) {
    const double n = static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op_output({1}, {s / n}, "mean_all", {x}, [n](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const double g = o.grad()[0] / n;
        auto& pg = p.grad();
        for (double& v : pg) v += g;
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 2) throw ConfigError("linear: weight must be 2-D");
    const std::size_t in_dim = w.size(0), out_dim = w.size(1);
    if (x.ndim() < 1 || x.shape().back() != in_dim)
        throw ConfigError("linear: input last dim " + shape_str(x.shape()) + " vs weight " +
                          shape_str(w.shape()));
    if (b.defined() && (b.ndim() != 1 || b.size(0) != out_dim))
        throw ConfigError("linear: bias dim mismatch");
    const std::size_t rows = x.numel() / in_dim;
    std::vector<std::size_t> out_shape = x.shape();
    out_shape.back() = out_dim;
    const auto& xv = x.data();
    const auto& wv = w.data();
    std::vector<double> out(rows * out_dim, 0.0);
    parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            double* orow = out.data() + r * out_dim;
            const double* xrow = xv.data() + r * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) {
                const double xi = xrow[i];
                const double* wrow = wv.data() + i * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o) orow[o] += xi * wrow[o];
            }
        }
    });
    if (b.defined()) {
        const auto& bv = b.data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bv[o];
    }
    std::vector<Tensor> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_op_output(std::move(out_shape), std::move(out), "linear", std::move(parents),
                          [rows, in_dim, out_dim](Tensor& o) {
                              const auto& g = o.grad();
                              Tensor& px = o.node()->parents[0];
                              Tensor& pw = o.node()->parents[1];
                              const auto& xv = px.data();
                              const auto& wv = pw.data();
                              if (px.requires_grad()) {
                                  auto& pg = px.grad();
                                  parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
                                      for (std::size_t r = r0; r < r1; ++r) {
                                          const double* grow = g.data() + r * out_dim;
                                          double* xg = pg.data() + r * in_dim;
                                          for (std::size_t i = 0; i < in_dim; ++i) {
                                              const double* wrow = wv.data() + i * out_dim;
                                              double acc = 0.0;
                                              for (std::size_t o = 0; o < out_dim; ++o)
                                                  acc += grow[o] * wrow[o];
                                              xg[i] += acc;
                                          }
                                      }
                                  });
                              }
                              if (pw.requires_grad()) {
                                  auto& wg = pw.grad();
                                  parallel_for(in_dim, [&](std::size_t i0, std::size_t i1) {
                                      for (std::size_t i = i0; i < i1; ++i) {
                                          double* wgrow = wg.data() + i * out_dim;
                                          for (std::size_t r = 0; r < rows; ++r) {
                                              const double xi = xv[r * in_dim + i];
                                              if (xi == 0.0) continue;
                                              const double* grow = g.data() + r * out_dim;
                                              for (std::size_t o = 0; o < out_dim; ++o)
                                                  wgrow[o] += xi * grow[o];
                                          }
                                      }
                                  });
                              }
                              if (o.node()->parents.size() > 2) {
                                  Tensor& pb = o.node()->parents[2];
                                  if (pb.requires_grad()) {
                                      auto& bg = pb.grad();
                                      for (std::size_t r = 0; r < rows; ++r)
                                          for (std::size_t v = 0; v < out_dim; ++v)
                                              bg[v] += g[r * out_dim + v];
                                  }
                              }
                          });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() != a.ndim()) throw ConfigError("bmm: rank mismatch");
    const std::size_t nd = a.ndim();
    for (std::size_t i = 0; i + 2 < nd; ++i)
        if (a.size(i) != b.size(i)) throw ConfigError("bmm: leading dims differ");
    const std::size_t M = a.size(nd - 2), K = a.size(nd - 1);
    if (b.size(nd - 2) != K) throw ConfigError("bmm: inner dims differ");
    const std::size_t N = b.size(nd - 1);
    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < nd; ++i) batch *= a.size(i);
    std::vector<std::size_t> out_shape = a.shape();
    out_shape[nd - 1] = N;
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(batch * M * N, 0.0);
    parallel_for(batch, [&](std::size_t g0, std::size_t g1) {
        for (std::size_t gidx = g0; gidx < g1; ++gidx) {
            const double* ab = av.data() + gidx * M * K;
            const double* bb = bv.data() + gidx * K * N;
            double* ob = out.data() + gidx * M * N;
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t k = 0; k < K; ++k) {
                    const double x = ab[m * K + k];
                    const double* brow = bb + k * N;
                    double* orow = ob + m * N;
                    for (std::size_t n = 0; n < N; ++n) orow[n] += x * brow[n];
                }
        }
    });
    return make_op_output(std::move(out_shape), std::move(out), "bmm", {a, b},
                          [batch, M, K, N](Tensor& o) {
                              const auto& g = o.grad();
                              Tensor& pa = o.node()->parents[0];
                              Tensor& pb = o.node()->parents[1];
                              const auto& av = pa.data();
                              const auto& bv = pb.data();
                              if (pa.requires_grad()) {
                                  auto& ag = pa.grad();
                                  parallel_for(batch, [&](std::size_t g0, std::size_t g1) {
                                      for (std::size_t gi = g0; gi < g1; ++gi) {
                                          const double* gb = g.data() + gi * M * N;
                                          const double* bb = bv.data() + gi * K * N;
                                          double* ab = ag.data() + gi * M * K;
                                          for (std::size_t m = 0; m < M; ++m)
                                              for (std::size_t k = 0; k < K; ++k) {
                                                  double acc = 0.0;
                                                  const double* grow = gb + m * N;
                                                  const double* brow = bb + k * N;
                                                  for (std::size_t n = 0; n < N; ++n)
                                                      acc += grow[n] * brow[n];
                                                  ab[m * K + k] += acc;
                                              }
                                      }
                                  });
                              }
                              if (pb.requires_grad()) {
                                  auto& bg = pb.grad();
                                  parallel_for(batch, [&](std::size_t g0, std::size_t g1) {
                                      for (std::size_t gi = g0; gi < g1; ++gi) {
                                          const double* gb = g.data() + gi * M * N;
                                          const double* ab = av.data() + gi * M * K;
                                          double* bb = bg.data() + gi * K * N;
                                          for (std::size_t m = 0; m < M; ++m)
                                              for (std::size_t k = 0; k < K; ++k) {
                                                  const double x = ab[m * K + k];
                                                  if (x == 0.0) continue;
                                                  const double* grow = gb + m * N;
                                                  double* brow = bb + k * N;
                                                  for (std::size_t n = 0; n < N; ++n)
                                                      brow[n] += x * grow[n];
                                              }
                                      }
                                  });
                              }
                          });
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.ndim() < 1 || x.shape().back() < 1) throw ConfigError("softmax: empty last dim");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    const auto& in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double m = row[0];
        for (std::size_t i = 1; i < d; ++i) m = std::max(m, row[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            out[r * d + i] = std::exp(row[i] - m);
            z += out[r * d + i];
        }
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] /= z;
    }
    return make_op_output(x.shape(), std::move(out), "softmax", {x}, [rows, d](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        const auto& y = o.data();
        auto& pg = p.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += g[r * d + i] * y[r * d + i];
            for (std::size_t i = 0; i < d; ++i)
                pg[r * d + i] += y[r * d + i] * (g[r * d + i] - dot);
        }
    });
}

Tensor cross_entropy_first(const Tensor& x) {
    if (x.ndim() < 1 || x.shape().back() < 1) throw ConfigError("cross_entropy_first: empty last dim");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<std::size_t> out_shape(x.shape().begin(), x.shape().end() - 1);
    if (out_shape.empty()) out_shape.push_back(1);
    const auto& in = x.data();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double m = row[0];
        for (std::size_t i = 1; i < d; ++i) m = std::max(m, row[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) z += std::exp(row[i] - m);
        out[r] = m + std::log(z) - row[0];
    }
    return make_op_output(std::move(out_shape), std::move(out), "ce_first", {x}, [rows, d](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        const auto& in = p.data();
        auto& pg = p.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = in.data() + r * d;
            double m = row[0];
            for (std::size_t i = 1; i < d; ++i) m = std::max(m, row[i]);
            double z = 0.0;
            for (std::size_t i = 0; i < d; ++i) z += std::exp(row[i] - m);
            for (std::size_t i = 0; i < d; ++i) {
                const double soft = std::exp(row[i] - m) / z;
                pg[r * d + i] += g[r] * (soft - (i == 0 ? 1.0 : 0.0));
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d)
        throw ConfigError("layer_norm: gain/bias must match last dim " + std::to_string(d));
    const std::size_t rows = x.numel() / d;
    const auto& in = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += row[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i)
            out[r * d + i] = (row[i] - mu) * inv * gv[i] + bv[i];
    }
    return make_op_output(x.shape(), std::move(out), "layer_norm", {x, gain, bias},
                          [rows, d, eps](Tensor& o) {
                              const auto& g = o.grad();
                              Tensor& px = o.node()->parents[0];
                              Tensor& pgain = o.node()->parents[1];
                              Tensor& pbias = o.node()->parents[2];
                              const auto& in = px.data();
                              const auto& gv = pgain.data();
                              const double dn = static_cast<double>(d);
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const double* row = in.data() + r * d;
                                  const double* grow = g.data() + r * d;
                                  double mu = 0.0;
                                  for (std::size_t i = 0; i < d; ++i) mu += row[i];
                                  mu /= dn;
                                  double var = 0.0;
                                  for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
                                  var /= dn;
                                  const double inv = 1.0 / std::sqrt(var + eps);
                                  if (px.requires_grad()) {
                                      auto& pg = px.grad();
                                      double sum_dh = 0.0, sum_dh_xc = 0.0;
                                      for (std::size_t i = 0; i < d; ++i) {
                                          const double dh = grow[i] * gv[i];
                                          sum_dh += dh;
                                          sum_dh_xc += dh * (row[i] - mu);
                                      }
                                      for (std::size_t i = 0; i < d; ++i) {
                                          const double dh = grow[i] * gv[i];
                                          const double xc = row[i] - mu;
                                          pg[r * d + i] += inv * (dh - sum_dh / dn -
                                                                  xc * inv * inv * sum_dh_xc / dn);
                                      }
                                  }
                                  if (pgain.requires_grad()) {
                                      auto& gg = pgain.grad();
                                      for (std::size_t i = 0; i < d; ++i)
                                          gg[i] += grow[i] * (row[i] - mu) * inv;
                                  }
                                  if (pbias.requires_grad()) {
                                      auto& bg = pbias.grad();
                                      for (std::size_t i = 0; i < d; ++i) bg[i] += grow[i];
                                  }
                              }
                          });
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
    LayerNormParams p;
    p.gain = Tensor::full({dim}, 1.0);
    p.bias = Tensor::zeros({dim});
    return p;
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p, double eps) {
    return layer_norm(x, p.gain, p.bias, eps);
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return x;
    const std::size_t n = x.numel();
    auto mask = std::make_shared<std::vector<double>>(n);
    const double keep = 1.0 - rate;
    const double inv = 1.0 / keep;
    for (std::size_t i = 0; i < n; ++i) (*mask)[i] = rng.uniform() < rate ? 0.0 : inv;
    const auto& in = x.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * (*mask)[i];
    return make_op_output(x.shape(), std::move(out), "dropout", {x}, [mask](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        auto& pg = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * (*mask)[i];
    });
}

Tensor film(const Tensor& levels, const Tensor& gamma, const Tensor& beta) {
    if (levels.ndim() != 4) throw ConfigError("film: levels must be [L,B,N,D]");
    const std::size_t L = levels.size(0), B = levels.size(1), N = levels.size(2), D = levels.size(3);
    if (gamma.shape() != std::vector<std::size_t>{B, D} || beta.shape() != std::vector<std::size_t>{B, D})
        throw ConfigError("film: gamma/beta must be [B,D]");
    const auto& lv = levels.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
    std::vector<double> out(L * B * N * D);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n) {
                const double* src = lv.data() + ((l * B + b) * N + n) * D;
                double* dst = out.data() + ((b * N + n) * L + l) * D;
                const double* gb = gv.data() + b * D;
                const double* bb = bv.data() + b * D;
                for (std::size_t d = 0; d < D; ++d) dst[d] = src[d] * (gb[d] + 1.0) + bb[d];
            }
    return make_op_output({B, N, L, D}, std::move(out), "film", {levels, gamma, beta},
                          [L, B, N, D](Tensor& o) {
                              const auto& g = o.grad();
                              Tensor& plv = o.node()->parents[0];
                              Tensor& pg_ = o.node()->parents[1];
                              Tensor& pb_ = o.node()->parents[2];
                              const auto& lv = plv.data();
                              if (pg_.requires_grad() || pb_.requires_grad()) {
                                  auto& gg = pg_.grad();
                                  auto& bg = pb_.grad();
                                  for (std::size_t b = 0; b < B; ++b)
                                      for (std::size_t n = 0; n < N; ++n)
                                          for (std::size_t l = 0; l < L; ++l) {
                                              const double* grow =
                                                  g.data() + ((b * N + n) * L + l) * D;
                                              const double* src =
                                                  lv.data() + ((l * B + b) * N + n) * D;
                                              for (std::size_t d = 0; d < D; ++d) {
                                                  gg[b * D + d] += grow[d] * src[d];
                                                  bg[b * D + d] += grow[d];
                                              }
                                          }
                              }
                              if (plv.requires_grad()) {
                                  auto& lg = plv.grad();
                                  const auto& gv = pg_.data();
                                  for (std::size_t b = 0; b < B; ++b)
                                      for (std::size_t n = 0; n < N; ++n)
                                          for (std::size_t l = 0; l < L; ++l) {
                                              const double* grow =
                                                  g.data() + ((b * N + n) * L + l) * D;
                                              double* dst = lg.data() + ((l * B + b) * N + n) * D;
                                              for (std::size_t d = 0; d < D; ++d)
                                                  dst[d] += grow[d] * (gv[b * D + d] + 1.0);
                                          }
                              }
                          });
}

Tensor add_mask(const Tensor& scores, const Tensor& mask) {
    if (scores.ndim() < 2 || mask.ndim() != 2) throw ConfigError("add_mask: bad ranks");
    const std::size_t Lq = scores.size(scores.ndim() - 2), Lk = scores.shape().back();
    if (mask.size(0) != Lq || mask.size(1) != Lk) throw ConfigError("add_mask: mask shape mismatch");
    const std::size_t rows = scores.numel() / (Lq * Lk);
    const auto& sv = scores.data();
    const auto& mv = mask.data();
    std::vector<double> out(sv.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < Lq * Lk; ++i) out[r * Lq * Lk + i] = sv[r * Lq * Lk + i] + mv[i];
    return make_op_output(scores.shape(), std::move(out), "add_mask", {scores}, [](Tensor& o) {
        Tensor& p = o.node()->parents[0];
        if (!p.requires_grad()) return;
        const auto& g = o.grad();
        auto& pg = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

AttentionParams AttentionParams::init(std::size_t dq, std::size_t dk, int heads, Rng& rng,
                                      bool zero_init_out) {
    if (heads < 1 || dq % static_cast<std::size_t>(heads) != 0)
        throw ConfigError("attention: query dim " + std::to_string(dq) +
                          " not divisible by heads " + std::to_string(heads));
    AttentionParams p;
    p.heads = heads;
    const double sq = 1.0 / std::sqrt(static_cast<double>(dq));
    const double sk = 1.0 / std::sqrt(static_cast<double>(dk));
    p.wq = Tensor::randn({dq, dq}, rng, sq);
    p.bq = Tensor::zeros({dq});
    p.wk = Tensor::randn({dk, dq}, rng, sk);
    p.wv = Tensor::randn({dk, dq}, rng, sk);
    p.bv = Tensor::zeros({dq});
    p.wo = zero_init_out ? Tensor::zeros({dq, dq}) : Tensor::randn({dq, dq}, rng, sq);
    p.bo = Tensor::zeros({dq});
    return p;
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionParams& p, const Tensor* mask,
                           Tensor* attn_weights_out) {
    if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3)
        throw ConfigError("attention: q/k/v must be [B,L,D]");
    const std::size_t B = q.size(0), Lq = q.size(1), dq = q.size(2);
    const std::size_t Lk = k.size(1), dk = k.size(2);
    if (k.size(0) != B || v.size(0) != B || v.size(1) != Lk || v.size(2) != dk)
        throw ConfigError("attention: batch/length mismatch between k and v");
    if (p.wq.size(0) != dq || p.wk.size(0) != dk || p.wv.size(0) != dk)
        throw ConfigError("attention: projection dims do not match inputs");
    const std::size_t H = static_cast<std::size_t>(p.heads);
    if (dq % H != 0) throw ConfigError("attention: dq not divisible by head count");
    const std::size_t dh = dq / H;

    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {B, t.size(1), H, dh}), {0, 2, 1, 3});  // [B,H,L,dh]
    };
    Tensor qh = split_heads(linear(q, p.wq, p.bq));
    Tensor kh = split_heads(linear(k, p.wk));
    Tensor vh = split_heads(linear(v, p.wv, p.bv));

    Tensor scores = scale(bmm(qh, transpose_last(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask) scores = add_mask(scores, *mask);
    Tensor attn = softmax_lastdim(scores);  // [B,H,Lq,Lk]
    if (attn_weights_out) *attn_weights_out = attn;

    Tensor ctx = reshape(permute(bmm(attn, vh), {0, 2, 1, 3}), {B, Lq, dq});
    return linear(ctx, p.wo, p.bo);
}

}  // namespace hamlet

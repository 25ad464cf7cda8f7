#include "stv/ops.hpp"

#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "stv/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stv {
namespace ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

void ensure_g(TensorData& d) {
    if (d.g.size() != d.v.size()) d.g.assign(d.v.size(), 0.0);
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

bool any_grad(std::initializer_list<const Tensor*> ins) {
    if (!active_tape()) return false;
    for (const Tensor* t : ins) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " do not match");
    }
}

struct AxisSplit {
    int64_t outer, len, inner;
};

AxisSplit split_axis(const char* op, const Shape& s, int64_t axis) {
    if (axis < 0 || axis >= static_cast<int64_t>(s.size())) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
    }
    AxisSplit r{1, s[static_cast<size_t>(axis)], 1};
    for (int64_t i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

// Elementwise unary with value/derivative computed from (x, y).
template <typename FwdFn, typename BwdFn>
Tensor unary_op(const char* name, const Tensor& x, FwdFn fwd, BwdFn dfn) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
    check_finite(name, ov);
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record(name, [xd, od, dfn]() {
            ensure_g(*xd);
            const int64_t m = static_cast<int64_t>(xd->v.size());
            for (int64_t i = 0; i < m; ++i) {
                xd->g[i] += od->g[i] * dfn(xd->v[i], od->v[i]);
            }
        });
    }
    return out;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    }
    Tensor out = Tensor::from(std::move(shape), x.values());
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("reshape", [xd, od]() {
            ensure_g(*xd);
            for (size_t i = 0; i < xd->g.size(); ++i) xd->g[i] += od->g[i];
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner axes " + std::to_string(k) + " and " +
                         std::to_string(k2) + " do not match");
    }
    Tensor out = Tensor::zeros({m, n});
    // dense kernels delegated to Eigen; tape semantics stay ours
    EMap(out.values().data(), m, n).noalias() =
        ECMap(a.values().data(), m, k) * ECMap(b.values().data(), k, n);
    check_finite("matmul", out.values());
    if (any_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("matmul", [ad, bd, od, m, k, n]() {
            ECMap go(od->g.data(), m, n);
            if (ad->requires_grad) {
                ensure_g(*ad);
                EMap(ad->g.data(), m, k).noalias() +=
                    go * ECMap(bd->v.data(), k, n).transpose();
            }
            if (bd->requires_grad) {
                ensure_g(*bd);
                EMap(bd->g.data(), k, n).noalias() +=
                    ECMap(ad->v.data(), m, k).transpose() * go;
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool bias = (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.last_dim() &&
                       a.shape() != b.shape());
    if (!bias) require_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    const int64_t w = bias ? b.dim(0) : 0;
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    if (bias) {
        for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i % w];
    } else {
        for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
    }
    check_finite("add", ov);
    if (any_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("add", [ad, bd, od, bias, w]() {
            const int64_t n2 = static_cast<int64_t>(od->g.size());
            if (ad->requires_grad) {
                ensure_g(*ad);
                for (int64_t i = 0; i < n2; ++i) ad->g[i] += od->g[i];
            }
            if (bd->requires_grad) {
                ensure_g(*bd);
                if (bias) {
                    for (int64_t i = 0; i < n2; ++i) bd->g[i % w] += od->g[i];
                } else {
                    for (int64_t i = 0; i < n2; ++i) bd->g[i] += od->g[i];
                }
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
    check_finite("sub", out.values());
    if (any_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("sub", [ad, bd, od]() {
            const size_t n2 = od->g.size();
            if (ad->requires_grad) {
                ensure_g(*ad);
                for (size_t i = 0; i < n2; ++i) ad->g[i] += od->g[i];
            }
            if (bd->requires_grad) {
                ensure_g(*bd);
                for (size_t i = 0; i < n2; ++i) bd->g[i] -= od->g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    check_finite("mul", out.values());
    if (any_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("mul", [ad, bd, od]() {
            const size_t n2 = od->g.size();
            if (ad->requires_grad) {
                ensure_g(*ad);
                for (size_t i = 0; i < n2; ++i) ad->g[i] += od->g[i] * bd->v[i];
            }
            if (bd->requires_grad) {
                ensure_g(*bd);
                for (size_t i = 0; i < n2; ++i) bd->g[i] += od->g[i] * ad->v[i];
            }
        });
    }
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] / b.values()[i];
    check_finite("div", out.values());
    if (any_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("div", [ad, bd, od]() {
            const size_t n2 = od->g.size();
            if (ad->requires_grad) {
                ensure_g(*ad);
                for (size_t i = 0; i < n2; ++i) ad->g[i] += od->g[i] / bd->v[i];
            }
            if (bd->requires_grad) {
                ensure_g(*bd);
                for (size_t i = 0; i < n2; ++i) {
                    bd->g[i] -= od->g[i] * ad->v[i] / (bd->v[i] * bd->v[i]);
                }
            }
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& x, double s) {
    return unary_op(
        "add_scalar", x, [s](double v) { return v + s; },
        [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
    return unary_op(
        "mul_scalar", x, [s](double v) { return v * s; },
        [s](double, double) { return s; });
}

Tensor concat_last(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ContractError("concat_last: no inputs");
    Shape lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
    int64_t total = 0;
    for (const Tensor& t : xs) {
        Shape tl(t.shape().begin(), t.shape().end() - 1);
        if (tl != lead) {
            throw ShapeError("concat_last: leading axes differ: " + shape_str(xs[0].shape()) +
                             " vs " + shape_str(t.shape()));
        }
        total += t.last_dim();
    }
    Shape os = lead;
    os.push_back(total);
    Tensor out = Tensor::zeros(os);
    const int64_t rows = numel(lead);
    int64_t off = 0;
    for (const Tensor& t : xs) {
        const int64_t w = t.last_dim();
        for (int64_t r = 0; r < rows; ++r) {
            std::memcpy(out.values().data() + r * total + off, t.values().data() + r * w,
                        static_cast<size_t>(w) * sizeof(double));
        }
        off += w;
    }
    bool rg = false;
    for (const Tensor& t : xs) rg = rg || (active_tape() && t.requires_grad());
    if (rg) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorData>> ind;
        for (const Tensor& t : xs) ind.push_back(t.data_ptr());
        auto od = out.data_ptr();
        active_tape()->record("concat_last", [ind, od, rows, total]() {
            int64_t off2 = 0;
            for (const auto& xd : ind) {
                const int64_t w = xd->shape.back();
                if (xd->requires_grad) {
                    ensure_g(*xd);
                    for (int64_t r = 0; r < rows; ++r) {
                        for (int64_t j = 0; j < w; ++j) {
                            xd->g[r * w + j] += od->g[r * total + off2 + j];
                        }
                    }
                }
                off2 += w;
            }
        });
    }
    return out;
}

std::vector<Tensor> split_last(const Tensor& x, const std::vector<int64_t>& widths) {
    int64_t total = 0;
    for (int64_t w : widths) total += w;
    if (total != x.last_dim()) {
        throw ShapeError("split_last: widths sum to " + std::to_string(total) +
                         " but last axis is " + std::to_string(x.last_dim()));
    }
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    const int64_t rows = numel(lead);
    std::vector<Tensor> outs;
    int64_t off = 0;
    for (int64_t w : widths) {
        Shape os = lead;
        os.push_back(w);
        Tensor out = Tensor::zeros(os);
        for (int64_t r = 0; r < rows; ++r) {
            std::memcpy(out.values().data() + r * w, x.values().data() + r * total + off,
                        static_cast<size_t>(w) * sizeof(double));
        }
        if (any_grad({&x})) {
            out.set_requires_grad(true);
            auto xd = x.data_ptr();
            auto od = out.data_ptr();
            const int64_t o = off;
            active_tape()->record("split_last", [xd, od, rows, total, w, o]() {
                ensure_g(*xd);
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < w; ++j) {
                        xd->g[r * total + o + j] += od->g[r * w + j];
                    }
                }
            });
        }
        outs.push_back(out);
        off += w;
    }
    return outs;
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& x, int64_t axis, bool mean) {
    AxisSplit sp = split_axis(name, x.shape(), axis);
    Shape os;
    for (int64_t i = 0; i < x.rank(); ++i) {
        if (i != axis) os.push_back(x.dim(i));
    }
    Tensor out = Tensor::zeros(os);
    const double scale = mean ? 1.0 / static_cast<double>(sp.len) : 1.0;
    std::vector<double> buf(static_cast<size_t>(sp.len));
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t i = 0; i < sp.inner; ++i) {
            for (int64_t l = 0; l < sp.len; ++l) {
                buf[static_cast<size_t>(l)] = x.values()[(o * sp.len + l) * sp.inner + i];
            }
            const double s = stable_sum(buf);
            out.values()[o * sp.inner + i] = mean ? s / static_cast<double>(sp.len) : s;
        }
    }
    check_finite(name, out.values());
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record(name, [xd, od, sp, scale]() {
            ensure_g(*xd);
            for (int64_t o = 0; o < sp.outer; ++o) {
                for (int64_t l = 0; l < sp.len; ++l) {
                    for (int64_t i = 0; i < sp.inner; ++i) {
                        xd->g[(o * sp.len + l) * sp.inner + i] +=
                            od->g[o * sp.inner + i] * scale;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor sum_axis(const Tensor& x, int64_t axis) { return reduce_axis("sum_axis", x, axis, false); }
Tensor mean_axis(const Tensor& x, int64_t axis) { return reduce_axis("mean_axis", x, axis, true); }

namespace {

Tensor reduce_all(const char* name, const Tensor& x, bool mean) {
    const int64_t n = x.size();
    if (n == 0) throw ContractError(std::string(name) + ": empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x.values()[i];
    const double scale = mean ? 1.0 / static_cast<double>(n) : 1.0;
    Tensor out = Tensor::scalar(mean ? s / static_cast<double>(n) : s);
    check_finite(name, out.values());
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record(name, [xd, od, scale]() {
            ensure_g(*xd);
            const double g = od->g[0] * scale;
            for (size_t i = 0; i < xd->g.size(); ++i) xd->g[i] += g;
        });
    }
    return out;
}

}  // namespace

Tensor sum_all(const Tensor& x) { return reduce_all("sum_all", x, false); }
Tensor mean_all(const Tensor& x) { return reduce_all("mean_all", x, true); }

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        "log", x, [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

namespace {
double softplus_val(double v) {
    // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
    return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}
double sigmoid_val(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

Tensor softplus(const Tensor& x) {
    return unary_op(
        "softplus", x, [](double v) { return softplus_val(v); },
        [](double v, double) { return sigmoid_val(v); });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, [](double v) { return sigmoid_val(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary_op(
        "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor silu(const Tensor& x) {
    return unary_op(
        "silu", x, [](double v) { return v * sigmoid_val(v); },
        [](double v, double) {
            const double s = sigmoid_val(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor gelu(const Tensor& x) {
    return unary_op(
        "gelu", x,
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            return cdf + v * pdf;
        });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor row_softmax(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("row_softmax: rank-0 input");
    const int64_t w = x.last_dim();
    const int64_t rows = x.size() / w;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> buf(static_cast<size_t>(w));
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * w;
        double* yr = out.values().data() + r * w;
        double mx = xr[0];
        for (int64_t j = 1; j < w; ++j) mx = std::max(mx, xr[j]);
        for (int64_t j = 0; j < w; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            buf[static_cast<size_t>(j)] = yr[j];
        }
        const double denom = stable_sum(buf);
        for (int64_t j = 0; j < w; ++j) yr[j] /= denom;
    }
    check_finite("row_softmax", out.values());
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("row_softmax", [xd, od, rows, w]() {
            ensure_g(*xd);
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = od->v.data() + r * w;
                const double* gy = od->g.data() + r * w;
                double dot = 0.0;
                for (int64_t j = 0; j < w; ++j) dot += gy[j] * y[j];
                for (int64_t j = 0; j < w; ++j) {
                    xd->g[r * w + j] += y[j] * (gy[j] - dot);
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
    const int64_t w = x.last_dim();
    if (gain.rank() != 1 || gain.dim(0) != w || shift.rank() != 1 || shift.dim(0) != w) {
        throw ShapeError("layer_norm: gain/shift must be rank-1 of width " + std::to_string(w));
    }
    const int64_t rows = x.size() / w;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(static_cast<size_t>(x.size()));
    std::vector<double> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * w;
        double mean = 0.0;
        for (int64_t j = 0; j < w; ++j) mean += xr[j];
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (int64_t j = 0; j < w; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(w);
        const double r_inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = r_inv;
        for (int64_t j = 0; j < w; ++j) {
            const double xh = (xr[j] - mean) * r_inv;
            xhat[static_cast<size_t>(r * w + j)] = xh;
            out.values()[r * w + j] = xh * gain.values()[j] + shift.values()[j];
        }
    }
    check_finite("layer_norm", out.values());
    if (any_grad({&x, &gain, &shift})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto gd = gain.data_ptr();
        auto sd = shift.data_ptr();
        auto od = out.data_ptr();
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
        active_tape()->record("layer_norm", [xd, gd, sd, od, xh, is, rows, w]() {
            if (gd->requires_grad) {
                ensure_g(*gd);
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < w; ++j) {
                        gd->g[j] += od->g[r * w + j] * (*xh)[static_cast<size_t>(r * w + j)];
                    }
                }
            }
            if (sd->requires_grad) {
                ensure_g(*sd);
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < w; ++j) sd->g[j] += od->g[r * w + j];
                }
            }
            if (xd->requires_grad) {
                ensure_g(*xd);
                for (int64_t r = 0; r < rows; ++r) {
                    double m_dxh = 0.0, m_dxh_xh = 0.0;
                    for (int64_t j = 0; j < w; ++j) {
                        const double dxh = od->g[r * w + j] * gd->v[j];
                        m_dxh += dxh;
                        m_dxh_xh += dxh * (*xh)[static_cast<size_t>(r * w + j)];
                    }
                    m_dxh /= static_cast<double>(w);
                    m_dxh_xh /= static_cast<double>(w);
                    const double r_inv = (*is)[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < w; ++j) {
                        const double dxh = od->g[r * w + j] * gd->v[j];
                        const double xhv = (*xh)[static_cast<size_t>(r * w + j)];
                        xd->g[r * w + j] += r_inv * (dxh - m_dxh - xhv * m_dxh_xh);
                    }
                }
            }
        });
    }
    return out;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
    if (x.rank() != 3 || kernel.rank() != 2 || kernel.dim(0) != x.dim(2)) {
        throw ShapeError("depthwise_conv1d: expects x {N,T,d} and kernel {d,k}, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
    }
    const int64_t n = x.dim(0), t_len = x.dim(1), d = x.dim(2), k = kernel.dim(1);
    const int64_t off = (k - 1) / 2;
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    double* ov = out.values().data();
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t t = 0; t < t_len; ++t) {
            for (int64_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (int64_t kk = 0; kk < k; ++kk) {
                    const int64_t tt = t + kk - off;
                    if (tt < 0 || tt >= t_len) continue;
                    s += kv[c * k + kk] * xv[(b * t_len + tt) * d + c];
                }
                ov[(b * t_len + t) * d + c] = s;
            }
        }
    }
    check_finite("depthwise_conv1d", out.values());
    if (any_grad({&x, &kernel})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto kd = kernel.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("depthwise_conv1d", [xd, kd, od, n, t_len, d, k, off]() {
            const double* go = od->g.data();
            if (kd->requires_grad) {
                ensure_g(*kd);
                for (int64_t b = 0; b < n; ++b) {
                    for (int64_t t = 0; t < t_len; ++t) {
                        for (int64_t c = 0; c < d; ++c) {
                            const double g = go[(b * t_len + t) * d + c];
                            for (int64_t kk = 0; kk < k; ++kk) {
                                const int64_t tt = t + kk - off;
                                if (tt < 0 || tt >= t_len) continue;
                                kd->g[c * k + kk] += g * xd->v[(b * t_len + tt) * d + c];
                            }
                        }
                    }
                }
            }
            if (xd->requires_grad) {
                ensure_g(*xd);
                for (int64_t b = 0; b < n; ++b) {
                    for (int64_t t = 0; t < t_len; ++t) {
                        for (int64_t c = 0; c < d; ++c) {
                            const double g = go[(b * t_len + t) * d + c];
                            for (int64_t kk = 0; kk < k; ++kk) {
                                const int64_t tt = t + kk - off;
                                if (tt < 0 || tt >= t_len) continue;
                                xd->g[(b * t_len + tt) * d + c] += g * kd->v[c * k + kk];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor strided_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride) {
    if (x.rank() != 3 || w.rank() != 3 || w.dim(1) != x.dim(2)) {
        throw ShapeError("strided_conv1d: expects x {N,T,c_in} and w {c_out,c_in,k}, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (stride < 1) throw ParamError("strided_conv1d: stride must be >= 1");
    const int64_t n = x.dim(0), t_len = x.dim(1), c_in = x.dim(2);
    const int64_t c_out = w.dim(0), k = w.dim(2);
    if (b.rank() != 1 || b.dim(0) != c_out) {
        throw ShapeError("strided_conv1d: bias must be {c_out}");
    }
    const int64_t t_out = (t_len + stride - 1) / stride;
    const int64_t pad_l = (k - stride) / 2;
    Tensor out = Tensor::zeros({n, t_out, c_out});
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    double* ov = out.values().data();
    for (int64_t bb = 0; bb < n; ++bb) {
        for (int64_t to = 0; to < t_out; ++to) {
            for (int64_t o = 0; o < c_out; ++o) {
                double s = b.values()[o];
                for (int64_t kk = 0; kk < k; ++kk) {
                    const int64_t tt = stride * to + kk - pad_l;
                    if (tt < 0 || tt >= t_len) continue;
                    const double* xr = xv + (bb * t_len + tt) * c_in;
                    const double* wr = wv + (o * c_in) * k + kk;
                    for (int64_t c = 0; c < c_in; ++c) s += wr[c * k] * xr[c];
                }
                ov[(bb * t_out + to) * c_out + o] = s;
            }
        }
    }
    check_finite("strided_conv1d", out.values());
    if (any_grad({&x, &w, &b})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto wd = w.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("strided_conv1d",
                              [xd, wd, bd, od, n, t_len, c_in, c_out, k, t_out, pad_l, stride]() {
            const double* go = od->g.data();
            for (int64_t bb = 0; bb < n; ++bb) {
                for (int64_t to = 0; to < t_out; ++to) {
                    for (int64_t o = 0; o < c_out; ++o) {
                        const double g = go[(bb * t_out + to) * c_out + o];
                        if (bd->requires_grad) {
                            ensure_g(*bd);
                            bd->g[o] += g;
                        }
                        for (int64_t kk = 0; kk < k; ++kk) {
                            const int64_t tt = stride * to + kk - pad_l;
                            if (tt < 0 || tt >= t_len) continue;
                            for (int64_t c = 0; c < c_in; ++c) {
                                if (wd->requires_grad) {
                                    ensure_g(*wd);
                                    wd->g[(o * c_in + c) * k + kk] +=
                                        g * xd->v[(bb * t_len + tt) * c_in + c];
                                }
                                if (xd->requires_grad) {
                                    ensure_g(*xd);
                                    xd->g[(bb * t_len + tt) * c_in + c] +=
                                        g * wd->v[(o * c_in + c) * k + kk];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor transposed_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride) {
    if (x.rank() != 3 || w.rank() != 3 || w.dim(0) != x.dim(2)) {
        throw ShapeError("transposed_conv1d: expects x {N,T',c_in} and w {c_in,c_out,k}, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (stride < 1) throw ParamError("transposed_conv1d: stride must be >= 1");
    const int64_t n = x.dim(0), t_in = x.dim(1), c_in = x.dim(2);
    const int64_t c_out = w.dim(1), k = w.dim(2);
    if (b.rank() != 1 || b.dim(0) != c_out) {
        throw ShapeError("transposed_conv1d: bias must be {c_out}");
    }
    const int64_t t_out = stride * t_in;
    const int64_t pad_l = (k - stride) / 2;
    Tensor out = Tensor::zeros({n, t_out, c_out});
    double* ov = out.values().data();
    for (int64_t bb = 0; bb < n; ++bb) {
        for (int64_t to = 0; to < t_out; ++to) {
            for (int64_t o = 0; o < c_out; ++o) ov[(bb * t_out + to) * c_out + o] = b.values()[o];
        }
        for (int64_t ti = 0; ti < t_in; ++ti) {
            const double* xr = x.values().data() + (bb * t_in + ti) * c_in;
            for (int64_t kk = 0; kk < k; ++kk) {
                const int64_t to = stride * ti + kk - pad_l;
                if (to < 0 || to >= t_out) continue;
                double* orow = ov + (bb * t_out + to) * c_out;
                for (int64_t c = 0; c < c_in; ++c) {
                    const double xv = xr[c];
                    const double* wr = w.values().data() + (c * c_out) * k + kk;
                    for (int64_t o = 0; o < c_out; ++o) orow[o] += wr[o * k] * xv;
                }
            }
        }
    }
    check_finite("transposed_conv1d", out.values());
    if (any_grad({&x, &w, &b})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto wd = w.data_ptr();
        auto bd = b.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("transposed_conv1d",
                              [xd, wd, bd, od, n, t_in, c_in, c_out, k, t_out, pad_l, stride]() {
            const double* go = od->g.data();
            if (bd->requires_grad) {
                ensure_g(*bd);
                for (int64_t bb = 0; bb < n; ++bb) {
                    for (int64_t to = 0; to < t_out; ++to) {
                        for (int64_t o = 0; o < c_out; ++o) {
                            bd->g[o] += go[(bb * t_out + to) * c_out + o];
                        }
                    }
                }
            }
            for (int64_t bb = 0; bb < n; ++bb) {
                for (int64_t ti = 0; ti < t_in; ++ti) {
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const int64_t to = stride * ti + kk - pad_l;
                        if (to < 0 || to >= t_out) continue;
                        const double* grow = go + (bb * t_out + to) * c_out;
                        for (int64_t c = 0; c < c_in; ++c) {
                            if (wd->requires_grad) {
                                ensure_g(*wd);
                                const double xv = xd->v[(bb * t_in + ti) * c_in + c];
                                for (int64_t o = 0; o < c_out; ++o) {
                                    wd->g[(c * c_out + o) * k + kk] += grow[o] * xv;
                                }
                            }
                            if (xd->requires_grad) {
                                ensure_g(*xd);
                                double s = 0.0;
                                for (int64_t o = 0; o < c_out; ++o) {
                                    s += grow[o] * wd->v[(c * c_out + o) * k + kk];
                                }
                                xd->g[(bb * t_in + ti) * c_in + c] += s;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor dropout(const Tensor& x, double rate, uint64_t stream_key, bool active) {
    if (rate < 0.0 || rate >= 1.0) throw ParamError("dropout: rate must be in [0,1)");
    if (!active || rate == 0.0) {
        // identity in eval mode / at rate 0; still a tape node so grads flow
        return add_scalar(x, 0.0);
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor out = Tensor::zeros(x.shape());
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) {
        const bool keep = hash01(stream_key, static_cast<uint64_t>(i)) >= rate;
        out.values()[i] = keep ? x.values()[i] * scale : 0.0;
    }
    check_finite("dropout", out.values());
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("dropout", [xd, od, rate, scale, stream_key]() {
            ensure_g(*xd);
            const int64_t m = static_cast<int64_t>(xd->v.size());
            for (int64_t i = 0; i < m; ++i) {
                const bool keep = hash01(stream_key, static_cast<uint64_t>(i)) >= rate;
                if (keep) xd->g[i] += od->g[i] * scale;
            }
        });
    }
    return out;
}

Tensor broadcast_time(const Tensor& x, int64_t t_len) {
    if (x.rank() != 2) throw ShapeError("broadcast_time: expects {N,d}, got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros({n, t_len, d});
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t t = 0; t < t_len; ++t) {
            std::memcpy(out.values().data() + (b * t_len + t) * d, x.values().data() + b * d,
                        static_cast<size_t>(d) * sizeof(double));
        }
    }
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("broadcast_time", [xd, od, n, t_len, d]() {
            ensure_g(*xd);
            for (int64_t b = 0; b < n; ++b) {
                for (int64_t t = 0; t < t_len; ++t) {
                    for (int64_t j = 0; j < d; ++j) {
                        xd->g[b * d + j] += od->g[(b * t_len + t) * d + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor outer_sum(const Tensor& rows, const Tensor& cols) {
    if (rows.rank() != 1 || cols.rank() != 1) {
        throw ShapeError("outer_sum: expects two rank-1 tensors");
    }
    const int64_t n = rows.dim(0), m = cols.dim(0);
    Tensor out = Tensor::zeros({n, m});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) {
            out.values()[i * m + j] = rows.values()[i] + cols.values()[j];
        }
    }
    check_finite("outer_sum", out.values());
    if (any_grad({&rows, &cols})) {
        out.set_requires_grad(true);
        auto rd = rows.data_ptr();
        auto cd = cols.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("outer_sum", [rd, cd, od, n, m]() {
            if (rd->requires_grad) {
                ensure_g(*rd);
                for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < m; ++j) rd->g[i] += od->g[i * m + j];
                }
            }
            if (cd->requires_grad) {
                ensure_g(*cd);
                for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < m; ++j) cd->g[j] += od->g[i * m + j];
                }
            }
        });
    }
    return out;
}

Tensor transpose2d(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose2d: expects rank-2, got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), m = x.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) out.values()[j * n + i] = x.values()[i * m + j];
    }
    if (any_grad({&x})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("transpose2d", [xd, od, n, m]() {
            ensure_g(*xd);
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t j = 0; j < m; ++j) xd->g[i * m + j] += od->g[j * n + i];
            }
        });
    }
    return out;
}

Tensor rsqrt_guarded(const Tensor& x) {
    return unary_op(
        "rsqrt_guarded", x,
        [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; },
        [](double v, double) { return v > 0.0 ? -0.5 / (v * std::sqrt(v)) : 0.0; });
}

Tensor graph_mix(const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
        throw ShapeError("graph_mix: adjacency must be square, got " + shape_str(a.shape()));
    }
    if (x.rank() < 1 || x.dim(0) != a.dim(0)) {
        throw ShapeError("graph_mix: node axes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(x.shape()));
    }
    const int64_t n = a.dim(0);
    const int64_t rest = x.size() / n;
    Tensor out = Tensor::zeros(x.shape());
    const double* av = a.values().data();
    const double* xv = x.values().data();
    double* ov = out.values().data();
#ifdef _OPENMP
#pragma omp parallel for if (n * n * rest > 16384)
#endif
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t r = 0; r < rest; ++r) {
            InvariantAccumulator acc;
            for (int64_t j = 0; j < n; ++j) acc.add(av[i * n + j] * xv[j * rest + r]);
            ov[i * rest + r] = acc.value();
        }
    }
    check_finite("graph_mix", out.values());
    if (any_grad({&a, &x})) {
        out.set_requires_grad(true);
        auto ad = a.data_ptr();
        auto xd = x.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("graph_mix", [ad, xd, od, n, rest]() {
            const double* go = od->g.data();
            if (ad->requires_grad) {
                ensure_g(*ad);
                for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (int64_t r = 0; r < rest; ++r) {
                            s += go[i * rest + r] * xd->v[j * rest + r];
                        }
                        ad->g[i * n + j] += s;
                    }
                }
            }
            if (xd->requires_grad) {
                ensure_g(*xd);
                for (int64_t j = 0; j < n; ++j) {
                    for (int64_t i = 0; i < n; ++i) {
                        const double aij = ad->v[i * n + j];
                        if (aij == 0.0) continue;
                        for (int64_t r = 0; r < rest; ++r) {
                            xd->g[j * rest + r] += aij * go[i * rest + r];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor ssm_scan(const Tensor& x, const Tensor& a, const Tensor& w_dt, const Tensor& b_dt,
                const Tensor& w_b, const Tensor& w_c, const Tensor& skip) {
    if (x.rank() != 3) throw ShapeError("ssm_scan: x must be {N,T,d}, got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), t_len = x.dim(1), d = x.dim(2);
    if (a.rank() != 2 || a.dim(0) != d) {
        throw ShapeError("ssm_scan: a must be {d,n_state}, got " + shape_str(a.shape()));
    }
    const int64_t ns = a.dim(1);
    if (w_dt.rank() != 2 || w_dt.dim(0) != d || w_dt.dim(1) != d || b_dt.dim(0) != d ||
        w_b.dim(0) != d || w_b.dim(1) != ns || w_c.dim(0) != d || w_c.dim(1) != ns ||
        skip.dim(0) != d) {
        throw ShapeError("ssm_scan: parameter shapes inconsistent with d=" + std::to_string(d) +
                         ", n_state=" + std::to_string(ns));
    }
    Tensor out = Tensor::zeros(x.shape());
    auto delta = std::make_shared<std::vector<double>>(static_cast<size_t>(n * t_len * d));
    auto bmat = std::make_shared<std::vector<double>>(static_cast<size_t>(n * t_len * ns));
    auto cmat = std::make_shared<std::vector<double>>(static_cast<size_t>(n * t_len * ns));
    auto hbuf = std::make_shared<std::vector<double>>(static_cast<size_t>(n * t_len * d * ns));
    auto abuf = std::make_shared<std::vector<double>>(static_cast<size_t>(n * t_len * d * ns));

    const double* xv = x.values().data();
    const double* av = a.values().data();
    const double* wdtv = w_dt.values().data();
    const double* bdtv = b_dt.values().data();
    const double* wbv = w_b.values().data();
    const double* wcv = w_c.values().data();
    const double* dv = skip.values().data();
    double* ov = out.values().data();
#ifdef _OPENMP
#pragma omp parallel for if (n > 1 && t_len * d * ns > 4096)
#endif
    for (int64_t b = 0; b < n; ++b) {
        std::vector<double> h(static_cast<size_t>(d * ns), 0.0);
        for (int64_t t = 0; t < t_len; ++t) {
            const double* xt = xv + (b * t_len + t) * d;
            double* dl = delta->data() + (b * t_len + t) * d;
            double* bt = bmat->data() + (b * t_len + t) * ns;
            double* ct = cmat->data() + (b * t_len + t) * ns;
            for (int64_t dd = 0; dd < d; ++dd) {
                double s = bdtv[dd];
                for (int64_t e = 0; e < d; ++e) s += xt[e] * wdtv[e * d + dd];
                dl[dd] = softplus_val(s);
            }
            for (int64_t nn = 0; nn < ns; ++nn) {
                double sb = 0.0, sc = 0.0;
                for (int64_t e = 0; e < d; ++e) {
                    sb += xt[e] * wbv[e * ns + nn];
                    sc += xt[e] * wcv[e * ns + nn];
                }
                bt[nn] = sb;
                ct[nn] = sc;
            }
            double* ht = hbuf->data() + ((b * t_len + t) * d) * ns;
            double* at = abuf->data() + ((b * t_len + t) * d) * ns;
            for (int64_t dd = 0; dd < d; ++dd) {
                double y = dv[dd] * xt[dd];
                const double dlx = dl[dd] * xt[dd];
                for (int64_t nn = 0; nn < ns; ++nn) {
                    const double abar = std::exp(dl[dd] * av[dd * ns + nn]);
                    const double hv = abar * h[static_cast<size_t>(dd * ns + nn)] + dlx * bt[nn];
                    h[static_cast<size_t>(dd * ns + nn)] = hv;
                    ht[dd * ns + nn] = hv;
                    at[dd * ns + nn] = abar;
                    y += ct[nn] * hv;
                }
                ov[(b * t_len + t) * d + dd] = y;
            }
        }
    }
    check_finite("ssm_scan", out.values());
    if (any_grad({&x, &a, &w_dt, &b_dt, &w_b, &w_c, &skip})) {
        out.set_requires_grad(true);
        auto xd = x.data_ptr();
        auto ad = a.data_ptr();
        auto wdtd = w_dt.data_ptr();
        auto bdtd = b_dt.data_ptr();
        auto wbd = w_b.data_ptr();
        auto wcd = w_c.data_ptr();
        auto skd = skip.data_ptr();
        auto od = out.data_ptr();
        active_tape()->record("ssm_scan", [=]() {
            ensure_g(*xd);
            ensure_g(*ad);
            ensure_g(*wdtd);
            ensure_g(*bdtd);
            ensure_g(*wbd);
            ensure_g(*wcd);
            ensure_g(*skd);
            const double* go = od->g.data();
            std::vector<double> dh(static_cast<size_t>(d * ns));
            std::vector<double> ddl(static_cast<size_t>(d));
            std::vector<double> dbt(static_cast<size_t>(ns));
            std::vector<double> dct(static_cast<size_t>(ns));
            for (int64_t b = 0; b < n; ++b) {
                std::fill(dh.begin(), dh.end(), 0.0);
                for (int64_t t = t_len - 1; t >= 0; --t) {
                    const double* xt = xd->v.data() + (b * t_len + t) * d;
                    const double* dl = delta->data() + (b * t_len + t) * d;
                    const double* bt = bmat->data() + (b * t_len + t) * ns;
                    const double* ct = cmat->data() + (b * t_len + t) * ns;
                    const double* ht = hbuf->data() + ((b * t_len + t) * d) * ns;
                    const double* at = abuf->data() + ((b * t_len + t) * d) * ns;
                    const double* hprev =
                        (t > 0) ? hbuf->data() + ((b * t_len + t - 1) * d) * ns : nullptr;
                    const double* gy = go + (b * t_len + t) * d;
                    double* gx = xd->g.data() + (b * t_len + t) * d;
                    std::fill(ddl.begin(), ddl.end(), 0.0);
                    std::fill(dbt.begin(), dbt.end(), 0.0);
                    std::fill(dct.begin(), dct.end(), 0.0);
                    for (int64_t dd = 0; dd < d; ++dd) {
                        const double g = gy[dd];
                        skd->g[dd] += g * xt[dd];
                        gx[dd] += g * skd->v[dd];
                        for (int64_t nn = 0; nn < ns; ++nn) {
                            dct[static_cast<size_t>(nn)] += g * ht[dd * ns + nn];
                            dh[static_cast<size_t>(dd * ns + nn)] += g * ct[nn];
                        }
                        // state update: h = abar*h_prev + dl*bt*x
                        double dsum_dl = 0.0;
                        double dx_state = 0.0;
                        for (int64_t nn = 0; nn < ns; ++nn) {
                            const double dhv = dh[static_cast<size_t>(dd * ns + nn)];
                            const double hp = hprev ? hprev[dd * ns + nn] : 0.0;
                            const double abar = at[dd * ns + nn];
                            dsum_dl += dhv * hp * ad->v[dd * ns + nn] * abar;
                            ad->g[dd * ns + nn] += dhv * hp * dl[dd] * abar;
                            dsum_dl += dhv * bt[nn] * xt[dd];
                            dbt[static_cast<size_t>(nn)] += dhv * dl[dd] * xt[dd];
                            dx_state += dhv * dl[dd] * bt[nn];
                            dh[static_cast<size_t>(dd * ns + nn)] = dhv * abar;
                        }
                        ddl[static_cast<size_t>(dd)] += dsum_dl;
                        gx[dd] += dx_state;
                    }
                    // delta = softplus(x W_dt + b_dt); sigmoid(s) = 1 - exp(-delta)
                    for (int64_t dd = 0; dd < d; ++dd) {
                        const double ds = ddl[static_cast<size_t>(dd)] * (1.0 - std::exp(-dl[dd]));
                        bdtd->g[dd] += ds;
                        for (int64_t e = 0; e < d; ++e) {
                            wdtd->g[e * d + dd] += xt[e] * ds;
                            xd->g[(b * t_len + t) * d + e] += ds * wdtd->v[e * d + dd];
                        }
                    }
                    for (int64_t nn = 0; nn < ns; ++nn) {
                        const double gb = dbt[static_cast<size_t>(nn)];
                        const double gc = dct[static_cast<size_t>(nn)];
                        for (int64_t e = 0; e < d; ++e) {
                            wbd->g[e * ns + nn] += xt[e] * gb;
                            wcd->g[e * ns + nn] += xt[e] * gc;
                            xd->g[(b * t_len + t) * d + e] +=
                                gb * wbd->v[e * ns + nn] + gc * wcd->v[e * ns + nn];
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace ops
}  // namespace stv

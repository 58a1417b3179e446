#include "spindrop/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "spindrop/parallel.hpp"

namespace spindrop {

namespace {
WarningHandler g_warning_handler = nullptr;
std::mutex g_warning_mutex;

void default_warning(const std::string& msg) { std::fprintf(stderr, "[spindrop] warning: %s\n", msg.c_str()); }
}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
    std::lock_guard<std::mutex> lock(g_warning_mutex);
    WarningHandler old = g_warning_handler;
    g_warning_handler = h;
    return old;
}

void emit_warning(const std::string& msg) {
    WarningHandler h;
    {
        std::lock_guard<std::mutex> lock(g_warning_mutex);
        h = g_warning_handler;
    }
    (h ? h : &default_warning)(msg);
}

Tensor4::Tensor4(int n_, int c_, int h_, int w_, double fill) : n(n_), c(c_), h(h_), w(w_) {
    if (n < 1 || c < 1 || h < 1 || w < 1)
        throw ShapeError("Tensor4 dims must all be >= 1, got " + shape_str());
    v.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor4::shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

void Tensor4::check_finite(const char* what) const {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(std::string(what) + " produced a non-finite value");
    }
}

void ConvWeight::validate() const {
    if (proxy.h != proxy.w) throw ShapeError("kernel must be square, got " + proxy.shape_str());
    if (proxy.h < 1) throw ShapeError("kernel size must be >= 1");
    if (stride < 1) throw ParamError("stride must be positive");
    if (pad < 0) throw ParamError("padding must be non-negative");
    proxy.check_finite("ConvWeight.proxy");
}

void ConvWeight::refresh_binary() { signs = binarize(normalize_weights(*this)); }

Tensor4 normalize_weights(const ConvWeight& w) {
    w.proxy.check_finite("normalize_weights input");
    const auto& p = w.proxy.v;
    const double n = static_cast<double>(p.size());
    double sum = 0.0;
    for (double x : p) sum += x;
    const double mu = sum / n;
    double sq = 0.0;
    for (double x : p) sq += (x - mu) * (x - mu);
    const double sigma = std::sqrt(sq / n);

    Tensor4 out = w.proxy;
    if (sigma <= 1e-12 * std::max(1.0, std::fabs(mu))) {
        std::fill(out.v.begin(), out.v.end(), 0.0);
        emit_warning("degenerate layer: all " + std::to_string(p.size()) +
                     " weights equal, normalized to zero");
        return out;
    }
    for (double& x : out.v) x = (x - mu) / sigma;
    return out;
}

Tensor4 binarize(const Tensor4& normalized) {
    normalized.check_finite("binarize input");
    Tensor4 out = normalized;
    for (double& x : out.v) x = (x >= 0.0) ? 1.0 : -1.0;
    return out;
}

Tensor4 ste_backward(const Tensor4& upstream, const Tensor4& pre_sign, double clip) {
    if (!upstream.same_shape(pre_sign))
        throw ShapeError("ste_backward shape mismatch: upstream " + upstream.shape_str() +
                         " vs pre_sign " + pre_sign.shape_str());
    Tensor4 out = upstream;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        if (std::fabs(pre_sign.v[i]) > clip) out.v[i] = 0.0;
    }
    return out;
}

namespace {
int conv_out_dim(int in, int k, int s, int pad) { return (in + 2 * pad - k) / s + 1; }
}  // namespace

Tensor4 conv2d(const Tensor4& x, const ConvWeight& w, bool weights_binary) {
    w.validate();
    if (x.c != w.c_in())
        throw ShapeError("conv2d channel mismatch: input " + x.shape_str() + " vs weight " +
                         w.proxy.shape_str());
    const int k = w.k(), s = w.stride, pad = w.pad;
    const int oh = conv_out_dim(x.h, k, s, pad);
    const int ow = conv_out_dim(x.w, k, s, pad);
    if (oh < 1 || ow < 1)
        throw ShapeError("conv2d output dims degenerate for input " + x.shape_str() +
                         " and weight " + w.proxy.shape_str());
    const Tensor4& wt = weights_binary ? w.signs : w.proxy;
    if (!wt.same_shape(w.proxy))
        throw ShapeError("conv2d binary view shape " + wt.shape_str() + " inconsistent with proxy " +
                         w.proxy.shape_str());

    Tensor4 out(x.n, w.c_out(), oh, ow);
    parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t bi) {
        const int b = static_cast<int>(bi);
        for (int oc = 0; oc < w.c_out(); ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int ic = 0; ic < x.c; ++ic) {
                        double part = 0.0;  // one row-group of the crossbar
                        for (int ki = 0; ki < k; ++ki) {
                            const int iy = oy * s - pad + ki;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kj = 0; kj < k; ++kj) {
                                const int ix = ox * s - pad + kj;
                                if (ix < 0 || ix >= x.w) continue;
                                part += x.at(b, ic, iy, ix) * wt.at(oc, ic, ki, kj);
                            }
                        }
                        acc += part;
                    }
                    out.at(b, oc, oy, ox) = acc;
                }
            }
        }
    });
    out.check_finite("conv2d");
    return out;
}

Tensor4 linear(const Tensor4& x, const ConvWeight& w, const std::vector<double>& bias,
               bool weights_binary, int accum_group) {
    if (x.h != 1 || x.w != 1)
        throw ShapeError("linear expects flattened (N,C,1,1) input, got " + x.shape_str());
    if (x.c != w.c_in())
        throw ShapeError("linear dimension mismatch: input " + x.shape_str() + " vs weight " +
                         w.proxy.shape_str());
    if (!bias.empty() && static_cast<int>(bias.size()) != w.c_out())
        throw ShapeError("linear bias length " + std::to_string(bias.size()) + " vs out dim " +
                         std::to_string(w.c_out()));
    if (accum_group < 1 || x.c % accum_group != 0)
        throw ParamError("linear accum_group must divide the input length");
    const Tensor4& wt = weights_binary ? w.signs : w.proxy;

    Tensor4 out(x.n, w.c_out(), 1, 1);
    for (int b = 0; b < x.n; ++b) {
        for (int o = 0; o < w.c_out(); ++o) {
            double acc = 0.0;
            for (int g = 0; g < x.c; g += accum_group) {
                double part = 0.0;
                for (int i = g; i < g + accum_group; ++i) part += x.at(b, i, 0, 0) * wt.at(o, i, 0, 0);
                acc += part;
            }
            out.at(b, o, 0, 0) = acc + (bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)]);
        }
    }
    out.check_finite("linear");
    return out;
}

Tensor4 avgpool2d(const Tensor4& x, int k, int s) {
    if (k < 1 || s < 1) throw ParamError("avgpool2d window and stride must be positive");
    const int oh = (x.h - k) / s + 1;
    const int ow = (x.w - k) / s + 1;
    if (oh < 1 || ow < 1) throw ShapeError("avgpool2d window exceeds input " + x.shape_str());
    Tensor4 out(x.n, x.c, oh, ow);
    const double inv = 1.0 / (k * k);
    for (int b = 0; b < x.n; ++b)
        for (int c = 0; c < x.c; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj) acc += x.at(b, c, oy * s + ki, ox * s + kj);
                    out.at(b, c, oy, ox) = acc * inv;
                }
    return out;
}

Tensor4 adaptive_avgpool_to_1x1(const Tensor4& x) {
    Tensor4 out(x.n, x.c, 1, 1);
    const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
    for (int b = 0; b < x.n; ++b)
        for (int c = 0; c < x.c; ++c) {
            double acc = 0.0;
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) acc += x.at(b, c, y, xx);
            out.at(b, c, 0, 0) = acc * inv;
        }
    return out;
}

Tensor4 sign_activation(const Tensor4& x) {
    Tensor4 out = x;
    for (double& v : out.v) v = (v >= 0.0) ? 1.0 : -1.0;
    return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw ParamError("softmax on empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& p : out) p /= z;
    return out;
}

BatchNormStats batchnorm_stats(const Tensor4& x) {
    BatchNormStats st;
    st.mean.assign(static_cast<std::size_t>(x.c), 0.0);
    st.var.assign(static_cast<std::size_t>(x.c), 0.0);
    const double count = static_cast<double>(x.n) * x.h * x.w;
    for (int c = 0; c < x.c; ++c) {
        double sum = 0.0;
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) sum += x.at(b, c, y, xx);
        const double mu = sum / count;
        double sq = 0.0;
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    const double d = x.at(b, c, y, xx) - mu;
                    sq += d * d;
                }
        st.mean[static_cast<std::size_t>(c)] = mu;
        st.var[static_cast<std::size_t>(c)] = sq / count;
    }
    return st;
}

Tensor4 batchnorm_apply(const Tensor4& x, const std::vector<double>& mean,
                        const std::vector<double>& var, const std::vector<double>& gamma,
                        const std::vector<double>& beta, double eps) {
    if (static_cast<int>(mean.size()) != x.c || static_cast<int>(var.size()) != x.c ||
        static_cast<int>(gamma.size()) != x.c || static_cast<int>(beta.size()) != x.c)
        throw ShapeError("batchnorm parameter length mismatch for input " + x.shape_str());
    Tensor4 out = x;
    for (int c = 0; c < x.c; ++c) {
        const std::size_t ci = static_cast<std::size_t>(c);
        const double inv = 1.0 / std::sqrt(var[ci] + eps);
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx)
                    out.at(b, c, y, xx) = gamma[ci] * ((x.at(b, c, y, xx) - mean[ci]) * inv) + beta[ci];
    }
    out.check_finite("batchnorm");
    return out;
}

Tensor4 conv2d_backward_input(const Tensor4& grad_out, const ConvWeight& w, int in_h, int in_w,
                              bool weights_binary) {
    const Tensor4& wt = weights_binary ? w.signs : w.proxy;
    const int k = w.k(), s = w.stride, pad = w.pad;
    Tensor4 dx(grad_out.n, w.c_in(), in_h, in_w);
    parallel_for(static_cast<std::size_t>(grad_out.n), [&](std::size_t bi) {
        const int b = static_cast<int>(bi);
        for (int oc = 0; oc < grad_out.c; ++oc)
            for (int oy = 0; oy < grad_out.h; ++oy)
                for (int ox = 0; ox < grad_out.w; ++ox) {
                    const double g = grad_out.at(b, oc, oy, ox);
                    for (int ic = 0; ic < w.c_in(); ++ic)
                        for (int ki = 0; ki < k; ++ki) {
                            const int iy = oy * s - pad + ki;
                            if (iy < 0 || iy >= in_h) continue;
                            for (int kj = 0; kj < k; ++kj) {
                                const int ix = ox * s - pad + kj;
                                if (ix < 0 || ix >= in_w) continue;
                                dx.at(b, ic, iy, ix) += g * wt.at(oc, ic, ki, kj);
                            }
                        }
                }
    });
    return dx;
}

Tensor4 conv2d_backward_weights(const Tensor4& grad_out, const Tensor4& x, const ConvWeight& w) {
    const int k = w.k(), s = w.stride, pad = w.pad;
    Tensor4 dw(w.c_out(), w.c_in(), k, k);
    parallel_for(static_cast<std::size_t>(w.c_out()), [&](std::size_t oci) {
        const int oc = static_cast<int>(oci);
        for (int b = 0; b < grad_out.n; ++b)
            for (int oy = 0; oy < grad_out.h; ++oy)
                for (int ox = 0; ox < grad_out.w; ++ox) {
                    const double g = grad_out.at(b, oc, oy, ox);
                    for (int ic = 0; ic < x.c; ++ic)
                        for (int ki = 0; ki < k; ++ki) {
                            const int iy = oy * s - pad + ki;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kj = 0; kj < k; ++kj) {
                                const int ix = ox * s - pad + kj;
                                if (ix < 0 || ix >= x.w) continue;
                                dw.at(oc, ic, ki, kj) += g * x.at(b, ic, iy, ix);
                            }
                        }
                }
    });
    return dw;
}

Tensor4 linear_backward_input(const Tensor4& grad_out, const ConvWeight& w, bool weights_binary) {
    const Tensor4& wt = weights_binary ? w.signs : w.proxy;
    Tensor4 dx(grad_out.n, w.c_in(), 1, 1);
    for (int b = 0; b < grad_out.n; ++b)
        for (int i = 0; i < w.c_in(); ++i) {
            double acc = 0.0;
            for (int o = 0; o < w.c_out(); ++o) acc += grad_out.at(b, o, 0, 0) * wt.at(o, i, 0, 0);
            dx.at(b, i, 0, 0) = acc;
        }
    return dx;
}

Tensor4 linear_backward_weights(const Tensor4& grad_out, const Tensor4& x) {
    Tensor4 dw(grad_out.c, x.c, 1, 1);
    for (int o = 0; o < grad_out.c; ++o)
        for (int i = 0; i < x.c; ++i) {
            double acc = 0.0;
            for (int b = 0; b < grad_out.n; ++b) acc += grad_out.at(b, o, 0, 0) * x.at(b, i, 0, 0);
            dw.at(o, i, 0, 0) = acc;
        }
    return dw;
}

std::vector<double> linear_backward_bias(const Tensor4& grad_out) {
    std::vector<double> db(static_cast<std::size_t>(grad_out.c), 0.0);
    for (int o = 0; o < grad_out.c; ++o)
        for (int b = 0; b < grad_out.n; ++b) db[static_cast<std::size_t>(o)] += grad_out.at(b, o, 0, 0);
    return db;
}

Tensor4 avgpool2d_backward(const Tensor4& grad_out, int k, int s, int in_h, int in_w) {
    Tensor4 dx(grad_out.n, grad_out.c, in_h, in_w);
    const double inv = 1.0 / (k * k);
    for (int b = 0; b < grad_out.n; ++b)
        for (int c = 0; c < grad_out.c; ++c)
            for (int oy = 0; oy < grad_out.h; ++oy)
                for (int ox = 0; ox < grad_out.w; ++ox) {
                    const double g = grad_out.at(b, c, oy, ox) * inv;
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj) dx.at(b, c, oy * s + ki, ox * s + kj) += g;
                }
    return dx;
}

}  // namespace spindrop

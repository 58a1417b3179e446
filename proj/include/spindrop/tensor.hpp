#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spindrop/errors.hpp"

namespace spindrop {

// Dense NCHW tensor of doubles. Every operation in this module is
// deterministic: reductions run in a fixed order so results are
// bit-identical across runs and thread counts.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, double fill = 0.0);

    double& at(int b, int ch, int y, int x) {
        return v[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
    }
    double at(int b, int ch, int y, int x) const {
        return v[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
    }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    std::string shape_str() const;

    // Throws Error if any element is NaN/Inf; `what` names the producing op.
    void check_finite(const char* what) const;
};

// Convolution (or, with k == 1, fully connected) weights. `proxy` holds the
// real-valued latent weights updated by SGD, `signs` the current binarized
// view computed as binarize(normalize_weights(proxy)).
struct ConvWeight {
    Tensor4 proxy;  // (C_out, C_in, K, K)
    Tensor4 signs;  // same shape, values in {-1, +1}
    int stride = 1;
    int pad = 0;

    int c_out() const { return proxy.n; }
    int c_in() const { return proxy.c; }
    int k() const { return proxy.h; }

    void validate() const;
    // Recompute `signs` from `proxy` (normalize, then sign).
    void refresh_binary();
};

// --- binarization pipeline ----------------------------------------------

// (proxy - mean) / std over the whole layer tensor (population std).
// All-equal weights are degenerate: returns all zeros and emits a warning.
Tensor4 normalize_weights(const ConvWeight& w);

// Elementwise sign with sign(0) = +1.
Tensor4 binarize(const Tensor4& normalized);

// Straight-through estimator: passes upstream gradient where
// |pre_sign| <= clip, zero elsewhere. `pre_sign` is whatever tensor the
// sign function consumed in the forward pass.
Tensor4 ste_backward(const Tensor4& upstream, const Tensor4& pre_sign, double clip);

// --- forward ops ----------------------------------------------------------

// Direct convolution. Accumulation is hierarchical by construction: a
// per-input-channel partial sum over the (ki, kj) kernel window, then the
// channel partials added in channel order. The crossbar simulator
// accumulates its row groups in exactly this order, which is what makes the
// two engines bit-identical (not merely close) on shared inputs.
Tensor4 conv2d(const Tensor4& x, const ConvWeight& w, bool weights_binary);

// Affine map y = W x + b on flattened (N, C, 1, 1) inputs. `accum_group`
// fixes the summation association: inputs are summed in contiguous groups
// of that size, then group partials in group order (1 = flat). Layers fed
// by a flatten boundary use group = H*W so the reference path matches the
// crossbar's row-group accumulation.
Tensor4 linear(const Tensor4& x, const ConvWeight& w, const std::vector<double>& bias,
               bool weights_binary, int accum_group = 1);

// Average pooling with square window `k`, stride `s`, no padding.
Tensor4 avgpool2d(const Tensor4& x, int k, int s);

// Global average pool to (N, C, 1, 1).
Tensor4 adaptive_avgpool_to_1x1(const Tensor4& x);

// Elementwise sign with sign(0) = +1.
Tensor4 sign_activation(const Tensor4& x);

// Row-wise softmax over class logits; each output row sums to 1 (+-1e-9).
std::vector<double> softmax(const std::vector<double>& logits);

// Batch normalization statistics helper (population variance over N*H*W per
// channel). The stateful layer lives in net.hpp; this is the pure kernel.
struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> var;
};
BatchNormStats batchnorm_stats(const Tensor4& x);
Tensor4 batchnorm_apply(const Tensor4& x, const std::vector<double>& mean,
                        const std::vector<double>& var, const std::vector<double>& gamma,
                        const std::vector<double>& beta, double eps);

// --- backward kernels (fixed small-topology backprop) ----------------------

// Gradient of conv2d w.r.t. its input for the given weights.
Tensor4 conv2d_backward_input(const Tensor4& grad_out, const ConvWeight& w, int in_h, int in_w,
                              bool weights_binary);
// Gradient of conv2d w.r.t. the (binary or real) weight tensor.
Tensor4 conv2d_backward_weights(const Tensor4& grad_out, const Tensor4& x, const ConvWeight& w);

Tensor4 linear_backward_input(const Tensor4& grad_out, const ConvWeight& w, bool weights_binary);
Tensor4 linear_backward_weights(const Tensor4& grad_out, const Tensor4& x);
std::vector<double> linear_backward_bias(const Tensor4& grad_out);

Tensor4 avgpool2d_backward(const Tensor4& grad_out, int k, int s, int in_h, int in_w);

}  // namespace spindrop

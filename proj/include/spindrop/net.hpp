#pragma once

#include <string>
#include <variant>
#include <vector>

#include "spindrop/dropout.hpp"
#include "spindrop/rng.hpp"
#include "spindrop/tensor.hpp"

namespace spindrop {

// Layers of the fixed small-topology networks this artifact trains and
// simulates. Conv/linear layers carry real-valued proxy weights plus their
// current binarized view; spatial dropout is attached to the *input* of a
// conv/linear layer (that is where the crossbar drops word-line groups).

struct ConvLayer {
    ConvWeight w;
    bool binary = true;
    bool input_dropout = false;  // set via DropoutPlacement
};

struct LinearLayer {
    ConvWeight w;  // (out, in, 1, 1)
    std::vector<double> bias;
    bool binary = true;
    // Summation association: inputs are accumulated in contiguous groups of
    // this size (H*W at a flatten boundary, 1 otherwise). Matches the
    // crossbar's row-group accumulation order.
    int accum_group = 1;
    bool input_dropout = false;
    // Dropout grouping when placed: drop_channels feature groups of
    // drop_group consecutive rows each (flatten mode: group = H*W;
    // post-avgpool mode: group = 1).
    int drop_channels = 0;
    int drop_group = 1;
    bool resample_per_read = false;  // post-avgpool mode: no hold, fresh draw per read
};

struct BatchNormLayer {
    std::vector<double> gamma, beta;
    std::vector<double> run_mean, run_var;
    double eps = 1e-5;
    double momentum = 0.1;

    explicit BatchNormLayer(int channels = 0)
        : gamma(channels, 1.0), beta(channels, 0.0), run_mean(channels, 0.0), run_var(channels, 1.0) {}
    int channels() const { return static_cast<int>(gamma.size()); }
};

struct SignLayer {};
struct AvgPoolLayer {
    int k = 2, s = 2;
};
struct AdaptivePoolLayer {};
struct FlattenLayer {};

using Layer =
    std::variant<ConvLayer, BatchNormLayer, SignLayer, AvgPoolLayer, AdaptivePoolLayer, FlattenLayer, LinearLayer>;

// Spatial masks for one forward pass: per placed site, one mask per batch
// element. MC inference uses batch size 1, so one mask per site and run.
struct MaskSet {
    std::vector<std::vector<SpatialMask>> per_site;
};

struct BinaryConvNet {
    std::vector<Layer> layers;
    DropoutPlacement placement;
    HyperParams hp;
    int input_c = 1, input_h = 1, input_w = 1;
    int num_classes = 2;
    std::string topology_name;

    // Layer indices (forward order) whose input has spatial dropout placed.
    std::vector<int> dropout_sites() const;
    // Channel count the dropout mask at a given site must cover.
    int site_channels(int layer_index) const;

    void apply_placement(const DropoutPlacement& p);
    void refresh_binary_views();
    std::vector<const Tensor4*> proxy_weights() const;

    // Deterministic forward pass (eval batch-norm statistics). `masks` may be
    // null for a dropout-free pass. When `scale` is set, kept contributions
    // of masked layers are scaled by 1/(1-rho) at the layer output, exactly
    // as the crossbar applies it at readout.
    Tensor4 forward(const Tensor4& x, const MaskSet* masks, bool scale) const;

    // Softmax rows for a batch (eval mode).
    std::vector<std::vector<double>> predict_probs(const Tensor4& x, const MaskSet* masks,
                                                   bool scale) const;
};

// Samples one mask per placed site for a single-image pass of run `t`,
// using the shared (seed, run, site, channel) derivation. The crossbar
// engine consumes the identical draws through its MTJ modules.
MaskSet sample_run_masks(const BinaryConvNet& net, const StreamRng& mc_root, int run);

// --- training-side forward/backward ---------------------------------------

struct LayerGrads {
    Tensor4 dproxy;              // conv/linear layers
    std::vector<double> dbias;   // linear layers
    std::vector<double> dgamma;  // batchnorm
    std::vector<double> dbeta;
};

struct NetGrads {
    std::vector<LayerGrads> per_layer;
    double task_loss = 0.0;  // mean cross-entropy over the batch
};

// Training-mode forward (batch statistics, running stats updated) followed
// by full backward. Gradients of the cross-entropy w.r.t. proxies go through
// the straight-through estimator with clip 1.0; the L2 term of the objective
// is added by the optimizer, not here.
NetGrads forward_backward(BinaryConvNet& net, const Tensor4& x, const std::vector<int>& labels,
                          const MaskSet* masks, bool scale);

// Mean cross-entropy + argmax accuracy of an eval-mode pass.
struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(const BinaryConvNet& net, const Tensor4& x, const std::vector<int>& labels);

// --- topology builders ------------------------------------------------------

// LeNet-style reference target: two conv blocks (conv-bn-sign-pool) and two
// linear layers, binarized weights throughout, no adaptive average pool.
BinaryConvNet make_lenet(int in_c, int in_h, int in_w, int classes, int c1, int c2, int fc_dim,
                         const HyperParams& hp, PlacementMode placement, StreamRng init_rng);

// Minimal 2-feature linear classifier for the blob toy task.
BinaryConvNet make_blob_net(const HyperParams& hp, StreamRng init_rng, bool with_dropout);

// Real-weight 2-layer net (conv-bn-pool-linear) used for finite-difference
// gradient checks; contains no sign nonlinearity.
BinaryConvNet make_gradcheck_net(int in_c, int in_h, int in_w, int classes, StreamRng init_rng);

}  // namespace spindrop

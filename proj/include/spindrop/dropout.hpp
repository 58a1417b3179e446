#pragma once

#include <cstdint>
#include <vector>

#include "spindrop/rng.hpp"
#include "spindrop/tensor.hpp"

namespace spindrop {

struct BinaryConvNet;

// Per-channel keep/drop vector for one MC sample of one layer.
struct SpatialMask {
    std::vector<bool> keep;
    double rho = 0.0;
    std::uint64_t seed_tag = 0;  // id of the stream that sampled this mask

    int channels() const { return static_cast<int>(keep.size()); }
    int drop_count() const;
};

// Element-wise Bernoulli mask (the baseline MC-Dropout mode).
struct ElementMask {
    Tensor4 keep;  // 0/1 values, same shape as the masked activation
    double rho = 0.0;
};

enum class PlacementMode {
    kLayerWise,     // spatial dropout before selected conv layers
    kTopologyWise,  // spatial dropout on the extracted features before the classifier
    kNone,
};

struct DropoutPlacement {
    PlacementMode mode = PlacementMode::kNone;
    // Layer indices into BinaryConvNet::layers. For layer-wise these are conv
    // layers; for topology-wise, the classifier linear at the feature boundary.
    std::vector<int> targets;
};

struct HyperParams {
    double rho = 0.15;
    double lambda = 1e-6;
    int mc_samples = 20;  // T

    void validate() const;
};

// One Bernoulli draw per channel: drop with probability rho.
SpatialMask sample_spatial_mask(int channels, double rho, StreamRng& rng);

// Element-wise Bernoulli mask over the whole activation shape.
ElementMask sample_element_mask(const Tensor4& like, double rho, StreamRng& rng);

// Dropped channels become zero at every spatial position; kept channels are
// multiplied by 1/(1-rho) when `scale` is set (inverted scaling, applied
// identically in training and MC inference).
Tensor4 apply_spatial_dropout(const Tensor4& x, const SpatialMask& m, bool scale);

Tensor4 apply_element_dropout(const Tensor4& x, const ElementMask& m, bool scale);

// task_loss + lambda * sum_l ||W_l||^2 over real-valued proxy weights only.
double spatial_dropout_objective(double task_loss, const std::vector<const Tensor4*>& proxies,
                                 double lambda);

// Monte-Carlo Bayesian inference: T stochastic forward passes with fresh
// spatial masks per placed site, mean of the per-run softmax outputs.
struct McResult {
    std::vector<double> mean_probs;
    std::vector<std::vector<double>> per_run_probs;  // T rows
};
McResult mc_predict(const BinaryConvNet& net, const Tensor4& x, int T, const StreamRng& rng);

}  // namespace spindrop

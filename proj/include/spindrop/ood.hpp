#pragma once

#include <string>
#include <vector>

#include "spindrop/net.hpp"
#include "spindrop/rng.hpp"
#include "spindrop/tensor.hpp"

namespace spindrop {

struct OODDataset {
    std::string id;  // "d1".."d6" or "id"
    Tensor4 images;
    enum class Provenance { kSynthesized, kLoaded } provenance = Provenance::kSynthesized;
};

// D1: every pixel ~ N(0, 1).
OODDataset gen_gaussian_noise(int n, int c, int h, int w, StreamRng rng);
// D2: every pixel ~ U(0, 1).
OODDataset gen_uniform_noise(int n, int c, int h, int w, StreamRng rng);

enum class NoiseKind { kGaussian, kUniform };

// D3/D4: in-distribution images corrupted additively with unit-scale noise,
// clipped back to [0, 1]. `amplitude` scales the noise (0 = identity).
OODDataset corrupt_with_noise(const Tensor4& id_images, NoiseKind kind, double amplitude,
                              StreamRng rng);

// D5/D6 hook: raw tensor file in CIFAR-batch layout (1 label byte +
// c*h*w pixel bytes per record), already resized offline. Validation only.
OODDataset load_external_ood(const std::string& path, int c, int h, int w);

// Inclusive linear interpolation between closest order statistics
// (h = (n-1) * p / 100).
double percentile_linear(std::vector<double> values, double pct);

enum class DecisionRule {
    kProse,    // per class: percentile over the T runs; score = max over classes
    kFormula,  // percentile across the classes of the run-averaged vector
};

struct OODDecision {
    double score = 0.0;
    double threshold = 0.9;
    bool is_ood = false;  // score < threshold
};

// The paper's decision rule over a T x C matrix of per-run softmax outputs.
// Rows must sum to 1 (+-1e-6); T >= 2 because the percentile needs spread.
OODDecision ood_decide(const std::vector<std::vector<double>>& per_run_probs,
                       double threshold = 0.9, double pct = 10.0,
                       DecisionRule rule = DecisionRule::kProse);

struct DetectionResult {
    std::string dataset_id;
    int n = 0;
    int mc_samples = 0;
    double threshold = 0.9;
    double percentile = 10.0;
    int flagged_ood = 0;
    double rate = 0.0;  // fraction flagged OOD (false-OOD rate on ID data)
    double ci_low = 0.0, ci_high = 0.0;  // Wilson 95% interval
};

// Fraction of the dataset classified OOD; per-image RNG substreams, ordered
// aggregation. For ID datasets the same number is the false-OOD rate.
DetectionResult detection_rate(const BinaryConvNet& net, const OODDataset& dataset, int T,
                               double threshold, double pct, DecisionRule rule,
                               const StreamRng& rng);

// CSV: dataset_id,n,T,threshold,percentile,detection_rate,ci_low,ci_high
void write_ood_csv(const std::string& path, const std::vector<DetectionResult>& rows);

}  // namespace spindrop

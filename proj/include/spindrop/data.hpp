#pragma once

#include <string>
#include <vector>

#include "spindrop/rng.hpp"
#include "spindrop/tensor.hpp"

namespace spindrop {

struct LabeledData {
    Tensor4 images;           // (N, C, H, W), pixels in [0,1]
    std::vector<int> labels;  // length N

    int size() const { return images.n; }
    LabeledData subset(const std::vector<int>& indices) const;
};

// Train plus held-out pool split 80:20 into eval and cross-validation.
struct DatasetSplit {
    LabeledData train;
    LabeledData eval;      // 80% of the held-out pool
    LabeledData cross_val; // 20% of the held-out pool
};

// IDX (MNIST) readers. Pixels are scaled to [0,1]; images come out (N,1,H,W).
Tensor4 load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes.
LabeledData load_cifar10_batch(const std::string& path);

// Writes an IDX image/label pair (used by tests and the synthetic exporter).
void save_idx_images(const std::string& path, const Tensor4& images);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

// Deterministic 10-class digit-like dataset: seven-segment glyphs rendered
// at 28x28 with positional jitter and pixel noise. Stands in for MNIST when
// the real files are not on disk.
LabeledData gen_synthetic_digits(int n, StreamRng rng);

// Two linearly separable Gaussian blobs on a +-1-friendly diagonal.
LabeledData gen_blobs(int n, StreamRng rng);

// Shuffles, takes `train_n` for training, splits the remaining pool 80:20.
DatasetSplit split_dataset(const LabeledData& data, int train_n, StreamRng rng);

// Split a pool 80:20 (eval:cross_val), sizes within +-1 of the exact ratio.
void split_holdout(const LabeledData& pool, LabeledData* eval_out, LabeledData* cv_out);

}  // namespace spindrop

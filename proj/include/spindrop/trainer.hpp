#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spindrop/data.hpp"
#include "spindrop/net.hpp"

namespace spindrop {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 64;
    double learning_rate = 0.01;  // cosine-decayed over the epochs
    double momentum = 0.9;
    std::uint64_t seed = 0;  // mandatory; there is no entropy-source default
    bool seed_set = false;

    void validate() const;
    double lr_at_epoch(int epoch) const;
};

// Scalar momentum-SGD update: v = momentum*v + grad; w -= lr*v.
inline double sgd_update(double w, double grad, double& velocity, double lr, double momentum) {
    velocity = momentum * velocity + grad;
    return w - lr * velocity;
}

// Momentum buffers matching the net's trainable parameters.
struct Optimizer {
    double momentum = 0.9;
    std::vector<LayerGrads> velocity;

    explicit Optimizer(const BinaryConvNet& net, double momentum);
    // Applies one update. `lambda` adds the L2 gradient 2*lambda*proxy on
    // proxy weights (the regularization term of the training objective).
    void step(BinaryConvNet& net, const NetGrads& grads, double lambda, double lr);
};

// One SGD step: fresh spatial masks per (step, site, batch element), forward,
// cross-entropy + L2 objective, STE backward, momentum update, binary views
// refreshed. Returns the pre-step objective value.
double sgd_step(BinaryConvNet& net, const Tensor4& batch_x, const std::vector<int>& batch_y,
                Optimizer& opt, double lambda, double lr, const StreamRng& mask_root,
                std::uint64_t step_index);

struct EpochMetrics {
    int epoch = 0;
    double objective = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    BinaryConvNet net;  // best cross-validation checkpoint
    std::vector<EpochMetrics> log;
    double best_val_acc = 0.0;
    int best_epoch = -1;
};

TrainResult train(BinaryConvNet net, const DatasetSplit& data, const TrainConfig& cfg);

// Chunked eval-mode accuracy/loss (bounded memory for large sets).
EvalResult evaluate_dataset(const BinaryConvNet& net, const LabeledData& data, int chunk = 256);

// Metrics CSV: header epoch,objective,train_acc,val_acc.
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log);

}  // namespace spindrop

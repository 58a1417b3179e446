#pragma once

#include <cstdint>
#include <string>

#include "spindrop/dropout.hpp"
#include "spindrop/trainer.hpp"

namespace spindrop {

// Reproducible experiment description. Serialized as flat key-value text
// with [sections] (a TOML-shaped grammar, see README); there are no hidden
// defaults — the effective config is emitted verbatim into a run's output
// directory.
struct ExperimentConfig {
    // [experiment]
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    // [topology]
    std::string topology = "lenet";
    int input_c = 1, input_h = 28, input_w = 28;
    int classes = 10;
    int conv1_channels = 16, conv2_channels = 32, fc_dim = 64;

    // [hyperparams]
    double rho = 0.15;
    double lambda = 1e-6;
    int mc_samples = 20;

    // [placement]
    std::string placement = "topology-wise";  // none | layer-wise | topology-wise

    // [train]
    int epochs = 8;
    int batch_size = 64;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int train_n = 10000;

    // [data]
    std::string data_source = "synthetic";  // synthetic | idx | cifar
    std::string images_path;
    std::string labels_path;
    int synthetic_n = 12500;

    // [simulate]
    int strategy = 1;

    bool operator==(const ExperimentConfig&) const = default;

    HyperParams hyper_params() const;
    PlacementMode placement_mode() const;
    TrainConfig train_config() const;
    void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
std::string emit_config(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::string& path);
void save_config_file(const std::string& path, const ExperimentConfig& cfg);

}  // namespace spindrop

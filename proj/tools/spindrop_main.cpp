// spindrop: train, run and inspect MC-SpatialDropout binary Bayesian
// networks, simulate them on MTJ-based crossbars, and report dropout-module
// hardware costs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spindrop/checkpoint.hpp"
#include "spindrop/config.hpp"
#include "spindrop/cost.hpp"
#include "spindrop/crossbar.hpp"
#include "spindrop/data.hpp"
#include "spindrop/ood.hpp"
#include "spindrop/trainer.hpp"

namespace fs = std::filesystem;
using namespace spindrop;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitDataFormat = 2;
constexpr int kExitDivergence = 3;

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open for writing");
    f << text;
}

nlohmann::json tensor_json(const Tensor4& t) {
    return {{"dims", {t.n, t.c, t.h, t.w}}, {"data", t.v}};
}

Tensor4 load_input_tensor(const std::string& path, int index) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        std::ifstream f(path);
        if (!f) throw DataFormatError(path + ": cannot open");
        nlohmann::json j;
        try {
            f >> j;
            const auto dims = j.at("dims").get<std::vector<int>>();
            if (dims.size() != 3 && dims.size() != 4)
                throw DataFormatError(path + ": dims must be [c,h,w] or [n,c,h,w]");
            const int off = dims.size() == 4 ? 1 : 0;
            Tensor4 t(1, dims[off], dims[off + 1], dims[off + 2]);
            const auto data = j.at("data").get<std::vector<double>>();
            if (data.size() != t.v.size())
                throw DataFormatError(path + ": data length does not match dims");
            t.v = data;
            return t;
        } catch (const nlohmann::json::exception& e) {
            throw DataFormatError(path + ": " + e.what());
        }
    }
    const Tensor4 all = load_idx_images(path);
    if (index < 0 || index >= all.n)
        throw ParamError("--index " + std::to_string(index) + " out of range for " +
                         std::to_string(all.n) + " images");
    Tensor4 t(1, all.c, all.h, all.w);
    const std::size_t per = t.v.size();
    std::copy_n(all.v.begin() + static_cast<std::ptrdiff_t>(per * index), per, t.v.begin());
    return t;
}

LabeledData load_training_data(const ExperimentConfig& cfg) {
    if (cfg.data_source == "synthetic") {
        if (cfg.topology == "blob2") return gen_blobs(cfg.synthetic_n, StreamRng(cfg.seed));
        return gen_synthetic_digits(cfg.synthetic_n, StreamRng(cfg.seed));
    }
    if (cfg.data_source == "idx") {
        LabeledData d;
        d.images = load_idx_images(cfg.images_path);
        d.labels = load_idx_labels(cfg.labels_path);
        if (static_cast<int>(d.labels.size()) != d.images.n)
            throw DataFormatError("image/label counts differ: " + std::to_string(d.images.n) +
                                  " vs " + std::to_string(d.labels.size()));
        return d;
    }
    return load_cifar10_batch(cfg.images_path);
}

BinaryConvNet build_net(const ExperimentConfig& cfg) {
    if (cfg.topology == "blob2")
        return make_blob_net(cfg.hyper_params(), StreamRng(cfg.seed), cfg.placement_mode() != PlacementMode::kNone);
    return make_lenet(cfg.input_c, cfg.input_h, cfg.input_w, cfg.classes, cfg.conv1_channels,
                      cfg.conv2_channels, cfg.fc_dim, cfg.hyper_params(), cfg.placement_mode(),
                      StreamRng(cfg.seed));
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
    ExperimentConfig cfg = load_config_file(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();
    ensure_dir(cfg.out_dir);
    save_config_file(cfg.out_dir + "/config.toml", cfg);

    const LabeledData data = load_training_data(cfg);
    const DatasetSplit split = split_dataset(data, std::min(cfg.train_n, data.size()), StreamRng(cfg.seed));
    BinaryConvNet net = build_net(cfg);

    std::printf("training %s: %d train / %d eval / %d cross-val images, %d epochs\n",
                cfg.topology.c_str(), split.train.size(), split.eval.size(), split.cross_val.size(),
                cfg.epochs);
    const TrainResult result = train(std::move(net), split, cfg.train_config());
    for (const auto& m : result.log)
        std::printf("epoch %d: objective %.4f train_acc %.4f val_acc %.4f\n", m.epoch, m.objective,
                    m.train_acc, m.val_acc);

    save_checkpoint(cfg.out_dir + "/checkpoint.ckpt", result.net);
    write_metrics_csv(cfg.out_dir + "/metrics.csv", result.log);
    std::printf("best cross-val accuracy %.4f (epoch %d)\n", result.best_val_acc, result.best_epoch);
    std::printf("wrote %s/checkpoint.ckpt and %s/metrics.csv\n", cfg.out_dir.c_str(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input, int index, int mc_samples,
                const std::string& engine, int strategy, std::uint64_t seed,
                const std::string& out_dir) {
    const BinaryConvNet net = load_checkpoint(ckpt);
    const Tensor4 x = load_input_tensor(input, index);
    if (x.c != net.input_c || x.h != net.input_h || x.w != net.input_w)
        throw ParamError("input " + x.shape_str() + " does not match the checkpoint input shape");

    McResult mc;
    if (engine == "reference") {
        mc = mc_predict(net, x, mc_samples, StreamRng(seed));
    } else if (engine == "crossbar") {
        const NetworkLayouts layouts =
            build_layouts(net, strategy == 1 ? MapStrategy::kS1 : MapStrategy::kS2);
        mc = simulate_network(net, layouts, x, mc_samples, StreamRng(seed));
    } else {
        throw ParamError("--engine must be reference or crossbar");
    }

    nlohmann::json j;
    j["engine"] = engine;
    j["mc_samples"] = mc_samples;
    j["seed"] = seed;
    if (engine == "crossbar") j["strategy"] = strategy;
    j["mean_probs"] = mc.mean_probs;
    j["per_run_probs"] = mc.per_run_probs;
    ensure_dir(out_dir);
    write_text(out_dir + "/predictions.json", j.dump(2) + "\n");
    int arg = 0;
    for (std::size_t c = 1; c < mc.mean_probs.size(); ++c)
        if (mc.mean_probs[c] > mc.mean_probs[static_cast<std::size_t>(arg)]) arg = static_cast<int>(c);
    std::printf("predicted class %d (mean prob %.4f); wrote %s/predictions.json\n", arg,
                mc.mean_probs[static_cast<std::size_t>(arg)], out_dir.c_str());
    return 0;
}

int cmd_simulate(const std::string& ckpt, int strategy, std::uint64_t seed, int mc_samples,
                 const std::string& out_dir) {
    const BinaryConvNet net = load_checkpoint(ckpt);
    ensure_dir(out_dir);

    // deterministic probe input in [0,1]
    Tensor4 x(1, net.input_c, net.input_h, net.input_w);
    StreamRng probe = StreamRng(seed).fork(rng_tag::kData);
    for (double& v : x.v) v = probe.next_unit();

    const MapStrategy ms = strategy == 1 ? MapStrategy::kS1 : MapStrategy::kS2;
    const NetworkLayouts layouts = build_layouts(net, ms);
    for (std::size_t i = 0; i < layouts.per_layer.size(); ++i)
        if (layouts.present[i])
            write_text(out_dir + "/layout_layer" + std::to_string(i) + ".json",
                       dump_layout_json(layouts.per_layer[i]) + "\n");

    RunTrace trace;
    const McResult hw = simulate_network(net, layouts, x, mc_samples, StreamRng(seed), &trace);
    const McResult ref = mc_predict(net, x, mc_samples, StreamRng(seed));

    for (const auto& [layer, ofm] : trace.layer_ofms)
        write_text(out_dir + "/ofm_layer" + std::to_string(layer) + ".json",
                   tensor_json(ofm).dump() + "\n");

    bool equal = hw.per_run_probs.size() == ref.per_run_probs.size();
    for (std::size_t t = 0; equal && t < hw.per_run_probs.size(); ++t)
        equal = hw.per_run_probs[t] == ref.per_run_probs[t];

    nlohmann::json verdict;
    verdict["strategy"] = strategy;
    verdict["seed"] = seed;
    verdict["mc_samples"] = mc_samples;
    verdict["equivalent"] = equal;
    write_text(out_dir + "/verdict.json", verdict.dump(2) + "\n");
    std::printf("%s: crossbar vs reference over %d MC runs (strategy %d)\n",
                equal ? "EQUIVALENT" : "MISMATCH", mc_samples, strategy);
    return equal ? 0 : kExitDivergence;
}

int cmd_ood(const std::string& ckpt, const std::string& datasets_csv, int n, int mc_samples,
            std::uint64_t seed, const std::string& id_data, const std::string& id_labels,
            double threshold, double percentile, const std::string& rule_name,
            const std::string& out_dir) {
    const BinaryConvNet net = load_checkpoint(ckpt);
    const DecisionRule rule = rule_name == "formula" ? DecisionRule::kFormula : DecisionRule::kProse;
    ensure_dir(out_dir);

    // ID images for d3/d4/id rows
    LabeledData id_set;
    auto need_id = [&]() -> const LabeledData& {
        if (id_set.size() == 0) {
            if (id_data == "synthetic") {
                id_set = gen_synthetic_digits(n, StreamRng(seed).fork(rng_tag::kData));
            } else {
                id_set.images = load_idx_images(id_data);
                if (!id_labels.empty()) id_set.labels = load_idx_labels(id_labels);
                if (id_set.images.n > n) {
                    std::vector<int> idx(static_cast<std::size_t>(n));
                    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
                    id_set.labels.resize(static_cast<std::size_t>(id_set.images.n), 0);
                    id_set = id_set.subset(idx);
                }
            }
        }
        return id_set;
    };

    std::vector<DetectionResult> rows;
    std::istringstream list(datasets_csv);
    std::string name;
    int ordinal = 0;
    while (std::getline(list, name, ',')) {
        OODDataset ds;
        const StreamRng gen = StreamRng(seed).fork(static_cast<std::uint64_t>(100 + ordinal));
        if (name == "d1") {
            ds = gen_gaussian_noise(n, net.input_c, net.input_h, net.input_w, gen);
        } else if (name == "d2") {
            ds = gen_uniform_noise(n, net.input_c, net.input_h, net.input_w, gen);
        } else if (name == "d3") {
            ds = corrupt_with_noise(need_id().images, NoiseKind::kGaussian, 1.0, gen);
        } else if (name == "d4") {
            ds = corrupt_with_noise(need_id().images, NoiseKind::kUniform, 1.0, gen);
        } else if (name == "id") {
            ds.id = "id";
            ds.images = need_id().images;
        } else if (name.rfind("ext:", 0) == 0) {
            ds = load_external_ood(name.substr(4), net.input_c, net.input_h, net.input_w);
        } else {
            throw ParamError("unknown dataset '" + name + "' (use d1,d2,d3,d4,id,ext:<path>)");
        }
        std::printf("evaluating %s (%d images, T=%d)...\n", ds.id.c_str(), ds.images.n, mc_samples);
        rows.push_back(detection_rate(net, ds, mc_samples, threshold, percentile, rule,
                                      StreamRng(seed).fork(static_cast<std::uint64_t>(200 + ordinal))));
        std::printf("  %s: rate %.4f [%.4f, %.4f]\n", rows.back().dataset_id.c_str(),
                    rows.back().rate, rows.back().ci_low, rows.back().ci_high);
        ++ordinal;
    }
    write_ood_csv(out_dir + "/ood_results.csv", rows);
    std::printf("wrote %s/ood_results.csv\n", out_dir.c_str());
    return 0;
}

int cmd_cost(const std::string& ckpt, int cin, int k, int cout, const std::string& out_dir) {
    std::vector<CostLayerConfig> layers;
    if (!ckpt.empty()) {
        layers = cost_layers_from_net(load_checkpoint(ckpt));
        if (layers.empty()) throw ParamError("checkpoint has no placed dropout sites to cost");
    } else {
        layers.push_back({"conv", CostMode::kConv, k, cin, cout});
        layers.push_back({"features-avgpool", CostMode::kTopologyWithAvgPool, k, cin, cout});
        layers.push_back({"features-flatten", CostMode::kTopologyNoAvgPool, k, cin, cout});
    }
    const CostReport report = make_cost_report(layers);
    ensure_dir(out_dir);
    write_text(out_dir + "/cost.csv", cost_report_csv(report));
    write_text(out_dir + "/cost.json", cost_report_json(report) + "\n");

    const EnergyTable et = energy_reference_table();
    std::string csv = "work,technology,bits,energy_uj_per_image,ratio_vs_proposed\n";
    char buf[256];
    for (const auto& r : et.rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%.10g,%.10g\n", r.work.c_str(),
                      r.technology.c_str(), r.bits.c_str(), r.energy_uj_per_image,
                      r.ratio_vs_proposed);
        csv += buf;
    }
    write_text(out_dir + "/energy.csv", csv);

    std::printf("%s", cost_report_csv(report).c_str());
    std::printf("energy ratios vs proposed: SpinDrop %.2f, RRAM %.2f (quoted headline %.2f; %s)\n",
                et.ratio_vs_spindrop, et.ratio_vs_rram, et.quoted_best_ratio,
                et.discrepancy_note.c_str());
    std::printf("wrote %s/cost.csv, %s/cost.json, %s/energy.csv\n", out_dir.c_str(),
                out_dir.c_str(), out_dir.c_str());
    return 0;
}

int cmd_inspect(const std::string& layout_path) {
    std::ifstream f(layout_path);
    if (!f) throw DataFormatError(layout_path + ": cannot open");
    std::ostringstream buf;
    buf << f.rdbuf();
    const CrossbarLayout layout = parse_layout_json(buf.str());

    std::printf("layout: strategy %s, K=%d, C_in=%d, C_out=%d, stride=%d\n",
                layout.strategy == MapStrategy::kS1 ? "S1" : "S2", layout.k, layout.c_in,
                layout.c_out, layout.stride);
    std::printf("crossbars: %zu\n", layout.crossbars.size());
    for (std::size_t i = 0; i < layout.crossbars.size(); ++i) {
        const auto& xb = layout.crossbars[i];
        long long plus = 0;
        for (double v : xb.cells) plus += v > 0.0 ? 1 : 0;
        std::printf("  [%zu] %dx%d cells, +1: %lld, -1: %lld\n", i, xb.rows, xb.cols, plus,
                    static_cast<long long>(xb.cells.size()) - plus);
    }
    std::printf("row groups: %d", layout.group_count());
    if (!layout.row_group.empty()) {
        int rows_in_first = 0;
        for (int g : layout.row_group) rows_in_first += g == 0 ? 1 : 0;
        std::printf(" (rows per group: %d)", rows_in_first);
    }
    std::printf("\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MC-SpatialDropout binary Bayesian networks on MTJ crossbars"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", ckpt, input, engine = "reference";
    std::string datasets = "d1,d2,d3,d4,id", id_data = "synthetic", id_labels, rule = "prose";
    std::string layout_path;
    int index = 0, mc_samples = 20, strategy = 1, n = 200;
    int cin = 256, k = 3, cout_ = 512;
    double threshold = 0.9, percentile = 10.0;
    std::uint64_t seed = 0;

    auto* train_cmd = app.add_subcommand("train", "train a network from a config file");
    train_cmd->add_option("--config", config_path, "experiment config file")->required();
    train_cmd->add_option("--out", out_dir, "override the config's output directory");

    auto* predict_cmd = app.add_subcommand("predict", "MC inference on one input");
    predict_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    predict_cmd->add_option("--input", input, "IDX file or JSON tensor")->required();
    predict_cmd->add_option("--index", index, "image index within an IDX file");
    predict_cmd->add_option("--mc-samples", mc_samples, "MC sample count T");
    predict_cmd->add_option("--engine", engine, "reference | crossbar");
    predict_cmd->add_option("--strategy", strategy, "crossbar mapping strategy (1|2)");
    predict_cmd->add_option("--seed", seed, "RNG seed")->required();
    predict_cmd->add_option("--out", out_dir, "output directory");

    auto* sim_cmd = app.add_subcommand("simulate", "crossbar simulation + equivalence verdict");
    sim_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    sim_cmd->add_option("--strategy", strategy, "mapping strategy (1|2)");
    sim_cmd->add_option("--seed", seed, "RNG seed")->required();
    sim_cmd->add_option("--mc-samples", mc_samples, "MC sample count T");
    sim_cmd->add_option("--out", out_dir, "output directory");

    auto* ood_cmd = app.add_subcommand("ood", "OOD detection evaluation");
    ood_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    ood_cmd->add_option("--datasets", datasets, "comma list: d1,d2,d3,d4,id,ext:<path>");
    ood_cmd->add_option("--n", n, "images per dataset");
    ood_cmd->add_option("--mc-samples", mc_samples, "MC sample count T");
    ood_cmd->add_option("--seed", seed, "RNG seed")->required();
    ood_cmd->add_option("--id-data", id_data, "'synthetic' or IDX images path for d3/d4/id");
    ood_cmd->add_option("--id-labels", id_labels, "IDX labels path (optional)");
    ood_cmd->add_option("--threshold", threshold, "OOD confidence threshold");
    ood_cmd->add_option("--percentile", percentile, "percentile across MC runs");
    ood_cmd->add_option("--rule", rule, "decision rule: prose | formula");
    ood_cmd->add_option("--out", out_dir, "output directory");

    auto* cost_cmd = app.add_subcommand("cost", "dropout-module cost report");
    cost_cmd->add_option("--checkpoint", ckpt, "derive layer list from a checkpoint");
    cost_cmd->add_option("--cin", cin, "input channels C_in");
    cost_cmd->add_option("--k", k, "kernel size K");
    cost_cmd->add_option("--cout", cout_, "output channels C_out");
    cost_cmd->add_option("--out", out_dir, "output directory");

    auto* inspect_cmd = app.add_subcommand("inspect", "summarize a layout JSON dump");
    inspect_cmd->add_option("--layout", layout_path, "layout JSON file")->required();

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed())
            return cmd_train(config_path, train_cmd->count("--out") ? out_dir : "");
        if (predict_cmd->parsed())
            return cmd_predict(ckpt, input, index, mc_samples, engine, strategy, seed, out_dir);
        if (sim_cmd->parsed()) return cmd_simulate(ckpt, strategy, seed, mc_samples, out_dir);
        if (ood_cmd->parsed())
            return cmd_ood(ckpt, datasets, n, mc_samples, seed, id_data, id_labels, threshold,
                           percentile, rule, out_dir);
        if (cost_cmd->parsed()) return cmd_cost(ckpt, cin, k, cout_, out_dir);
        if (inspect_cmd->parsed()) return cmd_inspect(layout_path);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    } catch (const DataFormatError& e) {
        std::fprintf(stderr, "data format error: %s\n", e.what());
        return kExitDataFormat;
    } catch (const DivergedError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return 0;
}

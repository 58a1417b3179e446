#include "spindrop/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace spindrop {

void TrainConfig::validate() const {
    if (epochs < 0) throw ParamError("epochs must be >= 0");
    if (batch_size < 1) throw ParamError("batch size must be positive");
    if (learning_rate <= 0.0) throw ParamError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ParamError("momentum must lie in [0,1)");
    if (!seed_set) throw ParamError("training seed is mandatory");
}

double TrainConfig::lr_at_epoch(int epoch) const {
    if (epochs <= 1) return learning_rate;
    const double t = static_cast<double>(epoch) / static_cast<double>(epochs);
    return 0.5 * learning_rate * (1.0 + std::cos(3.14159265358979323846 * t));
}

namespace {

LayerGrads zeros_like_grads(const Layer& l) {
    LayerGrads g;
    if (const auto* cl = std::get_if<ConvLayer>(&l)) {
        g.dproxy = Tensor4(cl->w.proxy.n, cl->w.proxy.c, cl->w.proxy.h, cl->w.proxy.w);
    } else if (const auto* ll = std::get_if<LinearLayer>(&l)) {
        g.dproxy = Tensor4(ll->w.proxy.n, ll->w.proxy.c, ll->w.proxy.h, ll->w.proxy.w);
        g.dbias.assign(ll->bias.size(), 0.0);
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
        g.dgamma.assign(bn->gamma.size(), 0.0);
        g.dbeta.assign(bn->beta.size(), 0.0);
    }
    return g;
}

}  // namespace

Optimizer::Optimizer(const BinaryConvNet& net, double momentum_) : momentum(momentum_) {
    velocity.reserve(net.layers.size());
    for (const auto& l : net.layers) velocity.push_back(zeros_like_grads(l));
}

void Optimizer::step(BinaryConvNet& net, const NetGrads& grads, double lambda, double lr) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Layer& l = net.layers[i];
        const LayerGrads& g = grads.per_layer[i];
        LayerGrads& v = velocity[i];
        if (auto* cl = std::get_if<ConvLayer>(&l)) {
            for (std::size_t j = 0; j < cl->w.proxy.v.size(); ++j) {
                const double grad = g.dproxy.v[j] + 2.0 * lambda * cl->w.proxy.v[j];
                cl->w.proxy.v[j] = sgd_update(cl->w.proxy.v[j], grad, v.dproxy.v[j], lr, momentum);
            }
        } else if (auto* ll = std::get_if<LinearLayer>(&l)) {
            for (std::size_t j = 0; j < ll->w.proxy.v.size(); ++j) {
                const double grad = g.dproxy.v[j] + 2.0 * lambda * ll->w.proxy.v[j];
                ll->w.proxy.v[j] = sgd_update(ll->w.proxy.v[j], grad, v.dproxy.v[j], lr, momentum);
            }
            for (std::size_t j = 0; j < ll->bias.size(); ++j)
                ll->bias[j] = sgd_update(ll->bias[j], g.dbias[j], v.dbias[j], lr, momentum);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
            for (std::size_t j = 0; j < bn->gamma.size(); ++j) {
                bn->gamma[j] = sgd_update(bn->gamma[j], g.dgamma[j], v.dgamma[j], lr, momentum);
                bn->beta[j] = sgd_update(bn->beta[j], g.dbeta[j], v.dbeta[j], lr, momentum);
            }
        }
    }
    net.refresh_binary_views();
}

double sgd_step(BinaryConvNet& net, const Tensor4& batch_x, const std::vector<int>& batch_y,
                Optimizer& opt, double lambda, double lr, const StreamRng& mask_root,
                std::uint64_t step_index) {
    if (batch_x.n < 1) throw ParamError("empty batch");

    // fresh spatial masks per (step, site, batch element)
    MaskSet masks;
    const auto sites = net.dropout_sites();
    masks.per_site.resize(sites.size());
    if (net.hp.rho > 0.0) {
        for (std::size_t s = 0; s < sites.size(); ++s) {
            masks.per_site[s].reserve(static_cast<std::size_t>(batch_x.n));
            for (int b = 0; b < batch_x.n; ++b) {
                StreamRng stream = mask_root.fork(step_index).fork(s).fork(static_cast<std::uint64_t>(b));
                masks.per_site[s].push_back(
                    sample_spatial_mask(net.site_channels(sites[s]), net.hp.rho, stream));
            }
        }
    }

    NetGrads grads = forward_backward(net, batch_x, batch_y, net.hp.rho > 0.0 ? &masks : nullptr, true);
    const double objective = spatial_dropout_objective(grads.task_loss, net.proxy_weights(), lambda);
    if (!std::isfinite(objective)) throw DivergedError("non-finite training objective");
    opt.step(net, grads, lambda, lr);
    return objective;
}

EvalResult evaluate_dataset(const BinaryConvNet& net, const LabeledData& data, int chunk) {
    EvalResult total;
    int done = 0;
    while (done < data.size()) {
        const int take = std::min(chunk, data.size() - done);
        std::vector<int> idx(static_cast<std::size_t>(take));
        for (int i = 0; i < take; ++i) idx[static_cast<std::size_t>(i)] = done + i;
        const LabeledData part = data.subset(idx);
        const EvalResult r = evaluate(net, part.images, part.labels);
        total.loss += r.loss * take;
        total.accuracy += r.accuracy * take;
        done += take;
    }
    total.loss /= static_cast<double>(data.size());
    total.accuracy /= static_cast<double>(data.size());
    return total;
}

TrainResult train(BinaryConvNet net, const DatasetSplit& data, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.epochs > 0 && data.train.size() == 0) throw ParamError("empty training set");

    TrainResult result;
    Optimizer opt(net, cfg.momentum);
    const StreamRng root(cfg.seed);
    const StreamRng mask_root = root.fork(rng_tag::kTrainMask);
    const StreamRng shuffle_root = root.fork(rng_tag::kShuffle);

    std::vector<int> order(static_cast<std::size_t>(data.train.size()));
    for (int i = 0; i < data.train.size(); ++i) order[static_cast<std::size_t>(i)] = i;

    std::uint64_t step_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        StreamRng sh = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(sh.next_below(i))]);

        const double lr = cfg.lr_at_epoch(epoch);
        double objective_sum = 0.0;
        int batches = 0;
        for (int start = 0; start < data.train.size(); start += cfg.batch_size) {
            const int take = std::min(cfg.batch_size, data.train.size() - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + take);
            const LabeledData batch = data.train.subset(idx);
            try {
                objective_sum += sgd_step(net, batch.images, batch.labels, opt, net.hp.lambda, lr,
                                          mask_root, step_index);
            } catch (const DivergedError& e) {
                throw DivergedError("training diverged at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batches) + ": " + e.what());
            }
            ++step_index;
            ++batches;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.objective = batches > 0 ? objective_sum / batches : 0.0;
        m.train_acc = evaluate_dataset(net, data.train).accuracy;
        m.val_acc = data.cross_val.size() > 0 ? evaluate_dataset(net, data.cross_val).accuracy : 0.0;
        result.log.push_back(m);

        if (m.val_acc >= result.best_val_acc || result.best_epoch < 0) {
            result.best_val_acc = m.val_acc;
            result.best_epoch = epoch;
            result.net = net;
        }
    }
    if (result.best_epoch < 0) result.net = net;  // 0 epochs: unchanged
    return result;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log) {
    std::ofstream f(path);
    if (!f) throw DataFormatError(path + ": cannot open for writing");
    f << "epoch,objective,train_acc,val_acc\n";
    char buf[160];
    for (const auto& m : log) {
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g\n", m.epoch, m.objective, m.train_acc,
                      m.val_acc);
        f << buf;
    }
}

}  // namespace spindrop

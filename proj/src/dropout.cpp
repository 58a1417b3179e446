#include "spindrop/dropout.hpp"

#include <string>

#include "spindrop/net.hpp"

namespace spindrop {

int SpatialMask::drop_count() const {
    int n = 0;
    for (bool k : keep)
        if (!k) ++n;
    return n;
}

void HyperParams::validate() const {
    if (rho < 0.0 || rho >= 1.0) throw ParamError("rho must lie in [0,1), got " + std::to_string(rho));
    if (lambda < 0.0) throw ParamError("lambda must be >= 0");
    if (mc_samples < 1) throw ParamError("MC sample count T must be >= 1");
}

SpatialMask sample_spatial_mask(int channels, double rho, StreamRng& rng) {
    if (channels < 1) throw ParamError("mask channel count must be >= 1");
    if (rho < 0.0 || rho >= 1.0) throw ParamError("rho must lie in [0,1), got " + std::to_string(rho));
    SpatialMask m;
    m.rho = rho;
    m.seed_tag = rng.stream_id();
    m.keep.resize(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) m.keep[static_cast<std::size_t>(c)] = !(rng.next_unit() < rho);
    return m;
}

ElementMask sample_element_mask(const Tensor4& like, double rho, StreamRng& rng) {
    if (rho < 0.0 || rho >= 1.0) throw ParamError("rho must lie in [0,1), got " + std::to_string(rho));
    ElementMask m;
    m.rho = rho;
    m.keep = Tensor4(like.n, like.c, like.h, like.w);
    for (double& b : m.keep.v) b = (rng.next_unit() < rho) ? 0.0 : 1.0;
    return m;
}

Tensor4 apply_spatial_dropout(const Tensor4& x, const SpatialMask& m, bool scale) {
    if (m.channels() != x.c)
        throw ShapeError("spatial mask length " + std::to_string(m.channels()) +
                         " vs input channels " + std::to_string(x.c) + " of " + x.shape_str());
    const double s = (scale && m.rho > 0.0) ? 1.0 / (1.0 - m.rho) : 1.0;
    Tensor4 out = x;
    for (int b = 0; b < x.n; ++b)
        for (int c = 0; c < x.c; ++c) {
            const double f = m.keep[static_cast<std::size_t>(c)] ? s : 0.0;
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) out.at(b, c, y, xx) = f * x.at(b, c, y, xx);
        }
    return out;
}

Tensor4 apply_element_dropout(const Tensor4& x, const ElementMask& m, bool scale) {
    if (!m.keep.same_shape(x))
        throw ShapeError("element mask shape " + m.keep.shape_str() + " vs input " + x.shape_str());
    const double s = (scale && m.rho > 0.0) ? 1.0 / (1.0 - m.rho) : 1.0;
    Tensor4 out = x;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = x.v[i] * m.keep.v[i] * s;
    return out;
}

double spatial_dropout_objective(double task_loss, const std::vector<const Tensor4*>& proxies,
                                 double lambda) {
    if (lambda < 0.0) throw ParamError("lambda must be >= 0");
    double reg = 0.0;
    for (const Tensor4* w : proxies) {
        double layer = 0.0;
        for (double v : w->v) layer += v * v;
        reg += layer;
    }
    return task_loss + lambda * reg;
}

McResult mc_predict(const BinaryConvNet& net, const Tensor4& x, int T, const StreamRng& rng) {
    if (T < 1) throw ParamError("MC sample count T must be >= 1");
    if (x.n != 1) throw ParamError("mc_predict expects a single input, got batch " + x.shape_str());

    McResult res;
    res.per_run_probs.resize(static_cast<std::size_t>(T));
    const StreamRng mc_root = rng.fork(rng_tag::kMcRun);
    for (int t = 0; t < T; ++t) {
        const MaskSet masks = sample_run_masks(net, mc_root, t);
        res.per_run_probs[static_cast<std::size_t>(t)] = net.predict_probs(x, &masks, true)[0];
    }
    // Order-fixed mean over the T runs.
    const std::size_t classes = res.per_run_probs[0].size();
    res.mean_probs.assign(classes, 0.0);
    for (const auto& row : res.per_run_probs)
        for (std::size_t c = 0; c < classes; ++c) res.mean_probs[c] += row[c];
    for (double& p : res.mean_probs) p /= static_cast<double>(T);
    return res;
}

}  // namespace spindrop

#include "spindrop/net.hpp"

#include <cmath>
#include <cstddef>

namespace spindrop {

namespace {

// Zero out dropped channels (no scaling; scaling happens at the layer
// output, mirroring the crossbar readout). For linear layers a "channel" is
// a contiguous group of `group` rows of the flattened input.
Tensor4 mask_channels(const Tensor4& x, const std::vector<SpatialMask>& per_element, int group) {
    Tensor4 out = x;
    for (int b = 0; b < x.n; ++b) {
        const SpatialMask& m = per_element.size() == 1 ? per_element[0]
                                                       : per_element[static_cast<std::size_t>(b)];
        const int expect = x.c / group;
        if (m.channels() != expect)
            throw ShapeError("dropout mask length " + std::to_string(m.channels()) +
                             " vs channel groups " + std::to_string(expect) + " of input " +
                             x.shape_str());
        for (int f = 0; f < m.channels(); ++f) {
            if (m.keep[static_cast<std::size_t>(f)]) continue;
            for (int r = f * group; r < (f + 1) * group; ++r)
                for (int y = 0; y < x.h; ++y)
                    for (int xx = 0; xx < x.w; ++xx) out.at(b, r, y, xx) = 0.0;
        }
    }
    return out;
}

double mask_scale(const std::vector<SpatialMask>& per_element, bool scale) {
    const double rho = per_element.empty() ? 0.0 : per_element[0].rho;
    return (scale && rho > 0.0) ? 1.0 / (1.0 - rho) : 1.0;
}

Tensor4 flatten(const Tensor4& x) {
    Tensor4 out = x;
    out.c = x.c * x.h * x.w;
    out.h = 1;
    out.w = 1;
    return out;
}

Tensor4 unflatten(const Tensor4& x, int c, int h, int w) {
    Tensor4 out = x;
    out.c = c;
    out.h = h;
    out.w = w;
    return out;
}

const std::vector<SpatialMask>* site_masks(const MaskSet* masks, int site) {
    if (masks == nullptr) return nullptr;
    if (site >= static_cast<int>(masks->per_site.size()))
        throw ParamError("mask set has no entry for dropout site " + std::to_string(site));
    const auto& v = masks->per_site[static_cast<std::size_t>(site)];
    return v.empty() ? nullptr : &v;
}

}  // namespace

std::vector<int> BinaryConvNet::dropout_sites() const {
    std::vector<int> sites;
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
        if (const auto* cl = std::get_if<ConvLayer>(&layers[static_cast<std::size_t>(i)])) {
            if (cl->input_dropout) sites.push_back(i);
        } else if (const auto* ll = std::get_if<LinearLayer>(&layers[static_cast<std::size_t>(i)])) {
            if (ll->input_dropout) sites.push_back(i);
        }
    }
    return sites;
}

int BinaryConvNet::site_channels(int layer_index) const {
    const Layer& l = layers[static_cast<std::size_t>(layer_index)];
    if (const auto* cl = std::get_if<ConvLayer>(&l)) return cl->w.c_in();
    if (const auto* ll = std::get_if<LinearLayer>(&l)) return ll->drop_channels;
    throw ParamError("layer " + std::to_string(layer_index) + " cannot host dropout");
}

void BinaryConvNet::apply_placement(const DropoutPlacement& p) {
    for (auto& l : layers) {
        if (auto* cl = std::get_if<ConvLayer>(&l)) cl->input_dropout = false;
        if (auto* ll = std::get_if<LinearLayer>(&l)) ll->input_dropout = false;
    }
    for (int idx : p.targets) {
        if (idx < 0 || idx >= static_cast<int>(layers.size()))
            throw ParamError("placement target " + std::to_string(idx) + " out of range");
        Layer& l = layers[static_cast<std::size_t>(idx)];
        if (auto* cl = std::get_if<ConvLayer>(&l)) {
            cl->input_dropout = true;
        } else if (auto* ll = std::get_if<LinearLayer>(&l)) {
            ll->input_dropout = true;
        } else {
            throw ParamError("placement target " + std::to_string(idx) +
                             " is not a conv or linear layer");
        }
    }
    placement = p;
}

void BinaryConvNet::refresh_binary_views() {
    for (auto& l : layers) {
        if (auto* cl = std::get_if<ConvLayer>(&l)) {
            if (cl->binary) cl->w.refresh_binary();
        } else if (auto* ll = std::get_if<LinearLayer>(&l)) {
            if (ll->binary) ll->w.refresh_binary();
        }
    }
}

std::vector<const Tensor4*> BinaryConvNet::proxy_weights() const {
    std::vector<const Tensor4*> out;
    for (const auto& l : layers) {
        if (const auto* cl = std::get_if<ConvLayer>(&l)) out.push_back(&cl->w.proxy);
        if (const auto* ll = std::get_if<LinearLayer>(&l)) out.push_back(&ll->w.proxy);
    }
    return out;
}

Tensor4 BinaryConvNet::forward(const Tensor4& x, const MaskSet* masks, bool scale) const {
    Tensor4 cur = x;
    int site = 0;
    for (const auto& l : layers) {
        if (const auto* cl = std::get_if<ConvLayer>(&l)) {
            double s = 1.0;
            if (cl->input_dropout) {
                if (const auto* pm = site_masks(masks, site)) {
                    cur = mask_channels(cur, *pm, 1);
                    s = mask_scale(*pm, scale);
                }
                ++site;
            }
            cur = conv2d(cur, cl->w, cl->binary);
            if (s != 1.0)
                for (double& v : cur.v) v *= s;
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
            cur = batchnorm_apply(cur, bn->run_mean, bn->run_var, bn->gamma, bn->beta, bn->eps);
        } else if (std::get_if<SignLayer>(&l)) {
            cur = sign_activation(cur);
        } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l)) {
            cur = avgpool2d(cur, ap->k, ap->s);
        } else if (std::get_if<AdaptivePoolLayer>(&l)) {
            cur = adaptive_avgpool_to_1x1(cur);
        } else if (std::get_if<FlattenLayer>(&l)) {
            cur = flatten(cur);
        } else if (const auto* ll = std::get_if<LinearLayer>(&l)) {
            double s = 1.0;
            if (ll->input_dropout) {
                if (const auto* pm = site_masks(masks, site)) {
                    cur = mask_channels(cur, *pm, ll->drop_group);
                    s = mask_scale(*pm, scale);
                }
                ++site;
            }
            cur = linear(cur, ll->w, {}, ll->binary, ll->accum_group);
            for (int b = 0; b < cur.n; ++b)
                for (int o = 0; o < cur.c; ++o) {
                    double v = cur.at(b, o, 0, 0);
                    v = v * s;
                    v = v + ll->bias[static_cast<std::size_t>(o)];
                    cur.at(b, o, 0, 0) = v;
                }
        }
    }
    return cur;
}

std::vector<std::vector<double>> BinaryConvNet::predict_probs(const Tensor4& x, const MaskSet* masks,
                                                              bool scale) const {
    const Tensor4 logits = forward(x, masks, scale);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(logits.n));
    for (int b = 0; b < logits.n; ++b) {
        std::vector<double> lg(static_cast<std::size_t>(logits.c));
        for (int c = 0; c < logits.c; ++c) lg[static_cast<std::size_t>(c)] = logits.at(b, c, 0, 0);
        rows[static_cast<std::size_t>(b)] = softmax(lg);
    }
    return rows;
}

MaskSet sample_run_masks(const BinaryConvNet& net, const StreamRng& mc_root, int run) {
    MaskSet ms;
    const auto sites = net.dropout_sites();
    ms.per_site.resize(sites.size());
    for (std::size_t s = 0; s < sites.size(); ++s) {
        StreamRng stream = mc_root.fork(static_cast<std::uint64_t>(run)).fork(s);
        ms.per_site[s].push_back(
            sample_spatial_mask(net.site_channels(sites[s]), net.hp.rho, stream));
    }
    return ms;
}

// --- training ---------------------------------------------------------------

namespace {

struct LayerCache {
    Tensor4 input;         // pre-mask layer input
    Tensor4 masked_input;  // conv/linear input after channel masking
    Tensor4 pre_sign;      // sign layers
    BatchNormStats stats;  // batchnorm (batch statistics)
    double out_scale = 1.0;
    int in_c = 0, in_h = 0, in_w = 0;
};

}  // namespace

NetGrads forward_backward(BinaryConvNet& net, const Tensor4& x, const std::vector<int>& labels,
                          const MaskSet* masks, bool scale) {
    if (static_cast<int>(labels.size()) != x.n)
        throw ShapeError("label count " + std::to_string(labels.size()) + " vs batch " +
                         std::to_string(x.n));
    const std::size_t L = net.layers.size();
    std::vector<LayerCache> cache(L);
    Tensor4 cur = x;
    int site = 0;

    for (std::size_t i = 0; i < L; ++i) {
        Layer& l = net.layers[i];
        if (auto* cl = std::get_if<ConvLayer>(&l)) {
            cache[i].in_h = cur.h;
            cache[i].in_w = cur.w;
            Tensor4 in = cur;
            double s = 1.0;
            if (cl->input_dropout) {
                if (const auto* pm = site_masks(masks, site)) {
                    in = mask_channels(cur, *pm, 1);
                    s = mask_scale(*pm, scale);
                }
                ++site;
            }
            cache[i].masked_input = in;
            cache[i].out_scale = s;
            cur = conv2d(in, cl->w, cl->binary);
            if (s != 1.0)
                for (double& v : cur.v) v *= s;
        } else if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
            cache[i].input = cur;
            cache[i].stats = batchnorm_stats(cur);
            cur = batchnorm_apply(cur, cache[i].stats.mean, cache[i].stats.var, bn->gamma, bn->beta,
                                  bn->eps);
            for (int c = 0; c < bn->channels(); ++c) {
                const std::size_t ci = static_cast<std::size_t>(c);
                bn->run_mean[ci] =
                    (1.0 - bn->momentum) * bn->run_mean[ci] + bn->momentum * cache[i].stats.mean[ci];
                bn->run_var[ci] =
                    (1.0 - bn->momentum) * bn->run_var[ci] + bn->momentum * cache[i].stats.var[ci];
            }
        } else if (std::get_if<SignLayer>(&l)) {
            cache[i].pre_sign = cur;
            cur = sign_activation(cur);
        } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l)) {
            cache[i].in_h = cur.h;
            cache[i].in_w = cur.w;
            cur = avgpool2d(cur, ap->k, ap->s);
        } else if (std::get_if<AdaptivePoolLayer>(&l)) {
            cache[i].in_h = cur.h;
            cache[i].in_w = cur.w;
            cur = adaptive_avgpool_to_1x1(cur);
        } else if (std::get_if<FlattenLayer>(&l)) {
            cache[i].in_c = cur.c;
            cache[i].in_h = cur.h;
            cache[i].in_w = cur.w;
            cur = flatten(cur);
        } else if (auto* ll = std::get_if<LinearLayer>(&l)) {
            Tensor4 in = cur;
            double s = 1.0;
            if (ll->input_dropout) {
                if (const auto* pm = site_masks(masks, site)) {
                    in = mask_channels(cur, *pm, ll->drop_group);
                    s = mask_scale(*pm, scale);
                }
                ++site;
            }
            cache[i].masked_input = in;
            cache[i].out_scale = s;
            cur = linear(in, ll->w, {}, ll->binary, ll->accum_group);
            for (int b = 0; b < cur.n; ++b)
                for (int o = 0; o < cur.c; ++o) {
                    double v = cur.at(b, o, 0, 0);
                    v = v * s;
                    v = v + ll->bias[static_cast<std::size_t>(o)];
                    cur.at(b, o, 0, 0) = v;
                }
        }
    }

    // softmax cross-entropy
    NetGrads grads;
    grads.per_layer.resize(L);
    Tensor4 dlogits(cur.n, cur.c, 1, 1);
    double loss = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(cur.n);
    for (int b = 0; b < cur.n; ++b) {
        std::vector<double> lg(static_cast<std::size_t>(cur.c));
        for (int c = 0; c < cur.c; ++c) lg[static_cast<std::size_t>(c)] = cur.at(b, c, 0, 0);
        const std::vector<double> p = softmax(lg);
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= cur.c) throw ParamError("label " + std::to_string(y) + " out of range");
        loss -= std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300)) * inv_batch;
        for (int c = 0; c < cur.c; ++c)
            dlogits.at(b, c, 0, 0) = (p[static_cast<std::size_t>(c)] - (c == y ? 1.0 : 0.0)) * inv_batch;
    }
    if (!std::isfinite(loss)) throw DivergedError("non-finite cross-entropy loss");
    grads.task_loss = loss;

    // backward
    Tensor4 grad = dlogits;
    site = static_cast<int>(net.dropout_sites().size());
    for (std::size_t ri = L; ri-- > 0;) {
        Layer& l = net.layers[ri];
        if (auto* cl = std::get_if<ConvLayer>(&l)) {
            Tensor4 dconv = grad;
            if (cache[ri].out_scale != 1.0)
                for (double& v : dconv.v) v *= cache[ri].out_scale;
            Tensor4 dw = conv2d_backward_weights(dconv, cache[ri].masked_input, cl->w);
            if (cl->binary) {
                grads.per_layer[ri].dproxy = ste_backward(dw, normalize_weights(cl->w), 1.0);
            } else {
                grads.per_layer[ri].dproxy = dw;
            }
            Tensor4 dx =
                conv2d_backward_input(dconv, cl->w, cache[ri].in_h, cache[ri].in_w, cl->binary);
            if (cl->input_dropout) {
                --site;
                if (const auto* pm = site_masks(masks, site)) dx = mask_channels(dx, *pm, 1);
            }
            grad = dx;
        } else if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
            const Tensor4& in = cache[ri].input;
            const auto& st = cache[ri].stats;
            const double count = static_cast<double>(in.n) * in.h * in.w;
            auto& lg = grads.per_layer[ri];
            lg.dgamma.assign(static_cast<std::size_t>(in.c), 0.0);
            lg.dbeta.assign(static_cast<std::size_t>(in.c), 0.0);
            Tensor4 dx(in.n, in.c, in.h, in.w);
            for (int c = 0; c < in.c; ++c) {
                const std::size_t ci = static_cast<std::size_t>(c);
                const double inv_std = 1.0 / std::sqrt(st.var[ci] + bn->eps);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int b = 0; b < in.n; ++b)
                    for (int y = 0; y < in.h; ++y)
                        for (int xx = 0; xx < in.w; ++xx) {
                            const double xhat = (in.at(b, c, y, xx) - st.mean[ci]) * inv_std;
                            const double dy = grad.at(b, c, y, xx);
                            sum_dy += dy;
                            sum_dy_xhat += dy * xhat;
                        }
                lg.dgamma[ci] = sum_dy_xhat;
                lg.dbeta[ci] = sum_dy;
                const double g = bn->gamma[ci];
                for (int b = 0; b < in.n; ++b)
                    for (int y = 0; y < in.h; ++y)
                        for (int xx = 0; xx < in.w; ++xx) {
                            const double xhat = (in.at(b, c, y, xx) - st.mean[ci]) * inv_std;
                            const double dy = grad.at(b, c, y, xx);
                            dx.at(b, c, y, xx) =
                                g * inv_std * (dy - sum_dy / count - xhat * sum_dy_xhat / count);
                        }
            }
            grad = dx;
        } else if (std::get_if<SignLayer>(&l)) {
            grad = ste_backward(grad, cache[ri].pre_sign, 1.0);
        } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l)) {
            grad = avgpool2d_backward(grad, ap->k, ap->s, cache[ri].in_h, cache[ri].in_w);
        } else if (std::get_if<AdaptivePoolLayer>(&l)) {
            Tensor4 dx(grad.n, grad.c, cache[ri].in_h, cache[ri].in_w);
            const double inv = 1.0 / (static_cast<double>(cache[ri].in_h) * cache[ri].in_w);
            for (int b = 0; b < grad.n; ++b)
                for (int c = 0; c < grad.c; ++c) {
                    const double g = grad.at(b, c, 0, 0) * inv;
                    for (int y = 0; y < cache[ri].in_h; ++y)
                        for (int xx = 0; xx < cache[ri].in_w; ++xx) dx.at(b, c, y, xx) = g;
                }
            grad = dx;
        } else if (std::get_if<FlattenLayer>(&l)) {
            grad = unflatten(grad, cache[ri].in_c, cache[ri].in_h, cache[ri].in_w);
        } else if (auto* ll = std::get_if<LinearLayer>(&l)) {
            Tensor4 dmvm = grad;
            if (cache[ri].out_scale != 1.0)
                for (double& v : dmvm.v) v *= cache[ri].out_scale;
            grads.per_layer[ri].dbias = linear_backward_bias(grad);
            Tensor4 dw = linear_backward_weights(dmvm, cache[ri].masked_input);
            if (ll->binary) {
                grads.per_layer[ri].dproxy = ste_backward(dw, normalize_weights(ll->w), 1.0);
            } else {
                grads.per_layer[ri].dproxy = dw;
            }
            Tensor4 dx = linear_backward_input(dmvm, ll->w, ll->binary);
            if (ll->input_dropout) {
                --site;
                if (const auto* pm = site_masks(masks, site)) dx = mask_channels(dx, *pm, ll->drop_group);
            }
            grad = dx;
        }
    }
    return grads;
}

EvalResult evaluate(const BinaryConvNet& net, const Tensor4& x, const std::vector<int>& labels) {
    const auto probs = net.predict_probs(x, nullptr, false);
    EvalResult r;
    int correct = 0;
    for (int b = 0; b < x.n; ++b) {
        const auto& p = probs[static_cast<std::size_t>(b)];
        int arg = 0;
        for (int c = 1; c < static_cast<int>(p.size()); ++c)
            if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(arg)]) arg = c;
        const int y = labels[static_cast<std::size_t>(b)];
        if (arg == y) ++correct;
        r.loss -= std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
    }
    r.loss /= static_cast<double>(x.n);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(x.n);
    return r;
}

// --- builders ----------------------------------------------------------------

namespace {

Tensor4 gaussian_init(int n, int c, int h, int w, StreamRng& rng) {
    Tensor4 t(n, c, h, w);
    const double std = std::sqrt(2.0 / (static_cast<double>(c) * h * w));
    for (double& v : t.v) v = std * rng.next_gaussian();
    return t;
}

ConvLayer make_conv(int c_in, int c_out, int k, int stride, int pad, bool binary, StreamRng rng) {
    ConvLayer cl;
    cl.w.proxy = gaussian_init(c_out, c_in, k, k, rng);
    cl.w.stride = stride;
    cl.w.pad = pad;
    cl.binary = binary;
    cl.w.refresh_binary();
    return cl;
}

LinearLayer make_linear(int in, int out, bool binary, int accum_group, int drop_channels,
                        int drop_group, StreamRng rng) {
    LinearLayer ll;
    ll.w.proxy = gaussian_init(out, in, 1, 1, rng);
    ll.w.stride = 1;
    ll.w.pad = 0;
    ll.bias.assign(static_cast<std::size_t>(out), 0.0);
    ll.binary = binary;
    ll.accum_group = accum_group;
    ll.drop_channels = drop_channels;
    ll.drop_group = drop_group;
    ll.w.refresh_binary();
    return ll;
}

}  // namespace

BinaryConvNet make_lenet(int in_c, int in_h, int in_w, int classes, int c1, int c2, int fc_dim,
                         const HyperParams& hp, PlacementMode placement, StreamRng init_rng) {
    hp.validate();
    if (in_h % 4 != 0 || in_w % 4 != 0)
        throw ParamError("lenet topology needs input dims divisible by 4");
    BinaryConvNet net;
    net.hp = hp;
    net.input_c = in_c;
    net.input_h = in_h;
    net.input_w = in_w;
    net.num_classes = classes;
    net.topology_name = "lenet";
    const StreamRng wr = init_rng.fork(rng_tag::kWeightInit);

    const int ph = in_h / 4, pw = in_w / 4;
    const int feat_hw = ph * pw;
    net.layers.push_back(make_conv(in_c, c1, 3, 1, 1, true, wr.fork(0)));
    net.layers.push_back(BatchNormLayer(c1));
    net.layers.push_back(SignLayer{});
    net.layers.push_back(AvgPoolLayer{2, 2});
    net.layers.push_back(make_conv(c1, c2, 3, 1, 1, true, wr.fork(1)));
    net.layers.push_back(BatchNormLayer(c2));
    net.layers.push_back(SignLayer{});
    net.layers.push_back(AvgPoolLayer{2, 2});
    net.layers.push_back(FlattenLayer{});
    net.layers.push_back(
        make_linear(c2 * feat_hw, fc_dim, true, feat_hw, c2, feat_hw, wr.fork(2)));
    net.layers.push_back(BatchNormLayer(fc_dim));
    net.layers.push_back(SignLayer{});
    net.layers.push_back(make_linear(fc_dim, classes, true, 1, fc_dim, 1, wr.fork(3)));
    net.layers.push_back(BatchNormLayer(classes));  // learned logit scale

    DropoutPlacement p;
    p.mode = placement;
    if (placement == PlacementMode::kTopologyWise) {
        p.targets = {9};  // classifier input at the flatten boundary
    } else if (placement == PlacementMode::kLayerWise) {
        p.targets = {4};  // final block's conv layer
    }
    net.apply_placement(p);
    return net;
}

BinaryConvNet make_blob_net(const HyperParams& hp, StreamRng init_rng, bool with_dropout) {
    hp.validate();
    BinaryConvNet net;
    net.hp = hp;
    net.input_c = 2;
    net.input_h = 1;
    net.input_w = 1;
    net.num_classes = 2;
    net.topology_name = "blob2";
    net.layers.push_back(make_linear(2, 2, true, 1, 2, 1, init_rng.fork(rng_tag::kWeightInit)));
    DropoutPlacement p;
    if (with_dropout) {
        p.mode = PlacementMode::kTopologyWise;
        p.targets = {0};
    }
    net.apply_placement(p);
    return net;
}

BinaryConvNet make_gradcheck_net(int in_c, int in_h, int in_w, int classes, StreamRng init_rng) {
    BinaryConvNet net;
    net.hp = HyperParams{0.0, 0.0, 1};
    net.input_c = in_c;
    net.input_h = in_h;
    net.input_w = in_w;
    net.num_classes = classes;
    net.topology_name = "gradcheck";
    const StreamRng wr = init_rng.fork(rng_tag::kWeightInit);
    net.layers.push_back(make_conv(in_c, 4, 3, 1, 1, false, wr.fork(0)));
    net.layers.push_back(BatchNormLayer(4));
    net.layers.push_back(AvgPoolLayer{2, 2});
    net.layers.push_back(FlattenLayer{});
    net.layers.push_back(
        make_linear(4 * (in_h / 2) * (in_w / 2), classes, false, 1, 0, 1, wr.fork(1)));
    net.apply_placement(DropoutPlacement{});
    return net;
}

}  // namespace spindrop

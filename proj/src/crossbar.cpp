#include "spindrop/crossbar.hpp"

#include <algorithm>
#include <cstddef>
#include <string>

#include <json.hpp>

namespace spindrop {

namespace {

const char* strategy_name(MapStrategy s) { return s == MapStrategy::kS1 ? "S1" : "S2"; }

// --- base64 (for the layout sign bitmap) --------------------------------------

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
        const std::size_t rem = bytes.size() - i;
        if (rem > 1) chunk |= std::uint32_t(bytes[i + 1]) << 8;
        if (rem > 2) chunk |= std::uint32_t(bytes[i + 2]);
        out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
        out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
        out.push_back(rem > 1 ? kB64Alphabet[(chunk >> 6) & 63] : '=');
        out.push_back(rem > 2 ? kB64Alphabet[chunk & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw DataFormatError("base64 payload length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4] = {0, 0, 0, 0};
        int pads = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=') {
                ++pads;
                continue;
            }
            vals[j] = value_of(c);
            if (vals[j] < 0 || pads > 0)
                throw DataFormatError("invalid base64 character at offset " + std::to_string(i + j));
        }
        const std::uint32_t chunk = (std::uint32_t(vals[0]) << 18) | (std::uint32_t(vals[1]) << 12) |
                                    (std::uint32_t(vals[2]) << 6) | std::uint32_t(vals[3]);
        out.push_back(static_cast<unsigned char>((chunk >> 16) & 0xff));
        if (pads < 2) out.push_back(static_cast<unsigned char>((chunk >> 8) & 0xff));
        if (pads < 1) out.push_back(static_cast<unsigned char>(chunk & 0xff));
    }
    return out;
}

// Contiguous [first, last) row range per group id, derived from row_group.
std::vector<std::pair<int, int>> group_ranges(const std::vector<int>& row_group) {
    std::vector<std::pair<int, int>> ranges;
    for (int r = 0; r < static_cast<int>(row_group.size()); ++r) {
        const int g = row_group[static_cast<std::size_t>(r)];
        if (g == static_cast<int>(ranges.size())) {
            ranges.emplace_back(r, r + 1);
        } else if (g == static_cast<int>(ranges.size()) - 1) {
            ranges.back().second = r + 1;
        } else {
            throw ConfigError("row-group map is not a contiguous ascending partition at row " +
                              std::to_string(r));
        }
    }
    return ranges;
}

}  // namespace

int CrossbarLayout::group_count() const {
    return row_group.empty() ? 0 : row_group.back() + 1;
}

void CrossbarLayout::validate() const {
    if (strategy == MapStrategy::kS1) {
        if (crossbars.size() != 1) throw ConfigError("S1 layout must hold exactly one crossbar");
        const SignMatrix& xb = crossbars[0];
        if (xb.rows != k * k * c_in || xb.cols != c_out)
            throw ConfigError("S1 crossbar is " + std::to_string(xb.rows) + "x" +
                              std::to_string(xb.cols) + ", expected " + std::to_string(k * k * c_in) +
                              "x" + std::to_string(c_out));
        if (static_cast<int>(row_group.size()) != xb.rows)
            throw ConfigError("row-group map length does not cover the crossbar rows");
        group_ranges(row_group);
    } else {
        if (static_cast<int>(crossbars.size()) != k * k)
            throw ConfigError("S2 layout must hold K*K crossbars");
        for (const auto& xb : crossbars)
            if (xb.rows != c_in || xb.cols != c_out)
                throw ConfigError("S2 crossbar must be C_in x C_out");
        if (static_cast<int>(row_group.size()) != c_in)
            throw ConfigError("S2 row-group map must cover C_in rows");
        for (int i = 0; i < c_in; ++i)
            if (row_group[static_cast<std::size_t>(i)] != i)
                throw ConfigError("S2 dropout module m must drive row m of every crossbar");
    }
    for (const auto& xb : crossbars)
        for (double v : xb.cells)
            if (v != 1.0 && v != -1.0) throw ConfigError("crossbar cells must be +-1 signs");
}

CrossbarLayout map_strategy1(const ConvWeight& w) {
    if (!w.signs.same_shape(w.proxy))
        throw ConfigError("binary view missing; call refresh_binary() before mapping");
    const int k = w.k(), ci = w.c_in(), co = w.c_out();
    CrossbarLayout layout;
    layout.strategy = MapStrategy::kS1;
    layout.k = k;
    layout.c_in = ci;
    layout.c_out = co;
    layout.stride = w.stride;
    layout.crossbars.emplace_back(k * k * ci, co);
    SignMatrix& xb = layout.crossbars[0];
    // column j = kernel j flattened channel-major, then kernel row, then col
    for (int j = 0; j < co; ++j)
        for (int c = 0; c < ci; ++c)
            for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj)
                    xb.at(c * k * k + ki * k + kj, j) = w.signs.at(j, c, ki, kj);
    layout.row_group.resize(static_cast<std::size_t>(k * k * ci));
    for (int r = 0; r < k * k * ci; ++r) layout.row_group[static_cast<std::size_t>(r)] = r / (k * k);
    return layout;
}

CrossbarLayout map_strategy2(const ConvWeight& w) {
    if (!w.signs.same_shape(w.proxy))
        throw ConfigError("binary view missing; call refresh_binary() before mapping");
    const int k = w.k(), ci = w.c_in(), co = w.c_out();
    CrossbarLayout layout;
    layout.strategy = MapStrategy::kS2;
    layout.k = k;
    layout.c_in = ci;
    layout.c_out = co;
    layout.stride = w.stride;
    layout.crossbars.assign(static_cast<std::size_t>(k * k), SignMatrix(ci, co));
    for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) {
            SignMatrix& xb = layout.crossbars[static_cast<std::size_t>(u * k + v)];
            for (int i = 0; i < ci; ++i)
                for (int j = 0; j < co; ++j) xb.at(i, j) = w.signs.at(j, i, u, v);
        }
    layout.row_group.resize(static_cast<std::size_t>(ci));
    for (int i = 0; i < ci; ++i) layout.row_group[static_cast<std::size_t>(i)] = i;
    return layout;
}

CrossbarLayout map_fc(const ConvWeight& w, int group_rows) {
    if (w.k() != 1) throw ConfigError("FC mapping expects a (out, in, 1, 1) weight");
    if (group_rows < 1 || w.c_in() % group_rows != 0)
        throw ConfigError("FC row-group size must divide the input length");
    CrossbarLayout layout;
    layout.strategy = MapStrategy::kS1;
    layout.k = 1;
    layout.c_in = w.c_in();
    layout.c_out = w.c_out();
    layout.stride = 1;
    layout.crossbars.emplace_back(w.c_in(), w.c_out());
    SignMatrix& xb = layout.crossbars[0];
    for (int i = 0; i < w.c_in(); ++i)
        for (int j = 0; j < w.c_out(); ++j) xb.at(i, j) = w.signs.at(j, i, 0, 0);
    layout.row_group.resize(static_cast<std::size_t>(w.c_in()));
    for (int i = 0; i < w.c_in(); ++i) layout.row_group[static_cast<std::size_t>(i)] = i / group_rows;
    return layout;
}

Tensor4 unmap_layout(const CrossbarLayout& layout) {
    layout.validate();
    const int k = layout.k, ci = layout.c_in, co = layout.c_out;
    Tensor4 signs(co, ci, k, k);
    if (layout.strategy == MapStrategy::kS1) {
        const SignMatrix& xb = layout.crossbars[0];
        for (int j = 0; j < co; ++j)
            for (int c = 0; c < ci; ++c)
                for (int ki = 0; ki < k; ++ki)
                    for (int kj = 0; kj < k; ++kj)
                        signs.at(j, c, ki, kj) = xb.at(c * k * k + ki * k + kj, j);
    } else {
        for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
                const SignMatrix& xb = layout.crossbars[static_cast<std::size_t>(u * k + v)];
                for (int i = 0; i < ci; ++i)
                    for (int j = 0; j < co; ++j) signs.at(j, i, u, v) = xb.at(i, j);
            }
    }
    return signs;
}

std::string dump_layout_json(const CrossbarLayout& layout) {
    layout.validate();
    nlohmann::json j;
    j["format"] = 1;
    j["strategy"] = strategy_name(layout.strategy);
    j["dims"] = {{"k", layout.k}, {"c_in", layout.c_in}, {"c_out", layout.c_out}, {"stride", layout.stride}};
    auto shapes = nlohmann::json::array();
    for (const auto& xb : layout.crossbars) shapes.push_back({{"rows", xb.rows}, {"cols", xb.cols}});
    j["crossbars"] = shapes;
    j["row_group"] = layout.row_group;

    std::vector<unsigned char> bytes;
    std::size_t bit = 0;
    for (const auto& xb : layout.crossbars)
        for (double v : xb.cells) {
            if (bit % 8 == 0) bytes.push_back(0);
            if (v > 0.0) bytes.back() |= static_cast<unsigned char>(1u << (bit % 8));
            ++bit;
        }
    j["signs_base64"] = base64_encode(bytes);
    return j.dump(2);
}

CrossbarLayout parse_layout_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError(std::string("layout JSON parse error: ") + e.what());
    }
    CrossbarLayout layout;
    try {
        const std::string strat = j.at("strategy").get<std::string>();
        if (strat == "S1") {
            layout.strategy = MapStrategy::kS1;
        } else if (strat == "S2") {
            layout.strategy = MapStrategy::kS2;
        } else {
            throw DataFormatError("unknown mapping strategy '" + strat + "'");
        }
        layout.k = j.at("dims").at("k").get<int>();
        layout.c_in = j.at("dims").at("c_in").get<int>();
        layout.c_out = j.at("dims").at("c_out").get<int>();
        layout.stride = j.at("dims").at("stride").get<int>();
        layout.row_group = j.at("row_group").get<std::vector<int>>();
        const auto bytes = base64_decode(j.at("signs_base64").get<std::string>());
        std::size_t bit = 0;
        for (const auto& shape : j.at("crossbars")) {
            SignMatrix xb(shape.at("rows").get<int>(), shape.at("cols").get<int>());
            for (double& cell : xb.cells) {
                if (bit / 8 >= bytes.size()) throw DataFormatError("sign bitmap shorter than crossbars");
                cell = (bytes[bit / 8] >> (bit % 8)) & 1u ? 1.0 : -1.0;
                ++bit;
            }
            layout.crossbars.push_back(std::move(xb));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError(std::string("layout JSON missing field: ") + e.what());
    }
    layout.validate();
    return layout;
}

InputStream stream_moving_windows(const Tensor4& ifm, int k, int s, int pad, MapStrategy strategy) {
    if (ifm.n != 1) throw ParamError("stream_moving_windows expects a single image, got " + ifm.shape_str());
    if (k < 1 || s < 1 || pad < 0) throw ParamError("invalid window parameters");
    const int oh = (ifm.h + 2 * pad - k) / s + 1;
    const int ow = (ifm.w + 2 * pad - k) / s + 1;
    if (oh < 1 || ow < 1)
        throw ShapeError("window " + std::to_string(k) + "x" + std::to_string(k) +
                         " exceeds padded input " + ifm.shape_str());

    InputStream st;
    st.strategy = strategy;
    st.n_cycles = oh * ow;
    st.out_h = oh;
    st.out_w = ow;
    st.k = k;
    st.c_in = ifm.c;
    st.stride = s;
    st.pad = pad;
    st.in_h = ifm.h;
    st.in_w = ifm.w;
    st.cycles.assign(static_cast<std::size_t>(st.n_cycles),
                     std::vector<double>(static_cast<std::size_t>(k * k * ifm.c), 0.0));

    // appearances per flat IFM coordinate, for the shared-element map
    std::vector<std::vector<InputStream::Appearance>> seen(
        static_cast<std::size_t>(ifm.c) * ifm.h * ifm.w);

    for (int t = 0; t < st.n_cycles; ++t) {
        const int oy = t / ow, ox = t % ow;
        auto& vec = st.cycles[static_cast<std::size_t>(t)];
        for (int c = 0; c < ifm.c; ++c)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    const int y = oy * s - pad + u;
                    const int x = ox * s - pad + v;
                    const int pos = strategy == MapStrategy::kS1 ? c * k * k + u * k + v
                                                                 : (u * k + v) * ifm.c + c;
                    if (y < 0 || y >= ifm.h || x < 0 || x >= ifm.w) continue;  // padded: stays 0
                    vec[static_cast<std::size_t>(pos)] = ifm.at(0, c, y, x);
                    seen[(static_cast<std::size_t>(c) * ifm.h + y) * ifm.w + x].push_back({t, pos});
                }
    }

    for (int c = 0; c < ifm.c; ++c)
        for (int y = 0; y < ifm.h; ++y)
            for (int x = 0; x < ifm.w; ++x) {
                auto& app = seen[(static_cast<std::size_t>(c) * ifm.h + y) * ifm.w + x];
                if (app.size() < 2) continue;
                st.shared.push_back({{c, y, x}, std::move(app)});
            }
    return st;
}

void mtj_sample(MTJDropoutModule& module, StreamRng& rng) {
    if (module.hold)
        throw IllegalTransition("module " + std::to_string(module.id) +
                                ": sampling while hold is asserted");
    module.state = rng.next_unit() < module.set_probability ? MTJDropoutModule::State::kAntiParallel
                                                            : MTJDropoutModule::State::kParallel;
}

std::vector<MTJDropoutModule> make_modules(int count, double rho) {
    if (rho < 0.0 || rho >= 1.0) throw ParamError("set probability must lie in [0,1)");
    std::vector<MTJDropoutModule> mods(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        mods[static_cast<std::size_t>(i)].set_probability = rho;
        mods[static_cast<std::size_t>(i)].id = i;
    }
    return mods;
}

LayerSimResult simulate_layer(const CrossbarLayout& layout, const InputStream& stream,
                              std::vector<MTJDropoutModule>& modules, DropoutConfigMode mode,
                              StreamRng& rng, bool scale) {
    layout.validate();
    if (stream.strategy != layout.strategy)
        throw ConfigError("stream strategy does not match layout strategy");
    if (stream.k != layout.k || stream.c_in != layout.c_in)
        throw ConfigError("stream window " + std::to_string(stream.k) + "/" +
                          std::to_string(stream.c_in) + " does not match layout " +
                          std::to_string(layout.k) + "/" + std::to_string(layout.c_in));
    if ((mode == DropoutConfigMode::kS1Conv && layout.strategy != MapStrategy::kS1) ||
        (mode == DropoutConfigMode::kS2Conv && layout.strategy != MapStrategy::kS2))
        throw ConfigError("dropout configuration mode does not match the mapping strategy");
    if (mode == DropoutConfigMode::kFlattenNoAvgPool && stream.n_cycles != 1)
        throw ConfigError("flatten mode applies its FC input in one cycle only");

    const bool dropping = !modules.empty();
    if (dropping && static_cast<int>(modules.size()) != layout.group_count())
        throw ConfigError("module count " + std::to_string(modules.size()) +
                          " does not match layout group count " +
                          std::to_string(layout.group_count()));
    const double rho = dropping ? modules[0].set_probability : 0.0;
    const double s = (scale && dropping && rho > 0.0) ? 1.0 / (1.0 - rho) : 1.0;
    const bool hold_policy =
        mode == DropoutConfigMode::kS1Conv || mode == DropoutConfigMode::kS2Conv;

    const auto ranges = layout.strategy == MapStrategy::kS1 ? group_ranges(layout.row_group)
                                                            : std::vector<std::pair<int, int>>{};

    LayerSimResult res;
    res.ofm = Tensor4(1, layout.c_out, stream.out_h, stream.out_w);
    res.trace.dropped.assign(static_cast<std::size_t>(stream.n_cycles),
                             std::vector<bool>(modules.size(), false));

    for (int t = 0; t < stream.n_cycles; ++t) {
        if (dropping) {
            if (t == 0) {
                for (auto& m : modules) mtj_sample(m, rng);
                if (hold_policy)
                    for (auto& m : modules) m.hold = true;
            } else if (mode == DropoutConfigMode::kWithAvgPool) {
                for (auto& m : modules) mtj_sample(m, rng);  // fresh draw per read, no hold
            }
            for (std::size_t i = 0; i < modules.size(); ++i)
                res.trace.dropped[static_cast<std::size_t>(t)][i] = modules[i].dropped();
        }

        const auto& vec = stream.cycles[static_cast<std::size_t>(t)];
        const int oy = t / stream.out_w, ox = t % stream.out_w;
        for (int j = 0; j < layout.c_out; ++j) {
            double acc = 0.0;
            if (layout.strategy == MapStrategy::kS1) {
                const SignMatrix& xb = layout.crossbars[0];
                for (std::size_t g = 0; g < ranges.size(); ++g) {
                    if (dropping && modules[g].dropped()) continue;
                    double part = 0.0;
                    for (int r = ranges[g].first; r < ranges[g].second; ++r)
                        part += vec[static_cast<std::size_t>(r)] * xb.at(r, j);
                    acc += part;
                }
            } else {
                for (int i = 0; i < layout.c_in; ++i) {
                    if (dropping && modules[static_cast<std::size_t>(i)].dropped()) continue;
                    double part = 0.0;
                    for (int u = 0; u < layout.k; ++u)
                        for (int v = 0; v < layout.k; ++v)
                            part += vec[static_cast<std::size_t>((u * layout.k + v) * layout.c_in + i)] *
                                    layout.crossbars[static_cast<std::size_t>(u * layout.k + v)].at(i, j);
                    acc += part;
                }
            }
            if (s != 1.0) acc = acc * s;
            res.ofm.at(0, j, oy, ox) = acc;
        }
    }

    if (dropping && hold_policy)
        for (auto& m : modules) m.hold = false;  // pass complete, release for the next sample
    return res;
}

NetworkLayouts build_layouts(const BinaryConvNet& net, MapStrategy strategy) {
    NetworkLayouts out;
    out.per_layer.resize(net.layers.size());
    out.present.assign(net.layers.size(), false);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* cl = std::get_if<ConvLayer>(&net.layers[i])) {
            out.per_layer[i] =
                strategy == MapStrategy::kS1 ? map_strategy1(cl->w) : map_strategy2(cl->w);
            out.present[i] = true;
        } else if (const auto* ll = std::get_if<LinearLayer>(&net.layers[i])) {
            out.per_layer[i] = map_fc(ll->w, ll->accum_group);
            out.present[i] = true;
        }
    }
    return out;
}

McResult simulate_network(const BinaryConvNet& net, const NetworkLayouts& layouts, const Tensor4& x,
                          int T, const StreamRng& rng, RunTrace* run0_trace) {
    if (T < 1) throw ParamError("MC sample count T must be >= 1");
    if (x.n != 1) throw ParamError("simulate_network expects a single input, got batch " + x.shape_str());
    if (layouts.per_layer.size() != net.layers.size())
        throw ConfigError("layout table does not cover every layer");

    McResult res;
    res.per_run_probs.resize(static_cast<std::size_t>(T));
    const StreamRng mc_root = rng.fork(rng_tag::kMcRun);
    const double rho = net.hp.rho;

    for (int t = 0; t < T; ++t) {
        Tensor4 cur = x;
        int site = 0;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            const Layer& l = net.layers[i];
            if (const auto* cl = std::get_if<ConvLayer>(&l)) {
                if (!layouts.present[i]) throw ConfigError("conv layer " + std::to_string(i) + " has no layout");
                const CrossbarLayout& layout = layouts.per_layer[i];
                const InputStream stream =
                    stream_moving_windows(cur, layout.k, cl->w.stride, cl->w.pad, layout.strategy);
                std::vector<MTJDropoutModule> modules;
                StreamRng draw(0);
                if (cl->input_dropout && rho > 0.0) {
                    modules = make_modules(layout.c_in, rho);
                    draw = mc_root.fork(static_cast<std::uint64_t>(t)).fork(static_cast<std::uint64_t>(site));
                    ++site;
                }
                const DropoutConfigMode mode = layout.strategy == MapStrategy::kS1
                                                   ? DropoutConfigMode::kS1Conv
                                                   : DropoutConfigMode::kS2Conv;
                cur = simulate_layer(layout, stream, modules, mode, draw, true).ofm;
                if (t == 0 && run0_trace) run0_trace->layer_ofms.emplace_back(static_cast<int>(i), cur);
            } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
                cur = batchnorm_apply(cur, bn->run_mean, bn->run_var, bn->gamma, bn->beta, bn->eps);
            } else if (std::get_if<SignLayer>(&l)) {
                cur = sign_activation(cur);
            } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l)) {
                cur = avgpool2d(cur, ap->k, ap->s);
            } else if (std::get_if<AdaptivePoolLayer>(&l)) {
                cur = adaptive_avgpool_to_1x1(cur);
            } else if (std::get_if<FlattenLayer>(&l)) {
                cur.c = cur.c * cur.h * cur.w;
                cur.h = 1;
                cur.w = 1;
            } else if (const auto* ll = std::get_if<LinearLayer>(&l)) {
                if (!layouts.present[i]) throw ConfigError("linear layer " + std::to_string(i) + " has no layout");
                const CrossbarLayout& layout = layouts.per_layer[i];
                // FC input is applied in a single cycle
                InputStream stream;
                stream.strategy = MapStrategy::kS1;
                stream.n_cycles = 1;
                stream.out_h = 1;
                stream.out_w = 1;
                stream.k = 1;
                stream.c_in = cur.c;
                stream.in_h = 1;
                stream.in_w = 1;
                stream.cycles = {cur.v};
                std::vector<MTJDropoutModule> modules;
                StreamRng draw(0);
                if (ll->input_dropout && rho > 0.0) {
                    modules = make_modules(ll->drop_channels, rho);
                    draw = mc_root.fork(static_cast<std::uint64_t>(t)).fork(static_cast<std::uint64_t>(site));
                    ++site;
                }
                const DropoutConfigMode mode = ll->resample_per_read
                                                   ? DropoutConfigMode::kWithAvgPool
                                                   : DropoutConfigMode::kFlattenNoAvgPool;
                cur = simulate_layer(layout, stream, modules, mode, draw, true).ofm;
                if (t == 0 && run0_trace) run0_trace->layer_ofms.emplace_back(static_cast<int>(i), cur);
                for (int o = 0; o < cur.c; ++o) {
                    double v = cur.at(0, o, 0, 0);
                    v = v + ll->bias[static_cast<std::size_t>(o)];
                    cur.at(0, o, 0, 0) = v;
                }
            }
        }
        std::vector<double> logits(static_cast<std::size_t>(cur.c));
        for (int c = 0; c < cur.c; ++c) logits[static_cast<std::size_t>(c)] = cur.at(0, c, 0, 0);
        res.per_run_probs[static_cast<std::size_t>(t)] = softmax(logits);
    }

    const std::size_t classes = res.per_run_probs[0].size();
    res.mean_probs.assign(classes, 0.0);
    for (const auto& row : res.per_run_probs)
        for (std::size_t c = 0; c < classes; ++c) res.mean_probs[c] += row[c];
    for (double& p : res.mean_probs) p /= static_cast<double>(T);
    return res;
}

std::vector<std::vector<bool>> sample_cycle_element_masks(const InputStream& stream, double rho,
                                                          StreamRng& rng) {
    if (rho < 0.0 || rho >= 1.0) throw ParamError("rho must lie in [0,1)");
    std::vector<std::vector<bool>> masks(static_cast<std::size_t>(stream.n_cycles));
    const std::size_t width = static_cast<std::size_t>(stream.k) * stream.k * stream.c_in;
    for (auto& row : masks) {
        row.resize(width);
        for (std::size_t p = 0; p < width; ++p) row[p] = rng.next_unit() < rho;  // true = dropped
    }
    return masks;
}

InconsistencyReport demonstrate_mask_inconsistency(
    const InputStream& stream, const std::vector<std::vector<bool>>& per_cycle_element_masks) {
    if (static_cast<int>(per_cycle_element_masks.size()) != stream.n_cycles)
        throw ParamError("mask table must cover every stream cycle");
    InconsistencyReport report;
    report.shared_coordinates = static_cast<int>(stream.shared.size());
    for (const auto& se : stream.shared) {
        bool saw_kept = false, saw_dropped = false;
        for (const auto& app : se.appearances) {
            const bool dropped = per_cycle_element_masks[static_cast<std::size_t>(app.cycle)]
                                                        [static_cast<std::size_t>(app.pos)];
            (dropped ? saw_dropped : saw_kept) = true;
        }
        if (saw_kept && saw_dropped) report.violations.push_back(se.coord);
    }
    return report;
}

}  // namespace spindrop

#include "spindrop/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace spindrop {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

constexpr char kMagic[8] = {'S', 'P', 'D', 'C', 'K', 'P', 'T', '\x01'};

enum LayerTag : std::uint32_t {
    kTagConv = 1,
    kTagBatchNorm = 2,
    kTagSign = 3,
    kTagAvgPool = 4,
    kTagAdaptivePool = 5,
    kTagFlatten = 6,
    kTagLinear = 7,
};

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ofstream& f, double v) { f.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ofstream& f, const std::string& s) {
    put_u32(f, static_cast<std::uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_vec(std::ofstream& f, const std::vector<double>& v) {
    put_u64(f, v.size());
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}
void put_tensor(std::ofstream& f, const Tensor4& t) {
    put_u32(f, static_cast<std::uint32_t>(t.n));
    put_u32(f, static_cast<std::uint32_t>(t.c));
    put_u32(f, static_cast<std::uint32_t>(t.h));
    put_u32(f, static_cast<std::uint32_t>(t.w));
    f.write(reinterpret_cast<const char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * 8));
}

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
    std::uint32_t v;
    if (!f.read(reinterpret_cast<char*>(&v), 4))
        throw DataFormatError(path + ": truncated checkpoint at byte " + std::to_string(f.tellg()));
    return v;
}
std::uint64_t get_u64(std::ifstream& f, const std::string& path) {
    std::uint64_t v;
    if (!f.read(reinterpret_cast<char*>(&v), 8))
        throw DataFormatError(path + ": truncated checkpoint");
    return v;
}
double get_f64(std::ifstream& f, const std::string& path) {
    double v;
    if (!f.read(reinterpret_cast<char*>(&v), 8))
        throw DataFormatError(path + ": truncated checkpoint");
    return v;
}
std::string get_str(std::ifstream& f, const std::string& path) {
    const std::uint32_t len = get_u32(f, path);
    std::string s(len, '\0');
    if (len > 0 && !f.read(s.data(), len)) throw DataFormatError(path + ": truncated string");
    return s;
}
std::vector<double> get_vec(std::ifstream& f, const std::string& path) {
    const std::uint64_t len = get_u64(f, path);
    std::vector<double> v(len);
    if (len > 0 &&
        !f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(len * 8)))
        throw DataFormatError(path + ": truncated vector payload");
    return v;
}
Tensor4 get_tensor(std::ifstream& f, const std::string& path) {
    const int n = static_cast<int>(get_u32(f, path));
    const int c = static_cast<int>(get_u32(f, path));
    const int h = static_cast<int>(get_u32(f, path));
    const int w = static_cast<int>(get_u32(f, path));
    Tensor4 t(n, c, h, w);
    if (!f.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * 8)))
        throw DataFormatError(path + ": truncated tensor payload");
    return t;
}

const char* placement_name(PlacementMode m) {
    switch (m) {
        case PlacementMode::kLayerWise: return "layer-wise";
        case PlacementMode::kTopologyWise: return "topology-wise";
        default: return "none";
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const BinaryConvNet& net) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open for writing");
    f.write(kMagic, 8);
    put_str(f, net.topology_name);
    put_u32(f, static_cast<std::uint32_t>(net.input_c));
    put_u32(f, static_cast<std::uint32_t>(net.input_h));
    put_u32(f, static_cast<std::uint32_t>(net.input_w));
    put_u32(f, static_cast<std::uint32_t>(net.num_classes));
    put_f64(f, net.hp.rho);
    put_f64(f, net.hp.lambda);
    put_u32(f, static_cast<std::uint32_t>(net.hp.mc_samples));
    put_u32(f, static_cast<std::uint32_t>(net.placement.mode));
    put_u32(f, static_cast<std::uint32_t>(net.placement.targets.size()));
    for (int t : net.placement.targets) put_u32(f, static_cast<std::uint32_t>(t));

    put_u32(f, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        if (const auto* cl = std::get_if<ConvLayer>(&l)) {
            put_u32(f, kTagConv);
            put_u32(f, static_cast<std::uint32_t>(cl->w.stride));
            put_u32(f, static_cast<std::uint32_t>(cl->w.pad));
            put_u32(f, cl->binary ? 1 : 0);
            put_tensor(f, cl->w.proxy);
            put_tensor(f, cl->w.signs);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
            put_u32(f, kTagBatchNorm);
            put_f64(f, bn->eps);
            put_f64(f, bn->momentum);
            put_vec(f, bn->gamma);
            put_vec(f, bn->beta);
            put_vec(f, bn->run_mean);
            put_vec(f, bn->run_var);
        } else if (std::get_if<SignLayer>(&l)) {
            put_u32(f, kTagSign);
        } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l)) {
            put_u32(f, kTagAvgPool);
            put_u32(f, static_cast<std::uint32_t>(ap->k));
            put_u32(f, static_cast<std::uint32_t>(ap->s));
        } else if (std::get_if<AdaptivePoolLayer>(&l)) {
            put_u32(f, kTagAdaptivePool);
        } else if (std::get_if<FlattenLayer>(&l)) {
            put_u32(f, kTagFlatten);
        } else if (const auto* ll = std::get_if<LinearLayer>(&l)) {
            put_u32(f, kTagLinear);
            put_u32(f, ll->binary ? 1 : 0);
            put_u32(f, static_cast<std::uint32_t>(ll->accum_group));
            put_u32(f, static_cast<std::uint32_t>(ll->drop_channels));
            put_u32(f, static_cast<std::uint32_t>(ll->drop_group));
            put_u32(f, ll->resample_per_read ? 1 : 0);
            put_tensor(f, ll->w.proxy);
            put_tensor(f, ll->w.signs);
            put_vec(f, ll->bias);
        }
    }
    if (!f) throw DataFormatError(path + ": write failed");

    nlohmann::json side;
    side["format"] = 1;
    side["topology"] = net.topology_name;
    side["input"] = {net.input_c, net.input_h, net.input_w};
    side["classes"] = net.num_classes;
    side["rho"] = net.hp.rho;
    side["lambda"] = net.hp.lambda;
    side["mc_samples"] = net.hp.mc_samples;
    side["placement"] = placement_name(net.placement.mode);
    side["placement_targets"] = net.placement.targets;
    std::ofstream js(path + ".json");
    if (!js) throw DataFormatError(path + ".json: cannot open for writing");
    js << side.dump(2) << "\n";
}

BinaryConvNet load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open");
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw DataFormatError(path + ": bad checkpoint magic at byte 0");

    BinaryConvNet net;
    net.topology_name = get_str(f, path);
    net.input_c = static_cast<int>(get_u32(f, path));
    net.input_h = static_cast<int>(get_u32(f, path));
    net.input_w = static_cast<int>(get_u32(f, path));
    net.num_classes = static_cast<int>(get_u32(f, path));
    net.hp.rho = get_f64(f, path);
    net.hp.lambda = get_f64(f, path);
    net.hp.mc_samples = static_cast<int>(get_u32(f, path));
    DropoutPlacement placement;
    placement.mode = static_cast<PlacementMode>(get_u32(f, path));
    const std::uint32_t ntargets = get_u32(f, path);
    for (std::uint32_t i = 0; i < ntargets; ++i)
        placement.targets.push_back(static_cast<int>(get_u32(f, path)));

    const std::uint32_t nlayers = get_u32(f, path);
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        const std::uint32_t tag = get_u32(f, path);
        switch (tag) {
            case kTagConv: {
                ConvLayer cl;
                cl.w.stride = static_cast<int>(get_u32(f, path));
                cl.w.pad = static_cast<int>(get_u32(f, path));
                cl.binary = get_u32(f, path) != 0;
                cl.w.proxy = get_tensor(f, path);
                cl.w.signs = get_tensor(f, path);
                net.layers.emplace_back(std::move(cl));
                break;
            }
            case kTagBatchNorm: {
                BatchNormLayer bn;
                bn.eps = get_f64(f, path);
                bn.momentum = get_f64(f, path);
                bn.gamma = get_vec(f, path);
                bn.beta = get_vec(f, path);
                bn.run_mean = get_vec(f, path);
                bn.run_var = get_vec(f, path);
                net.layers.emplace_back(std::move(bn));
                break;
            }
            case kTagSign: net.layers.emplace_back(SignLayer{}); break;
            case kTagAvgPool: {
                AvgPoolLayer ap;
                ap.k = static_cast<int>(get_u32(f, path));
                ap.s = static_cast<int>(get_u32(f, path));
                net.layers.emplace_back(ap);
                break;
            }
            case kTagAdaptivePool: net.layers.emplace_back(AdaptivePoolLayer{}); break;
            case kTagFlatten: net.layers.emplace_back(FlattenLayer{}); break;
            case kTagLinear: {
                LinearLayer ll;
                ll.binary = get_u32(f, path) != 0;
                ll.accum_group = static_cast<int>(get_u32(f, path));
                ll.drop_channels = static_cast<int>(get_u32(f, path));
                ll.drop_group = static_cast<int>(get_u32(f, path));
                ll.resample_per_read = get_u32(f, path) != 0;
                ll.w.proxy = get_tensor(f, path);
                ll.w.signs = get_tensor(f, path);
                ll.bias = get_vec(f, path);
                net.layers.emplace_back(std::move(ll));
                break;
            }
            default:
                throw DataFormatError(path + ": unknown layer tag " + std::to_string(tag));
        }
    }
    net.apply_placement(placement);
    return net;
}

}  // namespace spindrop

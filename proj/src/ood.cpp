#include "spindrop/ood.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "spindrop/dropout.hpp"
#include "spindrop/parallel.hpp"

namespace spindrop {

OODDataset gen_gaussian_noise(int n, int c, int h, int w, StreamRng rng) {
    if (n < 1) throw ParamError("OOD dataset size must be >= 1");
    OODDataset d;
    d.id = "d1";
    d.images = Tensor4(n, c, h, w);
    StreamRng r = rng.fork(rng_tag::kOod);
    for (double& px : d.images.v) px = r.next_gaussian();
    return d;
}

OODDataset gen_uniform_noise(int n, int c, int h, int w, StreamRng rng) {
    if (n < 1) throw ParamError("OOD dataset size must be >= 1");
    OODDataset d;
    d.id = "d2";
    d.images = Tensor4(n, c, h, w);
    StreamRng r = rng.fork(rng_tag::kOod);
    for (double& px : d.images.v) px = r.next_unit();
    return d;
}

OODDataset corrupt_with_noise(const Tensor4& id_images, NoiseKind kind, double amplitude,
                              StreamRng rng) {
    if (id_images.n < 1) throw ParamError("cannot corrupt an empty image set");
    if (amplitude < 0.0) throw ParamError("noise amplitude must be >= 0");
    OODDataset d;
    d.id = kind == NoiseKind::kGaussian ? "d3" : "d4";
    d.images = id_images;
    StreamRng r = rng.fork(rng_tag::kOod);
    for (double& px : d.images.v) {
        const double noise = kind == NoiseKind::kGaussian ? r.next_gaussian() : r.next_unit();
        px = std::min(1.0, std::max(0.0, px + amplitude * noise));
    }
    return d;
}

OODDataset load_external_ood(const std::string& path, int c, int h, int w) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataFormatError(path + ": cannot open");
    const std::streamoff bytes = f.tellg();
    const std::streamoff record = 1 + static_cast<std::streamoff>(c) * h * w;
    if (bytes == 0 || bytes % record != 0)
        throw DataFormatError(path + ": size " + std::to_string(bytes) +
                              " is not a multiple of the " + std::to_string(record) +
                              "-byte record");
    f.seekg(0);
    OODDataset d;
    d.id = "external";
    d.provenance = OODDataset::Provenance::kLoaded;
    const int n = static_cast<int>(bytes / record);
    d.images = Tensor4(n, c, h, w);
    std::vector<unsigned char> rec(static_cast<std::size_t>(record));
    for (int i = 0; i < n; ++i) {
        if (!f.read(reinterpret_cast<char*>(rec.data()), record))
            throw DataFormatError(path + ": truncated at byte " + std::to_string(i * record));
        for (std::size_t j = 1; j < rec.size(); ++j)
            d.images.v[static_cast<std::size_t>(i) * (rec.size() - 1) + (j - 1)] = rec[j] / 255.0;
    }
    return d;
}

double percentile_linear(std::vector<double> values, double pct) {
    if (values.empty()) throw ParamError("percentile of an empty set");
    if (pct < 0.0 || pct > 100.0) throw ParamError("percentile must lie in [0,100]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * pct / 100.0;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

OODDecision ood_decide(const std::vector<std::vector<double>>& per_run_probs, double threshold,
                       double pct, DecisionRule rule) {
    const int T = static_cast<int>(per_run_probs.size());
    if (T < 2) throw ParamError("ood_decide needs T >= 2 runs, got " + std::to_string(T));
    const std::size_t classes = per_run_probs[0].size();
    if (classes == 0) throw ParamError("ood_decide needs at least one class");
    for (const auto& row : per_run_probs) {
        if (row.size() != classes) throw ShapeError("ragged per-run probability matrix");
        double sum = 0.0;
        for (double p : row) sum += p;
        if (std::fabs(sum - 1.0) > 1e-6)
            throw ParamError("per-run probabilities sum to " + std::to_string(sum) + ", not 1");
    }

    OODDecision d;
    d.threshold = threshold;
    if (rule == DecisionRule::kProse) {
        // per class: percentile across the T runs; then max over classes
        double best = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            std::vector<double> col(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) col[static_cast<std::size_t>(t)] = per_run_probs[static_cast<std::size_t>(t)][c];
            best = std::max(best, percentile_linear(std::move(col), pct));
        }
        d.score = best;
    } else {
        // percentile across the classes of the run-averaged vector
        std::vector<double> mean(classes, 0.0);
        for (const auto& row : per_run_probs)
            for (std::size_t c = 0; c < classes; ++c) mean[c] += row[c];
        for (double& m : mean) m /= static_cast<double>(T);
        d.score = percentile_linear(std::move(mean), pct);
    }
    d.is_ood = d.score < threshold;
    return d;
}

namespace {

void wilson_interval(int flagged, int n, double* lo, double* hi) {
    const double z = 1.959963984540054;  // 95%
    const double p = static_cast<double>(flagged) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * static_cast<double>(n) * n)) / denom;
    *lo = std::max(0.0, center - half);
    *hi = std::min(1.0, center + half);
}

}  // namespace

DetectionResult detection_rate(const BinaryConvNet& net, const OODDataset& dataset, int T,
                               double threshold, double pct, DecisionRule rule,
                               const StreamRng& rng) {
    if (dataset.images.n < 1) throw ParamError("detection_rate on an empty dataset");
    if (T < 2) throw ParamError("detection_rate needs T >= 2");
    const int n = dataset.images.n;
    std::vector<char> verdicts(static_cast<std::size_t>(n), 0);
    const StreamRng root = rng.fork(rng_tag::kOod);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        Tensor4 img(1, dataset.images.c, dataset.images.h, dataset.images.w);
        const std::size_t per = img.v.size();
        std::copy_n(dataset.images.v.begin() + static_cast<std::ptrdiff_t>(per * i), per,
                    img.v.begin());
        const McResult mc = mc_predict(net, img, T, root.fork(static_cast<std::uint64_t>(i)));
        verdicts[i] = ood_decide(mc.per_run_probs, threshold, pct, rule).is_ood ? 1 : 0;
    });

    DetectionResult r;
    r.dataset_id = dataset.id;
    r.n = n;
    r.mc_samples = T;
    r.threshold = threshold;
    r.percentile = pct;
    for (char v : verdicts) r.flagged_ood += v;
    r.rate = static_cast<double>(r.flagged_ood) / n;
    wilson_interval(r.flagged_ood, n, &r.ci_low, &r.ci_high);
    return r;
}

void write_ood_csv(const std::string& path, const std::vector<DetectionResult>& rows) {
    std::ofstream f(path);
    if (!f) throw DataFormatError(path + ": cannot open for writing");
    f << "dataset_id,n,T,threshold,percentile,detection_rate,ci_low,ci_high\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      r.dataset_id.c_str(), r.n, r.mc_samples, r.threshold, r.percentile, r.rate,
                      r.ci_low, r.ci_high);
        f << buf;
    }
}

}  // namespace spindrop

#include "spindrop/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace spindrop {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw DataFormatError(path + ": truncated at byte " + std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledData LabeledData::subset(const std::vector<int>& indices) const {
    LabeledData out;
    if (indices.empty()) return out;
    out.images = Tensor4(static_cast<int>(indices.size()), images.c, images.h, images.w);
    out.labels.resize(indices.size());
    const std::size_t per = static_cast<std::size_t>(images.c) * images.h * images.w;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        std::copy_n(images.v.begin() + static_cast<std::ptrdiff_t>(per * src), per,
                    out.images.v.begin() + static_cast<std::ptrdiff_t>(per * i));
        out.labels[i] = labels[static_cast<std::size_t>(src)];
    }
    return out;
}

Tensor4 load_idx_images(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open");
    const std::uint32_t magic = read_be32(f, path, 0);
    if (magic != kIdxImagesMagic)
        throw DataFormatError(path + ": bad magic at byte 0 (expected 0x00000803)");
    const std::uint32_t n = read_be32(f, path, 4);
    const std::uint32_t h = read_be32(f, path, 8);
    const std::uint32_t w = read_be32(f, path, 12);
    if (n == 0 || h == 0 || w == 0) throw DataFormatError(path + ": zero dimension in header");
    Tensor4 out(static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w));
    std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw DataFormatError(path + ": truncated at byte " +
                                  std::to_string(16 + static_cast<std::size_t>(i) * buf.size()));
        for (std::size_t j = 0; j < buf.size(); ++j)
            out.v[static_cast<std::size_t>(i) * buf.size() + j] = buf[j] / 255.0;
    }
    return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open");
    const std::uint32_t magic = read_be32(f, path, 0);
    if (magic != kIdxLabelsMagic)
        throw DataFormatError(path + ": bad magic at byte 0 (expected 0x00000801)");
    const std::uint32_t n = read_be32(f, path, 4);
    std::vector<unsigned char> buf(n);
    if (n > 0 && !f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
        throw DataFormatError(path + ": truncated label payload at byte 8");
    std::vector<int> labels(n);
    for (std::uint32_t i = 0; i < n; ++i) labels[i] = buf[i];
    return labels;
}

LabeledData load_cifar10_batch(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataFormatError(path + ": cannot open");
    const std::streamoff bytes = f.tellg();
    constexpr std::streamoff kRecord = 3073;  // 1 label + 3*32*32 pixels
    if (bytes == 0 || bytes % kRecord != 0)
        throw DataFormatError(path + ": size " + std::to_string(bytes) +
                              " is not a multiple of the 3073-byte record");
    const int n = static_cast<int>(bytes / kRecord);
    f.seekg(0);
    LabeledData out;
    out.images = Tensor4(n, 3, 32, 32);
    out.labels.resize(static_cast<std::size_t>(n));
    std::vector<unsigned char> rec(kRecord);
    for (int i = 0; i < n; ++i) {
        if (!f.read(reinterpret_cast<char*>(rec.data()), kRecord))
            throw DataFormatError(path + ": truncated at byte " +
                                  std::to_string(static_cast<std::streamoff>(i) * kRecord));
        if (rec[0] > 9)
            throw DataFormatError(path + ": label byte " + std::to_string(int(rec[0])) +
                                  " out of range at byte " +
                                  std::to_string(static_cast<std::streamoff>(i) * kRecord));
        out.labels[static_cast<std::size_t>(i)] = rec[0];
        for (std::size_t j = 0; j < 3072; ++j)
            out.images.v[static_cast<std::size_t>(i) * 3072 + j] = rec[1 + j] / 255.0;
    }
    return out;
}

void save_idx_images(const std::string& path, const Tensor4& images) {
    if (images.c != 1) throw ParamError("IDX images are single-channel");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open for writing");
    write_be32(f, kIdxImagesMagic);
    write_be32(f, static_cast<std::uint32_t>(images.n));
    write_be32(f, static_cast<std::uint32_t>(images.h));
    write_be32(f, static_cast<std::uint32_t>(images.w));
    for (double v : images.v) {
        const double clamped = std::min(1.0, std::max(0.0, v));
        const unsigned char byte = static_cast<unsigned char>(std::lround(clamped * 255.0));
        f.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataFormatError(path + ": cannot open for writing");
    write_be32(f, kIdxLabelsMagic);
    write_be32(f, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) {
        const unsigned char byte = static_cast<unsigned char>(l);
        f.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

namespace {

// Seven-segment layout on a 20x12 box, (y, x) from the glyph's top-left.
// Segments: 0 top, 1 top-right, 2 bottom-right, 3 bottom, 4 bottom-left,
// 5 top-left, 6 middle.
constexpr unsigned char kDigitSegments[10] = {
    0b0111111,  // 0
    0b0000110,  // 1
    0b1011011,  // 2
    0b1001111,  // 3
    0b1100110,  // 4
    0b1101101,  // 5
    0b1111101,  // 6
    0b0000111,  // 7
    0b1111111,  // 8
    0b1101111,  // 9
};

void draw_segment(Tensor4& img, int b, int seg, int top, int left) {
    const int boxh = 20, boxw = 12, t = 2;  // glyph box and stroke thickness
    auto hline = [&](int y0) {
        for (int dy = 0; dy < t; ++dy)
            for (int x = 0; x < boxw; ++x) img.at(b, 0, top + y0 + dy, left + x) = 1.0;
    };
    auto vline = [&](int y0, int y1, int x0) {
        for (int y = y0; y < y1; ++y)
            for (int dx = 0; dx < t; ++dx) img.at(b, 0, top + y, left + x0 + dx) = 1.0;
    };
    switch (seg) {
        case 0: hline(0); break;
        case 1: vline(0, boxh / 2, boxw - t); break;
        case 2: vline(boxh / 2, boxh, boxw - t); break;
        case 3: hline(boxh - t); break;
        case 4: vline(boxh / 2, boxh, 0); break;
        case 5: vline(0, boxh / 2, 0); break;
        case 6: hline(boxh / 2 - t / 2); break;
        default: break;
    }
}

}  // namespace

LabeledData gen_synthetic_digits(int n, StreamRng rng) {
    if (n < 1) throw ParamError("dataset size must be >= 1");
    LabeledData out;
    out.images = Tensor4(n, 1, 28, 28);
    out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        StreamRng r = rng.fork(rng_tag::kData).fork(static_cast<std::uint64_t>(i));
        const int digit = static_cast<int>(r.next_below(10));
        out.labels[static_cast<std::size_t>(i)] = digit;
        const int top = 2 + static_cast<int>(r.next_below(5));   // glyph box is 20 tall
        const int left = 5 + static_cast<int>(r.next_below(7));  // and 12 wide
        for (int seg = 0; seg < 7; ++seg)
            if (kDigitSegments[digit] & (1u << seg)) draw_segment(out.images, i, seg, top, left);
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                double& px = out.images.at(i, 0, y, x);
                px = std::min(1.0, std::max(0.0, px + 0.12 * r.next_gaussian()));
            }
    }
    return out;
}

LabeledData gen_blobs(int n, StreamRng rng) {
    if (n < 1) throw ParamError("dataset size must be >= 1");
    LabeledData out;
    out.images = Tensor4(n, 2, 1, 1);
    out.labels.resize(static_cast<std::size_t>(n));
    StreamRng r = rng.fork(rng_tag::kData);
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(r.next_below(2));
        const double cx = cls == 0 ? -2.0 : 2.0;
        out.images.at(i, 0, 0, 0) = cx + 0.5 * r.next_gaussian();
        out.images.at(i, 1, 0, 0) = cx + 0.5 * r.next_gaussian();
        out.labels[static_cast<std::size_t>(i)] = cls;
    }
    return out;
}

DatasetSplit split_dataset(const LabeledData& data, int train_n, StreamRng rng) {
    if (train_n < 0 || train_n > data.size())
        throw ParamError("train_n " + std::to_string(train_n) + " out of range for dataset of " +
                         std::to_string(data.size()));
    std::vector<int> idx(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    StreamRng r = rng.fork(rng_tag::kShuffle);
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(r.next_below(i))]);

    DatasetSplit split;
    split.train = data.subset({idx.begin(), idx.begin() + train_n});
    const LabeledData pool = data.subset({idx.begin() + train_n, idx.end()});
    split_holdout(pool, &split.eval, &split.cross_val);
    return split;
}

void split_holdout(const LabeledData& pool, LabeledData* eval_out, LabeledData* cv_out) {
    const int n = pool.size();
    const int eval_n = static_cast<int>(std::lround(n * 0.8));
    std::vector<int> eval_idx, cv_idx;
    for (int i = 0; i < n; ++i) (i < eval_n ? eval_idx : cv_idx).push_back(i);
    *eval_out = pool.subset(eval_idx);
    *cv_out = pool.subset(cv_idx);
}

}  // namespace spindrop

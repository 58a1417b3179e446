#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spindrop/net.hpp"
#include "spindrop/rng.hpp"
#include "spindrop/tensor.hpp"

namespace spindrop {

// Cycle-level behavioral model of binary-weight crossbars with stochastic
// MTJ dropout modules. Peripherals are ideal: accumulators are exact (sums
// of integer inputs stay integers), ADC/MUX/shift-adder are lossless.
//
// Accumulation runs group-wise in ascending group order, the same
// association the reference engine uses, so a simulated layer is
// bit-identical to conv2d/linear on channel-masked input, not merely close.

enum class MapStrategy { kS1, kS2 };

// Signs of one crossbar array, values in {-1, +1}, row-major.
struct SignMatrix {
    int rows = 0, cols = 0;
    std::vector<double> cells;

    SignMatrix() = default;
    SignMatrix(int r, int c) : rows(r), cols(c), cells(static_cast<std::size_t>(r) * c, 1.0) {}
    double at(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return cells[static_cast<std::size_t>(r) * cols + c]; }
};

// Physical placement of one layer's binary weights.
//   S1: one crossbar of K*K*C_in rows x C_out columns; row-groups are C_in
//       contiguous blocks of K*K rows.
//   S2: K*K crossbars of C_in rows x C_out columns; group g is row g of
//       every crossbar.
//   FC (k == 1 single crossbar): row-groups of `group_rows` contiguous rows,
//       matching the flatten boundary structure.
struct CrossbarLayout {
    MapStrategy strategy = MapStrategy::kS1;
    std::vector<SignMatrix> crossbars;
    // Row index -> dropout-group id. For S1/FC this indexes rows of the
    // single crossbar; for S2 it indexes the shared row space (= channel).
    std::vector<int> row_group;
    int k = 1, c_in = 1, c_out = 1, stride = 1;

    int group_count() const;
    void validate() const;
};

CrossbarLayout map_strategy1(const ConvWeight& w);
CrossbarLayout map_strategy2(const ConvWeight& w);
// Fully connected mapping: single c_in x c_out crossbar; `group_rows` fixes
// the structural row-group size (H*W at a flatten boundary, 1 otherwise).
CrossbarLayout map_fc(const ConvWeight& w, int group_rows);

// Inverse mapping back to the (C_out, C_in, K, K) sign tensor; used by the
// bijectivity checks.
Tensor4 unmap_layout(const CrossbarLayout& layout);

// Layout dump: JSON with strategy, dims, row-group table and a base64 sign
// bitmap (bit 1 = +1, LSB-first, crossbars concatenated row-major).
std::string dump_layout_json(const CrossbarLayout& layout);
CrossbarLayout parse_layout_json(const std::string& text);

// --- input streaming --------------------------------------------------------

// One moving window per cycle, row-major over output positions. Values are
// stored in the layout's row space: S1 index c*K*K + ki*K + kj; S2 index
// (u*K + v)*C_in + i (vector (u,v), element i). Padded positions stream 0.
struct InputStream {
    MapStrategy strategy = MapStrategy::kS1;
    int n_cycles = 0;
    int out_h = 0, out_w = 0;
    int k = 1, c_in = 1, stride = 1, pad = 0;
    int in_h = 0, in_w = 0;
    std::vector<std::vector<double>> cycles;

    struct Coord {
        int c = 0, y = 0, x = 0;
        bool operator==(const Coord&) const = default;
    };
    struct Appearance {
        int cycle = 0, pos = 0;
    };
    // Only IFM coordinates appearing in more than one window (weight
    // sharing); empty when K == S and pad == 0.
    struct SharedElement {
        Coord coord;
        std::vector<Appearance> appearances;
    };
    std::vector<SharedElement> shared;
};

InputStream stream_moving_windows(const Tensor4& ifm, int k, int s, int pad, MapStrategy strategy);

// --- stochastic MTJ dropout module -------------------------------------------

inline constexpr double kMtjSamplingLatencyNs = 15.0;  // per-sample write+read latency

struct MTJDropoutModule {
    enum class State { kParallel, kAntiParallel };  // parallel = keep, antiparallel = drop

    State state = State::kParallel;
    double set_probability = 0.0;  // = rho
    bool hold = false;
    int id = 0;

    bool dropped() const { return state == State::kAntiParallel; }
};

// One stochastic write: SET flips to antiparallel (drop) with probability
// set_probability, RESET otherwise leaves parallel (keep). Exactly one
// Bernoulli draw. Sampling while hold is asserted is an illegal transition.
void mtj_sample(MTJDropoutModule& module, StreamRng& rng);

std::vector<MTJDropoutModule> make_modules(int count, double rho);

// --- layer simulation ---------------------------------------------------------

enum class DropoutConfigMode {
    kS1Conv,           // sample at cycle 1, hold for the remaining N-1 cycles
    kS2Conv,           // same hold policy, S2 wiring
    kFlattenNoAvgPool, // single FC cycle, sampled once, no hold needed
    kWithAvgPool,      // per-element SpinDrop: fresh sample every read, no hold
};

// Mask bit observed per cycle per module (true = dropped).
struct MaskTrace {
    std::vector<std::vector<bool>> dropped;  // [cycle][module]
};

struct LayerSimResult {
    Tensor4 ofm;  // (1, C_out, H_out, W_out)
    MaskTrace trace;
};

// Simulates one layer pass over the stream. `modules` may be empty (no
// dropout attached); otherwise its size must equal the layout's group count.
// When `scale` is set, kept contributions are scaled by 1/(1-rho) at
// readout.
LayerSimResult simulate_layer(const CrossbarLayout& layout, const InputStream& stream,
                              std::vector<MTJDropoutModule>& modules, DropoutConfigMode mode,
                              StreamRng& rng, bool scale);

// --- network simulation --------------------------------------------------------

// One layout per conv/linear layer index (other layers keep an empty slot).
struct NetworkLayouts {
    std::vector<CrossbarLayout> per_layer;
    std::vector<bool> present;
};

NetworkLayouts build_layouts(const BinaryConvNet& net, MapStrategy strategy);

// Per-layer crossbar OFMs of the first MC run (for dumps and debugging).
struct RunTrace {
    std::vector<std::pair<int, Tensor4>> layer_ofms;
};

// End-to-end MC inference through the simulated crossbars. Contract matches
// mc_predict: with the same master stream, per-run probability matrices are
// bit-identical to the reference engine.
McResult simulate_network(const BinaryConvNet& net, const NetworkLayouts& layouts, const Tensor4& x,
                          int T, const StreamRng& rng, RunTrace* run0_trace = nullptr);

// --- mask-inconsistency demonstration -------------------------------------------

// The element-wise baseline resamples a fresh mask bit for every stream
// position on every cycle; shared IFM coordinates then see conflicting
// masks across overlapping windows.
std::vector<std::vector<bool>> sample_cycle_element_masks(const InputStream& stream, double rho,
                                                          StreamRng& rng);

struct InconsistencyReport {
    // Shared coordinates that observed both a kept and a dropped mask bit.
    std::vector<InputStream::Coord> violations;
    int shared_coordinates = 0;

    int violation_count() const { return static_cast<int>(violations.size()); }
};

InconsistencyReport demonstrate_mask_inconsistency(
    const InputStream& stream, const std::vector<std::vector<bool>>& per_cycle_element_masks);

}  // namespace spindrop

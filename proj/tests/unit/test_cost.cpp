#include <doctest.h>

#include <cmath>
#include <string>

#include "spindrop/cost.hpp"

using namespace spindrop;

TEST_CASE("module counts reproduce the published formulas") {
    // layer-wise conv with the paper's running configuration
    CHECK(dropout_module_count(DropoutMethod::kSpinDrop, CostMode::kConv, 3, 256, 512) == 2304);
    CHECK(dropout_module_count(DropoutMethod::kSpatialDrop, CostMode::kConv, 3, 256, 512) == 256);

    // degenerate kernel: both methods coincide
    CHECK(dropout_module_count(DropoutMethod::kSpinDrop, CostMode::kConv, 1, 64, 10) ==
          dropout_module_count(DropoutMethod::kSpatialDrop, CostMode::kConv, 1, 64, 10));

    // topology-wise
    CHECK(dropout_module_count(DropoutMethod::kSpinDrop, CostMode::kTopologyWithAvgPool, 3, 256, 512) == 512);
    CHECK(dropout_module_count(DropoutMethod::kSpatialDrop, CostMode::kTopologyWithAvgPool, 3, 256, 512) == 512);
    CHECK(dropout_module_count(DropoutMethod::kSpinDrop, CostMode::kTopologyNoAvgPool, 3, 256, 512) == 4608);
    CHECK(dropout_module_count(DropoutMethod::kSpatialDrop, CostMode::kTopologyNoAvgPool, 3, 256, 512) == 512);

    CHECK_THROWS_AS(dropout_module_count(DropoutMethod::kSpinDrop, CostMode::kConv, 0, 1, 1), ParamError);
}

TEST_CASE("conv reduction ratio is exactly K^2 for any C_in") {
    for (int k = 1; k <= 5; ++k)
        for (int cin : {1, 3, 64, 256, 1000}) {
            const auto spin = dropout_module_count(DropoutMethod::kSpinDrop, CostMode::kConv, k, cin, 7);
            const auto spatial = dropout_module_count(DropoutMethod::kSpatialDrop, CostMode::kConv, k, cin, 7);
            CHECK(spin == static_cast<std::int64_t>(k) * k * spatial);
        }
}

TEST_CASE("all eight published area/power cells come from one constant pair") {
    const ModuleCostConstants c;
    // counts for the four table rows (conv both strategies, topology both pools)
    const struct {
        std::int64_t count;
        double area, power;
    } cells[] = {
        {2304, 79833.6, 51.84},   // SpinDrop conv (either strategy)
        {256, 8870.4, 5.76},      // SpatialDrop conv (either strategy)
        {512, 17740.8, 11.52},    // both methods, topology with avg-pool
        {4608, 159667.2, 103.68}, // SpinDrop topology without avg-pool
    };
    for (const auto& cell : cells) {
        const LayerCost lc = layer_cost(cell.count, c);
        CHECK(lc.area_um2 == cell.area);
        CHECK(lc.power_mw == cell.power);
        CHECK(lc.latency_ns == 15.0);
    }
}

TEST_CASE("latency is count-independent") {
    const ModuleCostConstants c;
    CHECK(layer_cost(1, c).latency_ns == layer_cost(100000, c).latency_ns);
}

TEST_CASE("report totals equal row sums and are permutation-invariant") {
    std::vector<CostLayerConfig> layers{
        {"a", CostMode::kConv, 3, 64, 128},
        {"b", CostMode::kConv, 3, 128, 256},
        {"c", CostMode::kTopologyNoAvgPool, 3, 1, 256},
    };
    const CostReport r1 = make_cost_report(layers);
    std::swap(layers[0], layers[2]);
    const CostReport r2 = make_cost_report(layers);
    CHECK(r1.total_modules_baseline == r2.total_modules_baseline);
    CHECK(r1.total_area_proposed == r2.total_area_proposed);
    CHECK(r1.total_power_baseline == r2.total_power_baseline);

    double area_sum = 0.0;
    for (const auto& row : r1.rows)
        if (row.method == "SpinDrop") area_sum += row.area_um2;
    CHECK(area_sum == doctest::Approx(r1.total_area_baseline).epsilon(1e-15));

    // K = 3 conv layers reduce by exactly 9
    const CostReport conv_only = make_cost_report({{"x", CostMode::kConv, 3, 256, 512}});
    CHECK(conv_only.module_reduction_factor == 9.0);
    CHECK(conv_only.area_reduction_factor == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("cost CSV carries the headline row") {
    const CostReport r = make_cost_report({{"conv", CostMode::kConv, 3, 256, 512}});
    const std::string csv = cost_report_csv(r);
    CHECK(csv.find("2304") != std::string::npos);
    CHECK(csv.find("256") != std::string::npos);
    CHECK(csv.find("8870.4") != std::string::npos);
    CHECK(csv.find("5.76") != std::string::npos);
    CHECK(csv.find("79833.6") != std::string::npos);
}

TEST_CASE("energy table ratios by direct division, headline flagged") {
    const EnergyTable t = energy_reference_table();
    REQUIRE(t.rows.size() == 6);
    CHECK(t.rows.back().work == "Proposed");
    CHECK(t.proposed_energy_uj == 0.68);

    // ratios quoted in the text, truncated to two decimals
    CHECK(std::floor(t.ratio_vs_spindrop * 100.0) / 100.0 == 2.94);
    CHECK(std::floor(t.ratio_vs_rram * 100.0) / 100.0 == 13.67);
    CHECK(std::fabs(t.ratio_vs_spindrop - 2.94) < 0.01);
    CHECK(std::fabs(t.ratio_vs_rram - 13.67) < 0.01);

    // the quoted headline is carried verbatim and does not match any division
    CHECK(t.quoted_best_ratio == 94.11);
    for (const auto& row : t.rows) CHECK(std::fabs(row.ratio_vs_proposed - 94.11) > 0.5);
    CHECK(!t.discrepancy_note.empty());

    // worst-FPGA division for reference
    CHECK(t.rows[1].ratio_vs_proposed == doctest::Approx(46.00 / 0.68).epsilon(1e-12));
}

#include <doctest.h>

#include <string>

#include "spindrop/config.hpp"

using namespace spindrop;

TEST_CASE("config round trip: parse(emit(c)) == c") {
    ExperimentConfig c;
    c.name = "toy run";
    c.seed = 123456789012345ull;
    c.out_dir = "runs/toy";
    c.topology = "lenet";
    c.conv1_channels = 12;
    c.rho = 0.15;
    c.lambda = 3.3e-7;
    c.placement = "layer-wise";
    c.epochs = 3;
    c.learning_rate = 0.0125;
    c.data_source = "idx";
    c.images_path = "/data/train-images";
    c.labels_path = "/data/train-labels";
    c.strategy = 2;

    const ExperimentConfig back = parse_config(emit_config(c));
    CHECK(back == c);

    // a second emit is byte-identical
    CHECK(emit_config(back) == emit_config(c));
}

TEST_CASE("parser accepts comments and surrounding whitespace") {
    ExperimentConfig c;
    std::string text = emit_config(c);
    text = "# header comment\n\n" + text + "\n# trailing comment\n";
    const ExperimentConfig back = parse_config(text);
    CHECK(back == c);
}

TEST_CASE("parser rejects malformed input with config errors") {
    const ExperimentConfig c;
    const std::string good = emit_config(c);

    CHECK_THROWS_AS(parse_config("key_outside = 1\n" + good), ConfigError);
    CHECK_THROWS_AS(parse_config("[unterminated\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(good + "\n[experiment]\nname = \"dup\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nname only line\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(""), ConfigError);  // missing required keys

    // type errors
    std::string bad = good;
    const auto pos = bad.find("seed = ");
    bad.replace(pos, 8, "seed = x");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
}

TEST_CASE("validation catches out-of-range settings") {
    ExperimentConfig c;
    c.rho = 1.0;
    CHECK_THROWS_AS(c.validate(), ParamError);
    c.rho = 0.15;
    c.placement = "everywhere";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.placement = "none";
    c.strategy = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.strategy = 1;
    c.validate();
}

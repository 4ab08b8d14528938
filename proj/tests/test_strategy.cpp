#include <doctest.h>

#include <cstdio>
#include <ios>
#include <stdexcept>
#include <string>

#include "dato/strategy.hpp"

using namespace dato;

#ifndef DATO_STRATEGY_DIR
#define DATO_STRATEGY_DIR "strategies"
#endif

namespace {

// Minimal well-formed strategy text for mutation in the validation tests.
std::string tiny_json(const std::string& depth49 = "\"full\"",
                      const std::string& ratio49 = "0") {
    return "{\"timesteps\": 2, \"steps\": ["
           "{\"t\": 1, \"cache_depth\": " + depth49 + ", \"prune_ratio\": " + ratio49 + "},"
           "{\"t\": 0, \"cache_depth\": 0, \"prune_ratio\": 0.3}]}";
}

}  // namespace

TEST_SUITE("strategy") {

TEST_CASE("depth codec covers the searched set both ways") {
    CHECK(depth_from_code(0) == CacheDepth::at(0));
    CHECK(depth_from_code(1) == CacheDepth::at(1));
    CHECK(depth_from_code(2) == CacheDepth::full());
    // Out-of-range codes clamp instead of throwing: decode never fails.
    CHECK(depth_from_code(-5) == CacheDepth::at(0));
    CHECK(depth_from_code(9) == CacheDepth::full());

    CHECK(depth_to_code(CacheDepth::at(0)) == 0);
    CHECK(depth_to_code(CacheDepth::at(1)) == 1);
    CHECK(depth_to_code(CacheDepth::full()) == 2);
    for (int c = 0; c < kDepthCount; ++c) CHECK(depth_to_code(depth_from_code(c)) == c);
}

TEST_CASE("ratio codec rounds to the nearest codebook entry") {
    for (int c = 0; c < kRatioCount; ++c) {
        CHECK(ratio_from_code(c) == kRatioSet[c]);
        CHECK(ratio_to_code(ratio_from_code(c)) == c);
    }
    CHECK(ratio_from_code(-1) == 0.3);
    CHECK(ratio_from_code(99) == 0.7);
    CHECK(ratio_to_code(0.44) == 1);   // nearest is 0.4
    CHECK(ratio_to_code(0.46) == 2);
    CHECK(ratio_to_code(0.0) == 0);    // snaps up to the smallest entry
    CHECK(ratio_to_code(1.0) == 4);
}

TEST_CASE("builtin strategies have the advertised shape") {
    const Strategy base = Strategy::baseline(10);
    CHECK(base.timesteps() == 10);
    for (const auto& st : base.steps) {
        CHECK(st.depth.is_full());
        CHECK(st.ratio == 0.0);
    }

    const Strategy co = Strategy::cache_only(10, 4);
    // FULL at t = 9, 5, 1 counting down from T-1; depth 0 elsewhere; never prunes.
    for (int t = 0; t < 10; ++t) {
        const bool refresh = (9 - t) % 4 == 0;
        CHECK(co.steps[t].depth.is_full() == refresh);
        if (!refresh) CHECK(co.steps[t].depth == CacheDepth::at(0));
        CHECK(co.steps[t].ratio == 0.0);
    }
    CHECK_THROWS_AS(Strategy::cache_only(10, 0), std::invalid_argument);

    const Strategy u = Strategy::uniform(5, CacheDepth::at(1), 0.6);
    CHECK(u.timesteps() == 5);
    CHECK(u.steps[3].depth == CacheDepth::at(1));
    CHECK(u.steps[3].ratio == 0.6);
}

TEST_CASE("a well-formed strategy text validates cleanly") {
    const ValidationReport rep = validate_strategy_text(tiny_json());
    CHECK(rep.ok());
    CHECK(rep.warnings.empty());
}

TEST_CASE("non-FULL first step is a warning, not an error") {
    const ValidationReport rep = validate_strategy_text(tiny_json("1", "0.5"));
    CHECK(rep.ok());
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0].find("t=1") != std::string::npos);
    CHECK(rep.warnings[0].find("FULL") != std::string::npos);
}

TEST_CASE("depth 12 is accepted as an alias for full") {
    const ValidationReport rep = validate_strategy_text(tiny_json("12", "0"));
    CHECK(rep.ok());
    CHECK(rep.warnings.empty());  // alias counts as FULL for the first-step rule
    const Strategy s = parse_strategy(tiny_json("12", "0"));
    CHECK(s.steps[1].depth.is_full());
}

TEST_CASE("validation catalogues every broken field") {
    // Bad ratio value.
    ValidationReport rep = validate_strategy_text(tiny_json("\"full\"", "0.9"));
    REQUIRE(rep.errors.size() == 1);
    CHECK(rep.errors[0].find("prune_ratio 0.9") != std::string::npos);
    CHECK(rep.errors[0].find("{0, 0.3, 0.4, 0.5, 0.6, 0.7}") != std::string::npos);

    // Bad depth value.
    rep = validate_strategy_text(tiny_json("3", "0"));
    REQUIRE(rep.errors.size() == 1);
    CHECK(rep.errors[0].find("cache_depth") != std::string::npos);

    // Duplicate and missing timesteps surface as separate errors.
    rep = validate_strategy_text(
        "{\"timesteps\": 2, \"steps\": ["
        "{\"t\": 1, \"cache_depth\": \"full\", \"prune_ratio\": 0},"
        "{\"t\": 1, \"cache_depth\": 0, \"prune_ratio\": 0}]}");
    CHECK(rep.errors.size() == 2);
    CHECK(rep.errors[0].find("more than once") != std::string::npos);
    CHECK(rep.errors[1].find("t=0 missing") != std::string::npos);

    // Length mismatch against the configured model.
    rep = validate_strategy_text(tiny_json(), 50);
    REQUIRE(!rep.ok());
    CHECK(rep.errors[0].find("covers 2 timesteps") != std::string::npos);

    // Out-of-range t.
    rep = validate_strategy_text(
        "{\"timesteps\": 2, \"steps\": ["
        "{\"t\": 5, \"cache_depth\": \"full\", \"prune_ratio\": 0},"
        "{\"t\": 0, \"cache_depth\": 0, \"prune_ratio\": 0}]}");
    CHECK(!rep.ok());

    // Plain not-JSON input reports parser context.
    rep = validate_strategy_text("{nope");
    REQUIRE(rep.errors.size() == 1);
    CHECK(rep.errors[0].find("not valid JSON") != std::string::npos);

    // Wrong top-level shape and absurd sizes.
    CHECK(!validate_strategy_text("[1,2,3]").ok());
    CHECK(!validate_strategy_text("{\"timesteps\": 0, \"steps\": []}").ok());
    CHECK(!validate_strategy_text("{\"timesteps\": 200000, \"steps\": []}").ok());
}

TEST_CASE("parse_strategy throws with the collected errors") {
    CHECK_THROWS_WITH_AS(parse_strategy(tiny_json("\"full\"", "0.9")),
                         doctest::Contains("prune_ratio"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_strategy("{nope"), doctest::Contains("not valid JSON"),
                         std::invalid_argument);
}

TEST_CASE("save/load roundtrip preserves every step") {
    Strategy s = Strategy::cache_only(7, 3);
    s.steps[2].ratio = 0.4;
    s.steps[2].depth = CacheDepth::at(1);
    const std::string path = "strategy_roundtrip_test.json";
    save_strategy(s, path);
    const Strategy back = load_strategy(path, 7);
    REQUIRE(back.timesteps() == s.timesteps());
    for (int t = 0; t < 7; ++t) {
        CHECK(back.steps[t].depth == s.steps[t].depth);
        CHECK(back.steps[t].ratio == s.steps[t].ratio);
    }
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_strategy("no_such_dir/missing.json"), std::ios_base::failure);
}

TEST_CASE("strategy json lists steps in execution order") {
    const std::string text = strategy_to_json(Strategy::baseline(3));
    CHECK(text.find("\"t\": 2") != std::string::npos);
    CHECK(text.find("\"t\": 2") < text.find("\"t\": 1"));
    CHECK(text.find("\"t\": 1") < text.find("\"t\": 0"));
    // Emitted strategies re-validate.
    CHECK(validate_strategy_text(text, 3).ok());
}

TEST_CASE("bundled strategies load and carry the expected settings") {
    const std::string dir = DATO_STRATEGY_DIR;
    const Strategy base = load_strategy(dir + "/baseline.json", 50);
    for (const auto& st : base.steps) {
        CHECK(st.depth.is_full());
        CHECK(st.ratio == 0.0);
    }

    const Strategy co = load_strategy(dir + "/cache_only.json", 50);
    const Strategy want = Strategy::cache_only(50, 5);
    for (int t = 0; t < 50; ++t) {
        CHECK(co.steps[t].depth == want.steps[t].depth);
        CHECK(co.steps[t].ratio == 0.0);
    }

    const Strategy ours = load_strategy(dir + "/example_searched.json", 50);
    CHECK(ours.steps[49].depth == CacheDepth::at(1));
    CHECK(ours.steps[49].ratio == 0.7);
    CHECK(ours.steps[41].depth.is_full());  // listed as depth 12 in the table
    CHECK(ours.steps[41].ratio == 0.6);
    CHECK(ours.steps[0].depth == CacheDepth::at(0));
    CHECK(ours.steps[0].ratio == 0.5);
    int full = 0, d0 = 0, d1 = 0;
    for (const auto& st : ours.steps) {
        if (st.depth.is_full()) ++full;
        else if (st.depth.value == 0) ++d0;
        else ++d1;
        CHECK(st.ratio >= 0.3);
        CHECK(st.ratio <= 0.7);
    }
    CHECK(full + d0 + d1 == 50);
    CHECK(full == 5);
    CHECK(d0 == 7);
    CHECK(d1 == 38);
}

}  // TEST_SUITE

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ios>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dato/metrics.hpp"

using namespace dato;

#ifndef DATO_STRATEGY_DIR
#define DATO_STRATEGY_DIR "strategies"
#endif

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.channels = 4;
    cfg.grid = 8;
    cfg.timesteps = 10;
    return cfg;
}

SampleSettings quiet_settings() {
    SampleSettings s;
    s.warn_on_forced_full = false;
    return s;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    int n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("full step cost on the default config, derived by hand") {
    const CostModel m = CostModel::from_config(ModelConfig{});
    // levels=3, C=8, grid=16. Linear blocks at tokens*C^2:
    //   down/up level 0: 256*64 = 16384 each
    //   down/up level 1:  64*64 =  4096 each
    //   down/up level 2:  16*64 =  1024 each
    //   mid:               4*64 =   256
    const double linear = 2 * (16384 + 4096 + 1024) + 256;
    CHECK(linear == 43264.0);
    // Mid attention, 4 tokens: 4*4*64 + 2*16*8 = 1280.
    CHECK(m.attention_cost(4) == 1280.0);
    // Level-0 attention, 256 tokens: 4*256*64 + 2*65536*8 = 1114112 per site.
    CHECK(m.attention_cost(256) == 1114112.0);
    CHECK(m.full_step_cost() == linear + 1280.0 + 2 * 1114112.0);
    CHECK(m.full_step_cost() == 2272768.0);
}

TEST_CASE("halving kept tokens quarters the quadratic attention term") {
    const CostModel m = CostModel::from_config(ModelConfig{});
    CHECK(m.attention_quad_term(32) / m.attention_quad_term(64) == 0.25);
    CHECK(m.attention_quad_term(64) == 2.0 * 64 * 64 * 8);
    CHECK(m.attention_quad_term(0) == 0.0);
}

TEST_CASE("step cost by depth: zero at depth 0, additive below the cut") {
    const CostModel m = CostModel::from_config(ModelConfig{});
    CHECK(m.step_cost(CacheDepth::at(0), 256) == 0.0);
    // Depth 1 recomputes the level-0 pair plus both pruned attention sites.
    const double d1 = m.step_cost(CacheDepth::at(1), 256);
    CHECK(d1 == 2 * 16384.0 + 2 * 1114112.0);
    // Fewer kept tokens can only lower it.
    CHECK(m.step_cost(CacheDepth::at(1), 128) < d1);
    // Depth 3 (= levels) recomputes everything except the mid block.
    const double d3 = m.step_cost(CacheDepth::at(3), 256);
    CHECK(d3 == m.full_step_cost() - 256.0 - 1280.0);
    CHECK(m.full_step_cost() > d3);
}

TEST_CASE("baseline speedup and relative latency are exactly one") {
    const ModelConfig cfg;
    const Strategy base = Strategy::baseline(cfg.timesteps);
    CHECK(speedup_ratio(base, cfg) == 1.0);
    CHECK(relative_latency(base, cfg) == 1.0);
    CHECK(latency_cost(base, cfg) == 50.0 * 2272768.0);
}

TEST_CASE("latency drops monotonically with depth and with ratio") {
    const ModelConfig cfg;
    const double full = latency_cost(Strategy::uniform(50, CacheDepth::full(), 0.0), cfg);
    const double d1 = latency_cost(Strategy::uniform(50, CacheDepth::at(1), 0.0), cfg);
    const double d0 = latency_cost(Strategy::uniform(50, CacheDepth::at(0), 0.0), cfg);
    CHECK(full > d1);
    CHECK(d1 > d0);
    // Depth 0 everywhere still pays the forced-FULL first step.
    CHECK(d0 == 2272768.0);

    double prev = latency_cost(Strategy::uniform(50, CacheDepth::at(1), 0.3), cfg);
    CHECK(prev < d1);
    for (double r : {0.4, 0.5, 0.6, 0.7}) {
        const double cost = latency_cost(Strategy::uniform(50, CacheDepth::at(1), r), cfg);
        CHECK(cost < prev);
        prev = cost;
    }
}

TEST_CASE("the bundled searched strategy clears a 3x modelled speedup") {
    const ModelConfig cfg;
    const Strategy ours =
        load_strategy(std::string(DATO_STRATEGY_DIR) + "/example_searched.json", 50);
    const double s = speedup_ratio(ours, cfg);
    CHECK(s > 3.0);
    // Regression fixture for the exact modelled value.
    CHECK(s == doctest::Approx(3.3996048217868795).epsilon(1e-12));
    CHECK(relative_latency(ours, cfg) == doctest::Approx(1.0 / 3.3996048217868795).epsilon(1e-12));
}

TEST_CASE("trajectory divergence of the baseline strategy is exactly zero") {
    const ModelConfig cfg = tiny_config();
    CHECK(trajectory_divergence(Strategy::baseline(cfg.timesteps), cfg,
                                quiet_settings()) == 0.0);
    // A cache-heavy strategy diverges, but stays finite.
    const double d = trajectory_divergence(Strategy::cache_only(cfg.timesteps, 5), cfg,
                                           quiet_settings());
    CHECK(d > 0.0);
    CHECK(d < 1e6);
}

TEST_CASE("evaluator objectives match the standalone metrics") {
    const ModelConfig cfg = tiny_config();
    const StrategyEvaluator ev(cfg, quiet_settings());
    const Strategy base = Strategy::baseline(cfg.timesteps);
    const Objectives ob = ev.evaluate(base);
    CHECK(ob.quality == 0.0);
    CHECK(ob.latency == 1.0);

    const Strategy co = Strategy::cache_only(cfg.timesteps, 5);
    const Objectives oc = ev.evaluate(co);
    CHECK(oc.quality == trajectory_divergence(co, cfg, quiet_settings()));
    CHECK(oc.latency == relative_latency(co, cfg));
    CHECK(ev.scalarize(oc, 0.025) == oc.quality + 0.025 * oc.latency);
    CHECK(ev.scalarize(oc, 0.0) == oc.quality);
}

TEST_CASE("dynamics histogram counts one value per token and step pair") {
    const ModelConfig cfg = tiny_config();
    const DenoisePipeline pipe(cfg, 0);
    const Trajectory traj = pipe.run(Strategy::baseline(cfg.timesteps), quiet_settings());
    const DynamicsHistogram h = dynamics_histogram(traj, 20);

    // f0_up carries the CFG-duplicated batch: 2 items for one image.
    const long pairs = 2L * cfg.tokens() * (cfg.timesteps - 1);
    CHECK((long)h.values.size() == pairs);
    long total = 0;
    for (long c : h.counts) total += c;
    CHECK(total == pairs);
    REQUIRE(h.edges.size() == 21);
    REQUIRE(h.counts.size() == 20);
    for (size_t i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] >= h.edges[i - 1]);

    // Mean and median recomputed the obvious way.
    double sum = 0.0;
    for (double v : h.values) sum += v;
    CHECK(h.mean == doctest::Approx(sum / (double)pairs).epsilon(1e-12));
    std::vector<double> sorted = h.values;
    std::sort(sorted.begin(), sorted.end());
    CHECK(h.median == 0.5 * (sorted[pairs / 2 - 1] + sorted[pairs / 2]));
    CHECK(h.mean > 0.0);
}

TEST_CASE("cached steps put an exact-zero spike in the histogram") {
    const ModelConfig cfg = tiny_config();
    const DenoisePipeline pipe(cfg, 0);
    const Trajectory traj =
        pipe.run(Strategy::cache_only(cfg.timesteps, 5), quiet_settings());
    const DynamicsHistogram h = dynamics_histogram(traj, 10);
    long zeros = 0;
    for (double v : h.values) zeros += v == 0.0;
    // T=10, refresh at t=9 and t=4: every pair except the one crossing the
    // t=4 refresh reuses the snapshot bit-for-bit, so 8 of 9 pairs are zero.
    CHECK(zeros >= 8 * 2L * cfg.tokens());
    CHECK(h.median == 0.0);
    const Trajectory base = pipe.run(Strategy::baseline(cfg.timesteps), quiet_settings());
    long base_zeros = 0;
    for (double v : dynamics_histogram(base, 10).values) base_zeros += v == 0.0;
    CHECK(base_zeros == 0);
}

TEST_CASE("histogram validation") {
    const ModelConfig cfg = tiny_config();
    const DenoisePipeline pipe(cfg, 0);
    const Trajectory traj = pipe.run(Strategy::baseline(cfg.timesteps), quiet_settings());
    CHECK_THROWS_AS(dynamics_histogram(traj, 0), std::invalid_argument);
    Trajectory stub;
    CHECK_THROWS_AS(dynamics_histogram(stub, 10), std::runtime_error);
}

TEST_CASE("histogram stats serialize to parseable json") {
    const ModelConfig cfg = tiny_config();
    const DenoisePipeline pipe(cfg, 0);
    const Trajectory traj = pipe.run(Strategy::baseline(cfg.timesteps), quiet_settings());
    const DynamicsHistogram h = dynamics_histogram(traj, 5);
    const nlohmann::json doc = nlohmann::json::parse(histogram_stats_json(h));
    CHECK(doc["mean_diff"].get<double>() == h.mean);
    CHECK(doc["median_diff"].get<double>() == h.median);
    CHECK(doc["pairs"].get<long>() == (long)h.values.size());
    REQUIRE(doc["bins"].size() == 5);
    CHECK(doc["bins"][0]["lo"].get<double>() == h.edges[0]);
    CHECK(doc["bins"][4]["hi"].get<double>() == h.edges[5]);
}

TEST_CASE("tensor dump files roundtrip bit-exactly") {
    const Tensor t = gaussian_fill(Shape{2, 3, 4, 5}, 77);
    const std::string path = "tensor_roundtrip_test.bin";
    write_tensor_file(t, path);
    const Tensor back = read_tensor_file(path);
    CHECK(back.same_bits(t));
    std::remove(path.c_str());

    CHECK_THROWS_AS(write_tensor_file(Tensor(Shape{2, 2}), path), std::invalid_argument);
    CHECK_THROWS_AS(read_tensor_file("no_such_file.bin"), std::ios_base::failure);
}

TEST_CASE("tensor dump reader rejects foreign and truncated files") {
    const std::string path = "tensor_bad_test.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "this is not a tensor dump, just text padding to pass the header";
    }
    CHECK_THROWS_WITH_AS(read_tensor_file(path), doctest::Contains("bad magic"),
                         std::runtime_error);

    // Valid header, payload cut short.
    const Tensor t = gaussian_fill(Shape{1, 1, 4, 4}, 3);
    write_tensor_file(t, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), (std::streamsize)bytes.size() - 16);
    }
    CHECK_THROWS_WITH_AS(read_tensor_file(path), doctest::Contains("truncated"),
                         std::ios_base::failure);
    std::remove(path.c_str());
}

TEST_CASE("pgm export normalizes to the full byte range") {
    Tensor plane(Shape{1, 2, 2});
    plane.data = {0.0, 1.0, 0.5, 0.25};
    const std::string path = "pgm_test.pgm";
    write_pgm(plane, 0, path);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string magic;
    int w, h, maxv;
    in >> magic >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(w == 2);
    CHECK(h == 2);
    CHECK(maxv == 255);
    in.get();  // single whitespace after the header
    unsigned char px[4];
    in.read((char*)px, 4);
    CHECK(px[0] == 0);      // min
    CHECK(px[1] == 255);    // max
    CHECK(px[2] == 128);    // 127.5 rounds away from zero
    CHECK(px[3] == 64);     // 0.25
    std::remove(path.c_str());

    // Constant planes export as all-zero instead of dividing by zero.
    Tensor flat(Shape{1, 2, 2}, 3.14);
    write_pgm(flat, 0, path);
    std::ifstream in2(path, std::ios::binary);
    in2 >> magic >> w >> h >> maxv;
    in2.get();
    in2.read((char*)px, 4);
    for (int i = 0; i < 4; ++i) CHECK(px[i] == 0);
    std::remove(path.c_str());

    CHECK_THROWS_AS(write_pgm(flat, 1, path), std::invalid_argument);
}

TEST_CASE("heatmap export writes a csv row per cell plus a pgm") {
    const Tensor scores = seeded_fill(Shape{2, 4, 4}, 13);
    heatmap_export(scores, 1, "heatmap_test");
    CHECK(count_lines("heatmap_test.csv") == 17);  // header + 16 cells
    std::ifstream in("heatmap_test.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "row,col,score");
    std::ifstream pgm("heatmap_test.pgm", std::ios::binary);
    CHECK(pgm.good());
    std::remove("heatmap_test.csv");
    std::remove("heatmap_test.pgm");
}

TEST_CASE("step csv lists one row per executed step") {
    const ModelConfig cfg = tiny_config();
    const DenoisePipeline pipe(cfg, 0);
    const Trajectory traj =
        pipe.run(Strategy::cache_only(cfg.timesteps, 5), quiet_settings());
    const std::string path = "steps_test.csv";
    write_step_csv(traj, path);
    CHECK(count_lines(path) == cfg.timesteps + 1);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "timestep,depth,ratio,kept_tokens,blocks_computed");
    std::getline(in, line);
    CHECK(line.substr(0, 2) == "9,");  // execution order, t descending
    CHECK(line.find("full") != std::string::npos);
    std::remove(path.c_str());
}

}  // TEST_SUITE

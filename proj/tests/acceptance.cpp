// Acceptance gate: ten independent checks over the released behavior, one
// printed line per check, exit 0 only when every check holds. Tolerances and
// recorded run fixtures are pinned right here as constants; everything else
// is exact (bitwise or integer) by design.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dato/kernels.hpp"
#include "dato/prune.hpp"
#include "dato/search.hpp"
#include "oracles.hpp"

using namespace dato;

#ifndef DATO_STRATEGY_DIR
#define DATO_STRATEGY_DIR "strategies"
#endif

namespace {

// --- pinned tolerances and fixtures -----------------------------------------
// Wall-clock budgets (seconds) for the checks that carry one.
constexpr double kBudgetBaseline = 5.0;
constexpr double kBudgetCache = 5.0;
constexpr double kBudgetOracle = 30.0;
constexpr double kBudgetSearch = 60.0;
constexpr double kBudgetDynamics = 30.0;
// Modelled speedup of the bundled searched strategy on the default config,
// recorded from the deterministic cost model.
constexpr double kSpeedupFixture = 3.3996048217868795;
constexpr double kSpeedupRelTol = 1e-12;
// Upper bound on the searched strategy's mean adjacent-step token change on
// the default seeded run (recorded fixture; the run is deterministic and
// reproduces this value exactly).
constexpr double kDatoMeanBound = 0.015572164596339332;
// ----------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 17) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

SampleSettings quiet() {
    SampleSettings s;
    s.warn_on_forced_full = false;
    return s;
}

Tensor discrete_fill(const Shape& shape, uint64_t seed, int levels_n = 4) {
    SeededRng rng(seed);
    Tensor t(shape);
    for (auto& v : t.data) v = (double)rng.next_int(levels_n) - 1.0;
    return t;
}

// 1. A full-depth, zero-ratio strategy must be indistinguishable from running
//    with the caching and pruning machinery bypassed entirely.
bool check_baseline_equivalence(std::string& detail) {
    const auto t0 = Clock::now();
    const ModelConfig cfg;
    const DenoisePipeline pipe(cfg, 0);
    const SampleSettings s = quiet();
    const Tensor enabled = pipe.run(Strategy::baseline(cfg.timesteps), s).final_state();
    const Tensor disabled = pipe.run_disabled(s).final_state();
    const bool bits = enabled.same_bits(disabled);
    const double el = seconds_since(t0);
    detail = std::string(bits ? "final tensors bit-identical" : "final tensors DIFFER") +
             ", " + fmt(el).substr(0, 4) + "s";
    return bits && el < kBudgetBaseline;
}

// 2. Partial-depth steps must serve every block at or above their depth
//    bit-exactly from the last refresh, and reused steps must register as
//    exactly-zero adjacent differences in the dynamics histogram.
bool check_cache_exactness(std::string& detail) {
    const auto t0 = Clock::now();
    const ModelConfig cfg;
    const DenoisePipeline pipe(cfg, 0);
    SampleSettings s = quiet();
    s.record_block_outputs = true;

    const Trajectory traj = pipe.run(Strategy::cache_only(cfg.timesteps, 5), s);
    if (traj.block_outputs.size() != traj.steps.size()) {
        detail = "recording did not cover every step";
        return false;
    }

    long mismatched = 0;
    int last_refresh = -1;
    int reused_steps = 0;
    for (size_t i = 0; i < traj.steps.size(); ++i) {
        const StepRecord& rec = traj.steps[i];
        if (rec.depth.is_full()) {
            last_refresh = (int)i;
            continue;
        }
        ++reused_steps;
        const StepOutputs& now = traj.block_outputs[i];
        const StepOutputs& snap = traj.block_outputs[last_refresh];
        for (int l = rec.depth.value; l < cfg.levels; ++l) {
            mismatched += !now.block(Branch::down, l).same_bits(snap.block(Branch::down, l));
            mismatched += !now.block(Branch::up, l).same_bits(snap.block(Branch::up, l));
        }
        mismatched += !now.block(Branch::mid, cfg.levels)
                           .same_bits(snap.block(Branch::mid, cfg.levels));
    }

    // Adjacent pairs ending in a depth-0 step reuse the snapshot, so their
    // change scores are exactly zero; every other pair crosses a refresh.
    long expected_zero_pairs = 0;
    for (size_t i = 0; i + 1 < traj.steps.size(); ++i)
        expected_zero_pairs += !traj.steps[i + 1].depth.is_full();
    const DynamicsHistogram h = dynamics_histogram(traj);
    long zero_values = 0;
    for (double v : h.values) zero_values += v == 0.0;
    const long per_pair = (long)h.values.size() / (long)(traj.steps.size() - 1);
    const bool zeros_ok =
        zero_values == expected_zero_pairs * per_pair && h.median == 0.0;

    const double el = seconds_since(t0);
    detail = std::to_string(reused_steps) + " reused steps, " +
             std::to_string(mismatched) + " block mismatches, " +
             std::to_string(zero_values) + "/" + std::to_string(h.values.size()) +
             " zero diffs, " + fmt(el).substr(0, 4) + "s";
    return mismatched == 0 && reused_steps == 40 && zeros_ok && el < kBudgetCache;
}

// 3. Base selection and top-K pruning must agree with an exhaustive
//    brute-force reference on randomized, tie-heavy instances.
bool check_pruning_oracle(std::string& detail) {
    const auto t0 = Clock::now();
    int checked = 0, wrong = 0;
    for (uint64_t seed = 0; seed < 220; ++seed) {
        SeededRng rng(21000 + seed);
        const int side = 2 * (1 + rng.next_int(4));  // N <= 64
        const int patch = rng.next_int(5) ? 2 : 1;
        const int b = 1 + rng.next_int(2);
        const int c = 1 + rng.next_int(3);
        const int n = side * side;

        const Tensor scores = discrete_fill(Shape{b, side, side}, 23000 + seed);
        const auto base = select_base_tokens(scores, patch);
        bool ok = base == oracle::base_tokens(scores, patch);

        const Tensor tokens = discrete_fill(Shape{b, n, c}, 24000 + seed, 3);
        const int cap = n - (int)base[0].size();
        const int k = cap ? 1 + rng.next_int(cap) : 0;
        const PruneMap got = select_pruned_tokens(tokens, base, k);
        const oracle::TopK want = oracle::top_k(tokens, base, k);
        ok = ok && got.pruned == want.pruned && got.assign == want.assign;

        wrong += !ok;
        ++checked;
    }
    const double el = seconds_since(t0);
    detail = std::to_string(checked) + " instances, " + std::to_string(wrong) +
             " mismatches, " + fmt(el).substr(0, 4) + "s";
    return checked >= 200 && wrong == 0 && el < kBudgetOracle;
}

// 4. Recovery must fill every pruned slot with its assigned base row, bit for
//    bit, and a zero prune count must reproduce the input exactly.
bool check_recovery_exactness(std::string& detail) {
    long violations = 0;
    int pruned_checked = 0;
    for (uint64_t seed = 0; seed < 60; ++seed) {
        const Tensor tokens = seeded_fill(Shape{2, 64, 8}, 31000 + seed);
        const Tensor scores = seeded_fill(Shape{2, 8, 8}, 32000 + seed);
        const auto base = select_base_tokens(scores, 2);
        const int cap = 64 - (int)base[0].size();
        const PruneMap m = select_pruned_tokens(tokens, base, cap / 2);
        const auto [kept, idx] = apply_prune(tokens, m);
        const Tensor out = recover_pruned(kept, m);

        for (int bi = 0; bi < 2; ++bi) {
            for (size_t j = 0; j < m.pruned[bi].size(); ++j) {
                const int p = m.pruned[bi][j], src = m.assign[bi][j];
                for (int ci = 0; ci < 8; ++ci)
                    violations += out.at3(bi, p, ci) != out.at3(bi, src, ci);
                ++pruned_checked;
            }
            for (int r : idx[bi])
                for (int ci = 0; ci < 8; ++ci)
                    violations += out.at3(bi, r, ci) != tokens.at3(bi, r, ci);
        }

        // Zero ratio: a perfect round trip.
        const PruneMap none = select_pruned_tokens(tokens, base, 0);
        const auto [all, unused] = apply_prune(tokens, none);
        (void)unused;
        violations += !recover_pruned(all, none).same_bits(tokens);
    }
    detail = std::to_string(pruned_checked) + " pruned slots, " +
             std::to_string(violations) + " violations";
    return violations == 0 && pruned_checked > 0;
}

// 5. Exactly one base token inside every patch window; after guidance
//    alignment the two halves of the batch use identical base sets.
bool check_structural(std::string& detail) {
    long bad = 0;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const int side = 8, patch = 2;
        const Tensor scores = seed % 2 ? seeded_fill(Shape{4, side, side}, 41000 + seed)
                                       : discrete_fill(Shape{4, side, side}, 41000 + seed);
        auto base = select_base_tokens(scores, patch);
        const int per_row = side / patch;
        for (const auto& item : base) {
            if ((int)item.size() != per_row * per_row) ++bad;
            for (size_t p = 0; p < item.size(); ++p) {
                const int r = item[p] / side, c = item[p] % side;
                if (r / patch != (int)p / per_row || c / patch != (int)p % per_row) ++bad;
            }
        }
        align_cfg_base(base);
        for (int k = 2; k < 4; ++k) {
            const std::set<int> lo(base[k - 2].begin(), base[k - 2].end());
            const std::set<int> hi(base[k].begin(), base[k].end());
            if (lo != hi) ++bad;
        }
    }
    detail = std::to_string(bad) + " structural violations over 50 instances";
    return bad == 0;
}

// 6. The total reconstruction cost (1 - similarity summed over pruned tokens)
//    may never decrease when the prune count grows, base set held fixed.
bool check_monotone_cost(std::string& detail) {
    long regressions = 0;
    int seeds = 0;
    for (uint64_t seed = 0; seed < 120; ++seed) {
        const int side = 4, n = side * side, c = 3;
        const Tensor tokens = seeded_fill(Shape{1, n, c}, 51000 + seed);
        const Tensor scores = seeded_fill(Shape{1, side, side}, 52000 + seed);
        const auto base = select_base_tokens(scores, 2);

        std::vector<double> score(n);
        std::vector<int> arg(n);
        kernels::cosine_best_match(tokens.ptr(), n, c, base[0].data(),
                                   (int)base[0].size(), score.data(), arg.data());

        const int cap = n - (int)base[0].size();
        double prev = 0.0;
        for (int k = 0; k <= cap; ++k) {
            const PruneMap m = select_pruned_tokens(tokens, base, k);
            double e = 0.0;
            for (int p : m.pruned[0]) e += 1.0 - score[p];
            regressions += e < prev;
            prev = e;
        }
        ++seeds;
    }
    detail = std::to_string(seeds) + " seeds, " + std::to_string(regressions) +
             " monotonicity regressions";
    return seeds >= 100 && regressions == 0;
}

// 7. Cost model invariants: the quadratic attention term scales with the
//    square of the kept count, the baseline is exactly 1x, and the bundled
//    searched strategy clears 3x (recorded fixture).
bool check_cost_model(std::string& detail) {
    const ModelConfig cfg;
    const CostModel m = CostModel::from_config(cfg);
    const bool quad = m.attention_quad_term(32) / m.attention_quad_term(64) == 0.25;
    const bool unit = speedup_ratio(Strategy::baseline(cfg.timesteps), cfg) == 1.0;
    const Strategy ours =
        load_strategy(std::string(DATO_STRATEGY_DIR) + "/example_searched.json",
                      cfg.timesteps);
    const double s = speedup_ratio(ours, cfg);
    const bool fast = s > 3.0;
    const bool pinned = std::fabs(s - kSpeedupFixture) <= kSpeedupFixture * kSpeedupRelTol;
    detail = "quad ratio 0.25: " + std::string(quad ? "yes" : "NO") +
             ", baseline 1.0: " + std::string(unit ? "yes" : "NO") +
             ", searched speedup " + fmt(s);
    return quad && unit && fast && pinned;
}

// 8. Search bookkeeping on a deterministic tiny run: constant population,
//    a genuinely non-dominated front, a monotone archive bounded by the
//    seeded all-full individuals, and byte-identical reruns.
bool check_search_integrity(std::string& detail) {
    const auto t0 = Clock::now();
    ModelConfig model;
    model.levels = 2;
    model.channels = 4;
    model.grid = 8;
    model.timesteps = 10;
    SearchConfig sc;
    sc.population = 8;
    sc.generations = 10;
    sc.master_seed = 42;
    sc.workers = 1;

    const SearchResult res = run_search(sc, model);

    bool pop_ok = (int)res.history.size() == sc.generations + 1;
    bool archive_ok = true;
    for (size_t i = 0; i < res.history.size(); ++i) {
        pop_ok = pop_ok && res.history[i].population == sc.population;
        if (i)
            archive_ok =
                archive_ok && res.history[i].best_score <= res.history[i - 1].best_score;
    }

    bool front_ok = !res.front.empty();
    for (size_t i = 0; i < res.front.size() && front_ok; ++i)
        for (size_t j = 0; j < res.front.size(); ++j) {
            if (i == j) continue;
            const Objectives &a = res.front[i].obj, &b = res.front[j].obj;
            if (a.quality <= b.quality && a.latency <= b.latency &&
                (a.quality < b.quality || a.latency < b.latency)) {
                front_ok = false;
                break;
            }
        }

    // The uniform all-full strategies are part of generation 0, so the
    // archive can never be worse than the best of them.
    const StrategyEvaluator ev(model, sc.eval);
    double best_full = std::numeric_limits<double>::infinity();
    for (int rc = 0; rc < kRatioCount; ++rc) {
        const Strategy s =
            Strategy::uniform(model.timesteps, CacheDepth::full(), ratio_from_code(rc));
        best_full = std::min(best_full, ev.scalarize(ev.evaluate(s), sc.latency_weight));
    }
    const bool bounded = res.best.score <= best_full;

    const SearchResult rerun = run_search(sc, model);
    const bool replay = history_csv(res) == history_csv(rerun) &&
                        front_csv(res) == front_csv(rerun) &&
                        res.best.genome == rerun.best.genome;

    const double el = seconds_since(t0);
    detail = std::string("population ") + (pop_ok ? "constant" : "DRIFTED") +
             ", front " + (front_ok ? "non-dominated" : "DOMINATED") + ", archive " +
             (archive_ok ? "monotone" : "INCREASED") + (bounded ? ", bounded" : ", UNBOUNDED") +
             ", rerun " + (replay ? "identical" : "DIVERGED") + ", " +
             fmt(el).substr(0, 4) + "s";
    return pop_ok && archive_ok && front_ok && bounded && replay && el < kBudgetSearch;
}

// 9. Out-of-the-box search parameters.
bool check_search_defaults(std::string& detail) {
    const SearchConfig sc;
    const bool ok = sc.population == 20 && sc.generations == 100 &&
                    sc.crossover_prob == 0.7 && sc.crossover_eta == 7.0 &&
                    sc.mutation_prob == 0.4 && sc.mutation_eta == 15.0 &&
                    sc.eliminate_duplicates;
    detail = "P=" + std::to_string(sc.population) + " G=" + std::to_string(sc.generations) +
             " SBX(" + fmt(sc.crossover_prob, 6) + "," + fmt(sc.crossover_eta, 6) +
             ") PM(" + fmt(sc.mutation_prob, 6) + "," + fmt(sc.mutation_eta, 6) +
             ") dedup=" + (sc.eliminate_duplicates ? "on" : "off");
    return ok;
}

// 10. Feature dynamics ordering on the default seeded run: caching alone
//     collapses step-to-step change below the searched strategy, which stays
//     within its recorded bound.
bool check_dynamics_restoration(std::string& detail) {
    const auto t0 = Clock::now();
    const ModelConfig cfg;
    const DenoisePipeline pipe(cfg, 0);
    const SampleSettings s = quiet();

    const Strategy cache =
        load_strategy(std::string(DATO_STRATEGY_DIR) + "/cache_only.json", cfg.timesteps);
    const Strategy ours =
        load_strategy(std::string(DATO_STRATEGY_DIR) + "/example_searched.json",
                      cfg.timesteps);
    const double mean_cache = dynamics_histogram(pipe.run(cache, s)).mean;
    const double mean_ours = dynamics_histogram(pipe.run(ours, s)).mean;

    const double el = seconds_since(t0);
    detail = "cache-only mean " + fmt(mean_cache) + ", searched mean " + fmt(mean_ours) +
             ", bound " + fmt(kDatoMeanBound) + ", " + fmt(el).substr(0, 4) + "s";
    return mean_cache < mean_ours && mean_ours <= kDatoMeanBound && el < kBudgetDynamics;
}

}  // namespace

int main() {
    struct Entry {
        const char* name;
        bool (*fn)(std::string&);
    };
    const Entry entries[] = {
        {"baseline equivalence", check_baseline_equivalence},
        {"cache exactness", check_cache_exactness},
        {"pruning matches brute force", check_pruning_oracle},
        {"recovery exactness", check_recovery_exactness},
        {"base-per-patch structure", check_structural},
        {"monotone reconstruction cost", check_monotone_cost},
        {"cost model speedups", check_cost_model},
        {"search integrity", check_search_integrity},
        {"search defaults", check_search_defaults},
        {"dynamics restoration", check_dynamics_restoration},
    };

    int failures = 0;
    for (size_t i = 0; i < std::size(entries); ++i) {
        std::string detail;
        bool ok = false;
        try {
            ok = entries[i].fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        failures += !ok;
        std::printf("%s  criterion %2zu: %s (%s)\n", ok ? "PASS" : "FAIL", i + 1,
                    entries[i].name, detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}

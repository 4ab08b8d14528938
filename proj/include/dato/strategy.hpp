#pragma once

#include <string>
#include <vector>

#include "dato/cache.hpp"

// Per-timestep runtime strategy: one (cache depth, prune ratio) pair for
// every timestep, indexed by t. JSON form:
//   {"timesteps": T, "steps": [{"t": 49, "cache_depth": 1, "prune_ratio": 0.7}, ...]}
// cache_depth is 0, 1 or "full"; prune_ratio is 0 or one of the searched set.

namespace dato {

// Value sets a strategy may use (beyond ratio 0 = pruning off).
inline constexpr double kRatioSet[] = {0.3, 0.4, 0.5, 0.6, 0.7};
inline constexpr int kRatioCount = 5;
inline constexpr int kDepthCount = 3;  // {0, 1, FULL}

CacheDepth depth_from_code(int code);   // 0->0, 1->1, 2->FULL
int depth_to_code(CacheDepth d);
double ratio_from_code(int code);       // 0..4 -> 0.3..0.7
int ratio_to_code(double ratio);        // nearest codebook entry

struct StepSetting {
    CacheDepth depth;
    double ratio = 0.0;
};

struct Strategy {
    std::vector<StepSetting> steps;  // index == timestep t

    int timesteps() const { return (int)steps.size(); }

    static Strategy uniform(int timesteps, CacheDepth d, double ratio);
    static Strategy baseline(int timesteps);  // all FULL, ratio 0
    // FULL refresh every `interval` steps counted from t = T-1, depth 0 between.
    static Strategy cache_only(int timesteps, int interval = 5);
};

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
};

// Validates schema, coverage (each t exactly once), value sets, and the
// first-step FULL rule (a warning, the runtime forces it anyway).
// expected_timesteps < 0 skips the length-vs-config check.
ValidationReport validate_strategy_text(const std::string& json_text,
                                        int expected_timesteps = -1);

// Load/save. load_strategy throws std::invalid_argument with the collected
// validation errors when the file does not validate.
Strategy load_strategy(const std::string& path, int expected_timesteps = -1);
Strategy parse_strategy(const std::string& json_text, int expected_timesteps = -1);
std::string strategy_to_json(const Strategy& s);
void save_strategy(const Strategy& s, const std::string& path);

}  // namespace dato

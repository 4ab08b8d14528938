#pragma once

#include <string>
#include <vector>

#include "dato/pipeline.hpp"

// Objectives and measurement: analytic latency model (MAC counts), quality
// as trajectory divergence against the disabled-feature baseline, dynamics
// statistics over a sampling run, and the debug exporters.

namespace dato {

// Analytic per-step cost in MACs for one batch row. Linear blocks cost
// tokens*C^2; an attention site adds 4*kept*C^2 projection MACs plus the
// 2*kept^2*C score/value term. The mid site is never pruned. The constant
// input/output projections are not counted, so a depth-0 step costs exactly 0.
struct CostModel {
    int levels = 0;
    int channels = 0;
    std::vector<double> linear_cost;  // per block slot
    int mid_tokens = 0;
    int level0_tokens = 0;

    static CostModel from_config(const ModelConfig& cfg);

    double attention_cost(int kept) const;       // projections + quadratic term
    double attention_quad_term(int kept) const;  // 2*kept^2*C only
    // Cost of one step at the given depth and level-0 kept-token count.
    double step_cost(CacheDepth depth, int kept_level0) const;
    double full_step_cost() const;
};

// Total analytic cost of a strategy under the runtime rules (first step
// forced FULL, pruning off during warm-up). Baseline == all-FULL ratio 0.
double latency_cost(const Strategy& strategy, const ModelConfig& cfg);
double relative_latency(const Strategy& strategy, const ModelConfig& cfg);
double speedup_ratio(const Strategy& strategy, const ModelConfig& cfg);

// MSE between the strategy run's final state and the disabled-baseline
// run's final state, on a fixed seeded batch.
double trajectory_divergence(const Strategy& strategy, const ModelConfig& cfg,
                             const SampleSettings& settings);

// Objective evaluator used by the search: shares one baseline run and the
// cost normalizer across evaluations.
struct Objectives {
    double quality = 0.0;
    double latency = 0.0;
};

class StrategyEvaluator {
public:
    StrategyEvaluator(const ModelConfig& cfg, const SampleSettings& settings);

    Objectives evaluate(const Strategy& strategy) const;
    double scalarize(const Objectives& o, double latency_weight) const;

    const Tensor& baseline_final() const { return baseline_final_; }

private:
    ModelConfig cfg_;
    SampleSettings settings_;
    DenoisePipeline pipeline_;
    Tensor baseline_final_;
    double baseline_cost_ = 0.0;
};

// Histogram of per-token adjacent-step change scores over a recorded run:
// for every consecutive step pair, the channel-mean absolute difference of
// the level-0 feature maps at each token (the same reduction the pruning
// scores use). Counts sum to B*N*(steps-1).
struct DynamicsHistogram {
    double mean = 0.0;
    double median = 0.0;
    std::vector<double> edges;   // bins+1 edges, min..max
    std::vector<long> counts;    // per bin
    std::vector<double> values;  // one entry per token and step pair
};

DynamicsHistogram dynamics_histogram(const Trajectory& traj, int bins = 20);
std::string histogram_stats_json(const DynamicsHistogram& h);

// Raw tensor dump: 8 uint32 LE header (magic 'dato', version, B, C, H, W,
// 0, 0) followed by float64 LE payload.
void write_tensor_file(const Tensor& t, const std::string& path);
Tensor read_tensor_file(const std::string& path);

// 8-bit binary PGM, min-max normalized (constant input -> all zero).
void write_pgm(const Tensor& plane, int item, const std::string& path);

// Score-grid export for one batch item: CSV of (row,col,score) plus a PGM
// next to it (base_path + ".csv" / ".pgm").
void heatmap_export(const Tensor& scores, int item, const std::string& base_path);

// Per-step CSV for a recorded run: timestep,depth,ratio,kept_tokens,blocks_computed.
void write_step_csv(const Trajectory& traj, const std::string& path);

}  // namespace dato

#pragma once

#include <optional>
#include <vector>

#include "dato/blocks.hpp"
#include "dato/cache.hpp"
#include "dato/prune.hpp"
#include "dato/strategy.hpp"
#include "dato/tensor.hpp"

// Deterministic toy DDPM denoiser: a UNet-shaped stack of per-token linear
// maps with tanh activations, self-attention at the innermost resolution and
// at level 0 of both branches, and ancestral sampling over T timesteps.
// Small enough to run on a desk, structured enough to exercise caching and
// pruning the way a real UNet would.

namespace dato {

struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alpha_bar;  // cumulative product of (1 - beta)

    static NoiseSchedule linear(int timesteps, double beta_start = 1e-4,
                                double beta_end = 0.02);
    explicit NoiseSchedule(std::vector<double> betas_);
    NoiseSchedule() = default;

    int timesteps() const { return (int)betas.size(); }
};

struct ModelConfig {
    int levels = 3;
    int channels = 8;
    int grid = 16;  // feature map side; N = grid*grid tokens at level 0
    int timesteps = 50;
    int patch_size = 2;
    bool cfg_enabled = true;
    double cfg_scale = 7.5;
    bool align_cfg = true;
    uint64_t weight_seed = 42;

    int tokens() const { return grid * grid; }
    int blocks() const { return 2 * levels + 1; }
    void validate() const;  // throws std::invalid_argument
};

struct DenoiserWeights {
    struct Attn {
        Tensor wq, wk, wv, wo;  // (C,C) each
    };

    Tensor w_in, w_out;  // (C,C)
    Tensor cond_bias;    // (C,) added to conditional rows after input proj
    std::vector<Tensor> w_down, w_up;  // one (C,C) per level
    Tensor w_mid;
    Attn attn_down0, attn_mid, attn_up0;

    static DenoiserWeights build(const ModelConfig& cfg, int class_id);
};

// Pruning inputs for one step: effective ratio plus the level-0 feature maps
// of the two previous steps (grid layout). ratio 0 disables pruning.
struct PrunePlan {
    double ratio = 0.0;
    const Tensor* prev2 = nullptr;
    const Tensor* prev1 = nullptr;
};

// Optional per-step introspection filled by denoise_step.
struct StepDebug {
    bool prune_active = false;
    Tensor scores;  // change-score grid (B,H,W)
    PruneMap map_down0, map_up0;
};

// Per-step schedule after applying the runtime rules to a strategy:
// the first executed step is forced to FULL depth, and pruning stays off
// until two previous level-0 feature maps exist.
struct StepPlanInfo {
    CacheDepth depth;
    double ratio_effective = 0.0;
    bool forced_full = false;
    bool warmup = false;
};

std::vector<StepPlanInfo> effective_schedule(const Strategy& strategy,
                                             const ModelConfig& cfg);

struct StepRecord {
    int timestep = 0;
    CacheDepth depth;
    double ratio_effective = 0.0;
    int kept_tokens = 0;      // per level-0 attention site; 0 when no site ran
    int blocks_computed = 0;
    Tensor f0_up;             // level-0 up output, grid layout (B,C,H,W)
    StepDebug debug;          // prune decisions when pruning ran this step
};

struct Trajectory {
    std::vector<Tensor> states;  // x_T .. x_0, image batch
    std::vector<StepRecord> steps;
    std::vector<StepOutputs> block_outputs;  // only when recording enabled
    bool first_step_forced = false;

    const Tensor& final_state() const { return states.back(); }
};

struct SampleSettings {
    int batch_images = 1;
    uint64_t init_seed = 7;
    uint64_t noise_seed = 11;
    int class_id = 0;
    bool record_block_outputs = false;
    // stderr note when the first executed step gets forced to FULL depth;
    // evaluators doing many internal runs turn it off.
    bool warn_on_forced_full = true;
};

// q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1-abar_t) eps with seeded eps.
Tensor forward_noise(const Tensor& x0, int t, uint64_t noise_seed,
                     const NoiseSchedule& sched);

// One ancestral reverse step; adds no noise at t = 0.
Tensor reverse_step(const Tensor& x_t, const Tensor& eps, int t,
                    uint64_t noise_seed, const NoiseSchedule& sched);

// Classifier-free guidance combine: eps_uncond + w (eps_cond - eps_uncond).
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

class DenoisePipeline {
public:
    DenoisePipeline(ModelConfig cfg, int class_id);
    DenoisePipeline(ModelConfig cfg, int class_id, NoiseSchedule sched);

    // Straight-line denoiser pass with the cache and prune machinery absent.
    std::pair<Tensor, StepOutputs> denoise_plain(const Tensor& x) const;

    // Plan-driven pass: computes blocks below the cache depth, serves the
    // rest from the store, prunes level-0 attention per the prune plan.
    // Refreshing the store on FULL steps is the caller's job.
    std::pair<Tensor, StepOutputs> denoise_step(const Tensor& x, int t,
                                                const CacheStore& cache,
                                                const PrunePlan& prune,
                                                CacheDepth depth,
                                                StepDebug* debug = nullptr) const;

    Trajectory run(const Strategy& strategy, const SampleSettings& s) const;
    Trajectory run_disabled(const SampleSettings& s) const;  // ignores strategies entirely

    const ModelConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    const DenoiserWeights& weights() const { return weights_; }

private:
    void check_input(const Tensor& x) const;

    ModelConfig cfg_;
    NoiseSchedule sched_;
    DenoiserWeights weights_;
};

}  // namespace dato

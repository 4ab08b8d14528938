#include "dato/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace dato {

using kernels::Exec;

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

constexpr uint64_t kForwardSalt = 0xF0;
constexpr uint64_t kReverseSalt = 0xAE;

// Weight slot tags for seed derivation.
enum WeightTag : uint64_t {
    kTagIn = 0,
    kTagOut = 1,
    kTagMid = 2,
    kTagDown = 10,   // +level
    kTagUp = 30,     // +level
    kTagAttnDown0 = 50,
    kTagAttnMid = 60,
    kTagAttnUp0 = 70,
    kTagCondBias = 90,  // +class id
};

Tensor weight(const ModelConfig& cfg, uint64_t tag) {
    const double scale = 1.0 / std::sqrt((double)cfg.channels);
    return seeded_fill(Shape{cfg.channels, cfg.channels},
                       mix_seed(cfg.weight_seed, tag), scale);
}

DenoiserWeights::Attn attn_weights(const ModelConfig& cfg, uint64_t tag) {
    return DenoiserWeights::Attn{weight(cfg, tag), weight(cfg, tag + 1),
                                 weight(cfg, tag + 2), weight(cfg, tag + 3)};
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_start, double beta_end) {
    require(timesteps >= 1, "schedule: timesteps must be >= 1");
    require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
            "schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(timesteps);
    for (int t = 0; t < timesteps; ++t)
        betas[t] = timesteps == 1
                       ? beta_start
                       : beta_start + (beta_end - beta_start) * t / (double)(timesteps - 1);
    return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas_) : betas(std::move(betas_)) {
    require(!betas.empty(), "schedule: empty beta list");
    alpha_bar.resize(betas.size());
    double prod = 1.0;
    for (size_t t = 0; t < betas.size(); ++t) {
        require(betas[t] >= 0.0 && betas[t] < 1.0, "schedule: beta out of [0,1)");
        prod *= 1.0 - betas[t];
        alpha_bar[t] = prod;
    }
}

void ModelConfig::validate() const {
    require(levels >= 1, "config: levels must be >= 1");
    require(channels >= 1, "config: channels must be >= 1");
    require(grid >= 2, "config: grid must be >= 2");
    require(grid % (1 << levels) == 0,
            "config: grid " + std::to_string(grid) + " not divisible by 2^levels");
    require(patch_size >= 1 && grid % patch_size == 0,
            "config: grid not divisible by patch size");
    require(timesteps >= 1, "config: timesteps must be >= 1");
    require(cfg_scale >= 0.0, "config: cfg_scale must be >= 0");
}

DenoiserWeights DenoiserWeights::build(const ModelConfig& cfg, int class_id) {
    require(class_id >= 0, "weights: class id must be >= 0");
    DenoiserWeights w;
    w.w_in = weight(cfg, kTagIn);
    w.w_out = weight(cfg, kTagOut);
    w.w_mid = weight(cfg, kTagMid);
    w.w_down.reserve(cfg.levels);
    w.w_up.reserve(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
        w.w_down.push_back(weight(cfg, kTagDown + (uint64_t)l));
        w.w_up.push_back(weight(cfg, kTagUp + (uint64_t)l));
    }
    w.attn_down0 = attn_weights(cfg, kTagAttnDown0);
    w.attn_mid = attn_weights(cfg, kTagAttnMid);
    w.attn_up0 = attn_weights(cfg, kTagAttnUp0);
    w.cond_bias = seeded_fill(Shape{cfg.channels},
                              mix_seed(cfg.weight_seed, kTagCondBias + (uint64_t)class_id),
                              0.5);
    return w;
}

Tensor forward_noise(const Tensor& x0, int t, uint64_t noise_seed,
                     const NoiseSchedule& sched) {
    require(t >= 0 && t < sched.timesteps(), "forward_noise: t out of range");
    const Tensor eps =
        gaussian_fill(x0.shape, mix_seed(mix_seed(noise_seed, kForwardSalt), (uint64_t)t));
    const double ab = sched.alpha_bar[t];
    const double s0 = std::sqrt(ab), s1 = std::sqrt(1.0 - ab);
    Tensor out(x0.shape);
    for (long i = 0; i < x0.size(); ++i)
        out.data[i] = s0 * x0.data[i] + s1 * eps.data[i];
    return out;
}

Tensor reverse_step(const Tensor& x_t, const Tensor& eps, int t,
                    uint64_t noise_seed, const NoiseSchedule& sched) {
    require(t >= 0 && t < sched.timesteps(), "reverse_step: t out of range");
    require(x_t.shape == eps.shape, "reverse_step: eps shape mismatch");
    const double beta = sched.betas[t];
    const double ab = sched.alpha_bar[t];
    const double coeff = 1.0 - ab > 0.0 ? beta / std::sqrt(1.0 - ab) : 0.0;
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    Tensor out(x_t.shape);
    for (long i = 0; i < x_t.size(); ++i)
        out.data[i] = inv_sqrt_alpha * (x_t.data[i] - coeff * eps.data[i]);
    if (t > 0 && beta > 0.0) {
        // Fixed variance sigma_t^2 = beta_t; the noise stream only depends on
        // (seed, t), never on the strategy.
        const Tensor z = gaussian_fill(
            x_t.shape, mix_seed(mix_seed(noise_seed, kReverseSalt), (uint64_t)t));
        const double sigma = std::sqrt(beta);
        for (long i = 0; i < out.size(); ++i) out.data[i] += sigma * z.data[i];
    }
    return out;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
    require(eps_cond.shape == eps_uncond.shape, "cfg_combine: shape mismatch");
    Tensor out(eps_cond.shape);
    for (long i = 0; i < out.size(); ++i)
        out.data[i] = eps_uncond.data[i] + w * (eps_cond.data[i] - eps_uncond.data[i]);
    return out;
}

std::vector<StepPlanInfo> effective_schedule(const Strategy& strategy,
                                             const ModelConfig& cfg) {
    require(strategy.timesteps() == cfg.timesteps,
            "strategy covers " + std::to_string(strategy.timesteps()) +
                " timesteps but the model runs " + std::to_string(cfg.timesteps));
    std::vector<StepPlanInfo> out(cfg.timesteps);
    int executed = 0;
    for (int t = cfg.timesteps - 1; t >= 0; --t, ++executed) {
        StepPlanInfo info;
        info.depth = strategy.steps[t].depth;
        info.ratio_effective = strategy.steps[t].ratio;
        if (executed == 0 && !info.depth.is_full()) {
            info.depth = CacheDepth::full();
            info.forced_full = true;
        }
        if (executed < 2 && info.ratio_effective != 0.0) {
            // No two previous level-0 maps yet, so no change scores to prune by.
            info.ratio_effective = 0.0;
            info.warmup = true;
        }
        out[t] = info;
    }
    return out;
}

// ---- denoiser internals ----

namespace {

struct PruneCtx {
    bool active = false;
    int count = 0;  // tokens pruned at each level-0 site
    std::vector<std::vector<int>> base;
};

// (B,N,C) x (C,C) as one flat (B*N,C) matmul.
Tensor token_linear(const Tensor& t, const Tensor& w, Exec e = Exec::Auto) {
    Tensor out(t.shape);
    kernels::matmul(t.ptr(), w.ptr(), out.ptr(), t.shape[0] * t.shape[1],
                    t.shape[2], w.shape[1], e);
    return out;
}

Tensor add_cond_bias(const Tensor& tokens, const Tensor& bias, int rows) {
    Tensor out = tokens;
    const int n = tokens.shape[1], c = tokens.shape[2];
    for (int bi = 0; bi < rows; ++bi)
        for (int i = 0; i < n; ++i)
            for (int ci = 0; ci < c; ++ci) out.at3(bi, i, ci) += bias.data[ci];
    return out;
}

Tensor pool_tokens(const Tensor& t, int side) {
    return grid_to_tokens(avg_pool2(tokens_to_grid(t, side, side)));
}

Tensor upsample_tokens(const Tensor& t, int side) {
    return grid_to_tokens(upsample_nearest2(tokens_to_grid(t, side, side)));
}

// Plain single-head attention over (B,n,C); caller adds the residual.
Tensor attention_core(const Tensor& x, const DenoiserWeights::Attn& w,
                      Exec e = Exec::Auto) {
    const int b = x.shape[0], c = x.shape[2];
    const double scale = 1.0 / std::sqrt((double)c);
    Tensor out(x.shape);
    for (int bi = 0; bi < b; ++bi) {
        const Tensor xi = batch_item(x, bi);
        const Tensor q = matmul(xi, w.wq, e);
        const Tensor k = matmul(xi, w.wk, e);
        const Tensor v = matmul(xi, w.wv, e);
        Tensor kt(Shape{k.shape[1], k.shape[0]});
        for (int i = 0; i < k.shape[0]; ++i)
            for (int j = 0; j < k.shape[1]; ++j) kt.at2(j, i) = k.at2(i, j);
        const Tensor scores = scaled(matmul(q, kt, e), scale);
        const Tensor probs = softmax_rows(scores, e);
        set_batch_item(out, bi, matmul(matmul(probs, v, e), w.wo, e));
    }
    return out;
}

// Level-0 attention site: prune, attend over kept tokens, recover, residual.
Tensor level0_attention(const Tensor& x, const DenoiserWeights::Attn& w,
                        const PruneCtx& ctx, PruneMap* map_out) {
    if (!ctx.active) {
        return add(x, attention_core(x, w));
    }
    const PruneMap map = select_pruned_tokens(x, ctx.base, ctx.count);
    const auto kept = apply_prune(x, map);
    const Tensor attn = attention_core(kept.first, w);
    const Tensor recovered = recover_pruned(attn, map);
    if (map_out) *map_out = map;
    return add(x, recovered);
}

// Full forward pass (all 2L+1 blocks), optionally pruning the level-0 sites.
std::pair<Tensor, StepOutputs> forward_all(const ModelConfig& cfg,
                                           const DenoiserWeights& weights,
                                           const Tensor& x, const PruneCtx& ctx,
                                           StepDebug* debug) {
    const int levels = cfg.levels;
    StepOutputs outs(levels);

    Tensor cur = token_linear(grid_to_tokens(x), weights.w_in);
    if (cfg.cfg_enabled) cur = add_cond_bias(cur, weights.cond_bias, x.shape[0] / 2);

    std::vector<Tensor> skip(levels);
    for (int l = 0; l < levels; ++l) {
        Tensor h = tanh_map(token_linear(cur, weights.w_down[l]));
        if (l == 0)
            h = level0_attention(h, weights.attn_down0, ctx,
                                 debug ? &debug->map_down0 : nullptr);
        outs.put(Branch::down, l, h, false);
        skip[l] = h;
        cur = pool_tokens(h, cfg.grid >> l);
    }

    Tensor m = tanh_map(token_linear(cur, weights.w_mid));
    m = add(m, attention_core(m, weights.attn_mid));
    outs.put(Branch::mid, levels, m, false);
    cur = m;

    for (int l = levels - 1; l >= 0; --l) {
        const Tensor up = upsample_tokens(cur, cfg.grid >> (l + 1));
        Tensor h = tanh_map(token_linear(add(up, skip[l]), weights.w_up[l]));
        if (l == 0)
            h = level0_attention(h, weights.attn_up0, ctx,
                                 debug ? &debug->map_up0 : nullptr);
        outs.put(Branch::up, l, h, false);
        cur = h;
    }

    const Tensor eps_tokens = token_linear(cur, weights.w_out);
    return {tokens_to_grid(eps_tokens, cfg.grid, cfg.grid), std::move(outs)};
}

}  // namespace

DenoisePipeline::DenoisePipeline(ModelConfig cfg, int class_id)
    : DenoisePipeline(std::move(cfg), class_id, NoiseSchedule()) {}

DenoisePipeline::DenoisePipeline(ModelConfig cfg, int class_id, NoiseSchedule sched)
    : cfg_(std::move(cfg)), sched_(std::move(sched)) {
    cfg_.validate();
    if (sched_.timesteps() == 0) sched_ = NoiseSchedule::linear(cfg_.timesteps);
    require(sched_.timesteps() == cfg_.timesteps,
            "pipeline: schedule length does not match config timesteps");
    weights_ = DenoiserWeights::build(cfg_, class_id);
}

void DenoisePipeline::check_input(const Tensor& x) const {
    require(x.shape.rank() == 4 && x.shape[1] == cfg_.channels &&
                x.shape[2] == cfg_.grid && x.shape[3] == cfg_.grid,
            "denoise: input shape mismatch, got " + x.shape.str());
    if (cfg_.cfg_enabled)
        require(x.shape[0] % 2 == 0, "denoise: cfg batching needs an even batch");
}

// The reference pass with the cache and prune machinery absent: straight-line
// blocks, plain attention everywhere.
std::pair<Tensor, StepOutputs> DenoisePipeline::denoise_plain(const Tensor& x) const {
    check_input(x);
    const int levels = cfg_.levels;
    StepOutputs outs(levels);

    Tensor cur = token_linear(grid_to_tokens(x), weights_.w_in);
    if (cfg_.cfg_enabled) cur = add_cond_bias(cur, weights_.cond_bias, x.shape[0] / 2);

    std::vector<Tensor> skip(levels);
    for (int l = 0; l < levels; ++l) {
        Tensor h = tanh_map(token_linear(cur, weights_.w_down[l]));
        if (l == 0) h = add(h, attention_core(h, weights_.attn_down0));
        outs.put(Branch::down, l, h, false);
        skip[l] = h;
        cur = pool_tokens(h, cfg_.grid >> l);
    }

    Tensor m = tanh_map(token_linear(cur, weights_.w_mid));
    m = add(m, attention_core(m, weights_.attn_mid));
    outs.put(Branch::mid, levels, m, false);
    cur = m;

    for (int l = levels - 1; l >= 0; --l) {
        const Tensor up = upsample_tokens(cur, cfg_.grid >> (l + 1));
        Tensor h = tanh_map(token_linear(add(up, skip[l]), weights_.w_up[l]));
        if (l == 0) h = add(h, attention_core(h, weights_.attn_up0));
        outs.put(Branch::up, l, h, false);
        cur = h;
    }

    const Tensor eps_tokens = token_linear(cur, weights_.w_out);
    return {tokens_to_grid(eps_tokens, cfg_.grid, cfg_.grid), std::move(outs)};
}

std::pair<Tensor, StepOutputs> DenoisePipeline::denoise_step(
    const Tensor& x, int t, const CacheStore& cache, const PrunePlan& prune,
    CacheDepth depth, StepDebug* debug) const {
    check_input(x);
    require(t >= 0 && t < cfg_.timesteps, "denoise: timestep out of range");
    if (!depth.is_full())
        require(depth.value <= cfg_.levels, "denoise: cache depth beyond mid level");
    const int levels = cfg_.levels;
    const ComputePlan plan = plan_step(depth, levels, cache);

    // Pruning decisions shared by both level-0 sites: one score grid, one
    // base set, one prune count.
    PruneCtx ctx;
    const bool any_level0 = plan.computes(Branch::down, 0, levels) ||
                            plan.computes(Branch::up, 0, levels);
    if (prune.ratio > 0.0 && any_level0) {
        require(prune.prev1 != nullptr && prune.prev2 != nullptr,
                "denoise: pruning requested without two previous feature maps");
        ctx.count = prune_count(prune.ratio, cfg_.tokens(), cfg_.patch_size);
        if (ctx.count > 0) {
            ctx.active = true;
            const Tensor scores = diff_score(*prune.prev2, *prune.prev1);
            ctx.base = select_base_tokens(scores, cfg_.patch_size);
            if (cfg_.cfg_enabled && cfg_.align_cfg) align_cfg_base(ctx.base);
            if (debug) {
                debug->prune_active = true;
                debug->scores = scores;
            }
        }
    }

    if (depth.is_full()) return forward_all(cfg_, weights_, x, ctx, debug);

    StepOutputs outs(levels);
    // Serve every reused block from the snapshot first (mid counts as level L).
    for (int l = depth.value; l < levels; ++l) {
        outs.put(Branch::down, l, cache.fetch(Branch::down, l), true);
        outs.put(Branch::up, l, cache.fetch(Branch::up, l), true);
    }
    outs.put(Branch::mid, levels, cache.fetch(Branch::mid, levels), true);

    if (depth.value == 0) {
        // Nothing computed; the output projection runs on the cached level-0 map.
        const Tensor eps_tokens = token_linear(outs.f0_up(), weights_.w_out);
        return {tokens_to_grid(eps_tokens, cfg_.grid, cfg_.grid), std::move(outs)};
    }

    Tensor cur = token_linear(grid_to_tokens(x), weights_.w_in);
    if (cfg_.cfg_enabled) cur = add_cond_bias(cur, weights_.cond_bias, x.shape[0] / 2);

    std::vector<Tensor> skip(levels);
    for (int l = 0; l < depth.value; ++l) {
        Tensor h = tanh_map(token_linear(cur, weights_.w_down[l]));
        if (l == 0)
            h = level0_attention(h, weights_.attn_down0, ctx,
                                 debug ? &debug->map_down0 : nullptr);
        outs.put(Branch::down, l, h, false);
        skip[l] = h;
        cur = pool_tokens(h, cfg_.grid >> l);
    }

    // Resume the up branch below the deepest reused block.
    cur = depth.value == levels ? cache.fetch(Branch::mid, levels)
                                : cache.fetch(Branch::up, depth.value);
    for (int l = depth.value - 1; l >= 0; --l) {
        const Tensor up = upsample_tokens(cur, cfg_.grid >> (l + 1));
        Tensor h = tanh_map(token_linear(add(up, skip[l]), weights_.w_up[l]));
        if (l == 0)
            h = level0_attention(h, weights_.attn_up0, ctx,
                                 debug ? &debug->map_up0 : nullptr);
        outs.put(Branch::up, l, h, false);
        cur = h;
    }

    const Tensor eps_tokens = token_linear(cur, weights_.w_out);
    return {tokens_to_grid(eps_tokens, cfg_.grid, cfg_.grid), std::move(outs)};
}

namespace {

// Split the model-batch eps and apply guidance when CFG is on.
Tensor combine_eps(const Tensor& eps_model, const ModelConfig& cfg, int images) {
    if (!cfg.cfg_enabled) return eps_model;
    Tensor cond(Shape{images, cfg.channels, cfg.grid, cfg.grid});
    Tensor uncond(cond.shape);
    for (int bi = 0; bi < images; ++bi) {
        set_batch_item(cond, bi, batch_item(eps_model, bi));
        set_batch_item(uncond, bi, batch_item(eps_model, bi + images));
    }
    return cfg_combine(cond, uncond, cfg.cfg_scale);
}

}  // namespace

Trajectory DenoisePipeline::run(const Strategy& strategy, const SampleSettings& s) const {
    require(s.batch_images >= 1, "run: batch_images must be >= 1");
    const std::vector<StepPlanInfo> sched = effective_schedule(strategy, cfg_);

    Trajectory traj;
    Tensor x = gaussian_fill(Shape{s.batch_images, cfg_.channels, cfg_.grid, cfg_.grid},
                             s.init_seed);
    traj.states.push_back(x);

    CacheStore cache(cfg_.levels);
    Tensor prev1, prev2;  // level-0 feature maps of the previous two steps
    int recorded = 0;

    for (int t = cfg_.timesteps - 1; t >= 0; --t) {
        const StepPlanInfo& info = sched[t];
        if (info.forced_full && !traj.first_step_forced) {
            traj.first_step_forced = true;
            if (s.warn_on_forced_full)
                std::fprintf(stderr,
                             "warning: first executed step t=%d forced to full depth "
                             "to seed the feature cache\n", t);
        }

        const Tensor model_in = cfg_.cfg_enabled ? concat_batch(x, x) : x;
        PrunePlan pp;
        pp.ratio = info.ratio_effective;
        pp.prev1 = recorded >= 1 ? &prev1 : nullptr;
        pp.prev2 = recorded >= 2 ? &prev2 : nullptr;

        StepRecord rec;
        auto [eps_model, outs] = denoise_step(model_in, t, cache, pp, info.depth, &rec.debug);
        if (info.depth.is_full()) cache.refresh(outs, t);

        const Tensor eps = combine_eps(eps_model, cfg_, s.batch_images);
        x = reverse_step(x, eps, t, s.noise_seed, sched_);
        traj.states.push_back(x);

        rec.timestep = t;
        rec.depth = info.depth;
        rec.ratio_effective = info.ratio_effective;
        rec.blocks_computed = outs.computed_blocks();
        const bool level0_ran =
            !outs.from_cache[block_slot(Branch::down, 0, cfg_.levels)] ||
            !outs.from_cache[block_slot(Branch::up, 0, cfg_.levels)];
        const int pruned = rec.debug.prune_active
                               ? prune_count(info.ratio_effective, cfg_.tokens(),
                                             cfg_.patch_size)
                               : 0;
        rec.kept_tokens = level0_ran ? cfg_.tokens() - pruned : 0;
        rec.f0_up = tokens_to_grid(outs.f0_up(), cfg_.grid, cfg_.grid);

        prev2 = std::move(prev1);
        prev1 = rec.f0_up;
        ++recorded;

        if (s.record_block_outputs) traj.block_outputs.push_back(outs);
        traj.steps.push_back(std::move(rec));
    }
    return traj;
}

Trajectory DenoisePipeline::run_disabled(const SampleSettings& s) const {
    require(s.batch_images >= 1, "run: batch_images must be >= 1");
    Trajectory traj;
    Tensor x = gaussian_fill(Shape{s.batch_images, cfg_.channels, cfg_.grid, cfg_.grid},
                             s.init_seed);
    traj.states.push_back(x);

    for (int t = cfg_.timesteps - 1; t >= 0; --t) {
        const Tensor model_in = cfg_.cfg_enabled ? concat_batch(x, x) : x;
        auto [eps_model, outs] = denoise_plain(model_in);
        const Tensor eps = combine_eps(eps_model, cfg_, s.batch_images);
        x = reverse_step(x, eps, t, s.noise_seed, sched_);
        traj.states.push_back(x);

        StepRecord rec;
        rec.timestep = t;
        rec.depth = CacheDepth::full();
        rec.blocks_computed = outs.computed_blocks();
        rec.kept_tokens = cfg_.tokens();
        rec.f0_up = tokens_to_grid(outs.f0_up(), cfg_.grid, cfg_.grid);
        if (s.record_block_outputs) traj.block_outputs.push_back(outs);
        traj.steps.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace dato

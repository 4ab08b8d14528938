#include "dato/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ios>
#include <stdexcept>

#include <json.hpp>

namespace dato {

using nlohmann::json;

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Shortest round-trip decimal for doubles (via the JSON serializer), so text
// artifacts are byte-stable across runs.
std::string num(double v) { return json(v).dump(); }

}  // namespace

CostModel CostModel::from_config(const ModelConfig& cfg) {
    cfg.validate();
    CostModel m;
    m.levels = cfg.levels;
    m.channels = cfg.channels;
    m.level0_tokens = cfg.tokens();
    m.mid_tokens = (cfg.grid >> cfg.levels) * (cfg.grid >> cfg.levels);
    m.linear_cost.assign(block_count(cfg.levels), 0.0);
    const double c2 = (double)cfg.channels * cfg.channels;
    for (int l = 0; l < cfg.levels; ++l) {
        const int side = cfg.grid >> l;
        const double cost = (double)side * side * c2;
        m.linear_cost[block_slot(Branch::down, l, cfg.levels)] = cost;
        m.linear_cost[block_slot(Branch::up, l, cfg.levels)] = cost;
    }
    m.linear_cost[block_slot(Branch::mid, cfg.levels, cfg.levels)] =
        (double)m.mid_tokens * c2;
    return m;
}

double CostModel::attention_cost(int kept) const {
    return 4.0 * kept * channels * channels + attention_quad_term(kept);
}

double CostModel::attention_quad_term(int kept) const {
    return 2.0 * (double)kept * kept * channels;
}

double CostModel::step_cost(CacheDepth depth, int kept_level0) const {
    double cost = 0.0;
    auto computed = [&](int level) { return depth.is_full() || level < depth.value; };
    for (int l = 0; l < levels; ++l) {
        if (!computed(l)) continue;
        cost += linear_cost[block_slot(Branch::down, l, levels)];
        cost += linear_cost[block_slot(Branch::up, l, levels)];
    }
    if (computed(levels)) {
        cost += linear_cost[block_slot(Branch::mid, levels, levels)];
        cost += attention_cost(mid_tokens);
    }
    if (computed(0)) cost += 2.0 * attention_cost(kept_level0);  // down-0 and up-0 sites
    return cost;
}

double CostModel::full_step_cost() const {
    return step_cost(CacheDepth::full(), level0_tokens);
}

double latency_cost(const Strategy& strategy, const ModelConfig& cfg) {
    const CostModel model = CostModel::from_config(cfg);
    const std::vector<StepPlanInfo> sched = effective_schedule(strategy, cfg);
    double total = 0.0;
    for (const StepPlanInfo& info : sched) {
        int kept = cfg.tokens();
        if (info.ratio_effective > 0.0)
            kept -= prune_count(info.ratio_effective, cfg.tokens(), cfg.patch_size);
        total += model.step_cost(info.depth, kept);
    }
    return total;
}

double relative_latency(const Strategy& strategy, const ModelConfig& cfg) {
    const double base = latency_cost(Strategy::baseline(cfg.timesteps), cfg);
    return latency_cost(strategy, cfg) / base;
}

double speedup_ratio(const Strategy& strategy, const ModelConfig& cfg) {
    const double mine = latency_cost(strategy, cfg);
    if (mine <= 0.0)
        throw std::invalid_argument("speedup_ratio: strategy has zero modelled cost");
    return latency_cost(Strategy::baseline(cfg.timesteps), cfg) / mine;
}

double trajectory_divergence(const Strategy& strategy, const ModelConfig& cfg,
                             const SampleSettings& settings) {
    SampleSettings s = settings;
    s.warn_on_forced_full = false;  // diagnostics rerun, the primary run warned
    const DenoisePipeline pipeline(cfg, s.class_id);
    const Trajectory ours = pipeline.run(strategy, s);
    const Trajectory base = pipeline.run_disabled(s);
    return mse(ours.final_state(), base.final_state());
}

StrategyEvaluator::StrategyEvaluator(const ModelConfig& cfg,
                                     const SampleSettings& settings)
    : cfg_(cfg), settings_(settings), pipeline_(cfg, settings.class_id) {
    settings_.warn_on_forced_full = false;
    baseline_final_ = pipeline_.run_disabled(settings_).final_state();
    baseline_cost_ = latency_cost(Strategy::baseline(cfg_.timesteps), cfg_);
}

Objectives StrategyEvaluator::evaluate(const Strategy& strategy) const {
    Objectives o;
    o.quality = mse(pipeline_.run(strategy, settings_).final_state(), baseline_final_);
    o.latency = latency_cost(strategy, cfg_) / baseline_cost_;
    return o;
}

double StrategyEvaluator::scalarize(const Objectives& o, double latency_weight) const {
    return o.quality + latency_weight * o.latency;
}

DynamicsHistogram dynamics_histogram(const Trajectory& traj, int bins) {
    require(bins >= 1, "dynamics_histogram: bins must be >= 1");
    if (traj.steps.size() < 2)
        throw std::runtime_error(
            "dynamics_histogram: need at least two recorded steps");

    DynamicsHistogram h;
    for (size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        // Per-token channel-mean |delta| between consecutive steps.
        const Tensor d = diff_score(traj.steps[i].f0_up, traj.steps[i + 1].f0_up);
        h.values.insert(h.values.end(), d.data.begin(), d.data.end());
    }

    const size_t n = h.values.size();
    double sum = 0.0;
    for (double v : h.values) sum += v;
    h.mean = sum / (double)n;
    std::vector<double> sorted = h.values;
    std::sort(sorted.begin(), sorted.end());
    h.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    const double lo = sorted.front(), hi = sorted.back();
    const double width = (hi - lo) / (double)bins;
    h.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) h.edges[i] = lo + width * i;
    h.edges[bins] = hi;
    h.counts.assign(bins, 0);
    for (double v : h.values) {
        int idx = width > 0.0 ? (int)((v - lo) / width) : 0;
        if (idx >= bins) idx = bins - 1;
        ++h.counts[idx];
    }
    return h;
}

std::string histogram_stats_json(const DynamicsHistogram& h) {
    json doc;
    doc["mean_diff"] = h.mean;
    doc["median_diff"] = h.median;
    doc["pairs"] = h.values.size();
    json bins = json::array();
    for (size_t i = 0; i < h.counts.size(); ++i) {
        json bin;
        bin["lo"] = h.edges[i];
        bin["hi"] = h.edges[i + 1];
        bin["count"] = h.counts[i];
        bins.push_back(bin);
    }
    doc["bins"] = bins;
    return doc.dump(2) + "\n";
}

// ---- file exporters ----

namespace {

constexpr uint32_t kDumpMagic = 0x6F746164u;  // "dato" little-endian
constexpr uint32_t kDumpVersion = 1;

void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xFF), (unsigned char)((v >> 8) & 0xFF),
                          (unsigned char)((v >> 16) & 0xFF),
                          (unsigned char)((v >> 24) & 0xFF)};
    out.write((const char*)b, 4);
}

uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read((char*)b, 4);
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
           ((uint32_t)b[3] << 24);
}

}  // namespace

void write_tensor_file(const Tensor& t, const std::string& path) {
    require(t.shape.rank() == 4, "tensor dump: rank-4 tensor required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("tensor dump: cannot open " + path);
    put_u32(out, kDumpMagic);
    put_u32(out, kDumpVersion);
    for (int i = 0; i < 4; ++i) put_u32(out, (uint32_t)t.shape[i]);
    put_u32(out, 0);
    put_u32(out, 0);
    // float64 little-endian payload; this writer targets little-endian hosts.
    out.write((const char*)t.data.data(), (std::streamsize)(t.data.size() * sizeof(double)));
    if (!out) throw std::ios_base::failure("tensor dump: short write to " + path);
}

Tensor read_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("tensor dump: cannot open " + path);
    if (get_u32(in) != kDumpMagic) throw std::runtime_error("tensor dump: bad magic in " + path);
    if (get_u32(in) != kDumpVersion)
        throw std::runtime_error("tensor dump: unsupported version in " + path);
    int dims[4];
    for (int& d : dims) d = (int)get_u32(in);
    get_u32(in);
    get_u32(in);
    if (!in) throw std::ios_base::failure("tensor dump: truncated header in " + path);
    Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
    in.read((char*)t.data.data(), (std::streamsize)(t.data.size() * sizeof(double)));
    if (!in) throw std::ios_base::failure("tensor dump: truncated payload in " + path);
    return t;
}

void write_pgm(const Tensor& plane, int item, const std::string& path) {
    require(plane.shape.rank() == 3, "pgm: rank-3 (B,H,W) tensor required");
    require(item >= 0 && item < plane.shape[0], "pgm: item out of range");
    const int h = plane.shape[1], w = plane.shape[2];
    const double* p = plane.ptr() + (size_t)item * h * w;
    double lo = p[0], hi = p[0];
    for (long i = 1; i < (long)h * w; ++i) {
        lo = std::min(lo, p[i]);
        hi = std::max(hi, p[i]);
    }
    const double range = hi - lo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("pgm: cannot open " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row((size_t)w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double v = p[(long)i * w + j];
            row[j] = range > 0.0 ? (unsigned char)std::lround((v - lo) / range * 255.0) : 0;
        }
        out.write((const char*)row.data(), w);
    }
    if (!out) throw std::ios_base::failure("pgm: short write to " + path);
}

void heatmap_export(const Tensor& scores, int item, const std::string& base_path) {
    require(scores.shape.rank() == 3, "heatmap: rank-3 (B,H,W) score grid required");
    require(item >= 0 && item < scores.shape[0], "heatmap: item out of range");
    const int h = scores.shape[1], w = scores.shape[2];
    std::ofstream csv(base_path + ".csv");
    if (!csv) throw std::ios_base::failure("heatmap: cannot open " + base_path + ".csv");
    csv << "row,col,score\n";
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            csv << i << ',' << j << ',' << num(scores.at3(item, i, j)) << '\n';
    write_pgm(scores, item, base_path + ".pgm");
}

void write_step_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("step csv: cannot open " + path);
    out << "timestep,depth,ratio,kept_tokens,blocks_computed\n";
    for (const StepRecord& rec : traj.steps) {
        out << rec.timestep << ',';
        if (rec.depth.is_full())
            out << "full";
        else
            out << rec.depth.value;
        out << ',' << num(rec.ratio_effective) << ',' << rec.kept_tokens << ','
            << rec.blocks_computed << '\n';
    }
}

}  // namespace dato

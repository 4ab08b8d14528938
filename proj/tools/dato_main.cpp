#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ios>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dato/metrics.hpp"
#include "dato/pipeline.hpp"
#include "dato/prune.hpp"
#include "dato/search.hpp"
#include "dato/strategy.hpp"

// dato: run the toy denoiser under a caching/pruning strategy, search for
// strategies, and export dynamics diagnostics. Exit codes: 0 success,
// 1 validation, 2 runtime, 3 I/O.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Seed tags for deriving per-purpose seeds from the master seed.
constexpr uint64_t kTagInit = 1;
constexpr uint64_t kTagNoise = 2;
constexpr uint64_t kTagSearch = 3;

struct AppConfig {
    uint64_t master_seed = 1;
    dato::ModelConfig model;
    dato::SampleSettings sample;
    dato::SearchConfig search;
    // Explicit per-purpose seeds in the file win over master-seed derivation.
    bool init_seed_explicit = false;
    bool noise_seed_explicit = false;
    bool search_seed_explicit = false;
};

[[noreturn]] void bad_config(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

uint64_t as_seed(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        bad_config("'" + key + "' must be an integer");
    if (v.is_number_integer() && v.get<long long>() < 0)
        bad_config("'" + key + "' must be non-negative");
    return v.get<uint64_t>();
}

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) bad_config("'" + key + "' must be an integer");
    return v.get<int>();
}

double as_num(const json& v, const std::string& key) {
    if (!v.is_number()) bad_config("'" + key + "' must be a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) bad_config("'" + key + "' must be a boolean");
    return v.get<bool>();
}

void parse_model(const json& m, dato::ModelConfig& cfg) {
    for (const auto& [key, v] : m.items()) {
        if (key == "levels") cfg.levels = as_int(v, key);
        else if (key == "channels") cfg.channels = as_int(v, key);
        else if (key == "grid") cfg.grid = as_int(v, key);
        else if (key == "timesteps") cfg.timesteps = as_int(v, key);
        else if (key == "patch_size") cfg.patch_size = as_int(v, key);
        else if (key == "cfg_enabled") cfg.cfg_enabled = as_bool(v, key);
        else if (key == "cfg_scale") cfg.cfg_scale = as_num(v, key);
        else if (key == "align_cfg") cfg.align_cfg = as_bool(v, key);
        else if (key == "weight_seed") cfg.weight_seed = as_seed(v, key);
        else bad_config("unknown key 'model." + key + "'");
    }
}

void parse_sample(const json& m, AppConfig& app) {
    for (const auto& [key, v] : m.items()) {
        if (key == "batch_images") app.sample.batch_images = as_int(v, key);
        else if (key == "init_seed") {
            app.sample.init_seed = as_seed(v, key);
            app.init_seed_explicit = true;
        } else if (key == "noise_seed") {
            app.sample.noise_seed = as_seed(v, key);
            app.noise_seed_explicit = true;
        } else if (key == "class_id") app.sample.class_id = as_int(v, key);
        else bad_config("unknown key 'sample." + key + "'");
    }
}

void parse_search(const json& m, AppConfig& app) {
    for (const auto& [key, v] : m.items()) {
        if (key == "population") app.search.population = as_int(v, key);
        else if (key == "generations") app.search.generations = as_int(v, key);
        else if (key == "crossover_prob") app.search.crossover_prob = as_num(v, key);
        else if (key == "crossover_eta") app.search.crossover_eta = as_num(v, key);
        else if (key == "mutation_prob") app.search.mutation_prob = as_num(v, key);
        else if (key == "mutation_eta") app.search.mutation_eta = as_num(v, key);
        else if (key == "eliminate_duplicates")
            app.search.eliminate_duplicates = as_bool(v, key);
        else if (key == "latency_weight") app.search.latency_weight = as_num(v, key);
        else if (key == "workers") app.search.workers = as_int(v, key);
        else if (key == "legacy_operators") app.search.legacy_operators = as_bool(v, key);
        else if (key == "seed") {
            app.search.master_seed = as_seed(v, key);
            app.search_seed_explicit = true;
        } else bad_config("unknown key 'search." + key + "'");
    }
}

AppConfig load_config(const std::string& path) {
    AppConfig app;
    if (path.empty()) return app;
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const std::exception& e) {
        bad_config(std::string("not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) bad_config("top level must be an object");
    for (const auto& [key, v] : doc.items()) {
        if (key == "master_seed") app.master_seed = as_seed(v, key);
        else if (key == "model") parse_model(v, app.model);
        else if (key == "sample") parse_sample(v, app);
        else if (key == "search") parse_search(v, app);
        else bad_config("unknown key '" + key + "'");
    }
    return app;
}

// Every run/search seed funnels through the master seed unless the config
// pinned that seed explicitly.
void derive_seeds(AppConfig& app) {
    if (!app.init_seed_explicit) app.sample.init_seed = dato::mix_seed(app.master_seed, kTagInit);
    if (!app.noise_seed_explicit)
        app.sample.noise_seed = dato::mix_seed(app.master_seed, kTagNoise);
    if (!app.search_seed_explicit)
        app.search.master_seed = dato::mix_seed(app.master_seed, kTagSearch);
    app.search.eval = app.sample;
}

// --strategy accepts the bundled keywords or a JSON file path.
dato::Strategy resolve_strategy(const std::string& spec_arg, const dato::ModelConfig& cfg) {
    if (spec_arg == "baseline") return dato::Strategy::baseline(cfg.timesteps);
    if (spec_arg == "cache-only") return dato::Strategy::cache_only(cfg.timesteps);
    return dato::load_strategy(spec_arg, cfg.timesteps);
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw std::ios_base::failure("cannot create output directory: " + out);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open " + path);
    out << text;
    if (!out) throw std::ios_base::failure("short write to " + path);
}

std::string label_for(const std::string& spec_arg) {
    if (spec_arg == "baseline" || spec_arg == "cache-only") return spec_arg;
    return fs::path(spec_arg).stem().string();
}

int cmd_run(const AppConfig& app, const std::string& strategy_arg, const std::string& out,
            const std::string& latency_mode, bool want_divergence) {
    app.model.validate();
    const dato::Strategy strategy = resolve_strategy(strategy_arg, app.model);
    ensure_out_dir(out);

    dato::DenoisePipeline pipe(app.model, app.sample.class_id);
    const auto t0 = std::chrono::steady_clock::now();
    const dato::Trajectory traj = pipe.run(strategy, app.sample);
    const auto t1 = std::chrono::steady_clock::now();

    dato::write_tensor_file(traj.final_state(), out + "/final.tensor");
    dato::write_step_csv(traj, out + "/steps.csv");

    json summary;
    summary["tool"] = "dato";
    summary["version"] = kToolVersion;
    summary["master_seed"] = app.master_seed;
    summary["strategy"] = label_for(strategy_arg);
    summary["timesteps"] = app.model.timesteps;
    summary["batch_images"] = app.sample.batch_images;
    summary["first_step_forced"] = traj.first_step_forced;
    summary["relative_latency"] = dato::relative_latency(strategy, app.model);
    summary["speedup"] = dato::speedup_ratio(strategy, app.model);
    summary["latency_mode"] = latency_mode;
    if (latency_mode == "wallclock") {
        // Reporting only; the analytic speedup above stays the comparison basis.
        summary["wallclock_seconds"] =
            std::chrono::duration<double>(t1 - t0).count();
    }
    if (want_divergence)
        summary["divergence"] = dato::trajectory_divergence(strategy, app.model, app.sample);
    write_text(out + "/summary.json", summary.dump(2) + "\n");

    std::printf("strategy %s: speedup %.4f\n", label_for(strategy_arg).c_str(),
                summary["speedup"].get<double>());
    std::printf("wrote %s/final.tensor, steps.csv, summary.json\n", out.c_str());
    return 0;
}

int cmd_search(const AppConfig& app, const std::string& out) {
    app.model.validate();
    app.search.validate();
    ensure_out_dir(out);

    const dato::SearchResult result = dato::run_search(app.search, app.model);

    const dato::Strategy best = dato::decode_genome(result.best.genome);
    dato::save_strategy(best, out + "/best_strategy.json");
    write_text(out + "/history.csv", dato::history_csv(result));
    write_text(out + "/front.csv", dato::front_csv(result));

    json summary;
    summary["tool"] = "dato";
    summary["version"] = kToolVersion;
    summary["master_seed"] = app.master_seed;
    summary["population"] = app.search.population;
    summary["generations"] = app.search.generations;
    summary["latency_weight"] = app.search.latency_weight;
    summary["best_score"] = result.best.score;
    summary["best_quality"] = result.best.obj.quality;
    summary["best_latency"] = result.best.obj.latency;
    summary["front0_size"] = (int)result.front.size();
    summary["best_speedup"] = dato::speedup_ratio(best, app.model);
    write_text(out + "/search_summary.json", summary.dump(2) + "\n");

    std::printf("best score %.6g (quality %.6g, latency %.6g), front size %zu\n",
                result.best.score, result.best.obj.quality, result.best.obj.latency,
                result.front.size());
    std::printf("wrote %s/best_strategy.json, history.csv, front.csv\n", out.c_str());
    return 0;
}

int cmd_stats(const AppConfig& app, const std::vector<std::string>& strategy_args,
              const std::string& out) {
    app.model.validate();
    ensure_out_dir(out);

    for (size_t i = 0; i < strategy_args.size(); ++i) {
        const std::string& arg = strategy_args[i];
        const dato::Strategy strategy = resolve_strategy(arg, app.model);
        const std::string label = std::to_string(i) + "_" + label_for(arg);

        dato::DenoisePipeline pipe(app.model, app.sample.class_id);
        const dato::Trajectory traj = pipe.run(strategy, app.sample);

        const dato::DynamicsHistogram hist = dato::dynamics_histogram(traj);
        write_text(out + "/" + label + "_histogram.json",
                   dato::histogram_stats_json(hist) + "\n");

        // Change-score heatmap over the final step pair, first batch item.
        const size_t n = traj.steps.size();
        if (n >= 2) {
            const dato::Tensor scores =
                dato::diff_score(traj.steps[n - 2].f0_up, traj.steps[n - 1].f0_up);
            dato::heatmap_export(scores, 0, out + "/" + label + "_heatmap");
        }

        // Prune decisions of the last step that pruned, when any did.
        for (size_t s = traj.steps.size(); s-- > 0;) {
            const dato::StepRecord& rec = traj.steps[s];
            if (rec.debug.prune_active) {
                dato::dump_prune_debug(rec.debug.scores, rec.debug.map_down0,
                                       out + "/" + label + "_prune.csv");
                break;
            }
        }

        std::printf("%s: mean change %.6g, median %.6g over %zu token pairs\n",
                    label.c_str(), hist.mean, hist.median, hist.values.size());
    }
    std::printf("wrote stats for %zu strategies under %s\n", strategy_args.size(),
                out.c_str());
    return 0;
}

int cmd_validate(const AppConfig& app, const std::string& path, bool have_config) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open strategy file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();

    const int expected = have_config ? app.model.timesteps : -1;
    const dato::ValidationReport rep = dato::validate_strategy_text(buf.str(), expected);
    for (const std::string& e : rep.errors) std::printf("error: %s\n", e.c_str());
    for (const std::string& w : rep.warnings) std::printf("warning: %s\n", w.c_str());
    if (!rep.ok()) {
        std::printf("%s: invalid (%zu errors)\n", path.c_str(), rep.errors.size());
        return 1;
    }
    std::printf("%s: OK\n", path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"toy-denoiser runtime: feature caching, token pruning, strategy search"};
    cli.require_subcommand(1);
    cli.set_version_flag("--version", kToolVersion);

    std::string config_path, strategy_arg, out_dir = "out", latency_mode = "model";
    std::vector<std::string> stats_strategies;
    std::string validate_path;
    bool want_divergence = false;
    // Flag overrides; negative/absent means "keep the config value".
    long long seed_flag = -1;
    int workers = -1, generations = -1, population = -1;
    double wm = -1.0;

    CLI::App* run = cli.add_subcommand("run", "sample with a strategy and write artifacts");
    run->add_option("--config", config_path, "config JSON file");
    run->add_option("--strategy", strategy_arg,
                    "strategy JSON file, or 'baseline' / 'cache-only'")
        ->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed_flag, "master seed override");
    run->add_option("--latency-mode", latency_mode, "latency report: model or wallclock")
        ->check(CLI::IsMember({"model", "wallclock"}));
    run->add_flag("--divergence", want_divergence,
                  "also report divergence vs the disabled-feature baseline");

    CLI::App* search = cli.add_subcommand("search", "NSGA-II strategy search");
    search->add_option("--config", config_path, "config JSON file");
    search->add_option("--out", out_dir, "output directory");
    search->add_option("--seed", seed_flag, "master seed override");
    search->add_option("--workers", workers, "parallel evaluation workers");
    search->add_option("--wm", wm, "latency weight in the archive score");
    search->add_option("--generations", generations, "generation count");
    search->add_option("--population", population, "population size");

    CLI::App* stats = cli.add_subcommand("stats", "dynamics histograms and heatmaps");
    stats->add_option("--config", config_path, "config JSON file");
    stats->add_option("--out", out_dir, "output directory");
    stats->add_option("--seed", seed_flag, "master seed override");
    stats->add_option("strategies", stats_strategies,
                      "strategy files or 'baseline' / 'cache-only'")
        ->required();

    CLI::App* validate = cli.add_subcommand("validate", "check a strategy file");
    validate->add_option("--config", config_path,
                         "config JSON file (enables the length-vs-model check)");
    validate->add_option("strategy", validate_path, "strategy JSON file")->required();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return cli.exit(e);
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    try {
        AppConfig app = load_config(config_path);
        if (seed_flag >= 0) app.master_seed = (uint64_t)seed_flag;
        if (workers > 0) app.search.workers = workers;
        if (wm >= 0.0) app.search.latency_weight = wm;
        if (generations > 0) app.search.generations = generations;
        if (population > 0) app.search.population = population;
        derive_seeds(app);

        if (run->parsed()) return cmd_run(app, strategy_arg, out_dir, latency_mode,
                                          want_divergence);
        if (search->parsed()) return cmd_search(app, out_dir);
        if (stats->parsed()) return cmd_stats(app, stats_strategies, out_dir);
        if (validate->parsed())
            return cmd_validate(app, validate_path, !config_path.empty());
    } catch (const std::ios_base::failure& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}

#include "dato/strategy.hpp"

#include <cmath>
#include <fstream>
#include <ios>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dato {

using nlohmann::json;

CacheDepth depth_from_code(int code) {
    if (code <= 0) return CacheDepth::at(0);
    if (code == 1) return CacheDepth::at(1);
    return CacheDepth::full();
}

int depth_to_code(CacheDepth d) {
    if (d.is_full()) return 2;
    return d.value >= 1 ? 1 : 0;
}

double ratio_from_code(int code) {
    if (code < 0) code = 0;
    if (code >= kRatioCount) code = kRatioCount - 1;
    return kRatioSet[code];
}

int ratio_to_code(double ratio) {
    int best = 0;
    double dist = std::fabs(ratio - kRatioSet[0]);
    for (int i = 1; i < kRatioCount; ++i) {
        const double d = std::fabs(ratio - kRatioSet[i]);
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return best;
}

Strategy Strategy::uniform(int timesteps, CacheDepth d, double ratio) {
    Strategy s;
    s.steps.assign(timesteps, StepSetting{d, ratio});
    return s;
}

Strategy Strategy::baseline(int timesteps) {
    return uniform(timesteps, CacheDepth::full(), 0.0);
}

Strategy Strategy::cache_only(int timesteps, int interval) {
    if (interval < 1) throw std::invalid_argument("cache_only: interval must be >= 1");
    Strategy s = uniform(timesteps, CacheDepth::at(0), 0.0);
    for (int t = timesteps - 1; t >= 0; t -= interval)
        s.steps[t].depth = CacheDepth::full();
    return s;
}

namespace {

bool ratio_allowed(double r) {
    if (r == 0.0) return true;
    for (double v : kRatioSet)
        if (std::fabs(r - v) < 1e-9) return true;
    return false;
}

// depth field: 0, 1, "full", or the full-depth alias 12 (the level count of
// the networks these strategies were originally searched for).
bool parse_depth(const json& v, CacheDepth& out) {
    if (v.is_string()) {
        if (v.get<std::string>() == "full") {
            out = CacheDepth::full();
            return true;
        }
        return false;
    }
    if (v.is_number_integer()) {
        const int d = v.get<int>();
        if (d == 12) {
            out = CacheDepth::full();
            return true;
        }
        if (d == 0 || d == 1) {
            out = CacheDepth::at(d);
            return true;
        }
    }
    return false;
}

}  // namespace

ValidationReport validate_strategy_text(const std::string& json_text,
                                        int expected_timesteps) {
    ValidationReport rep;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const std::exception& e) {
        // nlohmann's message carries line/column context.
        rep.errors.push_back(std::string("not valid JSON: ") + e.what());
        return rep;
    }
    if (!doc.is_object() || !doc.contains("timesteps") || !doc.contains("steps")) {
        rep.errors.push_back("expected object with 'timesteps' and 'steps'");
        return rep;
    }
    if (!doc["timesteps"].is_number_integer() || doc["timesteps"].get<int>() < 1) {
        rep.errors.push_back("'timesteps' must be a positive integer");
        return rep;
    }
    const int t_count = doc["timesteps"].get<int>();
    if (t_count > 100000) {
        rep.errors.push_back("'timesteps' unreasonably large: " + std::to_string(t_count));
        return rep;
    }
    if (expected_timesteps > 0 && t_count != expected_timesteps)
        rep.errors.push_back("strategy covers " + std::to_string(t_count) +
                             " timesteps but the model runs " +
                             std::to_string(expected_timesteps));
    if (!doc["steps"].is_array()) {
        rep.errors.push_back("'steps' must be an array");
        return rep;
    }

    std::vector<int> seen(t_count, 0);
    std::vector<CacheDepth> depths(t_count, CacheDepth::full());
    for (const auto& step : doc["steps"]) {
        if (!step.is_object() || !step.contains("t") || !step.contains("cache_depth") ||
            !step.contains("prune_ratio")) {
            rep.errors.push_back("each step needs 't', 'cache_depth', 'prune_ratio'");
            continue;
        }
        if (!step["t"].is_number_integer()) {
            rep.errors.push_back("step 't' must be an integer");
            continue;
        }
        const int t = step["t"].get<int>();
        if (t < 0 || t >= t_count) {
            rep.errors.push_back("step t=" + std::to_string(t) + " out of range");
            continue;
        }
        if (seen[t]++) {
            rep.errors.push_back("step t=" + std::to_string(t) + " appears more than once");
            continue;
        }
        CacheDepth d;
        if (!parse_depth(step["cache_depth"], d))
            rep.errors.push_back("step t=" + std::to_string(t) +
                                 ": cache_depth must be 0, 1 or \"full\"");
        else
            depths[t] = d;
        if (!step["prune_ratio"].is_number()) {
            rep.errors.push_back("step t=" + std::to_string(t) +
                                 ": prune_ratio must be a number");
        } else if (!ratio_allowed(step["prune_ratio"].get<double>())) {
            std::ostringstream os;
            os << "step t=" << t << ": prune_ratio " << step["prune_ratio"].get<double>()
               << " not in {0, 0.3, 0.4, 0.5, 0.6, 0.7}";
            rep.errors.push_back(os.str());
        }
    }
    for (int t = 0; t < t_count; ++t)
        if (!seen[t]) rep.errors.push_back("step t=" + std::to_string(t) + " missing");

    if (rep.ok() && !depths[t_count - 1].is_full())
        rep.warnings.push_back(
            "first executed step (t=" + std::to_string(t_count - 1) +
            ") is not FULL; the runtime forces it to FULL to seed the cache");
    return rep;
}

Strategy parse_strategy(const std::string& json_text, int expected_timesteps) {
    ValidationReport rep = validate_strategy_text(json_text, expected_timesteps);
    if (!rep.ok()) {
        std::string msg = "invalid strategy:";
        for (const auto& e : rep.errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
    const json doc = json::parse(json_text);
    Strategy s;
    s.steps.resize(doc["timesteps"].get<int>());
    for (const auto& step : doc["steps"]) {
        const int t = step["t"].get<int>();
        CacheDepth d;
        parse_depth(step["cache_depth"], d);
        s.steps[t] = StepSetting{d, step["prune_ratio"].get<double>()};
    }
    return s;
}

Strategy load_strategy(const std::string& path, int expected_timesteps) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open strategy file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_strategy(buf.str(), expected_timesteps);
}

std::string strategy_to_json(const Strategy& s) {
    json steps = json::array();
    // t descending = execution order, easier to eyeball.
    for (int t = s.timesteps() - 1; t >= 0; --t) {
        json step;
        step["t"] = t;
        if (s.steps[t].depth.is_full())
            step["cache_depth"] = "full";
        else
            step["cache_depth"] = s.steps[t].depth.value;
        step["prune_ratio"] = s.steps[t].ratio;
        steps.push_back(step);
    }
    json doc;
    doc["timesteps"] = s.timesteps();
    doc["steps"] = steps;
    return doc.dump(2) + "\n";
}

void save_strategy(const Strategy& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write strategy file: " + path);
    out << strategy_to_json(s);
}

}  // namespace dato

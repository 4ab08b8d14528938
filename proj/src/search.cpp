#include "dato/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dato {

using nlohmann::json;

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Per-gene codebook bounds: even genes are depth codes, odd genes ratio codes.
int gene_hi(size_t idx) { return idx % 2 == 0 ? kDepthCount - 1 : kRatioCount - 1; }

int clamp_gene(double v, size_t idx) {
    const int hi = gene_hi(idx);
    const int r = (int)std::lround(v);
    return r < 0 ? 0 : (r > hi ? hi : r);
}

}  // namespace

Genome encode_strategy(const Strategy& s) {
    require(s.timesteps() >= 1, "encode: empty strategy");
    Genome g;
    g.genes.reserve(2 * s.timesteps());
    for (const StepSetting& step : s.steps) {
        g.genes.push_back(depth_to_code(step.depth));
        bool found = false;
        for (int c = 0; c < kRatioCount; ++c)
            if (std::fabs(step.ratio - kRatioSet[c]) < 1e-9) {
                g.genes.push_back(c);
                found = true;
                break;
            }
        require(found, "encode: ratio not in the searched set (pruning-off "
                       "strategies have no genome form)");
    }
    return g;
}

Strategy decode_genome(const Genome& g) {
    require(!g.genes.empty() && g.genes.size() % 2 == 0,
            "decode: genome length must be a positive multiple of 2");
    Strategy s;
    s.steps.resize(g.genes.size() / 2);
    for (size_t t = 0; t < s.steps.size(); ++t) {
        int d = g.genes[2 * t];
        d = d < 0 ? 0 : (d > kDepthCount - 1 ? kDepthCount - 1 : d);
        s.steps[t].depth = depth_from_code(d);
        s.steps[t].ratio = ratio_from_code(g.genes[2 * t + 1]);
    }
    return s;
}

void SearchConfig::validate() const {
    require(population >= 2 && population % 2 == 0, "search: population must be even and >= 2");
    require(generations >= 1, "search: generations must be >= 1");
    require(crossover_prob >= 0.0 && crossover_prob <= 1.0, "search: crossover prob in [0,1]");
    require(mutation_prob >= 0.0 && mutation_prob <= 1.0, "search: mutation prob in [0,1]");
    require(crossover_eta > 0.0 && mutation_eta > 0.0, "search: distribution index must be > 0");
    require(latency_weight >= 0.0, "search: latency weight must be >= 0");
    require(workers >= 1, "search: workers must be >= 1");
}

std::vector<std::vector<int>> non_dominated_sort(const std::vector<Objectives>& objs) {
    const int n = (int)objs.size();
    auto dominates = [&](int a, int b) {
        return objs[a].quality <= objs[b].quality && objs[a].latency <= objs[b].latency &&
               (objs[a].quality < objs[b].quality || objs[a].latency < objs[b].latency);
    };
    std::vector<std::vector<int>> dominated(n);
    std::vector<int> count(n, 0);
    std::vector<std::vector<int>> fronts;
    std::vector<int> current;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(i, j))
                dominated[i].push_back(j);
            else if (dominates(j, i))
                ++count[i];
        }
        if (count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        fronts.push_back(current);
        std::vector<int> next;
        for (int i : current)
            for (int j : dominated[i])
                if (--count[j] == 0) next.push_back(j);
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(const std::vector<Objectives>& front) {
    const int n = (int)front.size();
    require(n >= 1, "crowding_distance: empty front");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) return std::vector<double>(n, inf);

    for (int obj = 0; obj < 2; ++obj) {
        auto value = [&](int i) {
            return obj == 0 ? front[i].quality : front[i].latency;
        };
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (value(a) != value(b)) return value(a) < value(b);
            return a < b;
        });
        dist[order.front()] = inf;
        dist[order.back()] = inf;
        const double range = value(order.back()) - value(order.front());
        if (range <= 0.0) continue;  // 0/0 -> contribute 0
        for (int k = 1; k + 1 < n; ++k) {
            if (std::isinf(dist[order[k]])) continue;
            dist[order[k]] += (value(order[k + 1]) - value(order[k - 1])) / range;
        }
    }
    return dist;
}

std::pair<Genome, Genome> sbx_crossover(const Genome& a, const Genome& b,
                                        double prob, double eta, SeededRng& rng) {
    require(a.genes.size() == b.genes.size(), "sbx: genome length mismatch");
    Genome c1 = a, c2 = b;
    for (size_t i = 0; i < a.genes.size(); ++i) {
        if (rng.next_double() >= prob) continue;
        const double x1 = (double)a.genes[i];
        const double x2 = (double)b.genes[i];
        const double u = rng.next_double();
        const double beta = u <= 0.5
                                ? std::pow(2.0 * u, 1.0 / (eta + 1.0))
                                : std::pow(1.0 / (2.0 * (1.0 - u)), 1.0 / (eta + 1.0));
        c1.genes[i] = clamp_gene(0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2), i);
        c2.genes[i] = clamp_gene(0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2), i);
    }
    return {c1, c2};
}

Genome polynomial_mutation(const Genome& g, double prob, double eta, SeededRng& rng,
                           int* fired) {
    Genome out = g;
    int hits = 0;
    for (size_t i = 0; i < g.genes.size(); ++i) {
        if (rng.next_double() >= prob) continue;
        ++hits;
        const double lo = 0.0, hi = (double)gene_hi(i);
        const double x = (double)g.genes[i];
        const double range = hi - lo;
        if (range <= 0.0) continue;
        const double u = rng.next_double();
        const double mut_pow = 1.0 / (eta + 1.0);
        double deltaq;
        if (u <= 0.5) {
            const double xy = 1.0 - (x - lo) / range;
            const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta + 1.0);
            deltaq = std::pow(val, mut_pow) - 1.0;
        } else {
            const double xy = 1.0 - (hi - x) / range;
            const double val =
                2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(xy, eta + 1.0);
            deltaq = 1.0 - std::pow(val, mut_pow);
        }
        out.genes[i] = clamp_gene(x + deltaq * range, i);
    }
    if (fired) *fired = hits;
    return out;
}

namespace {

Genome random_genome(int timesteps, SeededRng& rng) {
    Genome g;
    g.genes.reserve(2 * timesteps);
    for (int t = 0; t < timesteps; ++t) {
        g.genes.push_back(rng.next_int(kDepthCount));
        g.genes.push_back(rng.next_int(kRatioCount));
    }
    return g;
}

// Alternative operators kept behind SearchConfig::legacy_operators.
std::pair<Genome, Genome> single_point_crossover(const Genome& a, const Genome& b,
                                                 double prob, SeededRng& rng) {
    Genome c1 = a, c2 = b;
    if (rng.next_double() < prob && a.genes.size() > 1) {
        const size_t cut = 1 + (size_t)rng.next_int((int)a.genes.size() - 1);
        for (size_t i = cut; i < a.genes.size(); ++i) std::swap(c1.genes[i], c2.genes[i]);
    }
    return {c1, c2};
}

Genome random_choice_mutation(const Genome& g, double prob, SeededRng& rng) {
    Genome out = g;
    for (size_t i = 0; i < g.genes.size(); ++i)
        if (rng.next_double() < prob) out.genes[i] = rng.next_int(gene_hi(i) + 1);
    return out;
}

struct RankInfo {
    std::vector<int> rank;
    std::vector<double> crowd;
};

RankInfo rank_population(const std::vector<Individual>& pop) {
    std::vector<Objectives> objs(pop.size());
    for (size_t i = 0; i < pop.size(); ++i) objs[i] = pop[i].obj;
    const auto fronts = non_dominated_sort(objs);
    RankInfo info;
    info.rank.assign(pop.size(), 0);
    info.crowd.assign(pop.size(), 0.0);
    for (size_t f = 0; f < fronts.size(); ++f) {
        std::vector<Objectives> front_objs;
        front_objs.reserve(fronts[f].size());
        for (int idx : fronts[f]) front_objs.push_back(objs[idx]);
        const auto dist = crowding_distance(front_objs);
        for (size_t k = 0; k < fronts[f].size(); ++k) {
            info.rank[fronts[f][k]] = (int)f;
            info.crowd[fronts[f][k]] = dist[k];
        }
    }
    return info;
}

int tournament(const RankInfo& info, int a, int b) {
    if (info.rank[a] != info.rank[b]) return info.rank[a] < info.rank[b] ? a : b;
    if (info.crowd[a] != info.crowd[b]) return info.crowd[a] > info.crowd[b] ? a : b;
    return a;
}

bool contains_genome(const std::vector<Individual>& pop, const Genome& g) {
    for (const Individual& ind : pop)
        if (ind.genome == g) return true;
    return false;
}

}  // namespace

SearchResult run_search(const SearchConfig& search, const ModelConfig& model) {
    search.validate();
    model.validate();
    const int pop_size = search.population;
    const int t_count = model.timesteps;

    const StrategyEvaluator evaluator(model, search.eval);
    SeededRng rng(search.master_seed);

    // Evaluation is deterministic per genome and draws nothing from the rng
    // stream, so worker count never changes results; errors are collected and
    // rethrown in order.
    auto evaluate_all = [&](std::vector<Individual>& pop, int generation) {
        std::vector<std::string> errors(pop.size());
#ifdef _OPENMP
        #pragma omp parallel for num_threads(search.workers) schedule(dynamic) \
            if (search.workers > 1)
#endif
        for (int i = 0; i < (int)pop.size(); ++i) {
            try {
                pop[i].obj = evaluator.evaluate(decode_genome(pop[i].genome));
                pop[i].score = evaluator.scalarize(pop[i].obj, search.latency_weight);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
        for (size_t i = 0; i < errors.size(); ++i)
            if (!errors[i].empty())
                throw std::runtime_error("search: evaluation failed at generation " +
                                         std::to_string(generation) + " individual " +
                                         std::to_string(i) + ": " + errors[i]);
    };

    // Initial population: every uniform (depth, ratio) strategy — FULL depths
    // first so the all-FULL baseline is present at any population size — then
    // random genomes.
    std::vector<Individual> pop;
    pop.reserve(pop_size);
    for (int dc = kDepthCount - 1; dc >= 0 && (int)pop.size() < pop_size; --dc)
        for (int rc = 0; rc < kRatioCount && (int)pop.size() < pop_size; ++rc) {
            Individual ind;
            ind.genome = encode_strategy(
                Strategy::uniform(t_count, depth_from_code(dc), ratio_from_code(rc)));
            pop.push_back(std::move(ind));
        }
    while ((int)pop.size() < pop_size) {
        Individual ind;
        ind.genome = random_genome(t_count, rng);
        if (search.eliminate_duplicates && contains_genome(pop, ind.genome)) continue;
        pop.push_back(std::move(ind));
    }

    evaluate_all(pop, 0);

    Individual archive = pop[0];
    for (const Individual& ind : pop)
        if (ind.score < archive.score) archive = ind;

    SearchResult result;
    auto record = [&](int gen) {
        GenerationStats st;
        st.generation = gen;
        st.population = (int)pop.size();
        st.best_score = archive.score;
        std::vector<Objectives> objs(pop.size());
        for (size_t i = 0; i < pop.size(); ++i) objs[i] = pop[i].obj;
        st.front0_size = (int)non_dominated_sort(objs)[0].size();
        double q = 0.0, l = 0.0;
        for (const Individual& ind : pop) {
            q += ind.obj.quality;
            l += ind.obj.latency;
        }
        st.mean_quality = q / (double)pop.size();
        st.mean_latency = l / (double)pop.size();
        result.history.push_back(st);
    };
    record(0);

    for (int gen = 1; gen <= search.generations; ++gen) {
        const RankInfo info = rank_population(pop);

        std::vector<Individual> offspring;
        offspring.reserve(pop_size);
        while ((int)offspring.size() < pop_size) {
            const int p1 = tournament(info, rng.next_int(pop_size), rng.next_int(pop_size));
            const int p2 = tournament(info, rng.next_int(pop_size), rng.next_int(pop_size));
            auto [c1, c2] =
                search.legacy_operators
                    ? single_point_crossover(pop[p1].genome, pop[p2].genome,
                                             search.crossover_prob, rng)
                    : sbx_crossover(pop[p1].genome, pop[p2].genome,
                                    search.crossover_prob, search.crossover_eta, rng);
            for (Genome* child : {&c1, &c2}) {
                if ((int)offspring.size() >= pop_size) break;
                Genome g = search.legacy_operators
                               ? random_choice_mutation(*child, search.mutation_prob, rng)
                               : polynomial_mutation(*child, search.mutation_prob,
                                                     search.mutation_eta, rng);
                if (search.eliminate_duplicates) {
                    int tries = 0;
                    while ((contains_genome(pop, g) || contains_genome(offspring, g)) &&
                           tries++ < 64)
                        g = random_genome(t_count, rng);
                }
                Individual ind;
                ind.genome = std::move(g);
                offspring.push_back(std::move(ind));
            }
        }
        evaluate_all(offspring, gen);

        for (const Individual& ind : offspring)
            if (ind.score < archive.score) archive = ind;

        // Environmental selection over parents + offspring.
        std::vector<Individual> merged;
        merged.reserve(pop.size() + offspring.size());
        for (Individual& ind : pop) merged.push_back(std::move(ind));
        for (Individual& ind : offspring) merged.push_back(std::move(ind));

        std::vector<Objectives> objs(merged.size());
        for (size_t i = 0; i < merged.size(); ++i) objs[i] = merged[i].obj;
        const auto fronts = non_dominated_sort(objs);

        std::vector<Individual> next;
        next.reserve(pop_size);
        for (const auto& front : fronts) {
            if ((int)next.size() >= pop_size) break;
            if ((int)(next.size() + front.size()) <= pop_size) {
                for (int idx : front) next.push_back(std::move(merged[idx]));
                continue;
            }
            std::vector<Objectives> front_objs;
            front_objs.reserve(front.size());
            for (int idx : front) front_objs.push_back(objs[idx]);
            const auto dist = crowding_distance(front_objs);
            std::vector<int> order((int)front.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (dist[a] != dist[b]) return dist[a] > dist[b];
                return front[a] < front[b];
            });
            for (int k : order) {
                if ((int)next.size() >= pop_size) break;
                next.push_back(std::move(merged[front[k]]));
            }
        }
        pop = std::move(next);
        record(gen);
    }

    // Final front 0 of the resulting population.
    std::vector<Objectives> objs(pop.size());
    for (size_t i = 0; i < pop.size(); ++i) objs[i] = pop[i].obj;
    const auto final_fronts = non_dominated_sort(objs);
    for (int idx : final_fronts[0]) result.front.push_back(pop[idx]);
    result.best = archive;
    return result;
}

std::string history_csv(const SearchResult& r) {
    std::string out = "generation,population,best_score,front0_size,mean_quality,mean_latency\n";
    for (const GenerationStats& st : r.history) {
        out += std::to_string(st.generation) + ',' + std::to_string(st.population) +
               ',' + json(st.best_score).dump() + ',' + std::to_string(st.front0_size) +
               ',' + json(st.mean_quality).dump() + ',' + json(st.mean_latency).dump() +
               '\n';
    }
    return out;
}

std::string front_csv(const SearchResult& r) {
    std::string out = "index,quality,latency,score,genes\n";
    for (size_t i = 0; i < r.front.size(); ++i) {
        const Individual& ind = r.front[i];
        std::string genes;
        for (size_t g = 0; g < ind.genome.genes.size(); ++g) {
            if (g) genes += ' ';
            genes += std::to_string(ind.genome.genes[g]);
        }
        out += std::to_string(i) + ',' + json(ind.obj.quality).dump() + ',' +
               json(ind.obj.latency).dump() + ',' + json(ind.score).dump() + ',' +
               genes + '\n';
    }
    return out;
}

}  // namespace dato

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dato/metrics.hpp"
#include "dato/strategy.hpp"

// NSGA-II over per-timestep (cache depth, prune ratio) strategies. Genomes
// are integer vectors of length 2T: even genes hold depth codes, odd genes
// ratio codes. Two objectives (quality, latency), both minimized; a
// scalarized archive tracks the single best individual for reporting.

namespace dato {

struct Genome {
    std::vector<int> genes;

    bool operator==(const Genome& o) const { return genes == o.genes; }
};

Genome encode_strategy(const Strategy& s);
// Clamps out-of-range codes to the nearest codebook value.
Strategy decode_genome(const Genome& g);

struct Individual {
    Genome genome;
    Objectives obj;
    double score = 0.0;  // quality + latency_weight * latency
};

struct GenerationStats {
    int generation = 0;
    int population = 0;
    double best_score = 0.0;  // archive best so far
    int front0_size = 0;
    double mean_quality = 0.0;
    double mean_latency = 0.0;
};

struct SearchConfig {
    int population = 20;
    int generations = 100;
    double crossover_prob = 0.7;
    double crossover_eta = 7.0;
    double mutation_prob = 0.4;
    double mutation_eta = 15.0;
    bool eliminate_duplicates = true;
    double latency_weight = 0.025;  // w_M; 0.16 = latency emphasis preset
    uint64_t master_seed = 1;
    int workers = 1;
    // Alternative operator pair (single-point crossover + random-choice
    // mutation) kept for comparison runs.
    bool legacy_operators = false;
    SampleSettings eval;  // fixed evaluation batch seeds

    void validate() const;
};

struct SearchResult {
    std::vector<Individual> front;  // final non-dominated front
    Individual best;                // archive best by scalarized score
    std::vector<GenerationStats> history;
};

// Fast non-dominated sort; fronts of indices, best front first. Minimization,
// dominate = no worse in both objectives and strictly better in one.
std::vector<std::vector<int>> non_dominated_sort(const std::vector<Objectives>& objs);

// Crowding distance within one front: boundary individuals get +inf, interior
// ones the sum of normalized neighbour gaps per objective. A zero objective
// range contributes 0.
std::vector<double> crowding_distance(const std::vector<Objectives>& front);

// Simulated binary crossover on integer genes: per-gene recombination with
// probability `prob`, distribution index `eta`, children rounded and clamped
// to the per-gene code range.
std::pair<Genome, Genome> sbx_crossover(const Genome& a, const Genome& b,
                                        double prob, double eta, SeededRng& rng);

// Polynomial mutation, per-gene probability `prob`, index `eta`. `fired`
// (optional) receives the number of genes the operator was applied to.
Genome polynomial_mutation(const Genome& g, double prob, double eta, SeededRng& rng,
                           int* fired = nullptr);

SearchResult run_search(const SearchConfig& search, const ModelConfig& model);

// Deterministic serializations (used for artifacts and rerun comparisons).
std::string history_csv(const SearchResult& r);
std::string front_csv(const SearchResult& r);

}  // namespace dato

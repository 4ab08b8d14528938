#pragma once

#include <vector>

#include "dato/blocks.hpp"

// Timestep-aware feature cache. A step running at cache depth d computes
// the blocks below d and serves every block at level >= d from the snapshot
// taken at the last full step. Depth FULL recomputes everything and is the
// only depth allowed to refresh the store.

namespace dato {

struct CacheDepth {
    static constexpr int kFullSentinel = -1;

    int value = kFullSentinel;

    static CacheDepth full() { return CacheDepth{kFullSentinel}; }
    static CacheDepth at(int d);  // d >= 0

    bool is_full() const { return value == kFullSentinel; }
    // True when the block sitting at `level` is served from the cache.
    bool reuses(int level) const { return !is_full() && level >= value; }
    bool operator==(const CacheDepth& o) const { return value == o.value; }
    bool operator!=(const CacheDepth& o) const { return value != o.value; }
};

struct CacheStore {
    int levels = 0;
    bool valid = false;
    int refresh_timestep = -1;
    std::vector<Tensor> entries;  // one per block slot once valid

    CacheStore() = default;
    explicit CacheStore(int levels_) : levels(levels_) {}

    // Replaces the whole snapshot from a fully computed step. All-or-nothing:
    // a partial or cache-derived StepOutputs leaves the store untouched.
    void refresh(const StepOutputs& outs, int timestep);
    const Tensor& fetch(Branch br, int level) const;
    void invalidate();
};

// Which blocks a step at depth d computes. Requires a valid store unless
// d is FULL ("cache-miss" otherwise).
struct ComputePlan {
    std::vector<uint8_t> compute;  // per block slot

    int computed_blocks() const;
    bool computes(Branch br, int level, int levels) const;
};

ComputePlan plan_step(CacheDepth d, int levels, const CacheStore& store);

}  // namespace dato

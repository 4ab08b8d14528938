#include "dato/cache.hpp"

#include <stdexcept>
#include <string>

namespace dato {

CacheDepth CacheDepth::at(int d) {
    if (d < 0) throw std::invalid_argument("cache depth must be >= 0");
    return CacheDepth{d};
}

void CacheStore::refresh(const StepOutputs& outs, int timestep) {
    if (outs.levels != levels)
        throw std::invalid_argument("cache refresh: level count mismatch");
    if (!outs.fully_computed())
        throw std::runtime_error("partial-refresh: refresh requires every block freshly computed");
    // Build a complete replacement first so a throw can never leave a
    // half-written snapshot behind.
    std::vector<Tensor> next(outs.blocks.begin(), outs.blocks.end());
    entries.swap(next);
    refresh_timestep = timestep;
    valid = true;
}

const Tensor& CacheStore::fetch(Branch br, int level) const {
    if (!valid) throw std::runtime_error("cache-miss: fetch from invalid store");
    const int s = block_slot(br, level, levels);
    return entries[s];
}

void CacheStore::invalidate() {
    entries.clear();
    valid = false;
    refresh_timestep = -1;
}

int ComputePlan::computed_blocks() const {
    int n = 0;
    for (uint8_t c : compute)
        if (c) ++n;
    return n;
}

bool ComputePlan::computes(Branch br, int level, int levels) const {
    return compute[block_slot(br, level, levels)] != 0;
}

ComputePlan plan_step(CacheDepth d, int levels, const CacheStore& store) {
    if (levels < 1) throw std::invalid_argument("plan_step: levels must be >= 1");
    if (!d.is_full() && !store.valid)
        throw std::runtime_error("cache-miss: partial step planned with no valid cache");
    ComputePlan plan;
    plan.compute.assign(block_count(levels), 0);
    for (int l = 0; l < levels; ++l) {
        plan.compute[block_slot(Branch::down, l, levels)] = d.reuses(l) ? 0 : 1;
        plan.compute[block_slot(Branch::up, l, levels)] = d.reuses(l) ? 0 : 1;
    }
    plan.compute[block_slot(Branch::mid, levels, levels)] = d.reuses(levels) ? 0 : 1;
    return plan;
}

}  // namespace dato

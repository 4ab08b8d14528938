#pragma once

#include <vector>

#include "dato/tensor.hpp"

// Block layout shared by the denoiser and the feature cache. With L levels
// the denoiser runs 2L+1 blocks per step, in execution order
//   down 0 .. down L-1, mid, up L-1 .. up 0
// and every block is addressed by (branch, level). The mid block sits at
// level L so the "reuse everything at level >= d" rule covers it naturally.

namespace dato {

enum class Branch { down, mid, up };

// Slot index in execution order.
int block_slot(Branch br, int level, int levels);
int block_count(int levels);  // 2L+1
// Level threshold used by depth comparisons: mid counts as level L.
int block_level(Branch br, int level, int levels);
const char* branch_name(Branch br);

// Token outputs of one denoiser pass, one entry per block slot. A partial
// step stores the blocks it computed plus the entries it served from the
// cache (flagged from_cache); a full step stores all 2L+1 computed blocks.
struct StepOutputs {
    int levels = 0;
    std::vector<Tensor> blocks;
    std::vector<uint8_t> present;
    std::vector<uint8_t> from_cache;

    StepOutputs() = default;
    explicit StepOutputs(int levels_);

    void put(Branch br, int level, Tensor value, bool cached);
    bool has(Branch br, int level) const;
    const Tensor& block(Branch br, int level) const;  // throws if absent
    const Tensor& f0_up() const { return block(Branch::up, 0); }

    bool complete() const;         // every slot present
    bool fully_computed() const;   // complete and nothing from the cache
    int computed_blocks() const;
};

}  // namespace dato

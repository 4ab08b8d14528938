#include "dato/blocks.hpp"

#include <stdexcept>
#include <string>

namespace dato {

int block_count(int levels) { return 2 * levels + 1; }

int block_slot(Branch br, int level, int levels) {
    if (br == Branch::mid) {
        if (level != levels) throw std::invalid_argument("block_slot: mid level must equal L");
        return levels;
    }
    if (level < 0 || level >= levels)
        throw std::invalid_argument("block_slot: level out of range: " + std::to_string(level));
    if (br == Branch::down) return level;
    return 2 * levels - level;  // up L-1 .. up 0 -> L+1 .. 2L
}

int block_level(Branch br, int level, int levels) {
    return br == Branch::mid ? levels : level;
}

const char* branch_name(Branch br) {
    switch (br) {
        case Branch::down: return "down";
        case Branch::mid: return "mid";
        default: return "up";
    }
}

StepOutputs::StepOutputs(int levels_)
    : levels(levels_),
      blocks(block_count(levels_)),
      present(block_count(levels_), 0),
      from_cache(block_count(levels_), 0) {}

void StepOutputs::put(Branch br, int level, Tensor value, bool cached) {
    const int s = block_slot(br, level, levels);
    blocks[s] = std::move(value);
    present[s] = 1;
    from_cache[s] = cached ? 1 : 0;
}

bool StepOutputs::has(Branch br, int level) const {
    return present[block_slot(br, level, levels)] != 0;
}

const Tensor& StepOutputs::block(Branch br, int level) const {
    const int s = block_slot(br, level, levels);
    if (!present[s])
        throw std::runtime_error(std::string("step outputs: block absent: ") +
                                 branch_name(br) + " " + std::to_string(level));
    return blocks[s];
}

bool StepOutputs::complete() const {
    for (uint8_t p : present)
        if (!p) return false;
    return true;
}

bool StepOutputs::fully_computed() const {
    if (!complete()) return false;
    for (uint8_t c : from_cache)
        if (c) return false;
    return true;
}

int StepOutputs::computed_blocks() const {
    int n = 0;
    for (size_t i = 0; i < present.size(); ++i)
        if (present[i] && !from_cache[i]) ++n;
    return n;
}

}  // namespace dato

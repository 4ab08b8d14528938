#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dato/tensor.hpp"

// Dynamics-aware token pruning. Two consecutive level-0 feature maps give a
// per-position change score; each s*s patch contributes its strongest token
// as a base, the K most base-similar remaining tokens are dropped before
// attention, and their outputs are recovered by copying from the base they
// were assigned to. All tie-breaks pick the smallest flat token index.

namespace dato {

struct PruneConfig {
    int patch_size = 2;
    double ratio = 0.0;      // fraction of tokens pruned; 0 disables
    bool align_cfg = false;  // mirror base indices across CFG batch halves
};

// Per-batch-item pruning decisions for one attention site.
struct PruneMap {
    int batch = 0;
    int tokens = 0;
    std::vector<std::vector<int>> base;    // patch-major base token indices
    std::vector<std::vector<int>> pruned;  // ascending pruned token indices
    std::vector<std::vector<int>> assign;  // base index for each pruned entry
};

// Mean absolute channel difference of two (B,C,H,W) feature maps -> (B,H,W).
Tensor diff_score(const Tensor& prev2, const Tensor& prev1,
                  kernels::Exec e = kernels::Exec::Auto);

// One base per s*s patch: the patch argmax of the score grid (B,H,W),
// ties to the smallest flat index. Patch-major order, per batch item.
std::vector<std::vector<int>> select_base_tokens(const Tensor& scores, int patch_size);

// Copies the base rows of the conditional half onto the unconditional half
// (rows [B/2, B) take the bases of rows [0, B/2)).
void align_cfg_base(std::vector<std::vector<int>>& base);

// Number of tokens pruned at the given ratio, capped so that base tokens
// can never be pruned.
int prune_count(double ratio, int tokens, int patch_size);

// Scores every non-base token by its best cosine similarity against the
// bases of the same batch item, prunes the top K, and assigns each pruned
// token to its most similar base. tokens is (B,N,C).
PruneMap select_pruned_tokens(const Tensor& tokens,
                              const std::vector<std::vector<int>>& base, int k,
                              kernels::Exec e = kernels::Exec::Auto);

// Gathers the kept rows (original order). Returns the kept tokens (B,N-K,C)
// and the kept flat indices per batch item.
std::pair<Tensor, std::vector<std::vector<int>>> apply_prune(const Tensor& tokens,
                                                             const PruneMap& map);

// Scatters attention outputs back to all N positions; every pruned position
// receives a bit-exact copy of its assigned base's output row.
Tensor recover_pruned(const Tensor& attn_out, const PruneMap& map);

// Debug dump: per-token CSV (item,row,col,score,role,assigned_base).
void dump_prune_debug(const Tensor& scores, const PruneMap& map,
                      const std::string& path);

}  // namespace dato

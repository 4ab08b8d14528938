#include "dato/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ios>
#include <stdexcept>

namespace dato {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor diff_score(const Tensor& prev2, const Tensor& prev1, kernels::Exec e) {
    require(prev2.shape.rank() == 4 && prev1.shape.rank() == 4,
            "diff_score: rank-4 feature maps required");
    require(prev2.shape == prev1.shape, "diff_score: shape mismatch " +
                                            prev2.shape.str() + " vs " + prev1.shape.str());
    const int b = prev2.shape[0], c = prev2.shape[1];
    const int h = prev2.shape[2], w = prev2.shape[3];
    Tensor out(Shape{b, h, w});
    kernels::channel_mean_abs_diff(prev2.ptr(), prev1.ptr(), out.ptr(), b, c, h * w, e);
    return out;
}

std::vector<std::vector<int>> select_base_tokens(const Tensor& scores, int patch_size) {
    require(scores.shape.rank() == 3, "select_base_tokens: rank-3 score grid required");
    require(patch_size >= 1, "select_base_tokens: patch size must be >= 1");
    const int b = scores.shape[0], h = scores.shape[1], w = scores.shape[2];
    require(h % patch_size == 0 && w % patch_size == 0,
            "select_base_tokens: grid " + scores.shape.str() +
                " not divisible by patch size " + std::to_string(patch_size));

    std::vector<std::vector<int>> base(b);
    for (int bi = 0; bi < b; ++bi) {
        base[bi].reserve((size_t)(h / patch_size) * (w / patch_size));
        for (int pi = 0; pi < h; pi += patch_size)
            for (int pj = 0; pj < w; pj += patch_size) {
                int arg = -1;
                double best = 0.0;
                // Ascending flat order, strict > keeps the smallest index on ties.
                for (int i = pi; i < pi + patch_size; ++i)
                    for (int j = pj; j < pj + patch_size; ++j) {
                        const double v = scores.at3(bi, i, j);
                        if (arg < 0 || v > best) {
                            best = v;
                            arg = i * w + j;
                        }
                    }
                base[bi].push_back(arg);
            }
    }
    return base;
}

void align_cfg_base(std::vector<std::vector<int>>& base) {
    const int b = (int)base.size();
    require(b > 0 && b % 2 == 0,
            "align_cfg_base: batch must be even, got " + std::to_string(b));
    for (int k = 0; k < b / 2; ++k) base[b / 2 + k] = base[k];
}

int prune_count(double ratio, int tokens, int patch_size) {
    require(ratio >= 0.0 && ratio < 1.0, "prune_count: ratio must be in [0,1)");
    require(tokens >= 1 && patch_size >= 1, "prune_count: bad token/patch count");
    const int bases = tokens / (patch_size * patch_size);
    const int cap = tokens - bases;
    const int k = (int)std::floor(ratio * (double)tokens);
    return k > cap ? cap : k;
}

PruneMap select_pruned_tokens(const Tensor& tokens,
                              const std::vector<std::vector<int>>& base, int k,
                              kernels::Exec e) {
    require(tokens.shape.rank() == 3, "select_pruned_tokens: rank-3 tokens required");
    const int b = tokens.shape[0], n = tokens.shape[1], c = tokens.shape[2];
    require((int)base.size() == b, "select_pruned_tokens: base batch mismatch");
    require(k >= 0, "select_pruned_tokens: negative prune count");

    PruneMap map;
    map.batch = b;
    map.tokens = n;
    map.base = base;
    map.pruned.resize(b);
    map.assign.resize(b);

    std::vector<double> score(n);
    std::vector<int> best_base(n);
    std::vector<char> is_base(n);
    std::vector<int> order;

    for (int bi = 0; bi < b; ++bi) {
        const auto& bases = base[bi];
        require(!bases.empty(), "select_pruned_tokens: empty base set");
        std::fill(is_base.begin(), is_base.end(), 0);
        for (int idx : bases) {
            require(idx >= 0 && idx < n, "select_pruned_tokens: base index out of range");
            is_base[idx] = 1;
        }
        require(k <= n - (int)bases.size(),
                "select_pruned_tokens: prune count exceeds non-base tokens");

        kernels::cosine_best_match(tokens.ptr() + (size_t)bi * n * c, n, c,
                                   bases.data(), (int)bases.size(), score.data(),
                                   best_base.data(), e);

        order.clear();
        for (int i = 0; i < n; ++i)
            if (!is_base[i]) order.push_back(i);
        // Highest similarity first; equal scores fall back to smallest index.
        std::sort(order.begin(), order.end(), [&](int a, int b2) {
            if (score[a] != score[b2]) return score[a] > score[b2];
            return a < b2;
        });

        std::vector<int> pruned(order.begin(), order.begin() + k);
        std::sort(pruned.begin(), pruned.end());
        map.pruned[bi] = pruned;
        map.assign[bi].reserve(k);
        for (int idx : pruned) map.assign[bi].push_back(best_base[idx]);
    }
    return map;
}

std::pair<Tensor, std::vector<std::vector<int>>> apply_prune(const Tensor& tokens,
                                                             const PruneMap& map) {
    require(tokens.shape.rank() == 3, "apply_prune: rank-3 tokens required");
    const int b = tokens.shape[0], n = tokens.shape[1], c = tokens.shape[2];
    require(map.batch == b && map.tokens == n, "apply_prune: map does not match tokens");
    const int k = map.pruned.empty() ? 0 : (int)map.pruned[0].size();
    for (const auto& p : map.pruned)
        require((int)p.size() == k, "apply_prune: ragged prune counts");

    Tensor kept(Shape{b, n - k, c});
    std::vector<std::vector<int>> kept_idx(b);
    for (int bi = 0; bi < b; ++bi) {
        const auto& pruned = map.pruned[bi];  // ascending
        auto& keep = kept_idx[bi];
        keep.reserve(n - k);
        size_t pi = 0;
        for (int i = 0; i < n; ++i) {
            if (pi < pruned.size() && pruned[pi] == i) {
                ++pi;
                continue;
            }
            keep.push_back(i);
        }
        for (int r = 0; r < n - k; ++r)
            std::memcpy(&kept.at3(bi, r, 0),
                        tokens.ptr() + ((size_t)bi * n + keep[r]) * c,
                        (size_t)c * sizeof(double));
    }
    return {std::move(kept), std::move(kept_idx)};
}

Tensor recover_pruned(const Tensor& attn_out, const PruneMap& map) {
    require(attn_out.shape.rank() == 3, "recover_pruned: rank-3 input required");
    const int b = attn_out.shape[0], c = attn_out.shape[2];
    require(map.batch == b, "recover_pruned: map batch mismatch");
    const int n = map.tokens;
    const int k = map.pruned.empty() ? 0 : (int)map.pruned[0].size();
    require(attn_out.shape[1] == n - k, "recover_pruned: kept-token count mismatch");

    Tensor out(Shape{b, n, c});
    for (int bi = 0; bi < b; ++bi) {
        const auto& pruned = map.pruned[bi];
        size_t pi = 0;
        int r = 0;
        for (int i = 0; i < n; ++i) {
            if (pi < pruned.size() && pruned[pi] == i) {
                ++pi;
                continue;
            }
            std::memcpy(&out.at3(bi, i, 0),
                        attn_out.ptr() + ((size_t)bi * (n - k) + r) * c,
                        (size_t)c * sizeof(double));
            ++r;
        }
        // Pruned rows take a verbatim copy of their assigned base's output.
        for (size_t pj = 0; pj < pruned.size(); ++pj) {
            const int src = map.assign[bi][pj];
            require(src >= 0 && src < n, "recover_pruned: assignment out of range");
            std::memcpy(&out.at3(bi, pruned[pj], 0), &out.at3(bi, src, 0),
                        (size_t)c * sizeof(double));
        }
    }
    return out;
}

void dump_prune_debug(const Tensor& scores, const PruneMap& map,
                      const std::string& path) {
    require(scores.shape.rank() == 3, "dump_prune_debug: rank-3 score grid required");
    const int b = scores.shape[0], h = scores.shape[1], w = scores.shape[2];
    require(map.batch == b && map.tokens == h * w, "dump_prune_debug: map mismatch");

    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("dump_prune_debug: cannot open " + path);
    out << "item,row,col,score,role,assigned_base\n";
    std::vector<char> role(h * w);
    std::vector<int> assigned(h * w);
    for (int bi = 0; bi < b; ++bi) {
        std::fill(role.begin(), role.end(), 'k');
        std::fill(assigned.begin(), assigned.end(), -1);
        for (int idx : map.base[bi]) role[idx] = 'b';
        for (size_t j = 0; j < map.pruned[bi].size(); ++j) {
            role[map.pruned[bi][j]] = 'p';
            assigned[map.pruned[bi][j]] = map.assign[bi][j];
        }
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const int idx = i * w + j;
                const char* name = role[idx] == 'b'   ? "base"
                                   : role[idx] == 'p' ? "pruned"
                                                      : "kept";
                out << bi << ',' << i << ',' << j << ',' << scores.at3(bi, i, j)
                    << ',' << name << ',' << assigned[idx] << '\n';
            }
    }
}

}  // namespace dato

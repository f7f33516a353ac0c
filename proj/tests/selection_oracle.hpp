#pragma once

// Literal transcription of the token-selection procedure, independent of the
// library implementation: full sorts and plain sets, one formula at a time.

#include <set>

#include "clift/selection.hpp"

namespace oracles {

inline std::vector<int> oracle_select(const clift::Camera& target,
                                      const clift::SelectionCandidates& cand,
                                      const std::vector<uint8_t>* prev_mask,
                                      const clift::Tensor<double>* prev_obj,
                                      const clift::SelectionConfig& cfg, int budget) {
    using clift::Tensor;
    const auto rays = clift::expanded_patch_rays(target, cfg.grid, cfg.margin);
    const int p = static_cast<int>(rays.size());
    const int n = static_cast<int>(cand.count());

    std::vector<std::vector<double>> d(static_cast<size_t>(p),
                                       std::vector<double>(static_cast<size_t>(n)));
    for (int i = 0; i < p; ++i)
        for (int k = 0; k < n; ++k) {
            double dot = rays[static_cast<size_t>(i)].dir.dot(cand.dirs[static_cast<size_t>(k)]);
            dot = std::max(-1.0, std::min(1.0, dot));
            const double theta = std::acos(dot);
            const double delta = (target.center() - cand.origins[static_cast<size_t>(k)]).norm();
            const double m = prev_mask ? (*prev_mask)[static_cast<size_t>(k)] : 0.0;
            double v = cfg.w_angle * theta + cfg.w_dist * delta + cfg.w_mask * m;
            if (prev_obj) v = (1 - cfg.momentum) * v + cfg.momentum * prev_obj->at(i, k);
            d[static_cast<size_t>(i)][static_cast<size_t>(k)] = v;
        }

    // per-patch top-n, ties to the lowest token index
    const int per = std::max(1, budget / p);
    std::set<int> unioned;
    for (int i = 0; i < p; ++i) {
        std::vector<int> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return d[static_cast<size_t>(i)][static_cast<size_t>(a)] <
                   d[static_cast<size_t>(i)][static_cast<size_t>(b)];
        });
        for (int t = 0; t < std::min(per, n); ++t) unioned.insert(idx[static_cast<size_t>(t)]);
    }

    // min-over-patches distance per candidate
    std::vector<double> dmin(static_cast<size_t>(n), 1e300);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < p; ++i)
            dmin[static_cast<size_t>(k)] = std::min(dmin[static_cast<size_t>(k)],
                                                    d[static_cast<size_t>(i)][static_cast<size_t>(k)]);
    auto cmp = [&](int a, int b) {
        if (dmin[static_cast<size_t>(a)] != dmin[static_cast<size_t>(b)])
            return dmin[static_cast<size_t>(a)] < dmin[static_cast<size_t>(b)];
        return a < b;
    };

    std::vector<int> result(unioned.begin(), unioned.end());
    const int want = std::min(budget, n);
    if (static_cast<int>(result.size()) > want) {  // over budget: min-distance trim
        std::sort(result.begin(), result.end(), cmp);
        result.resize(static_cast<size_t>(want));
    } else if (static_cast<int>(result.size()) < want) {  // under: global fallback
        std::vector<int> rest;
        for (int k = 0; k < n; ++k)
            if (!unioned.count(k)) rest.push_back(k);
        std::sort(rest.begin(), rest.end(), cmp);
        for (int k : rest) {
            if (static_cast<int>(result.size()) >= want) break;
            result.push_back(k);
        }
    }
    std::sort(result.begin(), result.end());
    return result;
}

}  // namespace oracles

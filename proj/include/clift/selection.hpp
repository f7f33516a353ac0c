#pragma once

#include <algorithm>
#include <numeric>

#include "clift/condenser.hpp"

namespace clift {

struct SelectionConfig {
    double w_angle = 1.0;
    double w_dist = 0.02;
    double w_mask = -0.03;
    double momentum = 0.5;  // mixes the previous frame's objective in
    int grid = 16;
    int margin = 4;

    int expanded_cells() const { return (grid + 2 * margin) * (grid + 2 * margin); }

    void validate() const {
        if (grid <= 0 || margin < 0) throw std::invalid_argument("selection: bad grid/margin");
        if (momentum < 0 || momentum >= 1) throw std::invalid_argument("selection: momentum must be in [0,1)");
    }
};

// Cross-frame state for trajectory rendering: the previous objective matrix
// (momentum) and the previous frame's selected-token mask.
struct SelectionState {
    Tensor<double> prev_obj;         // P x N
    std::vector<uint8_t> prev_mask;  // N
    bool has_prev = false;

    void reset() {
        has_prev = false;
        prev_mask.clear();
    }
};

struct SelectionCandidates {
    std::vector<Vec3> dirs;     // unit ray direction per token
    std::vector<Vec3> origins;  // source-view camera center per token

    size_t count() const { return dirs.size(); }
};

template <class T>
SelectionCandidates selection_candidates(const CLiFTSet<T>& set) {
    SelectionCandidates c;
    for (size_t i = 0; i < set.count(); ++i) {
        c.dirs.push_back(set.rays[i].dir);
        c.origins.push_back(set.source_origins[i]);
    }
    return c;
}

// Frame distance between every expanded target patch ray and every candidate:
//   D = w_angle * theta + w_dist * delta + w_mask * m
// theta: angle between the patch ray and the token ray; delta: distance from
// the target camera center to the token's source camera center; m: previous
// frame selection mask. With state present, the momentum-mixed value is
// stored back as the new previous objective.
inline Tensor<double> selection_score(const Camera& target, const SelectionCandidates& cand,
                                      SelectionState* state, const SelectionConfig& cfg) {
    cfg.validate();
    if (cand.count() == 0) throw std::invalid_argument("selection: no candidates");
    const auto patch_rays = expanded_patch_rays(target, cfg.grid, cfg.margin);
    const int p = static_cast<int>(patch_rays.size());
    const int n = static_cast<int>(cand.count());
    const Vec3 ot = target.center();

    std::vector<double> delta(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) delta[static_cast<size_t>(k)] = (ot - cand.origins[static_cast<size_t>(k)]).norm();

    const bool use_prev = state && state->has_prev;
    if (use_prev && (state->prev_obj.rows() != p || state->prev_obj.cols() != n ||
                     state->prev_mask.size() != static_cast<size_t>(n)))
        throw std::invalid_argument("selection: state size does not match the candidate pool");

    Tensor<double> d(p, n);
    for (int i = 0; i < p; ++i) {
        const Vec3 di = patch_rays[static_cast<size_t>(i)].dir;
        double* row = d.row_ptr(i);
        for (int k = 0; k < n; ++k) {
            double c = di.dot(cand.dirs[static_cast<size_t>(k)]);
            c = std::min(1.0, std::max(-1.0, c));
            const double theta = std::acos(c);
            const double m = use_prev ? static_cast<double>(state->prev_mask[static_cast<size_t>(k)]) : 0.0;
            double score = cfg.w_angle * theta + cfg.w_dist * delta[static_cast<size_t>(k)] +
                           cfg.w_mask * m;
            if (use_prev) score = (1.0 - cfg.momentum) * score + cfg.momentum * state->prev_obj.at(i, k);
            row[k] = score;
        }
    }
    if (state) {
        state->prev_obj = d;
        state->has_prev = true;
        if (state->prev_mask.size() != static_cast<size_t>(n))
            state->prev_mask.assign(static_cast<size_t>(n), 0);
    }
    return d;
}

// Budgeted greedy selection:
//   1. each expanded patch nominates its top-n candidates, n = T // patches,
//      clamped to at least 1;
//   2. nominations are deduplicated;
//   3. over budget: keep the T tokens with the smallest min-over-patches
//      distance; under budget: top up from the others by that same distance.
// All orderings break ties toward the lower token index. Returns unique
// indices ordered by ascending min-distance, min(T, pool) of them. When a
// state is carried, its mask is updated to the returned selection.
inline std::vector<int> select_tokens(const Camera& target, const SelectionCandidates& cand,
                                      SelectionState* state, const SelectionConfig& cfg,
                                      int budget) {
    if (budget < 1) throw std::invalid_argument("selection: budget must be at least 1");
    const Tensor<double> d = selection_score(target, cand, state, cfg);
    const int p = d.rows(), n = d.cols();

    std::vector<double> best(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    for (int i = 0; i < p; ++i) {
        const double* row = d.row_ptr(i);
        for (int k = 0; k < n; ++k)
            if (row[k] < best[static_cast<size_t>(k)]) best[static_cast<size_t>(k)] = row[k];
    }
    auto by_best = [&best](int a, int b) {
        if (best[static_cast<size_t>(a)] != best[static_cast<size_t>(b)])
            return best[static_cast<size_t>(a)] < best[static_cast<size_t>(b)];
        return a < b;
    };

    const int per_patch = std::max(1, budget / p);
    std::vector<uint8_t> chosen(static_cast<size_t>(n), 0);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < p; ++i) {
        const double* row = d.row_ptr(i);
        std::iota(order.begin(), order.end(), 0);
        const int take = std::min(per_patch, n);
        std::partial_sort(order.begin(), order.begin() + take, order.end(), [row](int a, int b) {
            if (row[a] != row[b]) return row[a] < row[b];
            return a < b;
        });
        for (int t = 0; t < take; ++t) chosen[static_cast<size_t>(order[t])] = 1;
    }

    std::vector<int> picked;
    for (int k = 0; k < n; ++k)
        if (chosen[static_cast<size_t>(k)]) picked.push_back(k);

    const int want = std::min(budget, n);
    if (static_cast<int>(picked.size()) > want) {
        std::sort(picked.begin(), picked.end(), by_best);
        picked.resize(static_cast<size_t>(want));
    } else if (static_cast<int>(picked.size()) < want) {
        std::vector<int> rest;
        for (int k = 0; k < n; ++k)
            if (!chosen[static_cast<size_t>(k)]) rest.push_back(k);
        std::sort(rest.begin(), rest.end(), by_best);
        picked.insert(picked.end(), rest.begin(), rest.begin() + (want - picked.size()));
    }
    std::sort(picked.begin(), picked.end(), by_best);

    if (state) {
        state->prev_mask.assign(static_cast<size_t>(n), 0);
        for (int k : picked) state->prev_mask[static_cast<size_t>(k)] = 1;
    }
    return picked;
}

}  // namespace clift

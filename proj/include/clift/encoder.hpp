#pragma once

#include "clift/nn.hpp"
#include "clift/scene.hpp"

namespace clift {

// Light-field tokens: one embedding per 8x8 patch across all input views,
// each anchored to the ray through its patch center.
template <class T>
struct LiFTSet {
    Tensor<T> emb;  // N x D
    std::vector<PluckerRay> rays;
    std::vector<int> source_view;
    std::vector<Vec3> source_origins;  // camera center of the source view

    size_t count() const { return rays.size(); }

    void check_consistent() const {
        if (rays.size() != source_view.size() || rays.size() != source_origins.size() ||
            static_cast<int>(rays.size()) != emb.rows())
            throw std::logic_error("LiFT set rows/rays/view counts disagree");
    }
};

// Patch vectors of every view stacked in view order: (sum of H/8*W/8) x 576.
inline Tensor<float> build_patch_matrix(const std::vector<const View*>& views) {
    if (views.empty()) throw std::invalid_argument("need at least one view");
    std::vector<Tensor<float>> per_view;
    int total = 0;
    for (const View* v : views) {
        if (v->image.width != views[0]->image.width || v->image.height != views[0]->image.height)
            throw std::invalid_argument("views must share one resolution");
        per_view.push_back(patchify(v->image.view(), v->cam));
        total += per_view.back().rows();
    }
    Tensor<float> out(total, kPatchVecWidth);
    int row = 0;
    for (const auto& t : per_view) {
        std::copy(t.data.begin(), t.data.end(), out.row_ptr(row));
        row += t.rows();
    }
    return out;
}

// Per-token anchor rays, source view ids and camera centers, matching the
// row order of build_patch_matrix.
template <class T>
void fill_lift_metadata(LiFTSet<T>& set, const std::vector<const View*>& views) {
    set.rays.clear();
    set.source_view.clear();
    set.source_origins.clear();
    for (size_t vi = 0; vi < views.size(); ++vi) {
        auto rays = patch_center_rays(views[vi]->cam);
        for (const auto& r : rays) {
            set.rays.push_back(r);
            set.source_view.push_back(static_cast<int>(vi));
            set.source_origins.push_back(views[vi]->cam.center());
        }
    }
}

// Multi-view transformer encoder. Position information is carried entirely
// by the Plucker channels inside the patch vectors; there is no learned
// positional embedding, so the token axis behaves as a set.
template <class T>
struct Encoder {
    Linear<T> embed;
    std::vector<EncoderBlock<T>> blocks;

    Encoder() = default;
    Encoder(ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng) {
        embed = Linear<T>(ps, "encoder.embed", kPatchVecWidth, cfg.dim, rng);
        for (int b = 0; b < cfg.encoder_blocks; ++b)
            blocks.emplace_back(ps, "encoder.block" + std::to_string(b), cfg.dim, cfg.heads,
                                cfg.ffn_mult, rng);
    }

    // N x 576 patch vectors -> N x D tokens.
    Var<T> forward_tokens(const Var<T>& patch_vecs) const {
        Var<T> x = embed(patch_vecs);
        for (const auto& b : blocks) x = b(x);
        return x;
    }
};

inline std::vector<const View*> select_views(const Scene& scene, const std::vector<int>& idx) {
    std::vector<const View*> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(&scene.view(i));
    return out;
}

// Inference-path encode: runs the encoder over the given views and returns
// token embeddings plus their ray anchors.
template <class T>
LiFTSet<T> encode(const Encoder<T>& enc, const std::vector<const View*>& views) {
    auto patches = build_patch_matrix(views);
    const Var<T> x = Var<T>::constant(patches.template cast<T>());
    LiFTSet<T> set;
    set.emb = enc.forward_tokens(x).value();
    fill_lift_metadata(set, views);
    set.check_consistent();
    return set;
}

}  // namespace clift

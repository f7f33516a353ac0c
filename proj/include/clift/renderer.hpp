#pragma once

#include <unordered_set>

#include "clift/condenser.hpp"

namespace clift {

// Decoder block, post-norm throughout:
//   x = LN(x + SA(x));  x = LN(x + CA(x, tokens));  x = LN(x + FFN(x))
template <class T>
struct RendererBlock {
    Mha<T> sa, ca;
    LayerNormMod<T> ln1, ln2, ln3;
    Ffn<T> ffn;

    RendererBlock() = default;
    RendererBlock(ParamStore<T>& ps, const std::string& name, int dim, int heads, int ffn_mult,
                  Rng& rng)
        : sa(ps, name + ".sa", dim, heads, rng),
          ca(ps, name + ".ca", dim, heads, rng),
          ln1(ps, name + ".ln1", dim),
          ln2(ps, name + ".ln2", dim),
          ln3(ps, name + ".ln3", dim),
          ffn(ps, name + ".ffn", dim, dim * ffn_mult, rng) {}

    Var<T> operator()(const Var<T>& x_in, const Var<T>& kv) const {
        Var<T> x = ln1(add(x_in, sa(x_in, x_in, x_in)));
        x = ln2(add(x, ca(x, kv, kv)));
        return ln3(add(x, ffn(x)));
    }
};

// Budget-adaptive renderer: query tokens come from the target view's Plucker
// grid; the supplied scene tokens enter only through cross-attention, so any
// token count works with one set of weights.
template <class T>
struct Renderer {
    Linear<T> query_proj;  // 384 -> D
    std::vector<RendererBlock<T>> blocks;
    Linear<T> head;  // D -> 192

    Renderer() = default;
    Renderer(ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng) {
        query_proj = Linear<T>(ps, "renderer.query_proj", kQueryVecWidth, cfg.dim, rng);
        for (int b = 0; b < cfg.renderer_blocks; ++b)
            blocks.emplace_back(ps, "renderer.block" + std::to_string(b), cfg.dim, cfg.heads,
                                cfg.ffn_mult, rng);
        head = Linear<T>(ps, "renderer.head", cfg.dim, kRgbVecWidth, rng);
    }

    // query_vecs: P x 384, tokens: N_r x D. Returns P x 192 in (0,1).
    Var<T> forward_tokens(const Var<T>& query_vecs, const Var<T>& tokens) const {
        if (tokens.value().rows() < 1) throw std::invalid_argument("render: zero tokens supplied");
        Var<T> x = query_proj(query_vecs);
        for (const auto& b : blocks) x = b(x, tokens);
        return sigmoid(head(x));
    }
};

namespace detail {

template <class T>
void check_tokens_unique(const Tensor<T>& emb, const std::vector<PluckerRay>& rays) {
    std::unordered_set<std::string> seen;
    for (int i = 0; i < emb.rows(); ++i) {
        std::string key(reinterpret_cast<const char*>(emb.row_ptr(i)), sizeof(T) * emb.cols());
        key.append(reinterpret_cast<const char*>(&rays[static_cast<size_t>(i)]), sizeof(PluckerRay));
        if (!seen.insert(std::move(key)).second)
            throw std::invalid_argument("render: duplicate token at row " + std::to_string(i) +
                                        "; supplied tokens must be unique");
    }
}

}  // namespace detail

// Full-image render of a target view from a token subset.
template <class T>
Image render_view(const Renderer<T>& rend, const Camera& target, const Tensor<T>& token_emb,
                  const std::vector<PluckerRay>& token_rays) {
    if (token_emb.rows() < 1) throw std::invalid_argument("render: zero tokens supplied");
    if (static_cast<size_t>(token_emb.rows()) != token_rays.size())
        throw std::invalid_argument("render: token embedding/ray count mismatch");
    detail::check_tokens_unique(token_emb, token_rays);
    auto queries = query_grid(target);
    Var<T> out = rend.forward_tokens(Var<T>::constant(queries.template cast<T>()),
                                     Var<T>::constant(token_emb));
    auto rgb = unpatchify(out.value().template cast<float>(), target.width, target.height);
    Image img(target.width, target.height);
    img.rgb = std::move(rgb);
    return img;
}

// ---- loss ----

struct LossConfig {
    double l2_weight = 1.0;
    double perceptual_weight = 0.0;  // 0.5 when the perceptual term is on
    enum class Perceptual { Off, FixedRandomFeatures } kind = Perceptual::Off;
    uint64_t feature_seed = 77;
};

inline constexpr int kFeaturePatch = 4;   // perceptual feature patch edge
inline constexpr int kFeatureChannels = 24;

// Frozen random projection used as the perceptual feature bank.
template <class T>
Tensor<T> perceptual_feature_weights(uint64_t seed) {
    Rng rng(seed);
    const int in = kFeaturePatch * kFeaturePatch * 3;
    return rng.template normal_tensor<T>(in, kFeatureChannels, 1.0 / std::sqrt(static_cast<double>(in)));
}

// pixels: (H*W) x 3 in image row-major order -> (patches) x F feature rows.
template <class T>
Var<T> perceptual_features(const Var<T>& pixels, int width, int height, const Var<T>& weights) {
    if (width % kFeaturePatch != 0 || height % kFeaturePatch != 0)
        throw std::invalid_argument("perceptual features need dimensions divisible by 4");
    const int pr = height / kFeaturePatch, pc = width / kFeaturePatch;
    std::vector<int> order;
    order.reserve(static_cast<size_t>(pr) * pc * kFeaturePatch * kFeaturePatch);
    for (int py = 0; py < pr; ++py)
        for (int px = 0; px < pc; ++px)
            for (int dy = 0; dy < kFeaturePatch; ++dy)
                for (int dx = 0; dx < kFeaturePatch; ++dx)
                    order.push_back((py * kFeaturePatch + dy) * width + px * kFeaturePatch + dx);
    Var<T> patch_rows = gather_rows(pixels, order);  // (P*16) x 3
    Var<T> flat = reshape(patch_rows, {pr * pc, kFeaturePatch * kFeaturePatch * 3});
    return gelu(matmul(flat, weights));
}

// Turns the renderer's patch-token output into an (H*W) x 3 pixel matrix
// inside the graph.
template <class T>
Var<T> tokens_to_pixels(const Var<T>& tokens, int width, int height) {
    const int n_px = width * height;
    Var<T> as_px = reshape(tokens, {n_px, 3});
    return gather_rows(as_px, unpatchify_row_order(width, height));
}

// l2_weight * mean((pred-truth)^2) + perceptual_weight * feature MSE.
// pred_tokens: P x 192 graph output; truth: ground-truth image.
template <class T>
Var<T> render_loss(const Var<T>& pred_tokens, const Image& truth, const LossConfig& cfg) {
    Tensor<T> truth_tokens = patchify_rgb(truth.view()).template cast<T>();
    check_same_shape(pred_tokens.value(), truth_tokens, "loss");
    Var<T> total = scale(mse(pred_tokens, Var<T>::constant(truth_tokens)), cfg.l2_weight);
    if (cfg.kind == LossConfig::Perceptual::FixedRandomFeatures && cfg.perceptual_weight > 0) {
        Var<T> wf = Var<T>::constant(perceptual_feature_weights<T>(cfg.feature_seed));
        Var<T> pred_px = tokens_to_pixels(pred_tokens, truth.width, truth.height);
        Tensor<T> truth_px(truth.width * truth.height, 3);
        for (size_t i = 0; i < truth.rgb.size(); ++i)
            truth_px.data[i] = static_cast<T>(truth.rgb[i]);
        Var<T> pf = perceptual_features(pred_px, truth.width, truth.height, wf);
        Var<T> tf = perceptual_features(Var<T>::constant(truth_px), truth.width, truth.height, wf);
        total = add(total, scale(mse(pf, tf), cfg.perceptual_weight));
    }
    return total;
}

// Same quantity for two plain images (evaluation path).
inline double image_loss_value(const Image& pred, const Image& truth, const LossConfig& cfg) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw std::invalid_argument("loss: image shapes differ");
    Tensor<float> pt = patchify_rgb(pred.view());
    Var<float> fake_tokens = Var<float>::constant(pt);
    return static_cast<double>(render_loss(fake_tokens, truth, cfg).value().data[0]);
}

// ---- analytic FLOPs ----
//
// One multiply-add counts as 2 FLOPs. With Q = query token count,
// R = render token count, D = width, F = ffn_mult*D, B = blocks:
//
//   madds = Q*384*D                                  query projection
//         + B * ( 4*Q*D^2 + 2*Q^2*D                  SA: q/k/v/out proj + scores + weighted sum
//               + 2*Q*D^2 + 2*R*D^2 + 2*Q*R*D        CA: q/out proj, k/v proj, scores + weighted
//               + 2*Q*D*F )                          FFN
//         + Q*D*192                                  output head
//   flops = 2 * madds
//
// Only the R-dependent CA terms change with the render budget, so the count
// is strictly decreasing in R.
inline double flops_estimate(const ModelConfig& cfg, int n_query_tokens, int n_render_tokens) {
    if (n_query_tokens <= 0 || n_render_tokens <= 0)
        throw std::invalid_argument("flops_estimate: token counts must be positive");
    const double q = n_query_tokens, r = n_render_tokens, d = cfg.dim;
    const double f = static_cast<double>(cfg.ffn_mult) * d;
    const double sa = 4 * q * d * d + 2 * q * q * d;
    const double ca = 2 * q * d * d + 2 * r * d * d + 2 * q * r * d;
    const double ffn = 2 * q * d * f;
    const double madds = q * kQueryVecWidth * d + cfg.renderer_blocks * (sa + ca + ffn) +
                         q * d * kRgbVecWidth;
    return 2.0 * madds;
}

}  // namespace clift

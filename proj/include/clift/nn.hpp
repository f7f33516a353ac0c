#pragma once

#include <map>
#include <string>
#include <vector>

#include "clift/autodiff.hpp"
#include "clift/rng.hpp"

namespace clift {

// Transformer stack sizes. The defaults are the desk-scale configuration;
// paper_scale() gives the full-size variant (constructible, slow on CPU).
struct ModelConfig {
    int dim = 64;
    int heads = 4;
    int encoder_blocks = 2;
    int condenser_blocks = 2;
    int renderer_blocks = 2;
    int ffn_mult = 4;

    static ModelConfig paper_scale() {
        ModelConfig c;
        c.dim = 768;
        c.heads = 8;
        c.encoder_blocks = 6;
        c.condenser_blocks = 2;
        c.renderer_blocks = 6;
        return c;
    }
};

// Ordered, named registry of trainable parameters. Registration order is
// fixed by construction order, which pins optimizer and checkpoint layout.
template <class T>
struct ParamStore {
    struct Entry {
        std::string name;
        Var<T> var;
    };
    std::vector<Entry> entries;

    Var<T> add(const std::string& name, Tensor<T> init) {
        for (const auto& e : entries)
            if (e.name == name) throw std::logic_error("duplicate parameter name: " + name);
        entries.push_back({name, Var<T>::param(std::move(init))});
        return entries.back().var;
    }

    Var<T>* find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return &e.var;
        return nullptr;
    }

    void zero_grad() {
        for (auto& e : entries) e.var.node()->zero_grad();
    }

    size_t count() const { return entries.size(); }
};

template <class T>
struct Linear {
    Var<T> w;  // in x out
    Var<T> b;  // 1 x out, absent when bias == false
    bool has_bias = true;

    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng,
           bool bias = true, bool zero_init = false) {
        Tensor<T> wi = zero_init ? Tensor<T>(in, out) : rng.template trunc_normal_tensor<T>(in, out, 0.02);
        w = ps.add(name + ".w", std::move(wi));
        has_bias = bias;
        if (bias) b = ps.add(name + ".b", Tensor<T>(1, out));
    }

    Var<T> operator()(const Var<T>& x) const {
        Var<T> y = matmul(x, w);
        if (has_bias) y = add_rowvec(y, b);
        return y;
    }
};

template <class T>
struct LayerNormMod {
    Var<T> gamma, beta;
    double eps = 1e-5;

    LayerNormMod() = default;
    LayerNormMod(ParamStore<T>& ps, const std::string& name, int dim) {
        gamma = ps.add(name + ".gamma", Tensor<T>::full(1, dim, T(1)));
        beta = ps.add(name + ".beta", Tensor<T>(1, dim));
    }

    Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma, beta, eps); }
};

// Multi-head scaled-dot-product attention with learned projections and no
// projection biases. An optional additive mask on the score logits restricts
// which keys each query may attend to.
template <class T>
struct Mha {
    Linear<T> wq, wk, wv, wo;
    int dim = 0;
    int heads = 1;

    Mha() = default;
    Mha(ParamStore<T>& ps, const std::string& name, int dim_, int heads_, Rng& rng)
        : dim(dim_), heads(heads_) {
        if (heads <= 0 || dim % heads != 0)
            throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                        " not divisible by heads " + std::to_string(heads));
        wq = Linear<T>(ps, name + ".wq", dim, dim, rng, /*bias=*/false);
        wk = Linear<T>(ps, name + ".wk", dim, dim, rng, /*bias=*/false);
        wv = Linear<T>(ps, name + ".wv", dim, dim, rng, /*bias=*/false);
        wo = Linear<T>(ps, name + ".wo", dim, dim, rng, /*bias=*/false);
    }

    Var<T> operator()(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                      const Tensor<T>* mask = nullptr) const {
        const int dh = dim / heads;
        const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
        Var<T> qp = wq(q), kp = wk(k), vp = wv(v);
        std::vector<Var<T>> outs;
        outs.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            Var<T> qh = slice_cols(qp, h * dh, dh);
            Var<T> kh = slice_cols(kp, h * dh, dh);
            Var<T> vh = slice_cols(vp, h * dh, dh);
            Var<T> scores = scale(matmul(qh, kh, false, true), sc);
            Var<T> attn = softmax_rows(scores, mask);
            outs.push_back(matmul(attn, vh));
        }
        return wo(concat_cols(outs));
    }
};

// Two linear layers with a GELU between them.
template <class T>
struct Ffn {
    Linear<T> fc1, fc2;

    Ffn() = default;
    Ffn(ParamStore<T>& ps, const std::string& name, int dim, int hidden, Rng& rng) {
        fc1 = Linear<T>(ps, name + ".fc1", dim, hidden, rng);
        fc2 = Linear<T>(ps, name + ".fc2", hidden, dim, rng);
    }

    Var<T> operator()(const Var<T>& x) const { return fc2(gelu(fc1(x))); }
};

// Post-norm transformer encoder block: LN(x + SA(x)), then LN(x + FFN(x)).
template <class T>
struct EncoderBlock {
    Mha<T> sa;
    LayerNormMod<T> ln1, ln2;
    Ffn<T> ffn;

    EncoderBlock() = default;
    EncoderBlock(ParamStore<T>& ps, const std::string& name, int dim, int heads, int ffn_mult,
                 Rng& rng)
        : sa(ps, name + ".sa", dim, heads, rng),
          ln1(ps, name + ".ln1", dim),
          ln2(ps, name + ".ln2", dim),
          ffn(ps, name + ".ffn", dim, dim * ffn_mult, rng) {}

    Var<T> operator()(const Var<T>& x) const {
        Var<T> h = ln1(add(x, sa(x, x, x)));
        return ln2(add(h, ffn(h)));
    }
};

}  // namespace clift

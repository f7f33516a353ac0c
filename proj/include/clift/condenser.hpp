#pragma once

#include "clift/clustering.hpp"

namespace clift {

// Compressed light-field tokens: the medoid tokens after condensation.
// Rays, source views and camera centers are copied unchanged from the
// medoid LiFTs; provenance records which LiFT row each token came from.
template <class T>
struct CLiFTSet {
    Tensor<T> emb;  // N_s x D
    std::vector<PluckerRay> rays;
    std::vector<int> source_view;
    std::vector<Vec3> source_origins;  // in-memory only, not serialized
    std::vector<int> provenance;       // medoid LiFT indices

    size_t count() const { return rays.size(); }
};

// One condensation step:
//   S  = SA(LN(T_centroids))                 exchange across clusters
//   S_k = CA(S_k, LN(members of cluster k))  pull the cluster into its medoid
//   S  = FFN(LN(S))
//   T  = T + S * Wz                          Wz zero-initialized
// The per-cluster cross-attention is run as one masked attention over all
// member tokens; each centroid row may only attend to its own cluster.
template <class T>
struct CondenserBlock {
    LayerNormMod<T> ln_centroid, ln_members, ln_ffn;
    Mha<T> sa, ca;
    Ffn<T> ffn;
    Var<T> wz;  // D x D, zero-initialized projection

    CondenserBlock() = default;
    CondenserBlock(ParamStore<T>& ps, const std::string& name, int dim, int heads, int ffn_mult,
                   Rng& rng)
        : ln_centroid(ps, name + ".ln_centroid", dim),
          ln_members(ps, name + ".ln_members", dim),
          ln_ffn(ps, name + ".ln_ffn", dim),
          sa(ps, name + ".sa", dim, heads, rng),
          ca(ps, name + ".ca", dim, heads, rng),
          ffn(ps, name + ".ffn", dim, dim * ffn_mult, rng) {
        wz = ps.add(name + ".wz", Tensor<T>(dim, dim));
    }

    Var<T> operator()(const Var<T>& centroids, const Var<T>& members,
                      const Tensor<T>& member_mask) const {
        Var<T> cn = ln_centroid(centroids);
        Var<T> s = sa(cn, cn, cn);
        Var<T> members_n = ln_members(members);
        s = ca(s, members_n, members_n, &member_mask);
        s = ffn(ln_ffn(s));
        return add(centroids, matmul(s, wz));
    }
};

template <class T>
struct Condenser {
    std::vector<CondenserBlock<T>> blocks;

    Condenser() = default;
    Condenser(ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng) {
        for (int b = 0; b < cfg.condenser_blocks; ++b)
            blocks.emplace_back(ps, "condenser.block" + std::to_string(b), cfg.dim, cfg.heads,
                                cfg.ffn_mult, rng);
    }

    // K x N additive logit mask: centroid k attends to the other members of
    // cluster k; a singleton cluster's centroid attends to itself.
    static Tensor<T> member_mask(const ClusterAssignment& a) {
        const int n = static_cast<int>(a.assignment.size());
        std::vector<int> sizes(static_cast<size_t>(a.k), 0);
        for (int v : a.assignment) sizes[static_cast<size_t>(v)]++;
        Tensor<T> mask = Tensor<T>::full(a.k, n, static_cast<T>(-1e30));
        for (int i = 0; i < n; ++i) {
            const int c = a.assignment[static_cast<size_t>(i)];
            const bool is_medoid = (a.medoid_index[static_cast<size_t>(c)] == i);
            const bool singleton = sizes[static_cast<size_t>(c)] == 1;
            if ((singleton && is_medoid) || (!singleton && !is_medoid)) mask.at(c, i) = T(0);
        }
        return mask;
    }

    Var<T> forward(const Var<T>& lift_emb, const ClusterAssignment& a) const {
        if (static_cast<size_t>(lift_emb.value().rows()) != a.assignment.size())
            throw std::invalid_argument("condense: assignment was computed over a different token set");
        Tensor<T> mask = member_mask(a);
        Var<T> centroids = gather_rows(lift_emb, a.medoid_index);
        for (const auto& b : blocks) centroids = b(centroids, lift_emb, mask);
        return centroids;
    }
};

// Inference-path condensation carrying over the medoid metadata.
template <class T>
CLiFTSet<T> condense(const Condenser<T>& cond, const LiFTSet<T>& lifts,
                     const ClusterAssignment& a) {
    lifts.check_consistent();
    CLiFTSet<T> out;
    out.emb = cond.forward(Var<T>::constant(lifts.emb), a).value();
    out.provenance = a.medoid_index;
    for (int m : a.medoid_index) {
        out.rays.push_back(lifts.rays[static_cast<size_t>(m)]);
        out.source_view.push_back(lifts.source_view[static_cast<size_t>(m)]);
        out.source_origins.push_back(lifts.source_origins[static_cast<size_t>(m)]);
    }
    return out;
}

// ---- CLFT persistence ----
// "CLFT" | u32 version | u32 N_s | u32 D | per token:
//   f32 dir[3], f32 moment[3], f32 emb[D], u32 source_view
inline constexpr uint32_t kCliftVersion = 1;

inline size_t clift_file_bytes(int n_tokens, int dim) {
    return 16 + static_cast<size_t>(n_tokens) * ((6 + static_cast<size_t>(dim)) * 4 + 4);
}

namespace detail {

inline void put_f32_le(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32_le(os, u);
}

inline float get_f32_le(std::istream& is, const char* what) {
    const uint32_t u = get_u32_le(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

template <class T>
void save_clift(const CLiFTSet<T>& set, const std::string& path) {
    if (set.emb.rows() != static_cast<int>(set.count()))
        throw std::invalid_argument("clift set rows and rays disagree");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("clift: cannot open for write: " + path);
    os.write("CLFT", 4);
    detail::put_u32_le(os, kCliftVersion);
    detail::put_u32_le(os, static_cast<uint32_t>(set.count()));
    detail::put_u32_le(os, static_cast<uint32_t>(set.emb.cols()));
    for (size_t i = 0; i < set.count(); ++i) {
        const auto& r = set.rays[i];
        detail::put_f32_le(os, static_cast<float>(r.dir.x));
        detail::put_f32_le(os, static_cast<float>(r.dir.y));
        detail::put_f32_le(os, static_cast<float>(r.dir.z));
        detail::put_f32_le(os, static_cast<float>(r.moment.x));
        detail::put_f32_le(os, static_cast<float>(r.moment.y));
        detail::put_f32_le(os, static_cast<float>(r.moment.z));
        const T* row = set.emb.row_ptr(static_cast<int>(i));
        for (int j = 0; j < set.emb.cols(); ++j) detail::put_f32_le(os, static_cast<float>(row[j]));
        detail::put_u32_le(os, static_cast<uint32_t>(set.source_view[i]));
    }
    if (!os) throw std::runtime_error("clift: write failed: " + path);
}

template <class T = float>
CLiFTSet<T> load_clift(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("clift: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CLFT", 4) != 0)
        throw std::runtime_error("clift: bad magic in " + path);
    const uint32_t version = detail::get_u32_le(is, "version");
    if (version != kCliftVersion)
        throw std::runtime_error("clift: unsupported version " + std::to_string(version));
    const uint32_t n = detail::get_u32_le(is, "N_s");
    const uint32_t d = detail::get_u32_le(is, "D");
    if (n == 0 || n > (1u << 24) || d == 0 || d > (1u << 16))
        throw std::runtime_error("clift: implausible header in " + path);
    CLiFTSet<T> set;
    set.emb = Tensor<T>(static_cast<int>(n), static_cast<int>(d));
    for (uint32_t i = 0; i < n; ++i) {
        PluckerRay r;
        r.dir.x = detail::get_f32_le(is, "dir");
        r.dir.y = detail::get_f32_le(is, "dir");
        r.dir.z = detail::get_f32_le(is, "dir");
        r.moment.x = detail::get_f32_le(is, "moment");
        r.moment.y = detail::get_f32_le(is, "moment");
        r.moment.z = detail::get_f32_le(is, "moment");
        set.rays.push_back(r);
        T* row = set.emb.row_ptr(static_cast<int>(i));
        for (uint32_t j = 0; j < d; ++j) row[j] = static_cast<T>(detail::get_f32_le(is, "embedding"));
        set.source_view.push_back(static_cast<int>(detail::get_u32_le(is, "source view")));
    }
    char extra;
    if (is.read(&extra, 1)) throw std::runtime_error("clift: trailing bytes in " + path);
    set.source_origins.assign(set.count(), Vec3{});
    return set;
}

// Re-derives per-token camera centers after a load, given the scene.
template <class T>
void reattach_origins(CLiFTSet<T>& set, const std::vector<const View*>& views) {
    for (size_t i = 0; i < set.count(); ++i) {
        const int v = set.source_view[i];
        if (v < 0 || v >= static_cast<int>(views.size()))
            throw std::invalid_argument("clift token refers to missing view " + std::to_string(v));
        set.source_origins[i] = views[static_cast<size_t>(v)]->cam.center();
    }
}

}  // namespace clift

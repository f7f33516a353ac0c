#pragma once

#include <cstring>
#include <fstream>
#include <limits>

#include "clift/encoder.hpp"
#include "clift/image.hpp"

namespace clift {

struct ClusterAssignment {
    int k = 0;
    std::vector<int> assignment;    // cluster id per token
    std::vector<int> medoid_index;  // token index per cluster
    double objective = 0;           // final sum of squared distances to cluster means

    void check_invariants() const {
        if (static_cast<int>(medoid_index.size()) != k)
            throw std::logic_error("cluster count / medoid count mismatch");
        std::vector<int> sizes(static_cast<size_t>(k), 0);
        for (int a : assignment) {
            if (a < 0 || a >= k) throw std::logic_error("token assigned to invalid cluster");
            sizes[static_cast<size_t>(a)]++;
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<size_t>(c)] == 0) throw std::logic_error("empty cluster survived");
            const int m = medoid_index[static_cast<size_t>(c)];
            if (m < 0 || m >= static_cast<int>(assignment.size()) || assignment[static_cast<size_t>(m)] != c)
                throw std::logic_error("medoid does not belong to its own cluster");
        }
    }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int d) {
    double s = 0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding over squared Euclidean distance,
// medoid snap at the end. Fully deterministic given (embeddings, k, seed):
// nearest-center ties pick the lowest cluster index, medoid ties the lowest
// token index. Empty clusters are reseeded from the farthest member of the
// largest cluster. The per-iteration objective is verified non-increasing.
template <class T>
ClusterAssignment kmeans(const Tensor<T>& embeddings, int k, uint64_t seed, int max_iters = 50) {
    const int n = embeddings.rows();
    const int d = embeddings.cols();
    if (k < 1) throw std::invalid_argument("kmeans: k must be at least 1");
    if (k > n) throw std::invalid_argument("kmeans: k=" + std::to_string(k) +
                                           " exceeds token count " + std::to_string(n));

    // work in double for stable means/objectives
    std::vector<double> pts(static_cast<size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            pts[static_cast<size_t>(i) * d + j] = static_cast<double>(embeddings.at(i, j));
    auto pt = [&](int i) { return pts.data() + static_cast<size_t>(i) * d; };

    Rng rng(seed);
    std::vector<double> centers(static_cast<size_t>(k) * d);
    auto ctr = [&](int c) { return centers.data() + static_cast<size_t>(c) * d; };

    // k-means++ seeding
    {
        std::vector<double> min_d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
        int first = rng.uniform_int(n);
        std::memcpy(ctr(0), pt(first), sizeof(double) * d);
        for (int c = 1; c < k; ++c) {
            double total = 0;
            for (int i = 0; i < n; ++i) {
                const double d2 = detail::sq_dist(pt(i), ctr(c - 1), d);
                if (d2 < min_d2[static_cast<size_t>(i)]) min_d2[static_cast<size_t>(i)] = d2;
                total += min_d2[static_cast<size_t>(i)];
            }
            int pick = -1;
            if (total <= 0) {
                // all remaining points coincide with chosen centers
                pick = 0;
            } else {
                const double r = rng.uniform() * total;
                double acc = 0;
                for (int i = 0; i < n; ++i) {
                    acc += min_d2[static_cast<size_t>(i)];
                    if (acc >= r) {
                        pick = i;
                        break;
                    }
                }
                if (pick < 0) pick = n - 1;
            }
            std::memcpy(ctr(c), pt(pick), sizeof(double) * d);
        }
    }

    std::vector<int> assign(static_cast<size_t>(n), -1);
    std::vector<int> sizes(static_cast<size_t>(k), 0);
    double prev_obj = std::numeric_limits<double>::infinity();

    auto assign_all = [&]() {
        bool changed = false;
        std::fill(sizes.begin(), sizes.end(), 0);
        double obj = 0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = detail::sq_dist(pt(i), ctr(0), d);
            for (int c = 1; c < k; ++c) {
                const double d2 = detail::sq_dist(pt(i), ctr(c), d);
                if (d2 < best_d) {  // strict: ties keep the lowest cluster index
                    best_d = d2;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) changed = true;
            assign[static_cast<size_t>(i)] = best;
            sizes[static_cast<size_t>(best)]++;
            obj += best_d;
        }
        return std::pair<bool, double>(changed, obj);
    };

    double obj = assign_all().second;

    for (int iter = 0; iter < max_iters; ++iter) {
        // repair empty clusters before the mean update
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<size_t>(c)] > 0) continue;
            int big = 0;
            for (int c2 = 1; c2 < k; ++c2)
                if (sizes[static_cast<size_t>(c2)] > sizes[static_cast<size_t>(big)]) big = c2;
            int far_i = -1;
            double far_d = -1;
            for (int i = 0; i < n; ++i) {
                if (assign[static_cast<size_t>(i)] != big) continue;
                const double d2 = detail::sq_dist(pt(i), ctr(big), d);
                if (d2 > far_d) {
                    far_d = d2;
                    far_i = i;
                }
            }
            std::memcpy(ctr(c), pt(far_i), sizeof(double) * d);
            assign[static_cast<size_t>(far_i)] = c;
            sizes[static_cast<size_t>(big)]--;
            sizes[static_cast<size_t>(c)]++;
        }

        // means
        std::fill(centers.begin(), centers.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            double* c = ctr(assign[static_cast<size_t>(i)]);
            const double* p = pt(i);
            for (int j = 0; j < d; ++j) c[j] += p[j];
        }
        for (int c = 0; c < k; ++c) {
            const double inv = 1.0 / sizes[static_cast<size_t>(c)];
            double* cc = ctr(c);
            for (int j = 0; j < d; ++j) cc[j] *= inv;
        }

        auto [changed, new_obj] = assign_all();
        if (new_obj > prev_obj + 1e-9)
            throw std::logic_error("kmeans objective increased between iterations");
        prev_obj = new_obj;
        obj = new_obj;
        if (!changed) break;
    }

    ClusterAssignment out;
    out.k = k;
    out.assignment = assign;
    out.objective = obj;
    out.medoid_index.assign(static_cast<size_t>(k), -1);
    std::vector<double> best_d(static_cast<size_t>(k), std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
        const int c = assign[static_cast<size_t>(i)];
        const double d2 = detail::sq_dist(pt(i), ctr(c), d);
        if (d2 < best_d[static_cast<size_t>(c)]) {  // ties keep the lowest token index
            best_d[static_cast<size_t>(c)] = d2;
            out.medoid_index[static_cast<size_t>(c)] = i;
        }
    }
    out.check_invariants();
    return out;
}

// ---- KMAS cache file: "KMAS" | u32 K | u32 N | u32 assignment[N] | u32 medoid[K]

namespace detail {

inline void put_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32_le(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string("kmas: truncated reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_kmas(const ClusterAssignment& a, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("kmas: cannot open for write: " + path);
    os.write("KMAS", 4);
    detail::put_u32_le(os, static_cast<uint32_t>(a.k));
    detail::put_u32_le(os, static_cast<uint32_t>(a.assignment.size()));
    for (int v : a.assignment) detail::put_u32_le(os, static_cast<uint32_t>(v));
    for (int v : a.medoid_index) detail::put_u32_le(os, static_cast<uint32_t>(v));
    if (!os) throw std::runtime_error("kmas: write failed: " + path);
}

inline ClusterAssignment load_kmas(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("kmas: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "KMAS", 4) != 0)
        throw std::runtime_error("kmas: bad magic in " + path);
    ClusterAssignment a;
    a.k = static_cast<int>(detail::get_u32_le(is, "K"));
    const uint32_t n = detail::get_u32_le(is, "N");
    if (a.k < 1 || n < static_cast<uint32_t>(a.k) || n > (1u << 28))
        throw std::runtime_error("kmas: implausible K/N in " + path);
    a.assignment.resize(n);
    for (auto& v : a.assignment) v = static_cast<int>(detail::get_u32_le(is, "assignment"));
    a.medoid_index.resize(static_cast<size_t>(a.k));
    for (auto& v : a.medoid_index) v = static_cast<int>(detail::get_u32_le(is, "medoid"));
    char extra;
    if (is.read(&extra, 1)) throw std::runtime_error("kmas: trailing bytes in " + path);
    try {
        a.check_invariants();
    } catch (const std::logic_error& e) {
        throw std::runtime_error("kmas: invalid content in " + path + ": " + e.what());
    }
    return a;
}

// ---- cluster visualization: per-view overlay, one color per cluster, a
// yellow ring on each patch that holds a cluster medoid.

inline Vec3 cluster_color(int cluster) {
    // golden-ratio hue walk keeps adjacent ids distinct
    const double hue = std::fmod(0.61803398875 * cluster, 1.0);
    return detail::hsv(hue, 0.85, 0.95);
}

inline std::vector<Image> render_cluster_overlays(const ClusterAssignment& a,
                                                  const std::vector<const View*>& views) {
    std::vector<Image> out;
    size_t token = 0;
    for (const View* vp : views) {
        const View& v = *vp;
        const int pr = v.image.height / kPatch, pc = v.image.width / kPatch;
        Image img(v.image.width, v.image.height);
        std::vector<int> patch_cluster(static_cast<size_t>(pr) * pc);
        for (int p = 0; p < pr * pc; ++p) {
            if (token + static_cast<size_t>(p) >= a.assignment.size())
                throw std::invalid_argument("assignment shorter than the views' token count");
            patch_cluster[static_cast<size_t>(p)] = a.assignment[token + static_cast<size_t>(p)];
        }
        for (int y = 0; y < v.image.height; ++y)
            for (int x = 0; x < v.image.width; ++x) {
                const int p = (y / kPatch) * pc + (x / kPatch);
                const Vec3 c = cluster_color(patch_cluster[static_cast<size_t>(p)]);
                const float* src = v.image.px(x, y);
                float* dst = img.px(x, y);
                // 45% image, 55% cluster tint
                dst[0] = static_cast<float>(0.45 * src[0] + 0.55 * c.x);
                dst[1] = static_cast<float>(0.45 * src[1] + 0.55 * c.y);
                dst[2] = static_cast<float>(0.45 * src[2] + 0.55 * c.z);
            }
        // rings on medoid patches
        for (int c = 0; c < a.k; ++c) {
            const int m = a.medoid_index[static_cast<size_t>(c)];
            if (m < static_cast<int>(token) || m >= static_cast<int>(token) + pr * pc) continue;
            const int local = m - static_cast<int>(token);
            const int px0 = (local % pc) * kPatch, py0 = (local / pc) * kPatch;
            const double cxr = px0 + kPatch / 2.0, cyr = py0 + kPatch / 2.0;
            for (int y = py0; y < py0 + kPatch; ++y)
                for (int x = px0; x < px0 + kPatch; ++x) {
                    const double r = std::hypot(x + 0.5 - cxr, y + 0.5 - cyr);
                    if (r >= kPatch * 0.28 && r <= kPatch * 0.46) {
                        float* dst = img.px(x, y);
                        dst[0] = 1.0f;
                        dst[1] = 0.92f;
                        dst[2] = 0.0f;
                    }
                }
        }
        out.push_back(std::move(img));
        token += static_cast<size_t>(pr) * pc;
    }
    if (token != a.assignment.size())
        throw std::invalid_argument("views' token count does not cover the assignment");
    return out;
}

}  // namespace clift

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "clift/tensor.hpp"

namespace clift {

// Deterministic RNG. All distributions are derived from the mt19937_64
// stream with explicit arithmetic, so a seed pins every sampled value
// regardless of the standard library in use.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<int>(gen_() % static_cast<uint64_t>(n));
    }

    double normal() {
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Normal(0, stddev) resampled until |z| <= clip standard deviations.
    double trunc_normal(double stddev, double clip = 2.0) {
        for (;;) {
            const double z = normal();
            if (std::abs(z) <= clip) return z * stddev;
        }
    }

    template <class T>
    Tensor<T> normal_tensor(int r, int c, double stddev) {
        Tensor<T> t(r, c);
        for (auto& v : t.data) v = static_cast<T>(normal() * stddev);
        return t;
    }

    template <class T>
    Tensor<T> trunc_normal_tensor(int r, int c, double stddev) {
        Tensor<T> t(r, c);
        for (auto& v : t.data) v = static_cast<T>(trunc_normal(stddev));
        return t;
    }

    template <class T>
    Tensor<T> uniform_tensor(int r, int c, double lo, double hi) {
        Tensor<T> t(r, c);
        for (auto& v : t.data) v = static_cast<T>(uniform(lo, hi));
        return t;
    }

    // Fisher-Yates shuffle of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = uniform_int(i + 1);
            std::swap(p[i], p[j]);
        }
        return p;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace clift

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clift/nn.hpp"

namespace clift {

struct AdamWConfig {
    double peak_lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int warmup_steps = 100;
    int total_steps = 1000;
};

// Cosine schedule with linear warmup; decays to zero at total_steps.
inline double lr_at_step(const AdamWConfig& cfg, int step) {
    if (step <= 0) return 0.0;
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step) / cfg.warmup_steps;
    const int span = std::max(1, cfg.total_steps - cfg.warmup_steps);
    double progress = static_cast<double>(step - cfg.warmup_steps) / span;
    if (progress > 1.0) progress = 1.0;
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

// AdamW over a selected subset of a ParamStore. Per-group learning-rate
// scales cover the stage-2 renderer scaling.
template <class T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    template <class Pred>
    void add_params(ParamStore<T>& ps, Pred select, double lr_scale = 1.0) {
        for (auto& e : ps.entries) {
            if (!select(e.name)) continue;
            Slot s;
            s.node = e.var.node();
            s.m = Tensor<T>(e.var.value().shape);
            s.v = Tensor<T>(e.var.value().shape);
            s.lr_scale = lr_scale;
            slots_.push_back(std::move(s));
        }
    }

    void add_all(ParamStore<T>& ps) {
        add_params(ps, [](const std::string&) { return true; });
    }

    void zero_grad() {
        for (auto& s : slots_) s.node->zero_grad();
    }

    // Applies one update from the gradients currently held by the params.
    void step() {
        ++t_;
        const double lr = lr_at_step(cfg_, t_);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& s : slots_) {
            s.node->ensure_grad();
            const double slr = lr * s.lr_scale;
            T* p = s.node->value.data.data();
            const T* g = s.node->grad.data.data();
            T* m = s.m.data.data();
            T* v = s.v.data.data();
            const size_t n = s.node->value.numel();
            for (size_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
                const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                const double upd = mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * static_cast<double>(p[i]);
                p[i] = static_cast<T>(static_cast<double>(p[i]) - slr * upd);
            }
        }
    }

    int step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Slot {
        Node<T>* node = nullptr;
        Tensor<T> m, v;
        double lr_scale = 1.0;
    };
    AdamWConfig cfg_;
    std::vector<Slot> slots_;
    int t_ = 0;
};

}  // namespace clift

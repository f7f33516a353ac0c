#pragma once

#include "clift/image.hpp"

namespace clift {

inline double mse_images(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("metric: image shapes differ");
    double s = 0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.rgb.size());
}

// PSNR in dB against a unit dynamic range, capped at 99 for near-zero error.
inline double psnr(const Image& pred, const Image& truth) {
    const double m = mse_images(pred, truth);
    if (m < 1e-10) return 99.0;
    return 10.0 * std::log10(1.0 / m);
}

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, unit
// dynamic range. Evaluated wherever the full window fits, averaged over
// positions and channels.
inline double ssim(const Image& pred, const Image& truth) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw std::invalid_argument("metric: image shapes differ");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    if (pred.width < kWin || pred.height < kWin)
        throw std::invalid_argument("metric: image smaller than the ssim window");

    double w[kWin];
    double wsum = 0;
    for (int i = 0; i < kWin; ++i) {
        const double x = i - (kWin - 1) / 2.0;
        w[i] = std::exp(-x * x / (2 * kSigma * kSigma));
        wsum += w[i];
    }
    for (double& v : w) v /= wsum;

    const int out_w = pred.width - kWin + 1;
    const int out_h = pred.height - kWin + 1;
    double total = 0;
    size_t count = 0;
    // separable pass per channel: horizontal then vertical window means
    std::vector<double> ax(static_cast<size_t>(pred.width) * pred.height);
    std::vector<double> bx(ax.size()), aax(ax.size()), bbx(ax.size()), abx(ax.size());
    std::vector<double> a1(ax.size()), b1(ax.size()), a2(ax.size()), b2(ax.size()), ab1(ax.size());
    for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x) {
                const size_t i = static_cast<size_t>(y) * pred.width + x;
                const double av = pred.px(x, y)[ch], bv = truth.px(x, y)[ch];
                ax[i] = av;
                bx[i] = bv;
                aax[i] = av * av;
                bbx[i] = bv * bv;
                abx[i] = av * bv;
            }
        auto hpass = [&](const std::vector<double>& src, std::vector<double>& dst) {
            for (int y = 0; y < pred.height; ++y)
                for (int x = 0; x < out_w; ++x) {
                    double s = 0;
                    for (int i = 0; i < kWin; ++i) s += w[i] * src[static_cast<size_t>(y) * pred.width + x + i];
                    dst[static_cast<size_t>(y) * pred.width + x] = s;
                }
        };
        hpass(ax, a1);
        hpass(bx, b1);
        hpass(aax, a2);
        hpass(bbx, b2);
        hpass(abx, ab1);
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double mu_a = 0, mu_b = 0, raw_aa = 0, raw_bb = 0, raw_ab = 0;
                for (int i = 0; i < kWin; ++i) {
                    const size_t idx = static_cast<size_t>(y + i) * pred.width + x;
                    mu_a += w[i] * a1[idx];
                    mu_b += w[i] * b1[idx];
                    raw_aa += w[i] * a2[idx];
                    raw_bb += w[i] * b2[idx];
                    raw_ab += w[i] * ab1[idx];
                }
                const double var_a = raw_aa - mu_a * mu_a;
                const double var_b = raw_bb - mu_b * mu_b;
                const double cov = raw_ab - mu_a * mu_b;
                const double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += s;
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

}  // namespace clift

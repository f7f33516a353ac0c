#include <catch2/catch_amalgamated.hpp>

#include "clift/metrics.hpp"
#include "clift/rng.hpp"

using namespace clift;

namespace {

// direct windowed-statistics transcription, one window at a time
double naive_ssim(const Image& a, const Image& b) {
    constexpr int kWin = 11;
    const double c1 = 0.0001, c2 = 0.0009;
    double w[kWin][kWin];
    double sum = 0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dx = i - 5.0, dy = j - 5.0;
            w[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
            sum += w[i][j];
        }
    for (auto& row : w)
        for (auto& v : row) v /= sum;

    double total = 0;
    int count = 0;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y + kWin <= a.height; ++y)
            for (int x = 0; x + kWin <= a.width; ++x) {
                double mu_a = 0, mu_b = 0, va = 0, vb = 0, cov = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        mu_a += w[i][j] * a.px(x + j, y + i)[ch];
                        mu_b += w[i][j] * b.px(x + j, y + i)[ch];
                    }
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double da = a.px(x + j, y + i)[ch] - mu_a;
                        const double db = b.px(x + j, y + i)[ch] - mu_b;
                        va += w[i][j] * da * da;
                        vb += w[i][j] * db * db;
                        cov += w[i][j] * da * db;
                    }
                total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                ++count;
            }
    return total / count;
}

}  // namespace

TEST_CASE("identical images cap psnr and give ssim one", "[metrics]") {
    Rng rng(401);
    Image img(16, 16);
    for (auto& v : img.rgb) v = static_cast<float>(rng.uniform());
    CHECK(psnr(img, img) == 99.0);
    CHECK(ssim(img, img) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("uniform offset gives the analytic psnr", "[metrics]") {
    Rng rng(409);
    Image truth(16, 16);
    for (auto& v : truth.rgb) v = static_cast<float>(rng.uniform(0.0, 0.9));
    Image pred = truth;
    for (auto& v : pred.rgb) v += 0.1f;
    CHECK(psnr(pred, truth) == Catch::Approx(20.0).margin(1e-3));
}

TEST_CASE("ssim matches a direct windowed transcription", "[metrics]") {
    Rng rng(419);
    Image a(16, 16), b(16, 16);
    for (auto& v : a.rgb) v = static_cast<float>(rng.uniform());
    for (size_t i = 0; i < b.rgb.size(); ++i)
        b.rgb[i] = std::min(1.0f, std::max(0.0f, a.rgb[i] + static_cast<float>(rng.uniform(-0.2, 0.2))));
    CHECK(ssim(a, b) == Catch::Approx(naive_ssim(a, b)).margin(1e-6));
    // different images score lower than identical ones
    CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("metric preconditions", "[metrics]") {
    Image a(16, 16), b(8, 8);
    CHECK_THROWS_AS(psnr(a, b), std::invalid_argument);
    CHECK_THROWS_AS(ssim(a, b), std::invalid_argument);
    Image tiny(8, 8);
    CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim is symmetric and bounded on random pairs", "[metrics]") {
    Rng rng(421);
    for (int t = 0; t < 5; ++t) {
        Image a(16, 16), b(16, 16);
        for (auto& v : a.rgb) v = static_cast<float>(rng.uniform());
        for (auto& v : b.rgb) v = static_cast<float>(rng.uniform());
        const double s1 = ssim(a, b), s2 = ssim(b, a);
        CHECK(s1 == Catch::Approx(s2).margin(1e-12));
        CHECK(s1 <= 1.0);
        CHECK(s1 >= -1.0);
    }
}

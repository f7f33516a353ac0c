#include <catch2/catch_amalgamated.hpp>

#include "clift/renderer.hpp"
#include "oracles.hpp"

using namespace clift;

namespace {

ModelConfig rend_cfg(int dim, int heads, int blocks) {
    ModelConfig cfg;
    cfg.dim = dim;
    cfg.heads = heads;
    cfg.renderer_blocks = blocks;
    return cfg;
}

Camera small_cam(int size) {
    Camera c;
    c.width = c.height = size;
    c.fx = c.fy = size * 0.9;
    c.cx = c.cy = size / 2.0;
    return c;
}

std::vector<PluckerRay> random_rays(Rng& rng, int n) {
    std::vector<PluckerRay> rays;
    for (int i = 0; i < n; ++i)
        rays.push_back(PluckerRay::from_origin_dir(
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0}));
    return rays;
}

// Full decoder transcription with the naive kernels.
Tensor<double> naive_render_tokens(const Tensor<double>& queries, const Tensor<double>& tokens,
                                   ParamStore<double>& ps, int blocks, int heads) {
    auto get = [&](const std::string& n) -> const Tensor<double>& { return ps.find(n)->value(); };
    Tensor<double> x =
        oracles::naive_linear(queries, get("renderer.query_proj.w"), &get("renderer.query_proj.b"));
    for (int b = 0; b < blocks; ++b) {
        const std::string p = "renderer.block" + std::to_string(b);
        auto ln = [&](const Tensor<double>& v, const std::string& name) {
            return oracles::naive_layer_norm(v, get(p + "." + name + ".gamma"),
                                             get(p + "." + name + ".beta"));
        };
        Tensor<double> sa = oracles::naive_mha(x, x, x, get(p + ".sa.wq.w"), get(p + ".sa.wk.w"),
                                               get(p + ".sa.wv.w"), get(p + ".sa.wo.w"), heads);
        x = ln(oracles::naive_add(x, sa), "ln1");
        Tensor<double> ca =
            oracles::naive_mha(x, tokens, tokens, get(p + ".ca.wq.w"), get(p + ".ca.wk.w"),
                               get(p + ".ca.wv.w"), get(p + ".ca.wo.w"), heads);
        x = ln(oracles::naive_add(x, ca), "ln2");
        Tensor<double> f = oracles::naive_ffn(x, get(p + ".ffn.fc1.w"), get(p + ".ffn.fc1.b"),
                                              get(p + ".ffn.fc2.w"), get(p + ".ffn.fc2.b"));
        x = ln(oracles::naive_add(x, f), "ln3");
    }
    Tensor<double> out = oracles::naive_linear(x, get("renderer.head.w"), &get("renderer.head.b"));
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

}  // namespace

TEST_CASE("zeroed output head renders uniform mid-gray", "[renderer]") {
    Rng rng(211);
    ParamStore<float> ps;
    Renderer<float> rend(ps, rend_cfg(16, 2, 2), rng);
    ps.find("renderer.head.w")->value().fill(0.0f);
    ps.find("renderer.head.b")->value().fill(0.0f);
    auto tokens = rng.normal_tensor<float>(5, 16, 1.0);
    auto img = render_view(rend, small_cam(16), tokens, random_rays(rng, 5));
    for (float v : img.rgb) CHECK(v == 0.5f);
}

TEST_CASE("renderer rejects zero and duplicate tokens", "[renderer]") {
    Rng rng(223);
    ParamStore<float> ps;
    Renderer<float> rend(ps, rend_cfg(16, 2, 1), rng);
    Tensor<float> none(0, 16);
    CHECK_THROWS_AS(render_view(rend, small_cam(16), none, {}), std::invalid_argument);

    auto tokens = rng.normal_tensor<float>(4, 16, 1.0);
    auto rays = random_rays(rng, 4);
    std::copy_n(tokens.row_ptr(1), 16, tokens.row_ptr(3));  // duplicate row 1 -> 3
    rays[3] = rays[1];
    CHECK_THROWS_AS(render_view(rend, small_cam(16), tokens, rays), std::invalid_argument);
}

TEST_CASE("renderer matches a naive decoder transcription", "[renderer]") {
    Rng rng(227);
    ParamStore<double> ps;
    Renderer<double> rend(ps, rend_cfg(8, 1, 1), rng);
    auto queries = query_grid(small_cam(16)).cast<double>();
    auto tokens = rng.normal_tensor<double>(4, 8, 1.0);
    auto got = rend.forward_tokens(Var<double>::constant(queries), Var<double>::constant(tokens));
    auto expect = naive_render_tokens(queries, tokens, ps, 1, 1);
    REQUIRE(got.value().data.size() == expect.data.size());
    for (size_t i = 0; i < expect.data.size(); ++i)
        CHECK(std::abs(got.value().data[i] - expect.data[i]) < 1e-5);
}

TEST_CASE("rendered pixels stay inside the sigmoid range", "[renderer]") {
    Rng rng(229);
    ParamStore<float> ps;
    Renderer<float> rend(ps, rend_cfg(16, 4, 2), rng);
    auto tokens = rng.normal_tensor<float>(9, 16, 1.0);
    auto img = render_view(rend, small_cam(24), tokens, random_rays(rng, 9));
    for (float v : img.rgb) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("output is invariant to the order of supplied tokens", "[renderer]") {
    Rng rng(233);
    ParamStore<float> ps;
    Renderer<float> rend(ps, rend_cfg(16, 2, 2), rng);
    const int n = 12;
    auto tokens = rng.normal_tensor<float>(n, 16, 1.0);
    auto rays = random_rays(rng, n);
    auto img1 = render_view(rend, small_cam(16), tokens, rays);

    Rng prng(7);
    auto perm = prng.permutation(n);
    Tensor<float> tokens2(n, 16);
    std::vector<PluckerRay> rays2(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::copy_n(tokens.row_ptr(perm[static_cast<size_t>(i)]), 16, tokens2.row_ptr(i));
        rays2[static_cast<size_t>(i)] = rays[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    auto img2 = render_view(rend, small_cam(16), tokens2, rays2);
    for (size_t i = 0; i < img1.rgb.size(); ++i)
        CHECK(std::abs(img1.rgb[i] - img2.rgb[i]) < 1e-5f);
}

TEST_CASE("renderer accepts any token count without reconfiguration", "[renderer]") {
    Rng rng(239);
    ParamStore<float> ps;
    Renderer<float> rend(ps, rend_cfg(16, 2, 1), rng);
    for (int n : {1, 3, 17, 64}) {
        auto tokens = rng.normal_tensor<float>(n, 16, 1.0);
        auto img = render_view(rend, small_cam(16), tokens, random_rays(rng, n));
        CHECK(img.width == 16);
    }
}

TEST_CASE("loss analytic cases", "[renderer]") {
    Rng rng(241);
    Image truth(16, 16);
    for (auto& v : truth.rgb) v = static_cast<float>(rng.uniform(0.0, 0.9));
    LossConfig cfg;  // perceptual off

    CHECK(image_loss_value(truth, truth, cfg) == Catch::Approx(0.0).margin(1e-12));

    Image off = truth;
    for (auto& v : off.rgb) v += 0.1f;
    CHECK(image_loss_value(off, truth, cfg) == Catch::Approx(0.01).margin(1e-6));

    Image wrong(8, 8);
    CHECK_THROWS_AS(image_loss_value(wrong, truth, cfg), std::invalid_argument);
}

TEST_CASE("loss gradient with and without the perceptual term", "[renderer]") {
    Rng rng(251);
    Image truth(8, 8);
    for (auto& v : truth.rgb) v = static_cast<float>(rng.uniform());
    auto tokens = Var<double>::param(rng.normal_tensor<double>(1, kRgbVecWidth, 0.3));
    std::vector<Var<double>> params{tokens};

    LossConfig l2_only;
    auto r1 = oracles::grad_check(params, [&] { return render_loss(tokens, truth, l2_only); });
    CHECK(r1.max_rel_err < 1e-4);

    LossConfig with_feat;
    with_feat.perceptual_weight = 0.5;
    with_feat.kind = LossConfig::Perceptual::FixedRandomFeatures;
    auto r2 = oracles::grad_check(params, [&] { return render_loss(tokens, truth, with_feat); });
    CHECK(r2.max_rel_err < 1e-4);
}

TEST_CASE("flops estimate decreases strictly with the render budget", "[renderer]") {
    ModelConfig cfg;
    double prev = std::numeric_limits<double>::infinity();
    for (int nr : {256, 192, 128, 96, 64, 32, 16, 8, 4, 2, 1}) {
        const double f = flops_estimate(cfg, 64, nr);
        CHECK(f < prev);
        prev = f;
    }
    CHECK_THROWS_AS(flops_estimate(cfg, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(flops_estimate(cfg, 4, 0), std::invalid_argument);
}

TEST_CASE("halving the budget removes exactly the key/value and score terms", "[renderer]") {
    ModelConfig cfg;
    cfg.dim = 4;
    cfg.renderer_blocks = 1;
    cfg.ffn_mult = 4;
    const int q = 9, r = 10;
    const double full = flops_estimate(cfg, q, r);
    const double half = flops_estimate(cfg, q, r / 2);
    // hand count of the R-dependent terms: K/V projections 2*R*D^2, scores +
    // weighted sum 2*Q*R*D, all times 2 FLOPs per madd
    const double expect_diff = 2.0 * (2.0 * (r - r / 2) * cfg.dim * cfg.dim +
                                      2.0 * q * (r - r / 2) * cfg.dim);
    CHECK(full - half == Catch::Approx(expect_diff));
}

TEST_CASE("paper-scale budget cut reduces the estimate in the same direction", "[renderer]") {
    ModelConfig paper = ModelConfig::paper_scale();
    const double full = flops_estimate(paper, 1024, 4096);
    const double cut = flops_estimate(paper, 1024, 512);
    CHECK(cut < full);
}

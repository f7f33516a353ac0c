#include <catch2/catch_amalgamated.hpp>

#include "clift/encoder.hpp"

using namespace clift;

namespace {
ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.encoder_blocks = 2;
    return cfg;
}
}  // namespace

TEST_CASE("single 8x8 view encodes to one token of width D", "[encoder]") {
    auto scene = gen_scene(SceneKind::DirectionSphere, 21, 2, 8, 0);
    ParamStore<float> ps;
    Rng rng(1);
    Encoder<float> enc(ps, tiny_cfg(), rng);
    auto lifts = encode(enc, select_views(scene, {0}));
    CHECK(lifts.emb.rows() == 1);
    CHECK(lifts.emb.cols() == 16);
    CHECK(lifts.rays.size() == 1u);
    CHECK(lifts.source_view[0] == 0);
}

TEST_CASE("token count sums over views and anchors match patch centers", "[encoder]") {
    auto scene = gen_scene(SceneKind::CheckerBox, 22, 3, 32, 1);
    ParamStore<float> ps;
    Rng rng(2);
    Encoder<float> enc(ps, tiny_cfg(), rng);
    auto views = select_views(scene, {0, 1, 2});
    auto lifts = encode(enc, views);
    CHECK(lifts.emb.rows() == 3 * 16);  // 32x32 -> 16 patches per view
    lifts.check_consistent();
    // anchor of token 17 (second view, patch 1) is that view's patch-center ray
    auto rays1 = patch_center_rays(scene.view(1).cam);
    CHECK((lifts.rays[17].dir - rays1[1].dir).norm() < 1e-15);
    CHECK(lifts.source_view[17] == 1);
    CHECK((lifts.source_origins[17] - scene.view(1).cam.center()).norm() == 0.0);
}

TEST_CASE("mixed resolutions are rejected", "[encoder]") {
    auto a = gen_scene(SceneKind::CheckerBox, 23, 2, 16, 0);
    auto b = gen_scene(SceneKind::CheckerBox, 23, 2, 32, 0);
    std::vector<const View*> views{&a.view(0), &b.view(0)};
    CHECK_THROWS_AS(build_patch_matrix(views), std::invalid_argument);
}

TEST_CASE("encoder is permutation equivariant over input tokens", "[encoder]") {
    auto scene = gen_scene(SceneKind::TexturedQuads, 24, 2, 32, 0);
    ParamStore<float> ps;
    Rng rng(3);
    Encoder<float> enc(ps, tiny_cfg(), rng);
    auto patches = build_patch_matrix(select_views(scene, {0, 1}));
    const int n = patches.rows();

    auto out1 = enc.forward_tokens(Var<float>::constant(patches)).value();

    Rng prng(99);
    auto perm = prng.permutation(n);
    Tensor<float> shuffled(n, patches.cols());
    for (int i = 0; i < n; ++i)
        std::copy_n(patches.row_ptr(perm[static_cast<size_t>(i)]), patches.cols(),
                    shuffled.row_ptr(i));
    auto out2 = enc.forward_tokens(Var<float>::constant(shuffled)).value();

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out1.cols(); ++j)
            REQUIRE(std::abs(out2.at(i, j) - out1.at(perm[static_cast<size_t>(i)], j)) < 1e-5f);
}

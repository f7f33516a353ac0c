#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "clift/selection.hpp"
#include "selection_oracle.hpp"

using namespace clift;

namespace {

Camera test_cam(int size, const Vec3& pos = Vec3{}, const Vec3& at = Vec3{0, 0, 1}) {
    Camera c;
    c.width = c.height = size;
    c.fx = c.fy = size * 0.9;
    c.cx = c.cy = size / 2.0;
    const Vec3 z = (at - pos).normalized();
    Vec3 x = Vec3{0, 1, 0}.cross(z);
    if (x.norm() < 1e-9) x = Vec3{1, 0, 0};
    x = x.normalized();
    const Vec3 y = z.cross(x);
    c.rot.at(0, 0) = x.x; c.rot.at(1, 0) = x.y; c.rot.at(2, 0) = x.z;
    c.rot.at(0, 1) = y.x; c.rot.at(1, 1) = y.y; c.rot.at(2, 1) = y.z;
    c.rot.at(0, 2) = z.x; c.rot.at(1, 2) = z.y; c.rot.at(2, 2) = z.z;
    c.trans = pos;
    return c;
}

SelectionCandidates random_candidates(Rng& rng, int n) {
    SelectionCandidates c;
    for (int i = 0; i < n; ++i) {
        c.dirs.push_back(
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1.5)}.normalized());
        c.origins.push_back(Vec3{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    }
    return c;
}


}  // namespace

TEST_CASE("aligned candidate with shared center scores zero", "[selection]") {
    SelectionConfig cfg;
    Camera cam = test_cam(16);
    const auto rays = expanded_patch_rays(cam, cfg.grid, cfg.margin);
    SelectionCandidates cand;
    cand.dirs.push_back(rays[100].dir);  // parallel to patch ray 100
    cand.origins.push_back(cam.center());
    auto d = selection_score(cam, cand, nullptr, cfg);
    CHECK(d.at(100, 0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("hand-computed score from the stated weights", "[selection]") {
    // theta = pi/2, delta = 5, mask = 1 -> 1.0*(pi/2) + 0.02*5 - 0.03*1
    SelectionConfig cfg;
    cfg.momentum = 0.0;  // raw combination, state only supplies the mask
    Camera cam = test_cam(16);  // id rotation, center at origin, looking +z
    const auto rays = expanded_patch_rays(cam, cfg.grid, cfg.margin);
    const int row = 150;
    // candidate direction exactly orthogonal to patch ray `row`
    const Vec3 perp = rays[row].dir.cross(Vec3{0, 1, 0}).normalized();
    REQUIRE(std::abs(perp.dot(rays[row].dir)) < 1e-12);
    SelectionCandidates cand;
    cand.dirs.push_back(perp);
    cand.origins.push_back(Vec3{0, 0, -5});  // 5 units from the target center
    SelectionState st;
    st.has_prev = true;
    st.prev_mask.assign(1, 1);
    st.prev_obj = Tensor<double>(cfg.expanded_cells(), 1);
    auto d = selection_score(cam, cand, &st, cfg);
    const double expect = 1.0 * (kPi / 2) + 0.02 * 5 - 0.03 * 1;
    CHECK(d.at(row, 0) == Catch::Approx(expect).margin(1e-9));
    CHECK(expect == Catch::Approx(1.6408).margin(1e-4));
}

TEST_CASE("momentum halves the stored objective against a zero history", "[selection]") {
    SelectionConfig cfg;  // eta = 0.5
    Camera cam = test_cam(16);
    Rng rng(311);
    auto cand = random_candidates(rng, 6);
    // raw scores, no state
    auto raw = selection_score(cam, cand, nullptr, cfg);
    // with a zeroed previous objective and empty mask
    SelectionState st;
    st.has_prev = true;
    st.prev_mask.assign(6, 0);
    st.prev_obj = Tensor<double>(cfg.expanded_cells(), 6);
    auto mixed = selection_score(cam, cand, &st, cfg);
    for (size_t i = 0; i < raw.data.size(); ++i) {
        CHECK(mixed.data[i] == Catch::Approx(0.5 * raw.data[i]).margin(1e-12));
        CHECK(st.prev_obj.data[i] == mixed.data[i]);  // stored after momentum
    }
}

TEST_CASE("mask lowers a token's raw score by exactly |w_mask|", "[selection]") {
    SelectionConfig cfg;
    cfg.momentum = 0.0;
    Camera cam = test_cam(16);
    Rng rng(313);
    auto cand = random_candidates(rng, 5);
    auto plain = selection_score(cam, cand, nullptr, cfg);
    SelectionState st;
    st.has_prev = true;
    st.prev_mask.assign(5, 0);
    st.prev_mask[2] = 1;
    st.prev_obj = Tensor<double>(cfg.expanded_cells(), 5);
    auto masked = selection_score(cam, cand, &st, cfg);
    for (int i = 0; i < plain.rows(); ++i)
        for (int k = 0; k < 5; ++k) {
            const double diff = masked.at(i, k) - plain.at(i, k);
            if (k == 2)
                CHECK(diff == Catch::Approx(cfg.w_mask).margin(1e-12));
            else
                CHECK(diff == Catch::Approx(0.0).margin(1e-12));
        }
}

TEST_CASE("saturated budget selects every candidate", "[selection]") {
    SelectionConfig cfg;
    Camera cam = test_cam(16);
    Rng rng(317);
    auto cand = random_candidates(rng, 9);
    auto sel = select_tokens(cam, cand, nullptr, cfg, 100);
    CHECK(sel.size() == 9u);
    std::set<int> s(sel.begin(), sel.end());
    CHECK(s.size() == 9u);
}

TEST_CASE("per-patch quota follows integer division of the budget", "[selection]") {
    CHECK(4096 / (24 * 24) == 7);
}

TEST_CASE("selection matches the literal transcription on random instances", "[selection]") {
    Rng rng(331);
    int checked = 0;
    for (int trial = 0; trial < 120; ++trial) {
        SelectionConfig cfg;
        cfg.grid = 2 + rng.uniform_int(4);    // small grids keep the oracle fast
        cfg.margin = rng.uniform_int(3);
        const int n = 2 + rng.uniform_int(29);  // up to 30 candidates
        const int n_views = 1 + rng.uniform_int(3);
        auto cand = random_candidates(rng, n);
        for (int i = 0; i < n; ++i)  // collapse origins to a few source views
            cand.origins[static_cast<size_t>(i)] =
                Vec3{static_cast<double>(i % n_views), 0.3, -1.0};
        Camera cam = test_cam(16, Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                              Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), 2.0});
        const int budget = 1 + rng.uniform_int(2 * n);

        auto got = select_tokens(cam, cand, nullptr, cfg, budget);
        auto expect = oracles::oracle_select(cam, cand, nullptr, nullptr, cfg, budget);

        std::vector<int> got_sorted = got;
        std::sort(got_sorted.begin(), got_sorted.end());
        INFO("trial " << trial << " n=" << n << " budget=" << budget << " grid=" << cfg.grid);
        REQUIRE(got_sorted == expect);
        CHECK(static_cast<int>(got.size()) == std::min(budget, n));
        ++checked;
    }
    CHECK(checked == 120);
}

TEST_CASE("selection with state matches the transcription across frames", "[selection]") {
    Rng rng(337);
    for (int trial = 0; trial < 20; ++trial) {
        SelectionConfig cfg;
        cfg.grid = 3;
        cfg.margin = 1;
        const int n = 5 + rng.uniform_int(20);
        auto cand = random_candidates(rng, n);
        const int budget = 1 + rng.uniform_int(n);

        SelectionState st;
        Camera cam1 = test_cam(16, Vec3{0, 0, -0.2});
        auto got1 = select_tokens(cam1, cand, &st, cfg, budget);
        auto exp1 = oracles::oracle_select(cam1, cand, nullptr, nullptr, cfg, budget);
        // rebuild the oracle state by hand
        Tensor<double> obj1(cfg.expanded_cells(), n);
        {
            SelectionState fresh;
            obj1 = selection_score(cam1, cand, &fresh, cfg);
        }
        std::vector<uint8_t> mask1(static_cast<size_t>(n), 0);
        for (int k : got1) mask1[static_cast<size_t>(k)] = 1;

        Camera cam2 = test_cam(16, Vec3{0.1, 0, -0.2});
        auto got2 = select_tokens(cam2, cand, &st, cfg, budget);
        auto exp2 = oracles::oracle_select(cam2, cand, &mask1, &obj1, cfg, budget);

        std::vector<int> g1 = got1, g2 = got2;
        std::sort(g1.begin(), g1.end());
        std::sort(g2.begin(), g2.end());
        REQUIRE(g1 == exp1);
        REQUIRE(g2 == exp2);
    }
}

TEST_CASE("selection is deterministic and validates the budget", "[selection]") {
    SelectionConfig cfg;
    Camera cam = test_cam(16);
    Rng rng(347);
    auto cand = random_candidates(rng, 14);
    auto a = select_tokens(cam, cand, nullptr, cfg, 5);
    auto b = select_tokens(cam, cand, nullptr, cfg, 5);
    CHECK(a == b);
    CHECK(a.size() == 5u);
    CHECK_THROWS_AS(select_tokens(cam, cand, nullptr, cfg, 0), std::invalid_argument);
    SelectionCandidates empty;
    CHECK_THROWS_AS(select_tokens(cam, empty, nullptr, cfg, 3), std::invalid_argument);
}

TEST_CASE("every selected token is a patch winner or a min-distance admit", "[selection]") {
    // the two admission paths of the procedure, checked directly
    Rng rng(349);
    SelectionConfig cfg;
    cfg.grid = 4;
    cfg.margin = 1;
    const int n = 25;
    auto cand = random_candidates(rng, n);
    Camera cam = test_cam(16);
    const int budget = 10;
    auto sel = select_tokens(cam, cand, nullptr, cfg, budget);

    auto d = selection_score(cam, cand, nullptr, cfg);
    const int p = d.rows();
    const int per = std::max(1, budget / p);
    std::set<int> winners;
    for (int i = 0; i < p; ++i) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return d.at(i, a) < d.at(i, b); });
        for (int t = 0; t < per; ++t) winners.insert(idx[static_cast<size_t>(t)]);
    }
    std::vector<double> dmin(n, 1e300);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < p; ++i) dmin[static_cast<size_t>(k)] = std::min(dmin[static_cast<size_t>(k)], d.at(i, k));
    std::vector<int> by_min(n);
    std::iota(by_min.begin(), by_min.end(), 0);
    std::sort(by_min.begin(), by_min.end(), [&](int a, int b) {
        if (dmin[static_cast<size_t>(a)] != dmin[static_cast<size_t>(b)]) return dmin[static_cast<size_t>(a)] < dmin[static_cast<size_t>(b)];
        return a < b;
    });
    std::set<int> top_by_min(by_min.begin(), by_min.begin() + budget);
    for (int k : sel) {
        const bool admitted = winners.count(k) || top_by_min.count(k);
        CHECK(admitted);
    }
}

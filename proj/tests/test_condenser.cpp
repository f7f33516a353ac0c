#include <catch2/catch_amalgamated.hpp>

#include "clift/condenser.hpp"
#include "oracles.hpp"

using namespace clift;

namespace {

ModelConfig cond_cfg(int dim, int heads, int blocks) {
    ModelConfig cfg;
    cfg.dim = dim;
    cfg.heads = heads;
    cfg.condenser_blocks = blocks;
    return cfg;
}

template <class T>
LiFTSet<T> fake_lifts(Rng& rng, int n, int d) {
    LiFTSet<T> set;
    set.emb = rng.template normal_tensor<T>(n, d, 1.0);
    for (int i = 0; i < n; ++i) {
        set.rays.push_back(PluckerRay::from_origin_dir(
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0}));
        set.source_view.push_back(i % 2);
        set.source_origins.push_back(Vec3{static_cast<double>(i % 2), 0, 0});
    }
    return set;
}

// Literal per-cluster transcription of the condensation equations using the
// naive oracle kernels.
Tensor<double> naive_condense(const Tensor<double>& lift_emb, const ClusterAssignment& a,
                              ParamStore<double>& ps, int blocks, int heads) {
    auto get = [&](const std::string& n) -> const Tensor<double>& { return ps.find(n)->value(); };
    const int k = a.k;
    Tensor<double> centroids(k, lift_emb.cols());
    for (int c = 0; c < k; ++c)
        for (int j = 0; j < lift_emb.cols(); ++j)
            centroids.at(c, j) = lift_emb.at(a.medoid_index[static_cast<size_t>(c)], j);

    std::vector<int> sizes(static_cast<size_t>(k), 0);
    for (int v : a.assignment) sizes[static_cast<size_t>(v)]++;

    for (int b = 0; b < blocks; ++b) {
        const std::string p = "condenser.block" + std::to_string(b);
        auto ln = [&](const Tensor<double>& x, const std::string& name) {
            return oracles::naive_layer_norm(x, get(p + "." + name + ".gamma"),
                                             get(p + "." + name + ".beta"));
        };
        // self-attention over layer-normed centroids
        Tensor<double> cn = ln(centroids, "ln_centroid");
        Tensor<double> s = oracles::naive_mha(cn, cn, cn, get(p + ".sa.wq.w"), get(p + ".sa.wk.w"),
                                              get(p + ".sa.wv.w"), get(p + ".sa.wo.w"), heads);
        // per-cluster cross-attention, one query row at a time
        Tensor<double> members_n = ln(lift_emb, "ln_members");
        Tensor<double> after_ca(k, lift_emb.cols());
        for (int c = 0; c < k; ++c) {
            std::vector<int> kv_rows;
            for (int i = 0; i < static_cast<int>(a.assignment.size()); ++i) {
                const bool is_medoid = a.medoid_index[static_cast<size_t>(c)] == i;
                if (a.assignment[static_cast<size_t>(i)] != c) continue;
                if (sizes[static_cast<size_t>(c)] == 1 ? is_medoid : !is_medoid)
                    kv_rows.push_back(i);
            }
            Tensor<double> q(1, lift_emb.cols());
            for (int j = 0; j < lift_emb.cols(); ++j) q.at(0, j) = s.at(c, j);
            Tensor<double> o = oracles::naive_mha_rows(q, kv_rows, members_n, get(p + ".ca.wq.w"),
                                                       get(p + ".ca.wk.w"), get(p + ".ca.wv.w"),
                                                       get(p + ".ca.wo.w"), heads);
            for (int j = 0; j < lift_emb.cols(); ++j) after_ca.at(c, j) = o.at(0, j);
        }
        // feed-forward over the layer-normed result
        Tensor<double> f = oracles::naive_ffn(ln(after_ca, "ln_ffn"), get(p + ".ffn.fc1.w"),
                                              get(p + ".ffn.fc1.b"), get(p + ".ffn.fc2.w"),
                                              get(p + ".ffn.fc2.b"));
        // residual through the zero-init projection
        centroids = oracles::naive_add(centroids, oracles::naive_linear(f, get(p + ".wz"), nullptr));
    }
    return centroids;
}

}  // namespace

TEST_CASE("fresh condenser is an exact identity on medoid embeddings", "[condenser]") {
    Rng rng(111);
    ParamStore<float> ps;
    Condenser<float> cond(ps, cond_cfg(16, 4, 2), rng);
    auto lifts = fake_lifts<float>(rng, 24, 16);
    auto assign = kmeans(lifts.emb, 6, 3);
    auto clifts = condense(cond, lifts, assign);
    REQUIRE(clifts.emb.rows() == 6);
    for (int c = 0; c < 6; ++c) {
        const int m = assign.medoid_index[static_cast<size_t>(c)];
        for (int j = 0; j < 16; ++j) REQUIRE(clifts.emb.at(c, j) == lifts.emb.at(m, j));
        CHECK(clifts.provenance[static_cast<size_t>(c)] == m);
        CHECK((clifts.rays[static_cast<size_t>(c)].dir - lifts.rays[static_cast<size_t>(m)].dir).norm() == 0.0);
        CHECK(clifts.source_view[static_cast<size_t>(c)] == lifts.source_view[static_cast<size_t>(m)]);
    }
}

TEST_CASE("condenser matches a literal per-cluster transcription", "[condenser]") {
    Rng rng(113);
    ParamStore<double> ps;
    Condenser<double> cond(ps, cond_cfg(8, 2, 2), rng);
    // make wz nonzero so the blocks actually transform
    for (int b = 0; b < 2; ++b) {
        auto* wz = ps.find("condenser.block" + std::to_string(b) + ".wz");
        wz->value() = rng.normal_tensor<double>(8, 8, 0.3);
    }
    auto lifts = fake_lifts<double>(rng, 15, 8);
    auto assign = kmeans(lifts.emb, 4, 7);

    auto got = cond.forward(Var<double>::constant(lifts.emb), assign).value();
    auto expect = naive_condense(lifts.emb, assign, ps, 2, 2);
    REQUIRE(got.rows() == expect.rows());
    for (size_t i = 0; i < got.data.size(); ++i)
        CHECK(std::abs(got.data[i] - expect.data[i]) < 1e-6);
}

TEST_CASE("single cluster holding every token matches the transcription", "[condenser]") {
    Rng rng(127);
    ParamStore<double> ps;
    Condenser<double> cond(ps, cond_cfg(2, 1, 1), rng);
    ps.find("condenser.block0.wz")->value() = rng.normal_tensor<double>(2, 2, 0.5);
    auto lifts = fake_lifts<double>(rng, 7, 2);
    ClusterAssignment a;
    a.k = 1;
    a.assignment.assign(7, 0);
    a.medoid_index = {3};
    auto got = cond.forward(Var<double>::constant(lifts.emb), a).value();
    auto expect = naive_condense(lifts.emb, a, ps, 1, 1);
    for (size_t i = 0; i < got.data.size(); ++i)
        CHECK(std::abs(got.data[i] - expect.data[i]) < 1e-6);
}

TEST_CASE("singleton cluster attends to itself", "[condenser]") {
    Rng rng(131);
    ParamStore<double> ps;
    Condenser<double> cond(ps, cond_cfg(4, 1, 1), rng);
    ps.find("condenser.block0.wz")->value() = rng.normal_tensor<double>(4, 4, 0.5);
    auto lifts = fake_lifts<double>(rng, 5, 4);
    ClusterAssignment a;
    a.k = 2;
    a.assignment = {0, 0, 0, 0, 1};  // token 4 is a singleton
    a.medoid_index = {1, 4};
    auto got = cond.forward(Var<double>::constant(lifts.emb), a).value();
    auto expect = naive_condense(lifts.emb, a, ps, 1, 1);  // oracle uses the medoid itself as kv
    for (size_t i = 0; i < got.data.size(); ++i)
        CHECK(std::abs(got.data[i] - expect.data[i]) < 1e-6);
}

TEST_CASE("output is invariant to member order within clusters", "[condenser]") {
    Rng rng(137);
    ParamStore<float> ps;
    Condenser<float> cond(ps, cond_cfg(16, 4, 2), rng);
    for (int b = 0; b < 2; ++b)
        ps.find("condenser.block" + std::to_string(b) + ".wz")->value() =
            rng.normal_tensor<float>(16, 16, 0.2);
    auto lifts = fake_lifts<float>(rng, 20, 16);
    auto assign = kmeans(lifts.emb, 5, 11);
    auto out1 = cond.forward(Var<float>::constant(lifts.emb), assign).value();

    // permute the token rows (keeping medoid rows' new positions tracked)
    Rng prng(5);
    auto perm = prng.permutation(20);  // new row i holds old row perm[i]
    Tensor<float> emb2(20, 16);
    ClusterAssignment a2;
    a2.k = assign.k;
    a2.assignment.resize(20);
    a2.medoid_index.assign(static_cast<size_t>(assign.k), -1);
    std::vector<int> old_to_new(20);
    for (int i = 0; i < 20; ++i) old_to_new[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    for (int i = 0; i < 20; ++i) {
        std::copy_n(lifts.emb.row_ptr(perm[static_cast<size_t>(i)]), 16, emb2.row_ptr(i));
        a2.assignment[static_cast<size_t>(i)] = assign.assignment[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    for (int c = 0; c < assign.k; ++c)
        a2.medoid_index[static_cast<size_t>(c)] =
            old_to_new[static_cast<size_t>(assign.medoid_index[static_cast<size_t>(c)])];
    auto out2 = cond.forward(Var<float>::constant(emb2), a2).value();

    // centroid rows are in the same cluster order both times
    for (size_t i = 0; i < out1.data.size(); ++i)
        CHECK(std::abs(out1.data[i] - out2.data[i]) < 1e-5f);
}

TEST_CASE("gradient reaches wz on the first step", "[condenser]") {
    Rng rng(139);
    ParamStore<float> ps;
    Condenser<float> cond(ps, cond_cfg(8, 2, 2), rng);
    auto lifts = fake_lifts<float>(rng, 12, 8);
    auto assign = kmeans(lifts.emb, 3, 1);
    ps.zero_grad();
    auto out = cond.forward(Var<float>::constant(lifts.emb), assign);
    auto loss = mean_all(mul(out, out));
    backward(loss);
    double norm0 = 0;
    for (float g : ps.find("condenser.block0.wz")->grad().data) norm0 += static_cast<double>(g) * g;
    CHECK(norm0 > 0.0);
}

TEST_CASE("mismatched token counts are rejected", "[condenser]") {
    Rng rng(149);
    ParamStore<float> ps;
    Condenser<float> cond(ps, cond_cfg(8, 2, 1), rng);
    auto lifts = fake_lifts<float>(rng, 12, 8);
    auto assign = kmeans(lifts.emb, 3, 1);
    auto short_emb = rng.normal_tensor<float>(11, 8, 1.0);
    CHECK_THROWS_AS(cond.forward(Var<float>::constant(short_emb), assign), std::invalid_argument);
}

TEST_CASE("clift files roundtrip bitwise and reject corruption", "[condenser]") {
    Rng rng(151);
    CLiFTSet<float> set;
    const int n = 13, d = 6;
    set.emb = rng.normal_tensor<float>(n, d, 1.0);
    for (int i = 0; i < n; ++i) {
        // float-valued rays so the f32 file width is exact
        PluckerRay r = PluckerRay::from_origin_dir(
            Vec3{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)},
            Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0});
        r.dir = Vec3{static_cast<float>(r.dir.x), static_cast<float>(r.dir.y), static_cast<float>(r.dir.z)};
        r.moment = Vec3{static_cast<float>(r.moment.x), static_cast<float>(r.moment.y),
                        static_cast<float>(r.moment.z)};
        set.rays.push_back(r);
        set.source_view.push_back(rng.uniform_int(4));
        set.source_origins.push_back(Vec3{});
    }
    save_clift(set, "t.clift");
    CHECK(std::filesystem::file_size("t.clift") == clift_file_bytes(n, d));

    auto back = load_clift<float>("t.clift");
    REQUIRE(back.count() == set.count());
    for (size_t i = 0; i < set.emb.data.size(); ++i) REQUIRE(back.emb.data[i] == set.emb.data[i]);
    for (size_t i = 0; i < set.count(); ++i) {
        REQUIRE(back.rays[i].dir.x == set.rays[i].dir.x);
        REQUIRE(back.rays[i].moment.z == set.rays[i].moment.z);
        REQUIRE(back.source_view[i] == set.source_view[i]);
    }
    // save(load(f)) reproduces the bytes
    save_clift(back, "t2.clift");
    std::ifstream f1("t.clift", std::ios::binary), f2("t2.clift", std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);

    {
        std::ofstream os("t_bad.clift", std::ios::binary);
        os.write(b1.data(), 8);  // truncate inside the header
    }
    CHECK_THROWS_AS(load_clift<float>("t_bad.clift"), std::runtime_error);
    {
        auto corrupt = b1;
        corrupt[4] = 99;  // version
        std::ofstream os("t_bad.clift", std::ios::binary);
        os.write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
    }
    CHECK_THROWS_AS(load_clift<float>("t_bad.clift"), std::runtime_error);
    std::remove("t.clift");
    std::remove("t2.clift");
    std::remove("t_bad.clift");
}

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <future>
#include <iostream>

#include "clift/checkpoint.hpp"
#include "clift/config.hpp"
#include "clift/metrics.hpp"
#include "clift/optim.hpp"

namespace clift {

template <class T>
struct CliftModel {
    ModelConfig cfg;
    ParamStore<T> params;
    Encoder<T> encoder;
    Condenser<T> condenser;
    Renderer<T> renderer;

    CliftModel(const ModelConfig& c, uint64_t init_seed) : cfg(c) {
        Rng rng(init_seed ^ 0xC11F7000DEADBEEFULL);
        encoder = Encoder<T>(params, cfg, rng);
        condenser = Condenser<T>(params, cfg, rng);
        renderer = Renderer<T>(params, cfg, rng);
    }
};

using Model = CliftModel<float>;

// ---- pipeline helpers ----

template <class T>
LiFTSet<T> scene_lifts(const CliftModel<T>& model, const Scene& scene, int n_input) {
    return encode(model.encoder, select_views(scene, canonical_inputs(scene, n_input)));
}

template <class T>
CLiFTSet<T> scene_clifts(const CliftModel<T>& model, const LiFTSet<T>& lifts, int n_storage,
                         uint64_t seed, int kmeans_iters = 50) {
    auto assign = kmeans(lifts.emb, n_storage, seed, kmeans_iters);
    return condense(model.condenser, lifts, assign);
}

template <class T>
Image render_with_budget(const CliftModel<T>& model, const CLiFTSet<T>& clifts,
                         const Camera& target, int n_render, const SelectionConfig& sel,
                         SelectionState* state = nullptr, std::vector<int>* selected_out = nullptr) {
    if (n_render > static_cast<int>(clifts.count()))
        throw std::invalid_argument("render budget " + std::to_string(n_render) +
                                    " exceeds stored token count " + std::to_string(clifts.count()));
    auto cand = selection_candidates(clifts);
    auto picked = select_tokens(target, cand, state, sel, n_render);
    if (selected_out) *selected_out = picked;
    Tensor<T> emb(static_cast<int>(picked.size()), clifts.emb.cols());
    std::vector<PluckerRay> rays;
    for (size_t i = 0; i < picked.size(); ++i) {
        std::copy_n(clifts.emb.row_ptr(picked[i]), clifts.emb.cols(), emb.row_ptr(static_cast<int>(i)));
        rays.push_back(clifts.rays[static_cast<size_t>(picked[i])]);
    }
    return render_view(model.renderer, target, emb, rays);
}

// ---- stage 1: encoder + renderer, every token visible to the decoder ----

struct TrainOptions {
    int steps = 3000;
    int batch_size = 2;
    int n_input_views = 4;
    // fixed: encode the canonical input set every step, mirroring clip
    // preprocessing with designated context views; random: resample the
    // input subset per step.
    bool fixed_inputs = true;
    uint64_t seed = 1;
    AdamWConfig adam;
    LossConfig loss;
    int log_every = 100;
    std::ostream* log = nullptr;
};

namespace detail {

inline void check_loss_finite(double loss, int step) {
    if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: loss " + std::to_string(loss) + " at step " +
                                 std::to_string(step + 1));
}

// inputs + one target, drawn without replacement from the trainable split
inline std::pair<std::vector<int>, int> sample_step_views(const Scene& scene, int n_input,
                                                          bool fixed_inputs, Rng& rng) {
    const auto& pool = scene.input_views;
    if (static_cast<int>(pool.size()) < n_input + 1)
        throw std::invalid_argument("scene " + scene.id + " has " + std::to_string(pool.size()) +
                                    " trainable views; need inputs+1 = " +
                                    std::to_string(n_input + 1));
    if (fixed_inputs) {
        auto inputs = canonical_inputs(scene, n_input);
        std::vector<int> targets;
        for (int v : pool)
            if (std::find(inputs.begin(), inputs.end(), v) == inputs.end()) targets.push_back(v);
        const int target = targets[static_cast<size_t>(rng.uniform_int(static_cast<int>(targets.size())))];
        return {inputs, target};
    }
    auto order = rng.permutation(static_cast<int>(pool.size()));
    std::vector<int> inputs;
    for (int i = 0; i < n_input; ++i) inputs.push_back(pool[static_cast<size_t>(order[i])]);
    const int target = pool[static_cast<size_t>(order[n_input])];
    return {inputs, target};
}

}  // namespace detail

template <class T>
std::vector<double> train_stage1(CliftModel<T>& model, const std::vector<Scene>& scenes,
                                 const TrainOptions& opt) {
    if (scenes.empty()) throw std::invalid_argument("stage 1: empty dataset");
    Rng rng(opt.seed);
    AdamW<T> adam(opt.adam);
    adam.add_all(model.params);

    std::vector<double> history;
    for (int step = 0; step < opt.steps; ++step) {
        adam.zero_grad();
        double step_loss = 0;
        for (int b = 0; b < opt.batch_size; ++b) {
            const Scene& scene = scenes[static_cast<size_t>(rng.uniform_int(static_cast<int>(scenes.size())))];
            auto [inputs, target] =
                detail::sample_step_views(scene, opt.n_input_views, opt.fixed_inputs, rng);
            auto views = select_views(scene, inputs);
            auto patches = build_patch_matrix(views);
            Var<T> lifts = model.encoder.forward_tokens(Var<T>::constant(patches.template cast<T>()));
            const Camera& tcam = scene.view(target).cam;
            Var<T> queries = Var<T>::constant(query_grid(tcam).template cast<T>());
            Var<T> pred = model.renderer.forward_tokens(queries, lifts);
            Var<T> loss = scale(render_loss(pred, scene.view(target).image, opt.loss),
                                1.0 / opt.batch_size);
            backward(loss);
            step_loss += static_cast<double>(loss.value().data[0]);
        }
        detail::check_loss_finite(step_loss, step);
        adam.step();
        history.push_back(step_loss);
        if (opt.log && ((step + 1) % opt.log_every == 0 || step == 0))
            *opt.log << "stage1 step " << (step + 1) << "/" << opt.steps << " loss " << step_loss
                     << " lr " << lr_at_step(opt.adam, adam.step_count()) << "\n";
    }
    return history;
}

// ---- stage 2: condenser + renderer over frozen-encoder tokens ----

// Everything stage 2 needs per scene, computed once up front. The encoder is
// frozen and the canonical input set is fixed, so LiFTs and the cluster
// assignment are constants; this mirrors the offline assignment cache.
template <class T>
struct Stage2SceneCache {
    LiFTSet<T> lifts;
    ClusterAssignment assignment;
    SelectionCandidates candidates;  // anchored at the medoid tokens
    std::vector<int> train_targets;  // trainable views outside the canonical inputs
};

template <class T>
Stage2SceneCache<T> build_stage2_cache(const CliftModel<T>& model, const Scene& scene,
                                       const ClusterAssignment& assignment, int n_input) {
    Stage2SceneCache<T> c;
    c.lifts = scene_lifts(model, scene, n_input);
    if (c.lifts.count() != assignment.assignment.size())
        throw std::invalid_argument("assignment cache does not match scene " + scene.id +
                                    " token count");
    c.assignment = assignment;
    for (int m : assignment.medoid_index) {
        c.candidates.dirs.push_back(c.lifts.rays[static_cast<size_t>(m)].dir);
        c.candidates.origins.push_back(c.lifts.source_origins[static_cast<size_t>(m)]);
    }
    auto canon = canonical_inputs(scene, n_input);
    for (int v : scene.input_views)
        if (std::find(canon.begin(), canon.end(), v) == canon.end()) c.train_targets.push_back(v);
    if (c.train_targets.empty())
        throw std::invalid_argument("scene " + scene.id +
                                    " has no trainable target outside the canonical inputs");
    return c;
}

struct Stage2Options : TrainOptions {
    std::vector<int> budget_ladder = {128, 64, 32, 16};
    SelectionConfig selection;
};

template <class T>
std::vector<double> train_stage2(CliftModel<T>& model, const std::vector<Scene>& scenes,
                                 const std::vector<ClusterAssignment>& assignments,
                                 const Stage2Options& opt, double renderer_lr_scale = 0.1) {
    if (scenes.empty()) throw std::invalid_argument("stage 2: empty dataset");
    if (scenes.size() != assignments.size())
        throw std::invalid_argument("stage 2: need one assignment cache per scene");
    if (opt.budget_ladder.empty()) throw std::invalid_argument("stage 2: empty budget ladder");

    std::vector<Stage2SceneCache<T>> cache;
    for (size_t s = 0; s < scenes.size(); ++s)
        cache.push_back(build_stage2_cache(model, scenes[s], assignments[s], opt.n_input_views));

    Rng rng(opt.seed);
    AdamW<T> adam(opt.adam);
    adam.add_params(model.params,
                    [](const std::string& n) { return n.rfind("condenser.", 0) == 0; }, 1.0);
    adam.add_params(model.params,
                    [](const std::string& n) { return n.rfind("renderer.", 0) == 0; },
                    renderer_lr_scale);

    std::vector<double> history;
    for (int step = 0; step < opt.steps; ++step) {
        adam.zero_grad();
        double step_loss = 0;
        for (int b = 0; b < opt.batch_size; ++b) {
            const size_t si = static_cast<size_t>(rng.uniform_int(static_cast<int>(scenes.size())));
            const Scene& scene = scenes[si];
            auto& sc = cache[si];
            const int target =
                sc.train_targets[static_cast<size_t>(rng.uniform_int(static_cast<int>(sc.train_targets.size())))];
            const int n_render = opt.budget_ladder[static_cast<size_t>(
                rng.uniform_int(static_cast<int>(opt.budget_ladder.size())))];

            Var<T> condensed =
                model.condenser.forward(Var<T>::constant(sc.lifts.emb), sc.assignment);
            const Camera& tcam = scene.view(target).cam;
            auto picked = select_tokens(tcam, sc.candidates, nullptr, opt.selection,
                                        std::min<int>(n_render, static_cast<int>(sc.candidates.count())));
            Var<T> tokens = gather_rows(condensed, picked);
            Var<T> queries = Var<T>::constant(query_grid(tcam).template cast<T>());
            Var<T> pred = model.renderer.forward_tokens(queries, tokens);
            Var<T> loss = scale(render_loss(pred, scene.view(target).image, opt.loss),
                                1.0 / opt.batch_size);
            backward(loss);
            step_loss += static_cast<double>(loss.value().data[0]);
        }
        detail::check_loss_finite(step_loss, step);
        adam.step();
        history.push_back(step_loss);
        if (opt.log && ((step + 1) % opt.log_every == 0 || step == 0))
            *opt.log << "stage2 step " << (step + 1) << "/" << opt.steps << " loss " << step_loss
                     << " lr " << lr_at_step(opt.adam, adam.step_count()) << "\n";
    }
    return history;
}

// ---- evaluation ----

struct EvalCell {
    std::string scene_id;
    int n_views = 0;
    int n_storage = 0;
    int n_render = 0;
    double psnr_db = 0;
    double ssim_val = 0;
    double bytes = 0;
    double flops = 0;
    double fps = 0;
};

struct EvalReport {
    std::vector<EvalCell> rows;  // one per (scene, N_s, N_r)

    // mean over scenes for one (N_s, N_r) cell
    double mean_psnr(int ns, int nr) const {
        double s = 0;
        int n = 0;
        for (const auto& r : rows)
            if (r.n_storage == ns && r.n_render == nr) {
                s += r.psnr_db;
                ++n;
            }
        if (n == 0) throw std::invalid_argument("no rows for the requested cell");
        return s / n;
    }

    static std::string csv_header() { return "scene_id,n_views,N_s,N_r,psnr_db,ssim,bytes,flops,fps"; }

    std::string to_csv() const {
        std::ostringstream os;
        os << csv_header() << "\n";
        os.precision(10);
        for (const auto& r : rows)
            os << r.scene_id << "," << r.n_views << "," << r.n_storage << "," << r.n_render << ","
               << r.psnr_db << "," << r.ssim_val << "," << r.bytes << "," << r.flops << ","
               << r.fps << "\n";
        return os.str();
    }
};

// Median wall-clock FPS of the render op alone.
template <class T>
double measure_render_fps(const Renderer<T>& rend, const Camera& target, const Tensor<T>& emb,
                          const std::vector<PluckerRay>& rays, int warmups = 3, int runs = 20) {
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmups; ++i) render_view(rend, target, emb, rays);
    std::vector<double> secs;
    for (int i = 0; i < runs; ++i) {
        const auto t0 = clock::now();
        render_view(rend, target, emb, rays);
        const auto t1 = clock::now();
        secs.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(secs.begin(), secs.end());
    const double median = secs[secs.size() / 2];
    return 1.0 / median;
}

struct EvalOptions {
    std::vector<int> ns_list = {128};
    std::vector<int> nr_list = {128, 64, 32, 16};
    int n_input_views = 4;
    uint64_t seed = 1;
    int kmeans_iters = 50;
    SelectionConfig selection;
    bool measure_fps = true;
    int fps_warmups = 3;
    int fps_runs = 20;
    int threads = 1;
};

// Full pipeline over the held-out targets of every scene: cluster, condense,
// select, render, score. One row per (scene, N_s, N_r) with N_r <= N_s.
template <class T>
EvalReport evaluate(const CliftModel<T>& model, const std::vector<Scene>& scenes,
                    const EvalOptions& opt) {
    EvalReport report;
    std::vector<std::vector<EvalCell>> per_scene(scenes.size());

    auto eval_scene = [&](size_t si) {
        const Scene& scene = scenes[si];
        if (scene.target_views.empty())
            throw std::invalid_argument("scene " + scene.id + " has no held-out targets");
        auto lifts = scene_lifts(model, scene, opt.n_input_views);
        for (int ns : opt.ns_list) {
            if (ns > static_cast<int>(lifts.count())) continue;
            auto clifts = scene_clifts(model, lifts, ns, opt.seed, opt.kmeans_iters);
            for (int nr : opt.nr_list) {
                if (nr > ns) continue;
                EvalCell cell;
                cell.scene_id = scene.id;
                cell.n_views = static_cast<int>(scene.views.size());
                cell.n_storage = ns;
                cell.n_render = nr;
                cell.bytes = static_cast<double>(clift_file_bytes(ns, model.cfg.dim));
                double psnr_sum = 0, ssim_sum = 0;
                bool measured = false;
                for (int tv : scene.target_views) {
                    const Camera& tcam = scene.view(tv).cam;
                    std::vector<int> picked;
                    Image img = render_with_budget(model, clifts, tcam, nr, opt.selection,
                                                   nullptr, &picked);
                    psnr_sum += psnr(img, scene.view(tv).image);
                    ssim_sum += ssim(img, scene.view(tv).image);
                    if (!measured) {
                        const int n_queries = (tcam.width / kPatch) * (tcam.height / kPatch);
                        cell.flops = flops_estimate(model.cfg, n_queries, static_cast<int>(picked.size()));
                        if (opt.measure_fps) {
                            Tensor<T> emb(static_cast<int>(picked.size()), clifts.emb.cols());
                            std::vector<PluckerRay> rays;
                            for (size_t i = 0; i < picked.size(); ++i) {
                                std::copy_n(clifts.emb.row_ptr(picked[i]), clifts.emb.cols(),
                                            emb.row_ptr(static_cast<int>(i)));
                                rays.push_back(clifts.rays[static_cast<size_t>(picked[i])]);
                            }
                            cell.fps = measure_render_fps(model.renderer, tcam, emb, rays,
                                                          opt.fps_warmups, opt.fps_runs);
                        }
                        measured = true;
                    }
                }
                cell.psnr_db = psnr_sum / scene.target_views.size();
                cell.ssim_val = ssim_sum / scene.target_views.size();
                per_scene[si].push_back(std::move(cell));
            }
        }
    };

    if (opt.threads > 1 && scenes.size() > 1) {
        std::vector<std::future<void>> jobs;
        std::atomic<size_t> next{0};
        const int workers = std::min<int>(opt.threads, static_cast<int>(scenes.size()));
        for (int w = 0; w < workers; ++w)
            jobs.push_back(std::async(std::launch::async, [&]() {
                for (size_t si = next.fetch_add(1); si < scenes.size(); si = next.fetch_add(1))
                    eval_scene(si);
            }));
        for (auto& j : jobs) j.get();
    } else {
        for (size_t si = 0; si < scenes.size(); ++si) eval_scene(si);
    }

    for (auto& cells : per_scene)
        for (auto& c : cells) report.rows.push_back(std::move(c));
    return report;
}

// ---- trajectory rendering ----

// Smooth camera path through the scene's input views: positions and forward
// axes are piecewise-linearly interpolated, cameras re-orthonormalized via
// look-at.
inline std::vector<Camera> interpolate_camera_path(const Scene& scene, int n_frames) {
    if (n_frames < 1) throw std::invalid_argument("trajectory: need at least one frame");
    std::vector<const View*> vs = select_views(scene, scene.input_views);
    if (vs.size() < 2) throw std::invalid_argument("trajectory: need at least two input views");
    std::vector<Camera> path;
    const size_t segs = vs.size() - 1;
    for (int f = 0; f < n_frames; ++f) {
        const double t = n_frames == 1 ? 0.0 : static_cast<double>(f) / (n_frames - 1);
        const double x = t * segs;
        const size_t s = std::min(static_cast<size_t>(x), segs - 1);
        const double u = x - s;
        const Camera &a = vs[s]->cam, &b = vs[s + 1]->cam;
        const Vec3 pos = a.center() * (1 - u) + b.center() * u;
        const Vec3 fa{a.rot.at(0, 2), a.rot.at(1, 2), a.rot.at(2, 2)};
        const Vec3 fb{b.rot.at(0, 2), b.rot.at(1, 2), b.rot.at(2, 2)};
        const Vec3 fwd = (fa * (1 - u) + fb * u).normalized();
        Camera cam = make_lookat_camera(pos, pos + fwd, a.width, a.height);
        cam.fx = a.fx;
        cam.fy = a.fy;
        cam.cx = a.cx;
        cam.cy = a.cy;
        path.push_back(cam);
    }
    return path;
}

// Per-frame selection (optionally carrying momentum and the previous-frame
// mask) followed by rendering.
template <class T>
std::vector<Image> render_trajectory(const CliftModel<T>& model, const CLiFTSet<T>& clifts,
                                     const std::vector<Camera>& path, int n_render,
                                     const SelectionConfig& sel, bool use_state,
                                     std::vector<std::vector<int>>* selections_out = nullptr) {
    if (path.empty()) throw std::invalid_argument("trajectory: empty camera path");
    SelectionState state;
    std::vector<Image> frames;
    for (const Camera& cam : path) {
        std::vector<int> picked;
        frames.push_back(render_with_budget(model, clifts, cam,
                                            std::min<int>(n_render, static_cast<int>(clifts.count())),
                                            sel, use_state ? &state : nullptr, &picked));
        if (selections_out) selections_out->push_back(std::move(picked));
    }
    return frames;
}

// ---- dataset + checkpoint glue ----

inline std::vector<Scene> load_dataset(const std::string& root) {
    std::vector<Scene> scenes;
    for (const auto& dir : list_scene_dirs(root)) scenes.push_back(load_scene(dir));
    return scenes;
}

template <class T>
void require_same_params(const ParamStore<T>& a, const ParamStore<T>& b, const char* what) {
    if (a.entries.size() != b.entries.size()) throw std::logic_error(std::string(what) + ": store size");
    for (size_t i = 0; i < a.entries.size(); ++i) {
        const auto& x = a.entries[i].var.value();
        const auto& y = b.entries[i].var.value();
        if (x.shape != y.shape) throw std::logic_error(std::string(what) + ": shape");
        for (size_t j = 0; j < x.data.size(); ++j)
            if (x.data[j] != y.data[j])
                throw std::logic_error(std::string(what) + ": parameter " + a.entries[i].name +
                                       " differs at element " + std::to_string(j));
    }
}

}  // namespace clift

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>

#include "clift/harness.hpp"

namespace fs = std::filesystem;
using namespace clift;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key-value config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed")->each([&args](const std::string&) {
        args.seed_set = true;
    });
}

Config resolve_config(const CommonArgs& args, const std::string& ckpt_path = "") {
    Config cfg;
    if (!args.config_path.empty()) {
        cfg.load_file(args.config_path);
    } else if (!ckpt_path.empty()) {
        // fall back to the config snapshot written next to the checkpoint
        const fs::path snap = fs::path(ckpt_path).parent_path() / "config.txt";
        if (fs::exists(snap)) cfg.load_file(snap.string());
    }
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

void write_config_snapshot(const Config& cfg, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "config.txt");
    os << cfg.to_text();
}

Model load_model(const Config& cfg, const std::string& ckpt) {
    Model model(cfg.model(), cfg.seed);
    load_checkpoint(model.params, ckpt);
    return model;
}

TrainOptions train_options(const Config& cfg) {
    TrainOptions opt;
    opt.steps = cfg.steps;
    opt.batch_size = cfg.batch_size;
    opt.n_input_views = cfg.n_input_views;
    opt.fixed_inputs = cfg.input_sampling == "fixed";
    opt.seed = cfg.seed;
    opt.adam.peak_lr = cfg.peak_lr;
    opt.adam.beta1 = cfg.beta1;
    opt.adam.beta2 = cfg.beta2;
    opt.adam.weight_decay = cfg.weight_decay;
    opt.adam.warmup_steps = cfg.warmup_steps;
    opt.adam.total_steps = cfg.steps;
    opt.loss = cfg.loss();
    opt.log_every = cfg.log_every;
    opt.log = &std::cout;
    return opt;
}

std::string frame_name(const std::string& dir, const char* prefix, size_t idx, const char* ext) {
    std::ostringstream os;
    os << dir << "/" << prefix << std::setfill('0') << std::setw(4) << idx << ext;
    return os.str();
}

int run_gen_data(const CommonArgs& common) {
    Config cfg = resolve_config(common);
    fs::create_directories(common.out_dir);
    write_config_snapshot(cfg, common.out_dir);
    const SceneKind kind = parse_scene_kind(cfg.scene_kind);
    for (int s = 0; s < cfg.n_scenes; ++s) {
        const uint64_t scene_seed = cfg.seed * 1000003ULL + static_cast<uint64_t>(s);
        Scene scene = gen_scene(kind, scene_seed, cfg.n_views, cfg.image_size, cfg.n_targets);
        std::ostringstream dir;
        dir << common.out_dir << "/scene_" << std::setfill('0') << std::setw(3) << s;
        save_scene(scene, dir.str());
        std::cout << "wrote " << dir.str() << " (" << cfg.n_views << " views, "
                  << cfg.image_size << "x" << cfg.image_size << ", kind " << cfg.scene_kind << ")\n";
    }
    return 0;
}

int run_train(const CommonArgs& common, int stage, const std::string& data_dir,
              const std::string& ckpt_path, const std::string& kmas_dir) {
    Config cfg = resolve_config(common, ckpt_path);
    auto scenes = load_dataset(data_dir);
    fs::create_directories(common.out_dir);
    write_config_snapshot(cfg, common.out_dir);

    if (stage == 1) {
        Model model(cfg.model(), cfg.seed);
        train_stage1(model, scenes, train_options(cfg));
        const std::string out = (fs::path(common.out_dir) / "stage1.ckpt").string();
        save_checkpoint(model.params, out);
        std::cout << "wrote " << out << "\n";
        return 0;
    }
    if (ckpt_path.empty()) throw std::runtime_error("train --stage 2 requires --ckpt <stage1.ckpt>");
    if (kmas_dir.empty()) throw std::runtime_error("train --stage 2 requires --kmas <cache dir>");

    Model model = load_model(cfg, ckpt_path);
    std::vector<ClusterAssignment> assigns;
    for (const auto& s : scenes) {
        const std::string path = (fs::path(kmas_dir) / (s.id + ".kmas")).string();
        if (!fs::exists(path))
            throw std::runtime_error("missing assignment cache " + path + "; run `cluster` first");
        assigns.push_back(load_kmas(path));
    }
    Stage2Options opt;
    static_cast<TrainOptions&>(opt) = train_options(cfg);
    opt.budget_ladder = cfg.budget_ladder();
    opt.selection = cfg.selection();
    train_stage2(model, scenes, assigns, opt, cfg.renderer_lr_scale);
    const std::string out = (fs::path(common.out_dir) / "stage2.ckpt").string();
    save_checkpoint(model.params, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_cluster(const CommonArgs& common, const std::string& data_dir, const std::string& ckpt) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    auto scenes = load_dataset(data_dir);
    fs::create_directories(common.out_dir);
    for (const auto& s : scenes) {
        auto lifts = scene_lifts(model, s, cfg.n_input_views);
        auto assign = kmeans(lifts.emb, cfg.n_storage, cfg.seed, cfg.kmeans_iters);
        const std::string out = (fs::path(common.out_dir) / (s.id + ".kmas")).string();
        save_kmas(assign, out);
        std::cout << "wrote " << out << " (K=" << assign.k << ", N=" << assign.assignment.size()
                  << ", objective " << assign.objective << ")\n";
    }
    return 0;
}

int run_condense(const CommonArgs& common, const std::string& data_dir, const std::string& ckpt,
                 const std::string& kmas_dir) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    auto scenes = load_dataset(data_dir);
    fs::create_directories(common.out_dir);
    for (const auto& s : scenes) {
        auto lifts = scene_lifts(model, s, cfg.n_input_views);
        ClusterAssignment assign;
        if (!kmas_dir.empty()) {
            assign = load_kmas((fs::path(kmas_dir) / (s.id + ".kmas")).string());
        } else {
            assign = kmeans(lifts.emb, cfg.n_storage, cfg.seed, cfg.kmeans_iters);
        }
        auto clifts = condense(model.condenser, lifts, assign);
        const std::string out = (fs::path(common.out_dir) / (s.id + ".clft")).string();
        save_clift(clifts, out);
        std::cout << "wrote " << out << " (" << clifts.count() << " tokens, "
                  << clift_file_bytes(static_cast<int>(clifts.count()), model.cfg.dim)
                  << " bytes)\n";
    }
    return 0;
}

int run_render(const CommonArgs& common, const std::string& scene_dir, const std::string& ckpt,
               const std::string& clift_path, int target, int n_render) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    Scene scene = load_scene(scene_dir);
    if (target < 0 || target >= static_cast<int>(scene.views.size()))
        throw std::runtime_error("target view " + std::to_string(target) + " out of range");

    CLiFTSet<float> clifts;
    if (!clift_path.empty()) {
        clifts = load_clift<float>(clift_path);
        reattach_origins(clifts, select_views(scene, canonical_inputs(scene, cfg.n_input_views)));
    } else {
        auto lifts = scene_lifts(model, scene, cfg.n_input_views);
        clifts = scene_clifts(model, lifts, std::min(cfg.n_storage, static_cast<int>(lifts.count())),
                              cfg.seed, cfg.kmeans_iters);
    }
    const int budget = n_render > 0 ? n_render : static_cast<int>(clifts.count());
    if (budget > static_cast<int>(clifts.count()))
        throw std::runtime_error("--n-render exceeds the stored token count");

    fs::create_directories(common.out_dir);
    Image img = render_with_budget(model, clifts, scene.view(target).cam, budget, cfg.selection());
    const std::string base = common.out_dir + "/render_" + scene.id + "_v" + std::to_string(target);
    save_image(img, base + ".png");
    save_image(img, base + ".ppm");
    std::cout << "wrote " << base << ".png and .ppm  (budget " << budget << ", PSNR vs ground truth "
              << psnr(img, scene.view(target).image) << " dB)\n";
    return 0;
}

EvalOptions eval_options(const Config& cfg) {
    EvalOptions opt;
    opt.ns_list = cfg.sweep_ns;
    opt.nr_list.clear();
    opt.n_input_views = cfg.n_input_views;
    opt.seed = cfg.seed;
    opt.kmeans_iters = cfg.kmeans_iters;
    opt.selection = cfg.selection();
    opt.fps_warmups = cfg.fps_warmups;
    opt.fps_runs = cfg.fps_runs;
    opt.threads = cfg.threads;
    return opt;
}

int run_eval(const CommonArgs& common, const std::string& data_dir, const std::string& ckpt) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    auto scenes = load_dataset(data_dir);
    EvalOptions opt = eval_options(cfg);
    opt.ns_list = {cfg.n_storage};
    for (int d : cfg.budget_divisors) opt.nr_list.push_back(std::max(1, cfg.n_storage / d));
    auto report = evaluate(model, scenes, opt);

    fs::create_directories(common.out_dir);
    const std::string csv_path = common.out_dir + "/eval.csv";
    std::ofstream os(csv_path);
    os << report.to_csv();
    std::cout << report.to_csv();
    for (int nr : opt.nr_list)
        std::cout << "mean PSNR @ N_r=" << nr << ": " << report.mean_psnr(opt.ns_list[0], nr)
                  << " dB\n";
    std::cout << "wrote " << csv_path << "\n";
    return 0;
}

int run_sweep(const CommonArgs& common, const std::string& data_dir, const std::string& ckpt) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    auto scenes = load_dataset(data_dir);
    EvalOptions opt = eval_options(cfg);
    for (int ns : cfg.sweep_ns)
        for (int d : cfg.budget_divisors) {
            const int nr = std::max(1, ns / d);
            if (std::find(opt.nr_list.begin(), opt.nr_list.end(), nr) == opt.nr_list.end())
                opt.nr_list.push_back(nr);
        }
    auto report = evaluate(model, scenes, opt);
    fs::create_directories(common.out_dir);
    const std::string csv_path = common.out_dir + "/sweep.csv";
    std::ofstream os(csv_path);
    os << report.to_csv();
    std::cout << report.to_csv() << "wrote " << csv_path << "\n";
    return 0;
}

int run_trajectory(const CommonArgs& common, const std::string& scene_dir, const std::string& ckpt) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    Scene scene = load_scene(scene_dir);
    auto lifts = scene_lifts(model, scene, cfg.n_input_views);
    auto clifts = scene_clifts(model, lifts, std::min(cfg.n_storage, static_cast<int>(lifts.count())),
                               cfg.seed, cfg.kmeans_iters);
    auto path = interpolate_camera_path(scene, cfg.traj_frames);
    std::vector<std::vector<int>> selections;
    auto frames = render_trajectory(model, clifts, path, cfg.traj_n_render, cfg.selection(),
                                    cfg.traj_use_state, &selections);
    fs::create_directories(common.out_dir);
    for (size_t f = 0; f < frames.size(); ++f)
        save_image(frames[f], frame_name(common.out_dir, "frame_", f, ".png"));
    std::cout << "wrote " << frames.size() << " frames to " << common.out_dir
              << " (budget " << cfg.traj_n_render << ", state "
              << (cfg.traj_use_state ? "on" : "off") << ")\n";
    return 0;
}

int run_viz_clusters(const CommonArgs& common, const std::string& scene_dir,
                     const std::string& ckpt) {
    Config cfg = resolve_config(common, ckpt);
    Model model = load_model(cfg, ckpt);
    Scene scene = load_scene(scene_dir);
    auto views = select_views(scene, canonical_inputs(scene, cfg.n_input_views));
    auto lifts = encode(model.encoder, views);
    auto assign = kmeans(lifts.emb, std::min(cfg.n_storage, static_cast<int>(lifts.count())),
                         cfg.seed, cfg.kmeans_iters);
    auto overlays = render_cluster_overlays(assign, views);
    fs::create_directories(common.out_dir);
    for (size_t i = 0; i < overlays.size(); ++i)
        save_image(overlays[i], frame_name(common.out_dir, "clusters_view_", i, ".png"));
    std::cout << "wrote " << overlays.size() << " overlays to " << common.out_dir << " (K="
              << assign.k << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compressed light-field tokens: construction, rendering, evaluation"};
    app.require_subcommand(1);

    CommonArgs common;
    int stage = 1;
    std::string data_dir, scene_dir, ckpt, kmas_dir, clift_path;
    int target = 0, n_render = 0;

    auto* gen = app.add_subcommand("gen-data", "generate synthetic scene datasets");
    add_common(gen, common);

    auto* train = app.add_subcommand("train", "train stage 1 (encoder+renderer) or stage 2");
    add_common(train, common);
    train->add_option("--stage", stage, "1 or 2")->check(CLI::Range(1, 2));
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--ckpt", ckpt, "stage-1 checkpoint (stage 2 only)");
    train->add_option("--kmas", kmas_dir, "assignment cache directory (stage 2 only)");

    auto* cluster = app.add_subcommand("cluster", "precompute k-means assignment caches");
    add_common(cluster, common);
    cluster->add_option("--data", data_dir, "dataset directory")->required();
    cluster->add_option("--ckpt", ckpt, "checkpoint")->required();

    auto* condense_cmd = app.add_subcommand("condense", "write CLFT token files per scene");
    add_common(condense_cmd, common);
    condense_cmd->add_option("--data", data_dir, "dataset directory")->required();
    condense_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();
    condense_cmd->add_option("--kmas", kmas_dir, "assignment cache directory");

    auto* render_cmd = app.add_subcommand("render", "render one target view");
    add_common(render_cmd, common);
    render_cmd->add_option("--scene", scene_dir, "scene directory")->required();
    render_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();
    render_cmd->add_option("--clift", clift_path, "pre-built CLFT file (otherwise computed)");
    render_cmd->add_option("--target", target, "target view index");
    render_cmd->add_option("--n-render", n_render, "token budget (default: all stored)");

    auto* eval_cmd = app.add_subcommand("eval", "held-out metrics at the configured budgets");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "grid over N_s x N_r with CSV output");
    add_common(sweep_cmd, common);
    sweep_cmd->add_option("--data", data_dir, "dataset directory")->required();
    sweep_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();

    auto* traj = app.add_subcommand("trajectory", "render a smooth camera path");
    add_common(traj, common);
    traj->add_option("--scene", scene_dir, "scene directory")->required();
    traj->add_option("--ckpt", ckpt, "checkpoint")->required();

    auto* viz = app.add_subcommand("viz-clusters", "export cluster overlay images");
    add_common(viz, common);
    viz->add_option("--scene", scene_dir, "scene directory")->required();
    viz->add_option("--ckpt", ckpt, "checkpoint")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_data(common);
        if (train->parsed()) return run_train(common, stage, data_dir, ckpt, kmas_dir);
        if (cluster->parsed()) return run_cluster(common, data_dir, ckpt);
        if (condense_cmd->parsed()) return run_condense(common, data_dir, ckpt, kmas_dir);
        if (render_cmd->parsed()) return run_render(common, scene_dir, ckpt, clift_path, target, n_render);
        if (eval_cmd->parsed()) return run_eval(common, data_dir, ckpt);
        if (sweep_cmd->parsed()) return run_sweep(common, data_dir, ckpt);
        if (traj->parsed()) return run_trajectory(common, scene_dir, ckpt);
        if (viz->parsed()) return run_viz_clusters(common, scene_dir, ckpt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}

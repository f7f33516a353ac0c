#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "clift/nn.hpp"
#include "clift/renderer.hpp"
#include "clift/selection.hpp"

namespace clift {

// Flat run configuration. Every field can be overridden from a plain
// key-value text file ("key = value" or "key value", '#' comments).
struct Config {
    // data generation
    std::string scene_kind = "checker-box";
    int n_scenes = 8;
    int n_views = 8;
    int n_targets = 2;
    int image_size = 64;

    // model
    int dim = 64;
    int heads = 4;
    int encoder_blocks = 2;
    int condenser_blocks = 2;
    int renderer_blocks = 2;
    int ffn_mult = 4;

    // training
    int steps = 3000;
    int batch_size = 2;
    double peak_lr = 1e-3;
    int warmup_steps = 100;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double renderer_lr_scale = 0.1;  // stage 2
    int n_input_views = 4;
    std::string input_sampling = "fixed";  // fixed | random
    uint64_t seed = 1;
    int log_every = 100;

    // loss
    double l2_weight = 1.0;
    double perceptual_weight = 0.0;
    std::string perceptual_kind = "off";  // off | random-features

    // clustering / budgets
    int n_storage = 128;
    std::vector<int> budget_divisors = {1, 2, 4, 8};
    int kmeans_iters = 50;

    // selection
    double sel_w_angle = 1.0;
    double sel_w_dist = 0.02;
    double sel_w_mask = -0.03;
    double sel_momentum = 0.5;
    int sel_grid = 16;
    int sel_margin = 4;

    // evaluation
    std::vector<int> sweep_ns = {64, 128, 256};
    int fps_warmups = 3;
    int fps_runs = 20;
    int threads = 1;

    // trajectory
    int traj_frames = 24;
    int traj_n_render = 32;
    bool traj_use_state = true;

    ModelConfig model() const {
        ModelConfig m;
        m.dim = dim;
        m.heads = heads;
        m.encoder_blocks = encoder_blocks;
        m.condenser_blocks = condenser_blocks;
        m.renderer_blocks = renderer_blocks;
        m.ffn_mult = ffn_mult;
        return m;
    }

    LossConfig loss() const {
        LossConfig l;
        l.l2_weight = l2_weight;
        l.perceptual_weight = perceptual_weight;
        if (perceptual_kind == "off")
            l.kind = LossConfig::Perceptual::Off;
        else if (perceptual_kind == "random-features")
            l.kind = LossConfig::Perceptual::FixedRandomFeatures;
        else
            throw std::invalid_argument("unknown perceptual_kind: " + perceptual_kind);
        return l;
    }

    SelectionConfig selection() const {
        SelectionConfig s;
        s.w_angle = sel_w_angle;
        s.w_dist = sel_w_dist;
        s.w_mask = sel_w_mask;
        s.momentum = sel_momentum;
        s.grid = sel_grid;
        s.margin = sel_margin;
        return s;
    }

    std::vector<int> budget_ladder() const {
        std::vector<int> ladder;
        for (int d : budget_divisors) {
            if (d < 1) throw std::invalid_argument("budget divisor must be >= 1");
            ladder.push_back(std::max(1, n_storage / d));
        }
        return ladder;
    }

    void set(const std::string& key, const std::string& value);
    void load_file(const std::string& path);
    std::string to_text() const;
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    if (out.empty()) throw std::invalid_argument("empty integer list");
    return out;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

}  // namespace detail

inline void Config::set(const std::string& key, const std::string& value) {
    auto as_int = [&]() { return std::stoi(value); };
    auto as_double = [&]() { return std::stod(value); };
    auto as_bool = [&]() {
        if (value == "true" || value == "1" || value == "yes") return true;
        if (value == "false" || value == "0" || value == "no") return false;
        throw std::invalid_argument("bad boolean for " + key + ": " + value);
    };
    if (key == "scene_kind") scene_kind = value;
    else if (key == "n_scenes") n_scenes = as_int();
    else if (key == "n_views") n_views = as_int();
    else if (key == "n_targets") n_targets = as_int();
    else if (key == "image_size") image_size = as_int();
    else if (key == "dim") dim = as_int();
    else if (key == "heads") heads = as_int();
    else if (key == "encoder_blocks") encoder_blocks = as_int();
    else if (key == "condenser_blocks") condenser_blocks = as_int();
    else if (key == "renderer_blocks") renderer_blocks = as_int();
    else if (key == "ffn_mult") ffn_mult = as_int();
    else if (key == "steps") steps = as_int();
    else if (key == "batch_size") batch_size = as_int();
    else if (key == "peak_lr") peak_lr = as_double();
    else if (key == "warmup_steps") warmup_steps = as_int();
    else if (key == "weight_decay") weight_decay = as_double();
    else if (key == "beta1") beta1 = as_double();
    else if (key == "beta2") beta2 = as_double();
    else if (key == "renderer_lr_scale") renderer_lr_scale = as_double();
    else if (key == "n_input_views") n_input_views = as_int();
    else if (key == "input_sampling") {
        if (value != "fixed" && value != "random")
            throw std::invalid_argument("input_sampling must be fixed or random");
        input_sampling = value;
    }
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "log_every") log_every = as_int();
    else if (key == "l2_weight") l2_weight = as_double();
    else if (key == "perceptual_weight") perceptual_weight = as_double();
    else if (key == "perceptual_kind") perceptual_kind = value;
    else if (key == "n_storage") n_storage = as_int();
    else if (key == "budget_divisors") budget_divisors = detail::parse_int_list(value);
    else if (key == "kmeans_iters") kmeans_iters = as_int();
    else if (key == "sel_w_angle") sel_w_angle = as_double();
    else if (key == "sel_w_dist") sel_w_dist = as_double();
    else if (key == "sel_w_mask") sel_w_mask = as_double();
    else if (key == "sel_momentum") sel_momentum = as_double();
    else if (key == "sel_grid") sel_grid = as_int();
    else if (key == "sel_margin") sel_margin = as_int();
    else if (key == "sweep_ns") sweep_ns = detail::parse_int_list(value);
    else if (key == "fps_warmups") fps_warmups = as_int();
    else if (key == "fps_runs") fps_runs = as_int();
    else if (key == "threads") threads = as_int();
    else if (key == "traj_frames") traj_frames = as_int();
    else if (key == "traj_n_render") traj_n_render = as_int();
    else if (key == "traj_use_state") traj_use_state = as_bool();
    else throw std::invalid_argument("unknown config key: " + key);
}

inline void Config::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string key, eq, value;
        if (!(ls >> key)) continue;
        if (!(ls >> eq)) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing value");
        if (eq == "=") {
            if (!(ls >> value))
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing value");
        } else {
            value = eq;
        }
        try {
            set(key, value);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline std::string Config::to_text() const {
    std::ostringstream os;
    os << "scene_kind = " << scene_kind << "\n";
    os << "n_scenes = " << n_scenes << "\n";
    os << "n_views = " << n_views << "\n";
    os << "n_targets = " << n_targets << "\n";
    os << "image_size = " << image_size << "\n";
    os << "dim = " << dim << "\n";
    os << "heads = " << heads << "\n";
    os << "encoder_blocks = " << encoder_blocks << "\n";
    os << "condenser_blocks = " << condenser_blocks << "\n";
    os << "renderer_blocks = " << renderer_blocks << "\n";
    os << "ffn_mult = " << ffn_mult << "\n";
    os << "steps = " << steps << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "peak_lr = " << peak_lr << "\n";
    os << "warmup_steps = " << warmup_steps << "\n";
    os << "weight_decay = " << weight_decay << "\n";
    os << "beta1 = " << beta1 << "\n";
    os << "beta2 = " << beta2 << "\n";
    os << "renderer_lr_scale = " << renderer_lr_scale << "\n";
    os << "n_input_views = " << n_input_views << "\n";
    os << "input_sampling = " << input_sampling << "\n";
    os << "seed = " << seed << "\n";
    os << "log_every = " << log_every << "\n";
    os << "l2_weight = " << l2_weight << "\n";
    os << "perceptual_weight = " << perceptual_weight << "\n";
    os << "perceptual_kind = " << perceptual_kind << "\n";
    os << "n_storage = " << n_storage << "\n";
    os << "budget_divisors = " << detail::join_ints(budget_divisors) << "\n";
    os << "kmeans_iters = " << kmeans_iters << "\n";
    os << "sel_w_angle = " << sel_w_angle << "\n";
    os << "sel_w_dist = " << sel_w_dist << "\n";
    os << "sel_w_mask = " << sel_w_mask << "\n";
    os << "sel_momentum = " << sel_momentum << "\n";
    os << "sel_grid = " << sel_grid << "\n";
    os << "sel_margin = " << sel_margin << "\n";
    os << "sweep_ns = " << detail::join_ints(sweep_ns) << "\n";
    os << "fps_warmups = " << fps_warmups << "\n";
    os << "fps_runs = " << fps_runs << "\n";
    os << "threads = " << threads << "\n";
    os << "traj_frames = " << traj_frames << "\n";
    os << "traj_n_render = " << traj_n_render << "\n";
    os << "traj_use_state = " << (traj_use_state ? "true" : "false") << "\n";
    return os.str();
}

}  // namespace clift

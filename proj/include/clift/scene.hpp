#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "clift/image.hpp"
#include "clift/rng.hpp"

namespace clift {

struct View {
    Image image;
    Camera cam;
};

struct Scene {
    std::string id;
    std::vector<View> views;
    std::vector<int> input_views;   // trainable split
    std::vector<int> target_views;  // held-out evaluation targets

    const View& view(int i) const { return views.at(static_cast<size_t>(i)); }

    void validate() const {
        if (views.size() < 2) throw std::invalid_argument("scene needs at least 2 views: " + id);
        for (const auto& v : views) {
            v.cam.validate();
            if (v.image.width != views[0].image.width || v.image.height != views[0].image.height)
                throw std::invalid_argument("scene has inconsistent view resolutions: " + id);
            if (v.image.width != v.cam.width || v.image.height != v.cam.height)
                throw std::invalid_argument("camera/image size mismatch in scene: " + id);
        }
    }
};

// k views out of the input split, spread evenly over it in order.
inline std::vector<int> canonical_inputs(const Scene& scene, int k) {
    const auto& in = scene.input_views;
    if (k <= 0 || in.empty()) throw std::invalid_argument("canonical_inputs: bad arguments");
    if (static_cast<size_t>(k) >= in.size()) return in;
    std::vector<int> out;
    for (int i = 0; i < k; ++i) {
        const size_t pos = (k == 1) ? 0 : (static_cast<size_t>(i) * (in.size() - 1)) / (k - 1);
        if (out.empty() || in[pos] != out.back()) out.push_back(in[pos]);
    }
    size_t next = 0;
    while (out.size() < static_cast<size_t>(k) && next < in.size()) {
        if (std::find(out.begin(), out.end(), in[next]) == out.end()) out.push_back(in[next]);
        ++next;
    }
    return out;
}

enum class SceneKind { CheckerBox, TexturedQuads, DirectionSphere };

inline SceneKind parse_scene_kind(const std::string& s) {
    if (s == "checker-box") return SceneKind::CheckerBox;
    if (s == "textured-quads") return SceneKind::TexturedQuads;
    if (s == "direction-sphere") return SceneKind::DirectionSphere;
    throw std::invalid_argument("unknown scene kind: " + s);
}

inline std::string scene_kind_name(SceneKind k) {
    switch (k) {
        case SceneKind::CheckerBox: return "checker-box";
        case SceneKind::TexturedQuads: return "textured-quads";
        case SceneKind::DirectionSphere: return "direction-sphere";
    }
    return "?";
}

// ---- world descriptions; plain data so tests can re-derive colors ----

struct CheckerBoxWorld {
    double room_half = 2.0;
    int room_cells = 8;  // checker cells per face edge
    std::array<std::vector<Vec3>, 6> room_colors;  // per face, room_cells^2 entries
    Vec3 inner_center;
    double inner_half = 0.45;
    int inner_cells = 4;
    std::array<std::vector<Vec3>, 6> inner_colors;
};

namespace detail {

inline Vec3 hsv(double h, double s, double v) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

inline void fill_checker_colors(std::array<std::vector<Vec3>, 6>& faces, int cells, Rng& rng) {
    for (int f = 0; f < 6; ++f) {
        const double base_hue = rng.uniform();
        faces[f].resize(static_cast<size_t>(cells) * cells);
        for (int i = 0; i < cells; ++i)
            for (int j = 0; j < cells; ++j) {
                const bool dark = ((i + j) % 2) == 0;
                const double hue = base_hue + rng.uniform(-0.06, 0.06);
                const double sat = rng.uniform(0.45, 0.9);
                const double val = dark ? rng.uniform(0.25, 0.45) : rng.uniform(0.7, 0.98);
                faces[f][static_cast<size_t>(i) * cells + j] = hsv(hue, sat, val);
            }
    }
}

// Face ids: 0:+x 1:-x 2:+y 3:-y 4:+z 5:-z.
// uv in [0,1]^2 on the face, consistent between hit code and tests.
inline void face_uv(int face, const Vec3& p, double half, const Vec3& center, double& u, double& v) {
    const Vec3 q = (p - center) * (0.5 / half);  // in [-0.5, 0.5]
    switch (face) {
        case 0: u = q.y + 0.5; v = q.z + 0.5; break;
        case 1: u = q.y + 0.5; v = q.z + 0.5; break;
        case 2: u = q.x + 0.5; v = q.z + 0.5; break;
        case 3: u = q.x + 0.5; v = q.z + 0.5; break;
        default: u = q.x + 0.5; v = q.y + 0.5; break;
    }
}

inline Vec3 cell_color(const std::array<std::vector<Vec3>, 6>& colors, int cells, int face,
                       double u, double v) {
    int i = static_cast<int>(u * cells);
    int j = static_cast<int>(v * cells);
    i = std::min(std::max(i, 0), cells - 1);
    j = std::min(std::max(j, 0), cells - 1);
    return colors[static_cast<size_t>(face)][static_cast<size_t>(i) * cells + j];
}

}  // namespace detail

inline CheckerBoxWorld make_checker_box_world(uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    CheckerBoxWorld w;
    detail::fill_checker_colors(w.room_colors, w.room_cells, rng);
    w.inner_center = Vec3{rng.uniform(-0.5, 0.5), rng.uniform(-0.35, 0.35), rng.uniform(-0.5, 0.5)};
    detail::fill_checker_colors(w.inner_colors, w.inner_cells, rng);
    return w;
}

// Exit intersection with the room walls (camera is inside), then checks the
// inner box first. Colors are flat per checker cell, so appearance is a
// function of the 3-D hit point alone and stays multi-view consistent.
inline Vec3 shade_checker_box(const CheckerBoxWorld& w, const Vec3& o, const Vec3& d) {
    // inner box, slab method
    double t_inner = -1.0;
    int inner_face = -1;
    {
        const Vec3 lo = w.inner_center - Vec3{w.inner_half, w.inner_half, w.inner_half};
        const Vec3 hi = w.inner_center + Vec3{w.inner_half, w.inner_half, w.inner_half};
        double tmin = -1e300, tmax = 1e300;
        int axis_min = -1;
        const double ov[3] = {o.x, o.y, o.z}, dv[3] = {d.x, d.y, d.z};
        const double lov[3] = {lo.x, lo.y, lo.z}, hiv[3] = {hi.x, hi.y, hi.z};
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            if (dv[a] == 0.0) {
                if (ov[a] < lov[a] || ov[a] > hiv[a]) miss = true;
                continue;
            }
            double t0 = (lov[a] - ov[a]) / dv[a];
            double t1 = (hiv[a] - ov[a]) / dv[a];
            if (t0 > t1) std::swap(t0, t1);
            if (t0 > tmin) {
                tmin = t0;
                axis_min = a;
            }
            if (t1 < tmax) tmax = t1;
            if (tmin > tmax) miss = true;
        }
        if (!miss && tmin > 1e-9 && axis_min >= 0) {
            t_inner = tmin;
            // moving along +axis enters through the -axis face and vice versa
            const double da = axis_min == 0 ? d.x : (axis_min == 1 ? d.y : d.z);
            inner_face = axis_min * 2 + (da > 0 ? 1 : 0);
        }
    }

    // room walls: first positive exit along each axis
    double t_room = 1e300;
    int room_face = -1;
    {
        const double ov[3] = {o.x, o.y, o.z}, dv[3] = {d.x, d.y, d.z};
        for (int a = 0; a < 3; ++a) {
            if (dv[a] == 0.0) continue;
            const double plane = dv[a] > 0 ? w.room_half : -w.room_half;
            const double t = (plane - ov[a]) / dv[a];
            if (t > 1e-9 && t < t_room) {
                t_room = t;
                room_face = a * 2 + (dv[a] > 0 ? 0 : 1);  // +axis face when moving +
            }
        }
    }

    if (t_inner > 0 && t_inner < t_room) {
        const Vec3 p = o + d * t_inner;
        double u, v;
        detail::face_uv(inner_face, p, w.inner_half, w.inner_center, u, v);
        return detail::cell_color(w.inner_colors, w.inner_cells, inner_face, u, v);
    }
    if (room_face >= 0) {
        const Vec3 p = o + d * t_room;
        double u, v;
        detail::face_uv(room_face, p, w.room_half, Vec3{}, u, v);
        return detail::cell_color(w.room_colors, w.room_cells, room_face, u, v);
    }
    return {0, 0, 0};
}

struct TexturedQuad {
    double z = 0;
    double cx = 0, cy = 0, hx = 0.5, hy = 0.5;
    double fu = 2, fv = 2, phase = 0;
    Vec3 col_a, col_b;
};

struct TexturedQuadsWorld {
    std::vector<TexturedQuad> quads;  // sorted by z ascending
    Vec3 bg_a, bg_b;
};

inline TexturedQuadsWorld make_textured_quads_world(uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 2);
    TexturedQuadsWorld w;
    const int n = 4 + rng.uniform_int(3);
    double z = 1.8;
    for (int i = 0; i < n; ++i) {
        TexturedQuad q;
        z += rng.uniform(0.5, 1.0);
        q.z = z;
        q.cx = rng.uniform(-0.8, 0.8) * (z * 0.35);
        q.cy = rng.uniform(-0.6, 0.6) * (z * 0.3);
        q.hx = rng.uniform(0.35, 0.85);
        q.hy = rng.uniform(0.3, 0.7);
        q.fu = 1 + rng.uniform_int(5);
        q.fv = 1 + rng.uniform_int(5);
        q.phase = rng.uniform(0, 2 * kPi);
        q.col_a = detail::hsv(rng.uniform(), rng.uniform(0.5, 0.95), rng.uniform(0.7, 1.0));
        q.col_b = detail::hsv(rng.uniform(), rng.uniform(0.5, 0.95), rng.uniform(0.15, 0.4));
        w.quads.push_back(q);
    }
    w.bg_a = detail::hsv(rng.uniform(), 0.3, 0.85);
    w.bg_b = detail::hsv(rng.uniform(), 0.4, 0.35);
    return w;
}

inline Vec3 shade_textured_quads(const TexturedQuadsWorld& w, const Vec3& o, const Vec3& d) {
    double best_t = 1e300;
    const TexturedQuad* hit = nullptr;
    double hu = 0, hv = 0;
    for (const auto& q : w.quads) {
        if (d.z == 0.0) continue;
        const double t = (q.z - o.z) / d.z;
        if (t <= 1e-9 || t >= best_t) continue;
        const double x = o.x + t * d.x, y = o.y + t * d.y;
        if (std::abs(x - q.cx) <= q.hx && std::abs(y - q.cy) <= q.hy) {
            best_t = t;
            hit = &q;
            hu = (x - (q.cx - q.hx)) / (2 * q.hx);
            hv = (y - (q.cy - q.hy)) / (2 * q.hy);
        }
    }
    if (hit) {
        const double s =
            std::sin(hit->fu * hu * 2 * kPi + hit->phase) * std::sin(hit->fv * hv * 2 * kPi);
        return s > 0 ? hit->col_a : hit->col_b;
    }
    const double m = 0.5 + 0.5 * d.normalized().y;
    return w.bg_a * (1 - m) + w.bg_b * m;
}

struct DirectionSphereWorld {
    Vec3 axis[3];
    double freq[3];
    double phase[3];
    double band_freq = 6;
};

inline DirectionSphereWorld make_direction_sphere_world(uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 3);
    DirectionSphereWorld w;
    for (int c = 0; c < 3; ++c) {
        w.axis[c] = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}.normalized();
        w.freq[c] = rng.uniform(2.0, 5.0);
        w.phase[c] = rng.uniform(0, 2 * kPi);
    }
    w.band_freq = 4 + rng.uniform_int(5);
    return w;
}

// Radiance depends only on the ray direction: an environment at infinity.
inline Vec3 shade_direction_sphere(const DirectionSphereWorld& w, const Vec3& /*o*/, const Vec3& d) {
    const Vec3 dir = d.normalized();
    const double band = 0.1 * (std::sin(w.band_freq * std::atan2(dir.x, dir.z)) > 0 ? 1.0 : -1.0);
    double ch[3];
    for (int c = 0; c < 3; ++c) {
        const double v = 0.5 + 0.38 * std::sin(w.freq[c] * dir.dot(w.axis[c]) + w.phase[c]) + band;
        ch[c] = std::min(std::max(v, 0.0), 1.0);
    }
    return {ch[0], ch[1], ch[2]};
}

// ---- cameras ----

inline Camera make_lookat_camera(const Vec3& pos, const Vec3& at, int width, int height,
                                 double focal_scale = 0.9) {
    const Vec3 z = (at - pos).normalized();
    const Vec3 up_hint{0, 1, 0};
    Vec3 x = up_hint.cross(z);
    if (x.norm() < 1e-9) x = Vec3{1, 0, 0};  // looking straight up/down
    x = x.normalized();
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = focal_scale * width;
    cam.fy = focal_scale * width;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    for (int r = 0; r < 3; ++r) {
        cam.rot.at(r, 0) = (r == 0 ? x.x : r == 1 ? x.y : x.z);
        cam.rot.at(r, 1) = (r == 0 ? y.x : r == 1 ? y.y : y.z);
        cam.rot.at(r, 2) = (r == 0 ? z.x : r == 1 ? z.y : z.z);
    }
    cam.trans = pos;
    return cam;
}

// Smooth arc of camera positions: mostly translation with mild rotation,
// every camera aimed near a common point.
inline std::vector<Camera> arc_cameras(SceneKind kind, uint64_t seed, int n, int width, int height,
                                       const Vec3& focus) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 11);
    std::vector<Camera> cams;
    const double span = rng.uniform(0.9, 1.3);  // radians of arc
    const double phase = rng.uniform(0, 2 * kPi);
    for (int i = 0; i < n; ++i) {
        const double a = (n == 1) ? 0.0 : -span / 2 + span * i / (n - 1);
        Vec3 pos, at = focus;
        switch (kind) {
            case SceneKind::CheckerBox: {
                const double r = 1.05;
                pos = Vec3{r * std::sin(a), 0.18 * std::sin(2 * a + phase), -r * std::cos(a)};
                break;
            }
            case SceneKind::TexturedQuads: {
                pos = Vec3{0.55 * std::sin(a), 0.12 * std::sin(2 * a + phase),
                           0.15 * std::cos(a) - 0.15};
                break;
            }
            case SceneKind::DirectionSphere: {
                pos = Vec3{2.0 * std::sin(a), 0.4 * std::sin(a + phase), -2.0 * std::cos(a)};
                // look outward: direction varies along the arc
                at = pos + Vec3{std::sin(a * 0.6), 0.1 * std::sin(a), std::cos(a * 0.6)};
                break;
            }
        }
        cams.push_back(make_lookat_camera(pos, at, width, height));
    }
    return cams;
}

// ---- generation ----

inline Scene gen_scene(SceneKind kind, uint64_t seed, int n_views, int resolution,
                       int n_targets = 2) {
    if (n_views < 2) throw std::invalid_argument("gen_scene: need at least 2 views");
    if (n_targets < 0 || n_targets >= n_views - 1)
        throw std::invalid_argument("gen_scene: bad target count");

    CheckerBoxWorld cb;
    TexturedQuadsWorld tq;
    DirectionSphereWorld ds;
    Vec3 focus{0, 0, 0};
    switch (kind) {
        case SceneKind::CheckerBox:
            cb = make_checker_box_world(seed);
            focus = cb.inner_center;
            break;
        case SceneKind::TexturedQuads:
            tq = make_textured_quads_world(seed);
            focus = Vec3{0, 0, (tq.quads.front().z + tq.quads.back().z) / 2};
            break;
        case SceneKind::DirectionSphere:
            ds = make_direction_sphere_world(seed);
            break;
    }

    auto cams = arc_cameras(kind, seed, n_views, resolution, resolution, focus);

    Scene scene;
    {
        std::ostringstream id;
        id << scene_kind_name(kind) << "-" << seed;
        scene.id = id.str();
    }
    for (int i = 0; i < n_views; ++i) {
        View v;
        v.cam = cams[static_cast<size_t>(i)];
        v.image = Image(resolution, resolution);
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                const PluckerRay ray = pixel_ray(v.cam, x, y);
                Vec3 c;
                switch (kind) {
                    case SceneKind::CheckerBox: c = shade_checker_box(cb, v.cam.center(), ray.dir); break;
                    case SceneKind::TexturedQuads:
                        c = shade_textured_quads(tq, v.cam.center(), ray.dir);
                        break;
                    case SceneKind::DirectionSphere:
                        c = shade_direction_sphere(ds, v.cam.center(), ray.dir);
                        break;
                }
                float* p = v.image.px(x, y);
                p[0] = static_cast<float>(std::min(std::max(c.x, 0.0), 1.0));
                p[1] = static_cast<float>(std::min(std::max(c.y, 0.0), 1.0));
                p[2] = static_cast<float>(std::min(std::max(c.z, 0.0), 1.0));
            }
        scene.views.push_back(std::move(v));
    }

    // held-out targets sit at evenly spaced interior positions of the arc
    std::vector<bool> is_target(static_cast<size_t>(n_views), false);
    for (int t = 0; t < n_targets; ++t) {
        int idx = ((t + 1) * n_views) / (n_targets + 1);
        idx = std::min(std::max(idx, 1), n_views - 2);
        while (is_target[static_cast<size_t>(idx)]) idx = (idx + 1) % n_views;
        is_target[static_cast<size_t>(idx)] = true;
    }
    for (int i = 0; i < n_views; ++i)
        (is_target[static_cast<size_t>(i)] ? scene.target_views : scene.input_views).push_back(i);

    scene.validate();
    return scene;
}

// ---- persistence ----
// cameras.txt: one line per view with
//   width height fx fy cx cy  r00 r01 r02 tx  r10 r11 r12 ty  r20 r21 r22 tz
// split.txt: `<view-index> input|target` per line.

inline void save_scene(const Scene& scene, const std::string& dir, bool png = true) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream cam_os(dir + "/cameras.txt");
    if (!cam_os) throw std::runtime_error("cannot write cameras manifest in " + dir);
    cam_os << std::setprecision(17);
    for (size_t i = 0; i < scene.views.size(); ++i) {
        const Camera& c = scene.views[i].cam;
        cam_os << c.width << " " << c.height << " " << c.fx << " " << c.fy << " " << c.cx << " "
               << c.cy;
        const double t[3] = {c.trans.x, c.trans.y, c.trans.z};
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) cam_os << " " << c.rot.at(r, k);
            cam_os << " " << t[r];
        }
        cam_os << "\n";
        std::ostringstream name;
        name << dir << "/view_" << std::setfill('0') << std::setw(3) << i
             << (png ? ".png" : ".ppm");
        save_image(scene.views[i].image, name.str());
    }
    std::ofstream split_os(dir + "/split.txt");
    for (int i : scene.input_views) split_os << i << " input\n";
    for (int i : scene.target_views) split_os << i << " target\n";
}

inline Scene load_scene(const std::string& dir) {
    namespace fs = std::filesystem;
    Scene scene;
    scene.id = fs::path(dir).filename().string();
    std::ifstream cam_is(dir + "/cameras.txt");
    if (!cam_is) throw std::runtime_error("missing cameras manifest: " + dir + "/cameras.txt");
    std::string line;
    int idx = 0;
    while (std::getline(cam_is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Camera c;
        double tr[3];
        ls >> c.width >> c.height >> c.fx >> c.fy >> c.cx >> c.cy;
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) ls >> c.rot.at(r, k);
            ls >> tr[r];
        }
        if (!ls) throw std::runtime_error("malformed cameras manifest line in " + dir);
        c.trans = Vec3{tr[0], tr[1], tr[2]};

        View v;
        v.cam = c;
        std::ostringstream base;
        base << dir << "/view_" << std::setfill('0') << std::setw(3) << idx;
        if (fs::exists(base.str() + ".png"))
            v.image = load_image(base.str() + ".png");
        else if (fs::exists(base.str() + ".ppm"))
            v.image = load_image(base.str() + ".ppm");
        else
            throw std::runtime_error("missing image for view " + std::to_string(idx) + " in " + dir);
        scene.views.push_back(std::move(v));
        ++idx;
    }

    std::ifstream split_is(dir + "/split.txt");
    if (split_is) {
        int vi;
        std::string role;
        while (split_is >> vi >> role) {
            if (vi < 0 || vi >= static_cast<int>(scene.views.size()))
                throw std::runtime_error("split.txt refers to missing view in " + dir);
            if (role == "input")
                scene.input_views.push_back(vi);
            else if (role == "target")
                scene.target_views.push_back(vi);
            else
                throw std::runtime_error("split.txt bad role '" + role + "' in " + dir);
        }
    } else {
        for (size_t i = 0; i + 1 < scene.views.size(); ++i)
            scene.input_views.push_back(static_cast<int>(i));
        scene.target_views.push_back(static_cast<int>(scene.views.size()) - 1);
    }
    scene.validate();
    return scene;
}

// Scene directories under root, sorted by name.
inline std::vector<std::string> list_scene_dirs(const std::string& root) {
    namespace fs = std::filesystem;
    std::vector<std::string> dirs;
    if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root);
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "cameras.txt")) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw std::runtime_error("no scenes found under " + root);
    return dirs;
}

}  // namespace clift

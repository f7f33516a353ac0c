#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "clift/tensor.hpp"

namespace clift {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        if (n == 0) throw std::invalid_argument("cannot normalize zero vector");
        return {x / n, y / n, z / n};
    }
};

struct Mat3 {
    // row-major
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }

    double& at(int r, int c) { return m[r * 3 + c]; }
    double at(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// Pinhole camera. Extrinsics are camera-to-world: x_world = rot * x_cam + trans,
// so trans is the camera center. Camera frame: +x right, +y down, +z forward.
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rot;    // camera-to-world rotation
    Vec3 trans;  // camera center in world

    Vec3 center() const { return trans; }

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("camera: non-positive size");
        if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera: focal length must be positive");
        if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
            throw std::invalid_argument("camera: principal point outside image");
        // orthonormality, tolerance 1e-5
        Mat3 rtr = rot.transposed() * rot;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double expect = (i == j) ? 1.0 : 0.0;
                if (std::abs(rtr.at(i, j) - expect) > 1e-5)
                    throw std::invalid_argument("camera: rotation is not orthonormal");
            }
        if (std::abs(rot.det() - 1.0) > 1e-5)
            throw std::invalid_argument("camera: rotation determinant is not +1");
    }
};

// Oriented line through the camera center: unit direction plus moment
// (origin x direction). Independent of which point on the line is used
// as the origin.
struct PluckerRay {
    Vec3 dir;
    Vec3 moment;

    static PluckerRay from_origin_dir(const Vec3& origin, const Vec3& direction) {
        PluckerRay r;
        r.dir = direction.normalized();
        r.moment = origin.cross(r.dir);
        return r;
    }

    bool invariants_ok(double tol = 1e-6) const {
        return std::abs(dir.norm() - 1.0) <= tol && std::abs(moment.dot(dir)) <= tol;
    }
};

// Ray through a continuous image-plane point (x, y) in pixel units.
// No bounds check: points outside the image give the linear continuation
// of the pixel grid, which the expanded selection grid relies on.
inline PluckerRay ray_through(const Camera& cam, double x, double y) {
    if (cam.fx == 0 || cam.fy == 0) throw std::invalid_argument("degenerate camera: zero focal length");
    const Vec3 dir_cam{(x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0};
    const Vec3 dir_world = cam.rot * dir_cam;
    return PluckerRay::from_origin_dir(cam.center(), dir_world);
}

// Ray through the center of pixel (u, v).
inline PluckerRay pixel_ray(const Camera& cam, double u, double v) {
    return ray_through(cam, u + 0.5, v + 0.5);
}

inline constexpr int kPatch = 8;
inline constexpr int kPatchPixels = kPatch * kPatch;               // 64
inline constexpr int kPatchVecWidth = (3 + 6) * kPatchPixels;      // 576
inline constexpr int kQueryVecWidth = 6 * kPatchPixels;            // 384
inline constexpr int kRgbVecWidth = 3 * kPatchPixels;              // 192

struct ImageView {
    int width = 0, height = 0;
    const float* rgb = nullptr;  // 3 floats per pixel, row-major

    const float* px(int x, int y) const { return rgb + (static_cast<size_t>(y) * width + x) * 3; }
};

inline void check_patch_divisible(int w, int h) {
    if (w % kPatch != 0 || h % kPatch != 0)
        throw std::invalid_argument("image dimensions must be divisible by " +
                                    std::to_string(kPatch) + ", got " + std::to_string(w) + "x" +
                                    std::to_string(h));
}

// Flattens non-overlapping 8x8 patches into rows of
// [r,g,b, d1,d2,d3, m1,m2,m3] per pixel in row-major pixel order -> 576 wide.
inline Tensor<float> patchify(const ImageView& img, const Camera& cam) {
    check_patch_divisible(img.width, img.height);
    const int pr = img.height / kPatch, pc = img.width / kPatch;
    Tensor<float> out(pr * pc, kPatchVecWidth);
    for (int py = 0; py < pr; ++py) {
        for (int px = 0; px < pc; ++px) {
            float* row = out.row_ptr(py * pc + px);
            int o = 0;
            for (int dy = 0; dy < kPatch; ++dy) {
                for (int dx = 0; dx < kPatch; ++dx) {
                    const int x = px * kPatch + dx, y = py * kPatch + dy;
                    const float* c = img.px(x, y);
                    const PluckerRay ray = pixel_ray(cam, x, y);
                    row[o + 0] = c[0];
                    row[o + 1] = c[1];
                    row[o + 2] = c[2];
                    row[o + 3] = static_cast<float>(ray.dir.x);
                    row[o + 4] = static_cast<float>(ray.dir.y);
                    row[o + 5] = static_cast<float>(ray.dir.z);
                    row[o + 6] = static_cast<float>(ray.moment.x);
                    row[o + 7] = static_cast<float>(ray.moment.y);
                    row[o + 8] = static_cast<float>(ray.moment.z);
                    o += 9;
                }
            }
        }
    }
    return out;
}

// RGB-only patch rows (192 wide), the layout the renderer head produces.
inline Tensor<float> patchify_rgb(const ImageView& img) {
    check_patch_divisible(img.width, img.height);
    const int pr = img.height / kPatch, pc = img.width / kPatch;
    Tensor<float> out(pr * pc, kRgbVecWidth);
    for (int py = 0; py < pr; ++py)
        for (int px = 0; px < pc; ++px) {
            float* row = out.row_ptr(py * pc + px);
            int o = 0;
            for (int dy = 0; dy < kPatch; ++dy)
                for (int dx = 0; dx < kPatch; ++dx) {
                    const float* c = img.px(px * kPatch + dx, py * kPatch + dy);
                    row[o++] = c[0];
                    row[o++] = c[1];
                    row[o++] = c[2];
                }
        }
    return out;
}

// Inverse of patchify_rgb. tokens: (H/8 * W/8) x 192 -> H*W*3 buffer.
inline std::vector<float> unpatchify(const Tensor<float>& tokens, int width, int height) {
    check_patch_divisible(width, height);
    const int pr = height / kPatch, pc = width / kPatch;
    if (tokens.rows() != pr * pc)
        throw std::invalid_argument("unpatchify: expected " + std::to_string(pr * pc) +
                                    " tokens, got " + std::to_string(tokens.rows()));
    if (tokens.cols() != kRgbVecWidth)
        throw std::invalid_argument("unpatchify: token width must be " +
                                    std::to_string(kRgbVecWidth));
    std::vector<float> rgb(static_cast<size_t>(width) * height * 3);
    for (int py = 0; py < pr; ++py)
        for (int px = 0; px < pc; ++px) {
            const float* row = tokens.row_ptr(py * pc + px);
            int o = 0;
            for (int dy = 0; dy < kPatch; ++dy)
                for (int dx = 0; dx < kPatch; ++dx) {
                    const int x = px * kPatch + dx, y = py * kPatch + dy;
                    float* dst = rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
                    dst[0] = row[o++];
                    dst[1] = row[o++];
                    dst[2] = row[o++];
                }
        }
    return rgb;
}

// Row index permutation mapping image pixel order (y, x) to rows of the
// (P*64) x 3 reinterpretation of a 192-wide token matrix.
inline std::vector<int> unpatchify_row_order(int width, int height) {
    check_patch_divisible(width, height);
    const int pc = width / kPatch;
    std::vector<int> order(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const int patch = (y / kPatch) * pc + (x / kPatch);
            const int within = (y % kPatch) * kPatch + (x % kPatch);
            order[static_cast<size_t>(y) * width + x] = patch * kPatchPixels + within;
        }
    return order;
}

// Per-patch query vectors for a target view: 6 Plucker values per pixel,
// flattened over the 8x8 patch -> 384 wide.
inline Tensor<float> query_grid(const Camera& cam) {
    check_patch_divisible(cam.width, cam.height);
    const int pr = cam.height / kPatch, pc = cam.width / kPatch;
    Tensor<float> out(pr * pc, kQueryVecWidth);
    for (int py = 0; py < pr; ++py)
        for (int px = 0; px < pc; ++px) {
            float* row = out.row_ptr(py * pc + px);
            int o = 0;
            for (int dy = 0; dy < kPatch; ++dy)
                for (int dx = 0; dx < kPatch; ++dx) {
                    const PluckerRay ray = pixel_ray(cam, px * kPatch + dx, py * kPatch + dy);
                    row[o + 0] = static_cast<float>(ray.dir.x);
                    row[o + 1] = static_cast<float>(ray.dir.y);
                    row[o + 2] = static_cast<float>(ray.dir.z);
                    row[o + 3] = static_cast<float>(ray.moment.x);
                    row[o + 4] = static_cast<float>(ray.moment.y);
                    row[o + 5] = static_cast<float>(ray.moment.z);
                    o += 6;
                }
        }
    return out;
}

// Rays through patch centers of the (H/8 x W/8) token grid, row-major.
inline std::vector<PluckerRay> patch_center_rays(const Camera& cam) {
    check_patch_divisible(cam.width, cam.height);
    const int pr = cam.height / kPatch, pc = cam.width / kPatch;
    std::vector<PluckerRay> rays;
    rays.reserve(static_cast<size_t>(pr) * pc);
    for (int py = 0; py < pr; ++py)
        for (int px = 0; px < pc; ++px)
            rays.push_back(ray_through(cam, px * kPatch + kPatch / 2.0, py * kPatch + kPatch / 2.0));
    return rays;
}

// Rays through the centers of a grid x grid patch tiling of the view,
// linearly extended `margin` cells beyond the image on every side.
// Row-major over the (grid + 2*margin)^2 cells.
inline std::vector<PluckerRay> expanded_patch_rays(const Camera& cam, int grid = 16,
                                                   int margin = 4) {
    if (grid <= 0 || margin < 0) throw std::invalid_argument("expanded_patch_rays: bad grid/margin");
    const double cw = static_cast<double>(cam.width) / grid;
    const double ch = static_cast<double>(cam.height) / grid;
    const int n = grid + 2 * margin;
    std::vector<PluckerRay> rays;
    rays.reserve(static_cast<size_t>(n) * n);
    for (int r = -margin; r < grid + margin; ++r)
        for (int c = -margin; c < grid + margin; ++c)
            rays.push_back(ray_through(cam, (c + 0.5) * cw, (r + 0.5) * ch));
    return rays;
}

}  // namespace clift

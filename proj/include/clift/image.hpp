#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "clift/geometry.hpp"

namespace clift {

// Float RGB image, values in [0,1], row-major, 3 channels interleaved.
struct Image {
    int width = 0, height = 0;
    std::vector<float> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.0f) {}

    float* px(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const float* px(int x, int y) const {
        return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
    ImageView view() const { return ImageView{width, height, rgb.data()}; }

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

namespace detail {

inline uint8_t quantize8(float v) {
    float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<uint8_t>(c * 255.0f + 0.5f);
}

inline std::vector<uint8_t> to_bytes(const Image& img) {
    std::vector<uint8_t> b(img.pixel_count() * 3);
    for (size_t i = 0; i < b.size(); ++i) b[i] = quantize8(img.rgb[i]);
    return b;
}

inline Image from_bytes(const uint8_t* data, int w, int h) {
    Image img(w, h);
    const size_t n = img.pixel_count() * 3;
    for (size_t i = 0; i < n; ++i) img.rgb[i] = static_cast<float>(data[i]) / 255.0f;
    return img;
}

inline void be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

inline uint32_t read_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& payload) {
    be32(out, static_cast<uint32_t>(payload.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    be32(out, crc);
}

}  // namespace detail

inline void write_ppm(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    auto bytes = detail::to_bytes(img);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("ppm write failed: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw std::runtime_error("not a P6 ppm: " + path);
    auto next_int = [&is, &path]() {
        // skip whitespace and '#' comments
        for (;;) {
            int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        int v;
        if (!(is >> v)) throw std::runtime_error("bad ppm header: " + path);
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error("unsupported ppm: " + path);
    is.get();  // single whitespace after header
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        throw std::runtime_error("truncated ppm: " + path);
    return detail::from_bytes(bytes.data(), w, h);
}

// Minimal PNG writer: 8-bit RGB, filter 0 on every scanline, one IDAT.
inline void write_png(const Image& img, const std::string& path) {
    const int w = img.width, h = img.height;
    auto bytes = detail::to_bytes(img);
    std::vector<uint8_t> raw(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        uint8_t* row = raw.data() + static_cast<size_t>(y) * (1 + static_cast<size_t>(w) * 3);
        row[0] = 0;  // filter: none
        std::memcpy(row + 1, bytes.data() + static_cast<size_t>(y) * w * 3,
                    static_cast<size_t>(w) * 3);
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png deflate failed");
    comp.resize(comp_size);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    std::vector<uint8_t> ihdr;
    detail::be32(ihdr, static_cast<uint32_t>(w));
    detail::be32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", comp);
    detail::png_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("png write failed: " + path);
}

// Reads the PNG subset we write (8-bit RGB, non-interlaced), plus all five
// standard scanline filters so files from other tools usually load too.
inline Image read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw std::runtime_error("not a png: " + path);

    int w = 0, h = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool saw_ihdr = false;
    while (pos + 8 <= file.size()) {
        const uint32_t len = detail::read_be32(file.data() + pos);
        if (pos + 12 + len > file.size()) throw std::runtime_error("truncated png chunk: " + path);
        const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
        const uint8_t* payload = file.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw std::runtime_error("bad IHDR: " + path);
            w = static_cast<int>(detail::read_be32(payload));
            h = static_cast<int>(detail::read_be32(payload + 4));
            const int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || color != 2 || interlace != 0)
                throw std::runtime_error("unsupported png (need 8-bit RGB non-interlaced): " + path);
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || w <= 0 || h <= 0) throw std::runtime_error("png missing IHDR: " + path);

    const size_t stride = static_cast<size_t>(w) * 3;
    std::vector<uint8_t> raw(static_cast<size_t>(h) * (1 + stride));
    uLongf raw_size = static_cast<uLongf>(raw.size());
    const int zrc = uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_size != raw.size())
        throw std::runtime_error("png inflate failed: " + path);

    std::vector<uint8_t> pix(static_cast<size_t>(h) * stride);
    auto paeth = [](int a, int b, int c) {
        const int p = a + b - c;
        const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
        if (pa <= pb && pa <= pc) return a;
        if (pb <= pc) return b;
        return c;
    };
    for (int y = 0; y < h; ++y) {
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (1 + stride);
        uint8_t* dst = pix.data() + static_cast<size_t>(y) * stride;
        const uint8_t* up = y > 0 ? pix.data() + static_cast<size_t>(y - 1) * stride : nullptr;
        const int filter = src[0];
        for (size_t i = 0; i < stride; ++i) {
            const int x = src[1 + i];
            const int left = i >= 3 ? dst[i - 3] : 0;
            const int above = up ? up[i] : 0;
            const int upleft = (up && i >= 3) ? up[i - 3] : 0;
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + left; break;
                case 2: v = x + above; break;
                case 3: v = x + ((left + above) >> 1); break;
                case 4: v = x + paeth(left, above, upleft); break;
                default: throw std::runtime_error("bad png filter: " + path);
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
    }
    return detail::from_bytes(pix.data(), w, h);
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline void save_image(const Image& img, const std::string& path) {
    if (ends_with(path, ".ppm"))
        write_ppm(img, path);
    else if (ends_with(path, ".png"))
        write_png(img, path);
    else
        throw std::invalid_argument("unsupported image extension: " + path);
}

inline Image load_image(const std::string& path) {
    if (ends_with(path, ".ppm")) return read_ppm(path);
    if (ends_with(path, ".png")) return read_png(path);
    throw std::invalid_argument("unsupported image extension: " + path);
}

}  // namespace clift

// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "cxr/binary_io.hpp"
#include "cxr/error.hpp"

namespace cxr {

namespace {

std::uint8_t round_to_byte(double v) {
    double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

// Bilinear sample with coordinates clamped to the raster, so anything outside
// takes the nearest edge pixel.
double sample_clamped(const GrayImage& img, double x, double y) {
    const double max_x = img.width() - 1.0;
    const double max_y = img.height() - 1.0;
    x = std::clamp(x, 0.0, max_x);
    y = std::clamp(y, 0.0, max_y);
    auto x0 = static_cast<std::uint32_t>(x);
    auto y0 = static_cast<std::uint32_t>(y);
    std::uint32_t x1 = std::min(x0 + 1, img.width() - 1);
    std::uint32_t y1 = std::min(y0 + 1, img.height() - 1);
    double fx = x - x0;
    double fy = y - y0;
    double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
    double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

}  // namespace

GrayImage::GrayImage(std::uint32_t width, std::uint32_t height, std::uint8_t fill)
    : width_(width), height_(height), pixels_(std::size_t{width} * height, fill) {}

GrayImage::GrayImage(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    require(pixels_.size() == std::size_t{width} * height, ErrorCode::kInvalidArgument,
            "pixel buffer of " + std::to_string(pixels_.size()) + " bytes does not match " +
                std::to_string(width) + "x" + std::to_string(height));
}

double GrayImage::mean() const {
    if (pixels_.empty()) return 0.0;
    double sum = 0.0;
    for (auto p : pixels_) sum += p;
    return sum / static_cast<double>(pixels_.size());
}

void PreprocessConfig::validate() const {
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::kInvalidArgument, "gamma must be > 0");
    require(target_side >= 8, ErrorCode::kInvalidArgument, "target side must be >= 8");
}

AugmentConfig AugmentConfig::identity() {
    AugmentConfig c;
    c.rotation_range = 0;
    c.width_shift = 0;
    c.height_shift = 0;
    c.shear_range = 0;
    c.zoom_range = 0;
    c.horizontal_flip = false;
    c.vertical_flip = false;
    return c;
}

void AugmentConfig::validate() const {
    for (double r : {rotation_range, width_shift, height_shift, shear_range, zoom_range})
        require(r >= 0.0 && std::isfinite(r), ErrorCode::kInvalidArgument, "augmentation ranges must be >= 0");
    for (double f : {width_shift, height_shift, shear_range, zoom_range})
        require(f <= 1.0, ErrorCode::kInvalidArgument, "augmentation fractions must be <= 1");
}

GrayImage gamma_correct(const GrayImage& img, double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::kInvalidArgument,
            "gamma must be positive, got " + std::to_string(gamma));
    std::array<std::uint8_t, 256> lut{};
    for (int i = 0; i < 256; ++i) lut[i] = round_to_byte(std::pow(i / 255.0, gamma) * 255.0);
    GrayImage out = img;
    for (auto& p : out.pixels()) p = lut[p];
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, std::uint32_t side) {
    return resize_bilinear(img, side, side);
}

GrayImage resize_bilinear(const GrayImage& img, std::uint32_t width, std::uint32_t height) {
    require(!img.empty(), ErrorCode::kInvalidArgument, "cannot resize an empty image");
    require(width >= 1 && height >= 1, ErrorCode::kInvalidArgument, "target size must be >= 1");
    if (width == img.width() && height == img.height()) return img;
    GrayImage out(width, height);
    const double sx = static_cast<double>(img.width()) / width;
    const double sy = static_cast<double>(img.height()) / height;
    for (std::uint32_t y = 0; y < height; ++y) {
        double src_y = (y + 0.5) * sy - 0.5;
        for (std::uint32_t x = 0; x < width; ++x) {
            double src_x = (x + 0.5) * sx - 0.5;
            out.at(x, y) = round_to_byte(sample_clamped(img, src_x, src_y));
        }
    }
    return out;
}

Tensor normalize(const GrayImage& img) {
    Tensor t({img.height(), img.width(), 1});
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) t[i] = px[i] / 255.0;
    return t;
}

GrayImage denormalize(const Tensor& t) {
    require(t.rank() == 3 && t.dim(2) == 1, ErrorCode::kShape,
            "expected (height, width, 1) tensor, got " + shape_string(t.shape()));
    GrayImage img(static_cast<std::uint32_t>(t.dim(1)), static_cast<std::uint32_t>(t.dim(0)));
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = round_to_byte(t[i] * 255.0);
    return img;
}

AugmentDraw sample_augment(const AugmentConfig& cfg, std::uint32_t width, std::uint32_t height, Rng& rng) {
    cfg.validate();
    AugmentDraw d;
    // Every knob is drawn, even when its range is zero, so that the stream
    // position does not depend on which knobs are enabled.
    d.angle_deg = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
    d.shift_x = rng.uniform(-cfg.width_shift, cfg.width_shift) * width;
    d.shift_y = rng.uniform(-cfg.height_shift, cfg.height_shift) * height;
    d.shear = rng.uniform(-cfg.shear_range, cfg.shear_range);
    d.zoom_x = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range);
    d.zoom_y = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range);
    bool fh = rng.coin();
    bool fv = rng.coin();
    d.flip_h = cfg.horizontal_flip && fh;
    d.flip_v = cfg.vertical_flip && fv;
    return d;
}

GrayImage apply_augment(const GrayImage& img, const AugmentDraw& d) {
    if (img.empty()) return img;
    const double theta = d.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    // forward = rotation * shear * zoom
    const double a = c * d.zoom_x;
    const double b = (c * d.shear - s) * d.zoom_y;
    const double cc = s * d.zoom_x;
    const double dd = (s * d.shear + c) * d.zoom_y;
    const double det = a * dd - b * cc;
    require(std::abs(det) > 1e-12, ErrorCode::kInvalidArgument, "degenerate augmentation transform");
    const double ia = dd / det, ib = -b / det, ic = -cc / det, id = a / det;

    const double cx = (img.width() - 1) / 2.0;
    const double cy = (img.height() - 1) / 2.0;
    GrayImage out(img.width(), img.height());
    for (std::uint32_t y = 0; y < img.height(); ++y) {
        for (std::uint32_t x = 0; x < img.width(); ++x) {
            double px = x - cx - d.shift_x;
            double py = y - cy - d.shift_y;
            double src_x = ia * px + ib * py + cx;
            double src_y = ic * px + id * py + cy;
            std::uint32_t ox = d.flip_h ? img.width() - 1 - x : x;
            std::uint32_t oy = d.flip_v ? img.height() - 1 - y : y;
            out.at(ox, oy) = round_to_byte(sample_clamped(img, src_x, src_y));
        }
    }
    return out;
}

GrayImage augment(const GrayImage& img, const AugmentConfig& cfg, Rng& rng) {
    return apply_augment(img, sample_augment(cfg, img.width(), img.height(), rng));
}

GrayImage preprocess(const GrayImage& raw, const PreprocessConfig& cfg) {
    cfg.validate();
    require(!raw.empty(), ErrorCode::kInvalidArgument, "empty image");
    return resize_bilinear(gamma_correct(raw, cfg.gamma), cfg.target_side);
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) {
        skip_space();
        std::uint64_t v = 0;
        std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos]) && pos - start < 9) v = v * 10 + (bytes[pos++] - '0');
        require(pos > start, ErrorCode::kFormat, std::string("PGM: missing ") + what);
        return v;
    };
    require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5', ErrorCode::kFormat,
            "not a binary PGM (P5) file");
    pos = 2;
    auto w = read_uint("width");
    auto h = read_uint("height");
    auto maxval = read_uint("maxval");
    require(maxval == 255, ErrorCode::kFormat, "PGM: only maxval 255 is supported");
    require(w > 0 && h > 0, ErrorCode::kFormat, "PGM: zero dimension");
    require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorCode::kFormat, "PGM: malformed header");
    ++pos;
    std::size_t n = static_cast<std::size_t>(w) * h;
    require(bytes.size() - pos >= n, ErrorCode::kFormat, "PGM: truncated raster");
    std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return GrayImage(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h), std::move(px));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
    std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

GrayImage read_pgm(const std::filesystem::path& path) {
    try {
        return decode_pgm(read_file(path));
    } catch (const Error& e) {
        fail(e.code(), path.string() + ": " + e.what());
    }
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    write_file_atomic(path, encode_pgm(img));
}

std::vector<std::uint8_t> pack_rle(const GrayImage& img) {
    Bytes out;
    ByteWriter w(out);
    w.u32(img.width());
    w.u32(img.height());
    auto px = img.pixels();
    std::size_t i = 0;
    while (i < px.size()) {
        std::size_t run = 1;
        while (i + run < px.size() && px[i + run] == px[i] && run < 255) ++run;
        w.u8(static_cast<std::uint8_t>(run));
        w.u8(px[i]);
        i += run;
    }
    return out;
}

GrayImage unpack_rle(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto w = r.u32();
    auto h = r.u32();
    std::size_t n = std::size_t{w} * h;
    require(n <= (1u << 28), ErrorCode::kFormat, "RLE raster too large");
    std::vector<std::uint8_t> px;
    px.reserve(n);
    while (px.size() < n) {
        auto run = r.u8();
        auto v = r.u8();
        require(run > 0 && px.size() + run <= n, ErrorCode::kFormat, "RLE run overflows raster");
        px.insert(px.end(), run, v);
    }
    require(r.done(), ErrorCode::kFormat, "trailing bytes after RLE raster");
    return GrayImage(w, h, std::move(px));
}

}  // namespace cxr

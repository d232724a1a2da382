// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cxr/random.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

// 8-bit grayscale raster, row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(std::uint32_t width, std::uint32_t height, std::uint8_t fill = 0);
    GrayImage(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> pixels);

    std::uint32_t width() const { return width_; }
    std::uint32_t height() const { return height_; }
    bool empty() const { return pixels_.empty(); }

    std::uint8_t at(std::uint32_t x, std::uint32_t y) const { return pixels_[std::size_t{y} * width_ + x]; }
    std::uint8_t& at(std::uint32_t x, std::uint32_t y) { return pixels_[std::size_t{y} * width_ + x]; }

    std::span<const std::uint8_t> pixels() const { return pixels_; }
    std::span<std::uint8_t> pixels() { return pixels_; }

    double mean() const;

    bool operator==(const GrayImage&) const = default;

private:
    std::uint32_t width_ = 0;
    std::uint32_t height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

enum class ResizeMethod { kBilinear };

struct PreprocessConfig {
    double gamma = 2.4;
    std::uint32_t target_side = 128;
    ResizeMethod resize = ResizeMethod::kBilinear;

    void validate() const;
};

enum class FillMode { kNearest };

// Field names follow the Keras ImageDataGenerator knobs they model. Defaults
// are the values the screening model was trained with.
struct AugmentConfig {
    double rotation_range = 30.0;  // degrees
    double width_shift = 0.2;      // fraction of width
    double height_shift = 0.2;     // fraction of height
    double shear_range = 0.2;      // shear factor
    double zoom_range = 0.2;       // zoom in [1 - z, 1 + z] per axis
    bool horizontal_flip = true;
    bool vertical_flip = true;
    FillMode fill_mode = FillMode::kNearest;
    std::uint64_t seed = 0;

    static AugmentConfig identity();
    void validate() const;
};

// One concrete draw of the random transform.
struct AugmentDraw {
    double angle_deg = 0.0;
    double shift_x = 0.0;  // pixels
    double shift_y = 0.0;  // pixels
    double shear = 0.0;
    double zoom_x = 1.0;
    double zoom_y = 1.0;
    bool flip_h = false;
    bool flip_v = false;
};

// O = round((I / 255)^gamma * 255), clamped to [0, 255].
GrayImage gamma_correct(const GrayImage& img, double gamma);

// Half-pixel-centre bilinear resampling to side x side.
GrayImage resize_bilinear(const GrayImage& img, std::uint32_t side);
GrayImage resize_bilinear(const GrayImage& img, std::uint32_t width, std::uint32_t height);

// (height, width, 1) tensor with intensity / 255.
Tensor normalize(const GrayImage& img);
// Inverse of normalize: round(v * 255), clamped.
GrayImage denormalize(const Tensor& t);

AugmentDraw sample_augment(const AugmentConfig& cfg, std::uint32_t width, std::uint32_t height, Rng& rng);
GrayImage apply_augment(const GrayImage& img, const AugmentDraw& draw);
GrayImage augment(const GrayImage& img, const AugmentConfig& cfg, Rng& rng);

// Deterministic part of the pipeline: gamma, then resize.
GrayImage preprocess(const GrayImage& raw, const PreprocessConfig& cfg);

// Binary PGM (P5, maxval 255).
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

// Optional lossless packing of a raster (run-length of equal bytes); used
// only when a smaller transfer is wanted than the raw 16 KB.
std::vector<std::uint8_t> pack_rle(const GrayImage& img);
GrayImage unpack_rle(std::span<const std::uint8_t> bytes);

}  // namespace cxr

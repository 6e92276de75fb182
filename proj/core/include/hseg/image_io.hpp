#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hseg/tensor.hpp"

namespace hseg::io {

/// 8-bit single-channel raster as stored in a binary PGM (P5).
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint16_t maxval = 255;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

/// Binary PPM (P6, maxval <= 255) as [3 x H x W] floats on a 0-255 scale.
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);

/// Binary mask PGM: any nonzero pixel reads as 1. Written as 0/255.
Tensor read_mask_pgm(const std::filesystem::path& path);
void write_mask_pgm(const std::filesystem::path& path, const Tensor& mask);

/// Logits exported as sigmoid probability scaled to 0-255.
void write_logits_pgm(const std::filesystem::path& path, const Tensor& logits);

/// Raw little-endian float32 values, no header.
void write_f32_blob(const std::filesystem::path& path, const Tensor& t);
std::vector<float> read_f32_blob(const std::filesystem::path& path);

}  // namespace hseg::io

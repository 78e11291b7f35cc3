#pragma once

#include <filesystem>
#include <vector>

#include "dctgen/pixel_pipeline.hpp"

namespace dctgen {

// PNG (via libpng) or binary PPM (P6), chosen by file extension on write
// and by signature on read. Grayscale and alpha PNGs are expanded to RGB.
RgbImage read_image(const std::filesystem::path& path);
void write_image(const RgbImage& img, const std::filesystem::path& path);

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);
RgbImage read_png(const std::filesystem::path& path);
void write_png(const RgbImage& img, const std::filesystem::path& path);

// Sorted list of .png/.ppm files in a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace dctgen

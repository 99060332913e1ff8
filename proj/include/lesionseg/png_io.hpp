#pragma once

#include <filesystem>

#include "lesionseg/image.hpp"

namespace lesionseg {

// Loads an 8-bit RGB or grayscale PNG. Grayscale is replicated to 3 channels;
// the sample id is the file stem. No mask is attached.
ImageSample load_image(const std::filesystem::path& path);

// Loads an 8-bit grayscale PNG and binarizes: value > 127 -> 255, else 0.
Mask load_mask(const std::filesystem::path& path);

// Writes a mask as 8-bit grayscale PNG with values exactly 0/255.
// save_mask then load_mask is the identity on valid masks.
void save_mask(const Mask& mask, const std::filesystem::path& path);

void save_rgb8(const ImageU8& img, const std::filesystem::path& path);

// Writes raw 8-bit grayscale values (no binarization; length h*w).
void save_gray8(const std::vector<std::uint8_t>& values, int h, int w,
                const std::filesystem::path& path);

// Probability maps persist as 16-bit grayscale PNG; value / 65535 = probability.
ProbMap load_prob_map(const std::filesystem::path& path);
void save_prob_map(const ProbMap& map, const std::filesystem::path& path);

} // namespace lesionseg

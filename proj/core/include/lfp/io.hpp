#pragma once

#include <string>
#include <vector>

#include "lfp/core.hpp"

namespace lfp::io {

/// 8- or 16-bit PNG/JPEG, gray or colour, scaled into [0, 1].
Image read_image(const std::string& path);
ColorMap read_color(const std::string& path);
/// Single-channel 8- or 16-bit matte.
AlphaMatte read_alpha(const std::string& path);
/// Gray codes 0 / 128 / 255 only; anything else is a DataError.
Trimap read_trimap(const std::string& path);

void write_rgb(const std::string& path, const nn::Tensor& rgb);
void write_image(const std::string& path, const Image& image);
void write_color(const std::string& path, const ColorMap& c);
void write_alpha(const std::string& path, const AlphaMatte& a, bool sixteen_bit = false);
void write_trimap(const std::string& path, const Trimap& t);

/// Image files (png, jpg, jpeg) directly inside `dir`, sorted by name.
std::vector<std::string> list_images(const std::string& dir);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace lfp::io

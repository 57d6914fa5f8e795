#ifndef SHAPEPOSE_PLOTS_HPP
#define SHAPEPOSE_PLOTS_HPP

#include <filesystem>

#include "shapepose/eval.hpp"

namespace shapepose::plots {

/// Violin plot of per-dimension latent distributions: blue = fixed shape
/// (pose sweep), orange = fixed pose (shape sweep). Writes a deterministic
/// SVG and a PNG raster preview; returns the SVG path.
std::filesystem::path violin_plot(const std::filesystem::path& out_base,
                                  const eval::DisentanglementProfile& profile);

/// Horizontal strip of images with a caption row height of zero (plain grid).
Image image_row(const std::vector<Image>& images);

}  // namespace shapepose::plots

#endif

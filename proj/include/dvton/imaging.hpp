#pragma once

#include <filesystem>
#include <optional>

#include "dvton/image.hpp"

namespace dvton {

// I_e = I_s * I_m: masked-out pixels become black.
Image apply_mask(const Image& source, const Mask& mask);

// I_e = I_s * I_m + I_p * (1 - I_m): pose skeleton painted into the edit region.
Image pose_stitch(const Image& source, const Mask& mask, const PoseMap& pose);

// Bounding box of the edit (0) pixels; nullopt when there are none.
std::optional<BBox> edit_bbox(const Mask& mask);

// Replaces the edit region with its minimal covering rectangle.
Mask relax_mask_to_bbox(const Mask& mask);

// True when the edit pixels form exactly one filled axis-aligned rectangle.
bool edit_region_is_rectangle(const Mask& mask);

// Symmetric black padding to a square, then bilinear resize to target x target.
Image pad_resize(const Image& img, int target);
Mask pad_resize(const Mask& mask, int target);

// Area-average each factor x factor block and threshold at 0.5 (ties keep).
Mask downsample_mask(const Mask& mask, int factor);

// Outside the edit region, copy `source` into `generated`.
Image composite_unedited(const Image& generated, const Image& source, const Mask& mask);

// --- file I/O -------------------------------------------------------------

// PNG or JPEG (by signature). Grayscale inputs are replicated to RGB.
Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Mask polarity on disk.
enum class MaskPolarity {
  kEditIsWhite,  // external convention: white marks the region to edit
  kKeepIsWhite,
};

// Single-channel (or RGB, first channel used) PNG thresholded at 128.
Mask read_mask(const std::filesystem::path& path, MaskPolarity polarity);
void write_mask_png(const std::filesystem::path& path, const Mask& mask, MaskPolarity polarity);

}  // namespace dvton

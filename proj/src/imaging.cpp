#include "dvton/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "dvton/error.hpp"

namespace dvton {

namespace {

void require_same_extent(const Image& img, const Mask& mask, const char* op) {
  require(img.height == mask.height && img.width == mask.width, ErrorKind::kShapeMismatch,
          std::string(op) + ": image " + std::to_string(img.height) + "x" +
              std::to_string(img.width) + " vs mask " + std::to_string(mask.height) + "x" +
              std::to_string(mask.width));
}

// Bilinear sample with half-pixel centers; identity when scales are 1.
template <typename Sample>
void bilinear_resize(int src_h, int src_w, int dst_h, int dst_w, int channels, Sample&& sample,
                     std::vector<float>& out) {
  out.assign(static_cast<std::size_t>(dst_h) * dst_w * channels, 0.0f);
  const double sy = static_cast<double>(src_h) / dst_h;
  const double sx = static_cast<double>(src_w) / dst_w;
  for (int r = 0; r < dst_h; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int c = 0; c < dst_w; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < channels; ++ch) {
        double v = sample(y0, x0, ch);
        if (wx > 0.0 || wy > 0.0) {
          v = (1 - wy) * ((1 - wx) * sample(y0, x0, ch) + wx * sample(y0, x1, ch)) +
              wy * ((1 - wx) * sample(y1, x0, ch) + wx * sample(y1, x1, ch));
        }
        out[(static_cast<std::size_t>(r) * dst_w + c) * channels + ch] = static_cast<float>(v);
      }
    }
  }
}

struct SquarePad {
  int side;
  int top;
  int left;
};

SquarePad square_pad(int h, int w) {
  const int side = std::max(h, w);
  return {side, (side - h) / 2, (side - w) / 2};
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

// Reads 8-bit pixels with the requested channel count (1 or 3).
std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, int channels,
                                         int& height, int& width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorKind::kFormat, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::kFormat, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return bytes;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

std::vector<std::uint8_t> read_jpeg_rgb(const std::filesystem::path& path, int& height, int& width) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  require(file != nullptr, ErrorKind::kIo, "cannot open " + path.string());

  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr info) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(info->err);
    (*info->err->format_message)(info, mgr->message);
    std::longjmp(mgr->jump, 1);
  };
  std::vector<std::uint8_t> bytes;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorKind::kFormat, "cannot decode JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  bytes.resize(stride * height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = bytes.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return bytes;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

bool Image::valid() const {
  if (data.size() != static_cast<std::size_t>(height) * width * kChannels) return false;
  return std::all_of(data.begin(), data.end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

std::size_t Mask::edit_count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{0}));
}

Image apply_mask(const Image& source, const Mask& mask) {
  require_same_extent(source, mask, "apply_mask");
  Image out = source;
  for (int r = 0; r < source.height; ++r) {
    for (int c = 0; c < source.width; ++c) {
      if (mask.at(r, c) == 0) {
        for (int ch = 0; ch < Image::kChannels; ++ch) out.at(r, c, ch) = 0.0f;
      }
    }
  }
  return out;
}

Image pose_stitch(const Image& source, const Mask& mask, const PoseMap& pose) {
  require_same_extent(source, mask, "pose_stitch");
  require(pose.image.height == source.height && pose.image.width == source.width,
          ErrorKind::kShapeMismatch, "pose_stitch: pose extent differs from source");
  Image out = source;
  for (int r = 0; r < source.height; ++r) {
    for (int c = 0; c < source.width; ++c) {
      if (mask.at(r, c) == 0) {
        for (int ch = 0; ch < Image::kChannels; ++ch) out.at(r, c, ch) = pose.image.at(r, c, ch);
      }
    }
  }
  return out;
}

std::optional<BBox> edit_bbox(const Mask& mask) {
  BBox box{mask.height, mask.width, 0, 0};
  bool any = false;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c) != 0) continue;
      any = true;
      box.top = std::min(box.top, r);
      box.left = std::min(box.left, c);
      box.bottom = std::max(box.bottom, r + 1);
      box.right = std::max(box.right, c + 1);
    }
  }
  if (!any) return std::nullopt;
  return box;
}

Mask relax_mask_to_bbox(const Mask& mask) {
  const auto box = edit_bbox(mask);
  require(box.has_value(), ErrorKind::kInvalidArgument,
          "relax_mask_to_bbox: mask has no edit pixels");
  Mask out(mask.height, mask.width, 1);
  for (int r = box->top; r < box->bottom; ++r) {
    for (int c = box->left; c < box->right; ++c) out.at(r, c) = 0;
  }
  return out;
}

bool edit_region_is_rectangle(const Mask& mask) {
  const auto box = edit_bbox(mask);
  if (!box) return false;
  return mask.edit_count() == static_cast<std::size_t>(box->height()) * box->width();
}

Image pad_resize(const Image& img, int target) {
  require(target > 0, ErrorKind::kInvalidArgument, "pad_resize: target must be positive");
  require(!img.empty(), ErrorKind::kInvalidArgument, "pad_resize: empty image");
  const SquarePad pad = square_pad(img.height, img.width);
  Image squared(pad.side, pad.side, 0.0f);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < Image::kChannels; ++ch) {
        squared.at(r + pad.top, c + pad.left, ch) = img.at(r, c, ch);
      }
    }
  }
  if (pad.side == target) return squared;
  Image out;
  out.height = out.width = target;
  bilinear_resize(pad.side, pad.side, target, target, Image::kChannels,
                  [&](int r, int c, int ch) { return static_cast<double>(squared.at(r, c, ch)); },
                  out.data);
  return out;
}

Mask pad_resize(const Mask& mask, int target) {
  require(target > 0, ErrorKind::kInvalidArgument, "pad_resize: target must be positive");
  require(mask.height > 0 && mask.width > 0, ErrorKind::kInvalidArgument,
          "pad_resize: empty mask");
  const SquarePad pad = square_pad(mask.height, mask.width);
  // Padding is never edited.
  Mask squared(pad.side, pad.side, 1);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) squared.at(r + pad.top, c + pad.left) = mask.at(r, c);
  }
  if (pad.side == target) return squared;
  std::vector<float> resized;
  bilinear_resize(pad.side, pad.side, target, target, 1,
                  [&](int r, int c, int) { return static_cast<double>(squared.at(r, c)); },
                  resized);
  Mask out(target, target);
  for (std::size_t i = 0; i < resized.size(); ++i) out.data[i] = resized[i] >= 0.5f ? 1 : 0;
  return out;
}

Mask downsample_mask(const Mask& mask, int factor) {
  require(factor >= 1, ErrorKind::kInvalidArgument, "downsample_mask: factor must be >= 1");
  require(mask.height % factor == 0 && mask.width % factor == 0, ErrorKind::kShapeMismatch,
          "downsample_mask: extent " + std::to_string(mask.height) + "x" +
              std::to_string(mask.width) + " not divisible by " + std::to_string(factor));
  Mask out(mask.height / factor, mask.width / factor);
  const int area = factor * factor;
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      int keep = 0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) keep += mask.at(r * factor + dr, c * factor + dc);
      }
      // keep / area >= 0.5, in integers.
      out.at(r, c) = 2 * keep >= area ? 1 : 0;
    }
  }
  return out;
}

Image composite_unedited(const Image& generated, const Image& source, const Mask& mask) {
  require_same_extent(source, mask, "composite_unedited");
  require(generated.height == source.height && generated.width == source.width,
          ErrorKind::kShapeMismatch, "composite_unedited: generated extent differs from source");
  Image out = generated;
  for (int r = 0; r < source.height; ++r) {
    for (int c = 0; c < source.width; ++c) {
      if (mask.at(r, c) == 1) {
        for (int ch = 0; ch < Image::kChannels; ++ch) out.at(r, c, ch) = source.at(r, c, ch);
      }
    }
  }
  return out;
}

Image read_image(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "missing file " + path.string());
  int h = 0;
  int w = 0;
  const auto bytes = has_png_signature(path) ? read_png_bytes(path, 3, h, w)
                                             : read_jpeg_rgb(path, h, w);
  Image img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  require(!img.empty(), ErrorKind::kInvalidArgument, "write_png: empty image");
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), quantize);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, "cannot write " + path.string() + ": " + image.message);
  }
}

Mask read_mask(const std::filesystem::path& path, MaskPolarity polarity) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "missing file " + path.string());
  require(has_png_signature(path), ErrorKind::kFormat, "mask is not a PNG: " + path.string());
  int h = 0;
  int w = 0;
  const auto bytes = read_png_bytes(path, 1, h, w);
  Mask mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const bool white = bytes[i] >= 128;
    const bool keep = polarity == MaskPolarity::kKeepIsWhite ? white : !white;
    mask.data[i] = keep ? 1 : 0;
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask, MaskPolarity polarity) {
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const bool keep = mask.data[i] != 0;
    const bool white = polarity == MaskPolarity::kKeepIsWhite ? keep : !keep;
    bytes[i] = white ? 255 : 0;
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(mask.width);
  image.height = static_cast<png_uint_32>(mask.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, "cannot write " + path.string() + ": " + image.message);
  }
}

}  // namespace dvton

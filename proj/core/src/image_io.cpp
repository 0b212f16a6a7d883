#include "setgan/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "setgan/error.hpp"

namespace setgan {

namespace {

float to_unit(std::uint8_t v) { return static_cast<float>(v / 127.5 - 1.0); }

std::uint8_t to_byte(float v) {
  const double scaled = std::round((static_cast<double>(std::clamp(v, -1.0f, 1.0f)) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // interleaved
};

Raster decode_png(std::span<const std::uint8_t> bytes, bool gray) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kBadFormat, std::string("png decode: ") + image.message);
  }
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster raster{static_cast<int>(image.height), static_cast<int>(image.width), gray ? 1 : 3, {}};
  raster.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raster.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::kBadFormat, std::string("png decode: ") + image.message);
  }
  return raster;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
  auto* manager = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, manager->message);
  std::longjmp(manager->jump, 1);
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct info;
  JpegErrorManager error;
  info.err = jpeg_std_error(&error.base);
  error.base.error_exit = jpeg_error_exit;
  Raster raster;
  if (setjmp(error.jump)) {
    jpeg_destroy_decompress(&info);
    throw Error(ErrorCode::kBadFormat, std::string("jpeg decode: ") + error.message);
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  raster.height = static_cast<int>(info.output_height);
  raster.width = static_cast<int>(info.output_width);
  raster.channels = 3;
  raster.pixels.resize(static_cast<std::size_t>(raster.height) * raster.width * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = raster.pixels.data() + static_cast<std::size_t>(info.output_scanline) * raster.width * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return raster;
}

std::vector<std::uint8_t> encode_png_raster(const Raster& raster) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, raster.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

ImageGrid decode_image(std::span<const std::uint8_t> bytes) {
  Raster raster;
  if (is_png(bytes)) {
    raster = decode_png(bytes, false);
  } else if (is_jpeg(bytes)) {
    raster = decode_jpeg(bytes);
  } else {
    throw Error(ErrorCode::kBadFormat, "unsupported image format (expected PNG or JPEG)");
  }
  ImageGrid image(raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * raster.width + x) * 3;
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = to_unit(raster.pixels[base + c]);
    }
  }
  return image;
}

ImageGrid load_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

std::vector<std::uint8_t> encode_png(const ImageGrid& image) {
  Raster raster{image.height(), image.width(), 3, {}};
  raster.pixels.resize(static_cast<std::size_t>(image.height()) * image.width() * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * image.width() + x) * 3;
      for (int c = 0; c < 3; ++c) raster.pixels[base + c] = to_byte(image.at(c, y, x));
    }
  }
  return encode_png_raster(raster);
}

void save_png(const std::filesystem::path& path, const ImageGrid& image) {
  write_file(path, encode_png(image));
}

Mask decode_mask(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) throw Error(ErrorCode::kBadFormat, "mask must be a PNG");
  const Raster raster = decode_png(bytes, true);
  Mask mask(raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      mask.at(y, x) = raster.pixels[static_cast<std::size_t>(y) * raster.width + x];
    }
  }
  return mask;
}

Mask load_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

std::vector<std::uint8_t> encode_mask_png(const Mask& mask) {
  Raster raster{mask.height(), mask.width(), 1, {}};
  raster.pixels.resize(static_cast<std::size_t>(mask.height()) * mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      raster.pixels[static_cast<std::size_t>(y) * mask.width() + x] = mask.editable(y, x) ? 255 : 0;
    }
  }
  return encode_png_raster(raster);
}

void save_mask_png(const std::filesystem::path& path, const Mask& mask) {
  write_file(path, encode_mask_png(mask));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace setgan

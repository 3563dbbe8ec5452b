#pragma once

// 8-bit grayscale image files: binary PGM (P5, maxval 255) and PNG.
// PNG support requires linking libpng.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bmsmoe/errors.hpp"
#include "bmsmoe/image.hpp"

namespace bmsmoe {

namespace detail {

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return bytes;
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
    token.push_back(static_cast<char>(bytes[pos++]));
  }
  return token;
}

inline int pnm_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos, const char* field,
                   const std::string& name) {
  const std::string token = pnm_token(bytes, pos);
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw FormatError("'" + name + "': malformed PGM " + field + " '" + token + "'");
  }
  return std::stoi(token);
}

inline ImageBuffer decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  const int width = pnm_int(bytes, pos, "width", name);
  const int height = pnm_int(bytes, pos, "height", name);
  const int maxval = pnm_int(bytes, pos, "maxval", name);
  if (width < 1 || height < 1) throw FormatError("'" + name + "': PGM dimensions must be positive");
  if (maxval != 255) {
    const int depth = maxval > 255 ? 16 : static_cast<int>(std::ceil(std::log2(maxval + 1.0)));
    throw FormatError("'" + name + "': unsupported PGM bit depth " + std::to_string(depth) +
                      " (maxval " + std::to_string(maxval) + "); only 8-bit maxval 255 is supported");
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() < pos + count) {
    throw FormatError("'" + name + "': truncated PGM raster, expected " + std::to_string(count) + " bytes");
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = bytes[pos + i] / 255.0;
  return ImageBuffer(width, height, std::move(data));
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

inline ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  // IHDR is always the first chunk: 8-byte signature, length, type, then fields.
  if (bytes.size() < 33 || std::string(bytes.begin() + 12, bytes.begin() + 16) != "IHDR") {
    throw FormatError("'" + name + "': malformed PNG header");
  }
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (bit_depth != 8) {
    throw FormatError("'" + name + "': unsupported PNG bit depth " + std::to_string(bit_depth) +
                      "; only 8-bit images are supported");
  }
  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
    throw FormatError("'" + name + "': unsupported PNG color type " + std::to_string(color_type) +
                      "; only grayscale and RGB are supported");
  }

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("'" + name + "': " + msg);
  }
  const bool rgb = color_type == PNG_COLOR_TYPE_RGB;
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> raster(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raster.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("'" + name + "': " + msg);
  }
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<double> data(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (rgb) {
      const double luma = 0.299 * raster[3 * i] + 0.587 * raster[3 * i + 1] + 0.114 * raster[3 * i + 2];
      data[i] = std::clamp(luma / 255.0, 0.0, 1.0);
    } else {
      data[i] = raster[i] / 255.0;
    }
  }
  return ImageBuffer(width, height, std::move(data));
}

inline bool has_png_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace detail

// Loads a P5 PGM or 8-bit PNG; the format is detected from the file signature.
inline ImageBuffer load_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  const std::string name = path.string();
  static constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
    return detail::decode_png(bytes, name);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return detail::decode_pgm(bytes, name);
  throw FormatError("'" + name + "': not a binary PGM (P5) or PNG file");
}

// Writes 8-bit output, PNG when the extension is .png and P5 PGM otherwise.
inline void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.empty()) throw ArgumentError("cannot save an empty image");
  std::vector<std::uint8_t> raster(img.size());
  std::transform(img.data().begin(), img.data().end(), raster.begin(), detail::quantize);

  if (detail::has_png_extension(path)) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, raster.data(), 0, nullptr)) {
      const std::string msg = image.message;
      png_image_free(&image);
      throw IoError("cannot write '" + path.string() + "': " + msg);
    }
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

}  // namespace bmsmoe

/*
 * Copyright 2026 The cofor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "cofor/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "cofor/util.hpp"

namespace cofor {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// libjpeg aborts through its error handler; route it into an exception so a
// bad file cannot take the process down.
struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {0};
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

PixelImage decode_jpeg_stream(jpeg_decompress_struct& cinfo, JpegErrorMgr& jerr,
                              const std::string& origin) {
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail("JPEG decode failed (" + origin + "): " + jerr.message);
  }
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_GRAYSCALE) {
    cinfo.out_color_space = JCS_GRAYSCALE;
  } else if (cinfo.jpeg_color_space == JCS_YCbCr || cinfo.jpeg_color_space == JCS_RGB) {
    cinfo.out_color_space = JCS_RGB;
  } else {
    jpeg_destroy_decompress(&cinfo);
    fail("unsupported JPEG color space (" + origin + "); only grayscale and RGB are accepted");
  }
  jpeg_start_decompress(&cinfo);
  PixelImage img(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
                 cinfo.output_components);
  const size_t row_bytes = static_cast<size_t>(img.width) * img.channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() + cinfo.output_scanline * row_bytes;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

std::vector<uint8_t> encode_jpeg_mem(const PixelImage& img, int quality) {
  if (img.channels != 1 && img.channels != 3)
    fail("JPEG encode requires 1 or 3 channels, got " + std::to_string(img.channels));
  if (quality < 1 || quality > 100)
    fail("JPEG quality must be in [1,100], got " + std::to_string(quality));

  jpeg_compress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  jpeg_create_compress(&cinfo);

  unsigned char* buf = nullptr;
  unsigned long buf_len = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    free(buf);
    fail(std::string("JPEG encode failed: ") + jerr.message);
  }
  jpeg_mem_dest(&cinfo, &buf, &buf_len);

  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = img.channels;
  cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);

  const size_t row_bytes = static_cast<size_t>(img.width) * img.channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<uint8_t*>(img.data.data()) + cinfo.next_scanline * row_bytes;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  std::vector<uint8_t> out(buf, buf + buf_len);
  free(buf);
  return out;
}

PixelImage decode_png_file(FILE* fp, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("PNG decode failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported pixel format: 16-bit PNG (" + path + ")");
  }
  // Lossless expansions only: palette to RGB, sub-byte gray to 8 bits.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  // Alpha is dropped by contract.
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported PNG channel count " + std::to_string(channels) + " (" + path + ")");
  }
  PixelImage img(static_cast<int>(png_get_image_width(png, info)),
                 static_cast<int>(png_get_image_height(png, info)), channels);
  std::vector<png_bytep> rows(img.height);
  const size_t row_bytes = static_cast<size_t>(img.width) * img.channels;
  for (int r = 0; r < img.height; ++r) rows[r] = img.data.data() + r * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

PixelImage decode_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open image: " + path);

  unsigned char sig[8] = {0};
  const size_t got = std::fread(sig, 1, sizeof(sig), fp.get());
  std::rewind(fp.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) {
    return decode_png_file(fp.get(), path);
  }
  if (got >= 2 && sig[0] == 0xFF && sig[1] == 0xD8) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp.get());
    return decode_jpeg_stream(cinfo, jerr, path);
  }
  fail("unrecognized image format (not PNG or JPEG): " + path);
}

void encode_png(const PixelImage& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    fail("PNG encode requires 1 or 3 channels, got " + std::to_string(img.channels));
  if (img.empty()) fail("PNG encode of empty image: " + path);

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG encode failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t row_bytes = static_cast<size_t>(img.width) * img.channels;
  for (int r = 0; r < img.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(img.data.data() + r * row_bytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void encode_jpeg(const PixelImage& img, const std::string& path, int quality) {
  const std::vector<uint8_t> bytes = encode_jpeg_mem(img, quality);
  write_file_atomic(path, bytes.data(), bytes.size());
}

PixelImage jpeg_recompress(const PixelImage& img, std::optional<int> quality) {
  if (!quality.has_value()) return img;
  if (img.channels != 1 && img.channels != 3)
    fail("jpeg_recompress requires 1 or 3 channels, got " + std::to_string(img.channels));

  const std::vector<uint8_t> bytes = encode_jpeg_mem(img, *quality);

  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  PixelImage out = decode_jpeg_stream(cinfo, jerr, "in-memory recompress");
  if (out.width != img.width || out.height != img.height || out.channels != img.channels)
    fail("JPEG recompress changed dimensions");
  return out;
}

std::vector<std::pair<int, int>> patch_origins(int width, int height, const PatchSpec& spec) {
  if (spec.size < 2) fail("patch size must be >= 2, got " + std::to_string(spec.size));
  if (spec.stride < 1) fail("patch stride must be >= 1, got " + std::to_string(spec.stride));
  if (width < spec.size || height < spec.size) return {{0, 0}};

  auto axis_offsets = [&](int extent) {
    std::vector<int> offs;
    for (int o = 0;; o += spec.stride) {
      if (o + spec.size >= extent) {
        offs.push_back(extent - spec.size);  // clamp flush with the border
        break;
      }
      offs.push_back(o);
    }
    return offs;
  };
  const std::vector<int> rows = axis_offsets(height);
  const std::vector<int> cols = axis_offsets(width);
  std::vector<std::pair<int, int>> origins;
  origins.reserve(rows.size() * cols.size());
  for (int r : rows)
    for (int c : cols) origins.emplace_back(r, c);
  return origins;
}

PixelImage crop(const PixelImage& img, int row, int col, int h, int w) {
  PixelImage out(w, h, img.channels);
  const size_t src_row_bytes = static_cast<size_t>(img.width) * img.channels;
  const size_t dst_row_bytes = static_cast<size_t>(w) * img.channels;
  for (int r = 0; r < h; ++r) {
    std::memcpy(out.data.data() + r * dst_row_bytes,
                img.data.data() + (row + r) * src_row_bytes + static_cast<size_t>(col) * img.channels,
                dst_row_bytes);
  }
  return out;
}

std::vector<Patch> extract_patches(const PixelImage& img, const PatchSpec& spec) {
  if (img.empty()) fail("extract_patches on empty image");
  if (img.width < spec.size || img.height < spec.size) {
    return {Patch{img, 0, 0}};
  }
  std::vector<Patch> patches;
  for (auto [r, c] : patch_origins(img.width, img.height, spec)) {
    patches.push_back(Patch{crop(img, r, c, spec.size, spec.size), r, c});
  }
  return patches;
}

}  // namespace cofor

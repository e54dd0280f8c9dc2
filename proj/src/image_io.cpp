#include "sim2real/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <csetjmp>
#include <cstring>

#include "sim2real/errors.hpp"

namespace sim2real {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

struct MemoryReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->offset + length > reader->size) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, reader->data + reader->offset, length);
  reader->offset += length;
}

void png_error_to_jmp(png_structp png, png_const_charp message) {
  auto* buf = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(buf, 256, "%s", message);
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_to_jmp(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImageInfo probe_png(std::span<const std::uint8_t> bytes) {
  // Signature (8) + IHDR length/type (8) + width/height (8).
  if (bytes.size() < 24 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw DecodeError("PNG header is truncated or lacks IHDR");
  }
  ImageInfo info;
  info.width = static_cast<int>(read_be32(bytes.data() + 16));
  info.height = static_cast<int>(read_be32(bytes.data() + 20));
  info.format = ImageFormat::png;
  if (info.width <= 0 || info.height <= 0) throw DecodeError("PNG has zero dimension");
  return info;
}

Image8 decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DecodeError(std::string("PNG decode failed: ") + image.message);
  }
  int channels = 3;
  if (image.format & PNG_FORMAT_FLAG_COLOR) {
    channels = (image.format & PNG_FORMAT_FLAG_ALPHA) ? 4 : 3;
    image.format = channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  } else {
    channels = (image.format & PNG_FORMAT_FLAG_ALPHA) ? 4 : 1;
    image.format = channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_GRAY;
  }
  Image8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("PNG decode failed: " + msg);
  }
  return out;
}

ImageInfo probe_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_to_jmp;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("JPEG header decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  ImageInfo info{static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height),
                 ImageFormat::jpeg};
  jpeg_destroy_decompress(&cinfo);
  return info;
}

Image8 decode_jpeg(std::span<const std::uint8_t> bytes) {
  // Declared before setjmp so a longjmp never skips its destructor.
  Image8 out;
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_to_jmp;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.channels = static_cast<int>(cinfo.output_components);
  const std::size_t stride = static_cast<std::size_t>(out.width) * out.channels;
  out.pixels.resize(stride * out.height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

std::string to_string(ImageFormat f) {
  switch (f) {
    case ImageFormat::png: return "png";
    case ImageFormat::jpeg: return "jpeg";
    case ImageFormat::unknown: break;
  }
  return "unknown";
}

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) {
    return ImageFormat::png;
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return ImageFormat::jpeg;
  }
  return ImageFormat::unknown;
}

ImageInfo probe_image(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::png: return probe_png(bytes);
    case ImageFormat::jpeg: return probe_jpeg(bytes);
    case ImageFormat::unknown: break;
  }
  throw DecodeError("unrecognised image encoding (expected PNG or JPEG)");
}

Image8 decode_image(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::png: return decode_png(bytes);
    case ImageFormat::jpeg: return decode_jpeg(bytes);
    case ImageFormat::unknown: break;
  }
  throw DecodeError("unrecognised image encoding (expected PNG or JPEG)");
}

Bytes encode_png(const Image8& img) {
  if (img.width <= 0 || img.height <= 0) throw DecodeError("cannot encode empty image");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  switch (img.channels) {
    case 1: image.format = PNG_FORMAT_GRAY; break;
    case 3: image.format = PNG_FORMAT_RGB; break;
    case 4: image.format = PNG_FORMAT_RGBA; break;
    default: throw DecodeError("unsupported channel count " + std::to_string(img.channels));
  }
  const std::size_t expected =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (img.pixels.size() != expected) throw DecodeError("pixel buffer size mismatch");
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0,
                                 nullptr)) {
    throw DecodeError(std::string("PNG encode failed: ") + image.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0,
                                 nullptr)) {
    throw DecodeError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Bytes ensure_png(std::span<const std::uint8_t> bytes) {
  if (sniff_format(bytes) == ImageFormat::png) return Bytes(bytes.begin(), bytes.end());
  return encode_png(decode_image(bytes));
}

IndexImage decode_index_png(std::span<const std::uint8_t> bytes) {
  if (sniff_format(bytes) != ImageFormat::png) {
    throw DecodeError("label map is not a PNG file");
  }
  IndexImage out;
  std::vector<png_bytep> rows;
  char message[256] = "unknown libpng error";
  MemoryReader reader{bytes.data(), bytes.size(), 0};

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, message, png_error_to_jmp,
                             png_warning_ignore);
  if (png == nullptr) throw DecodeError("libpng: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("libpng: cannot allocate info struct");
  }
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError(std::string("label map decode failed: ") + message);
  }
  png_set_read_fn(png, &reader, png_read_from_memory);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
    bad_layout = true;
  } else {
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.values.resize(static_cast<std::size_t>(out.width) * out.height);
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) {
      rows[y] = out.values.data() + static_cast<std::size_t>(y) * out.width;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (bad_layout) {
    throw DecodeError("label map must be an 8-bit single-channel PNG (color type " +
                      std::to_string(color_type) + ", depth " +
                      std::to_string(bit_depth) + ")");
  }
  return out;
}

Bytes encode_index_png(const IndexImage& image) {
  Image8 gray{image.width, image.height, 1, image.values};
  return encode_png(gray);
}

}  // namespace sim2real

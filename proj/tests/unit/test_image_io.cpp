#include <gtest/gtest.h>

#include "sim2real/errors.hpp"
#include "sim2real/image_io.hpp"
#include "test_support.hpp"

using namespace sim2real;
using sim2real::testing::random_rgb;

TEST(ImageIo, PngRoundTripIsLossless) {
  const Image8 img = random_rgb(13, 7, 1);
  const Bytes png = encode_png(img);
  EXPECT_EQ(sniff_format(png), ImageFormat::png);
  const ImageInfo info = probe_image(png);
  EXPECT_EQ(info.width, 13);
  EXPECT_EQ(info.height, 7);
  const Image8 back = decode_image(png);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(ImageIo, EnsurePngKeepsPngBytesVerbatim) {
  const Bytes png = sim2real::testing::random_png(5, 4, 2);
  EXPECT_EQ(ensure_png(png), png);
}

TEST(ImageIo, JpegIsTranscodedToPngWithSameSize) {
  const Image8 img = random_rgb(16, 9, 3);
  const Bytes jpg = sim2real::testing::encode_jpeg(img);
  EXPECT_EQ(sniff_format(jpg), ImageFormat::jpeg);
  const ImageInfo jinfo = probe_image(jpg);
  EXPECT_EQ(jinfo.width, 16);
  EXPECT_EQ(jinfo.height, 9);
  const Bytes png = ensure_png(jpg);
  EXPECT_EQ(sniff_format(png), ImageFormat::png);
  // Lossless: the PNG holds exactly the decoded JPEG pixels.
  EXPECT_EQ(decode_image(png).pixels, decode_image(jpg).pixels);
}

TEST(ImageIo, GarbageIsDecodeError) {
  const std::string_view text = "definitely not an image";
  const Bytes junk(text.begin(), text.end());
  EXPECT_EQ(sniff_format(junk), ImageFormat::unknown);
  EXPECT_THROW(probe_image(junk), DecodeError);
  EXPECT_THROW(decode_image(junk), DecodeError);
  Bytes truncated = sim2real::testing::random_png(8, 8, 4);
  truncated.resize(truncated.size() / 2);
  EXPECT_THROW(decode_image(truncated), DecodeError);
}

TEST(ImageIo, IndexPngRoundTrip) {
  IndexImage idx{4, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255}};
  const Bytes png = encode_index_png(idx);
  const IndexImage back = decode_index_png(png);
  EXPECT_EQ(back.width, 4);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.values, idx.values);
}

TEST(ImageIo, IndexPngRejectsColorImages) {
  EXPECT_THROW(decode_index_png(sim2real::testing::random_png(4, 4, 5)), DecodeError);
}

#include "lqg/png.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "lqg/errors.hpp"

namespace lqg {

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0xFFFFFFFFu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc;
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t byte : data) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void write_chunk(std::ofstream& os, const char type[4], const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> head;
  put_be32(head, static_cast<std::uint32_t>(data.size()));
  os.write(reinterpret_cast<const char*>(head.data()), 4);
  os.write(type, 4);
  if (!data.empty()) os.write(reinterpret_cast<const char*>(data.data()),
                              static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = crc32(reinterpret_cast<const std::uint8_t*>(type), 4);
  crc = crc32(data.data(), data.size(), crc) ^ 0xFFFFFFFFu;
  std::vector<std::uint8_t> tail;
  put_be32(tail, crc);
  os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, std::uint32_t width,
                   std::uint32_t height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw DataError("write_png_rgb: buffer size does not match dimensions");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open PNG for writing: " + path.string());

  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, width);
  put_be32(ihdr, height);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  write_chunk(os, "IHDR", ihdr);

  // Raw scanlines, filter byte 0 per row.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + 3 * width);
  }

  // zlib stream with stored deflate blocks.
  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  std::size_t pos = 0;
  while (pos < raw.size() || raw.empty()) {
    const std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
    const bool final = pos + len >= raw.size();
    idat.push_back(final ? 1 : 0);
    idat.push_back(static_cast<std::uint8_t>(len & 0xFF));
    idat.push_back(static_cast<std::uint8_t>(len >> 8));
    idat.push_back(static_cast<std::uint8_t>(~len & 0xFF));
    idat.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xFF));
    idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    if (raw.empty()) break;
  }
  put_be32(idat, adler32(raw));
  write_chunk(os, "IDAT", idat);
  write_chunk(os, "IEND", {});
  if (!os) throw DataError("failed writing PNG: " + path.string());
}

}  // namespace lqg

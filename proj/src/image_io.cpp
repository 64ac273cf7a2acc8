#include "pmcr/image_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace pmcr {

static_assert(std::endian::native == std::endian::little,
              "serialization code assumes a little-endian host");

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto size = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> data(static_cast<size_t>(size), uint8_t(0));
  if (size > 0) f.read(reinterpret_cast<char*>(data.data()), size);
  if (!f) throw IoError("cannot read " + path);
  return data;
}

void write_file(const std::string& path, const std::vector<uint8_t>& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!f) throw IoError("cannot write " + path);
}

constexpr uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return uint8_t(a);
  if (pb <= pc) return uint8_t(b);
  return uint8_t(c);
}

// Undoes PNG row filters in place over `rows` of `rowbytes` payload bytes
// each (bpp = bytes per pixel). The filter byte prefixes every row.
void defilter(std::vector<uint8_t>& raw, int rows, size_t rowbytes, int bpp,
              const std::string& path) {
  std::vector<uint8_t> prev(rowbytes, 0);
  for (int y = 0; y < rows; y++) {
    uint8_t* row = raw.data() + size_t(y) * (rowbytes + 1);
    const uint8_t filter = row[0];
    uint8_t* cur = row + 1;
    switch (filter) {
      case 0:
        break;
      case 1:
        for (size_t i = size_t(bpp); i < rowbytes; i++) cur[i] = uint8_t(cur[i] + cur[i - size_t(bpp)]);
        break;
      case 2:
        for (size_t i = 0; i < rowbytes; i++) cur[i] = uint8_t(cur[i] + prev[i]);
        break;
      case 3:
        for (size_t i = 0; i < rowbytes; i++) {
          const int left = i >= size_t(bpp) ? cur[i - size_t(bpp)] : 0;
          cur[i] = uint8_t(cur[i] + (left + prev[i]) / 2);
        }
        break;
      case 4:
        for (size_t i = 0; i < rowbytes; i++) {
          const int left = i >= size_t(bpp) ? cur[i - size_t(bpp)] : 0;
          const int ul = i >= size_t(bpp) ? prev[i - size_t(bpp)] : 0;
          cur[i] = uint8_t(cur[i] + paeth(left, prev[i], ul));
        }
        break;
      default:
        throw IoError("corrupt PNG (bad row filter): " + path);
    }
    std::memcpy(prev.data(), cur, rowbytes);
  }
}

Tensor decode_png(const std::vector<uint8_t>& data, const std::string& path) {
  if (data.size() < 8 + 25 || std::memcmp(data.data(), kPngSig, 8) != 0)
    throw IoError("not a PNG file: " + path);

  int width = 0, height = 0, depth = 0, color = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  bool seen_end = false;
  while (pos + 12 <= data.size()) {
    const uint32_t len = be32(&data[pos]);
    if (pos + 12 + len > data.size()) throw IoError("truncated PNG: " + path);
    const char* type = reinterpret_cast<const char*>(&data[pos + 4]);
    const uint8_t* payload = &data[pos + 8];
    const uint32_t crc = be32(&data[pos + 8 + len]);
    uint32_t actual = uint32_t(crc32(0, &data[pos + 4], len + 4));
    if (crc != actual) throw IoError("corrupt PNG (chunk CRC mismatch): " + path);

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("corrupt PNG (bad IHDR): " + path);
      width = int(be32(payload));
      height = int(be32(payload + 4));
      depth = payload[8];
      color = payload[9];
      if (payload[10] != 0 || payload[11] != 0) throw IoError("unsupported PNG compression: " + path);
      if (payload[12] != 0) throw IoError("unsupported PNG (interlaced): " + path);
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_end = true;
      break;
    }
    pos += 12 + len;
  }
  if (!seen_end) throw IoError("truncated PNG (missing IEND): " + path);
  if (width <= 0 || height <= 0) throw IoError("corrupt PNG (bad dimensions): " + path);
  if (depth != 8 || (color != 2 && color != 6))
    throw IoError("unsupported PNG format (need 8-bit RGB/RGBA, got depth " +
                  std::to_string(depth) + " color type " + std::to_string(color) + "): " + path);

  const int bpp = color == 2 ? 3 : 4;
  const size_t rowbytes = size_t(width) * size_t(bpp);
  const size_t expect = (rowbytes + 1) * size_t(height);
  std::vector<uint8_t> raw(expect);
  uLongf out_len = uLongf(expect);
  const int rc = uncompress(raw.data(), &out_len, idat.data(), uLong(idat.size()));
  if (rc != Z_OK || out_len != expect) throw IoError("corrupt PNG (inflate failed): " + path);

  defilter(raw, height, rowbytes, bpp, path);

  Tensor img(Shape4{1, 3, height, width});
  float* rp = img.mutable_data();
  float* gp = rp + size_t(height) * width;
  float* bp = gp + size_t(height) * width;
  for (int y = 0; y < height; y++) {
    const uint8_t* row = raw.data() + size_t(y) * (rowbytes + 1) + 1;
    for (int x = 0; x < width; x++) {
      rp[size_t(y) * width + x] = float(row[size_t(x) * size_t(bpp)]) / 255.0f;
      gp[size_t(y) * width + x] = float(row[size_t(x) * size_t(bpp) + 1]) / 255.0f;
      bp[size_t(y) * width + x] = float(row[size_t(x) * size_t(bpp) + 2]) / 255.0f;
    }
  }
  return img;
}

Tensor decode_ppm(const std::vector<uint8_t>& data, const std::string& path) {
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') pos++;
      } else if (std::isspace(data[pos])) {
        pos++;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < data.size() && !std::isspace(data[pos])) tok.push_back(char(data[pos++]));
    return tok;
  };
  if (next_token() != "P6") throw IoError("not a binary PPM: " + path);
  const std::string ws = next_token(), hs = next_token(), ms = next_token();
  if (ws.empty() || hs.empty() || ms.empty()) throw IoError("corrupt PPM header: " + path);
  const int width = std::stoi(ws), height = std::stoi(hs), maxval = std::stoi(ms);
  if (maxval != 255) throw IoError("unsupported PPM maxval " + ms + " (need 255): " + path);
  pos++;  // single whitespace after maxval
  const size_t need = size_t(width) * size_t(height) * 3;
  if (data.size() - pos < need) throw IoError("truncated PPM: " + path);

  Tensor img(Shape4{1, 3, height, width});
  const size_t plane = size_t(height) * width;
  for (size_t i = 0; i < plane; i++)
    for (int ch = 0; ch < 3; ch++)
      img.mutable_data()[size_t(ch) * plane + i] = float(data[pos + i * 3 + size_t(ch)]) / 255.0f;
  return img;
}

uint8_t to_u8(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return uint8_t(std::floor(c * 255.0f + 0.5f));
}

void check_rgb(const Tensor& image) {
  if (image.empty() || image.n() != 1 || image.c() != 3)
    throw std::invalid_argument("save_image expects a (1,3,h,w) tensor, got " +
                                (image.empty() ? std::string("empty") : image.shape().str()));
}

std::vector<uint8_t> interleave_u8(const Tensor& image) {
  const int h = image.h(), w = image.w();
  const size_t plane = size_t(h) * w;
  std::vector<uint8_t> rgb(plane * 3);
  for (size_t i = 0; i < plane; i++)
    for (int ch = 0; ch < 3; ch++)
      rgb[i * 3 + size_t(ch)] = to_u8(image.data()[size_t(ch) * plane + i]);
  return rgb;
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
  put_be32(out, uint32_t(payload.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc =
      uint32_t(crc32(0, out.data() + type_at, uInt(4 + payload.size())));
  put_be32(out, crc);
}

void encode_png(const Tensor& image, const std::string& path) {
  const int h = image.h(), w = image.w();
  const std::vector<uint8_t> rgb = interleave_u8(image);
  const size_t rowbytes = size_t(w) * 3;
  std::vector<uint8_t> raw((rowbytes + 1) * size_t(h));
  for (int y = 0; y < h; y++) {
    raw[size_t(y) * (rowbytes + 1)] = 0;  // filter: none
    std::memcpy(raw.data() + size_t(y) * (rowbytes + 1) + 1, rgb.data() + size_t(y) * rowbytes,
                rowbytes);
  }
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), uLong(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
    throw IoError("PNG deflate failed: " + path);
  comp.resize(bound);

  std::vector<uint8_t> out(kPngSig, kPngSig + 8);
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, uint32_t(w));
  put_be32(ihdr, uint32_t(h));
  ihdr.push_back(8);  // depth
  ihdr.push_back(2);  // color: RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", comp);
  append_chunk(out, "IEND", {});
  write_file(path, out);
}

void encode_ppm(const Tensor& image, const std::string& path) {
  const std::string header =
      "P6\n" + std::to_string(image.w()) + " " + std::to_string(image.h()) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  const std::vector<uint8_t> rgb = interleave_u8(image);
  out.insert(out.end(), rgb.begin(), rgb.end());
  write_file(path, out);
}

bool ends_with_ci(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (size_t i = 0; i < suffix.size(); i++)
    if (std::tolower(s[s.size() - suffix.size() + i]) != suffix[i]) return false;
  return true;
}

}  // namespace

Tensor load_image(const std::string& path) {
  const std::vector<uint8_t> data = read_file(path);
  if (data.size() >= 2 && data[0] == 'P' && data[1] == '6') return decode_ppm(data, path);
  return decode_png(data, path);
}

void save_image(const Tensor& image, const std::string& path) {
  check_rgb(image);
  if (ends_with_ci(path, ".ppm"))
    encode_ppm(image, path);
  else if (ends_with_ci(path, ".png"))
    encode_png(image, path);
  else
    throw std::invalid_argument("save_image: unknown extension (use .png or .ppm): " + path);
}

void save_f32(const Tensor& t, const std::string& path) {
  if (t.empty()) throw std::invalid_argument("save_f32: empty tensor");
  std::vector<uint8_t> out(t.numel() * 4);
  std::memcpy(out.data(), t.data(), out.size());
  write_file(path, out);
}

}  // namespace pmcr

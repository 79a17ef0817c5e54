#include "medttt/netpbm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace medttt {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t offset,
                       const std::string& what) {
  throw ParseError(path + ": " + what + " (byte offset " +
                   std::to_string(offset) + ")");
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& buf, std::size_t& pos,
                         const std::string& path) {
  while (pos < buf.size()) {
    char c = buf[pos];
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < buf.size() &&
         !std::isspace(static_cast<unsigned char>(buf[pos])))
    ++pos;
  if (start == pos) fail(path, start, "unexpected end of header");
  return buf.substr(start, pos - start);
}

std::size_t parse_uint(const std::string& tok, const std::string& path,
                       std::size_t offset) {
  for (char c : tok)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      fail(path, offset, "expected integer, got '" + tok + "'");
  return std::stoull(tok);
}

}  // namespace

Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();

  std::size_t pos = 0;
  std::string magic = header_token(buf, pos, path);
  std::size_t channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    fail(path, 0, "unsupported magic '" + magic + "' (want P5 or P6)");

  std::size_t w_off = pos;
  std::size_t w = parse_uint(header_token(buf, pos, path), path, w_off);
  std::size_t h_off = pos;
  std::size_t h = parse_uint(header_token(buf, pos, path), path, h_off);
  std::size_t m_off = pos;
  std::size_t maxval = parse_uint(header_token(buf, pos, path), path, m_off);
  if (maxval != 255)
    fail(path, m_off, "unsupported maxval " + std::to_string(maxval) +
                          " (only 255)");
  if (w == 0 || h == 0) fail(path, w_off, "zero image extent");
  // Exactly one whitespace byte separates header and payload.
  if (pos >= buf.size() ||
      !std::isspace(static_cast<unsigned char>(buf[pos])))
    fail(path, pos, "missing header/payload separator");
  ++pos;

  std::size_t need = channels * h * w;
  if (buf.size() - pos < need)
    fail(path, buf.size(),
         "truncated payload: need " + std::to_string(need) + " bytes, have " +
             std::to_string(buf.size() - pos));

  Image img;
  img.channels = channels;
  img.h = h;
  img.w = w;
  img.data.resize(need);
  // P6 interleaves RGB per pixel; store as channel planes.
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        unsigned char b = static_cast<unsigned char>(
            buf[pos + (y * w + x) * channels + c]);
        img.data[(c * h + y) * w + x] = double(b) / 255.0;
      }
  return img;
}

void save_pnm(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ContractError("save_pnm: 1 or 3 channels required");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> payload(img.channels * img.h * img.w);
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        double v = img.at(c, y, x);
        v = std::min(1.0, std::max(0.0, v));
        payload[(y * img.w + x) * img.channels + c] =
            static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
      }
  out.write(reinterpret_cast<const char*>(payload.data()),
            std::streamsize(payload.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace medttt

#include "rlseg/pgm.hpp"

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>

#include "rlseg/errors.hpp"

namespace rlseg {

namespace {

bool is_pnm_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (is_pnm_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < bytes.size() && !is_pnm_space(bytes[pos])) ++pos;
  return bytes.substr(start, pos - start);
}

int parse_header_int(const std::string& tok, const char* what,
                     const std::string& origin) {
  if (tok.empty()) {
    throw FormatError("pgm " + std::string(what) + ": missing in " + origin);
  }
  for (char c : tok) {
    if (c < '0' || c > '9') {
      throw FormatError("pgm " + std::string(what) + ": not a number ('" + tok +
                        "') in " + origin);
    }
  }
  long v = std::strtol(tok.c_str(), nullptr, 10);
  if (v <= 0 || v > 1 << 20) {
    throw FormatError("pgm " + std::string(what) + ": out of range (" + tok +
                      ") in " + origin);
  }
  return static_cast<int>(v);
}

}  // namespace

std::string encode_pgm(const Field& field) {
  std::ostringstream out;
  out << "P5\n" << field.width << " " << field.height << "\n255\n";
  std::string payload(static_cast<std::size_t>(field.size()), '\0');
  for (int k = 0; k < field.size(); ++k) {
    double v = field.values[static_cast<std::size_t>(k)];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    payload[static_cast<std::size_t>(k)] =
        static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  return out.str() + payload;
}

Field decode_pgm(const std::string& bytes, const std::string& origin) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "P5") {
    throw FormatError("pgm magic: expected P5, got '" + magic + "' in " + origin);
  }
  const int width = parse_header_int(next_token(bytes, pos), "width", origin);
  const int height = parse_header_int(next_token(bytes, pos), "height", origin);
  const std::string maxtok = next_token(bytes, pos);
  const int maxval = parse_header_int(maxtok, "maxval", origin);
  if (maxval != 255) {
    throw FormatError("pgm maxval: expected 255, got " + maxtok + " in " + origin);
  }
  // Exactly one whitespace byte separates the header from the payload.
  if (pos >= bytes.size() || !is_pnm_space(bytes[pos])) {
    throw FormatError("pgm header: missing separator before payload in " + origin);
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos < need) {
    throw FormatError("pgm payload: truncated (" +
                      std::to_string(bytes.size() - pos) + " of " +
                      std::to_string(need) + " bytes) in " + origin);
  }
  Field f(height, width);
  for (std::size_t k = 0; k < need; ++k) {
    f.values[k] = static_cast<unsigned char>(bytes[pos + k]) / 255.0;
  }
  return f;
}

Field read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str(), path);
}

void write_pgm(const Field& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  const std::string bytes = encode_pgm(field);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace rlseg

#pragma once

#include <string>

#include "rlseg/field.hpp"

namespace rlseg {

// Binary PGM (P5, maxval 255). Intensities map to [0,1] on read; writes clamp
// to [0,1] and quantize to 8 bits. Binary masks round-trip as {0,255}.

// Serialize to the exact on-disk byte sequence.
std::string encode_pgm(const Field& field);

Field decode_pgm(const std::string& bytes, const std::string& origin = "<memory>");

Field read_pgm(const std::string& path);
void write_pgm(const Field& field, const std::string& path);

}  // namespace rlseg

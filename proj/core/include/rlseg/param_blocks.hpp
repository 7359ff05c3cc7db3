#pragma once

#include <cstddef>

namespace rlseg {

// Flat view of one named parameter (or gradient) block. The optimizer, the
// serializer and the gradient checker all iterate parameters through this.
struct FlatBlock {
  const char* name = nullptr;
  double* data = nullptr;
  std::ptrdiff_t rows = 0;
  std::ptrdiff_t cols = 0;
  std::ptrdiff_t size() const { return rows * cols; }
};

struct ConstFlatBlock {
  const char* name = nullptr;
  const double* data = nullptr;
  std::ptrdiff_t rows = 0;
  std::ptrdiff_t cols = 0;
  std::ptrdiff_t size() const { return rows * cols; }
};

}  // namespace rlseg

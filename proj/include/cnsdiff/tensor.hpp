#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace cnsdiff {

// Dense row-major matrix. Deliberately minimal: the gradient engine owns all
// the interesting math and only needs contiguous rows.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, T(0)) {}

  T* row(std::size_t i) { return a.data() + i * cols; }
  const T* row(std::size_t i) const { return a.data() + i * cols; }
  T& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  T at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  std::size_t size() const { return a.size(); }
  void fill(T v) { a.assign(rows * cols, v); }
};

template <typename T>
inline T dot(const T* x, const T* y, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace cnsdiff

#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace cnsdiff {

// Streaming pairwise (binary-tree) summation with a log-depth stack.
//
// Besides the usual accuracy benefit, the tree shape gives an exact algebraic
// property the batch reducer relies on: feeding every element twice, in
// adjacent positions, yields bitwise exactly 2x the original sum, because
// scaling by two commutes with every float rounding in the tree. Summands are
// pushed in a fixed (example) order, so results are independent of thread
// count and reproducible bit-for-bit.
template <typename T>
class PairwiseSum {
 public:
  explicit PairwiseSum(std::size_t width) : width_(width) {}

  void push(const std::vector<T>& x) {
    assert(x.size() == width_);
    levels_.push_back(0);
    bufs_.push_back(x);
    merge_equal_levels();
  }

  void push(const T* x) {
    levels_.push_back(0);
    bufs_.emplace_back(x, x + width_);
    merge_equal_levels();
  }

  // Collapses the stack (most recent first) and returns the total.
  std::vector<T> finalize() {
    if (bufs_.empty()) return std::vector<T>(width_, T(0));
    while (bufs_.size() > 1) {
      std::size_t n = bufs_.size();
      add_into(bufs_[n - 2], bufs_[n - 1]);
      bufs_.pop_back();
      levels_.pop_back();
    }
    std::vector<T> out = std::move(bufs_.back());
    bufs_.clear();
    levels_.clear();
    return out;
  }

  bool empty() const { return bufs_.empty(); }

 private:
  void merge_equal_levels() {
    while (bufs_.size() >= 2 && levels_[levels_.size() - 1] == levels_[levels_.size() - 2]) {
      std::size_t n = bufs_.size();
      add_into(bufs_[n - 2], bufs_[n - 1]);
      bufs_.pop_back();
      levels_.pop_back();
      levels_.back() += 1;
    }
  }

  static void add_into(std::vector<T>& dst, const std::vector<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  std::size_t width_;
  std::vector<int> levels_;
  std::vector<std::vector<T>> bufs_;
};

// Scalar flavour of the same reduction.
template <typename T>
class PairwiseScalar {
 public:
  void push(T x) {
    levels_.push_back(0);
    vals_.push_back(x);
    while (vals_.size() >= 2 && levels_[levels_.size() - 1] == levels_[levels_.size() - 2]) {
      vals_[vals_.size() - 2] += vals_.back();
      vals_.pop_back();
      levels_.pop_back();
      levels_.back() += 1;
    }
  }

  T finalize() {
    T s = T(0);
    while (!vals_.empty()) {
      s = vals_.back() + s;
      vals_.pop_back();
      levels_.pop_back();
    }
    return s;
  }

 private:
  std::vector<int> levels_;
  std::vector<T> vals_;
};

}  // namespace cnsdiff

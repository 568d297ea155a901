#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "rlcm/errors.hpp"

namespace rlcm {

using Bit = std::uint8_t;

// Dense row-major 0/1 matrix. Small enough for this problem class that a
// byte per entry beats bit packing on simplicity with no measurable cost.
class BinaryMatrix {
 public:
  BinaryMatrix() : rows_(0), cols_(0) {}
  BinaryMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  static BinaryMatrix identity(std::size_t n) {
    BinaryMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Bit& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Bit operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  Bit* row(std::size_t r) { return data_.data() + r * cols_; }
  const Bit* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::size_t row_sum(std::size_t r) const {
    std::size_t s = 0;
    const Bit* p = row(r);
    for (std::size_t c = 0; c < cols_; ++c) s += p[c];
    return s;
  }

  std::size_t col_sum(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t r = 0; r < rows_; ++r) s += data_[r * cols_ + c];
    return s;
  }

  void fill(Bit v) { std::memset(data_.data(), v, data_.size()); }

  void append_zero_row() {
    ++rows_;
    data_.resize(rows_ * cols_, 0);
  }

  void pop_row() {
    --rows_;
    data_.resize(rows_ * cols_);
  }

  void swap_rows(std::size_t a, std::size_t b) {
    if (a == b) return;
    for (std::size_t c = 0; c < cols_; ++c) std::swap(data_[a * cols_ + c], data_[b * cols_ + c]);
  }

  BinaryMatrix select_rows(const std::vector<std::size_t>& idx) const {
    BinaryMatrix out(idx.size(), cols_);
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::memcpy(out.row(r), row(idx[r]), cols_);
    return out;
  }

  BinaryMatrix select_cols(const std::vector<std::size_t>& idx) const {
    BinaryMatrix out(rows_, idx.size());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = (*this)(r, idx[c]);
    return out;
  }

  BinaryMatrix with_appended_zero_cols(std::size_t k) const {
    BinaryMatrix out(rows_, cols_ + k);
    for (std::size_t r = 0; r < rows_; ++r) std::memcpy(out.row(r), row(r), cols_);
    return out;
  }

  std::string row_string(std::size_t r) const {
    std::string s(cols_, '0');
    const Bit* p = row(r);
    for (std::size_t c = 0; c < cols_; ++c)
      if (p[c]) s[c] = '1';
    return s;
  }

  static BinaryMatrix from_row_strings(const std::vector<std::string>& rows) {
    if (rows.empty()) return BinaryMatrix();
    BinaryMatrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_)
        throw DataError("binary matrix rows have unequal lengths");
      for (std::size_t c = 0; c < m.cols_; ++c) {
        char ch = rows[r][c];
        if (ch != '0' && ch != '1')
          throw DataError("binary matrix entries must be 0 or 1");
        m(r, c) = static_cast<Bit>(ch - '0');
      }
    }
    return m;
  }

  friend bool operator==(const BinaryMatrix& a, const BinaryMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }
  friend bool operator!=(const BinaryMatrix& a, const BinaryMatrix& b) {
    return !(a == b);
  }

 private:
  std::size_t rows_, cols_;
  std::vector<Bit> data_;
};

}  // namespace rlcm

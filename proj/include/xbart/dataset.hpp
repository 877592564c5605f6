#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xbart/error.hpp"

namespace xbart {

/// Dense column-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> column_major)
      : rows_(rows), cols_(cols), data_(std::move(column_major)) {
    if (data_.size() != rows_ * cols_) throw InputError("matrix storage does not match its shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t row, std::size_t col) { return data_[col * rows_ + row]; }
  double operator()(std::size_t row, std::size_t col) const { return data_[col * rows_ + row]; }

  std::span<const double> column(std::size_t col) const {
    return {data_.data() + col * rows_, rows_};
  }
  std::span<double> column(std::size_t col) { return {data_.data() + col * rows_, rows_}; }

  std::vector<double> row(std::size_t r) const {
    std::vector<double> out(cols_);
    for (std::size_t c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
    return out;
  }

  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Training data: n x V predictors plus a length-n response.
/// Every entry is finite; the constructor enforces it.
class Dataset {
 public:
  Dataset(Matrix x, std::vector<double> y, std::vector<std::string> names = {})
      : x_(std::move(x)), y_(std::move(y)), names_(std::move(names)) {
    if (x_.rows() == 0 || x_.cols() == 0) throw InputError("dataset needs at least one row and one column");
    if (y_.size() != x_.rows()) {
      throw InputError("response length " + std::to_string(y_.size()) + " does not match " +
                       std::to_string(x_.rows()) + " predictor rows");
    }
    for (std::size_t v = 0; v < x_.cols(); ++v) {
      const auto col = x_.column(v);
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (!std::isfinite(col[i])) {
          throw InputError("non-finite predictor at row " + std::to_string(i) + ", column " +
                           std::to_string(v));
        }
      }
    }
    for (std::size_t i = 0; i < y_.size(); ++i) {
      if (!std::isfinite(y_[i])) throw InputError("non-finite response at row " + std::to_string(i));
    }
    if (names_.empty()) {
      for (std::size_t v = 0; v < x_.cols(); ++v) names_.push_back("x" + std::to_string(v + 1));
    } else if (names_.size() != x_.cols()) {
      throw InputError("column name count does not match predictor count");
    }
  }

  std::size_t num_rows() const noexcept { return x_.rows(); }
  std::size_t num_vars() const noexcept { return x_.cols(); }

  const Matrix& x() const noexcept { return x_; }
  std::span<const double> y() const noexcept { return y_; }
  std::span<const double> column(std::size_t v) const { return x_.column(v); }
  double value(std::size_t row, std::size_t v) const { return x_(row, v); }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  Matrix x_;
  std::vector<double> y_;
  std::vector<std::string> names_;
};

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s / static_cast<double>(v.size());
}

/// Sample variance (n - 1 denominator); 0 for a single value.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double a : v) ss += (a - m) * (a - m);
  return ss / static_cast<double>(v.size() - 1);
}

/// FNV-1a over the raw bytes of the predictors and response.
inline std::uint64_t checksum(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::span<const double> values) {
    for (double d : values) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(&d);
      for (std::size_t b = 0; b < sizeof(double); ++b) {
        h ^= bytes[b];
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(data.x().data());
  mix(data.y());
  return h;
}

}  // namespace xbart

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ricb {

//! Dense row-major tensor of doubles. Every operation in the library works on
//! rank-2 tensors; vectors are stored as n x 1 columns.
class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
  {
    return Tensor({ rows, cols }, fill);
  }
  static Tensor matrix(std::size_t rows,
                       std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor column(std::span<const double> values);
  static Tensor scalar(double v) { return Tensor({ 1, 1 }, v); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // rank-2 accessors
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c)
  {
    return data_[r * shape_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const
  {
    return data_[r * shape_[1] + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& raw() noexcept { return data_; }
  std::span<const double> row_span(std::size_t r) const
  {
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
  }
  const std::vector<double>& raw() const noexcept { return data_; }

  // scalar value of a 1x1 tensor
  double item() const;

  bool same_shape(const Tensor& other) const noexcept
  {
    return shape_ == other.shape_;
  }
  bool all_finite() const noexcept;
  void fill(double v);

  Tensor rows_subset(std::span<const std::size_t> idx) const;
  Tensor col(std::size_t c) const;
  Tensor transposed() const;

  std::string shape_string() const;

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor matmul(const Tensor& a, const Tensor& b);

} // namespace ricb

#include "ricb/tensor.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ricb {

namespace {
std::size_t extent_product(const std::vector<std::size_t>& shape)
{
  return std::accumulate(
    shape.begin(), shape.end(), std::size_t{ 1 }, std::multiplies<>());
}
} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
  : shape_(std::move(shape))
  , data_(extent_product(shape_), fill)
{
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
  : shape_(std::move(shape))
  , data_(std::move(data))
{
  if (extent_product(shape_) != data_.size())
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string());
}

Tensor Tensor::matrix(std::size_t rows,
                      std::size_t cols,
                      std::initializer_list<double> values)
{
  return Tensor({ rows, cols }, std::vector<double>(values));
}

Tensor Tensor::column(std::span<const double> values)
{
  return Tensor({ values.size(), 1 },
                std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const
{
  if (shape_.size() != 2)
    throw InvalidArgument("expected rank-2 tensor, got " + shape_string());
  return shape_[0];
}

std::size_t Tensor::cols() const
{
  if (shape_.size() != 2)
    throw InvalidArgument("expected rank-2 tensor, got " + shape_string());
  return shape_[1];
}

double Tensor::item() const
{
  if (data_.size() != 1)
    throw InvalidArgument("item() on tensor of shape " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const noexcept
{
  return std::all_of(
    data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v)
{
  std::fill(data_.begin(), data_.end(), v);
}

Tensor Tensor::rows_subset(std::span<const std::size_t> idx) const
{
  const std::size_t c = cols();
  Tensor out = Tensor::matrix(idx.size(), c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows())
      throw InvalidArgument("row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(idx[i] * c),
                c,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

Tensor Tensor::col(std::size_t c) const
{
  Tensor out = Tensor::matrix(rows(), 1);
  for (std::size_t i = 0; i < rows(); ++i)
    out[i] = (*this)(i, c);
  return out;
}

Tensor Tensor::transposed() const
{
  Tensor out = Tensor::matrix(cols(), rows());
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < cols(); ++j)
      out(j, i) = (*this)(i, j);
  return out;
}

std::string Tensor::shape_string() const
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i)
    os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw InvalidArgument("matmul dimension mismatch: " + a.shape_string() +
                          " x " + b.shape_string());
  Tensor out = Tensor::matrix(n, m);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0)
        continue;
      const double* brow = pb + p * m;
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j)
        orow[j] += av * brow[j];
    }
  return out;
}

} // namespace ricb

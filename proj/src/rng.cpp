#include "ricb/rng.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <numeric>

namespace ricb {

Minibatcher::Minibatcher(std::size_t n, std::size_t batch_size, Rng rng)
  : n_(n)
  , batch_size_(std::min(batch_size, n))
  , rng_(std::move(rng))
  , order_(n)
  , cursor_(n)
{
  if (n == 0 || batch_size == 0)
    throw InvalidArgument("minibatcher needs n > 0 and batch_size > 0");
  std::iota(order_.begin(), order_.end(), std::size_t{ 0 });
}

const std::vector<std::size_t>& Minibatcher::next()
{
  // Incomplete tail batches are dropped; every batch has the same size.
  if (cursor_ + batch_size_ > n_) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  batch_.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                order_.begin() +
                  static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return batch_;
}

} // namespace ricb

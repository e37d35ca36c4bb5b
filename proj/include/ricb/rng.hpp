#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ricb {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream id). Mixing goes through seed_seq so
// neighbouring ids do not produce correlated engines.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
  std::seed_seq seq{ static_cast<std::uint32_t>(seed),
                     static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(stream),
                     static_cast<std::uint32_t>(stream >> 32),
                     0x52494342u };
  return Rng(seq);
}

// Stream ids used across the library. Keeping them in one place makes it
// obvious that no two consumers share an engine.
namespace streams {
inline constexpr std::uint64_t data_train = 1;
inline constexpr std::uint64_t data_test = 2;
inline constexpr std::uint64_t init_phi = 10;
inline constexpr std::uint64_t init_head0 = 11;
inline constexpr std::uint64_t init_head1 = 12;
inline constexpr std::uint64_t init_decoder = 13;
inline constexpr std::uint64_t init_weight_net = 14;
inline constexpr std::uint64_t init_prop_phi = 15;
inline constexpr std::uint64_t init_prop_x = 16;
inline constexpr std::uint64_t init_flow = 17;
inline constexpr std::uint64_t batches_stage0 = 20;
inline constexpr std::uint64_t batches_prop_x = 21;
inline constexpr std::uint64_t batches_prop_phi = 22;
inline constexpr std::uint64_t batches_flow = 23;
inline constexpr std::uint64_t flow_noise = 24;
inline constexpr std::uint64_t grid_sampling = 30;
inline constexpr std::uint64_t folds = 31;
inline constexpr std::uint64_t bound_samples = 40;
} // namespace streams

// Seeded permutation-based minibatcher: shuffles without replacement, reshuffles
// at every epoch boundary.
class Minibatcher
{
public:
  Minibatcher(std::size_t n, std::size_t batch_size, Rng rng);

  const std::vector<std::size_t>& next();

private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> batch_;
};

} // namespace ricb

#pragma once

#include "ricb/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ricb {

enum class Split
{
  train,
  test
};

struct Dataset
{
  Tensor x;                       // n x d_x
  std::vector<int> a;             // 0/1
  std::vector<double> y;          // factual outcome
  std::optional<std::vector<double>> y0, y1;
  std::optional<std::vector<double>> tau_oracle;
  Split split = Split::train;

  std::size_t size() const noexcept { return a.size(); }
  std::size_t dim() const { return x.cols(); }
  bool has_oracle() const noexcept { return tau_oracle.has_value(); }

  Tensor y_column() const { return Tensor::column(y); }
  Dataset subset(std::span<const std::size_t> idx) const;

  // Shape checks, binary treatment, and (when requested) the consistency
  // identity y = a*y1 + (1-a)*y0.
  void validate(bool check_consistency = true) const;
  bool both_groups_present() const;
};

//! Two covariates with treatment confounded through both of them and a
//! shared outcome noise for the two potential outcomes.
Dataset gen_synthetic(std::size_t n, std::uint64_t seed, Split split = Split::train);

// Noise-free CATE of the synthetic mechanism at (x1, x2).
double synthetic_cate(double x1, double x2);

// CSV schema: x1..xd,a,y[,mu0,mu1]. When the mu columns are present they
// populate y0/y1 and tau_oracle = mu1 - mu0.
Dataset load_dataset_csv(const std::filesystem::path& path);
void save_dataset_csv(const Dataset& d, const std::filesystem::path& path);

inline constexpr std::size_t ihdp_train_rows = 672;
inline constexpr std::size_t ihdp_test_rows = 75;
inline constexpr std::size_t ihdp_dim = 25;

std::filesystem::path ihdp_file(const std::filesystem::path& dir,
                                int replicate,
                                Split split);

//! Reads ihdp_train_<r>.csv and ihdp_test_<r>.csv from `dir`, replicate in
//! [1, 100], and enforces the 672/75 row and 25 covariate shapes.
std::pair<Dataset, Dataset> load_ihdp_csv(const std::filesystem::path& dir,
                                          int replicate);

struct IdxImages
{
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> pixels; // count x rows*cols, scaled to [0, 1]

  std::size_t pixels_per_image() const noexcept { return rows * cols; }
};

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

IdxImages parse_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> parse_idx_labels(const std::filesystem::path& path);

// Writers for the same format; used to export and for fixtures.
void write_idx_images(const std::filesystem::path& path,
                      std::size_t rows,
                      std::size_t cols,
                      const std::vector<std::uint8_t>& pixels);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels);

struct HcMnistConfig
{
  double gamma_star = 2.718281828459045; // e
  double clip = 1.4;
  std::array<double, 10> class_mean{};
  std::array<double, 10> class_std{};

  static double class_min(int c) { return -2.0 + 0.4 * c; }
  static double class_max(int c) { return -2.0 + 0.4 * (c + 1); }
};

// Per-class mean/std of the average image intensity. Throws if any label is
// missing from the sample.
HcMnistConfig hcmnist_stats(const IdxImages& images,
                            const std::vector<std::uint8_t>& labels);

// One-dimensional summary of an image of class c.
double hcmnist_phi(double mean_intensity, int label, const HcMnistConfig& cfg);

double hcmnist_treatment_probability(double phi, int u, double gamma_star);
double hcmnist_outcome_mean(double phi, int a, int u);

//! Semi-synthetic dataset over MNIST images: covariates are the 784 pixels
//! plus the binary confounder u (d_x = 785).
Dataset build_hcmnist(const IdxImages& images,
                      const std::vector<std::uint8_t>& labels,
                      std::uint64_t seed,
                      const HcMnistConfig& cfg,
                      Split split = Split::train);

// Summary values per row, exposed for checks: phi and label.
struct HcMnistSummary
{
  std::vector<double> phi;
  std::vector<int> label;
};
HcMnistSummary hcmnist_summary(const IdxImages& images,
                               const std::vector<std::uint8_t>& labels,
                               const HcMnistConfig& cfg);

} // namespace ricb

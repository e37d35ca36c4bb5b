#include "ricb/datasets.hpp"

#include "ricb/csv.hpp"
#include "ricb/error.hpp"
#include "ricb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ricb {

namespace {
double logistic(double v)
{
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}
} // namespace

Dataset Dataset::subset(std::span<const std::size_t> idx) const
{
  Dataset out;
  out.x = x.rows_subset(idx);
  out.split = split;
  auto pick = [&](const std::vector<double>& v) {
    std::vector<double> r;
    r.reserve(idx.size());
    for (std::size_t i : idx)
      r.push_back(v[i]);
    return r;
  };
  for (std::size_t i : idx)
    out.a.push_back(a[i]);
  out.y = pick(y);
  if (y0)
    out.y0 = pick(*y0);
  if (y1)
    out.y1 = pick(*y1);
  if (tau_oracle)
    out.tau_oracle = pick(*tau_oracle);
  return out;
}

bool Dataset::both_groups_present() const
{
  const bool t = std::find(a.begin(), a.end(), 1) != a.end();
  const bool c = std::find(a.begin(), a.end(), 0) != a.end();
  return t && c;
}

void Dataset::validate(bool check_consistency) const
{
  const std::size_t n = a.size();
  if (x.rank() != 2 || x.rows() != n || y.size() != n)
    throw FormatError("dataset columns have inconsistent lengths");
  for (int v : a)
    if (v != 0 && v != 1)
      throw FormatError("treatment must be binary, got " + std::to_string(v));
  if (!x.all_finite())
    throw FormatError("covariates contain non-finite values");
  if (y0.has_value() != y1.has_value())
    throw FormatError("potential outcomes must be given as a pair");
  if (y0 && (y0->size() != n || y1->size() != n))
    throw FormatError("potential outcome length mismatch");
  if (tau_oracle && tau_oracle->size() != n)
    throw FormatError("oracle CATE length mismatch");
  if (check_consistency && y0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double expect = a[i] ? (*y1)[i] : (*y0)[i];
      if (expect != y[i])
        throw FormatError("y != a*y1 + (1-a)*y0 at row " + std::to_string(i));
    }
  }
}

double synthetic_cate(double x1, double x2)
{
  return 2.0 * x1 + 1.0 - 2.0 * std::sin(2.0 * x1 + x2) +
         2.0 * std::sin(-2.0 * x1 + x2);
}

Dataset gen_synthetic(std::size_t n, std::uint64_t seed, Split split)
{
  Rng rng = make_rng(
    seed, split == Split::train ? streams::data_train : streams::data_test);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.split = split;
  d.x = Tensor::matrix(n, 2);
  d.a.resize(n);
  d.y.resize(n);
  std::vector<double> y0(n), y1(n), tau(n);
  auto outcome = [](double x1, double x2, int a, double eps) {
    const double s = 2.0 * a - 1.0;
    return s * x1 + a - 2.0 * std::sin(2.0 * s * x1 + x2) -
           2.0 * x2 * (1.0 + 0.5 * x1) + eps;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = unif(rng);
    const double x2 = normal(rng);
    const double p = logistic(0.75 * x1 - x2 + 0.5);
    const int a = u01(rng) < p ? 1 : 0;
    const double eps = normal(rng);
    d.x(i, 0) = x1;
    d.x(i, 1) = x2;
    d.a[i] = a;
    y0[i] = outcome(x1, x2, 0, eps);
    y1[i] = outcome(x1, x2, 1, eps);
    tau[i] = y1[i] - y0[i];
    d.y[i] = a ? y1[i] : y0[i];
  }
  d.y0 = std::move(y0);
  d.y1 = std::move(y1);
  d.tau_oracle = std::move(tau);
  return d;
}

Dataset load_dataset_csv(const std::filesystem::path& path)
{
  const CsvTable table = read_csv(path);
  const auto& h = table.header;
  std::size_t dx = 0;
  while (dx < h.size() && h[dx] == "x" + std::to_string(dx + 1))
    ++dx;
  if (dx == 0)
    throw FormatError(path.string() + ": header must start with x1");
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(h.begin(), h.end(), name);
    if (it == h.end())
      return std::nullopt;
    return static_cast<std::size_t>(it - h.begin());
  };
  const auto ca = col("a"), cy = col("y"), cm0 = col("mu0"), cm1 = col("mu1");
  if (!ca || !cy)
    throw FormatError(path.string() + ": missing 'a' or 'y' column");
  if (cm0.has_value() != cm1.has_value())
    throw FormatError(path.string() + ": mu0 and mu1 must appear together");

  const std::size_t n = table.rows.size();
  Dataset d;
  d.x = Tensor::matrix(n, dx);
  d.a.resize(n);
  d.y.resize(n);
  std::vector<double> mu0, mu1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = table.rows[i];
    for (std::size_t j = 0; j < dx; ++j)
      d.x(i, j) = r[j];
    const double av = r[*ca];
    if (av != 0.0 && av != 1.0)
      throw FormatError(path.string() + ": non-binary treatment value " +
                        format_double(av) + " at row " + std::to_string(i + 1));
    d.a[i] = static_cast<int>(av);
    d.y[i] = r[*cy];
    if (cm0) {
      mu0.push_back(r[*cm0]);
      mu1.push_back(r[*cm1]);
    }
  }
  if (cm0) {
    std::vector<double> tau(n);
    for (std::size_t i = 0; i < n; ++i)
      tau[i] = mu1[i] - mu0[i];
    d.y0 = std::move(mu0);
    d.y1 = std::move(mu1);
    d.tau_oracle = std::move(tau);
  }
  d.validate(false);
  return d;
}

void save_dataset_csv(const Dataset& d, const std::filesystem::path& path)
{
  d.validate(false);
  CsvTable t;
  for (std::size_t j = 0; j < d.dim(); ++j)
    t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back("a");
  t.header.push_back("y");
  if (d.y0) {
    t.header.push_back("mu0");
    t.header.push_back("mu1");
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<double> r;
    for (std::size_t j = 0; j < d.dim(); ++j)
      r.push_back(d.x(i, j));
    r.push_back(d.a[i]);
    r.push_back(d.y[i]);
    if (d.y0) {
      r.push_back((*d.y0)[i]);
      r.push_back((*d.y1)[i]);
    }
    t.rows.push_back(std::move(r));
  }
  write_csv(t, path);
}

std::filesystem::path ihdp_file(const std::filesystem::path& dir,
                                int replicate,
                                Split split)
{
  return dir / ((split == Split::train ? "ihdp_train_" : "ihdp_test_") +
                std::to_string(replicate) + ".csv");
}

std::pair<Dataset, Dataset> load_ihdp_csv(const std::filesystem::path& dir,
                                          int replicate)
{
  if (replicate < 1 || replicate > 100)
    throw InvalidArgument("IHDP replicate must be in [1, 100], got " +
                          std::to_string(replicate));
  auto load = [&](Split s, std::size_t rows) {
    const auto path = ihdp_file(dir, replicate, s);
    Dataset d = load_dataset_csv(path);
    d.split = s;
    if (!d.has_oracle())
      throw FormatError(path.string() +
                        ": no oracle; evaluation-only metrics disabled");
    if (d.dim() != ihdp_dim)
      throw FormatError(path.string() + ": expected " +
                        std::to_string(ihdp_dim) + " covariates, got " +
                        std::to_string(d.dim()));
    if (d.size() != rows)
      throw FormatError(path.string() + ": expected " + std::to_string(rows) +
                        " rows, got " + std::to_string(d.size()));
    return d;
  };
  return { load(Split::train, ihdp_train_rows), load(Split::test, ihdp_test_rows) };
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path)
{
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path.string() + ": truncated IDX header");
  return (std::uint32_t{ b[0] } << 24) | (std::uint32_t{ b[1] } << 16) |
         (std::uint32_t{ b[2] } << 8) | std::uint32_t{ b[3] };
}

void write_be32(std::ostream& out, std::uint32_t v)
{
  const char b[4] = { static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                      static_cast<char>(v >> 8), static_cast<char>(v) };
  out.write(b, 4);
}

std::ifstream open_binary(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  return in;
}

std::vector<std::uint8_t> read_payload(std::istream& in,
                                       std::size_t bytes,
                                       const std::filesystem::path& path)
{
  std::vector<std::uint8_t> buf(bytes);
  if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()),
                            static_cast<std::streamsize>(bytes)))
    throw FormatError(path.string() + ": truncated IDX payload (expected " +
                      std::to_string(bytes) + " bytes)");
  return buf;
}

} // namespace

IdxImages parse_idx_images(const std::filesystem::path& path)
{
  std::ifstream in = open_binary(path);
  const std::uint32_t magic = read_be32(in, path);
  if (magic != idx_images_magic)
    throw FormatError(path.string() + ": bad IDX image magic " +
                      std::to_string(magic));
  IdxImages img;
  img.count = read_be32(in, path);
  img.rows = read_be32(in, path);
  img.cols = read_be32(in, path);
  const auto raw =
    read_payload(in, img.count * img.rows * img.cols, path);
  img.pixels.resize(raw.size());
  std::transform(raw.begin(), raw.end(), img.pixels.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(const std::filesystem::path& path)
{
  std::ifstream in = open_binary(path);
  const std::uint32_t magic = read_be32(in, path);
  if (magic != idx_labels_magic)
    throw FormatError(path.string() + ": bad IDX label magic " +
                      std::to_string(magic));
  const std::uint32_t n = read_be32(in, path);
  auto labels = read_payload(in, n, path);
  for (std::uint8_t l : labels)
    if (l > 9)
      throw FormatError(path.string() + ": label out of range 0..9");
  return labels;
}

void write_idx_images(const std::filesystem::path& path,
                      std::size_t rows,
                      std::size_t cols,
                      const std::vector<std::uint8_t>& pixels)
{
  if (rows * cols == 0 || pixels.size() % (rows * cols) != 0)
    throw InvalidArgument("pixel buffer is not a whole number of images");
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + path.string());
  write_be32(out, idx_images_magic);
  write_be32(out, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out)
    throw IoError("short write to " + path.string());
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + path.string());
  write_be32(out, idx_labels_magic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out)
    throw IoError("short write to " + path.string());
}

namespace {
double image_mean(const IdxImages& images, std::size_t i)
{
  const std::size_t p = images.pixels_per_image();
  const float* px = images.pixels.data() + i * p;
  double s = 0.0;
  for (std::size_t k = 0; k < p; ++k)
    s += px[k];
  return s / static_cast<double>(p);
}

void check_images_labels(const IdxImages& images,
                         const std::vector<std::uint8_t>& labels)
{
  if (images.count != labels.size())
    throw InvalidArgument("image and label counts differ");
  if (images.pixels_per_image() == 0)
    throw InvalidArgument("images have no pixels");
}
} // namespace

HcMnistConfig hcmnist_stats(const IdxImages& images,
                            const std::vector<std::uint8_t>& labels)
{
  check_images_labels(images, labels);
  std::array<double, 10> sum{}, sum_sq{};
  std::array<std::size_t, 10> count{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double m = image_mean(images, i);
    sum[labels[i]] += m;
    sum_sq[labels[i]] += m * m;
    ++count[labels[i]];
  }
  HcMnistConfig cfg;
  for (int c = 0; c < 10; ++c) {
    if (count[c] == 0)
      throw InvalidArgument("HC-MNIST: no image with label " + std::to_string(c));
    const double n = static_cast<double>(count[c]);
    const double mu = sum[c] / n;
    const double var = count[c] > 1 ? (sum_sq[c] - n * mu * mu) / (n - 1.0) : 0.0;
    cfg.class_mean[c] = mu;
    cfg.class_std[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return cfg;
}

double hcmnist_phi(double mean_intensity, int label, const HcMnistConfig& cfg)
{
  if (label < 0 || label > 9)
    throw InvalidArgument("label out of range");
  const double z = (mean_intensity - cfg.class_mean[label]) / cfg.class_std[label];
  const double clipped = std::clamp(z, -cfg.clip, cfg.clip);
  const double lo = HcMnistConfig::class_min(label);
  const double hi = HcMnistConfig::class_max(label);
  // affine map of [-clip, clip] onto [Min_c, Max_c]
  return lo + (clipped + cfg.clip) * (hi - lo) / (2.0 * cfg.clip);
}

double hcmnist_treatment_probability(double phi, int u, double gamma_star)
{
  const double s = logistic(0.75 * phi + 0.5);
  const double alpha = 1.0 / (gamma_star * s) + 1.0 - 1.0 / gamma_star;
  const double beta = gamma_star / s + 1.0 - gamma_star;
  return u / alpha + (1 - u) / beta;
}

double hcmnist_outcome_mean(double phi, int a, int u)
{
  const double s = 2.0 * a - 1.0;
  return s * phi + s - 2.0 * std::sin(2.0 * s * phi) -
         2.0 * (2.0 * u - 1.0) * (1.0 + 0.5 * phi);
}

HcMnistSummary hcmnist_summary(const IdxImages& images,
                               const std::vector<std::uint8_t>& labels,
                               const HcMnistConfig& cfg)
{
  check_images_labels(images, labels);
  HcMnistSummary s;
  s.phi.resize(labels.size());
  s.label.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s.label[i] = labels[i];
    s.phi[i] = hcmnist_phi(image_mean(images, i), labels[i], cfg);
  }
  return s;
}

Dataset build_hcmnist(const IdxImages& images,
                      const std::vector<std::uint8_t>& labels,
                      std::uint64_t seed,
                      const HcMnistConfig& cfg,
                      Split split)
{
  const HcMnistSummary summary = hcmnist_summary(images, labels, cfg);
  const std::size_t n = labels.size();
  const std::size_t p = images.pixels_per_image();
  Rng rng = make_rng(
    seed, split == Split::train ? streams::data_train : streams::data_test);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.split = split;
  d.x = Tensor::matrix(n, p + 1);
  d.a.resize(n);
  d.y.resize(n);
  std::vector<double> y0(n), y1(n), tau(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* px = images.pixels.data() + i * p;
    for (std::size_t k = 0; k < p; ++k)
      d.x(i, k) = px[k];
    const int u = coin(rng) ? 1 : 0;
    d.x(i, p) = u;
    const double phi = summary.phi[i];
    const int a =
      u01(rng) < hcmnist_treatment_probability(phi, u, cfg.gamma_star) ? 1 : 0;
    const double eps = normal(rng);
    const double m0 = hcmnist_outcome_mean(phi, 0, u);
    const double m1 = hcmnist_outcome_mean(phi, 1, u);
    y0[i] = m0 + eps;
    y1[i] = m1 + eps;
    tau[i] = m1 - m0;
    d.a[i] = a;
    d.y[i] = a ? y1[i] : y0[i];
  }
  d.y0 = std::move(y0);
  d.y1 = std::move(y1);
  d.tau_oracle = std::move(tau);
  return d;
}

} // namespace ricb

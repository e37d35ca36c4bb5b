#include "ricb/spline.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ricb {

namespace {

// Forward-mode value with N tangent directions; enough arithmetic for the
// rational-quadratic bin formula.
template<int N>
struct Dual
{
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) // NOLINT: implicit constants are convenient here
    : v(value)
  {
  }
  static Dual var(double value, int i)
  {
    Dual r(value);
    r.d[static_cast<std::size_t>(i)] = 1.0;
    return r;
  }
};

template<int N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v + b.v);
  for (int i = 0; i < N; ++i)
    r.d[i] = a.d[i] + b.d[i];
  return r;
}

template<int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v - b.v);
  for (int i = 0; i < N; ++i)
    r.d[i] = a.d[i] - b.d[i];
  return r;
}

template<int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i)
    r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

template<int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v / b.v);
  const double inv = 1.0 / (b.v * b.v);
  for (int i = 0; i < N; ++i)
    r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv;
  return r;
}

template<int N>
Dual<N> log(const Dual<N>& a)
{
  Dual<N> r(std::log(a.v));
  for (int i = 0; i < N; ++i)
    r.d[i] = a.d[i] / a.v;
  return r;
}

inline double value_of(double x) { return x; }
template<int N>
double value_of(const Dual<N>& x)
{
  return x.v;
}

// z and log dz/dy inside bin [xk, xk + wk] -> [yk, yk + hk] with knot
// derivatives dk, dk1.
template<class T>
std::pair<T, T> rq_bin(const T& y, const T& xk, const T& wk, const T& yk,
                       const T& hk, const T& dk, const T& dk1)
{
  using std::log;
  const T xi = (y - xk) / wk;
  const T s = hk / wk;
  const T one(1.0);
  const T two(2.0);
  const T om = one - xi;
  const T t = xi * om;
  const T num = hk * (s * xi * xi + dk * t);
  const T den = s + (dk1 + dk - two * s) * t;
  const T z = yk + num / den;
  const T dnum = s * s * (dk1 * xi * xi + two * s * t + dk * om * om);
  const T logdet = log(dnum) - two * log(den);
  return { z, logdet };
}

std::size_t find_bin(const std::vector<double>& knots, double v)
{
  const auto it = std::upper_bound(knots.begin(), knots.end(), v);
  const std::ptrdiff_t k = (it - knots.begin()) - 1;
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(knots.size()) - 2;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, last));
}

double softplus_d(double v)
{
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double sigmoid_d(double v)
{
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

void softmax(std::span<const double> in, std::vector<double>& out)
{
  out.resize(in.size());
  const double m = *std::max_element(in.begin(), in.end());
  double s = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - m);
    s += out[i];
  }
  for (double& v : out)
    v /= s;
}

// Knots from unnormalised logits: minimum bin share plus softmax.
void knots_from_logits(std::span<const double> logits,
                       double bound,
                       std::vector<double>& sm,
                       std::vector<double>& knots)
{
  const std::size_t k = logits.size();
  softmax(logits, sm);
  const double scale = 1.0 - spline_min_bin * static_cast<double>(k);
  knots.resize(k + 1);
  knots[0] = -bound;
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    cum += spline_min_bin + scale * sm[i];
    knots[i + 1] = -bound + 2.0 * bound * cum;
  }
  knots[k] = bound;
}

void check_raw(std::span<const double> raw, std::size_t knots)
{
  if (knots < 2)
    throw InvalidArgument("spline needs at least 2 bins");
  if (raw.size() != spline_raw_size(knots))
    throw InvalidArgument("spline raw parameter count mismatch");
}

} // namespace

void SplineParams::validate() const
{
  const std::size_t n = knots_x.size();
  if (n < 3 || knots_y.size() != n || derivatives.size() != n)
    throw InvalidArgument("spline: inconsistent knot arrays");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(knots_x[i + 1] > knots_x[i]) || !(knots_y[i + 1] > knots_y[i]))
      throw InvalidArgument("spline: knots must be strictly increasing");
  for (double d : derivatives)
    if (!(d > 0.0))
      throw InvalidArgument("spline: derivatives must be positive");
}

SplineParams spline_from_raw(std::span<const double> raw,
                             std::size_t knots,
                             double tail_bound)
{
  check_raw(raw, knots);
  if (!(tail_bound > 0.0))
    throw InvalidArgument("spline tail bound must be positive");
  SplineParams s;
  s.tail_bound = tail_bound;
  std::vector<double> sm;
  knots_from_logits(raw.subspan(0, knots), tail_bound, sm, s.knots_x);
  knots_from_logits(raw.subspan(knots, knots), tail_bound, sm, s.knots_y);
  s.derivatives.assign(knots + 1, 1.0);
  for (std::size_t i = 1; i < knots; ++i)
    s.derivatives[i] = spline_min_derivative + softplus_d(raw[2 * knots + i - 1]);
  return s;
}

std::vector<double> identity_spline_raw(std::size_t knots)
{
  std::vector<double> raw(spline_raw_size(knots), 0.0);
  // softplus(v) = 1 - min_derivative gives unit interior slopes
  const double v = std::log(std::expm1(1.0 - spline_min_derivative));
  for (std::size_t i = 2 * knots; i < raw.size(); ++i)
    raw[i] = v;
  return raw;
}

SplineParams identity_spline(std::size_t knots, double tail_bound)
{
  return spline_from_raw(identity_spline_raw(knots), knots, tail_bound);
}

SplineValue rq_forward(double y, const SplineParams& s)
{
  if (y < -s.tail_bound || y > s.tail_bound)
    return { y, 0.0 };
  const std::size_t k = find_bin(s.knots_x, y);
  const auto [z, ld] = rq_bin<double>(y,
                                      s.knots_x[k],
                                      s.knots_x[k + 1] - s.knots_x[k],
                                      s.knots_y[k],
                                      s.knots_y[k + 1] - s.knots_y[k],
                                      s.derivatives[k],
                                      s.derivatives[k + 1]);
  return { z, ld };
}

SplineValue rq_inverse(double z, const SplineParams& s)
{
  if (z < -s.tail_bound || z > s.tail_bound)
    return { z, 0.0 };
  const std::size_t k = find_bin(s.knots_y, z);
  const double xk = s.knots_x[k];
  const double wk = s.knots_x[k + 1] - xk;
  const double yk = s.knots_y[k];
  const double hk = s.knots_y[k + 1] - yk;
  const double dk = s.derivatives[k];
  const double dk1 = s.derivatives[k + 1];
  const double sl = hk / wk;
  const double t = z - yk;
  const double c2 = dk1 + dk - 2.0 * sl;
  const double qa = hk * (sl - dk) + t * c2;
  const double qb = hk * dk - t * c2;
  const double qc = -sl * t;
  const double disc = std::max(0.0, qb * qb - 4.0 * qa * qc);
  const double xi = std::clamp(2.0 * qc / (-qb - std::sqrt(disc)), 0.0, 1.0);
  const double y = xk + xi * wk;
  const auto [zz, ld] = rq_bin<double>(y, xk, wk, yk, hk, dk, dk1);
  (void)zz;
  return { y, -ld };
}

Var rq_spline_forward(Var y, Var raw, std::size_t knots, double tail_bound)
{
  Tape& tape = *y.tape();
  const Tensor& yv = y.value();
  const Tensor& rv = raw.value();
  if (yv.cols() != 1)
    throw InvalidArgument("rq_spline_forward: y must be a column");
  if (rv.rows() != yv.rows() || rv.cols() != spline_raw_size(knots))
    throw InvalidArgument("rq_spline_forward: raw must be n x (3K - 1), got " +
                          rv.shape_string());
  const std::size_t n = yv.rows();
  Tensor out = Tensor::matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const SplineParams s = spline_from_raw(
      rv.values().subspan(i * rv.cols(), rv.cols()), knots, tail_bound);
    const SplineValue f = rq_forward(yv[i], s);
    out(i, 0) = f.value;
    out(i, 1) = f.log_abs_det;
  }

  const Var parents[] = { y, raw };
  return tape.record(
    std::move(out),
    parents,
    [y, raw, knots, tail_bound](Tape& tp, const Tensor& g) {
      const Tensor& yv = tp.value(y);
      const Tensor& rv = tp.value(raw);
      const std::size_t n = yv.rows();
      const std::size_t m = rv.cols();
      const bool want_y = tp.requires_grad(y);
      const bool want_raw = tp.requires_grad(raw);
      Tensor gy(yv.shape());
      Tensor graw(rv.shape());
      std::vector<double> smw, smh, kx, ky, gwn(knots), ghn(knots);
      const double scale = 1.0 - spline_min_bin * static_cast<double>(knots);
      using D = Dual<7>;

      for (std::size_t i = 0; i < n; ++i) {
        const double yi = yv[i];
        if (yi < -tail_bound || yi > tail_bound) {
          gy[i] = g(i, 0);
          continue;
        }
        const auto r = rv.values().subspan(i * m, m);
        knots_from_logits(r.subspan(0, knots), tail_bound, smw, kx);
        knots_from_logits(r.subspan(knots, knots), tail_bound, smh, ky);
        const std::size_t k = find_bin(kx, yi);
        const bool left_free = k >= 1;
        const bool right_free = k + 1 <= knots - 1;
        const double dk =
          left_free ? spline_min_derivative + softplus_d(r[2 * knots + k - 1]) : 1.0;
        const double dk1 =
          right_free ? spline_min_derivative + softplus_d(r[2 * knots + k]) : 1.0;

        const auto [z, ld] = rq_bin<D>(D::var(yi, 0),
                                       D::var(kx[k], 1),
                                       D::var(kx[k + 1] - kx[k], 2),
                                       D::var(ky[k], 3),
                                       D::var(ky[k + 1] - ky[k], 4),
                                       D::var(dk, 5),
                                       D::var(dk1, 6));
        double G[7];
        for (std::size_t j = 0; j < 7; ++j)
          G[j] = g(i, 0) * z.d[j] + g(i, 1) * ld.d[j];
        gy[i] = G[0];
        if (!want_raw)
          continue;

        // knot position x_k sums the normalised widths before k, the bin
        // width is 2B times the k-th one; the same for heights.
        for (std::size_t j = 0; j < knots; ++j) {
          gwn[j] = 2.0 * tail_bound * ((j < k ? G[1] : 0.0) + (j == k ? G[2] : 0.0));
          ghn[j] = 2.0 * tail_bound * ((j < k ? G[3] : 0.0) + (j == k ? G[4] : 0.0));
        }
        double dotw = 0.0, doth = 0.0;
        for (std::size_t j = 0; j < knots; ++j) {
          dotw += smw[j] * gwn[j];
          doth += smh[j] * ghn[j];
        }
        for (std::size_t j = 0; j < knots; ++j) {
          graw(i, j) = scale * smw[j] * (gwn[j] - dotw);
          graw(i, knots + j) = scale * smh[j] * (ghn[j] - doth);
        }
        if (left_free)
          graw(i, 2 * knots + k - 1) += G[5] * sigmoid_d(r[2 * knots + k - 1]);
        if (right_free)
          graw(i, 2 * knots + k) += G[6] * sigmoid_d(r[2 * knots + k]);
      }
      if (want_y)
        tp.accumulate(y, gy);
      if (want_raw)
        tp.accumulate(raw, graw);
    },
    "rq_spline_forward");
}

} // namespace ricb

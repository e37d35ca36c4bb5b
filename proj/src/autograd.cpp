#include "ricb/autograd.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ricb {

const Tensor& Var::value() const
{
  return tape_->value(*this);
}

Var Tape::constant(Tensor value)
{
  if (!value.all_finite())
    throw NumericError("non-finite value fed into the graph");
  nodes_.push_back(Node{ std::move(value), {}, {}, nullptr, false, false });
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p)
{
  if (!p.value.all_finite())
    throw NumericError("parameter '" + p.name + "' is not finite");
  nodes_.push_back(Node{ p.value, {}, {}, &p, true, false });
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value,
                 std::span<const Var> parents,
                 Backward backward,
                 const char* op)
{
  if (!value.all_finite())
    throw NumericError(std::string("non-finite output of op '") + op + "'");
  bool req = false;
  for (const Var& p : parents) {
    if (p.tape() != this)
      throw InvalidArgument(std::string("op '") + op +
                            "' mixes variables from different tapes");
    req = req || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(
    Node{ std::move(value), {}, req ? std::move(backward) : Backward{}, nullptr,
          req, false });
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Tensor& grad)
{
  Node& n = nodes_[v.id()];
  if (!n.requires_grad)
    return;
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
    return;
  }
  auto dst = n.grad.values();
  auto src = grad.values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] += src[i];
}

void Tape::backward(Var loss)
{
  if (loss.tape() != this)
    throw InvalidArgument("backward on a variable from another tape");
  if (value(loss).size() != 1)
    throw InvalidArgument("backward requires a scalar loss, got shape " +
                          value(loss).shape_string());
  nodes_[loss.id()].grad = Tensor::scalar(1.0);
  nodes_[loss.id()].has_grad = nodes_[loss.id()].requires_grad;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad)
      continue;
    if (!n.grad.all_finite())
      throw NumericError("non-finite gradient during backward");
    if (n.param) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      if (dst.size() != src.size())
        n.param->grad = Tensor(n.param->value.shape());
      dst = n.param->grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j)
        dst[j] += src[j];
    } else if (n.backward) {
      // copy: the callback may grow nodes_ only in pathological use, but it
      // does accumulate into other entries of the vector
      Tensor g = n.grad;
      n.backward(*this, g);
    }
  }
}

namespace {

Tape& tape_of(Var a)
{
  if (!a.valid())
    throw InvalidArgument("operation on an empty variable");
  return *a.tape();
}

struct Broadcast
{
  std::size_t rows, cols;
};

Broadcast broadcast_shape(const Tensor& a, const Tensor& b, const char* op)
{
  auto pick = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1)
      return x;
    if (x == 1)
      return y;
    throw InvalidArgument(std::string("shape mismatch in '") + op + "': " +
                          a.shape_string() + " vs " + b.shape_string());
  };
  return { pick(a.rows(), b.rows()), pick(a.cols(), b.cols()) };
}

inline double bget(const Tensor& t, std::size_t i, std::size_t j)
{
  return t(t.rows() == 1 ? 0 : i, t.cols() == 1 ? 0 : j);
}

// Sums a full-size gradient down to the (possibly broadcast) shape of target.
Tensor reduce_to(const Tensor& g, const Tensor& target)
{
  if (g.same_shape(target))
    return g;
  Tensor out(target.shape());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      out(target.rows() == 1 ? 0 : i, target.cols() == 1 ? 0 : j) += g(i, j);
  return out;
}

// Generic broadcasting binary op. f(x, y) is the value; dfx/dfy the partials.
template<class F, class Dx, class Dy>
Var binary(Var a, Var b, const char* op, F f, Dx dfx, Dy dfy)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast s = broadcast_shape(av, bv, op);
  Tensor out = Tensor::matrix(s.rows, s.cols);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j)
      out(i, j) = f(bget(av, i, j), bget(bv, i, j));
  const Var parents[] = { a, b };
  return t.record(
    std::move(out),
    parents,
    [a, b, s, dfx, dfy](Tape& tp, const Tensor& g) {
      const Tensor& av = tp.value(a);
      const Tensor& bv = tp.value(b);
      if (tp.requires_grad(a)) {
        Tensor ga = Tensor::matrix(s.rows, s.cols);
        for (std::size_t i = 0; i < s.rows; ++i)
          for (std::size_t j = 0; j < s.cols; ++j)
            ga(i, j) = g(i, j) * dfx(bget(av, i, j), bget(bv, i, j));
        tp.accumulate(a, reduce_to(ga, av));
      }
      if (tp.requires_grad(b)) {
        Tensor gb = Tensor::matrix(s.rows, s.cols);
        for (std::size_t i = 0; i < s.rows; ++i)
          for (std::size_t j = 0; j < s.cols; ++j)
            gb(i, j) = g(i, j) * dfy(bget(av, i, j), bget(bv, i, j));
        tp.accumulate(b, reduce_to(gb, bv));
      }
    },
    op);
}

// Elementwise unary op; d(x, y) is the derivative given input and output.
template<class F, class D>
Var unary(Var a, const char* op, F f, D d)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i)
    out[i] = f(av[i]);
  const Var parents[] = { a };
  const std::size_t self = t.size();
  return t.record(
    std::move(out),
    parents,
    [a, d, self](Tape& tp, const Tensor& g) {
      const Tensor& av = tp.value(a);
      const Tensor& ov = tp.value(Var(&tp, self));
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < av.size(); ++i)
        ga[i] = g[i] * d(av[i], ov[i]);
      tp.accumulate(a, ga);
    },
    op);
}

} // namespace

Var add(Var a, Var b)
{
  return binary(
    a, b, "add",
    [](double x, double y) { return x + y; },
    [](double, double) { return 1.0; },
    [](double, double) { return 1.0; });
}

Var sub(Var a, Var b)
{
  return binary(
    a, b, "sub",
    [](double x, double y) { return x - y; },
    [](double, double) { return 1.0; },
    [](double, double) { return -1.0; });
}

Var mul(Var a, Var b)
{
  return binary(
    a, b, "mul",
    [](double x, double y) { return x * y; },
    [](double, double y) { return y; },
    [](double x, double) { return x; });
}

Var div(Var a, Var b)
{
  return binary(
    a, b, "div",
    [](double x, double y) { return x / y; },
    [](double, double y) { return 1.0 / y; },
    [](double x, double y) { return -x / (y * y); });
}

Var neg(Var a)
{
  return scale(a, -1.0);
}

Var scale(Var a, double k)
{
  return unary(
    a, "scale", [k](double x) { return k * x; },
    [k](double, double) { return k; });
}

Var add_scalar(Var a, double k)
{
  return unary(
    a, "add_scalar", [k](double x) { return x + k; },
    [](double, double) { return 1.0; });
}

Var exp(Var a)
{
  return unary(
    a, "exp", [](double x) { return std::exp(x); },
    [](double, double y) { return y; });
}

Var log(Var a)
{
  return unary(
    a, "log", [](double x) { return std::log(x); },
    [](double x, double) { return 1.0 / x; });
}

Var square(Var a)
{
  return unary(
    a, "square", [](double x) { return x * x; },
    [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a)
{
  return unary(
    a, "sqrt", [](double x) { return std::sqrt(x); },
    [](double, double y) { return 0.5 / y; });
}

Var elu(Var a)
{
  return unary(
    a, "elu", [](double x) { return x > 0 ? x : std::expm1(x); },
    [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var relu(Var a)
{
  return unary(
    a, "relu", [](double x) { return x > 0 ? x : 0.0; },
    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a)
{
  return unary(
    a, "sigmoid",
    [](double x) {
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
    },
    [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a)
{
  return unary(
    a, "softplus",
    [](double x) { return x > 0 ? x + std::log1p(std::exp(-x))
                                : std::log1p(std::exp(x)); },
    [](double x, double) {
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
    });
}

Var matmul(Var a, Var b)
{
  Tape& t = tape_of(a);
  Tensor out = matmul(a.value(), b.value());
  const Var parents[] = { a, b };
  return t.record(
    std::move(out),
    parents,
    [a, b](Tape& tp, const Tensor& g) {
      if (tp.requires_grad(a))
        tp.accumulate(a, matmul(g, tp.value(b).transposed()));
      if (tp.requires_grad(b))
        tp.accumulate(b, matmul(tp.value(a).transposed(), g));
    },
    "matmul");
}

Var transpose(Var a)
{
  Tape& t = tape_of(a);
  const Var parents[] = { a };
  return t.record(
    a.value().transposed(),
    parents,
    [a](Tape& tp, const Tensor& g) { tp.accumulate(a, g.transposed()); },
    "transpose");
}

Var sum(Var a)
{
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values())
    s += v;
  const Var parents[] = { a };
  return t.record(
    Tensor::scalar(s),
    parents,
    [a](Tape& tp, const Tensor& g) {
      tp.accumulate(a, Tensor(tp.value(a).shape(), g.item()));
    },
    "sum");
}

Var mean(Var a)
{
  const std::size_t n = a.value().size();
  if (n == 0)
    throw InvalidArgument("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var a)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  Tensor out = Tensor::matrix(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j)
      out(0, j) += av(i, j);
  const Var parents[] = { a };
  return t.record(
    std::move(out),
    parents,
    [a](Tape& tp, const Tensor& g) {
      const Tensor& av = tp.value(a);
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j)
          ga(i, j) = g(0, j);
      tp.accumulate(a, ga);
    },
    "sum_rows");
}

Var sum_cols(Var a)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  Tensor out = Tensor::matrix(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j)
      out(i, 0) += av(i, j);
  const Var parents[] = { a };
  return t.record(
    std::move(out),
    parents,
    [a](Tape& tp, const Tensor& g) {
      const Tensor& av = tp.value(a);
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j)
          ga(i, j) = g(i, 0);
      tp.accumulate(a, ga);
    },
    "sum_cols");
}

Var logsumexp_cols(Var a)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      m = std::max(m, av(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      s += std::exp(av(i, j) - m);
    out(i, 0) = m + std::log(s);
  }
  const Var parents[] = { a };
  const std::size_t self = t.size();
  return t.record(
    std::move(out),
    parents,
    [a, self](Tape& tp, const Tensor& g) {
      const Tensor& av = tp.value(a);
      const Tensor& ov = tp.value(Var(&tp, self));
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j)
          ga(i, j) = g(i, 0) * std::exp(av(i, j) - ov(i, 0));
      tp.accumulate(a, ga);
    },
    "logsumexp_cols");
}

Var logsumexp_rows(Var a)
{
  return transpose(logsumexp_cols(transpose(a)));
}

Var concat_cols(Var a, Var b)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows())
    throw InvalidArgument("concat_cols row mismatch: " + av.shape_string() +
                          " vs " + bv.shape_string());
  const std::size_t ca = av.cols(), cb = bv.cols();
  Tensor out = Tensor::matrix(av.rows(), ca + cb);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j)
      out(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j)
      out(i, ca + j) = bv(i, j);
  }
  const Var parents[] = { a, b };
  return t.record(
    std::move(out),
    parents,
    [a, b, ca, cb](Tape& tp, const Tensor& g) {
      const std::size_t r = g.rows();
      Tensor ga = Tensor::matrix(r, ca), gb = Tensor::matrix(r, cb);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j)
          ga(i, j) = g(i, j);
        for (std::size_t j = 0; j < cb; ++j)
          gb(i, j) = g(i, ca + j);
      }
      tp.accumulate(a, ga);
      tp.accumulate(b, gb);
    },
    "concat_cols");
}

Var slice_cols(Var a, std::size_t begin, std::size_t end)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (begin >= end || end > av.cols())
    throw InvalidArgument("slice_cols range out of bounds");
  Tensor out = Tensor::matrix(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j)
      out(i, j - begin) = av(i, j);
  const Var parents[] = { a };
  return t.record(
    std::move(out),
    parents,
    [a, begin, end](Tape& tp, const Tensor& g) {
      Tensor ga(tp.value(a).shape());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j)
          ga(i, j) = g(i, j - begin);
      tp.accumulate(a, ga);
    },
    "slice_cols");
}

Var detach(Var a)
{
  return tape_of(a).constant(a.value());
}

Var pairwise_sq_dist(Var a, Var b)
{
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols())
    throw InvalidArgument("pairwise_sq_dist dimension mismatch");
  const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = av(i, k) - bv(j, k);
        s += diff * diff;
      }
      out(i, j) = s;
    }
  const Var parents[] = { a, b };
  return t.record(
    std::move(out),
    parents,
    [a, b](Tape& tp, const Tensor& g) {
      const Tensor& av = tp.value(a);
      const Tensor& bv = tp.value(b);
      const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
      Tensor ga(av.shape()), gb(bv.shape());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = g(i, j);
          if (gij == 0.0)
            continue;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = 2.0 * gij * (av(i, k) - bv(j, k));
            ga(i, k) += diff;
            gb(j, k) -= diff;
          }
        }
      tp.accumulate(a, ga);
      tp.accumulate(b, gb);
    },
    "pairwise_sq_dist");
}

} // namespace ricb

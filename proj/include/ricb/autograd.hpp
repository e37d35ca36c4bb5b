#pragma once

#include "ricb/tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ricb {

//! Trainable tensor with its accumulated gradient.
struct Parameter
{
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
    : name(std::move(n))
    , value(std::move(v))
    , grad(value.shape())
  {
  }

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

//! Handle to a node recorded on a Tape. Cheap to copy; only valid while the
//! tape is alive.
class Var
{
public:
  Var() = default;
  Var(Tape* tape, std::size_t id)
    : tape_(tape)
    , id_(id)
  {
  }

  const Tensor& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

//! Reverse-mode recording of one forward pass. A fresh tape is used per
//! training step; it owns every intermediate value and gradient buffer.
class Tape
{
public:
  // Receives the gradient flowing into the node's output and must
  // accumulate into its parents through Tape::accumulate.
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  Var param(Parameter& p);
  Var record(Tensor value, std::span<const Var> parents, Backward backward,
             const char* op);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(Var v, const Tensor& grad);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  // Parameter gradients are added to Parameter::grad.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node
  {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise binary ops broadcast 1-extent dimensions (scalars, rows,
// columns) against the other operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var matmul(Var a, Var b);
Var transpose(Var a);

Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
Var elu(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);

Var sum(Var a);           // -> 1x1
Var mean(Var a);          // -> 1x1
Var sum_rows(Var a);      // column sums -> 1 x cols
Var sum_cols(Var a);      // row sums -> rows x 1
Var logsumexp_cols(Var a);// per row, over columns -> rows x 1
Var logsumexp_rows(Var a);// per column, over rows -> 1 x cols

Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var detach(Var a);

// Squared Euclidean distances between rows: out(i, j) = |a_i - b_j|^2.
Var pairwise_sq_dist(Var a, Var b);

} // namespace ricb

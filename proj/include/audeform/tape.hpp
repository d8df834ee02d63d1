#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "audeform/tensor.hpp"

namespace audeform {

// Named learnable tensor; gradients accumulate into value.grad when a tape
// the parameter was bound to runs backward.
struct Parameter {
  std::string name;
  Tensor value;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    value.requires_grad = true;
  }
  std::size_t numel() const { return value.numel(); }
};

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic recording tape, rebuilt every forward pass. Node inputs always have
// smaller ids than the node, so reverse id order is a topological order and
// backward visits each node exactly once. A tape is consumed by backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves
  Var constant(Tensor t);
  Var input(Tensor t, bool requires_grad = false);
  Var param(Parameter& p);

  // Linear algebra
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  // Elementwise / shape-preserving
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var row);
  Var tanh(Var a);
  Var gelu(Var a);
  Var relu(Var a);
  Var clamp(Var a, double lo, double hi);
  Var layer_norm(Var a, Var gamma, Var beta);
  Var softmax_rows(Var a);

  // Structural
  Var reshape(Var a, std::vector<std::size_t> shape);
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var concat_cols(const std::vector<Var>& xs);
  Var to_tokens(Var map);                              // [c,h,t] -> [h*t, c]
  Var to_map(Var tokens, std::size_t h, std::size_t t);  // [h*t, c] -> [c,h,t]

  // Reductions
  Var mean_rows(Var a);  // [m,n] -> [1,n]
  Var sum(Var a);        // -> [1]

  // Convolution / sampling
  Var conv2d(Var in, Var kernel, Var bias, std::size_t stride, std::size_t pad,
             std::size_t groups);  // bias = Var{} for none
  Var bilinear_sample(Var map, Var pts);
  Var pair_displacements(Var q_pos, Var k_pos);  // (q - k)/2 over all pairs

  // Loss
  Var cross_entropy(Var logits, std::size_t label);

  void backward(Var loss);
  const Tensor& value(Var v) const;
  Tensor grad(Var v) const;  // gradient recorded by the last backward

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  // Multiply-accumulate count of all matmul/conv2d nodes recorded so far.
  std::uint64_t macs() const { return macs_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::int32_t> inputs;
    std::function<void()> back;
    bool requires_grad = false;
    Parameter* bound = nullptr;
    const char* op = "leaf";
  };

  // Deque keeps node addresses stable, so value() references stay valid while
  // further nodes are recorded.
  std::deque<Node> nodes_;
  bool consumed_ = false;
  std::uint64_t macs_ = 0;

  std::int32_t fresh(Tensor value, std::vector<std::int32_t> inputs, const char* op);
  const Tensor& val(std::int32_t id) const { return nodes_[id].value; }
  bool needs(std::int32_t id) const { return nodes_[id].requires_grad; }
  double* gbuf(std::int32_t id);
  const std::vector<double>& gval(std::int32_t id) const { return nodes_[id].grad; }
  void check_node(Var v, const char* who) const;
  void finite_or_throw(std::int32_t id) const;
};

// Per-pass binding of persistent parameters onto one tape.
struct Ctx {
  Tape& tape;
  std::unordered_map<const Parameter*, Var> bound;

  explicit Ctx(Tape& t) : tape(t) {}
  Var use(Parameter& p) {
    auto it = bound.find(&p);
    if (it != bound.end()) return it->second;
    Var v = tape.param(p);
    bound.emplace(&p, v);
    return v;
  }
};

// Central finite differences of a scalar-valued graph against the analytic
// gradient; returns max over coordinates of |a - n| / max(1, |a|, |n|).
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps);

// Same check against every coordinate of every listed parameter. loss_fn must
// rebuild the full graph from current parameter values on each call.
double grad_check_params(const std::function<Var(Tape&)>& loss_fn,
                         const std::vector<Parameter*>& params, double eps);

}  // namespace audeform

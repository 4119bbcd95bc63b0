#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "spikemix/tensor.hpp"

namespace spikemix {

class Tape;

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Learnable tensor with an accumulated gradient. Parameters live outside the
// tape and persist across forward passes; tapes bind to them via leaf().
struct Parameter {
  Tensor value;
  Tensor grad;  // sized lazily so giant configs can be built without 2x memory
  std::string name;

  Parameter() = default;
  Parameter(Tensor v, std::string n) : value(std::move(v)), name(std::move(n)) {}

  Tensor& grad_ref() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty())
      grad.fill(0.0);
  }
};

// Reverse-mode tape. Operations are recorded in execution order; backward()
// walks them in exact reverse order, accumulating gradients node by node and
// flushing leaf gradients into their bound Parameters. A tape is rebuilt for
// every forward pass (the network is re-executed across simulation steps), so
// nodes own their forward values.
class Tape {
 public:
  // Backward rule: receives the tape and the id of the node being
  // differentiated; reads grad_of(self) and accumulates into input grads.
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to a Parameter: after backward, the leaf's gradient is summed
  // into p.grad (a parameter used k times receives the sum of k per-use
  // gradients).
  Var leaf(Parameter& p);
  // Gradient-tracked input (used by tests to check input gradients).
  Var input(Tensor v);

  const Tensor& val(Var v) const;
  const Tensor& grad(Var v) const;  // valid once backward() has run

  Var matmul(Var a, Var b);
  // Applies w [E x D] to every slice of x along `axis` (x.dim(axis) == D);
  // all other axes are batch axes. Output has dim E at `axis`.
  Var axis_apply(Var w, Var x, int axis);
  // Concatenates along axis 1; all other dims must agree.
  Var concat_channels(const std::vector<Var>& parts);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double k);
  Var reshape(Var a, Shape target);
  Var transpose(Var a);  // rank-2
  Var mean_axis(Var a, int axis);
  Var mean_all(Var a);
  Var sum_all(Var a);

  // Propagates d(loss)/d(node) to every recorded node and flushes parameter
  // gradients. loss must be scalar. A second call without re-recording is a
  // stale-tape error.
  void backward(Var loss);

  // Extension surface for composite ops (conv, batch norm, LIF, losses).
  Var record(Tensor value, std::vector<int> inputs, BackwardFn bw);
  const Tensor& value_of(int id) const;
  Tensor& grad_of(int id);
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;  // null for leaves
    Parameter* bound = nullptr;
  };

  int push(Node n);
  void check(Var v) const;

  // deque: node references handed out by val()/value_of() stay valid while
  // later ops keep recording
  std::deque<Node> nodes_;
  std::deque<Tensor> grads_;
  bool consumed_ = false;
};

}  // namespace spikemix

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "derc/rng.hpp"
#include "derc/tensor.hpp"

namespace derc {

class Graph;

// Cheap handle to a node inside a Graph. Valid for the graph's lifetime.
class Value {
 public:
  Value() = default;

  const Tensor& tensor() const;
  const std::vector<std::size_t>& shape() const { return tensor().shape(); }
  double item() const { return tensor().item(); }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }

 private:
  friend class Graph;
  Value(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Reverse-mode computation graph. Nodes are appended in topological order;
// backward() from a scalar root walks them in reverse. A graph is confined to
// one thread and typically lives for a single forward/backward step.
//
// Forward safety guarantees on finite inputs: softmax subtracts the row
// maximum, log() clamps its argument at kLogFloor, exp() clamps its argument
// at kExpCeiling. Clamp activations are counted and queryable.
class Graph {
 public:
  static constexpr double kLogFloor = 1e-12;
  static constexpr double kExpCeiling = 700.0;
  static constexpr double kLayerNormEps = 1e-5;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // -- Node construction -----------------------------------------------

  Value constant(Tensor t);  // no gradient tracking
  Value leaf(Tensor t);      // gradient-tracked input (parameter or probe)

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);  // Hadamard
  Value scale(Value a, double c) { return affine(a, c, 0.0); }
  Value affine(Value a, double mul, double add);  // mul * x + add

  // [N,C] plus a length-C vector broadcast over rows.
  Value add_rowvec(Value mat, Value vec);

  Value matmul(Value a, Value b);     // [m,k] x [k,n]
  Value matmul_nt(Value a, Value b);  // [m,k] x [n,k]^T -> [m,n]

  Value tanh_(Value a);
  Value relu(Value a);
  Value exp_(Value a);
  Value log_(Value a);
  Value lgamma_(Value a);  // elementwise, gradient via digamma

  Value softmax_rows(Value a);
  Value layer_norm(Value x, Value gain, Value bias);

  Value sum(Value a);   // scalar
  Value mean(Value a);  // scalar

  // Elementwise sum of same-shaped tensors (n-ary add).
  Value sum_of(const std::vector<Value>& parts);

  Value slice_rows(Value a, std::size_t r0, std::size_t r1);
  Value slice_cols(Value a, std::size_t c0, std::size_t c1);
  Value concat_rows(const std::vector<Value>& parts);
  Value concat_cols(const std::vector<Value>& parts);

  // Inverted dropout: zeroes entries with probability p and rescales the
  // survivors by 1/(1-p). Identity when p == 0.
  Value dropout(Value a, double p, RngStream& rng);

  // -- Execution ---------------------------------------------------------

  // Reverse pass from a scalar root. Populates gradient accumulators of all
  // reachable gradient-tracked nodes.
  void backward(Value root);

  const Tensor& value(Value v) const;
  // Gradient accumulated for v by the last backward(); zeros if unreachable.
  Tensor grad(Value v) const;
  bool requires_grad(Value v) const;

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t log_clamp_events() const { return log_clamps_; }
  std::uint64_t exp_clamp_events() const { return exp_clamps_; }

 private:
  friend class Value;

  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Graph&)> backprop;  // empty for leaves/constants
  };

  Value emplace(Tensor value, bool requires_grad, std::function<void(Graph&)> backprop);
  Tensor& grad_buffer(int id);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  std::uint64_t log_clamps_ = 0;
  std::uint64_t exp_clamps_ = 0;
};

namespace autodiff_testing {
// Gradient-fault hook for mutation tests of the finite-difference suite:
// when set, the tanh backward rule is deliberately wrong.
extern bool corrupt_tanh_backward;
}  // namespace autodiff_testing

}  // namespace derc

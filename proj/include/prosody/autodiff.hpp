#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "prosody/tensor.hpp"

namespace prosody::nn {

// A named trainable tensor with a persistent gradient accumulator. The
// gradient survives across tapes, which is what makes accumulation over
// variable-length samples work without padding.
struct Parameter {
  std::string name;
  Tensor tensor;
  Tensor gradient;

  Parameter(std::string n, Tensor t)
      : name(std::move(n)), tensor(std::move(t)), gradient(tensor.shape()) {}
  void zero_grad() { gradient.fill(0.0); }
};

// Record of one forward pass. Ops append nodes; backward() walks the record
// once in reverse, accumulating gradients additively, then flushes parameter
// gradients into their persistent accumulators. One backward per tape.
class Tape {
 public:
  using Id = std::int32_t;

  Id leaf(Tensor value);
  Id param(Parameter& p);

  const Tensor& value(Id id) const { return nodes_[check(id)].value; }
  const Tensor& grad(Id id) const;

  void backward(Id root, double seed = 1.0);

  // Primitive ops. Each checks shapes and records an exact reverse rule.
  Id matmul(Id a, Id b);           // [m x k]·[k x n] or [m x k]·[k]
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id emul(Id a, Id b);             // elementwise product
  Id scale(Id a, double c);
  Id tanh(Id a);
  Id sigmoid(Id a);
  Id softmax(Id a);                // rank-1 input
  Id log(Id a);
  Id concat(const std::vector<Id>& parts);  // rank-1, axis 0
  Id slice(Id a, std::size_t start, std::size_t len);  // rank-1
  Id mean(Id a);
  Id sum(Id a);
  Id sum_sq_diff(Id a, Id b);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatMul,
    kAdd,
    kSub,
    kEMul,
    kScale,
    kTanh,
    kSigmoid,
    kSoftmax,
    kLog,
    kConcat2,
    kSlice,
    kMean,
    kSum,
    kSumSqDiff,
  };

  struct Node {
    Op op = Op::kLeaf;
    Id a = -1;
    Id b = -1;
    std::size_t aux0 = 0;       // slice start
    double cval = 0.0;          // scale factor
    Tensor value;
    Tensor grad;
  };

  Id push(Node n);
  Id check(Id id) const;
  Id concat2(Id a, Id b);
  void backprop_node(Id id);

  std::vector<Node> nodes_;
  std::vector<std::pair<Id, Parameter*>> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace prosody::nn

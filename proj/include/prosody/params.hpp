#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "prosody/autodiff.hpp"
#include "prosody/rng.hpp"
#include "prosody/tensor.hpp"

namespace prosody::nn {

// Ordered collection of uniquely named parameters with stable addresses.
class ParamSet {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t value_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

// Xavier-uniform weights (rank >= 2), zero biases (rank 1). Deterministic
// under seed; insertion order fixes the draw order.
ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);
void init_param_values(ParamSet& params, Rng& rng);

// RMSProp with per-parameter accumulators:
//   s <- decay*s + (1-decay)*g^2 ;  theta <- theta - lr*g/(sqrt(s)+eps)
class RmsProp {
 public:
  RmsProp(double lr, double decay = 0.9, double eps = 1e-8)
      : lr_(lr), decay_(decay), eps_(eps) {}

  void step(ParamSet& params);

  double learning_rate() const { return lr_; }
  // Accumulator access for checkpointing. Ordered map keeps serialization
  // deterministic.
  std::map<std::string, Tensor>& accumulators() { return accum_; }
  const std::map<std::string, Tensor>& accumulators() const { return accum_; }

 private:
  double lr_;
  double decay_;
  double eps_;
  std::map<std::string, Tensor> accum_;
};

}  // namespace prosody::nn

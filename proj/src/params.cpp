#include "prosody/params.hpp"

#include <cmath>

#include "prosody/error.hpp"

namespace prosody::nn {

Parameter& ParamSet::add(const std::string& name, std::vector<std::size_t> shape) {
  if (has(name)) fail("params: duplicate name '", name, "'");
  params_.push_back(std::make_unique<Parameter>(name, Tensor(std::move(shape))));
  index_[name] = params_.back().get();
  return *params_.back();
}

Parameter& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail("params: unknown name '", name, "'");
  return *it->second;
}

const Parameter& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("params: unknown name '", name, "'");
  return *it->second;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParamSet::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->tensor.size();
  return n;
}

void init_param_values(ParamSet& params, Rng& rng) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    if (p.tensor.rank() < 2) {
      p.tensor.fill(0.0);
      continue;
    }
    const auto& shape = p.tensor.shape();
    const double fan_out = static_cast<double>(shape[shape.size() - 2]);
    const double fan_in = static_cast<double>(shape[shape.size() - 1]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : p.tensor.data()) v = rng.uniform(-bound, bound);
  }
}

ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParamSet set;
  for (const ParamSpec& s : specs) set.add(s.name, s.shape);
  Rng rng(seed);
  init_param_values(set, rng);
  return set;
}

void RmsProp::step(ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    if (!p.gradient.all_finite()) {
      throw NumericError(
          cat("rmsprop: non-finite gradient in parameter '", p.name, "'"));
    }
    auto [it, inserted] = accum_.try_emplace(p.name, Tensor(p.tensor.shape()));
    Tensor& s = it->second;
    if (!s.same_shape(p.tensor)) {
      fail("rmsprop: accumulator shape mismatch for '", p.name, "'");
    }
    for (std::size_t j = 0; j < p.tensor.size(); ++j) {
      const double g = p.gradient[j];
      s[j] = decay_ * s[j] + (1.0 - decay_) * g * g;
      p.tensor[j] -= lr_ * g / (std::sqrt(s[j]) + eps_);
    }
  }
}

}  // namespace prosody::nn

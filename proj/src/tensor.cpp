#include "prosody/tensor.hpp"

#include <cmath>
#include <numeric>

#include "prosody/error.hpp"

namespace prosody::nn {

namespace {
std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (numel(shape_) != data_.size()) {
    fail("tensor: shape ", shape_str(*this), " does not match ", data_.size(),
         " values");
  }
}

Tensor Tensor::from_vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) fail("tensor: rows() on rank-", rank(), " tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) fail("tensor: cols() on rank-", rank(), " tensor");
  return shape_[1];
}

double Tensor::item() const {
  if (size() != 1) fail("tensor: item() on size-", size(), " tensor");
  return data_[0];
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape()[i]);
  }
  return s + "]";
}

}  // namespace prosody::nn

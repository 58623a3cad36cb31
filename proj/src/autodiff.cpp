#include "prosody/autodiff.hpp"

#include <cmath>

#include "prosody/error.hpp"

namespace prosody::nn {

namespace {
void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    fail(op, ": shape mismatch ", shape_str(a), " vs ", shape_str(b));
  }
}

void require_rank1(const char* op, const Tensor& t) {
  if (t.rank() != 1) fail(op, ": expected rank-1 tensor, got ", shape_str(t));
}
}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::check(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    fail("tape: invalid node id ", id);
  }
  return id;
}

Tape::Id Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Id Tape::param(Parameter& p) {
  Id id = leaf(p.tensor);
  param_nodes_.emplace_back(id, &p);
  return id;
}

const Tensor& Tape::grad(Id id) const {
  if (!backward_done_) fail("tape: grad() before backward()");
  return nodes_[check(id)].grad;
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2)) {
    fail("matmul: unsupported ranks ", shape_str(A), " x ", shape_str(B));
  }
  const std::size_t m = A.rows(), k = A.cols();
  const std::size_t kb = B.rank() == 2 ? B.rows() : B.shape()[0];
  const std::size_t n = B.rank() == 2 ? B.cols() : 1;
  if (k != kb) fail("matmul: inner dims differ ", shape_str(A), " x ", shape_str(B));

  Tensor out(B.rank() == 2 ? std::vector<std::size_t>{m, n}
                           : std::vector<std::size_t>{m});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* po = out.data().data();
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = pa + i * k;
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * pb[j];
      po[i] = acc;
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double av = pa[i * k + j];
        const double* pbr = pb + j * n;
        double* por = po + i * n;
        for (std::size_t t = 0; t < n; ++t) por[t] += av * pbr[t];
      }
    }
  }
  Node node;
  node.op = Op::kMatMul;
  node.a = a;
  node.b = b;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  Node node;
  node.op = Op::kAdd;
  node.a = a;
  node.b = b;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape("sub", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  Node node;
  node.op = Op::kSub;
  node.a = a;
  node.b = b;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::emul(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape("emul", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  Node node;
  node.op = Op::kEMul;
  node.a = a;
  node.b = b;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::scale(Id a, double c) {
  Tensor out = value(a);
  for (double& x : out.data()) x *= c;
  Node node;
  node.op = Op::kScale;
  node.a = a;
  node.cval = c;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::tanh(Id a) {
  Tensor out = value(a);
  for (double& x : out.data()) x = std::tanh(x);
  Node node;
  node.op = Op::kTanh;
  node.a = a;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::sigmoid(Id a) {
  Tensor out = value(a);
  for (double& x : out.data()) x = 1.0 / (1.0 + std::exp(-x));
  Node node;
  node.op = Op::kSigmoid;
  node.a = a;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::softmax(Id a) {
  const Tensor& A = value(a);
  require_rank1("softmax", A);
  if (A.size() == 0) fail("softmax: empty input");
  double mx = A[0];
  for (std::size_t i = 1; i < A.size(); ++i) mx = std::max(mx, A[i]);
  Tensor out = A;
  double total = 0.0;
  for (double& x : out.data()) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : out.data()) x /= total;
  Node node;
  node.op = Op::kSoftmax;
  node.a = a;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::log(Id a) {
  Tensor out = value(a);
  for (double& x : out.data()) x = std::log(x);
  Node node;
  node.op = Op::kLog;
  node.a = a;
  node.value = std::move(out);
  return push(std::move(node));
}

Tape::Id Tape::concat2(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_rank1("concat", A);
  require_rank1("concat", B);
  std::vector<double> v;
  v.reserve(A.size() + B.size());
  v.insert(v.end(), A.data().begin(), A.data().end());
  v.insert(v.end(), B.data().begin(), B.data().end());
  Node node;
  node.op = Op::kConcat2;
  node.a = a;
  node.b = b;
  node.value = Tensor::from_vector(std::move(v));
  return push(std::move(node));
}

Tape::Id Tape::concat(const std::vector<Id>& parts) {
  if (parts.empty()) fail("concat: no inputs");
  Id acc = parts[0];
  require_rank1("concat", value(acc));
  for (std::size_t i = 1; i < parts.size(); ++i) acc = concat2(acc, parts[i]);
  return acc;
}

Tape::Id Tape::slice(Id a, std::size_t start, std::size_t len) {
  const Tensor& A = value(a);
  require_rank1("slice", A);
  if (start + len > A.size()) {
    fail("slice: range [", start, ", ", start + len, ") out of ", shape_str(A));
  }
  std::vector<double> v(A.data().begin() + start, A.data().begin() + start + len);
  Node node;
  node.op = Op::kSlice;
  node.a = a;
  node.aux0 = start;
  node.value = Tensor::from_vector(std::move(v));
  return push(std::move(node));
}

Tape::Id Tape::mean(Id a) {
  const Tensor& A = value(a);
  if (A.size() == 0) fail("mean: empty input");
  double s = 0.0;
  for (double x : A.data()) s += x;
  Node node;
  node.op = Op::kMean;
  node.a = a;
  node.value = Tensor::scalar(s / static_cast<double>(A.size()));
  return push(std::move(node));
}

Tape::Id Tape::sum(Id a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (double x : A.data()) s += x;
  Node node;
  node.op = Op::kSum;
  node.a = a;
  node.value = Tensor::scalar(s);
  return push(std::move(node));
}

Tape::Id Tape::sum_sq_diff(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape("sum_sq_diff", A, B);
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double d = A[i] - B[i];
    s += d * d;
  }
  Node node;
  node.op = Op::kSumSqDiff;
  node.a = a;
  node.b = b;
  node.value = Tensor::scalar(s);
  return push(std::move(node));
}

void Tape::backward(Id root, double seed) {
  check(root);
  if (backward_done_) fail("tape: backward() called twice");
  if (nodes_[root].value.size() != 1) {
    fail("tape: backward root must be scalar, got ",
         shape_str(nodes_[root].value));
  }
  for (Node& n : nodes_) n.grad = Tensor(n.value.shape());
  nodes_[root].grad[0] = seed;
  for (Id id = root; id >= 0; --id) backprop_node(id);
  for (auto& [id, p] : param_nodes_) {
    const Tensor& g = nodes_[id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) p->gradient[i] += g[i];
  }
  backward_done_ = true;
}

void Tape::backprop_node(Id id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      const std::size_t m = A.rows(), k = A.cols();
      const std::size_t cols = B.rank() == 2 ? B.cols() : 1;
      // dA += g · B^T ; dB += A^T · g
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < cols; ++t) {
          const double gv = g[i * cols + t];
          if (gv == 0.0) continue;
          for (std::size_t j = 0; j < k; ++j) {
            ga[i * k + j] += gv * B[j * cols + t];
            gb[j * cols + t] += A[i * k + j] * gv;
          }
        }
      }
      break;
    }
    case Op::kAdd: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::kEMul: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * B[i];
        gb[i] += g[i] * A[i];
      }
      break;
    }
    case Op::kScale: {
      Tensor& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.cval * g[i];
      break;
    }
    case Op::kTanh: {
      Tensor& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::kSigmoid: {
      Tensor& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case Op::kSoftmax: {
      Tensor& ga = nodes_[n.a].grad;
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.value[i];
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += n.value[i] * (g[i] - dot);
      }
      break;
    }
    case Op::kLog: {
      const Tensor& A = nodes_[n.a].value;
      Tensor& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / A[i];
      break;
    }
    case Op::kConcat2: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      const std::size_t na = ga.size();
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      break;
    }
    case Op::kSlice: {
      Tensor& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[n.aux0 + i] += g[i];
      break;
    }
    case Op::kMean: {
      Tensor& ga = nodes_[n.a].grad;
      const double gv = g[0] / static_cast<double>(ga.size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
      break;
    }
    case Op::kSum: {
      Tensor& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      break;
    }
    case Op::kSumSqDiff: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < A.size(); ++i) {
        const double d = 2.0 * (A[i] - B[i]) * g[0];
        ga[i] += d;
        gb[i] -= d;
      }
      break;
    }
  }
}

}  // namespace prosody::nn

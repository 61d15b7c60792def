#include "qtw/ad.hpp"

#include <cmath>
#include <string>

namespace qtw::ad {

int Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw ContractError("invalid Var");
  return v.id;
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1, nodes_.back().shape};
}

Var Tape::constant(std::vector<double> v, Shape s) {
  if (static_cast<int>(v.size()) != s.size()) throw ContractError("constant size mismatch");
  Node n{Op::kConst, s};
  n.val = std::move(v);
  return push(std::move(n));
}

Var Tape::param(int offset, Shape s) {
  if (!params_) throw ContractError("tape has no bound parameter vector");
  if (offset < 0 || offset + s.size() > static_cast<int>(params_->size()))
    throw ContractError("param range out of bounds");
  Node n{Op::kParam, s};
  n.i0 = offset;
  n.val.assign(params_->begin() + offset, params_->begin() + offset + s.size());
  return push(std::move(n));
}

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ContractError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::add(Var a, Var b) {
  require_same_shape(a.shape, b.shape, "add");
  Node n{Op::kAdd, a.shape, a.id, b.id};
  n.val.resize(a.shape.size());
  const auto& va = val(a);
  const auto& vb = val(b);
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] + vb[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(a.shape, b.shape, "sub");
  Node n{Op::kSub, a.shape, a.id, b.id};
  n.val.resize(a.shape.size());
  const auto& va = val(a);
  const auto& vb = val(b);
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] - vb[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(a.shape, b.shape, "mul");
  Node n{Op::kMul, a.shape, a.id, b.id};
  n.val.resize(a.shape.size());
  const auto& va = val(a);
  const auto& vb = val(b);
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] * vb[i];
  return push(std::move(n));
}

Var Tape::mul_scalar(Var a, Var s) {
  if (s.shape.size() != 1) throw ContractError("mul_scalar: scalar operand required");
  Node n{Op::kMulScalar, a.shape, a.id, s.id};
  n.val.resize(a.shape.size());
  const auto& va = val(a);
  double sv = val(s)[0];
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] * sv;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  Node n{Op::kAddConst, a.shape, a.id};
  n.c0 = c;
  n.val = val(a);
  for (double& x : n.val) x += c;
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n{Op::kScale, a.shape, a.id};
  n.c0 = c;
  n.val = val(a);
  for (double& x : n.val) x *= c;
  return push(std::move(n));
}

Var Tape::neg(Var a) {
  Node n{Op::kNeg, a.shape, a.id};
  n.val = val(a);
  for (double& x : n.val) x = -x;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  if (a.shape.cols != b.shape.rows) throw ContractError("matmul: inner dimension mismatch");
  Shape s{a.shape.rows, b.shape.cols};
  Node n{Op::kMatMul, s, a.id, b.id};
  n.val.assign(s.size(), 0.0);
  const auto& va = val(a);
  const auto& vb = val(b);
  int m = a.shape.rows, k = a.shape.cols, c = b.shape.cols;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) {
      double aij = va[i * k + j];
      for (int l = 0; l < c; ++l) n.val[i * c + l] += aij * vb[j * c + l];
    }
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n{Op::kTanh, a.shape, a.id};
  n.val = val(a);
  for (double& x : n.val) x = std::tanh(x);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n{Op::kSigmoid, a.shape, a.id};
  n.val = val(a);
  for (double& x : n.val) x = 1.0 / (1.0 + std::exp(-x));
  return push(std::move(n));
}

Var Tape::sqrt(Var a) {
  Node n{Op::kSqrt, a.shape, a.id};
  n.val = val(a);
  for (double& x : n.val) x = std::sqrt(x);
  return push(std::move(n));
}

Var Tape::reciprocal(Var a) {
  Node n{Op::kReciprocal, a.shape, a.id};
  n.val = val(a);
  for (double& x : n.val) x = 1.0 / x;
  return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  if (a.shape.cols != 1 || b.shape.cols != 1) throw ContractError("concat: column vectors only");
  Node n{Op::kConcat, vec(a.shape.rows + b.shape.rows), a.id, b.id};
  n.val = val(a);
  const auto& vb = val(b);
  n.val.insert(n.val.end(), vb.begin(), vb.end());
  return push(std::move(n));
}

Var Tape::slice(Var a, int start, int len) {
  if (start < 0 || len <= 0 || start + len > a.shape.size())
    throw ContractError("slice: range out of bounds");
  Node n{Op::kSlice, vec(len), a.id};
  n.i0 = start;
  const auto& va = val(a);
  n.val.assign(va.begin() + start, va.begin() + start + len);
  return push(std::move(n));
}

Var Tape::gather(Var a, std::vector<int> idx, Shape out_shape) {
  if (static_cast<int>(idx.size()) != out_shape.size())
    throw ContractError("gather: index/shape mismatch");
  const auto& va = val(a);
  Node n{Op::kGather, out_shape, a.id};
  n.val.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= static_cast<int>(va.size()))
      throw ContractError("gather: index out of bounds");
    n.val[i] = va[idx[i]];
  }
  n.idx = std::move(idx);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n{Op::kSum, scalar_shape(), a.id};
  double s = 0.0;
  for (double x : val(a)) s += x;
  n.val = {s};
  return push(std::move(n));
}

double Tape::scalar_val(Var v) const {
  if (v.shape.size() != 1) throw ContractError("scalar_val: not a scalar");
  return val(v)[0];
}

void Tape::backward(Var loss, std::vector<double>& param_grad) const {
  int root = check(loss);
  if (nodes_[root].shape.size() != 1) throw ContractError("backward: loss must be scalar");
  if (params_) {
    if (param_grad.empty()) param_grad.assign(params_->size(), 0.0);
    if (param_grad.size() != params_->size())
      throw ContractError("backward: gradient buffer size mismatch");
  }

  std::vector<std::vector<double>> g(root + 1);
  g[root].assign(1, 1.0);

  auto acc = [&](int id, size_t i, double v) {
    if (g[id].empty()) g[id].assign(nodes_[id].shape.size(), 0.0);
    g[id][i] += v;
  };

  for (int id = root; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (g[id].empty()) continue;
    const std::vector<double>& gn = g[id];
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        for (size_t i = 0; i < gn.size(); ++i) param_grad[n.i0 + i] += gn[i];
        break;
      case Op::kAdd:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i]);
        for (size_t i = 0; i < gn.size(); ++i) acc(n.b, i, gn[i]);
        break;
      case Op::kSub:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i]);
        for (size_t i = 0; i < gn.size(); ++i) acc(n.b, i, -gn[i]);
        break;
      case Op::kMul: {
        const auto& va = nodes_[n.a].val;
        const auto& vb = nodes_[n.b].val;
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i] * vb[i]);
        for (size_t i = 0; i < gn.size(); ++i) acc(n.b, i, gn[i] * va[i]);
        break;
      }
      case Op::kMulScalar: {
        const auto& va = nodes_[n.a].val;
        double sv = nodes_[n.b].val[0];
        double gs = 0.0;
        for (size_t i = 0; i < gn.size(); ++i) {
          acc(n.a, i, gn[i] * sv);
          gs += gn[i] * va[i];
        }
        acc(n.b, 0, gs);
        break;
      }
      case Op::kAddConst:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i]);
        break;
      case Op::kScale:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i] * n.c0);
        break;
      case Op::kNeg:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, -gn[i]);
        break;
      case Op::kMatMul: {
        const Node& na = nodes_[n.a];
        const Node& nb = nodes_[n.b];
        int m = na.shape.rows, k = na.shape.cols, c = nb.shape.cols;
        // gA = g B^T, gB = A^T g
        if (g[n.a].empty()) g[n.a].assign(na.shape.size(), 0.0);
        if (g[n.b].empty()) g[n.b].assign(nb.shape.size(), 0.0);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j) {
            double s = 0.0;
            for (int l = 0; l < c; ++l) s += gn[i * c + l] * nb.val[j * c + l];
            g[n.a][i * k + j] += s;
          }
        for (int j = 0; j < k; ++j)
          for (int l = 0; l < c; ++l) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += na.val[i * k + j] * gn[i * c + l];
            g[n.b][j * c + l] += s;
          }
        break;
      }
      case Op::kTanh:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i] * (1.0 - n.val[i] * n.val[i]));
        break;
      case Op::kSigmoid:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i] * n.val[i] * (1.0 - n.val[i]));
        break;
      case Op::kSqrt:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, gn[i] * 0.5 / n.val[i]);
        break;
      case Op::kReciprocal:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, i, -gn[i] * n.val[i] * n.val[i]);
        break;
      case Op::kConcat: {
        int na = nodes_[n.a].shape.size();
        for (int i = 0; i < na; ++i) acc(n.a, i, gn[i]);
        for (size_t i = na; i < gn.size(); ++i) acc(n.b, i - na, gn[i]);
        break;
      }
      case Op::kSlice:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, n.i0 + i, gn[i]);
        break;
      case Op::kGather:
        for (size_t i = 0; i < gn.size(); ++i) acc(n.a, n.idx[i], gn[i]);
        break;
      case Op::kSum: {
        int na = nodes_[n.a].shape.size();
        for (int i = 0; i < na; ++i) acc(n.a, i, gn[0]);
        break;
      }
    }
    // Release this node's gradient buffer; it is never read again.
    g[id] = {};
  }
}

double grad_check(const std::function<double(const std::vector<double>&, std::vector<double>*)>& f,
                  std::vector<double> params, double step) {
  std::vector<double> grad;
  f(params, &grad);
  if (grad.size() != params.size()) throw ContractError("grad_check: gradient length mismatch");

  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    double keep = params[i];
    params[i] = keep + step;
    double up = f(params, nullptr);
    params[i] = keep - step;
    double dn = f(params, nullptr);
    params[i] = keep;
    double fd = (up - dn) / (2.0 * step);
    double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-3});
    worst = std::max(worst, std::abs(grad[i] - fd) / denom);
  }
  return worst;
}

}  // namespace qtw::ad

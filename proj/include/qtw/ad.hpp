#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qtw/errors.hpp"

namespace qtw::ad {

struct Shape {
  int rows = 1, cols = 1;

  int size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

inline Shape scalar_shape() { return {1, 1}; }
inline Shape vec(int n) { return {n, 1}; }

// Handle into a Tape. Values are stored row-major.
struct Var {
  int id = -1;
  Shape shape;
};

enum class Op : uint8_t {
  kConst,
  kParam,
  kAdd,
  kSub,
  kMul,        // elementwise
  kMulScalar,  // array * scalar var
  kAddConst,
  kScale,  // array * compile-time constant
  kNeg,
  kMatMul,
  kTanh,
  kSigmoid,
  kSqrt,
  kReciprocal,
  kConcat,
  kSlice,
  kGather,
  kSum,
};

// Append-only reverse-mode tape over real arrays. Forward values are computed
// eagerly at node construction (define-by-run); node inputs always reference
// earlier nodes. One tape per worker; rebuild per sequence.
class Tape {
 public:
  // params: flat parameter vector the kParam leaves read from. May be null
  // for tapes without parameters.
  explicit Tape(const std::vector<double>* params = nullptr) : params_(params) {}

  Var constant(std::vector<double> v, Shape s);
  Var scalar(double v) { return constant({v}, scalar_shape()); }
  Var zeros(Shape s) { return constant(std::vector<double>(s.size(), 0.0), s); }

  // Leaf bound to params[offset, offset+shape.size()).
  Var param(int offset, Shape s);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var mul_scalar(Var a, Var s);
  Var add_const(Var a, double c);
  Var scale(Var a, double c);
  Var neg(Var a);
  Var matmul(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var sqrt(Var a);
  Var reciprocal(Var a);
  Var concat(Var a, Var b);  // column vectors
  Var slice(Var a, int start, int len);
  Var gather(Var a, std::vector<int> idx, Shape out_shape);
  Var sum(Var a);

  const std::vector<double>& val(Var v) const { return nodes_[check(v)].val; }
  double scalar_val(Var v) const;
  size_t node_count() const { return nodes_.size(); }

  // Accumulates d loss / d params into param_grad (resized/zeroed to the bound
  // parameter vector's length if empty). Deterministic: a fixed reverse sweep.
  void backward(Var loss, std::vector<double>& param_grad) const;

 private:
  struct Node {
    Node(Op o, Shape s, int in_a = -1, int in_b = -1) : op(o), shape(s), a(in_a), b(in_b) {}

    Op op;
    Shape shape;
    int a = -1, b = -1;
    int i0 = 0;       // slice start / param offset
    double c0 = 0.0;  // scale factor / added constant
    std::vector<double> val;
    std::vector<int> idx;  // gather indices
  };

  int check(Var v) const;
  Var push(Node n);
  const Node& node(Var v) const { return nodes_[check(v)]; }

  std::vector<Node> nodes_;
  const std::vector<double>* params_;
};

// Max discrepancy between reverse-mode and central finite differences over all
// parameters, normalized as |ad - fd| / max(|ad|, |fd|, 1e-3). The 1e-3 floor
// makes a threshold of 1e-5 equivalent to "relative error <= 1e-5, or
// absolute error <= 1e-8 when both magnitudes are below ~1e-4".
// f(params, grad_out): returns the loss; fills grad_out when non-null.
double grad_check(const std::function<double(const std::vector<double>&, std::vector<double>*)>& f,
                  std::vector<double> params, double step = 1e-5);

}  // namespace qtw::ad

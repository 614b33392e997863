#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "imdcl/matrix.hpp"

namespace imdcl {

class Node;

// Shared handle to one value in a reverse-mode computation graph. Graphs are
// built fresh per evaluation, hold no global state, and distinct graphs may
// live on distinct threads.
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Node(Matrix v, bool rg)
      : value(std::move(v)), grad(value.rows(), value.cols(), 0.0), requires_grad(rg) {}

  Matrix value;
  Matrix grad;  // same shape as value, accumulated additively during backward
  bool requires_grad;
  std::vector<Var> parents;
  // Reads this->grad and adds the corresponding contributions into each
  // parent's grad. Empty for leaves.
  std::function<void(Node&)> backprop;
};

// Leaf constructors.
Var constant(Matrix v);          // requires_grad = false
Var param(Matrix v);             // requires_grad = true
Var scalar_const(double v);      // 1x1 constant

// Primitive differentiable operations. Shape violations throw DimensionError.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);          // same shape
Var mul(const Var& a, const Var& b);          // elementwise
Var softmax_rows(const Var& z);               // stable row softmax
Var log(const Var& x);                        // clamped: log(max(x, 1e-12))
Var exp(const Var& x);
Var sum(const Var& x);                        // 1x1
Var mean(const Var& x);                       // 1x1
Var scale(const Var& x, double c);
Var transpose(const Var& x);
Var gather_rows(const Var& x, std::vector<std::size_t> indices);
Var l2_norm_rows(const Var& x);               // m x 1 Euclidean row norms
Var concat_rows(const Var& a, const Var& b);  // stack vertically

// Helpers composed from the primitives above.
Var sub(const Var& a, const Var& b);
// ReLU as an elementwise product with the 0/1 activation mask of the current
// value (the mask is a constant with respect to the gradient).
Var relu(const Var& x);
// x (m x in) * w (in x out) + row-broadcast bias b (1 x out).
Var affine(const Var& x, const Var& w, const Var& b);
// Elementwise logistic sigmoid of a column vector (m x 1), built from
// concat/transpose/softmax so gradients flow through the primitives only.
Var sigmoid_column(const Var& z);
// Broadcast a 1x1 value to rows x cols.
Var broadcast_scalar(const Var& s, std::size_t rows, std::size_t cols);

// Clamp floor used by log(); shared with scalar-side loss helpers.
inline constexpr double kLogClamp = 1e-12;

// Runs reverse-mode accumulation from a 1x1 root. Gradients of all reachable
// nodes are zeroed first, then filled in a single reverse-topological sweep,
// so fan-out contributions add. Throws DimensionError if root is not 1x1.
void backward(const Var& root);

// Value of a 1x1 node.
double scalar_value(const Var& v);

}  // namespace imdcl

#include "imdcl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

namespace imdcl {

namespace {

Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto node = std::make_shared<Node>(std::move(value), rg);
  if (rg) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}

}  // namespace

Var constant(Matrix v) { return std::make_shared<Node>(std::move(v), false); }

Var param(Matrix v) { return std::make_shared<Node>(std::move(v), true); }

Var scalar_const(double v) { return constant(Matrix(1, 1, v)); }

Var matmul(const Var& a, const Var& b) {
  Matrix value = matmul(a->value, b->value);  // shape check inside
  return make_op(std::move(value), {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    if (a.requires_grad) gemm_nt_acc(a.grad, n.grad, b.value);  // dA += G * B^T
    if (b.requires_grad) gemm_tn_acc(b.grad, a.value, n.grad);  // dB += A^T * G
  });
}

Var add(const Var& a, const Var& b) {
  Matrix value = add(a->value, b->value);
  return make_op(std::move(value), {a, b}, [](Node& n) {
    for (auto& p : n.parents) {
      if (p->requires_grad) add_in_place(p->grad, n.grad);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Matrix value = hadamard(a->value, b->value);
  return make_op(std::move(value), {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    if (a.requires_grad) add_in_place(a.grad, hadamard(n.grad, b.value));
    if (b.requires_grad) add_in_place(b.grad, hadamard(n.grad, a.value));
  });
}

Var softmax_rows(const Var& z) {
  Matrix value = softmax_rows(z->value);
  return make_op(std::move(value), {z}, [](Node& n) {
    Node& z = *n.parents[0];
    if (!z.requires_grad) return;
    // Per row: dz = s o (g - <g, s>).
    for (std::size_t i = 0; i < n.value.rows(); ++i) {
      auto s = n.value.row_span(i);
      auto g = n.grad.row_span(i);
      auto dz = z.grad.row_span(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < s.size(); ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < s.size(); ++j) dz[j] += s[j] * (g[j] - dot);
    }
  });
}

Var log(const Var& x) {
  Matrix value(x->value.rows(), x->value.cols());
  for (std::size_t i = 0; i < value.size(); ++i) {
    value.data()[i] = std::log(std::max(x->value.data()[i], kLogClamp));
  }
  return make_op(std::move(value), {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    // d/dx log(max(x, c)) = 1/x above the clamp, 0 in the clamped region.
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double xv = x.value.data()[i];
      if (xv > kLogClamp) x.grad.data()[i] += n.grad.data()[i] / xv;
    }
  });
}

Var exp(const Var& x) {
  Matrix value(x->value.rows(), x->value.cols());
  for (std::size_t i = 0; i < value.size(); ++i) {
    value.data()[i] = std::exp(x->value.data()[i]);
  }
  return make_op(std::move(value), {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      x.grad.data()[i] += n.grad.data()[i] * n.value.data()[i];
    }
  });
}

Var sum(const Var& x) {
  Matrix value(1, 1, sum_all(x->value));
  return make_op(std::move(value), {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    const double g = n.grad(0, 0);
    for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad.data()[i] += g;
  });
}

Var mean(const Var& x) {
  if (x->value.size() == 0) throw DimensionError("mean: empty matrix");
  Matrix value(1, 1, sum_all(x->value) / static_cast<double>(x->value.size()));
  return make_op(std::move(value), {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    const double g = n.grad(0, 0) / static_cast<double>(x.grad.size());
    for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad.data()[i] += g;
  });
}

Var scale(const Var& x, double c) {
  return make_op(scale(x->value, c), {x}, [c](Node& n) {
    Node& x = *n.parents[0];
    if (x.requires_grad) add_scaled_in_place(x.grad, n.grad, c);
  });
}

Var transpose(const Var& x) {
  return make_op(transpose(x->value), {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (x.requires_grad) add_in_place(x.grad, transpose(n.grad));
  });
}

Var gather_rows(const Var& x, std::vector<std::size_t> indices) {
  for (std::size_t idx : indices) {
    if (idx >= x->value.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                           std::to_string(x->value.rows()) + " rows");
    }
  }
  Matrix value(indices.size(), x->value.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = x->value.row_span(indices[i]);
    std::copy(src.begin(), src.end(), value.row_span(i).begin());
  }
  return make_op(std::move(value), {x}, [idx = std::move(indices)](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto g = n.grad.row_span(i);
      auto dst = x.grad.row_span(idx[i]);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var l2_norm_rows(const Var& x) {
  Matrix value(x->value.rows(), 1);
  for (std::size_t i = 0; i < x->value.rows(); ++i) {
    double acc = 0.0;
    for (double v : x->value.row_span(i)) acc += v * v;
    value(i, 0) = std::sqrt(acc);
  }
  return make_op(std::move(value), {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < x.value.rows(); ++i) {
      const double norm = std::max(n.value(i, 0), 1e-300);
      const double g = n.grad(i, 0);
      auto row = x.value.row_span(i);
      auto dst = x.grad.row_span(i);
      for (std::size_t j = 0; j < row.size(); ++j) dst[j] += g * row[j] / norm;
    }
  });
}

Var concat_rows(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.cols()) {
    throw DimensionError("concat_rows: column counts disagree");
  }
  Matrix value(a->value.rows() + b->value.rows(), a->value.cols());
  std::copy(a->value.data(), a->value.data() + a->value.size(), value.data());
  std::copy(b->value.data(), b->value.data() + b->value.size(),
            value.data() + a->value.size());
  return make_op(std::move(value), {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    if (a.requires_grad) {
      for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad.data()[i] += n.grad.data()[i];
    }
    if (b.requires_grad) {
      const double* src = n.grad.data() + a.grad.size();
      for (std::size_t i = 0; i < b.grad.size(); ++i) b.grad.data()[i] += src[i];
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var relu(const Var& x) {
  Matrix mask(x->value.rows(), x->value.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask.data()[i] = x->value.data()[i] > 0.0 ? 1.0 : 0.0;
  }
  return mul(x, constant(std::move(mask)));
}

Var affine(const Var& x, const Var& w, const Var& b) {
  if (b->value.rows() != 1) throw DimensionError("affine: bias must be a 1xN row");
  return add(matmul(x, w), matmul(constant(Matrix::ones(x->value.rows(), 1)), b));
}

Var sigmoid_column(const Var& z) {
  if (z->value.cols() != 1) throw DimensionError("sigmoid_column: expected an m x 1 column");
  const std::size_t m = z->value.rows();
  // Row-softmax of [z | 0] yields (sigmoid(z), 1 - sigmoid(z)) per row; the
  // two-column block is assembled with transposes since rows concatenate.
  Var stacked = concat_rows(transpose(z), constant(Matrix::zeros(1, m)));
  Var probs = softmax_rows(transpose(stacked));
  return matmul(probs, constant(Matrix{{1.0}, {0.0}}));
}

Var broadcast_scalar(const Var& s, std::size_t rows, std::size_t cols) {
  if (s->value.rows() != 1 || s->value.cols() != 1) {
    throw DimensionError("broadcast_scalar: source must be 1x1");
  }
  return matmul(matmul(constant(Matrix::ones(rows, 1)), s),
                constant(Matrix::ones(1, cols)));
}

void backward(const Var& root) {
  if (!root) throw DimensionError("backward: null root");
  if (root->value.rows() != 1 || root->value.cols() != 1) {
    throw DimensionError("backward: root must be 1x1");
  }
  if (!root->requires_grad) return;  // nothing upstream wants gradients

  // Iterative depth-first post-order over grad-requiring nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    std::fill(n->grad.data(), n->grad.data() + n->grad.size(), 0.0);
  }
  root->grad(0, 0) = 1.0;
  // order is post-order (root last); walk it backwards for the reverse sweep.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

double scalar_value(const Var& v) {
  if (!v || v->value.rows() != 1 || v->value.cols() != 1) {
    throw DimensionError("scalar_value: node is not 1x1");
  }
  return v->value(0, 0);
}

}  // namespace imdcl

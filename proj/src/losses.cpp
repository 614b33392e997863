#include "imdcl/losses.hpp"

#include <string>

namespace imdcl {

void validate(const LossWeights& w) {
  if (w.lambda_div < 0.0 || w.lambda_im < 0.0 || w.lambda_dcl < 0.0) {
    throw DimensionError("LossWeights: all scaling factors must be non-negative");
  }
}

Var ce_loss(const Var& logits, const std::vector<int>& labels) {
  const std::size_t m = logits->value.rows();
  const std::size_t n = logits->value.cols();
  if (labels.size() != m) {
    throw DimensionError("ce_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " rows");
  }
  Matrix onehot(m, n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw DimensionError("ce_loss: label " + std::to_string(y) + " outside [0, " +
                           std::to_string(n) + ")");
    }
    onehot(i, static_cast<std::size_t>(y)) = 1.0;
  }
  Var picked = mul(constant(std::move(onehot)), log(softmax_rows(logits)));
  return scale(sum(picked), -1.0 / static_cast<double>(m));
}

Var certainty_loss(const Var& logits) {
  const std::size_t m = logits->value.rows();
  if (m == 0) throw DimensionError("certainty_loss: empty batch");
  Var probs = softmax_rows(logits);
  return scale(sum(mul(probs, log(probs))), -1.0 / static_cast<double>(m));
}

Var diversity_loss(const Var& logits) {
  const std::size_t m = logits->value.rows();
  if (m == 0) throw DimensionError("diversity_loss: empty batch");
  Var probs = softmax_rows(logits);
  // Batch marginal: (1/m) * ones^T * probs, a 1 x N row.
  Var marginal = matmul(constant(scale(Matrix::ones(1, m), 1.0 / static_cast<double>(m))), probs);
  return sum(mul(marginal, log(marginal)));
}

Var im_loss(const Var& logits, const LossWeights& w) {
  validate(w);
  return add(certainty_loss(logits), scale(diversity_loss(logits), w.lambda_div));
}

double ce_loss_value(const Matrix& logits, const std::vector<int>& labels) {
  return scalar_value(ce_loss(constant(logits), labels));
}

double certainty_loss_value(const Matrix& logits) {
  return scalar_value(certainty_loss(constant(logits)));
}

double diversity_loss_value(const Matrix& logits) {
  return scalar_value(diversity_loss(constant(logits)));
}

double im_loss_value(const Matrix& logits, const LossWeights& w) {
  return scalar_value(im_loss(constant(logits), w));
}

}  // namespace imdcl

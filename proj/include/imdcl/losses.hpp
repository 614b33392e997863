#pragma once

#include <vector>

#include "imdcl/autodiff.hpp"

namespace imdcl {

// Scaling factors for the composite objectives. All must be non-negative.
struct LossWeights {
  double lambda_div = 1.0;  // diversity term inside the IM loss
  double lambda_im = 1.0;   // IM share of the supervised objective
  double lambda_dcl = 0.1;  // contrastive share of the transductive objective
};

void validate(const LossWeights& w);

// Mean cross-entropy of softmax(logits) against integer labels in [0, N).
// logits: m x N, labels: length m. Throws DimensionError on mismatch or
// out-of-range labels.
Var ce_loss(const Var& logits, const std::vector<int>& labels);

// Mean Shannon entropy of the row predictions: -(1/m) sum_i sum_n p log p.
// Zero when every row is one-hot, ln N when every row is uniform. Driving it
// down makes individual predictions confident.
Var certainty_loss(const Var& logits);

// Negative entropy of the batch-mean prediction: sum_n q log q where
// q = mean_i softmax(logits)_i. Ranges over [-ln N, 0]; minimizing it spreads
// predictions across classes and resists collapse onto one label.
Var diversity_loss(const Var& logits);

// certainty + lambda_div * diversity.
Var im_loss(const Var& logits, const LossWeights& w);

// Convenience scalar forms (evaluate the graph versions on constant leaves).
double ce_loss_value(const Matrix& logits, const std::vector<int>& labels);
double certainty_loss_value(const Matrix& logits);
double diversity_loss_value(const Matrix& logits);
double im_loss_value(const Matrix& logits, const LossWeights& w);

}  // namespace imdcl

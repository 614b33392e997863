#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "imdcl/autodiff.hpp"
#include "imdcl/data.hpp"
#include "imdcl/model.hpp"

namespace imdcl {

// Detached snapshot of features and softmax predictions for every episode
// sample (support rows first, then query rows). Gradients never flow through
// bank contents; during adaptation only the anchor's live prediction is
// differentiated.
struct MemoryBank {
  Matrix features;            // m x feature_dim
  Matrix predictions;         // m x way, softmax rows
  std::vector<int> origin;    // support rows carry their local label, query rows -1

  std::size_t size() const { return origin.size(); }
  std::size_t support_count() const;
  bool is_support_row(std::size_t i) const { return origin[i] >= 0; }
};

// Full recompute of the bank from the current model. Called at the start of
// every transductive phase so the snapshot is never stale within a step.
MemoryBank refresh_bank(const SourceModel& model, const Episode& episode);

// Cosine similarity of two equal-length vectors. Throws NumericError when
// either norm falls below 1e-12 (degenerate feature).
double cosine_sim(std::span<const double> a, std::span<const double> b);

// How an anchor's positive weights are inverted into negative weights.
enum class WeightVariant {
  ReverseOrder,       // rank-reversing permutation of the positive weights
  Opposite,           // reflection (max + min) - w
  NonlinearLogistic,  // logistic curve with learnable steepness/midpoint
};

struct WeightScheme {
  WeightVariant variant = WeightVariant::ReverseOrder;
  // Logistic parameters; gradient-updated during adaptation when the
  // NonlinearLogistic variant is active. The negative initial steepness makes
  // the curve assign small weights to similar neighbors and weights near 1 to
  // dissimilar ones.
  double logistic_k = -5.0;
  double logistic_x0 = 1.0;
};

// Similarity weights of anchor versus every other bank row (bank.size() - 1
// entries, in bank order skipping the anchor): cosine shifted to [0, 1] via
// (s + 1) / 2, then normalized to mean 1. Order-preserving: the most similar
// partner keeps the largest weight.
std::vector<double> positive_weights(const MemoryBank& bank, std::size_t anchor);

// Inverts a mean-normalized positive weight vector under the given scheme
// (value-level; uses the scheme's current logistic parameters).
std::vector<double> negative_weights(const WeightScheme& scheme,
                                     const std::vector<double>& positive);

// Both weight vectors for one anchor.
struct AnchorWeights {
  std::size_t anchor_index = 0;
  std::vector<double> positive;
  std::vector<double> negative;
};

AnchorWeights anchor_weights(const MemoryBank& bank, const WeightScheme& scheme,
                             std::size_t anchor);

// Decay schedule for the negative-term coefficient:
//   lambda_n(h) = (1 + 10 h / H)^(-5), h in [0, H].
// Starts at 1 and decays to 11^-5, so early epochs push apart aggressively
// and late epochs mostly attract.
struct LambdaNSchedule {
  std::size_t total_epochs = 100;
};

double lambda_n(const LambdaNSchedule& schedule, std::size_t epoch);

// Positive-set selection mode.
enum class DclMode {
  Full,  // every other bank row joins the positive sum
  TopK,  // only the k most similar rows join, support rows boosted first
};

struct DclOptions {
  DclMode mode = DclMode::Full;
  std::size_t top_k = 5;
  double support_boost = 2.0;  // multiplies support-row weights before selection
  bool unweighted = false;     // force all weights to 1 (scheme ignored)
};

// Graph-bound logistic parameters (1x1 leaves). Supplied when the logistic
// scheme should receive gradients; otherwise the scheme's stored values act
// as constants.
struct LogisticVars {
  Var k;
  Var x0;
};

// Distance-aware contrastive objective over the episode batch:
//   -(1/m) sum_t sum_{i != t} w+_{t,i} <p_t, p_i>
//   + (lambda_n/m) sum_t sum_{i != t} w-_{t,i} <p_t, p_i>
// where p_t is the anchor's live (gradient-carrying) prediction row and the
// p_i are detached bank predictions. live_predictions must be m x way softmax
// rows aligned with the bank.
Var dcl_loss(const Var& live_predictions, const MemoryBank& bank, const WeightScheme& scheme,
             double lambda_n_value, const DclOptions& options = {},
             const LogisticVars* logistic = nullptr);

}  // namespace imdcl

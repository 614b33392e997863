#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imdcl/autodiff.hpp"
#include "imdcl/matrix.hpp"

namespace imdcl {

// One affine layer; bias kept as a 1 x out row so it row-broadcasts.
struct AffineLayer {
  Matrix w;
  Matrix b;
};

struct ModelDims {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 32;
  std::size_t num_classes = 5;
};

// MLP encoder plus linear classifier head. Hidden encoder layers apply
// affine + ReLU; the final encoder layer is affine only so features are
// unconstrained in sign. The classifier maps features to class logits.
struct SourceModel {
  std::vector<AffineLayer> encoder;
  AffineLayer classifier;
  bool encoder_frozen = false;

  std::size_t input_dim() const { return encoder.front().w.rows(); }
  std::size_t feature_dim() const { return encoder.back().w.cols(); }
  std::size_t num_classes() const { return classifier.w.cols(); }
};

// Xavier-uniform initialization: each weight ~ uniform(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)); biases start at zero. Deterministic in
// the seed.
SourceModel init_model(std::uint64_t seed, const ModelDims& dims);

// Replaces the classifier head with a freshly initialized num_classes-way
// head (same distribution as init_model). Encoder untouched.
void reinit_classifier(SourceModel& model, std::size_t num_classes, std::uint64_t seed);

// Parameter leaves for one computation graph. Leaf order is canonical:
// encoder layer 0 w, b, layer 1 w, b, ..., classifier w, b.
struct BoundModel {
  std::vector<Var> encoder_w;
  std::vector<Var> encoder_b;
  Var classifier_w;
  Var classifier_b;
};

// Binds the model's parameters as graph leaves. trainable selects between
// param leaves (gradients tracked) and constant leaves.
BoundModel bind_model(const SourceModel& model, bool trainable);

// Graph-side forward passes.
Var forward_features(const BoundModel& bm, const Var& x);
Var forward_logits(const BoundModel& bm, const Var& x);

// Plain forward passes; same code path as the graph versions, evaluated with
// constant leaves, so training and inference can never diverge.
Matrix forward_features(const SourceModel& model, const Matrix& x);
Matrix forward_logits(const SourceModel& model, const Matrix& x);

// One live parameter slot for the optimizer: the stored value, the gradient
// accumulated for it this step, and whether updates are suppressed.
struct ParamBinding {
  Matrix* value = nullptr;
  const Matrix* grad = nullptr;
  bool frozen = false;
};

// Canonical binding list pairing model storage with a bound graph's
// gradients. Encoder slots are marked frozen when model.encoder_frozen.
std::vector<ParamBinding> model_bindings(SourceModel& model, const BoundModel& bm);

// SGD with classical momentum and coupled weight decay:
//   v <- momentum * v + (grad + weight_decay * param)
//   param <- param - lr * v
struct SgdState {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::vector<Matrix> velocity;  // sized lazily to mirror the binding list
};

// Applies one update to every non-frozen binding. Frozen slots are fully
// skipped: value and velocity both stay untouched. The binding list must
// have the same length and order on every call sharing one SgdState.
void sgd_step(SgdState& state, std::span<ParamBinding> bindings);

// JSON checkpoint holding dims, flags, and all parameters at full precision.
void save_checkpoint(const SourceModel& model, const std::string& path);
SourceModel load_checkpoint(const std::string& path);

}  // namespace imdcl

#include "imdcl/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "imdcl/rng.hpp"

namespace imdcl {

namespace {

Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  return w;
}

AffineLayer make_layer(std::size_t in, std::size_t out, Rng& rng) {
  return AffineLayer{xavier_uniform(in, out, rng), Matrix::zeros(1, out)};
}

nlohmann::json layer_to_json(const AffineLayer& layer) {
  nlohmann::json j;
  j["rows"] = layer.w.rows();
  j["cols"] = layer.w.cols();
  std::vector<double> w(layer.w.data(), layer.w.data() + layer.w.size());
  std::vector<double> b(layer.b.data(), layer.b.data() + layer.b.size());
  j["w"] = w;
  j["b"] = b;
  return j;
}

AffineLayer layer_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  const auto w = j.at("w").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  if (w.size() != rows * cols || b.size() != cols) {
    throw std::runtime_error("checkpoint: layer size fields are inconsistent");
  }
  AffineLayer layer{Matrix(rows, cols), Matrix(1, cols)};
  std::copy(w.begin(), w.end(), layer.w.data());
  std::copy(b.begin(), b.end(), layer.b.data());
  return layer;
}

}  // namespace

SourceModel init_model(std::uint64_t seed, const ModelDims& dims) {
  if (dims.input_dim == 0 || dims.feature_dim == 0 || dims.num_classes == 0) {
    throw DimensionError("init_model: dimensions must be positive");
  }
  Rng rng(derive_seed(seed, "model-init"));
  SourceModel model;
  std::size_t in = dims.input_dim;
  for (std::size_t width : dims.hidden) {
    if (width == 0) throw DimensionError("init_model: hidden width must be positive");
    model.encoder.push_back(make_layer(in, width, rng));
    in = width;
  }
  model.encoder.push_back(make_layer(in, dims.feature_dim, rng));
  model.classifier = make_layer(dims.feature_dim, dims.num_classes, rng);
  return model;
}

void reinit_classifier(SourceModel& model, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) throw DimensionError("reinit_classifier: num_classes must be positive");
  Rng rng(derive_seed(seed, "classifier-init"));
  model.classifier = make_layer(model.feature_dim(), num_classes, rng);
}

BoundModel bind_model(const SourceModel& model, bool trainable) {
  auto leaf = [trainable](const Matrix& m) { return trainable ? param(m) : constant(m); };
  BoundModel bm;
  for (const auto& layer : model.encoder) {
    bm.encoder_w.push_back(leaf(layer.w));
    bm.encoder_b.push_back(leaf(layer.b));
  }
  bm.classifier_w = leaf(model.classifier.w);
  bm.classifier_b = leaf(model.classifier.b);
  return bm;
}

Var forward_features(const BoundModel& bm, const Var& x) {
  Var h = x;
  // Hidden layers activate; the final encoder layer stays affine.
  for (std::size_t i = 0; i + 1 < bm.encoder_w.size(); ++i) {
    h = relu(affine(h, bm.encoder_w[i], bm.encoder_b[i]));
  }
  return affine(h, bm.encoder_w.back(), bm.encoder_b.back());
}

Var forward_logits(const BoundModel& bm, const Var& x) {
  return affine(forward_features(bm, x), bm.classifier_w, bm.classifier_b);
}

Matrix forward_features(const SourceModel& model, const Matrix& x) {
  return forward_features(bind_model(model, false), constant(x))->value;
}

Matrix forward_logits(const SourceModel& model, const Matrix& x) {
  return forward_logits(bind_model(model, false), constant(x))->value;
}

std::vector<ParamBinding> model_bindings(SourceModel& model, const BoundModel& bm) {
  if (bm.encoder_w.size() != model.encoder.size()) {
    throw DimensionError("model_bindings: bound graph does not match model layout");
  }
  std::vector<ParamBinding> bindings;
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    bindings.push_back({&model.encoder[i].w, &bm.encoder_w[i]->grad, model.encoder_frozen});
    bindings.push_back({&model.encoder[i].b, &bm.encoder_b[i]->grad, model.encoder_frozen});
  }
  bindings.push_back({&model.classifier.w, &bm.classifier_w->grad, false});
  bindings.push_back({&model.classifier.b, &bm.classifier_b->grad, false});
  return bindings;
}

void sgd_step(SgdState& state, std::span<ParamBinding> bindings) {
  if (state.velocity.empty()) {
    state.velocity.reserve(bindings.size());
    for (const auto& b : bindings) {
      state.velocity.push_back(Matrix::zeros(b.value->rows(), b.value->cols()));
    }
  }
  if (state.velocity.size() != bindings.size()) {
    throw DimensionError("sgd_step: binding list changed length between steps");
  }
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    auto& b = bindings[i];
    if (b.frozen) continue;
    if (!b.value->same_shape(*b.grad) || !b.value->same_shape(state.velocity[i])) {
      throw DimensionError("sgd_step: parameter/gradient/velocity shapes disagree");
    }
    Matrix& v = state.velocity[i];
    double* pv = v.data();
    double* pw = b.value->data();
    const double* pg = b.grad->data();
    for (std::size_t k = 0; k < v.size(); ++k) {
      pv[k] = state.momentum * pv[k] + (pg[k] + state.weight_decay * pw[k]);
      pw[k] -= state.lr * pv[k];
    }
  }
}

void save_checkpoint(const SourceModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "imdcl-checkpoint";
  j["version"] = 1;
  j["encoder_frozen"] = model.encoder_frozen;
  j["encoder"] = nlohmann::json::array();
  for (const auto& layer : model.encoder) j["encoder"].push_back(layer_to_json(layer));
  j["classifier"] = layer_to_json(model.classifier);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(2) << "\n";
}

SourceModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "imdcl-checkpoint") {
    throw std::runtime_error("load_checkpoint: " + path + " is not an imdcl checkpoint");
  }
  if (j.at("version").get<int>() != 1) {
    throw std::runtime_error("load_checkpoint: unsupported checkpoint version");
  }
  SourceModel model;
  model.encoder_frozen = j.at("encoder_frozen").get<bool>();
  for (const auto& lj : j.at("encoder")) model.encoder.push_back(layer_from_json(lj));
  if (model.encoder.empty()) throw std::runtime_error("load_checkpoint: empty encoder");
  model.classifier = layer_from_json(j.at("classifier"));
  return model;
}

}  // namespace imdcl

#include "imdcl/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "imdcl/dcl.hpp"
#include "imdcl/grad_check.hpp"
#include "imdcl/losses.hpp"
#include "imdcl/model.hpp"
#include "imdcl/pipeline.hpp"
#include "imdcl/rng.hpp"

namespace imdcl {

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

std::vector<int> random_labels(Rng& rng, std::size_t m, std::size_t classes) {
  std::vector<int> y(m);
  for (auto& v : y) v = static_cast<int>(rng.uniform_int(classes));
  return y;
}

MemoryBank random_bank(Rng& rng, std::size_t m, std::size_t d, std::size_t way) {
  MemoryBank bank;
  bank.features = Matrix(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    // Reject near-zero feature rows so cosine similarities stay well defined.
    while (true) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        bank.features(i, j) = rng.uniform(-1.0, 1.0);
        norm += bank.features(i, j) * bank.features(i, j);
      }
      if (std::sqrt(norm) > 0.1) break;
    }
  }
  bank.predictions = softmax_rows(random_matrix(rng, m, way, -2.0, 2.0));
  const std::size_t support = 1 + rng.uniform_int(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    bank.origin.push_back(i < support ? static_cast<int>(rng.uniform_int(way)) : -1);
  }
  return bank;
}

// Small MLP whose hidden pre-activations sit away from the ReLU kink, so the
// finite-difference probes never cross it.
struct ToyModel {
  std::vector<Matrix> params;  // w0, b0, w1, b1, ..., cls_w, cls_b
  std::size_t layers = 0;
};

ToyModel random_toy_model(Rng& rng, const Matrix& inputs, std::size_t feature_dim,
                          std::size_t way) {
  const std::size_t hidden = 4;
  while (true) {
    ToyModel toy;
    toy.layers = 2;
    toy.params = {
        random_matrix(rng, inputs.cols(), hidden, -1.0, 1.0), random_matrix(rng, 1, hidden, -0.5, 0.5),
        random_matrix(rng, hidden, feature_dim, -1.0, 1.0),   random_matrix(rng, 1, feature_dim, -0.5, 0.5),
        random_matrix(rng, feature_dim, way, -1.0, 1.0),      random_matrix(rng, 1, way, -0.5, 0.5),
    };
    // Check the kink margin on the single ReLU layer.
    Matrix pre = matmul(inputs, toy.params[0]);
    bool ok = true;
    for (std::size_t i = 0; i < pre.rows() && ok; ++i) {
      for (std::size_t j = 0; j < pre.cols() && ok; ++j) {
        if (std::abs(pre(i, j) + toy.params[1](0, j)) < 1e-3) ok = false;
      }
    }
    if (ok) return toy;
  }
}

// Rebuild a forward pass from leaf order (w0, b0, w1, b1, cls_w, cls_b).
Var toy_logits(const std::vector<Var>& leaves, const Var& x) {
  Var h = relu(affine(x, leaves[0], leaves[1]));
  Var features = affine(h, leaves[2], leaves[3]);
  return affine(features, leaves[4], leaves[5]);
}

struct Accumulator {
  GradSuiteEntry entry;
  void feed(const GradCheckResult& r) {
    entry.instances += 1;
    entry.max_rel_err = std::max(entry.max_rel_err, r.max_rel_err);
  }
};

}  // namespace

std::vector<GradSuiteEntry> run_gradcheck_suite(std::size_t instances_per_loss,
                                                std::uint64_t seed, double eps) {
  Rng rng(derive_seed(seed, "gradcheck-suite"));
  std::vector<GradSuiteEntry> out;

  // --- Plain losses over free logits. -------------------------------------
  struct LogitLoss {
    const char* name;
    std::function<Var(const Var&, const std::vector<int>&, const LossWeights&)> build;
  };
  const std::vector<LogitLoss> logit_losses = {
      {"L_src", [](const Var& z, const std::vector<int>& y, const LossWeights&) {
         return ce_loss(z, y);
       }},
      {"L_cer", [](const Var& z, const std::vector<int>&, const LossWeights&) {
         return certainty_loss(z);
       }},
      {"L_div", [](const Var& z, const std::vector<int>&, const LossWeights&) {
         return diversity_loss(z);
       }},
      {"L_IM", [](const Var& z, const std::vector<int>&, const LossWeights& w) {
         return im_loss(z, w);
       }},
  };
  for (const auto& loss : logit_losses) {
    Accumulator acc;
    acc.entry.name = loss.name;
    for (std::size_t i = 0; i < instances_per_loss; ++i) {
      const std::size_t m = 2 + rng.uniform_int(5);
      const std::size_t n = 2 + rng.uniform_int(4);
      const Matrix logits = random_matrix(rng, m, n, -2.0, 2.0);
      const auto labels = random_labels(rng, m, n);
      LossWeights w;
      w.lambda_div = rng.uniform(0.2, 2.0);
      acc.feed(grad_check(
          [&](const std::vector<Var>& p) { return loss.build(p[0], labels, w); }, {logits},
          eps));
    }
    out.push_back(acc.entry);
  }

  // --- Contrastive loss, each weighting scheme. ----------------------------
  for (WeightVariant variant : {WeightVariant::ReverseOrder, WeightVariant::Opposite,
                                WeightVariant::NonlinearLogistic}) {
    Accumulator acc;
    acc.entry.name = std::string("L_dcl/") + to_string(variant);
    const bool logistic = variant == WeightVariant::NonlinearLogistic;
    for (std::size_t i = 0; i < instances_per_loss; ++i) {
      const std::size_t m = 3 + rng.uniform_int(4);
      const std::size_t way = 2 + rng.uniform_int(3);
      const MemoryBank bank = random_bank(rng, m, 3 + rng.uniform_int(3), way);
      const Matrix logits = random_matrix(rng, m, way, -2.0, 2.0);
      const double lam = rng.uniform(0.0, 1.0);
      WeightScheme scheme;
      scheme.variant = variant;

      std::vector<Matrix> params = {logits};
      if (logistic) {
        params.push_back(Matrix(1, 1, rng.uniform(-6.0, -2.0)));  // k
        params.push_back(Matrix(1, 1, rng.uniform(0.5, 1.5)));    // x0
      }
      acc.feed(grad_check(
          [&](const std::vector<Var>& p) {
            LogisticVars lv;
            const LogisticVars* bound = nullptr;
            if (logistic) {
              lv = LogisticVars{p[1], p[2]};
              bound = &lv;
            }
            return dcl_loss(softmax_rows(p[0]), bank, scheme, lam, {}, bound);
          },
          params, eps));
    }
    out.push_back(acc.entry);
  }

  // --- Composite phase objectives on a toy 2-way episode. ------------------
  {
    Accumulator acc_s, acc_q;
    acc_s.entry.name = "L_s";
    acc_q.entry.name = "L_q";
    for (std::size_t i = 0; i < instances_per_loss; ++i) {
      const std::size_t way = 2, shot = 1, queries = 2;
      const std::size_t input_dim = 3, feature_dim = 3;
      const Matrix support_x = random_matrix(rng, way * shot, input_dim, -1.0, 1.0);
      const Matrix query_x = random_matrix(rng, way * queries, input_dim, -1.0, 1.0);
      Matrix all_x(support_x.rows() + query_x.rows(), input_dim);
      std::copy(support_x.data(), support_x.data() + support_x.size(), all_x.data());
      std::copy(query_x.data(), query_x.data() + query_x.size(),
                all_x.data() + support_x.size());
      const std::vector<int> support_y = {0, 1};
      LossWeights w;
      w.lambda_im = rng.uniform(0.5, 1.5);
      w.lambda_dcl = rng.uniform(0.05, 0.3);

      const ToyModel toy = random_toy_model(rng, all_x, feature_dim, way);

      // Supervised phase objective: CE + lambda_im * IM on the support rows.
      acc_s.feed(grad_check(
          [&](const std::vector<Var>& p) {
            Var logits = toy_logits(p, constant(support_x));
            return add(ce_loss(logits, support_y), scale(im_loss(logits, w), w.lambda_im));
          },
          toy.params, eps));

      // Transductive phase objective: IM + lambda_dcl * DCL over all rows,
      // with the bank detached at the current parameter values (exactly how
      // the adaptation loop uses it).
      WeightScheme scheme;
      scheme.variant = static_cast<WeightVariant>(i % 3);
      const bool logistic = scheme.variant == WeightVariant::NonlinearLogistic;
      const double lam = rng.uniform(0.0, 1.0);

      MemoryBank bank;
      {
        std::vector<Var> leaves;
        for (const auto& p : toy.params) leaves.push_back(constant(p));
        Var h = relu(affine(constant(all_x), leaves[0], leaves[1]));
        Var features = affine(h, leaves[2], leaves[3]);
        Var logits = affine(features, leaves[4], leaves[5]);
        bank.features = features->value;
        bank.predictions = imdcl::softmax_rows(logits->value);
        bank.origin = {0, 1, -1, -1, -1, -1};
      }

      std::vector<Matrix> params = toy.params;
      if (logistic) {
        params.push_back(Matrix(1, 1, rng.uniform(-6.0, -2.0)));
        params.push_back(Matrix(1, 1, rng.uniform(0.5, 1.5)));
      }
      acc_q.feed(grad_check(
          [&](const std::vector<Var>& p) {
            std::vector<Var> model_leaves(p.begin(), p.begin() + 6);
            Var logits = toy_logits(model_leaves, constant(all_x));
            LogisticVars lv;
            const LogisticVars* bound = nullptr;
            if (logistic) {
              lv = LogisticVars{p[6], p[7]};
              bound = &lv;
            }
            Var dcl = dcl_loss(softmax_rows(logits), bank, scheme, lam, {}, bound);
            return add(im_loss(logits, w), scale(dcl, w.lambda_dcl));
          },
          params, eps));
    }
    out.push_back(acc_s.entry);
    out.push_back(acc_q.entry);
  }

  return out;
}

double worst_rel_err(const std::vector<GradSuiteEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
  return worst;
}

}  // namespace imdcl

#include "imdcl/dcl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace imdcl {

std::size_t MemoryBank::support_count() const {
  std::size_t n = 0;
  for (int o : origin) n += o >= 0 ? 1 : 0;
  return n;
}

MemoryBank refresh_bank(const SourceModel& model, const Episode& episode) {
  MemoryBank bank;
  const Matrix support_f = forward_features(model, episode.support_x());
  const Matrix query_f = forward_features(model, episode.query_x());

  const std::size_t m = support_f.rows() + query_f.rows();
  bank.features = Matrix(m, support_f.cols());
  std::copy(support_f.data(), support_f.data() + support_f.size(), bank.features.data());
  std::copy(query_f.data(), query_f.data() + query_f.size(),
            bank.features.data() + support_f.size());

  Matrix logits = matmul(bank.features, model.classifier.w);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t j = 0; j < logits.cols(); ++j) logits(i, j) += model.classifier.b(0, j);
  }
  bank.predictions = softmax_rows(logits);

  bank.origin.reserve(m);
  for (int y : episode.support_y()) bank.origin.push_back(y);
  for (std::size_t i = 0; i < episode.query_count(); ++i) bank.origin.push_back(-1);
  return bank;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_sim: vector lengths disagree");
  if (a.empty()) throw DimensionError("cosine_sim: empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) {
    throw NumericError("cosine_sim: degenerate feature (norm below 1e-12)");
  }
  return dot / (na * nb);
}

std::vector<double> positive_weights(const MemoryBank& bank, std::size_t anchor) {
  const std::size_t m = bank.size();
  if (anchor >= m) throw DimensionError("positive_weights: anchor index out of range");
  if (m < 2) throw DimensionError("positive_weights: bank needs at least two rows");

  std::vector<double> w;
  w.reserve(m - 1);
  const auto fa = bank.features.row_span(anchor);
  for (std::size_t i = 0; i < m; ++i) {
    if (i == anchor) continue;
    const double s = cosine_sim(bank.features.row_span(i), fa);
    w.push_back((s + 1.0) / 2.0);
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  if (mean < 1e-300) throw NumericError("positive_weights: all similarities collapsed to -1");
  for (double& v : w) v /= mean;
  return w;
}

namespace {

std::vector<double> logistic_values(const std::vector<double>& positive, double k, double x0) {
  std::vector<double> neg(positive.size());
  for (std::size_t i = 0; i < positive.size(); ++i) {
    neg[i] = 1.0 / (1.0 + std::exp(-k * (positive[i] - x0)));
  }
  return neg;
}

void require_mean_normalized(const std::vector<double>& positive) {
  if (positive.empty()) throw DimensionError("negative_weights: empty positive vector");
  const double mean =
      std::accumulate(positive.begin(), positive.end(), 0.0) / static_cast<double>(positive.size());
  if (std::abs(mean - 1.0) > 1e-6) {
    throw DimensionError("negative_weights: positive vector is not mean-normalized");
  }
}

}  // namespace

std::vector<double> negative_weights(const WeightScheme& scheme,
                                     const std::vector<double>& positive) {
  require_mean_normalized(positive);
  const std::size_t n = positive.size();
  switch (scheme.variant) {
    case WeightVariant::ReverseOrder: {
      // Stable rank reversal: the i-th smallest entry receives the value of
      // the i-th largest. Ties break by index, so the result is deterministic
      // and the value multiset is preserved exactly.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return positive[a] < positive[b]; });
      std::vector<double> neg(n);
      for (std::size_t p = 0; p < n; ++p) {
        neg[order[p]] = positive[order[n - 1 - p]];
      }
      return neg;
    }
    case WeightVariant::Opposite: {
      const auto [lo, hi] = std::minmax_element(positive.begin(), positive.end());
      const double pivot = *lo + *hi;
      std::vector<double> neg(n);
      for (std::size_t i = 0; i < n; ++i) neg[i] = pivot - positive[i];
      return neg;
    }
    case WeightVariant::NonlinearLogistic:
      return logistic_values(positive, scheme.logistic_k, scheme.logistic_x0);
  }
  throw DimensionError("negative_weights: unknown scheme variant");
}

AnchorWeights anchor_weights(const MemoryBank& bank, const WeightScheme& scheme,
                             std::size_t anchor) {
  AnchorWeights aw;
  aw.anchor_index = anchor;
  aw.positive = positive_weights(bank, anchor);
  aw.negative = negative_weights(scheme, aw.positive);
  return aw;
}

double lambda_n(const LambdaNSchedule& schedule, std::size_t epoch) {
  if (schedule.total_epochs == 0) {
    throw DimensionError("lambda_n: schedule needs a positive epoch budget");
  }
  if (epoch > schedule.total_epochs) {
    throw DimensionError("lambda_n: epoch " + std::to_string(epoch) + " beyond budget " +
                         std::to_string(schedule.total_epochs));
  }
  const double progress =
      static_cast<double>(epoch) / static_cast<double>(schedule.total_epochs);
  return std::pow(1.0 + 10.0 * progress, -5.0);
}

namespace {

// Bank prediction rows for the anchor's partners, restricted to `selected`
// (indices into the partner list, i.e. bank order with the anchor skipped).
Matrix partner_predictions(const MemoryBank& bank, std::size_t anchor,
                           const std::vector<std::size_t>& selected) {
  Matrix rows(selected.size(), bank.predictions.cols());
  for (std::size_t out = 0; out < selected.size(); ++out) {
    const std::size_t partner = selected[out];
    const std::size_t bank_row = partner < anchor ? partner : partner + 1;
    auto src = bank.predictions.row_span(bank_row);
    std::copy(src.begin(), src.end(), rows.row_span(out).begin());
  }
  return rows;
}

}  // namespace

Var dcl_loss(const Var& live_predictions, const MemoryBank& bank, const WeightScheme& scheme,
             double lambda_n_value, const DclOptions& options, const LogisticVars* logistic) {
  const std::size_t m = bank.size();
  if (m < 2) throw DimensionError("dcl_loss: bank needs at least two rows");
  if (live_predictions->value.rows() != m) {
    throw DimensionError("dcl_loss: live predictions have " +
                         std::to_string(live_predictions->value.rows()) + " rows but bank has " +
                         std::to_string(m) + " (stale bank?)");
  }
  if (live_predictions->value.cols() != bank.predictions.cols()) {
    throw DimensionError("dcl_loss: prediction widths disagree with bank");
  }
  if (lambda_n_value < 0.0) throw DimensionError("dcl_loss: lambda_n must be non-negative");
  if (options.mode == DclMode::TopK && options.top_k == 0) {
    throw DimensionError("dcl_loss: top_k must be positive in TopK mode");
  }

  Var pos_sum = scalar_const(0.0);
  Var neg_sum = scalar_const(0.0);

  const std::size_t n = m - 1;
  std::vector<std::size_t> all_partners(n);
  std::iota(all_partners.begin(), all_partners.end(), 0);

  for (std::size_t t = 0; t < m; ++t) {
    std::vector<double> pos = options.unweighted ? std::vector<double>(n, 1.0)
                                                 : positive_weights(bank, t);

    // Positive selection: full set, or the top_k rows after boosting
    // support-row weights by support_boost.
    std::vector<std::size_t> selected = all_partners;
    std::vector<double> pos_selected = pos;
    if (options.mode == DclMode::TopK && options.top_k < n) {
      std::vector<double> boosted = pos;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bank_row = i < t ? i : i + 1;
        if (bank.is_support_row(bank_row)) boosted[i] *= options.support_boost;
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return boosted[a] > boosted[b];
      });
      order.resize(options.top_k);
      std::sort(order.begin(), order.end());
      selected = order;
      pos_selected.clear();
      for (std::size_t i : selected) pos_selected.push_back(boosted[i]);
    } else if (options.mode == DclMode::TopK) {
      // top_k covers every partner; only the boost applies.
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bank_row = i < t ? i : i + 1;
        if (bank.is_support_row(bank_row)) pos_selected[i] *= options.support_boost;
      }
    }

    const Var p_t = transpose(gather_rows(live_predictions, {t}));  // way x 1

    // Positive term: w_row * (partner_preds * p_t).
    const Var pos_dots = matmul(constant(partner_predictions(bank, t, selected)), p_t);
    pos_sum = add(pos_sum, matmul(constant(Matrix::row(pos_selected)), pos_dots));

    // Negative term always ranges over every partner.
    const Var all_dots = selected.size() == n
                             ? pos_dots
                             : matmul(constant(partner_predictions(bank, t, all_partners)), p_t);
    if (!options.unweighted && scheme.variant == WeightVariant::NonlinearLogistic &&
        logistic != nullptr) {
      // w- = sigmoid(k * (w+ - x0)) with k, x0 as graph leaves.
      const Var kb = broadcast_scalar(logistic->k, n, 1);
      const Var x0b = broadcast_scalar(logistic->x0, n, 1);
      const Var z = mul(kb, sub(constant(Matrix::column(pos)), x0b));
      const Var w_neg = sigmoid_column(z);
      neg_sum = add(neg_sum, matmul(transpose(w_neg), all_dots));
    } else {
      std::vector<double> neg = options.unweighted ? std::vector<double>(n, 1.0)
                                                   : negative_weights(scheme, pos);
      neg_sum = add(neg_sum, matmul(constant(Matrix::row(neg)), all_dots));
    }
  }

  const double inv_m = 1.0 / static_cast<double>(m);
  return add(scale(pos_sum, -inv_m), scale(neg_sum, lambda_n_value * inv_m));
}

}  // namespace imdcl

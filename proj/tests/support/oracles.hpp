#pragma once

// Independent reference implementations used only by tests. Everything here
// is written as plain loops over the raw numbers, deliberately avoiding the
// library's own kernels, so agreement between the two is meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "imdcl/dcl.hpp"
#include "imdcl/matrix.hpp"

namespace oracles {

inline double cosine(const imdcl::Matrix& f, std::size_t a, std::size_t b) {
  long double dot = 0.0L, na = 0.0L, nb = 0.0L;
  for (std::size_t j = 0; j < f.cols(); ++j) {
    dot += static_cast<long double>(f(a, j)) * f(b, j);
    na += static_cast<long double>(f(a, j)) * f(a, j);
    nb += static_cast<long double>(f(b, j)) * f(b, j);
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

// Anchor-vs-partner weights: cosine shifted into [0, 1], then divided by the
// vector mean so the result averages to 1.
inline std::vector<double> positive_weights(const imdcl::Matrix& features, std::size_t anchor) {
  std::vector<double> w;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (i == anchor) continue;
    w.push_back((cosine(features, anchor, i) + 1.0) / 2.0);
  }
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (double& v : w) v /= mean;
  return w;
}

// Rank reversal by explicit (value, index) pairing: the p-th smallest entry's
// slot receives the p-th largest value.
inline std::vector<double> reverse_order(const std::vector<double>& w) {
  std::vector<std::pair<double, std::size_t>> byval;
  for (std::size_t i = 0; i < w.size(); ++i) byval.emplace_back(w[i], i);
  std::sort(byval.begin(), byval.end());
  std::vector<double> neg(w.size());
  const std::size_t n = w.size();
  for (std::size_t p = 0; p < n; ++p) neg[byval[p].second] = byval[n - 1 - p].first;
  return neg;
}

inline std::vector<double> opposite(const std::vector<double>& w) {
  const double lo = *std::min_element(w.begin(), w.end());
  const double hi = *std::max_element(w.begin(), w.end());
  std::vector<double> neg(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) neg[i] = (lo + hi) - w[i];
  return neg;
}

inline std::vector<double> logistic(const std::vector<double>& w, double k, double x0) {
  std::vector<double> neg(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    neg[i] = 1.0 / (1.0 + std::exp(-k * (w[i] - x0)));
  }
  return neg;
}

inline std::vector<double> negative_weights(const imdcl::WeightScheme& scheme,
                                            const std::vector<double>& w) {
  switch (scheme.variant) {
    case imdcl::WeightVariant::ReverseOrder:
      return reverse_order(w);
    case imdcl::WeightVariant::Opposite:
      return opposite(w);
    case imdcl::WeightVariant::NonlinearLogistic:
      return logistic(w, scheme.logistic_k, scheme.logistic_x0);
  }
  return {};
}

// Brute-force double sum over anchors and partners:
//   -(1/m) sum_t sum_{i in P_t} w+ <p_t, p_i> + (lambda/m) sum_t sum_{i != t} w- <p_t, p_i>
// with the positive set either every partner (Full) or the top_k partners
// after multiplying support-row weights by support_boost (TopK). Negative
// weights always come from the un-boosted positives over every partner.
inline double dcl(const imdcl::Matrix& live_predictions, const imdcl::MemoryBank& bank,
                  const imdcl::WeightScheme& scheme, double lambda_n_value,
                  const imdcl::DclOptions& options = {}) {
  const std::size_t m = bank.size();
  double pos_total = 0.0, neg_total = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    std::vector<double> pos = options.unweighted
                                  ? std::vector<double>(m - 1, 1.0)
                                  : positive_weights(bank.features, t);
    const std::vector<double> neg = options.unweighted ? std::vector<double>(m - 1, 1.0)
                                                       : oracles::negative_weights(scheme, pos);

    std::vector<std::size_t> partners;
    for (std::size_t i = 0; i < m; ++i) {
      if (i != t) partners.push_back(i);
    }
    std::vector<double> dots(partners.size());
    for (std::size_t p = 0; p < partners.size(); ++p) {
      double d = 0.0;
      for (std::size_t c = 0; c < live_predictions.cols(); ++c) {
        d += live_predictions(t, c) * bank.predictions(partners[p], c);
      }
      dots[p] = d;
    }

    std::vector<double> boosted = pos;
    if (options.mode == imdcl::DclMode::TopK) {
      for (std::size_t p = 0; p < partners.size(); ++p) {
        if (bank.is_support_row(partners[p])) boosted[p] *= options.support_boost;
      }
    }
    std::vector<std::size_t> chosen(partners.size());
    std::iota(chosen.begin(), chosen.end(), 0);
    if (options.mode == imdcl::DclMode::TopK && options.top_k < chosen.size()) {
      std::stable_sort(chosen.begin(), chosen.end(),
                       [&](std::size_t a, std::size_t b) { return boosted[a] > boosted[b]; });
      chosen.resize(options.top_k);
    }
    for (std::size_t p : chosen) pos_total += boosted[p] * dots[p];
    for (std::size_t p = 0; p < partners.size(); ++p) neg_total += neg[p] * dots[p];
  }
  const double dm = static_cast<double>(m);
  return -pos_total / dm + lambda_n_value * neg_total / dm;
}

// Exact negative log-likelihood contrastive objective, the quantity the
// optimized double-sum upper-bounds. Per anchor t the positive and negative
// likelihoods are products of softmax-normalized exp(<p_t, w * p_i>) factors,
// the normalizer running over every bank prediction (log-sum-exp guarded);
// the loss is the mean over anchors of -log of the likelihood ratio.
inline double dcl_exact_nll(const imdcl::Matrix& live_predictions, const imdcl::MemoryBank& bank,
                            const imdcl::WeightScheme& scheme) {
  const std::size_t m = bank.size();
  double total = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    const std::vector<double> pos = imdcl::positive_weights(bank, t);
    const std::vector<double> neg = imdcl::negative_weights(scheme, pos);

    std::vector<double> base(m);
    for (std::size_t k = 0; k < m; ++k) {
      double d = 0.0;
      for (std::size_t c = 0; c < live_predictions.cols(); ++c) {
        d += live_predictions(t, c) * bank.predictions(k, c);
      }
      base[k] = d;
    }
    const double hi = *std::max_element(base.begin(), base.end());
    double z = 0.0;
    for (double b : base) z += std::exp(b - hi);
    const double lse = hi + std::log(z);

    double log_p = 0.0, log_n = 0.0;
    std::size_t p = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == t) continue;
      log_p += pos[p] * base[i] - lse;
      log_n += neg[p] * base[i] - lse;
      ++p;
    }
    total += -(log_p - log_n);
  }
  return total / static_cast<double>(m);
}

}  // namespace oracles

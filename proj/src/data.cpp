#include "imdcl/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "imdcl/rng.hpp"

namespace imdcl {

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

DomainSpec make_domain(std::size_t input_dim, const std::vector<int>& class_ids,
                       double mean_scale, double cov_scale, std::size_t samples_per_class,
                       std::uint64_t seed, Rng& mean_rng) {
  DomainSpec spec;
  spec.input_dim = input_dim;
  spec.class_ids = class_ids;
  spec.class_means = uniform_matrix(class_ids.size(), input_dim, -mean_scale, mean_scale, mean_rng);
  spec.class_cov_scale = cov_scale;
  spec.transform_a = Matrix::identity(input_dim);
  spec.transform_b = Matrix::zeros(1, input_dim);
  spec.noise_sigma = 0.0;
  spec.samples_per_class = samples_per_class;
  spec.seed = seed;
  return spec;
}

}  // namespace

DomainPair make_domain_pair(const DomainConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0) throw DimensionError("make_domain_pair: input_dim must be positive");
  if (config.source_classes == 0 || config.target_classes == 0) {
    throw DimensionError("make_domain_pair: class counts must be positive");
  }
  if (config.class_cov_scale <= 0.0) {
    throw DimensionError("make_domain_pair: class_cov_scale must be positive");
  }
  if (config.shift_severity < 0.0) {
    throw DimensionError("make_domain_pair: shift_severity must be non-negative");
  }

  std::vector<int> source_ids(config.source_classes);
  for (std::size_t i = 0; i < source_ids.size(); ++i) source_ids[i] = static_cast<int>(i);
  std::vector<int> target_ids(config.target_classes);
  for (std::size_t i = 0; i < target_ids.size(); ++i) {
    target_ids[i] = static_cast<int>(config.source_classes + i);
  }

  DomainPair pair;
  Rng source_rng(derive_seed(seed, "source-means"));
  pair.source = make_domain(config.input_dim, source_ids, config.class_mean_scale,
                            config.class_cov_scale, config.source_samples_per_class,
                            derive_seed(seed, "source-samples"), source_rng);

  Rng target_rng(derive_seed(seed, "target-means"));
  pair.target = make_domain(config.input_dim, target_ids, config.class_mean_scale,
                            config.class_cov_scale, config.target_samples_per_class,
                            derive_seed(seed, "target-samples"), target_rng);

  // Target domain transform: A = I + severity * R with R entries in (-1, 1),
  // b entries in severity * (-1, 1). Severity 0 keeps the identity exactly.
  const double s = config.shift_severity;
  Rng shift_rng(derive_seed(seed, "target-shift"));
  Matrix r = uniform_matrix(config.input_dim, config.input_dim, -1.0, 1.0, shift_rng);
  pair.target.transform_a = add(Matrix::identity(config.input_dim), scale(r, s));
  pair.target.transform_b = uniform_matrix(1, config.input_dim, -s, s, shift_rng);
  pair.target.noise_sigma = 0.1 * s;

  pair.source_data = materialize(pair.source);
  return pair;
}

Dataset materialize(const DomainSpec& spec) {
  if (spec.num_classes() == 0 || spec.samples_per_class == 0) {
    throw DimensionError("materialize: domain has no classes or no samples");
  }
  Rng rng(derive_seed(spec.seed, "materialize"));
  Dataset data;
  data.x = Matrix(spec.num_classes() * spec.samples_per_class, spec.input_dim);
  data.y.resize(data.x.rows());

  std::size_t row = 0;
  std::vector<double> z(spec.input_dim);
  for (std::size_t c = 0; c < spec.num_classes(); ++c) {
    for (std::size_t k = 0; k < spec.samples_per_class; ++k, ++row) {
      // z ~ N(mean_c, cov^2 I), then x = A z + b + noise.
      for (std::size_t j = 0; j < spec.input_dim; ++j) {
        z[j] = spec.class_means(c, j) + spec.class_cov_scale * rng.gaussian();
      }
      auto out = data.x.row_span(row);
      for (std::size_t j = 0; j < spec.input_dim; ++j) {
        double acc = spec.transform_b(0, j);
        for (std::size_t i = 0; i < spec.input_dim; ++i) acc += z[i] * spec.transform_a(i, j);
        out[j] = acc;
      }
      if (spec.noise_sigma > 0.0) {
        for (std::size_t j = 0; j < spec.input_dim; ++j) {
          out[j] += spec.noise_sigma * rng.gaussian();
        }
      }
      data.y[row] = spec.class_ids[c];
    }
  }
  return data;
}

Episode Episode::make(Matrix support_x, std::vector<int> support_y, Matrix query_x,
                      std::vector<int> query_y, std::size_t way, std::size_t shot,
                      std::size_t queries_per_class) {
  if (support_x.rows() != support_y.size() || query_x.rows() != query_y.size()) {
    throw DimensionError("Episode: label counts do not match row counts");
  }
  if (support_x.rows() != way * shot || query_x.rows() != way * queries_per_class) {
    throw DimensionError("Episode: row counts do not match way/shot/queries");
  }
  for (int y : support_y) {
    if (y < 0 || static_cast<std::size_t>(y) >= way) {
      throw DimensionError("Episode: support label outside [0, way)");
    }
  }
  for (int y : query_y) {
    if (y < 0 || static_cast<std::size_t>(y) >= way) {
      throw DimensionError("Episode: query label outside [0, way)");
    }
  }
  Episode ep;
  ep.support_x_ = std::move(support_x);
  ep.support_y_ = std::move(support_y);
  ep.query_x_ = std::move(query_x);
  ep.query_y_ = std::move(query_y);
  ep.way_ = way;
  ep.shot_ = shot;
  ep.queries_per_class_ = queries_per_class;
  return ep;
}

std::vector<std::size_t> Episode::query_class_counts() const {
  std::vector<std::size_t> counts(way_, 0);
  for (int y : query_y_) counts[static_cast<std::size_t>(y)]++;
  return counts;
}

Episode sample_episode(const DomainSpec& spec, std::size_t way, std::size_t shot,
                       std::size_t queries, std::uint64_t seed) {
  if (way == 0 || shot == 0 || queries == 0) {
    throw DimensionError("sample_episode: way/shot/queries must be positive");
  }
  if (way > spec.num_classes()) {
    throw DimensionError("sample_episode: domain has only " +
                         std::to_string(spec.num_classes()) + " classes for a " +
                         std::to_string(way) + "-way episode");
  }
  if (shot + queries > spec.samples_per_class) {
    throw DimensionError("sample_episode: domain stores " +
                         std::to_string(spec.samples_per_class) +
                         " rows per class; episode needs " + std::to_string(shot + queries));
  }

  const Dataset data = materialize(spec);
  Rng rng(derive_seed(seed, "episode"));

  // Draw `way` distinct classes.
  std::vector<std::size_t> class_order(spec.num_classes());
  for (std::size_t i = 0; i < class_order.size(); ++i) class_order[i] = i;
  rng.shuffle(class_order);
  class_order.resize(way);

  Matrix support_x(way * shot, spec.input_dim);
  Matrix query_x(way * queries, spec.input_dim);
  std::vector<int> support_y(way * shot);
  std::vector<int> query_y(way * queries);
  std::vector<std::size_t> support_rows;
  std::vector<std::size_t> query_rows;

  for (std::size_t local = 0; local < way; ++local) {
    const std::size_t c = class_order[local];
    // Rows of class c occupy a contiguous block in materialize() output.
    std::vector<std::size_t> rows(spec.samples_per_class);
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = c * spec.samples_per_class + k;
    rng.shuffle(rows);

    for (std::size_t k = 0; k < shot; ++k) {
      const std::size_t src = rows[k];
      const std::size_t dst = local * shot + k;
      auto in = data.x.row_span(src);
      std::copy(in.begin(), in.end(), support_x.row_span(dst).begin());
      support_y[dst] = static_cast<int>(local);
      support_rows.push_back(src);
    }
    for (std::size_t k = 0; k < queries; ++k) {
      const std::size_t src = rows[shot + k];
      const std::size_t dst = local * queries + k;
      auto in = data.x.row_span(src);
      std::copy(in.begin(), in.end(), query_x.row_span(dst).begin());
      query_y[dst] = static_cast<int>(local);
      query_rows.push_back(src);
    }
  }

  Episode ep = Episode::make(std::move(support_x), std::move(support_y), std::move(query_x),
                             std::move(query_y), way, shot, queries);
  ep.support_row_ids = std::move(support_rows);
  ep.query_row_ids = std::move(query_rows);
  ep.sampled_class_ids.reserve(way);
  for (std::size_t local = 0; local < way; ++local) {
    ep.sampled_class_ids.push_back(spec.class_ids[class_order[local]]);
  }
  return ep;
}

Matrix jitter(const Matrix& x, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw DimensionError("jitter: sigma must be non-negative");
  if (sigma == 0.0) return x;
  Rng rng(derive_seed(seed, "jitter"));
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += sigma * rng.gaussian();
  return out;
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  out << "class,id";
  for (std::size_t j = 0; j < dataset.x.cols(); ++j) out << ",x" << j;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < dataset.rows(); ++i) {
    out << dataset.y[i] << "," << i;
    for (double v : dataset.x.row_span(i)) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);

  std::size_t cols = 0;
  for (char c : line) cols += c == ',' ? 1 : 0;
  if (cols < 2) throw std::runtime_error("read_dataset_csv: malformed header in " + path);
  cols -= 1;  // drop the class and id columns, count feature columns

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) break;
    labels.push_back(std::stoi(cell));
    std::getline(ss, cell, ',');  // id column, positional anyway
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++got;
    }
    if (got != cols) {
      throw std::runtime_error("read_dataset_csv: row " + std::to_string(rows) + " has " +
                               std::to_string(got) + " features, expected " +
                               std::to_string(cols));
    }
    ++rows;
  }

  Dataset data;
  data.x = Matrix(rows, cols);
  std::copy(values.begin(), values.end(), data.x.data());
  data.y = std::move(labels);
  return data;
}

}  // namespace imdcl

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace imdcl {

struct GradSuiteEntry {
  std::string name;
  std::size_t instances = 0;
  double max_rel_err = 0.0;
};

// Gradient-fidelity audit: for every loss in the library, builds randomized
// small instances, differentiates them with the graph engine, and compares
// every parameter entry against central finite differences. Covers the
// supervised loss, the three IM components, the contrastive loss under all
// three weight schemes (logistic steepness/midpoint included), and the two
// composite phase objectives. Deterministic in seed.
std::vector<GradSuiteEntry> run_gradcheck_suite(std::size_t instances_per_loss = 20,
                                                std::uint64_t seed = 99,
                                                double eps = 1e-5);

// Largest max_rel_err across entries.
double worst_rel_err(const std::vector<GradSuiteEntry>& entries);

}  // namespace imdcl

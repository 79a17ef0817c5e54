#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace medttt {

struct CheckResult {
  std::string name;
  bool pass = false;
  double max_dev = 0.0;
  double tolerance = 0.0;
  std::uint64_t failing_seed = 0;  // seed of the first failing instance
};

struct OracleSuiteOptions {
  std::size_t instances = 100;
  std::uint64_t seed = 42;
  // Negative controls: a positive inject_eta replaces the eta = 1/2 of the
  // linear-attention equivalence; inject_scale_mismatch feeds mismatched
  // sqrt(d_k) flags into the NW/softmax comparison.
  double inject_eta = -1.0;
  bool inject_scale_mismatch = false;
};

// Seeded random-instance equivalence and property checks for the TTT layer
// against the naive attention oracles.
std::vector<CheckResult> run_oracle_suite(const OracleSuiteOptions& opt);

}  // namespace medttt

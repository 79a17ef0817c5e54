#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace medttt {

struct BenchRecord {
  std::string impl;  // ttt_minibatch | ttt_online | linear_attn | softmax_attn
  std::size_t tokens = 0;
  std::size_t minibatch_b = 0;
  std::uint64_t wall_ns = 0;  // median of `reps` runs after warm-up
};

struct BenchConfig {
  std::vector<std::string> impls = {"ttt_minibatch", "softmax_attn"};
  std::vector<std::size_t> token_counts;
  std::size_t minibatch_b = 16;
  std::size_t d_model = 16;
  std::size_t reps = 5;
  std::size_t warmup = 2;
  std::uint64_t seed = 1;
};

struct BenchOutput {
  std::vector<BenchRecord> records;
  std::map<std::string, double> slopes;  // log-log least-squares slope per impl
};

// Times forward passes only (inputs are generated outside the timed region)
// and fits the slope of log(wall) vs log(T) per implementation.
BenchOutput run_bench(const BenchConfig& cfg);

double fit_loglog_slope(const std::vector<std::pair<double, double>>& pts);

// Output deviation between mini-batch sizes b and 2b on the same tokens.
struct MinibatchSensitivity {
  double dev_grads_at_init = 0.0;  // must be ~0: b cannot matter at W0
  double dev_standard = 0.0;       // must be > 0: outputs legitimately differ
};
MinibatchSensitivity minibatch_b_sensitivity(std::size_t tokens,
                                             std::size_t b, std::size_t d,
                                             std::uint64_t seed);

std::string bench_csv(const BenchOutput& out);

}  // namespace medttt

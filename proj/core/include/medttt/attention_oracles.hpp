#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace medttt::oracle {

// Deliberately naive O(T^2) reference implementations used as ground truth
// for the TTT layer property tests. Plain scalar loops, no tensor machinery.

using Vec = std::vector<double>;
using Mat = std::vector<double>;  // row-major d x d

struct Projections {
  Mat theta_k, theta_v, theta_q;
  std::size_t d = 0;
};

struct OracleConfig {
  std::size_t d_model = 0;
  bool scale_by_sqrt_dk = true;  // divide kernel/attention logits by sqrt(d_k)
};

// Causal linear attention: z_t = sum_{s<=t} (V x_s)(K x_s)^T (Q x_t).
std::vector<Vec> linear_attention(const std::vector<Vec>& seq,
                                  const Projections& proj);

// Causal softmax attention: z_t = sum_{s<=t} softmax_s((K x_s)^T (Q x_t) /
// sqrt(d_k)) V x_s; the sqrt(d_k) divisor follows cfg.scale_by_sqrt_dk.
std::vector<Vec> softmax_attention(const std::vector<Vec>& seq,
                                   const Projections& proj,
                                   const OracleConfig& cfg);

// Nadaraya-Watson estimator with kernel k(x, x_s) = exp((K x_s)^T (Q x)),
// y_s = V x_s, evaluated at x = x_t per position. The denominator is a sum of
// exponentials and cannot vanish.
std::vector<Vec> nadaraya_watson(const std::vector<Vec>& seq,
                                 const Projections& proj,
                                 const OracleConfig& cfg);

Projections identity_projections(std::size_t d);
Projections random_projections(std::size_t d, std::uint64_t seed,
                               double stddev = 0.5);
std::vector<Vec> random_sequence(std::size_t t, std::size_t d,
                                 std::uint64_t seed);

}  // namespace medttt::oracle

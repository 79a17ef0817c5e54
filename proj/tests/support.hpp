#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "medttt/tensor.hpp"

namespace testsupport {

// Central finite differences of a scalar-valued rebuild function w.r.t. one
// leaf tensor. `rebuild` must re-run the forward pass from the leaf's current
// values.
inline std::vector<double> fd_grad(medttt::Tensor leaf,
                                   const std::function<double()>& rebuild,
                                   double h = 1e-5) {
  std::vector<double> base = leaf.values();
  std::vector<double> g(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> v = base;
    v[i] = base[i] + h;
    leaf.set_values(v);
    double fp = rebuild();
    v[i] = base[i] - h;
    leaf.set_values(v);
    double fm = rebuild();
    g[i] = (fp - fm) / (2 * h);
  }
  leaf.set_values(base);
  return g;
}

// Max relative deviation, with an absolute floor for near-zero entries.
inline double max_rel_dev(const std::vector<double>& a,
                          const std::vector<double>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline double max_abs_dev(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline medttt::Tensor random_tensor(medttt::Shape shape, std::uint64_t seed,
                                    bool requires_grad = false,
                                    double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> d(medttt::shape_size(shape));
  for (auto& v : d) v = dist(rng);
  return medttt::Tensor(std::move(shape), std::move(d), requires_grad);
}

}  // namespace testsupport

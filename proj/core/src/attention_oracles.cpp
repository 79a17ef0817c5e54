#include "medttt/attention_oracles.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace medttt::oracle {

namespace {

Vec matvec(const Mat& m, const Vec& x, std::size_t d) {
  Vec y(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i] += m[i * d + j] * x[j];
  return y;
}

double dotv(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<Vec> linear_attention(const std::vector<Vec>& seq,
                                  const Projections& proj) {
  std::size_t d = proj.d;
  std::vector<Vec> z(seq.size(), Vec(d, 0.0));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    Vec q = matvec(proj.theta_q, seq[t], d);
    for (std::size_t s = 0; s <= t; ++s) {
      Vec k = matvec(proj.theta_k, seq[s], d);
      Vec v = matvec(proj.theta_v, seq[s], d);
      double w = dotv(k, q);
      for (std::size_t i = 0; i < d; ++i) z[t][i] += v[i] * w;
    }
  }
  return z;
}

std::vector<Vec> softmax_attention(const std::vector<Vec>& seq,
                                   const Projections& proj,
                                   const OracleConfig& cfg) {
  std::size_t d = proj.d;
  double scale = cfg.scale_by_sqrt_dk ? 1.0 / std::sqrt(double(d)) : 1.0;
  std::vector<Vec> z(seq.size(), Vec(d, 0.0));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    Vec q = matvec(proj.theta_q, seq[t], d);
    std::vector<double> logits(t + 1);
    double mx = -1e300;
    for (std::size_t s = 0; s <= t; ++s) {
      Vec k = matvec(proj.theta_k, seq[s], d);
      logits[s] = dotv(k, q) * scale;
      mx = std::max(mx, logits[s]);
    }
    double denom = 0.0;
    for (std::size_t s = 0; s <= t; ++s) {
      logits[s] = std::exp(logits[s] - mx);
      denom += logits[s];
    }
    for (std::size_t s = 0; s <= t; ++s) {
      Vec v = matvec(proj.theta_v, seq[s], d);
      double w = logits[s] / denom;
      for (std::size_t i = 0; i < d; ++i) z[t][i] += w * v[i];
    }
  }
  return z;
}

std::vector<Vec> nadaraya_watson(const std::vector<Vec>& seq,
                                 const Projections& proj,
                                 const OracleConfig& cfg) {
  std::size_t d = proj.d;
  double scale = cfg.scale_by_sqrt_dk ? 1.0 / std::sqrt(double(d)) : 1.0;
  std::vector<Vec> z(seq.size(), Vec(d, 0.0));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    // kappa(x, x_s) = exp((K x_s)^T (Q x)) with x = x_t; shifting all logits
    // by the max leaves the ratio unchanged.
    Vec q = matvec(proj.theta_q, seq[t], d);
    std::vector<double> logk(t + 1);
    double mx = -1e300;
    for (std::size_t s = 0; s <= t; ++s) {
      Vec k = matvec(proj.theta_k, seq[s], d);
      logk[s] = dotv(k, q) * scale;
      mx = std::max(mx, logk[s]);
    }
    Vec num(d, 0.0);
    double den = 0.0;
    for (std::size_t s = 0; s <= t; ++s) {
      double kappa = std::exp(logk[s] - mx);
      Vec y = matvec(proj.theta_v, seq[s], d);
      for (std::size_t i = 0; i < d; ++i) num[i] += kappa * y[i];
      den += kappa;
    }
    for (std::size_t i = 0; i < d; ++i) z[t][i] = num[i] / den;
  }
  return z;
}

Projections identity_projections(std::size_t d) {
  Projections p;
  p.d = d;
  p.theta_k.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) p.theta_k[i * d + i] = 1.0;
  p.theta_v = p.theta_k;
  p.theta_q = p.theta_k;
  return p;
}

Projections random_projections(std::size_t d, std::uint64_t seed,
                               double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  Projections p;
  p.d = d;
  p.theta_k.resize(d * d);
  p.theta_v.resize(d * d);
  p.theta_q.resize(d * d);
  for (auto& v : p.theta_k) v = dist(rng);
  for (auto& v : p.theta_v) v = dist(rng);
  for (auto& v : p.theta_q) v = dist(rng);
  return p;
}

std::vector<Vec> random_sequence(std::size_t t, std::size_t d,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<Vec> seq(t, Vec(d));
  for (auto& x : seq)
    for (auto& v : x) v = dist(rng);
  return seq;
}

}  // namespace medttt::oracle

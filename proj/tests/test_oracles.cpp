#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "medttt/attention_oracles.hpp"
#include "medttt/oracle_suite.hpp"

using namespace medttt::oracle;

namespace {

double max_dev(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double worst = 0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i)
      worst = std::max(worst, std::abs(a[t][i] - b[t][i]));
  return worst;
}

}  // namespace

TEST_CASE("linear attention T=1 identity projections") {
  Projections proj = identity_projections(2);
  std::vector<Vec> seq = {{1, 0}};
  auto z = linear_attention(seq, proj);
  CHECK(z[0] == Vec{1, 0});
}

TEST_CASE("linear attention orthogonal tokens hand sum") {
  Projections proj = identity_projections(2);
  std::vector<Vec> seq = {{1, 0}, {0, 1}};
  auto z = linear_attention(seq, proj);
  CHECK(std::abs(z[1][0]) < 1e-12);
  CHECK(std::abs(z[1][1] - 1.0) < 1e-12);
}

TEST_CASE("softmax attention T=1 returns the value view") {
  Projections proj = random_projections(4, 3);
  OracleConfig cfg{4, true};
  auto seq = random_sequence(1, 4, 4);
  auto z = softmax_attention(seq, proj, cfg);
  Vec vx(4, 0.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      vx[r] += proj.theta_v[r * 4 + c] * seq[0][c];
  for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(z[0][r] - vx[r]) < 1e-12);
}

TEST_CASE("softmax attention: two identical tokens give the same output") {
  Projections proj = random_projections(3, 5);
  OracleConfig cfg{3, true};
  auto one = random_sequence(1, 3, 6);
  std::vector<Vec> seq = {one[0], one[0]};
  auto z = softmax_attention(seq, proj, cfg);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(z[1][i] - z[0][i]) < 1e-12);
}

TEST_CASE("nadaraya-watson t=1 returns y_1; constant kernel averages") {
  Projections proj = random_projections(3, 7);
  OracleConfig cfg{3, false};
  auto seq = random_sequence(4, 3, 8);
  auto z = nadaraya_watson(seq, proj, cfg);
  Vec y1(3, 0.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      y1[r] += proj.theta_v[r * 3 + c] * seq[0][c];
  for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(z[0][r] - y1[r]) < 1e-12);

  Projections flat = proj;
  std::fill(flat.theta_k.begin(), flat.theta_k.end(), 0.0);
  auto zf = nadaraya_watson(seq, flat, cfg);
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0;
    for (std::size_t t = 0; t < 4; ++t) {
      double ys = 0;
      for (std::size_t c = 0; c < 3; ++c)
        ys += flat.theta_v[r * 3 + c] * seq[t][c];
      mean += ys;
    }
    mean /= 4;
    CHECK(std::abs(zf[3][r] - mean) < 1e-12);
  }
}

TEST_CASE("NW equals softmax attention with matched scaling") {
  for (int t = 0; t < 50; ++t) {
    Projections proj = random_projections(4, 100 + t);
    auto seq = random_sequence(16, 4, 200 + t);
    for (bool scale : {false, true}) {
      OracleConfig cfg{4, scale};
      CHECK(max_dev(nadaraya_watson(seq, proj, cfg),
                    softmax_attention(seq, proj, cfg)) < 1e-12);
    }
  }
}

TEST_CASE("NW differs from softmax attention under mismatched scaling") {
  Projections proj = random_projections(4, 301);
  auto seq = random_sequence(16, 4, 302);
  double dev = max_dev(nadaraya_watson(seq, proj, OracleConfig{4, false}),
                       softmax_attention(seq, proj, OracleConfig{4, true}));
  CHECK(dev > 1e-6);
}

TEST_CASE("causal permutation covariance of linear attention") {
  Projections proj = random_projections(4, 401);
  auto seq = random_sequence(10, 4, 402);
  auto z = linear_attention(seq, proj);
  auto perm = seq;
  std::swap(perm[7], perm[9]);
  std::swap(perm[6], perm[8]);
  auto zp = linear_attention(perm, proj);
  for (std::size_t t = 0; t <= 5; ++t)
    for (std::size_t i = 0; i < 4; ++i) CHECK(z[t][i] == zp[t][i]);
}

TEST_CASE("oracle suite passes with defaults") {
  medttt::OracleSuiteOptions opt;
  opt.instances = 20;
  auto results = medttt::run_oracle_suite(opt);
  REQUIRE(!results.empty());
  for (const auto& r : results) {
    INFO(r.name, " dev ", r.max_dev, " seed ", r.failing_seed);
    CHECK(r.pass);
  }
}

TEST_CASE("negative control: injected eta=0.4 breaks the equivalence") {
  medttt::OracleSuiteOptions opt;
  opt.instances = 5;
  opt.inject_eta = 0.4;
  auto results = medttt::run_oracle_suite(opt);
  bool linear_failed = false;
  for (const auto& r : results)
    if (r.name.find("linear_attention") != std::string::npos && !r.pass)
      linear_failed = true;
  CHECK(linear_failed);
}

TEST_CASE("negative control: scale mismatch breaks NW/softmax") {
  medttt::OracleSuiteOptions opt;
  opt.instances = 5;
  opt.inject_scale_mismatch = true;
  auto results = medttt::run_oracle_suite(opt);
  bool nw_failed = false;
  for (const auto& r : results)
    if (r.name.find("nadaraya") != std::string::npos && !r.pass)
      nw_failed = true;
  CHECK(nw_failed);
}

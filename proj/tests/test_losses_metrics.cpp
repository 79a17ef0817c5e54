#include <doctest.h>

#include <cmath>
#include <random>

#include "medttt/losses.hpp"
#include "medttt/metrics.hpp"
#include "support.hpp"

using namespace medttt;
using testsupport::fd_grad;
using testsupport::max_rel_dev;
using testsupport::random_tensor;

TEST_CASE("perfect all-ones prediction: combined loss near zero") {
  Tensor probs({4, 4}, std::vector<double>(16, 1.0));
  Tensor targets({4, 4}, std::vector<double>(16, 1.0));
  LossConfig cfg;
  CHECK(dice_loss(probs, targets, cfg.epsilon).value() ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(combined_loss(probs, targets, cfg).value() < 1e-5);
}

TEST_CASE("total miss: dice loss near one") {
  Tensor probs({4, 4}, std::vector<double>(16, 0.0));
  Tensor targets({4, 4}, std::vector<double>(16, 1.0));
  CHECK(dice_loss(probs, targets, 1e-6).value() ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("alpha=0 with p=0.5 everywhere gives BCE = ln 2") {
  std::mt19937_64 rng(5);
  std::vector<double> t(64);
  for (auto& v : t) v = double(rng() % 2);
  Tensor probs({8, 8}, std::vector<double>(64, 0.5));
  Tensor targets({8, 8}, t);
  LossConfig cfg;
  cfg.alpha = 0.0;
  CHECK(std::abs(combined_loss(probs, targets, cfg).value() - std::log(2.0)) <
        1e-9);
}

TEST_CASE("loss bounds") {
  for (int trial = 0; trial < 20; ++trial) {
    Tensor probs = random_tensor({6, 6}, 100 + trial, false, 0.01, 0.99);
    std::mt19937_64 rng(200 + trial);
    std::vector<double> t(36);
    for (auto& v : t) v = double(rng() % 2);
    Tensor targets({6, 6}, t);
    double dl = dice_loss(probs, targets, 1e-6).value();
    CHECK(dl >= 0.0);
    CHECK(dl <= 1.0);
    CHECK(combined_loss(probs, targets, {}).value() >= 0.0);
  }
}

TEST_CASE("flipping a correct foreground pixel never decreases dice loss") {
  std::vector<double> t(16, 0.0);
  t[3] = t[7] = t[9] = 1.0;
  Tensor targets({4, 4}, t);
  std::vector<double> p = t;
  Tensor probs({4, 4}, p);
  double base = dice_loss(probs, targets, 1e-6).value();
  p[7] = 0.0;  // drop one true positive
  double flipped = dice_loss(Tensor({4, 4}, p), targets, 1e-6).value();
  CHECK(flipped >= base);
}

TEST_CASE("batch-level dice equals per-sample dice for B=1") {
  Tensor probs = random_tensor({5, 5}, 7, false, 0.05, 0.95);
  std::mt19937_64 rng(8);
  std::vector<double> t(25);
  for (auto& v : t) v = double(rng() % 2);
  Tensor targets({5, 5}, t);
  double sp = 0, st = 0, spt = 0;
  for (std::size_t i = 0; i < 25; ++i) {
    sp += probs.at(i);
    st += t[i];
    spt += probs.at(i) * t[i];
  }
  double expect = 1.0 - 2.0 * spt / (sp + st + 1e-6);
  CHECK(std::abs(dice_loss(probs, targets, 1e-6).value() - expect) < 1e-12);
}

TEST_CASE("combined loss gradient matches finite differences") {
  Tensor probs = random_tensor({4, 4}, 9, true, 0.05, 0.95);
  std::mt19937_64 rng(10);
  std::vector<double> t(16);
  for (auto& v : t) v = double(rng() % 2);
  Tensor targets({4, 4}, t);
  LossConfig cfg;
  backward(combined_loss(probs, targets, cfg));
  auto loss = [&] { return combined_loss(probs, targets, cfg).value(); };
  CHECK(max_rel_dev(probs.grad(), fd_grad(probs, loss)) < 1e-5);
}

TEST_CASE("non-binary targets rejected") {
  Tensor probs({2}, {0.5, 0.5});
  Tensor targets({2}, {0.3, 1.0});
  CHECK_THROWS_AS(combined_loss(probs, targets, {}), DomainError);
}

TEST_CASE("loss shape mismatch") {
  Tensor probs({2, 2}, std::vector<double>(4, 0.5));
  Tensor targets({2}, {1, 0});
  CHECK_THROWS_AS(combined_loss(probs, targets, {}), ShapeError);
}

TEST_CASE("confusion basics") {
  ConfusionMatrix eq = confusion({1, 0, 1, 0}, {1, 0, 1, 0});
  CHECK(eq.fp == 0);
  CHECK(eq.fn == 0);
  ConfusionMatrix inv = confusion({1, 0}, {0, 1});
  CHECK(inv.tp == 0);
  CHECK(inv.tn == 0);
  ConfusionMatrix hand = confusion({1, 0, 0, 1}, {1, 1, 0, 0});
  CHECK(hand.tp == 1);
  CHECK(hand.fp == 1);
  CHECK(hand.fn == 1);
  CHECK(hand.tn == 1);
}

TEST_CASE("metrics: perfect prediction") {
  MetricsReport r = metrics(ConfusionMatrix{10, 0, 20, 0});
  CHECK(r.acc == 100.0);
  CHECK(r.dsc == 100.0);
  CHECK(r.sen == 100.0);
  CHECK(r.spe == 100.0);
  CHECK(r.miou == 100.0);
}

TEST_CASE("metrics: hand 2x2 case") {
  MetricsReport r = metrics(ConfusionMatrix{1, 1, 1, 1});
  CHECK(r.acc == doctest::Approx(50.0));
  CHECK(r.dsc == doctest::Approx(50.0));
  CHECK(r.sen == doctest::Approx(50.0));
  CHECK(r.spe == doctest::Approx(50.0));
  CHECK(r.miou == doctest::Approx(100.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("metrics: absent-class rule") {
  MetricsReport r = metrics(ConfusionMatrix{0, 0, 16, 0});
  CHECK(r.acc == 100.0);
  CHECK(r.sen == 100.0);
  CHECK(r.spe == 100.0);
  CHECK(r.dsc == 100.0);
  // absent foreground mispredicted: sensitivity collapses to 0
  MetricsReport bad = metrics(ConfusionMatrix{0, 3, 13, 0});
  CHECK(bad.sen == 0.0);
  CHECK(bad.dsc == 0.0);
}

TEST_CASE("metrics: empty matrix rejected") {
  CHECK_THROWS_AS(metrics(ConfusionMatrix{}), ContractError);
}

TEST_CASE("DSC-IoU identity on random matrices") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 1000; ++t) {
    ConfusionMatrix cm{rng() % 100, rng() % 100, rng() % 100, rng() % 100};
    if (cm.total() == 0) continue;
    MetricsReport r = metrics(cm);
    double denom = double(cm.tp + cm.fp + cm.fn);
    if (denom == 0) continue;
    double iou_fg = double(cm.tp) / denom;
    CHECK(std::abs(r.dsc - 200.0 * iou_fg / (1.0 + iou_fg)) < 1e-9);
  }
}

TEST_CASE("metrics CSV format") {
  CHECK(metrics_csv_header() == "dataset,split,setting,miou,dsc,acc,spe,sen");
  MetricsReport r = metrics(ConfusionMatrix{1, 1, 1, 1});
  CHECK(metrics_csv_row("synth", "test", "full", r) ==
        "synth,test,full,33.33,50.00,50.00,50.00,50.00");
}

TEST_CASE("confusion matrices merge associatively") {
  ConfusionMatrix a{1, 2, 3, 4}, b{5, 6, 7, 8};
  ConfusionMatrix ab = a;
  ab += b;
  CHECK(ab.tp == 6);
  CHECK(ab.total() == a.total() + b.total());
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "medttt/config.hpp"
#include "medttt/model.hpp"
#include "support.hpp"

using namespace medttt;
using testsupport::fd_grad;
using testsupport::max_rel_dev;
using testsupport::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.tile = 2;
  cfg.n_ttt = 1;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("ablation settings toggle the expected branches") {
  ModelConfig i = ablation_setting("I");
  CHECK_FALSE(i.use_mr_block);
  CHECK_FALSE(i.use_fff);
  CHECK(i.use_ttt);
  ModelConfig ii = ablation_setting("II");
  CHECK(ii.use_mr_block);
  CHECK_FALSE(ii.use_fff);
  CHECK(ii.use_ttt);
  ModelConfig iii = ablation_setting("III");
  CHECK_FALSE(iii.use_mr_block);
  CHECK(iii.use_fff);
  CHECK(iii.use_ttt);
  ModelConfig full = ablation_setting("full");
  CHECK(full.use_mr_block);
  CHECK(full.use_fff);
  CHECK(full.use_ttt);
  CHECK_THROWS_AS(ablation_setting("IV"), ConfigError);
}

TEST_CASE("build is deterministic: same seed, bitwise-identical parameters") {
  ModelConfig cfg = tiny_config();
  Model a = Model::build(cfg);
  Model b = Model::build(cfg);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].first == b.parameters()[i].first);
    CHECK(a.parameters()[i].second.values() ==
          b.parameters()[i].second.values());
  }
}

TEST_CASE("forward shape and probability range") {
  Model m = Model::build(tiny_config());
  Tensor img = random_tensor({1, 16, 16}, 4, false, 0.0, 1.0);
  SegmentationOutput out = m.forward(img);
  CHECK(out.probs.shape() == Shape{16, 16});
  CHECK(out.logits.shape() == Shape{16, 16});
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    CHECK(out.probs.at(i) >= 0.0);
    CHECK(out.probs.at(i) <= 1.0);
  }
}

TEST_CASE("all-zero input with a zeroed head gives probs 0.5") {
  Model m = Model::build(tiny_config());
  Tensor hk = m.param("head.kernel");
  hk.set_values(std::vector<double>(hk.size(), 0.0));
  Tensor hb = m.param("head.bias");
  hb.set_values(std::vector<double>(hb.size(), 0.0));
  Tensor img = Tensor::zeros({1, 16, 16});
  SegmentationOutput out = m.forward(img);
  for (std::size_t i = 0; i < out.probs.size(); ++i)
    CHECK(out.probs.at(i) == 0.5);
}

TEST_CASE("indivisible extents rejected") {
  Model m = Model::build(tiny_config());  // quantum = 4*2 = 8
  Tensor img = Tensor::zeros({1, 12, 16});
  CHECK_THROWS_AS(m.forward(img), ConfigError);
}

TEST_CASE("disabling a branch changes parameter count, not output shape") {
  ModelConfig base = tiny_config();
  Model full = Model::build(ablation_setting("full", base));
  Model s1 = Model::build(ablation_setting("I", base));
  Model s3 = Model::build(ablation_setting("III", base));
  CHECK(full.parameter_count() != s1.parameter_count());
  CHECK(full.parameter_count() != s3.parameter_count());
  Tensor img = random_tensor({1, 16, 16}, 5, false, 0.0, 1.0);
  CHECK(full.forward(img).probs.shape() == Shape{16, 16});
  CHECK(s1.forward(img).probs.shape() == Shape{16, 16});
  CHECK(s3.forward(img).probs.shape() == Shape{16, 16});
}

TEST_CASE("no feature path at all is rejected") {
  ModelConfig cfg = tiny_config();
  cfg.use_mr_block = cfg.use_fff = cfg.use_ttt = false;
  CHECK_THROWS_AS(Model::build(cfg), ConfigError);
}

TEST_CASE("every trainable parameter receives a nonzero gradient") {
  ModelConfig cfg = tiny_config();
  Model m = Model::build(cfg);
  Tensor img = random_tensor({1, 16, 16}, 6, false, 0.0, 1.0);
  std::vector<double> t(16 * 16, 0.0);
  for (std::size_t i = 0; i < t.size(); i += 3) t[i] = 1.0;
  Tensor targets({16, 16}, t);
  SegmentationOutput out = m.forward(img);
  backward(combined_loss(out.probs, targets, {}));
  for (const auto& [name, p] : m.parameters()) {
    INFO("parameter ", name);
    REQUIRE(p.has_grad());
    double mag = 0;
    for (double g : p.grad()) mag += std::abs(g);
    CHECK(mag > 0.0);
  }
}

TEST_CASE("outer gradient of the combined loss w.r.t. theta_K, 16x16 model") {
  ModelConfig cfg = tiny_config();
  Model m = Model::build(cfg);
  Tensor img = random_tensor({1, 16, 16}, 7, false, 0.0, 1.0);
  std::vector<double> t(16 * 16, 0.0);
  for (std::size_t i = 100; i < 140; ++i) t[i] = 1.0;
  Tensor targets({16, 16}, t);
  auto loss = [&] {
    return combined_loss(m.forward(img).probs, targets, {}).value();
  };
  Tensor theta_k = m.param("ttt0.theta_k");
  m.clear_grads();
  backward(combined_loss(m.forward(img).probs, targets, {}));
  // finite differences over a subset of entries keeps this test fast
  std::vector<double> base = theta_k.values();
  const auto& g = theta_k.grad();
  double worst = 0;
  for (std::size_t i = 0; i < theta_k.size(); i += 13) {
    double h = 1e-5;
    std::vector<double> v = base;
    v[i] = base[i] + h;
    theta_k.set_values(v);
    double fp = loss();
    v[i] = base[i] - h;
    theta_k.set_values(v);
    double fm = loss();
    theta_k.set_values(base);
    double fd = (fp - fm) / (2 * h);
    double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-5});
    worst = std::max(worst, std::abs(fd - g[i]) / scale);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("summary json lists the parameter manifest") {
  Model m = Model::build(tiny_config());
  auto j = nlohmann::json::parse(m.summary_json());
  CHECK(j["parameter_count"] == m.parameter_count());
  CHECK(j["parameters"].size() == m.parameters().size());
  std::set<std::string> names;
  for (const auto& p : j["parameters"]) names.insert(p["name"]);
  CHECK(names.count("head.kernel") == 1);
  CHECK(names.count("ttt0.theta_k") == 1);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  ModelConfig cfg = tiny_config();
  Model m = Model::build(cfg);
  fs::path dir = fs::temp_directory_path() / "medttt_test_ckpt";
  fs::create_directories(dir);
  std::string path = (dir / "m.mttt").string();
  save_checkpoint(m, path);

  ModelConfig other = cfg;
  other.seed = 99;
  Model m2 = Model::build(other);
  load_checkpoint(m2, path);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    CHECK(m.parameters()[i].second.values() ==
          m2.parameters()[i].second.values());

  std::string path2 = (dir / "m2.mttt").string();
  save_checkpoint(m2, path2);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa(std::istreambuf_iterator<char>(a), {});
  std::string sb(std::istreambuf_iterator<char>(b), {});
  CHECK(sa == sb);
  CHECK(sa.substr(0, 4) == "MTTT");
  fs::remove_all(dir);
}

TEST_CASE("checkpoint/config mismatch rejected") {
  ModelConfig cfg = tiny_config();
  Model m = Model::build(cfg);
  fs::path dir = fs::temp_directory_path() / "medttt_test_ckpt2";
  fs::create_directories(dir);
  std::string path = (dir / "m.mttt").string();
  save_checkpoint(m, path);
  Model other = Model::build(ablation_setting("I", cfg));
  CHECK_THROWS_AS(load_checkpoint(other, path), DataError);
  fs::remove_all(dir);
}

TEST_CASE("run config parsing: overrides, settings, seed threading") {
  nlohmann::json j = {
      {"seed", 11},
      {"setting", "II"},
      {"model", {{"base_channels", 8}, {"tile", 2}}},
      {"train", {{"epochs", 3}, {"lr", 0.5}}},
  };
  RunConfig c = parse_run_config(j);
  CHECK(c.seed == 11);
  CHECK(c.model.seed == 11);
  CHECK(c.train.seed == 11);
  CHECK(c.model.use_mr_block);
  CHECK_FALSE(c.model.use_fff);
  CHECK(c.model.base_channels == 8);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.lr == 0.5);
  // explicit flags win over the named setting
  j["model"]["use_fff"] = true;
  CHECK(parse_run_config(j).model.use_fff);
  // echo round-trips
  RunConfig back = parse_run_config(run_config_json(c));
  CHECK(back.model.base_channels == c.model.base_channels);
  CHECK(back.setting == c.setting);
  j["setting"] = "V";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

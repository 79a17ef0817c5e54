#include "medttt/config.hpp"

namespace medttt {

namespace {

using nlohmann::json;

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::string hidden_model_name(HiddenModel m) {
  return m == HiddenModel::kLinear ? "linear" : "mlp";
}

HiddenModel hidden_model_of(const std::string& s) {
  if (s == "linear") return HiddenModel::kLinear;
  if (s == "mlp") return HiddenModel::kMlp;
  throw ConfigError("unknown hidden_model '" + s + "'");
}

std::string mode_name(TttMode m) {
  switch (m) {
    case TttMode::kOnline:
      return "online";
    case TttMode::kBatchAtInit:
      return "batch_at_init";
    case TttMode::kMinibatch:
      return "minibatch";
  }
  return "minibatch";
}

TttMode mode_of(const std::string& s) {
  if (s == "online") return TttMode::kOnline;
  if (s == "batch_at_init") return TttMode::kBatchAtInit;
  if (s == "minibatch") return TttMode::kMinibatch;
  throw ConfigError("unknown ttt mode '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  get_to(j, "seed", c.seed);
  get_to(j, "out", c.out_dir);
  get_to(j, "manifest", c.manifest);
  get_to(j, "checkpoint", c.checkpoint);
  get_to(j, "split", c.split);
  get_to(j, "setting", c.setting);
  get_to(j, "dataset", c.dataset);
  get_to(j, "synth_n", c.synth_n);
  get_to(j, "synth_size", c.synth_size);

  if (j.contains("model")) {
    const json& m = j.at("model");
    get_to(m, "in_channels", c.model.in_channels);
    get_to(m, "base_channels", c.model.base_channels);
    get_to(m, "tile", c.model.tile);
    get_to(m, "n_ttt", c.model.n_ttt);
    get_to(m, "head_prior", c.model.head_prior);
    get_to(m, "seed", c.model.seed);
    if (m.contains("ttt")) {
      const json& t = m.at("ttt");
      if (t.contains("hidden_model"))
        c.model.ttt.hidden_model = hidden_model_of(t.at("hidden_model"));
      if (t.contains("mode")) c.model.ttt.mode = mode_of(t.at("mode"));
      get_to(t, "eta", c.model.ttt.eta);
      get_to(t, "corrupt_input", c.model.ttt.corrupt_input);
      get_to(t, "keep_prob", c.model.ttt.keep_prob);
      if (t.contains("scan")) {
        std::string sc = t.at("scan");
        if (sc == "forward")
          c.model.ttt.scan = ScanDir::kForward;
        else if (sc == "bidirectional")
          c.model.ttt.scan = ScanDir::kBidirectional;
        else
          throw ConfigError("unknown scan '" + sc + "'");
      }
    }
    if (m.contains("highpass")) {
      const json& h = m.at("highpass");
      get_to(h, "cutoff_ratio", c.model.highpass.cutoff_ratio);
      if (h.contains("transition")) {
        std::string tr = h.at("transition");
        if (tr == "hard")
          c.model.highpass.transition = Transition::kHard;
        else if (tr == "gaussian")
          c.model.highpass.transition = Transition::kGaussian;
        else
          throw ConfigError("unknown transition '" + tr + "'");
      }
    }
  }
  // The ablation setting fixes the feature-path flags; explicit flags win.
  c.model = ablation_setting(c.setting, c.model);
  if (j.contains("model")) {
    const json& m = j.at("model");
    get_to(m, "use_mr_block", c.model.use_mr_block);
    get_to(m, "use_fff", c.model.use_fff);
    get_to(m, "use_ttt", c.model.use_ttt);
  }
  if (!(j.contains("model") && j.at("model").contains("seed")))
    c.model.seed = c.seed;  // model init follows the run seed by default

  if (j.contains("train")) {
    const json& t = j.at("train");
    get_to(t, "epochs", c.train.epochs);
    get_to(t, "batch_size", c.train.batch_size);
    get_to(t, "lr", c.train.lr);
    get_to(t, "momentum", c.train.momentum);
    get_to(t, "lr_decay", c.train.lr_decay);
    get_to(t, "clip_norm", c.train.clip_norm);
    get_to(t, "target_val_dice", c.train.target_val_dice);
    get_to(t, "alpha", c.train.loss.alpha);
    get_to(t, "epsilon", c.train.loss.epsilon);
    if (t.contains("augment")) {
      std::string a = t.at("augment");
      if (a == "none")
        c.train.augment = Augment::kNone;
      else if (a == "flips")
        c.train.augment = Augment::kFlips;
      else
        throw ConfigError("unknown augment '" + a + "'");
    }
  }
  c.train.seed = c.seed;

  if (j.contains("bench")) {
    const json& b = j.at("bench");
    get_to(b, "impls", c.bench.impls);
    get_to(b, "T", c.bench.token_counts);
    get_to(b, "b", c.bench.minibatch_b);
    get_to(b, "d", c.bench.d_model);
    get_to(b, "reps", c.bench.reps);
    get_to(b, "warmup", c.bench.warmup);
  }
  c.bench.seed = c.seed;

  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    get_to(o, "instances", c.oracle.instances);
    get_to(o, "inject_eta", c.oracle.inject_eta);
    get_to(o, "inject_scale_mismatch", c.oracle.inject_scale_mismatch);
  }
  c.oracle.seed = c.seed;
  return c;
}

json run_config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out_dir;
  j["manifest"] = c.manifest;
  j["checkpoint"] = c.checkpoint;
  j["split"] = c.split;
  j["setting"] = c.setting;
  j["dataset"] = c.dataset;
  j["synth_n"] = c.synth_n;
  j["synth_size"] = c.synth_size;
  j["model"] = {
      {"in_channels", c.model.in_channels},
      {"base_channels", c.model.base_channels},
      {"tile", c.model.tile},
      {"n_ttt", c.model.n_ttt},
      {"head_prior", c.model.head_prior},
      {"seed", c.model.seed},
      {"use_mr_block", c.model.use_mr_block},
      {"use_fff", c.model.use_fff},
      {"use_ttt", c.model.use_ttt},
      {"ttt",
       {{"hidden_model", hidden_model_name(c.model.ttt.hidden_model)},
        {"mode", mode_name(c.model.ttt.mode)},
        {"eta", c.model.ttt.eta},
        {"scan", c.model.ttt.scan == ScanDir::kForward ? "forward"
                                                       : "bidirectional"},
        {"corrupt_input", c.model.ttt.corrupt_input},
        {"keep_prob", c.model.ttt.keep_prob}}},
      {"highpass",
       {{"cutoff_ratio", c.model.highpass.cutoff_ratio},
        {"transition", c.model.highpass.transition == Transition::kHard
                           ? "hard"
                           : "gaussian"}}}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"lr_decay", c.train.lr_decay},
                {"clip_norm", c.train.clip_norm},
                {"target_val_dice", c.train.target_val_dice},
                {"alpha", c.train.loss.alpha},
                {"epsilon", c.train.loss.epsilon},
                {"augment",
                 c.train.augment == Augment::kNone ? "none" : "flips"}};
  j["bench"] = {{"impls", c.bench.impls},
                {"T", c.bench.token_counts},
                {"b", c.bench.minibatch_b},
                {"d", c.bench.d_model},
                {"reps", c.bench.reps},
                {"warmup", c.bench.warmup}};
  j["oracle"] = {{"instances", c.oracle.instances},
                 {"inject_eta", c.oracle.inject_eta},
                 {"inject_scale_mismatch", c.oracle.inject_scale_mismatch}};
  return j;
}

}  // namespace medttt

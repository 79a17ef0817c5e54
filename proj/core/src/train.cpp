#include "medttt/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

namespace medttt {

namespace fs = std::filesystem;

double dice_of(const ConfusionMatrix& cm) {
  double denom = double(2 * cm.tp + cm.fp + cm.fn);
  if (denom == 0.0) return cm.fp == 0 && cm.fn == 0 ? 1.0 : 0.0;
  return 2.0 * double(cm.tp) / denom;
}

ConfusionMatrix evaluate_split(const Model& model,
                               const DatasetManifest& manifest,
                               const std::string& split) {
  auto rows = manifest.split(split);
  if (rows.empty()) throw DataError("empty split '" + split + "'");
  ConfusionMatrix cm;
  for (const auto& row : rows) {
    SegmentationSample s = load_sample(manifest, row);
    SegmentationOutput out = model.forward(s.image);
    cm += confusion(out.probs.values(), s.mask.values());
  }
  return cm;
}

TrainResult train_model(Model& model, const DatasetManifest& manifest,
                        const TrainConfig& cfg, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw IoError("cannot create run directory " + out_dir);

  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint_best.mttt").string();
  result.log_path = (fs::path(out_dir) / "train_log.csv").string();

  std::ofstream log(result.log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + result.log_path);
  log << "epoch,train_loss,val_dice\n";

  // Momentum buffers, keyed by parameter name (fixed order).
  std::unordered_map<std::string, std::vector<double>> velocity;
  for (const auto& [name, t] : model.parameters())
    velocity[name] = std::vector<double>(t.size(), 0.0);

  BatchStream stream(manifest, "train", cfg.batch_size, cfg.seed,
                     cfg.augment);
  std::size_t decay_epoch = std::size_t(0.8 * double(cfg.epochs));
  result.best_val_dice = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr * (epoch >= decay_epoch && decay_epoch > 0
                              ? cfg.lr_decay
                              : 1.0);
    stream.start_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (;;) {
      auto batch = stream.next();
      if (batch.empty()) break;
      try {
        std::vector<Tensor> probs, masks;
        for (const auto& s : batch) {
          probs.push_back(model.forward(s.image).probs);
          masks.push_back(s.mask);
        }
        Tensor loss = combined_loss(concat(probs, 0), concat(masks, 0),
                                    cfg.loss);
        model.clear_grads();
        backward(loss);
        loss_sum += loss.value();
        ++batches;
        double scale = 1.0;
        if (cfg.clip_norm > 0.0) {
          double sq = 0.0;
          for (const auto& [name, t] : model.parameters()) {
            if (!t.has_grad()) continue;
            for (double g : t.grad()) sq += g * g;
          }
          double norm = std::sqrt(sq);
          if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
        }
        for (const auto& [name, t] : model.parameters()) {
          auto& v = velocity[name];
          if (!t.has_grad()) continue;
          const auto& g = t.grad();
          for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = cfg.momentum * v[i] + scale * g[i];
          const_cast<Tensor&>(t).apply_update(v, -lr);
        }
      } catch (const NumericError&) {
        result.aborted_non_finite = true;
        log.flush();
        return result;  // last-good checkpoint already on disk
      }
    }

    double val_dice = dice_of(evaluate_split(model, manifest, "val"));
    double train_loss = batches ? loss_sum / double(batches) : 0.0;
    result.log.push_back({epoch, train_loss, val_dice});
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", epoch, train_loss,
                  val_dice);
    log << buf;
    log.flush();

    if (val_dice > result.best_val_dice) {
      result.best_val_dice = val_dice;
      result.best_epoch = epoch;
      save_checkpoint(model, result.checkpoint_path);
    }
    if (cfg.target_val_dice >= 0.0 && val_dice >= cfg.target_val_dice) break;
  }
  return result;
}

}  // namespace medttt

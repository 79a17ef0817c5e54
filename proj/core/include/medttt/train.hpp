#pragma once

#include <string>
#include <vector>

#include "medttt/dataset.hpp"
#include "medttt/losses.hpp"
#include "medttt/metrics.hpp"
#include "medttt/model.hpp"

namespace medttt {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 4;
  double lr = 3e-3;
  double momentum = 0.9;
  double lr_decay = 0.1;   // multiplier applied at 80% of epochs
  double clip_norm = 1.0;  // global gradient-norm clip; 0 disables
  std::uint64_t seed = 7;
  Augment augment = Augment::kNone;
  LossConfig loss;
  double target_val_dice = -1.0;  // early stop once reached, if >= 0
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_dice = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_dice = 0.0;
  std::size_t best_epoch = 0;
  bool aborted_non_finite = false;
  std::string checkpoint_path;
  std::string log_path;
};

// Plain mini-batch SGD with momentum on the batch-level combined loss.
// Writes <out_dir>/train_log.csv and keeps the best-validation checkpoint at
// <out_dir>/checkpoint_best.mttt. On a non-finite loss the run aborts with
// the last good checkpoint retained.
TrainResult train_model(Model& model, const DatasetManifest& manifest,
                        const TrainConfig& cfg, const std::string& out_dir);

// Aggregate confusion matrix of thresholded predictions over a split.
ConfusionMatrix evaluate_split(const Model& model,
                               const DatasetManifest& manifest,
                               const std::string& split);

// Dice coefficient (fraction, not percent) of the aggregate matrix.
double dice_of(const ConfusionMatrix& cm);

}  // namespace medttt

#pragma once

#include "medttt/tensor.hpp"

namespace medttt {

struct LossConfig {
  double alpha = 0.5;     // weight of the Dice term
  double epsilon = 1e-6;  // Dice denominator smoothing
};

// Batch-level combined loss: (1-alpha) * BCE + alpha * DiceLoss, both
// computed as single aggregates over the whole batch. Probabilities are
// squashed into [1e-7, 1-1e-7] before logs. Targets must be binary.
//
// Note: the Dice term follows the batch-sum form with epsilon; the
// cross-entropy term is full binary cross-entropy (both classes), since a
// foreground-only CE assigns zero loss to false positives.
Tensor combined_loss(const Tensor& probs, const Tensor& targets,
                     const LossConfig& cfg = {});

// The two pieces, exposed for tests.
Tensor dice_loss(const Tensor& probs, const Tensor& targets, double epsilon);
Tensor bce_loss(const Tensor& probs, const Tensor& targets);

}  // namespace medttt

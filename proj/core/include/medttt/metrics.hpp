#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medttt/errors.hpp"

namespace medttt {

// Pixel counts at a fixed threshold. Merges associatively.
struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

// Percentages in [0, 100].
struct MetricsReport {
  double miou = 0, dsc = 0, acc = 0, spe = 0, sen = 0;
};

// pred = prob >= threshold, compared against binary targets.
ConfusionMatrix confusion(const std::vector<double>& pred_probs,
                          const std::vector<double>& targets,
                          double threshold = 0.5);

// mIoU is the mean of foreground and background IoU. A ratio with a zero
// denominator (class absent and perfectly predicted) reports 100%, else 0%.
MetricsReport metrics(const ConfusionMatrix& cm);

// CSV row "dataset,split,setting,miou,dsc,acc,spe,sen" (percent, 2 decimals).
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& dataset,
                            const std::string& split,
                            const std::string& setting,
                            const MetricsReport& r);

}  // namespace medttt

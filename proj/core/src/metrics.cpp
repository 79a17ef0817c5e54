#include "medttt/metrics.hpp"

#include <cstdio>

namespace medttt {

ConfusionMatrix confusion(const std::vector<double>& pred_probs,
                          const std::vector<double>& targets,
                          double threshold) {
  if (pred_probs.size() != targets.size())
    throw ShapeError("confusion: prediction/target length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred_probs.size(); ++i) {
    bool p = pred_probs[i] >= threshold;
    bool t = targets[i] != 0.0;
    if (p && t)
      ++cm.tp;
    else if (p && !t)
      ++cm.fp;
    else if (!p && t)
      ++cm.fn;
    else
      ++cm.tn;
  }
  return cm;
}

namespace {

// num/den as a percentage; a zero denominator means the class is absent, and
// reports 100% iff the prediction made no error against it.
double ratio_pct(double num, double den, bool perfect_when_absent) {
  if (den == 0.0) return perfect_when_absent ? 100.0 : 0.0;
  return 100.0 * num / den;
}

}  // namespace

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0)
    throw ContractError("metrics: empty confusion matrix");
  double tp = double(cm.tp), fp = double(cm.fp), tn = double(cm.tn),
         fn = double(cm.fn);
  MetricsReport r;
  r.acc = 100.0 * (tp + tn) / double(cm.total());
  r.sen = ratio_pct(tp, tp + fn, cm.fp == 0);
  r.spe = ratio_pct(tn, tn + fp, cm.fn == 0);
  r.dsc = ratio_pct(2.0 * tp, 2.0 * tp + fp + fn, cm.fp == 0 && cm.fn == 0);
  double iou_fg = ratio_pct(tp, tp + fp + fn, cm.fp == 0 && cm.fn == 0);
  double iou_bg = ratio_pct(tn, tn + fn + fp, cm.fp == 0 && cm.fn == 0);
  r.miou = 0.5 * (iou_fg + iou_bg);
  return r;
}

std::string metrics_csv_header() {
  return "dataset,split,setting,miou,dsc,acc,spe,sen";
}

std::string metrics_csv_row(const std::string& dataset,
                            const std::string& split,
                            const std::string& setting,
                            const MetricsReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f,%.2f", r.miou, r.dsc,
                r.acc, r.spe, r.sen);
  return dataset + "," + split + "," + setting + "," + buf;
}

}  // namespace medttt

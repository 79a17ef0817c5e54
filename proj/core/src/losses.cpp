#include "medttt/losses.hpp"

namespace medttt {

namespace {

void check_pair(const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape())
    throw ShapeError("loss: probs " + shape_str(probs.shape()) +
                     " vs targets " + shape_str(targets.shape()));
  for (double t : targets.values())
    if (t != 0.0 && t != 1.0)
      throw DomainError("loss: targets must be binary");
}

}  // namespace

Tensor dice_loss(const Tensor& probs, const Tensor& targets, double epsilon) {
  check_pair(probs, targets);
  Tensor inter = sum(mul(probs, targets));
  Tensor denom = add(add(sum(probs), sum(targets)), epsilon);
  return sub(Tensor::scalar(1.0), div(mul(inter, 2.0), denom));
}

Tensor bce_loss(const Tensor& probs, const Tensor& targets) {
  check_pair(probs, targets);
  // Affine squash into [eps, 1-eps] rather than a hard clamp: a clamp kills
  // the gradient once a prediction saturates, which leaves no way back.
  constexpr double eps = 1e-7;
  Tensor p = add(mul(probs, 1.0 - 2.0 * eps), eps);
  Tensor pos = mul(targets, log_(p));
  Tensor negt = sub(Tensor::scalar(1.0), targets);
  Tensor negp = log_(sub(Tensor::scalar(1.0), p));
  return neg(mean(add(pos, mul(negt, negp))));
}

Tensor combined_loss(const Tensor& probs, const Tensor& targets,
                     const LossConfig& cfg) {
  Tensor ce = bce_loss(probs, targets);
  Tensor dl = dice_loss(probs, targets, cfg.epsilon);
  return add(mul(ce, 1.0 - cfg.alpha), mul(dl, cfg.alpha));
}

}  // namespace medttt

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "medttt/tensor.hpp"

namespace medttt {

enum class HiddenModel { kLinear, kMlp };
enum class TttMode { kOnline, kBatchAtInit, kMinibatch };
enum class ScanDir { kForward, kBidirectional };

// Outer projections producing the training view (K), label view (V) and
// test/query view (Q) of each token.
struct TttProjections {
  Tensor theta_k, theta_v, theta_q;  // each d x d

  std::size_t dim() const { return theta_k.shape()[0]; }
  static TttProjections identity(std::size_t d);
  static TttProjections random(std::size_t d, std::uint64_t seed,
                               double stddev = 0.02, bool trainable = false);
};

struct TttConfig {
  std::size_t d_model = 0;
  HiddenModel hidden_model = HiddenModel::kLinear;
  TttMode mode = TttMode::kMinibatch;
  std::size_t minibatch_b = 16;  // b = K*K tokens per tile
  double eta = 0.5;
  ScanDir scan = ScanDir::kForward;
  bool grads_at_init = false;  // evaluate every inner gradient at the scan's W0
  bool corrupt_input = false;  // Bernoulli-masked reconstruction objective
  double keep_prob = 0.9;
  std::uint64_t mask_seed = 0;
};

// Fast weights of the inner model f plus the inner learning rate. Reset to
// the layer's initial weights at the start of every sequence.
struct TttState {
  HiddenModel model = HiddenModel::kLinear;
  std::vector<Tensor> weights;  // linear: {W dxd}; mlp: {w1, b1, w2, b2}
  Tensor eta;                   // positive scalar
};

// All-zero fast weights (linear: W = 0; mlp: every matrix and bias 0).
TttState zero_state(const TttConfig& cfg);
// Seeded random fast weights (normal, given stddev); used for the MLP inner
// model where zero init has no gradient path through the first layer.
TttState random_state(const TttConfig& cfg, std::uint64_t seed,
                      double stddev = 0.02, bool trainable = false);

// f(u; W): u -> W u (linear) or the 2-layer GELU MLP with hidden width 4d.
Tensor hidden_forward(const TttState& st, const Tensor& u);

// ||f(theta_K x; W) - theta_V x||^2. `mask`, when given, multiplies x before
// the training view (corrupted-input reconstruction).
Tensor inner_loss(const TttState& st, const Tensor& x,
                  const TttProjections& proj, const Tensor* mask = nullptr);

// Closed form 2 (W kx - vx)(kx)^T for the linear inner model.
Tensor inner_grad_linear(const Tensor& w, const Tensor& x,
                         const TttProjections& proj);

// Gradients of inner_loss w.r.t. every fast weight, in weights order.
// Expressed in tensor primitives so outer training differentiates through.
std::vector<Tensor> inner_grads(const TttState& st, const Tensor& x,
                                const TttProjections& proj,
                                const Tensor* mask = nullptr);

struct StepResult {
  TttState state;
  Tensor z;
};

// One token: W_t = W_{t-1} - eta * grad(W_{t-1}; x_t), z_t = f(theta_Q x; W_t).
StepResult step_online(const TttState& st, const Tensor& x,
                       const TttProjections& proj);

// Ordered token vectors; `tile` records the raster tiling origin (side K).
struct TokenSequence {
  std::vector<Tensor> tokens;
  std::size_t tile = 1;

  std::size_t length() const { return tokens.size(); }
};

// Token-by-token scan from `start`.
std::vector<Tensor> forward_online(const TokenSequence& seq,
                                   const TttConfig& cfg,
                                   const TttProjections& proj,
                                   const TttState& start);

// All inner gradients at W0 = 0 for the linear model; with eta = 1/2 this is
// exactly the linear-attention closed form.
std::vector<Tensor> forward_batch_at_init(const TokenSequence& seq,
                                          const TttConfig& cfg,
                                          const TttProjections& proj);

// Consecutive groups of b tokens; inner gradients within a group are taken at
// the group-start weights, the weights advance cumulatively inside the group.
// b = 1 reproduces the online scan; b = T from zero linear init reproduces
// forward_batch_at_init.
std::vector<Tensor> forward_minibatch(const TokenSequence& seq,
                                      const TttConfig& cfg,
                                      const TttProjections& proj,
                                      const TttState& start);

// Dispatch on cfg.mode.
std::vector<Tensor> ttt_scan(const TokenSequence& seq, const TttConfig& cfg,
                             const TttProjections& proj, const TttState& start);

// Pre-norm residual wrapper: layer_norm -> TTT scan (forward, or the average
// of forward and reversed scans) -> residual add. Shape preserving.
struct TttBlock {
  TttConfig cfg;
  TttProjections proj;
  TttState init_state;

  TokenSequence forward(const TokenSequence& in) const;
  std::vector<std::pair<std::string, Tensor>> parameters(
      const std::string& prefix) const;

  static TttBlock create(const TttConfig& cfg, std::uint64_t seed,
                         bool trainable);
};

// Raster scan over K x K tiles, row-major within each tile; the token at each
// pixel is that pixel's channel vector (d = C).
TokenSequence map_to_tokens(const Tensor& fmap, std::size_t tile);
Tensor tokens_to_map(const TokenSequence& seq, std::size_t channels,
                     std::size_t height, std::size_t width);

}  // namespace medttt

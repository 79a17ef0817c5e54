#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "medttt/frequency.hpp"
#include "medttt/tensor.hpp"
#include "medttt/ttt.hpp"

namespace medttt {

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t base_channels = 16;  // channels 1x/2x/4x at scales 1, 1/2, 1/4
  std::size_t tile = 4;            // K; TTT mini-batch b = K*K
  std::size_t n_ttt = 2;
  TttConfig ttt;  // d_model and minibatch_b are derived in build_model
  HighPassConfig highpass;
  bool use_mr_block = true;
  bool use_fff = true;
  bool use_ttt = true;
  double head_prior = 0.1;  // initial foreground prior, encoded in head bias
  std::uint64_t seed = 1;
  bool trainable = true;
};

// Ablation settings: I = TTT only, II = MR+TTT, III = FFF+TTT,
// full = all three.
ModelConfig ablation_setting(const std::string& name, ModelConfig base = {});

struct SegmentationOutput {
  Tensor logits;  // H x W
  Tensor probs;   // sigmoid(logits), in [0,1]
};

// 3x3 same-padded convolution followed by GELU (1x1 linear for the head).
struct ConvLayer {
  Tensor kernel;  // C_out x C_in x k x k
  Tensor bias;    // C_out
};

class Model {
 public:
  static Model build(const ModelConfig& cfg);

  SegmentationOutput forward(const Tensor& image) const;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  Tensor param(const std::string& name) const;
  std::size_t parameter_count() const;
  void clear_grads() const;

  // Machine-readable architecture record (channel counts, depths, flags).
  std::string summary_json() const;

 private:
  ModelConfig cfg_;
  std::size_t d_model_ = 0;

  // MR mode
  ConvLayer hi1_, hi2_, mid1_, mid2_, lo1_, lo2_;
  ConvLayer fuse_lo_mid_, fuse_mid_hi_;
  // non-MR trunk
  ConvLayer stem_, trunk1_, trunk2_, post_;
  // frequency branch embedding
  ConvLayer fff_embed_, fff_merge_;
  ConvLayer head_;
  std::vector<TttBlock> ttt_blocks_;

  std::vector<std::pair<std::string, Tensor>> params_;
};

// Flat binary checkpoint: magic "MTTT", version u32 LE, parameter manifest
// (count u32; per entry: name length u32 + UTF-8 name, rank u32, extents u32
// each), then float64 LE parameter data in manifest order. Bit-exact
// round trip.
void save_checkpoint(const Model& model, const std::string& path);
// Loads into an already-built model; the manifest must match the model's
// parameters exactly.
void load_checkpoint(Model& model, const std::string& path);

}  // namespace medttt

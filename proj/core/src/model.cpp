#include "medttt/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

namespace medttt {

namespace {

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng,
                  bool trainable) {
  double limit = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> d(shape_size(shape));
  for (auto& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d), trainable);
}

ConvLayer make_conv(std::size_t c_in, std::size_t c_out, std::size_t k,
                    std::mt19937_64& rng, bool trainable) {
  ConvLayer l;
  l.kernel = he_uniform({c_out, c_in, k, k}, c_in * k * k, rng, trainable);
  l.bias = Tensor::zeros({c_out}, trainable);
  return l;
}

Tensor conv_gelu(const ConvLayer& l, const Tensor& x) {
  std::size_t k = l.kernel.shape()[2];
  return gelu(conv2d(x, l.kernel, l.bias, 1, k / 2));
}

Tensor conv_linear(const ConvLayer& l, const Tensor& x) {
  std::size_t k = l.kernel.shape()[2];
  return conv2d(x, l.kernel, l.bias, 1, k / 2);
}

}  // namespace

ModelConfig ablation_setting(const std::string& name, ModelConfig base) {
  base.use_ttt = true;
  if (name == "I") {
    base.use_mr_block = false;
    base.use_fff = false;
  } else if (name == "II") {
    base.use_mr_block = true;
    base.use_fff = false;
  } else if (name == "III") {
    base.use_mr_block = false;
    base.use_fff = true;
  } else if (name == "full") {
    base.use_mr_block = true;
    base.use_fff = true;
  } else {
    throw ConfigError("unknown ablation setting '" + name +
                      "' (expected I, II, III or full)");
  }
  return base;
}

Model Model::build(const ModelConfig& cfg) {
  if (cfg.base_channels == 0) throw ConfigError("base_channels must be > 0");
  if (cfg.in_channels == 0) throw ConfigError("in_channels must be > 0");
  if (cfg.tile == 0) throw ConfigError("tile must be > 0");
  if (!cfg.use_mr_block && !cfg.use_fff && !cfg.use_ttt)
    throw ConfigError("at least one feature path must be enabled");
  if (cfg.head_prior <= 0.0 || cfg.head_prior >= 1.0)
    throw ConfigError("head_prior must be in (0,1)");

  Model m;
  m.cfg_ = cfg;
  std::size_t b = cfg.base_channels;
  m.d_model_ = 4 * b;
  std::mt19937_64 rng(cfg.seed);

  auto reg = [&](const std::string& name, ConvLayer& l, std::size_t ci,
                 std::size_t co, std::size_t k) {
    l = make_conv(ci, co, k, rng, cfg.trainable);
    m.params_.emplace_back(name + ".kernel", l.kernel);
    m.params_.emplace_back(name + ".bias", l.bias);
  };

  if (cfg.use_mr_block) {
    reg("hi1", m.hi1_, cfg.in_channels, b, 3);
    reg("hi2", m.hi2_, b, b, 3);
    reg("mid1", m.mid1_, cfg.in_channels, 2 * b, 3);
    reg("mid2", m.mid2_, 2 * b, 2 * b, 3);
    reg("lo1", m.lo1_, cfg.in_channels, 4 * b, 3);
    reg("lo2", m.lo2_, 4 * b, 4 * b, 3);
    reg("fuse_lo_mid", m.fuse_lo_mid_, 4 * b + 2 * b, 2 * b, 3);
    reg("fuse_mid_hi", m.fuse_mid_hi_, 2 * b + b, b, 3);
  } else {
    reg("stem", m.stem_, cfg.in_channels, b, 3);
    reg("trunk1", m.trunk1_, b, 4 * b, 3);
    reg("trunk2", m.trunk2_, 4 * b, 4 * b, 3);
    reg("post", m.post_, 4 * b, b, 3);
  }
  if (cfg.use_fff) {
    reg("fff_embed", m.fff_embed_, cfg.in_channels, b, 3);
    reg("fff_merge", m.fff_merge_, 2 * b, b, 3);
  }
  if (cfg.use_ttt) {
    TttConfig tc = cfg.ttt;
    tc.d_model = m.d_model_;
    tc.minibatch_b = cfg.tile * cfg.tile;
    for (std::size_t i = 0; i < cfg.n_ttt; ++i) {
      m.ttt_blocks_.push_back(
          TttBlock::create(tc, rng(), cfg.trainable));
      auto ps = m.ttt_blocks_.back().parameters("ttt" + std::to_string(i));
      m.params_.insert(m.params_.end(), ps.begin(), ps.end());
    }
  }
  reg("head", m.head_, b, 1, 1);
  // Start from the foreground prior instead of p = 0.5; with heavy class
  // imbalance the first updates otherwise overshoot into saturation.
  m.head_.bias.set_values(
      {std::log(cfg.head_prior / (1.0 - cfg.head_prior))});
  return m;
}

SegmentationOutput Model::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.shape()[0] != cfg_.in_channels)
    throw ShapeError("forward: expected " + std::to_string(cfg_.in_channels) +
                     "xHxW image, got " + shape_str(image.shape()));
  std::size_t h = image.shape()[1], w = image.shape()[2];
  std::size_t quantum = 4 * cfg_.tile;
  if (h % quantum != 0 || w % quantum != 0)
    throw ConfigError("forward: extents " + std::to_string(h) + "x" +
                      std::to_string(w) + " must be divisible by " +
                      std::to_string(quantum));

  // Frequency branch: fixed high-pass feature extractor on the raw input,
  // per channel; gradients flow into the embedding convs only.
  Tensor fff_feat;
  if (cfg_.use_fff) {
    std::vector<double> hp(cfg_.in_channels * h * w);
    for (std::size_t c = 0; c < cfg_.in_channels; ++c) {
      Plane p(h, w);
      for (std::size_t i = 0; i < h * w; ++i)
        p.data[i] = image.at(c * h * w + i);
      Plane f = extract_high_freq(p, cfg_.highpass);
      std::copy(f.data.begin(), f.data.end(), hp.begin() + c * h * w);
    }
    Tensor hp_t({cfg_.in_channels, h, w}, std::move(hp));
    fff_feat = conv_gelu(fff_embed_, hp_t);
  }

  auto apply_ttt = [&](Tensor lo) {
    if (!cfg_.use_ttt) return lo;
    TokenSequence seq = map_to_tokens(lo, cfg_.tile);
    for (const auto& blk : ttt_blocks_) seq = blk.forward(seq);
    return tokens_to_map(seq, lo.shape()[0], lo.shape()[1], lo.shape()[2]);
  };

  Tensor features;
  if (cfg_.use_mr_block) {
    Tensor hi = conv_gelu(hi2_, conv_gelu(hi1_, image));
    if (cfg_.use_fff)
      hi = conv_gelu(fff_merge_, concat({hi, fff_feat}, 0));
    Tensor mid = conv_gelu(mid2_, conv_gelu(mid1_, downsample_avg(image, 2)));
    Tensor lo = conv_gelu(lo2_, conv_gelu(lo1_, downsample_avg(image, 4)));
    lo = apply_ttt(lo);
    Tensor f1 =
        conv_gelu(fuse_lo_mid_, concat({upsample_nearest(lo, 2), mid}, 0));
    features =
        conv_gelu(fuse_mid_hi_, concat({upsample_nearest(f1, 2), hi}, 0));
  } else {
    Tensor x = conv_gelu(stem_, image);
    if (cfg_.use_fff)
      x = conv_gelu(fff_merge_, concat({x, fff_feat}, 0));
    Tensor lo = conv_gelu(trunk2_, conv_gelu(trunk1_, downsample_avg(x, 4)));
    lo = apply_ttt(lo);
    features = conv_gelu(post_, upsample_nearest(lo, 4));
  }

  Tensor logits3 = conv_linear(head_, features);  // 1 x H x W
  SegmentationOutput out;
  out.logits = reshape(logits3, {h, w});
  out.probs = sigmoid(out.logits);
  return out;
}

Tensor Model::param(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ConfigError("unknown parameter '" + name + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void Model::clear_grads() const {
  for (const auto& [name, t] : params_) const_cast<Tensor&>(t).clear_grad();
}

std::string Model::summary_json() const {
  nlohmann::json j;
  j["in_channels"] = cfg_.in_channels;
  j["base_channels"] = cfg_.base_channels;
  j["channels_per_scale"] = {cfg_.base_channels, 2 * cfg_.base_channels,
                             4 * cfg_.base_channels};
  j["convs_per_branch"] = 2;
  j["downsampling"] = "average_pool";
  j["fusion"] = "nearest_upsample+concat+conv3x3";
  j["use_mr_block"] = cfg_.use_mr_block;
  j["use_fff"] = cfg_.use_fff;
  j["use_ttt"] = cfg_.use_ttt;
  j["ttt_blocks"] = cfg_.use_ttt ? cfg_.n_ttt : 0;
  j["ttt_placement"] = "quarter_scale_bottleneck";
  j["d_model"] = d_model_;
  j["tile"] = cfg_.tile;
  j["highpass_cutoff_ratio"] = cfg_.highpass.cutoff_ratio;
  j["head"] = "sigmoid-binary";
  j["parameter_count"] = parameter_count();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : params_)
    params.push_back({{"name", name}, {"shape", t.shape()}});
  j["parameters"] = params;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'T', 'T', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path + ": truncated checkpoint");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw ParseError(path + ": truncated checkpoint data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const auto& params = model.parameters();
  put_u32(out, std::uint32_t(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_u32(out, std::uint32_t(t.rank()));
    for (auto e : t.shape()) put_u32(out, std::uint32_t(e));
  }
  for (const auto& [name, t] : params)
    for (double v : t.values()) put_f64(out, v);
  if (!out) throw IoError("short write to checkpoint " + path);
}

void load_checkpoint(Model& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": bad checkpoint magic");
  std::uint32_t version = get_u32(in, path);
  if (version != kVersion)
    throw ParseError(path + ": unsupported checkpoint version " +
                     std::to_string(version));
  const auto& params = model.parameters();
  std::uint32_t count = get_u32(in, path);
  if (count != params.size())
    throw DataError(path + ": checkpoint/config mismatch: " +
                    std::to_string(count) + " parameters vs model's " +
                    std::to_string(params.size()));
  for (const auto& [name, t] : params) {
    std::uint32_t nlen = get_u32(in, path);
    std::string pname(nlen, '\0');
    if (!in.read(pname.data(), nlen))
      throw ParseError(path + ": truncated manifest");
    if (pname != name)
      throw DataError(path + ": checkpoint/config mismatch: parameter '" +
                      pname + "' vs model's '" + name + "'");
    std::uint32_t rank = get_u32(in, path);
    Shape shape(rank);
    for (auto& e : shape) e = get_u32(in, path);
    if (shape != t.shape())
      throw DataError(path + ": checkpoint/config mismatch: shape of '" +
                      name + "'");
  }
  for (const auto& [name, t] : params) {
    std::vector<double> v(t.size());
    for (auto& x : v) x = get_f64(in, path);
    const_cast<Tensor&>(t).set_values(v);
  }
}

}  // namespace medttt

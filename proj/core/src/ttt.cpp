#include "medttt/ttt.hpp"

#include <random>

namespace medttt {

namespace {

Tensor random_matrix(Shape shape, std::mt19937_64& rng, double stddev,
                     bool trainable) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> d(shape_size(shape));
  for (auto& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d), trainable);
}

void check_token(const Tensor& x, std::size_t d) {
  if (x.rank() != 1 || x.size() != d)
    throw ShapeError("token must be a vector of length " + std::to_string(d) +
                     ", got " + shape_str(x.shape()));
}

Tensor bernoulli_mask(std::size_t d, double keep_prob, std::uint64_t seed,
                      std::size_t token_index) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + token_index + 1);
  std::bernoulli_distribution keep(keep_prob);
  std::vector<double> m(d);
  for (auto& v : m) v = keep(rng) ? 1.0 : 0.0;
  return Tensor({d}, std::move(m));
}

}  // namespace

TttProjections TttProjections::identity(std::size_t d) {
  std::vector<double> id(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) id[i * d + i] = 1.0;
  TttProjections p;
  p.theta_k = Tensor({d, d}, id);
  p.theta_v = Tensor({d, d}, id);
  p.theta_q = Tensor({d, d}, std::move(id));
  return p;
}

TttProjections TttProjections::random(std::size_t d, std::uint64_t seed,
                                      double stddev, bool trainable) {
  std::mt19937_64 rng(seed);
  TttProjections p;
  p.theta_k = random_matrix({d, d}, rng, stddev, trainable);
  p.theta_v = random_matrix({d, d}, rng, stddev, trainable);
  p.theta_q = random_matrix({d, d}, rng, stddev, trainable);
  return p;
}

namespace {

std::vector<Shape> weight_shapes(const TttConfig& cfg) {
  std::size_t d = cfg.d_model;
  if (cfg.hidden_model == HiddenModel::kLinear) return {{d, d}};
  std::size_t hd = 4 * d;
  return {{hd, d}, {hd}, {d, hd}, {d}};
}

}  // namespace

TttState zero_state(const TttConfig& cfg) {
  TttState st;
  st.model = cfg.hidden_model;
  for (auto& s : weight_shapes(cfg)) st.weights.push_back(Tensor::zeros(s));
  st.eta = Tensor::scalar(cfg.eta);
  return st;
}

TttState random_state(const TttConfig& cfg, std::uint64_t seed, double stddev,
                      bool trainable) {
  std::mt19937_64 rng(seed);
  TttState st;
  st.model = cfg.hidden_model;
  for (auto& s : weight_shapes(cfg))
    st.weights.push_back(random_matrix(s, rng, stddev, trainable));
  st.eta = Tensor::scalar(cfg.eta, trainable);
  return st;
}

Tensor hidden_forward(const TttState& st, const Tensor& u) {
  if (st.model == HiddenModel::kLinear) return matmul(st.weights[0], u);
  const Tensor& w1 = st.weights[0];
  const Tensor& b1 = st.weights[1];
  const Tensor& w2 = st.weights[2];
  const Tensor& b2 = st.weights[3];
  Tensor h = gelu(add(matmul(w1, u), b1));
  return add(matmul(w2, h), b2);
}

Tensor inner_loss(const TttState& st, const Tensor& x,
                  const TttProjections& proj, const Tensor* mask) {
  Tensor xin = mask ? mul(x, *mask) : x;
  Tensor u = matmul(proj.theta_k, xin);
  Tensor target = matmul(proj.theta_v, x);
  Tensor diff = sub(hidden_forward(st, u), target);
  return dot(diff, diff);
}

Tensor inner_grad_linear(const Tensor& w, const Tensor& x,
                         const TttProjections& proj) {
  Tensor kx = matmul(proj.theta_k, x);
  Tensor vx = matmul(proj.theta_v, x);
  Tensor resid = sub(matmul(w, kx), vx);
  return mul(outer(resid, kx), 2.0);
}

std::vector<Tensor> inner_grads(const TttState& st, const Tensor& x,
                                const TttProjections& proj,
                                const Tensor* mask) {
  Tensor xin = mask ? mul(x, *mask) : x;
  if (st.model == HiddenModel::kLinear) {
    Tensor kx = matmul(proj.theta_k, xin);
    Tensor vx = matmul(proj.theta_v, x);
    Tensor resid = sub(matmul(st.weights[0], kx), vx);
    return {mul(outer(resid, kx), 2.0)};
  }
  // Manual backprop through the 2-layer MLP, in primitives so the outer tape
  // can differentiate the update itself.
  const Tensor& w1 = st.weights[0];
  const Tensor& b1 = st.weights[1];
  const Tensor& w2 = st.weights[2];
  const Tensor& b2 = st.weights[3];
  Tensor u = matmul(proj.theta_k, xin);
  Tensor pre = add(matmul(w1, u), b1);
  Tensor h = gelu(pre);
  Tensor y = add(matmul(w2, h), b2);
  Tensor resid = sub(y, matmul(proj.theta_v, x));
  Tensor dy = mul(resid, 2.0);
  Tensor dw2 = outer(dy, h);
  Tensor db2 = dy;
  Tensor dh = matmul(transpose(w2), dy);
  Tensor dpre = mul(dh, gelu_deriv(pre));
  Tensor dw1 = outer(dpre, u);
  Tensor db1 = dpre;
  return {dw1, db1, dw2, db2};
}

StepResult step_online(const TttState& st, const Tensor& x,
                       const TttProjections& proj) {
  auto grads = inner_grads(st, x, proj);
  StepResult r;
  r.state.model = st.model;
  r.state.eta = st.eta;
  for (std::size_t i = 0; i < grads.size(); ++i)
    r.state.weights.push_back(sub(st.weights[i], mul(grads[i], st.eta)));
  r.z = hidden_forward(r.state, matmul(proj.theta_q, x));
  return r;
}

namespace {

std::vector<Tensor> scan_group(const TokenSequence& seq, const TttConfig& cfg,
                               const TttProjections& proj, TttState& state,
                               const TttState& w0, std::size_t begin,
                               std::size_t count) {
  // Inner gradients inside the group are evaluated at the group-start weights
  // (or always at W0 in grads_at_init mode); W advances cumulatively so that
  // b = 1 matches the online scan and b = T matches batch-at-init.
  const TttState& eval = cfg.grads_at_init ? w0 : state;
  TttState eval_copy = eval;  // group-start snapshot; `state` mutates below
  std::vector<Tensor> zs;
  zs.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t t = begin + s;
    const Tensor& x = seq.tokens[t];
    check_token(x, cfg.d_model);
    try {
      std::vector<Tensor> grads;
      if (cfg.corrupt_input) {
        Tensor m = bernoulli_mask(cfg.d_model, cfg.keep_prob, cfg.mask_seed, t);
        grads = inner_grads(eval_copy, x, proj, &m);
      } else {
        grads = inner_grads(eval_copy, x, proj);
      }
      for (std::size_t i = 0; i < grads.size(); ++i)
        state.weights[i] = sub(state.weights[i], mul(grads[i], state.eta));
      zs.push_back(hidden_forward(state, matmul(proj.theta_q, x)));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at token " +
                         std::to_string(t));
    }
  }
  return zs;
}

}  // namespace

std::vector<Tensor> forward_online(const TokenSequence& seq,
                                   const TttConfig& cfg,
                                   const TttProjections& proj,
                                   const TttState& start) {
  std::vector<Tensor> zs;
  zs.reserve(seq.length());
  TttState st = start;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    check_token(seq.tokens[t], cfg.d_model);
    try {
      if (cfg.corrupt_input) {
        Tensor m = bernoulli_mask(cfg.d_model, cfg.keep_prob, cfg.mask_seed, t);
        auto grads = inner_grads(st, seq.tokens[t], proj, &m);
        TttState ns;
        ns.model = st.model;
        ns.eta = st.eta;
        for (std::size_t i = 0; i < grads.size(); ++i)
          ns.weights.push_back(sub(st.weights[i], mul(grads[i], st.eta)));
        st = ns;
        zs.push_back(hidden_forward(st, matmul(proj.theta_q, seq.tokens[t])));
      } else {
        auto r = step_online(st, seq.tokens[t], proj);
        st = std::move(r.state);
        zs.push_back(std::move(r.z));
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at token " +
                         std::to_string(t));
    }
  }
  return zs;
}

std::vector<Tensor> forward_batch_at_init(const TokenSequence& seq,
                                          const TttConfig& cfg,
                                          const TttProjections& proj) {
  if (cfg.hidden_model != HiddenModel::kLinear)
    throw ConfigError(
        "batch-at-init requires the linear hidden model (unsupported "
        "configuration)");
  // W_t = 2 eta * sum_{s<=t} (theta_V x_s)(theta_K x_s)^T; eta = 1/2 cancels
  // the factor 2 and gives the linear-attention closed form.
  Tensor w = Tensor::zeros({cfg.d_model, cfg.d_model});
  std::vector<Tensor> zs;
  zs.reserve(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const Tensor& x = seq.tokens[t];
    check_token(x, cfg.d_model);
    Tensor kx = matmul(proj.theta_k, x);
    Tensor vx = matmul(proj.theta_v, x);
    w = add(w, mul(outer(vx, kx), 2.0 * cfg.eta));
    zs.push_back(matmul(w, matmul(proj.theta_q, x)));
  }
  return zs;
}

std::vector<Tensor> forward_minibatch(const TokenSequence& seq,
                                      const TttConfig& cfg,
                                      const TttProjections& proj,
                                      const TttState& start) {
  std::size_t b = cfg.minibatch_b;
  if (b == 0) throw ConfigError("minibatch size must be positive");
  if (seq.length() % b != 0)
    throw ShapeError("tiling error: sequence length " +
                     std::to_string(seq.length()) +
                     " not divisible by mini-batch size " + std::to_string(b));
  TttState state = start;
  std::vector<Tensor> zs;
  zs.reserve(seq.length());
  for (std::size_t g = 0; g < seq.length(); g += b) {
    auto part = scan_group(seq, cfg, proj, state, start, g, b);
    for (auto& z : part) zs.push_back(std::move(z));
  }
  return zs;
}

std::vector<Tensor> ttt_scan(const TokenSequence& seq, const TttConfig& cfg,
                             const TttProjections& proj,
                             const TttState& start) {
  switch (cfg.mode) {
    case TttMode::kOnline:
      return forward_online(seq, cfg, proj, start);
    case TttMode::kBatchAtInit:
      return forward_batch_at_init(seq, cfg, proj);
    case TttMode::kMinibatch:
      return forward_minibatch(seq, cfg, proj, start);
  }
  throw ConfigError("unknown ttt mode");
}

TokenSequence TttBlock::forward(const TokenSequence& in) const {
  TokenSequence normed;
  normed.tile = in.tile;
  normed.tokens.reserve(in.length());
  for (const auto& t : in.tokens) normed.tokens.push_back(layer_norm(t));

  std::vector<Tensor> z = ttt_scan(normed, cfg, proj, init_state);
  if (cfg.scan == ScanDir::kBidirectional) {
    TokenSequence rev;
    rev.tile = in.tile;
    rev.tokens.assign(normed.tokens.rbegin(), normed.tokens.rend());
    std::vector<Tensor> zb = ttt_scan(rev, cfg, proj, init_state);
    for (std::size_t t = 0; t < z.size(); ++t)
      z[t] = mul(add(z[t], zb[z.size() - 1 - t]), 0.5);
  }

  TokenSequence out;
  out.tile = in.tile;
  out.tokens.reserve(in.length());
  for (std::size_t t = 0; t < in.length(); ++t)
    out.tokens.push_back(add(in.tokens[t], z[t]));
  return out;
}

std::vector<std::pair<std::string, Tensor>> TttBlock::parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> ps = {
      {prefix + ".theta_k", proj.theta_k},
      {prefix + ".theta_v", proj.theta_v},
      {prefix + ".theta_q", proj.theta_q},
      {prefix + ".eta", init_state.eta}};
  for (std::size_t i = 0; i < init_state.weights.size(); ++i)
    ps.emplace_back(prefix + ".w0." + std::to_string(i),
                    init_state.weights[i]);
  return ps;
}

TttBlock TttBlock::create(const TttConfig& cfg, std::uint64_t seed,
                          bool trainable) {
  if (cfg.d_model == 0) throw ConfigError("d_model must be positive");
  if (cfg.eta <= 0.0) throw ConfigError("eta must be positive");
  TttBlock blk;
  blk.cfg = cfg;
  blk.proj = TttProjections::random(cfg.d_model, seed, 0.02, trainable);
  if (cfg.hidden_model == HiddenModel::kLinear) {
    blk.init_state = zero_state(cfg);
    blk.init_state.weights[0] =
        Tensor::zeros({cfg.d_model, cfg.d_model}, trainable);
    blk.init_state.eta = Tensor::scalar(cfg.eta, trainable);
  } else {
    blk.init_state = random_state(cfg, seed ^ 0x5bf0a8b1ULL, 0.02, trainable);
  }
  return blk;
}

TokenSequence map_to_tokens(const Tensor& fmap, std::size_t tile) {
  if (fmap.rank() != 3) throw ShapeError("map_to_tokens: CxHxW required");
  std::size_t c = fmap.shape()[0], h = fmap.shape()[1], w = fmap.shape()[2];
  if (tile == 0 || h % tile != 0 || w % tile != 0)
    throw ShapeError("tiling error: " + std::to_string(h) + "x" +
                     std::to_string(w) + " map not divisible by tile " +
                     std::to_string(tile));
  TokenSequence seq;
  seq.tile = tile;
  seq.tokens.reserve(h * w);
  for (std::size_t ty = 0; ty < h / tile; ++ty)
    for (std::size_t tx = 0; tx < w / tile; ++tx)
      for (std::size_t iy = 0; iy < tile; ++iy)
        for (std::size_t ix = 0; ix < tile; ++ix) {
          std::size_t y = ty * tile + iy, x = tx * tile + ix;
          std::vector<double> tok(c);
          for (std::size_t ch = 0; ch < c; ++ch)
            tok[ch] = fmap.at((ch * h + y) * w + x);
          std::size_t yy = y, xx = x, hh = h, ww = w;
          seq.tokens.push_back(detail::make_op(
              "pixel_token", {c}, std::move(tok), {fmap},
              [yy, xx, hh, ww, c](detail::Node& nd) {
                auto& g = detail::parent_grad(nd, 0);
                for (std::size_t ch = 0; ch < c; ++ch)
                  g[(ch * hh + yy) * ww + xx] += nd.grad[ch];
              }));
        }
  return seq;
}

Tensor tokens_to_map(const TokenSequence& seq, std::size_t channels,
                     std::size_t height, std::size_t width) {
  std::size_t tile = seq.tile;
  if (seq.length() != height * width)
    throw ShapeError("tokens_to_map: token count " +
                     std::to_string(seq.length()) + " != " +
                     std::to_string(height * width));
  // Pixel order matching map_to_tokens.
  std::vector<std::pair<std::size_t, std::size_t>> order;
  order.reserve(height * width);
  for (std::size_t ty = 0; ty < height / tile; ++ty)
    for (std::size_t tx = 0; tx < width / tile; ++tx)
      for (std::size_t iy = 0; iy < tile; ++iy)
        for (std::size_t ix = 0; ix < tile; ++ix)
          order.emplace_back(ty * tile + iy, tx * tile + ix);

  std::vector<double> out(channels * height * width, 0.0);
  for (std::size_t t = 0; t < order.size(); ++t) {
    const Tensor& tok = seq.tokens[t];
    check_token(tok, channels);
    auto [y, x] = order[t];
    for (std::size_t ch = 0; ch < channels; ++ch)
      out[(ch * height + y) * width + x] = tok.at(ch);
  }
  return detail::make_op(
      "tokens_to_map", {channels, height, width}, std::move(out), seq.tokens,
      [order, channels, height, width](detail::Node& nd) {
        for (std::size_t t = 0; t < order.size(); ++t) {
          auto& g = detail::parent_grad(nd, t);
          auto [y, x] = order[t];
          for (std::size_t ch = 0; ch < channels; ++ch)
            g[ch] += nd.grad[(ch * height + y) * width + x];
        }
      });
}

}  // namespace medttt

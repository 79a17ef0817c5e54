#include "medttt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "medttt/attention_oracles.hpp"
#include "medttt/errors.hpp"
#include "medttt/ttt.hpp"

namespace medttt {

namespace {

using Clock = std::chrono::steady_clock;

TokenSequence to_tokens(const std::vector<oracle::Vec>& seq) {
  TokenSequence s;
  s.tokens.reserve(seq.size());
  for (const auto& x : seq) s.tokens.push_back(Tensor({x.size()}, x));
  return s;
}

// One timed forward pass; the consumed sink defeats dead-code elimination.
double run_impl(const std::string& impl, const std::vector<oracle::Vec>& seq,
                const TokenSequence& tseq, const oracle::Projections& oproj,
                const TttProjections& proj, const TttConfig& cfg,
                const TttState& start) {
  double sink = 0.0;
  if (impl == "ttt_minibatch") {
    auto z = forward_minibatch(tseq, cfg, proj, start);
    sink = z.back().at(0);
  } else if (impl == "ttt_online") {
    auto z = forward_online(tseq, cfg, proj, start);
    sink = z.back().at(0);
  } else if (impl == "linear_attn") {
    auto z = oracle::linear_attention(seq, oproj);
    sink = z.back()[0];
  } else if (impl == "softmax_attn") {
    oracle::OracleConfig ocfg{oproj.d, true};
    auto z = oracle::softmax_attention(seq, oproj, ocfg);
    sink = z.back()[0];
  } else {
    throw ConfigError("unknown bench impl '" + impl + "'");
  }
  return sink;
}

}  // namespace

double fit_loglog_slope(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) throw ConfigError("slope fit needs >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double n = double(pts.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

BenchOutput run_bench(const BenchConfig& cfg) {
  if (cfg.token_counts.size() < 2)
    throw ConfigError("bench needs at least two token counts");
  auto [mn, mx] = std::minmax_element(cfg.token_counts.begin(),
                                      cfg.token_counts.end());
  if (double(*mx) / double(*mn) < 16.0)
    throw ConfigError("token counts must span at least a 16x range");

  BenchOutput out;
  for (const auto& impl : cfg.impls) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t T : cfg.token_counts) {
      std::size_t b = cfg.minibatch_b;
      if (impl == "ttt_minibatch" && T % b != 0)
        throw ConfigError("token count " + std::to_string(T) +
                          " not divisible by minibatch size " +
                          std::to_string(b));
      auto oproj = oracle::random_projections(cfg.d_model, cfg.seed, 0.1);
      auto seq = oracle::random_sequence(T, cfg.d_model, cfg.seed ^ T);
      TokenSequence tseq = to_tokens(seq);
      TttProjections proj;
      proj.theta_k = Tensor({cfg.d_model, cfg.d_model}, oproj.theta_k);
      proj.theta_v = Tensor({cfg.d_model, cfg.d_model}, oproj.theta_v);
      proj.theta_q = Tensor({cfg.d_model, cfg.d_model}, oproj.theta_q);
      TttConfig tcfg;
      tcfg.d_model = cfg.d_model;
      tcfg.minibatch_b = b;
      tcfg.eta = 0.01;
      TttState start = zero_state(tcfg);

      volatile double sink = 0.0;
      for (std::size_t i = 0; i < cfg.warmup; ++i)
        sink = sink + run_impl(impl, seq, tseq, oproj, proj, tcfg, start);

      std::vector<std::uint64_t> times;
      for (std::size_t i = 0; i < std::max<std::size_t>(cfg.reps, 1); ++i) {
        auto t0 = Clock::now();
        sink = sink + run_impl(impl, seq, tseq, oproj, proj, tcfg, start);
        auto t1 = Clock::now();
        times.push_back(std::uint64_t(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
                .count()));
      }
      std::sort(times.begin(), times.end());
      std::uint64_t median = times[times.size() / 2];
      // steady_clock tick on this platform is 1ns; require >= 100 ticks.
      std::uint64_t tick_ns = std::max<std::uint64_t>(
          1, std::uint64_t(1e9 * double(Clock::period::num) /
                           double(Clock::period::den)));
      if (median < 100 * tick_ns)
        throw ConfigError(
            "benchmark error: timer resolution insufficient (<100 ticks per "
            "run); use larger token counts");
      out.records.push_back({impl, T, impl.rfind("ttt", 0) == 0 ? b : 0,
                             median});
      pts.emplace_back(double(T), double(median));
    }
    out.slopes[impl] = fit_loglog_slope(pts);
  }
  return out;
}

MinibatchSensitivity minibatch_b_sensitivity(std::size_t tokens,
                                             std::size_t b, std::size_t d,
                                             std::uint64_t seed) {
  auto oproj = oracle::random_projections(d, seed, 0.3);
  auto seq = to_tokens(oracle::random_sequence(tokens, d, seed ^ 0x51));
  TttProjections proj;
  proj.theta_k = Tensor({d, d}, oproj.theta_k);
  proj.theta_v = Tensor({d, d}, oproj.theta_v);
  proj.theta_q = Tensor({d, d}, oproj.theta_q);

  auto run = [&](std::size_t bb, bool at_init) {
    TttConfig cfg;
    cfg.d_model = d;
    cfg.minibatch_b = bb;
    cfg.eta = 0.1;
    cfg.grads_at_init = at_init;
    return forward_minibatch(seq, cfg, proj, zero_state(cfg));
  };

  auto dev = [](const std::vector<Tensor>& a, const std::vector<Tensor>& z) {
    double m = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t)
      for (std::size_t i = 0; i < a[t].size(); ++i)
        m = std::max(m, std::abs(a[t].at(i) - z[t].at(i)));
    return m;
  };

  MinibatchSensitivity s;
  s.dev_grads_at_init = dev(run(b, true), run(2 * b, true));
  s.dev_standard = dev(run(b, false), run(2 * b, false));
  return s;
}

std::string bench_csv(const BenchOutput& out) {
  std::ostringstream os;
  os << "impl,T,b,wall_ns\n";
  for (const auto& r : out.records)
    os << r.impl << "," << r.tokens << "," << r.minibatch_b << ","
       << r.wall_ns << "\n";
  return os.str();
}

}  // namespace medttt

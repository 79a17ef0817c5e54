#include "medttt/frequency.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace medttt {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey; invert flips the twiddle sign only
// (normalization is applied by the caller).
void fft_radix2(std::vector<cd>& a, bool invert) {
  std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * std::numbers::pi / double(len) * (invert ? 1.0 : -1.0);
    cd wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        cd u = a[i + j];
        cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

void dft_direct(std::vector<cd>& a, bool invert) {
  std::size_t n = a.size();
  std::vector<cd> out(n, cd(0.0));
  double sign = invert ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      double ang = sign * 2.0 * std::numbers::pi * double(k) * double(j) /
                   double(n);
      out[k] += a[j] * cd(std::cos(ang), std::sin(ang));
    }
  a = std::move(out);
}

void transform_1d(std::vector<cd>& a, bool invert) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size()))
    fft_radix2(a, invert);
  else
    dft_direct(a, invert);
}

// Row-column 2D transform on an h x w complex grid.
void transform_2d(std::vector<cd>& grid, std::size_t h, std::size_t w,
                  bool invert) {
  std::vector<cd> line(std::max(h, w));
  for (std::size_t y = 0; y < h; ++y) {
    line.assign(grid.begin() + y * w, grid.begin() + (y + 1) * w);
    transform_1d(line, invert);
    std::copy(line.begin(), line.end(), grid.begin() + y * w);
  }
  for (std::size_t x = 0; x < w; ++x) {
    line.resize(h);
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    transform_1d(line, invert);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = line[y];
  }
}

// Centered radial frequency of bin (u, v) as a fraction of the Nyquist
// radius, in [0, sqrt(2)].
double radial_ratio(std::size_t u, std::size_t v, std::size_t h,
                    std::size_t w) {
  double fu = double(u <= h / 2 ? u : u - h);
  double fv = double(v <= w / 2 ? v : v - w);
  double nu = h > 1 ? double(h) / 2.0 : 1.0;
  double nv = w > 1 ? double(w) / 2.0 : 1.0;
  double ru = fu / nu, rv = fv / nv;
  return std::sqrt(ru * ru + rv * rv);
}

}  // namespace

FrequencyFeatures dft2(const Plane& image) {
  if (image.h < 1 || image.w < 1)
    throw ShapeError("dft2: empty image");
  std::size_t h = image.h, w = image.w;
  std::vector<cd> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = cd(image.data[i], 0.0);
  transform_2d(grid, h, w, false);

  FrequencyFeatures f;
  f.h = h;
  f.w = w;
  f.real.resize(h * w);
  f.imag.resize(h * w);
  f.magnitude.resize(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    f.real[i] = grid[i].real();
    f.imag[i] = grid[i].imag();
    f.magnitude[i] = std::abs(grid[i]);
  }
  return f;
}

FrequencyFeatures highpass_filter(const FrequencyFeatures& freq,
                                  const HighPassConfig& cfg) {
  if (!(cfg.cutoff_ratio > 0.0 && cfg.cutoff_ratio < 1.0))
    throw ConfigError("cutoff_ratio must lie in (0,1), got " +
                      std::to_string(cfg.cutoff_ratio));
  FrequencyFeatures out = freq;
  for (std::size_t u = 0; u < freq.h; ++u)
    for (std::size_t v = 0; v < freq.w; ++v) {
      std::size_t i = u * freq.w + v;
      double r = radial_ratio(u, v, freq.h, freq.w);
      double gain;
      if (u == 0 && v == 0) {
        gain = 0.0;  // DC always suppressed
      } else if (cfg.transition == Transition::kHard) {
        gain = r < cfg.cutoff_ratio ? 0.0 : 1.0;
      } else {
        double c = cfg.cutoff_ratio;
        gain = 1.0 - std::exp(-(r * r) / (2.0 * c * c));
      }
      out.real[i] = freq.real[i] * gain;
      out.imag[i] = freq.imag[i] * gain;
      out.magnitude[i] = freq.magnitude[i] * gain;
    }
  return out;
}

Plane idft2(const FrequencyFeatures& freq) {
  std::size_t h = freq.h, w = freq.w;
  std::vector<cd> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i)
    grid[i] = cd(freq.real[i], freq.imag[i]);
  transform_2d(grid, h, w, true);
  Plane out(h, w);
  double norm = 1.0 / double(h * w);
  for (std::size_t i = 0; i < h * w; ++i) out.data[i] = grid[i].real() * norm;
  return out;
}

Plane extract_high_freq(const Plane& image, const HighPassConfig& cfg) {
  FrequencyFeatures f = dft2(image);
  FrequencyFeatures filtered = highpass_filter(f, cfg);
  Plane hp = idft2(filtered);
  return hp;
}

}  // namespace medttt

#pragma once

#include <cstddef>
#include <vector>

#include "medttt/errors.hpp"

namespace medttt {

// A real H x W image plane, row-major.
struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(std::size_t h_, std::size_t w_, double fill = 0.0)
      : h(h_), w(w_), data(h_ * w_, fill) {}
  double& at(std::size_t y, std::size_t x) { return data[y * w + x]; }
  double at(std::size_t y, std::size_t x) const { return data[y * w + x]; }
};

// Forward 2D DFT planes of a real image plus derived features.
struct FrequencyFeatures {
  std::size_t h = 0, w = 0;
  std::vector<double> real;
  std::vector<double> imag;
  std::vector<double> magnitude;
  Plane highpass;  // filled by extract_high_freq
};

enum class Transition { kHard, kGaussian };

struct HighPassConfig {
  double cutoff_ratio = 0.1;  // suppressed radius as a fraction of Nyquist
  Transition transition = Transition::kHard;
};

// Unnormalized forward DFT, row-column decomposition; radix-2 FFT on
// power-of-two extents, direct DFT otherwise.
FrequencyFeatures dft2(const Plane& image);

// Zero (hard) or attenuate (gaussian) bins below the cutoff radius; the DC
// bin is always zeroed.
FrequencyFeatures highpass_filter(const FrequencyFeatures& freq,
                                  const HighPassConfig& cfg);

// Inverse transform with 1/(H*W) normalization, real part.
Plane idft2(const FrequencyFeatures& freq);

// idft2(highpass_filter(dft2(image))), real part.
Plane extract_high_freq(const Plane& image, const HighPassConfig& cfg);

}  // namespace medttt

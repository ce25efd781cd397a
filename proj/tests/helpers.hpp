#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "trimlab/model.hpp"
#include "trimlab/rng.hpp"
#include "trimlab/tensor.hpp"

namespace testing {

using namespace trimlab;

// Images drawn away from the box edges so +-h probes stay inside [0, 1].
inline ImageTensor random_image(const Shape& s, std::uint64_t seed, double lo = 0.05,
                                double hi = 0.95) {
  CounterRng rng(derive_key(seed, {0xA11CE}));
  std::vector<double> v(s.size());
  for (double& x : v) x = rng.uniform(lo, hi);
  return ImageTensor(s, v);
}

// 4x4, hidden 1, features 1, centre taps only: z = mean(x) for x >= 0, and
// logits = (w_real * z + b_real, w_fake * z + b_fake).
inline DetectorModel mean_model(double w_real, double w_fake, double b_real = 0.0,
                                double b_fake = 0.0) {
  Architecture a;
  a.height = a.width = 4;
  a.hidden = a.features = 1;
  DetectorModel m(a);
  m.conv1_weight()[4] = 1.0;
  m.conv2_weight()[4] = 1.0;
  m.head_weight()[0] = w_real;
  m.head_weight()[1] = w_fake;
  m.head_bias()[0] = b_real;
  m.head_bias()[1] = b_fake;
  return m;
}

// Random init with the head scaled up so entropies spread away from ln 2.
inline DetectorModel sharp_model(std::uint64_t seed, double scale = 40.0) {
  DetectorModel m = DetectorModel::initialized(Architecture{}, seed);
  for (double& w : m.head_weight()) w *= scale;
  return m;
}

// |a - b| / max(|a|, |b|, floor); the floor sits well above the ~1e-10 rounding noise
// of a central difference at h = 1e-6.
inline double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double ce_at(const DetectorModel& m, const ImageTensor& x, Label y) {
  return cross_entropy(softmax(forward(m, x).logits), y);
}

}  // namespace testing

#pragma once

// Randomized preprocessing used as the second-stage denoiser.
//
// Randomness is consumed in a fixed order so that a (spec, stream key, input)
// triple always produces the same output:
//   GaussianBlur       no draws
//   RandomResizedCrop  per attempt (<= 10): scale, log-aspect, then row and column
//                      offsets only when the crop fits; no draws for the fallback
//   HorizontalFlip     exactly one uniform draw, flip when draw < p

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "trimlab/rng.hpp"
#include "trimlab/tensor.hpp"

namespace trimlab {

struct GaussianBlurStep {
  std::size_t kernel = 3;
  double sigma = 0.8;
  bool operator==(const GaussianBlurStep&) const = default;
};

struct RandomResizedCropStep {
  double scale_min = 0.5;
  double scale_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  bool operator==(const RandomResizedCropStep&) const = default;
};

struct HorizontalFlipStep {
  double p = 1.0;
  bool operator==(const HorizontalFlipStep&) const = default;
};

using DenoiseStep = std::variant<GaussianBlurStep, RandomResizedCropStep, HorizontalFlipStep>;

struct DenoiserSpec {
  std::vector<DenoiseStep> steps;
  std::size_t draws = 1;  // k draws per input

  void validate() const;
  bool operator==(const DenoiserSpec&) const = default;

  /// Blur(3, 0.8) -> RandomResizedCrop(0.5..1) -> HorizontalFlip(1).
  static DenoiserSpec blur_crop_flip();
  /// HorizontalFlip(1) only.
  static DenoiserSpec flip_only();
  static DenoiserSpec identity() { return {}; }
};

/// Text form used inside profile files, e.g.
///   "blur(3,0.8); crop(0.5,1,0.75,1.3333333333333333); flip(1)"; "none" for no steps.
std::string format_steps(const std::vector<DenoiseStep>& steps);
std::vector<DenoiseStep> parse_steps(const std::string& text);

/// Normalized kernel x kernel weights exp(-(i^2 + j^2) / (2 sigma^2)), row-major.
std::vector<double> gaussian_kernel(std::size_t kernel, double sigma);

/// Per-channel 2-D convolution with the normalized Gaussian, reflect boundary.
/// Throws InvalidArgument for an even kernel or non-positive sigma.
ImageTensor gaussian_blur(const ImageTensor& x, std::size_t kernel, double sigma);

/// Bilinear resize sampling at pixel centers: src = (dst + 0.5) * in / out - 0.5,
/// clamped to the source grid.
ImageTensor resize_bilinear(const ImageTensor& x, std::size_t out_h, std::size_t out_w);

ImageTensor random_resized_crop(const ImageTensor& x, const RandomResizedCropStep& step,
                                CounterRng& rng);

ImageTensor horizontal_flip(const ImageTensor& x, double p, CounterRng& rng);

ImageTensor apply_denoiser(const DenoiserSpec& spec, const ImageTensor& x, CounterRng& rng);

/// Stream for draw `draw` of sample `sample_id`: key derived from (seed, kDenoise, sample, draw).
CounterRng denoise_stream(std::uint64_t seed, std::uint64_t sample_id, std::uint64_t draw);

}  // namespace trimlab

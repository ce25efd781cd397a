#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "trimlab/denoise.hpp"
#include "trimlab/error.hpp"

using namespace trimlab;
using testing::random_image;

TEST_CASE("blur keeps constants and reproduces the kernel from an impulse") {
  const ImageTensor c({1, 8, 8}, 0.37);
  const ImageTensor bc = gaussian_blur(c, 3, 0.8);
  for (double v : bc.values()) CHECK(std::abs(v - 0.37) <= 1e-15);

  std::vector<double> v(25, 0.0);
  v[12] = 1.0;
  const ImageTensor b = gaussian_blur(ImageTensor({1, 5, 5}, v), 3, 0.8);
  // normalized exp(-(i^2 + j^2) / 1.28)
  const double e1 = std::exp(-1.0 / 1.28), e2 = std::exp(-2.0 / 1.28);
  const double z = 1.0 + 4.0 * e1 + 4.0 * e2;
  CHECK(std::abs(b.at(0, 2, 2) - 1.0 / z) <= 1e-15);
  CHECK(std::abs(b.at(0, 1, 2) - e1 / z) <= 1e-15);
  CHECK(std::abs(b.at(0, 1, 1) - e2 / z) <= 1e-15);
  CHECK(b.at(0, 0, 0) == 0.0);
  CHECK_THROWS_AS(gaussian_blur(c, 4, 0.8), InvalidArgument);
  CHECK_THROWS_AS(gaussian_blur(c, 3, 0.0), InvalidArgument);
}

TEST_CASE("crop with unit scale and aspect is the identity") {
  const ImageTensor x = random_image({1, 16, 16}, 3);
  CounterRng rng(1);
  CHECK(random_resized_crop(x, {1.0, 1.0, 1.0, 1.0}, rng) == x);
}

TEST_CASE("crop is seeded and shape preserving") {
  const ImageTensor x = random_image({2, 12, 16}, 3);
  for (std::uint64_t s = 0; s < 20; ++s) {
    CounterRng a(s), b(s);
    const ImageTensor ya = random_resized_crop(x, {}, a);
    CHECK(ya == random_resized_crop(x, {}, b));
    CHECK(ya.shape() == x.shape());
  }
}

TEST_CASE("flip") {
  CounterRng rng(0);
  const ImageTensor ab({1, 1, 2}, std::vector<double>{0.2, 0.9});
  const ImageTensor f = horizontal_flip(ab, 1.0, rng);
  CHECK(f.at(0, 0, 0) == 0.9);
  CHECK(f.at(0, 0, 1) == 0.2);
  const ImageTensor x = random_image({3, 8, 8}, 1);
  CHECK(horizontal_flip(horizontal_flip(x, 1.0, rng), 1.0, rng) == x);
  CHECK(horizontal_flip(x, 0.0, rng) == x);
}

TEST_CASE("denoiser pipelines") {
  const ImageTensor x = random_image({1, 16, 16}, 5);
  CounterRng r0(0);
  CHECK(apply_denoiser(DenoiserSpec::identity(), x, r0) == x);

  CounterRng r1 = denoise_stream(3, 7, 0), r2 = denoise_stream(3, 7, 0);
  const DenoiserSpec bcf = DenoiserSpec::blur_crop_flip();
  CHECK(apply_denoiser(bcf, x, r1) == apply_denoiser(bcf, x, r2));

  CounterRng r3 = denoise_stream(0, 1, 0);
  const ImageTensor f = apply_denoiser(DenoiserSpec::flip_only(), x, r3);
  std::vector<double> a(x.values().begin(), x.values().end()), b(f.values().begin(), f.values().end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("defaults and step text") {
  const DenoiserSpec d = DenoiserSpec::blur_crop_flip();
  REQUIRE(d.steps.size() == 3);
  const auto& blur = std::get<GaussianBlurStep>(d.steps[0]);
  CHECK(blur.kernel == 3);
  CHECK(blur.sigma == 0.8);
  const auto& crop = std::get<RandomResizedCropStep>(d.steps[1]);
  CHECK(crop.scale_min == 0.5);
  CHECK(crop.scale_max == 1.0);
  CHECK(std::get<HorizontalFlipStep>(d.steps[2]).p == 1.0);
  CHECK(parse_steps(format_steps(d.steps)) == d.steps);
  CHECK(parse_steps("none").empty());
  CHECK_THROWS(parse_steps("blur(4,0.8)"));
  CHECK_THROWS(parse_steps("sharpen(1)"));
  DenoiserSpec bad = d;
  bad.draws = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

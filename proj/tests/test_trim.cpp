#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "trimlab/defense.hpp"
#include "trimlab/error.hpp"
#include "trimlab/info.hpp"

using namespace trimlab;
using testing::random_image;

namespace {
constexpr double kLn2 = 0.6931471805599453;

TrimConfig flip_cfg(double h_min, double h_max, double tau) {
  TrimConfig c;
  c.h_min = h_min;
  c.h_max = h_max;
  c.tau = KlThreshold::single(tau);
  c.denoiser = DenoiserSpec::flip_only();
  return c;
}

std::vector<ImageTensor> images(std::size_t n, std::uint64_t seed) {
  std::vector<ImageTensor> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(random_image({1, 16, 16}, seed + i));
  return v;
}
}  // namespace

TEST_CASE("entropy 1e-20 under the cnnspot bounds flips") {
  DetectorModel m(Architecture{});
  m.head_bias()[1] = 50.0;  // p_real = e^-50, H ~ 51 e^-50 ~ 9.8e-21
  const TrimVerdict v = trim_predict(m, preset_profile("cnnspot"), ImageTensor({1, 16, 16}, 0.5));
  CHECK(v.entropy < 1e-15);
  CHECK(v.entropy > 1e-21);
  CHECK(v.raw_label == kFake);
  CHECK(v.gate == Gate::kEntropyFlip);
  CHECK(v.final_label == kReal);
  CHECK_FALSE(v.kl.has_value());
}

TEST_CASE("identity denoiser passes with zero KL") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 1);
  TrimConfig c;
  c.denoiser = DenoiserSpec::identity();
  c.tau = KlThreshold::single(1e-12);
  for (const ImageTensor& x : images(5, 10)) {
    const TrimVerdict v = trim_predict(m, c, x);
    CHECK(v.gate == Gate::kPass);
    REQUIRE(v.kl.has_value());
    CHECK(*v.kl == 0.0);
    CHECK(v.final_label == v.raw_label);
  }
}

TEST_CASE("KL gate fires above tau and not at or below it") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 2);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const ImageTensor x = random_image({1, 16, 16}, 40 + i);
    const double kl = denoised_kl(m, flip_cfg(0, kLn2, 1), x, i);
    REQUIRE(kl > 0.0);
    const TrimVerdict hi = trim_predict(m, flip_cfg(0, kLn2, kl / 2), x, i);
    CHECK(hi.gate == Gate::kKlFlip);
    CHECK(*hi.kl == kl);
    CHECK(hi.final_label == flip_label(hi.raw_label));
    CHECK(trim_predict(m, flip_cfg(0, kLn2, kl), x, i).gate == Gate::kPass);
    CHECK(trim_predict(m, flip_cfg(0, kLn2, 2 * kl), x, i).gate == Gate::kPass);
  }
}

TEST_CASE("per-class tau follows the raw prediction") {
  DetectorModel m = DetectorModel::initialized(Architecture{}, 2);
  const ImageTensor x = random_image({1, 16, 16}, 3);
  TrimConfig c = flip_cfg(0, kLn2, 1);
  const double kl = denoised_kl(m, c, x);
  const Label raw = predict(forward(m, x).logits);
  c.tau = raw == kReal ? KlThreshold::per_class(kl / 2, 1.0) : KlThreshold::per_class(1.0, kl / 2);
  CHECK(trim_predict(m, c, x).gate == Gate::kKlFlip);
  c.tau = raw == kReal ? KlThreshold::per_class(1.0, kl / 2) : KlThreshold::per_class(kl / 2, 1.0);
  CHECK(trim_predict(m, c, x).gate == Gate::kPass);
}

TEST_CASE("entropy gate checks both bounds") {
  const DetectorModel m = testing::sharp_model(3);
  const ImageTensor x = random_image({1, 16, 16}, 4);
  const double h = prediction_entropy(softmax(forward(m, x).logits));
  CHECK(trim_predict(m, flip_cfg(h * 1.01, kLn2, 1e9), x).gate == Gate::kEntropyFlip);
  CHECK(trim_predict(m, flip_cfg(0, h * 0.99, 1e9), x).gate == Gate::kEntropyFlip);
  CHECK(trim_predict(m, flip_cfg(h, h * 1.01, 1e9), x).gate == Gate::kPass);
}

TEST_CASE("entropy-only mode never fires the KL gate") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 3);
  const TrimConfig c = flip_cfg(0, kLn2, 1e-12).entropy_only();
  CHECK(std::isinf(c.tau.when_real));
  for (const ImageTensor& x : images(10, 70)) CHECK(trim_predict(m, c, x).gate == Gate::kPass);
}

TEST_CASE("verdicts move toward PASS as the thresholds widen") {
  const DetectorModel m = testing::sharp_model(4);
  const std::vector<ImageTensor> xs = images(12, 90);
  std::vector<double> hs;
  for (const ImageTensor& x : xs) hs.push_back(prediction_entropy(softmax(forward(m, x).logits)));
  const double hmid = empirical_quantile(hs, 0.5);
  const std::vector<double> lows{0.0, hmid * 0.5, hmid, hmid * 1.001};
  const std::vector<double> highs{hmid * 1.002, std::min(hmid * 1.5, kLn2 * 0.999), kLn2};
  const std::vector<double> taus{1e-12, 1e-6, 1e-3, 1.0};
  auto passes = [&](double lo, double hi, double tau, std::size_t i) {
    return trim_predict(m, flip_cfg(lo, hi, tau), xs[i], i).gate == Gate::kPass;
  };
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t a = 0; a < lows.size(); ++a)
      for (std::size_t b = 0; b < highs.size(); ++b)
        for (std::size_t t = 0; t < taus.size(); ++t) {
          if (!passes(lows[a], highs[b], taus[t], i)) continue;
          if (a > 0) CHECK(passes(lows[a - 1], highs[b], taus[t], i));
          if (b + 1 < highs.size()) CHECK(passes(lows[a], highs[b + 1], taus[t], i));
          if (t + 1 < taus.size()) CHECK(passes(lows[a], highs[b], taus[t + 1], i));
        }
}

TEST_CASE("mean-over-k averages the per-draw KL") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 5);
  const ImageTensor x = random_image({1, 16, 16}, 6);
  TrimConfig c;
  c.denoiser = DenoiserSpec::blur_crop_flip();
  c.denoiser.draws = 4;
  c.aggregation = KlAggregation::kMeanOverK;
  c.seed = 9;
  const SoftmaxOutput yb = softmax(forward(m, x).logits);
  double sum = 0.0;
  for (std::uint64_t d = 0; d < 4; ++d) {
    CounterRng rng = denoise_stream(9, 2, d);
    sum += kl_divergence(yb, softmax(forward(m, apply_denoiser(c.denoiser, x, rng)).logits));
  }
  CHECK(std::abs(denoised_kl(m, c, x, 2) - sum / 4) <= 1e-15);
  TrimConfig bad = c;
  bad.aggregation = KlAggregation::kSingleDraw;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(flip_cfg(0.2, 0.1, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(flip_cfg(0.0, 0.7, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(flip_cfg(0.0, 0.5, 0).validate(), InvalidArgument);
  CHECK_NOTHROW(flip_cfg(0.0, kLn2, INFINITY).validate());
}

TEST_CASE("empirical quantile") {
  CHECK(empirical_quantile({3, 1, 2}, 0.0) == 1);
  CHECK(empirical_quantile({3, 1, 2}, 0.5) == 2);
  CHECK(empirical_quantile({3, 1, 2}, 1.0) == 3);
  CHECK(empirical_quantile({5}, 0.999) == 5);
  CHECK_THROWS_AS(empirical_quantile({}, 0.5), InvalidArgument);
  CHECK_THROWS_AS(empirical_quantile({1}, 1.5), InvalidArgument);
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>((i * 7919) % 1000);
  const double hi = empirical_quantile(v, 0.999), lo = empirical_quantile(v, 0.001);
  std::size_t above = 0, below = 0;
  for (double x : v) above += x > hi, below += x < lo;
  CHECK(above <= 1);
  CHECK(below <= 1);
}

TEST_CASE("entropy calibration") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 6);
  const std::vector<ImageTensor> xs = images(200, 500);
  const EntropyCalibration c = calibrate_entropy_bounds(m, xs);
  CHECK(c.h_min == 0.1 * c.q_lower);
  CHECK(c.h_max == std::min(10 * c.q_upper, kLn2));
  std::size_t outside = 0;
  for (const ImageTensor& x : xs) {
    const double h = prediction_entropy(softmax(forward(m, x).logits));
    outside += h < c.q_lower || h > c.q_upper;
  }
  CHECK(outside <= 200 * 0.002);

  const EntropyCalibration one = calibrate_entropy_bounds(m, std::vector<ImageTensor>(1, xs[0]));
  CHECK_FALSE(one.warnings.empty());
  CHECK(one.q_lower == one.q_upper);
  CHECK(one.h_min < one.q_lower);
  CHECK(one.h_max > one.q_upper);
  CHECK_THROWS_AS(calibrate_entropy_bounds(m, {}), InvalidArgument);
  CHECK_THROWS_AS(calibrate_entropy_bounds(m, xs, 0.5, 0.4), InvalidArgument);
}

TEST_CASE("KL calibration") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 6);
  const std::vector<ImageTensor> xs = images(300, 900);
  TrimConfig c = flip_cfg(0, kLn2, 1);

  TrimConfig ident = c;
  ident.denoiser = DenoiserSpec::identity();
  const KlCalibration d = calibrate_kl_threshold(m, xs, ident);
  CHECK(d.degenerate);
  CHECK(d.tau.when_real == kKlThresholdFloor);
  CHECK_FALSE(d.warnings.empty());

  const KlCalibration k = calibrate_kl_threshold(m, xs, c, 0.99);
  CHECK_FALSE(k.degenerate);
  std::size_t above = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) above += denoised_kl(m, c, xs[i], i) > k.tau.when_real;
  CHECK(above <= 3);

  const KlCalibration pc = calibrate_kl_threshold(m, xs, c, 0.99, true);
  CHECK(pc.tau.when_real > 0.0);
  CHECK(pc.tau.when_fake > 0.0);

  DetectorModel always_fake(Architecture{});
  always_fake.head_bias()[1] = 1.0;
  const KlCalibration fb = calibrate_kl_threshold(always_fake, xs, c, 0.99, true);
  CHECK(fb.tau.when_real == fb.tau.when_fake);
  CHECK_FALSE(fb.warnings.empty());
  CHECK_THROWS_AS(calibrate_kl_threshold(m, {}, c), InvalidArgument);
}

TEST_CASE("evaluation with an unchanged adversarial set") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 7);
  const std::vector<ImageTensor> xs = images(20, 40);
  std::vector<Label> ys;
  for (int i = 0; i < 20; ++i) ys.push_back(static_cast<Label>(i % 2));
  const TrimConfig c = flip_cfg(0, kLn2, 1e-4);
  const EvalReport r = evaluate_defense(m, c, xs, ys, AttackConfig::pgd(0.0));
  CHECK(r.raw_robust_accuracy == r.raw_clean_accuracy);
  CHECK(r.trim_robust_accuracy == r.trim_clean_accuracy);
  CHECK(r.rows.size() == 40);
  CHECK(r.clean_gates.pass + r.clean_gates.entropy_flip + r.clean_gates.kl_flip == 20);

  const std::string csv = format_eval_csv(r);
  CHECK(csv.rfind(std::string(kEvalCsvSchema) +
                      "\ninput,sample_id,true_label,raw_label,final_label,entropy,kl,gate\n", 0) == 0);
  CHECK(format_eval_summary(r).find("TRIM robust accuracy") != std::string::npos);
}

TEST_CASE("profile round trip") {
  TrimConfig c = flip_cfg(1.2345678901234567e-7, 0.5, 1);
  c.tau = KlThreshold::per_class(1e-10, 3.3e-6);
  c.seed = 42;
  CHECK(parse_profile(format_profile(c, "x")) == c);
  TrimConfig k;
  k.denoiser.draws = 8;
  k.aggregation = KlAggregation::kMeanOverK;
  CHECK(parse_profile(format_profile(k)) == k);
  for (const std::string& n : preset_names())
    CHECK(parse_profile(format_profile(preset_profile(n))) == preset_profile(n));

  const auto path = std::filesystem::temp_directory_path() / "trimlab_test_profile.txt";
  save_profile(c, path);
  CHECK(load_profile(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("profile parse errors carry the line offset") {
  const std::string good = "h_min = 0\nh_max = 0.5\ntau = 1\ndenoiser = flip(1)\n";
  CHECK_NOTHROW(parse_profile(good));
  try {
    parse_profile(good + "colour = red\n");
    FAIL("unknown key accepted");
  } catch (const ParseError& e) {
    CHECK(e.offset() == good.size());
  }
  CHECK_THROWS_AS(parse_profile(good + "tau = 2\n"), ParseError);
  CHECK_THROWS_AS(parse_profile("h_min = zero\nh_max = 0.5\ntau = 1\ndenoiser = none\n"), ParseError);
  CHECK_THROWS_AS(parse_profile("h_min = 0\ntau = 1\ndenoiser = none\n"), ParseError);
  CHECK_THROWS_AS(parse_profile("h_min = 0.6\nh_max = 0.5\ntau = 1\ndenoiser = none\n"), InvalidArgument);
}

TEST_CASE("presets carry the published settings") {
  const TrimConfig cnn = preset_profile("cnnspot");
  CHECK(cnn.h_min == 1e-15);
  CHECK(cnn.h_max == 1e-1);
  CHECK(cnn.tau == KlThreshold::single(1.0));
  CHECK(cnn.denoiser == DenoiserSpec::blur_crop_flip());

  const TrimConfig uni = preset_profile("univfd");
  CHECK(uni.h_min == 1e-6);
  CHECK(uni.h_max == 6e-1);
  CHECK(uni.tau == KlThreshold::single(1.0));
  CHECK(uni.denoiser == DenoiserSpec::blur_crop_flip());

  const TrimConfig npr = preset_profile("npr");
  CHECK(npr.h_min == 1e-25);
  CHECK(npr.h_max == 1e-1);
  CHECK(npr.tau == KlThreshold::per_class(1e-10, 1e-6));
  CHECK(npr.denoiser == DenoiserSpec::flip_only());

  const TrimConfig fp = preset_profile("freqnet-progan");
  CHECK(fp.h_min == 1e-20);
  CHECK(fp.h_max == 0.2);
  CHECK(fp.tau == KlThreshold::per_class(1e-6, 1e-2));
  CHECK(fp.denoiser == DenoiserSpec::flip_only());

  const TrimConfig fg = preset_profile("freqnet-genimage");
  CHECK(fg.tau == KlThreshold::per_class(1e-4, 1.0));
  CHECK_THROWS_AS(preset_profile("resnet"), InvalidArgument);
}

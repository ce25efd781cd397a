#pragma once

// Two-stage test-time defense.
//
//   y_b = softmax(f(x)), H = entropy(y_b), raw = argmax y_b
//   H outside [h_min, h_max]        -> ENTROPY_FLIP, label 1 - raw, KL never computed
//   else x_a = denoise(x), y_a = softmax(f(x_a))
//        D_KL(y_b || y_a) > tau(raw) -> KL_FLIP, label 1 - raw
//        otherwise                  -> PASS, label raw
//
// With k > 1 draws and mean-over-k aggregation the KL is the mean over draws.
// tau = +inf gives the entropy-only mode.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trimlab/attacks.hpp"
#include "trimlab/denoise.hpp"
#include "trimlab/model.hpp"
#include "trimlab/tensor.hpp"

namespace trimlab {

enum class Gate { kPass, kEntropyFlip, kKlFlip };
enum class KlAggregation { kSingleDraw, kMeanOverK };

std::string to_string(Gate g);
std::string to_string(KlAggregation a);
KlAggregation parse_kl_aggregation(const std::string& s);

/// Either one threshold or a pair selected by the raw prediction.
struct KlThreshold {
  double when_real = 1.0;
  double when_fake = 1.0;

  static KlThreshold single(double tau) { return {tau, tau}; }
  static KlThreshold per_class(double when_real, double when_fake) { return {when_real, when_fake}; }
  static KlThreshold infinite() {
    return single(std::numeric_limits<double>::infinity());
  }

  bool is_single() const noexcept { return when_real == when_fake; }
  double for_prediction(Label raw) const noexcept { return raw == kReal ? when_real : when_fake; }
  bool operator==(const KlThreshold&) const = default;
};

struct TrimConfig {
  double h_min = 0.0;
  double h_max = 0.6931471805599453;
  KlThreshold tau;
  DenoiserSpec denoiser = DenoiserSpec::blur_crop_flip();
  KlAggregation aggregation = KlAggregation::kSingleDraw;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument unless 0 <= h_min < h_max <= ln 2, every tau > 0 (inf allowed),
  /// the denoiser is valid and single-draw aggregation is paired with draws = 1.
  void validate() const;
  bool operator==(const TrimConfig&) const = default;

  /// Same config with tau = +inf.
  TrimConfig entropy_only() const;
};

struct TrimVerdict {
  Label final_label = kReal;
  Label raw_label = kReal;
  Gate gate = Gate::kPass;
  double entropy = 0.0;
  std::optional<double> kl;  // absent when the entropy gate fires
};

/// Denoiser draw d for this call uses denoise_stream(cfg.seed, sample_id, d).
TrimVerdict trim_predict(const DetectorModel& model, const TrimConfig& cfg, const ImageTensor& x,
                         std::uint64_t sample_id = 0);

/// The KL stage alone (no entropy gate), using the same streams as trim_predict.
double denoised_kl(const DetectorModel& model, const TrimConfig& cfg, const ImageTensor& x,
                   std::uint64_t sample_id = 0);

/// Smallest sample value v with at least a q fraction of the sample <= v
/// (inverted empirical CDF). Throws InvalidArgument on an empty sample or q outside [0, 1].
double empirical_quantile(std::vector<double> values, double q);

struct EntropyCalibration {
  double h_min = 0.0;
  double h_max = 0.0;
  double q_lower = 0.0;  // quantiles before the safety factors
  double q_upper = 0.0;
  std::vector<std::string> warnings;
};

/// h_min = 0.1 * quantile(lower_q), h_max = min(10 * quantile(upper_q), ln 2) over clean
/// entropies. Throws InvalidArgument on an empty set or bad quantiles.
EntropyCalibration calibrate_entropy_bounds(const DetectorModel& model,
                                            std::span<const ImageTensor> clean,
                                            double lower_q = 0.001, double upper_q = 0.999);

struct KlCalibration {
  KlThreshold tau;
  bool degenerate = false;  // some quantile fell below the 1e-12 floor
  std::vector<std::string> warnings;
};

inline constexpr double kKlThresholdFloor = 1e-12;

/// tau = max(quantile_q of clean KL values, 1e-12), optionally per predicted class with
/// fallback to the global value for an empty class. `cfg` supplies denoiser, draws,
/// aggregation and seed; its thresholds are ignored.
KlCalibration calibrate_kl_threshold(const DetectorModel& model, std::span<const ImageTensor> clean,
                                     const TrimConfig& cfg, double quantile_q = 0.999,
                                     bool per_class = false);

struct EvalRow {
  bool adversarial = false;
  std::uint64_t sample_id = 0;
  Label true_label = kReal;
  TrimVerdict verdict;
};

struct GateCounts {
  std::size_t pass = 0, entropy_flip = 0, kl_flip = 0;
};

struct EvalReport {
  std::size_t n = 0;
  double raw_clean_accuracy = 0.0;
  double trim_clean_accuracy = 0.0;
  double raw_robust_accuracy = 0.0;
  double trim_robust_accuracy = 0.0;
  double attack_success_rate = 0.0;  // raw detector misclassifies the adversarial input
  GateCounts clean_gates;
  GateCounts adversarial_gates;
  std::vector<EvalRow> rows;  // all clean rows, then all adversarial rows
};

/// Runs TRIM and the raw detector on paired clean and adversarial sets.
EvalReport evaluate_defense(const DetectorModel& model, const TrimConfig& cfg,
                            std::span<const ImageTensor> clean, std::span<const Label> ys,
                            std::span<const ImageTensor> adversarial);

/// Generates the adversarial set with `attack` (sample id = index), then evaluates.
EvalReport evaluate_defense(const DetectorModel& model, const TrimConfig& cfg,
                            std::span<const ImageTensor> clean, std::span<const Label> ys,
                            const AttackConfig& attack);

inline constexpr std::string_view kEvalCsvSchema = "# schema: trimlab-eval-v1";

/// input,sample_id,true_label,raw_label,final_label,entropy,kl,gate
/// where input is clean|adversarial and kl is empty when absent.
std::string format_eval_csv(const EvalReport& report);

/// Text summary with accuracies and gate counts.
std::string format_eval_summary(const EvalReport& report);

// Profile file: UTF-8 "key = value" lines, '#' starts a comment.
//   h_min, h_max                 entropy bounds
//   tau                          single threshold, or
//   tau_real, tau_fake           thresholds selected by the raw prediction
//   denoiser                     step list as in format_steps
//   draws                        k
//   kl_aggregation               single-draw | mean-over-k
//   seed
std::string format_profile(const TrimConfig& cfg, std::string_view name = {});
/// Throws ParseError (byte offset of the offending line) on unknown keys, duplicate keys,
/// unparsable numbers or missing required keys; then validates.
TrimConfig parse_profile(std::string_view text);
void save_profile(const TrimConfig& cfg, const std::filesystem::path& path, std::string_view name = {});
TrimConfig load_profile(const std::filesystem::path& path);

/// Reference settings published for four large detectors: "cnnspot", "univfd", "npr",
/// "freqnet-progan", "freqnet-genimage".
TrimConfig preset_profile(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace trimlab

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "trimlab/model.hpp"
#include "trimlab/tensor.hpp"

namespace trimlab {

enum class AttackFamily { kFgsm, kPgd, kCwL2, kRandSearch };

std::string to_string(AttackFamily f);
AttackFamily parse_attack_family(const std::string& s);

/// Convert a budget given in units of 1/255.
constexpr double from_255(double v) noexcept { return v / 255.0; }

struct AttackConfig {
  AttackFamily family = AttackFamily::kPgd;
  double epsilon = 8.0 / 255.0;  // l-inf budget in intensity units
  double step_size = 2.0 / 255.0;
  std::size_t iterations = 40;
  double kappa = 0.0;  // C&W confidence
  double c = 1.0;      // C&W trade-off
  bool random_start = true;
  std::uint64_t seed = 0;

  void validate() const;

  static AttackConfig fgsm(double epsilon);
  /// 40 iterations, step epsilon / 4, random start.
  static AttackConfig pgd(double epsilon, std::uint64_t seed = 0);
  /// c = 1, 200 steps, learning rate 0.01 (carried in step_size).
  static AttackConfig cw(double kappa);
  static AttackConfig random_search(double epsilon, std::size_t queries, std::uint64_t seed = 0);

  /// Adaptive preset "Adapt1": PGD with epsilon = 1/255.
  static AttackConfig adapt1(std::uint64_t seed = 0) { return pgd(from_255(1.0), seed); }
  /// Adaptive preset "Adapt2": C&W with kappa = 0.
  static AttackConfig adapt2() { return cw(0.0); }
};

struct AttackOutcome {
  ImageTensor x_adv;
  bool success = false;  // raw detector's prediction differs from the true label
  std::size_t queries_or_steps = 0;
};

/// Called with (iteration index, current iterate) after every projected update.
using IterateObserver = std::function<void(std::size_t, const ImageTensor&)>;

/// x_adv = clip_[0,1](x + eps * sign(dL/dx)).
AttackOutcome fgsm(const DetectorModel& model, const ImageTensor& x, Label y,
                   const AttackConfig& cfg);

/// Optional uniform start in the eps-ball, then `iterations` of sign-gradient ascent,
/// l-inf projection and box clip. Randomness comes from (cfg.seed, kAttack, sample_id).
AttackOutcome pgd(const DetectorModel& model, const ImageTensor& x, Label y,
                  const AttackConfig& cfg, std::uint64_t sample_id = 0,
                  const IterateObserver& observer = {});

/// Adam on w with x(w) = (tanh(w) + 1) / 2 minimizing
///   ||x(w) - x||^2 + c * max(logit_true - logit_other + kappa, 0).
/// Returns the smallest-l2 iterate whose margin reaches kappa, else the last iterate.
AttackOutcome cw_l2(const DetectorModel& model, const ImageTensor& x, Label y,
                    const AttackConfig& cfg);

/// Square-patch random search at +-eps using forward passes only. A proposal is
/// kept only when it raises the cross-entropy; stops on first success.
AttackOutcome random_search_blackbox(const DetectorModel& model, const ImageTensor& x, Label y,
                                     const AttackConfig& cfg, std::uint64_t sample_id = 0,
                                     const std::function<void(double)>& on_accept = {});

/// Dispatch on cfg.family.
AttackOutcome run_attack(const DetectorModel& model, const ImageTensor& x, Label y,
                         const AttackConfig& cfg, std::uint64_t sample_id = 0);

struct AttackRecord {
  std::uint64_t sample_id = 0;
  AttackFamily family = AttackFamily::kPgd;
  double epsilon = 0.0;
  bool success = false;
  double linf = 0.0;
  double l2 = 0.0;
  std::size_t steps = 0;
};

inline constexpr std::string_view kAttackCsvSchema = "# schema: trimlab-attack-v1";

/// Schema line, header, then one row per record:
///   sample_id,family,epsilon,success,linf,l2,steps
std::string format_attack_csv(std::span<const AttackRecord> rows);

/// Interval [lo, hi] of values v with |v - x| <= eps and v in [0, 1], computed so that the
/// bound holds exactly in floating point.
std::pair<double, double> feasible_interval(double x, double eps) noexcept;

}  // namespace trimlab

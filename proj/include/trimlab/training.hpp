#pragma once

// Mini-batch training of the detector (Adam by default, plain gradient descent optional).
//
//   STANDARD  minimize CE(f(x), y)
//   PGD_AT    minimize CE(f(x'), y),  x' = PGD(x) maximizing CE
//   TRADES    minimize CE(f(x), y) + beta * KL(p(x) || p(x')),  x' = PGD(x) maximizing the KL
//
// Batch order: a Fisher-Yates permutation per epoch from (seed, kShuffle, epoch).
// Inner attacks draw from seed derive_key(seed, {kTrainAttack, step}) with the
// sample index as sample id, so they never touch the shuffle or init streams.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trimlab/attacks.hpp"
#include "trimlab/error.hpp"
#include "trimlab/info.hpp"
#include "trimlab/model.hpp"

namespace trimlab {

enum class Regime { kStandard, kPgdAt, kTrades };
/// Adam: beta1 0.9, beta2 0.999, epsilon 1e-8, bias-corrected moments.
enum class Optimizer { kAdam, kSgd };

std::string to_string(Regime r);
Regime parse_regime(const std::string& s);
std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  Regime regime = Regime::kStandard;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 0.01;  // 0.05 is the usual choice for kSgd
  /// Inner maximization: 10 PGD steps, step eps/4, random start.
  AttackConfig attack = inner_pgd(8.0 / 255.0);
  double trades_beta = 6.0;
  std::uint64_t seed = 0;
  /// Record an MI trace entry every this many steps (0 = never).
  std::size_t trace_every = 1;

  /// Throws InvalidArgument on zero epochs/batch, non-positive learning rate or beta, or an
  /// inner attack that is not PGD.
  void validate() const;

  static AttackConfig inner_pgd(double epsilon);
};

struct TrainResult {
  DetectorModel model;
  MITrace trace;
  std::vector<double> step_losses;   // objective on each batch before its update
  std::vector<double> epoch_losses;  // mean of step_losses per epoch
};

/// Diagnostic attached to a divergence.
struct DivergenceRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double parameter_norm = 0.0;
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const DivergenceRecord& r);
  const DivergenceRecord& record() const noexcept { return record_; }

 private:
  DivergenceRecord record_;
};

/// Trains a copy of `init`. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const DetectorModel& init, std::span<const ImageTensor> xs,
                  std::span<const Label> ys, const TrainConfig& cfg);

inline constexpr std::string_view kLossCsvSchema = "# schema: trimlab-loss-v1";

/// step,epoch,loss
std::string format_loss_csv(const TrainResult& r, std::size_t steps_per_epoch);

struct ShiftRow {
  double epsilon = 0.0;
  std::size_t attacked = 0;  // clean-correct samples attacked
  std::size_t successes = 0;
  double mean_all = 0.0;
  std::optional<double> mean_success;
  std::optional<double> mean_failed;
};

/// PGD (40 steps, step eps/4, random start) at each epsilon on the samples the model
/// classifies correctly, with mean ||z(x_adv) - z(x)||_2 split by attack success.
std::vector<ShiftRow> sweep_epsilon_feature_shift(const DetectorModel& model,
                                                  std::span<const ImageTensor> xs,
                                                  std::span<const Label> ys,
                                                  std::span<const double> epsilons,
                                                  std::uint64_t seed = 0);

inline constexpr std::string_view kShiftCsvSchema = "# schema: trimlab-shift-v1";

/// epsilon,attacked,successes,mean_all,mean_success,mean_failed; NA marks an empty partition.
std::string format_shift_csv(std::span<const ShiftRow> rows);

}  // namespace trimlab

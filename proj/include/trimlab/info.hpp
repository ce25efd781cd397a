#pragma once

// Entropies, divergences and mutual-information quantities, all in nats.
//
// Cross-entropy MI surrogate over a labelled set {(x_i, y_i)}:
//
//   I(Z;Y)      ~ H(Y) - mean_i CE(softmax(f(x_i)), y_i)
//   I(dZ;Y|Z)   ~ mean CE(clean) - mean CE(adversarial)
//
// Values are reported as-is; the surrogate can be negative.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trimlab/model.hpp"
#include "trimlab/rng.hpp"
#include "trimlab/tensor.hpp"

namespace trimlab {

/// -sum_y p_y ln max(p_y, 1e-30).
double prediction_entropy(const SoftmaxOutput& p);

/// sum_y p_y ln(p_y / max(q_y, 1e-30)); terms with p_y = 0 contribute 0.
double kl_divergence(const SoftmaxOutput& p, const SoftmaxOutput& q);

/// -sum_y p_y ln max(q_y, 1e-30).
double cross_entropy_h(const SoftmaxOutput& p, const SoftmaxOutput& q);

struct KlIdentity {
  double kl = 0.0;
  double h_cross = 0.0;
  double h = 0.0;
  double residual() const noexcept { return kl - (h_cross - h); }
};

/// Evaluates both sides of D_KL(p||q) = H_cross(p,q) - H(p). Throws Error naming both
/// sides when they differ by more than `tol` or when D_KL < -tol.
KlIdentity kl_identity_check(const SoftmaxOutput& p, const SoftmaxOutput& q, double tol = 1e-12);

/// Empirical label entropy of ys.
double label_entropy(std::span<const Label> ys);

/// H(Y) - mean CE. Throws InvalidArgument on an empty or mismatched set.
double mi_estimate(const DetectorModel& model, std::span<const ImageTensor> xs,
                   std::span<const Label> ys);

/// CE(clean) - CE(adversarial) over paired batches.
double mi_delta_estimate(const DetectorModel& model, std::span<const ImageTensor> clean,
                         std::span<const ImageTensor> adversarial, std::span<const Label> ys);

/// ||z(b) - z(a)||_2 on penultimate features.
double feature_shift(const DetectorModel& model, const ImageTensor& a, const ImageTensor& b);

struct MIRecord {
  std::size_t step = 0;
  double i_clean = 0.0;
  double i_adv = 0.0;  // stored as i_clean + i_delta
  double i_delta = 0.0;
  double ce_clean = 0.0;
  double ce_adv = 0.0;
};

/// Builds a record from the two mean cross-entropies and the label entropy.
MIRecord make_mi_record(std::size_t step, double h_y, double ce_clean, double ce_adv);

struct MITrace {
  std::vector<MIRecord> records;
};

inline constexpr std::string_view kMiCsvSchema = "# schema: trimlab-mitrace-v1";

/// step,I_clean,I_adv,I_delta,CE_clean,CE_adv
std::string format_mi_csv(const MITrace& trace);

/// p(z, dz, y) over integer supports {0..nz-1} x {0..nd-1} x {0..ny-1}, with the shifted
/// feature Z~ = Z + dZ taking values in {0..nz+nd-2}.
class DiscreteJoint {
 public:
  static constexpr std::size_t kMaxStates = 16 * 16 * 16;

  /// Throws InvalidArgument on negative entries, a sum off 1 by more than 1e-12,
  /// a zero support size or more than kMaxStates states.
  DiscreteJoint(std::size_t nz, std::size_t nd, std::size_t ny, std::vector<double> pmf);

  /// Dirichlet(1) draw over all states.
  static DiscreteJoint random(std::size_t nz, std::size_t nd, std::size_t ny, CounterRng& rng);

  std::size_t nz() const noexcept { return nz_; }
  std::size_t nd() const noexcept { return nd_; }
  std::size_t ny() const noexcept { return ny_; }
  double p(std::size_t z, std::size_t d, std::size_t y) const noexcept {
    return pmf_[(z * nd_ + d) * ny_ + y];
  }
  std::span<const double> pmf() const noexcept { return pmf_; }

 private:
  std::size_t nz_, nd_, ny_;
  std::vector<double> pmf_;
};

struct MISuite {
  double i_ztilde_y = 0.0;      // I(Z~;Y)
  double i_z_y = 0.0;           // I(Z;Y)
  double i_dz_y = 0.0;          // I(dZ;Y)
  double i_dz_y_given_z = 0.0;  // I(dZ;Y|Z)
  double i_z_dz_y = 0.0;        // interaction I(Z;dZ;Y)
  double h_y_given_z_dz = 0.0;  // H(Y|Z,dZ)
  double h_y_given_ztilde = 0.0;

  /// LHS - RHS of I(Z~;Y) = I(Z;Y) + I(dZ;Y) - I(Z;dZ;Y) + H(Y|Z,dZ) - H(Y|Z~).
  double residual() const noexcept {
    return i_ztilde_y - (i_z_y + i_dz_y - i_z_dz_y + h_y_given_z_dz - h_y_given_ztilde);
  }
  /// H(Y|Z,dZ) - H(Y|Z~), the term usually assumed negligible.
  double gap() const noexcept { return h_y_given_z_dz - h_y_given_ztilde; }
};

/// Every term by exhaustive marginalization. Mutual informations are summed as
/// KL divergences from the product of marginals; the interaction term uses the
/// seven-entropy inclusion-exclusion; conditional entropies use joint-entropy
/// differences. The routes differ, so the residual is a real check.
MISuite exact_mi_suite(const DiscreteJoint& joint);

}  // namespace trimlab

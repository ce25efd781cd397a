#include "trimlab/info.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "trimlab/error.hpp"

namespace trimlab {

namespace {

// -p ln p with the floor; the larger of two complementary probabilities goes through
// log1p of the smaller so that H ~ p (1 - ln p) survives for tiny p.
double plogp_term(double p, double complement) {
  if (p <= 0.0) return 0.0;
  if (p > 0.5) return -p * std::log1p(-complement);
  return -p * std::log(std::max(p, kProbabilityFloor));
}

double xlogy(double x, double y) { return x > 0.0 ? x * std::log(y) : 0.0; }

}  // namespace

double prediction_entropy(const SoftmaxOutput& p) {
  p.validate();
  return plogp_term(p.p_real, p.p_fake) + plogp_term(p.p_fake, p.p_real);
}

double kl_divergence(const SoftmaxOutput& p, const SoftmaxOutput& q) {
  p.validate();
  q.validate();
  double kl = 0.0;
  for (Label y : {kReal, kFake}) {
    if (p[y] <= 0.0) continue;
    const double qy = std::max(q[y], kProbabilityFloor);
    kl += p[y] * std::log1p((p[y] - qy) / qy);
  }
  return kl;
}

double cross_entropy_h(const SoftmaxOutput& p, const SoftmaxOutput& q) {
  p.validate();
  q.validate();
  double h = 0.0;
  for (Label y : {kReal, kFake})
    if (p[y] > 0.0) h -= p[y] * std::log(std::max(q[y], kProbabilityFloor));
  return h;
}

KlIdentity kl_identity_check(const SoftmaxOutput& p, const SoftmaxOutput& q, double tol) {
  KlIdentity r{kl_divergence(p, q), cross_entropy_h(p, q), prediction_entropy(p)};
  if (!(std::abs(r.residual()) <= tol) || !(r.kl >= -tol))
    throw Error(fmt::format("KL identity violated: D_KL = {:.17g}, H_cross - H = {:.17g}", r.kl,
                            r.h_cross - r.h));
  return r;
}

double label_entropy(std::span<const Label> ys) {
  if (ys.empty()) throw InvalidArgument("label_entropy: empty label set");
  std::size_t fakes = 0;
  for (Label y : ys) {
    if (!valid_label(y)) throw InvalidArgument("label_entropy: label outside {0, 1}");
    fakes += y == kFake ? 1 : 0;
  }
  const double pf = static_cast<double>(fakes) / static_cast<double>(ys.size());
  return -xlogy(pf, pf) - xlogy(1.0 - pf, 1.0 - pf);
}

double mi_estimate(const DetectorModel& model, std::span<const ImageTensor> xs,
                   std::span<const Label> ys) {
  if (xs.empty()) throw InvalidArgument("mi_estimate: empty dataset");
  return label_entropy(ys) - mean_cross_entropy(model, xs, ys);
}

double mi_delta_estimate(const DetectorModel& model, std::span<const ImageTensor> clean,
                         std::span<const ImageTensor> adversarial, std::span<const Label> ys) {
  if (clean.size() != adversarial.size() || clean.size() != ys.size())
    throw InvalidArgument("mi_delta_estimate: clean, adversarial and label counts differ");
  if (clean.empty()) throw InvalidArgument("mi_delta_estimate: empty batch");
  return mean_cross_entropy(model, clean, ys) - mean_cross_entropy(model, adversarial, ys);
}

double feature_shift(const DetectorModel& model, const ImageTensor& a, const ImageTensor& b) {
  const std::vector<double> za = forward(model, a).z;
  const std::vector<double> zb = forward(model, b).z;
  double s = 0.0;
  for (std::size_t i = 0; i < za.size(); ++i) s += (zb[i] - za[i]) * (zb[i] - za[i]);
  return std::sqrt(s);
}

MIRecord make_mi_record(std::size_t step, double h_y, double ce_clean, double ce_adv) {
  MIRecord r;
  r.step = step;
  r.ce_clean = ce_clean;
  r.ce_adv = ce_adv;
  r.i_clean = h_y - ce_clean;
  r.i_delta = ce_clean - ce_adv;
  r.i_adv = r.i_clean + r.i_delta;
  return r;
}

std::string format_mi_csv(const MITrace& trace) {
  std::string out = std::string(kMiCsvSchema) + "\n";
  out += "step,I_clean,I_adv,I_delta,CE_clean,CE_adv\n";
  for (const MIRecord& r : trace.records)
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.i_clean, r.i_adv,
                       r.i_delta, r.ce_clean, r.ce_adv);
  return out;
}

DiscreteJoint::DiscreteJoint(std::size_t nz, std::size_t nd, std::size_t ny,
                             std::vector<double> pmf)
    : nz_(nz), nd_(nd), ny_(ny), pmf_(std::move(pmf)) {
  if (nz == 0 || nd == 0 || ny == 0) throw InvalidArgument("joint: support sizes must be positive");
  if (nz > kMaxStates || nd > kMaxStates || ny > kMaxStates || nz * nd * ny > kMaxStates)
    throw InvalidArgument("joint: support exceeds " + std::to_string(kMaxStates) + " states");
  if (pmf_.size() != nz * nd * ny) throw InvalidArgument("joint: pmf size does not match supports");
  double total = 0.0;
  for (double v : pmf_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("joint: negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("joint: pmf does not sum to 1");
}

DiscreteJoint DiscreteJoint::random(std::size_t nz, std::size_t nd, std::size_t ny,
                                    CounterRng& rng) {
  std::vector<double> w(nz * nd * ny);
  double total = 0.0;
  for (double& v : w) {
    v = -std::log1p(-rng.uniform());
    total += v;
  }
  for (double& v : w) v /= total;
  return DiscreteJoint(nz, nd, ny, std::move(w));
}

namespace {

double entropy_of(const std::vector<double>& pmf) {
  double h = 0.0;
  for (double v : pmf) h -= xlogy(v, v);
  return h;
}

// I(A;B) = sum p(a,b) ln(p(a,b) / (p(a) p(b))) for a 2-D table.
double mi_table(const std::vector<double>& pab, std::size_t na, std::size_t nb) {
  std::vector<double> pa(na, 0.0), pb(nb, 0.0);
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t b = 0; b < nb; ++b) {
      pa[a] += pab[a * nb + b];
      pb[b] += pab[a * nb + b];
    }
  double mi = 0.0;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t b = 0; b < nb; ++b) {
      const double v = pab[a * nb + b];
      if (v > 0.0) mi += v * std::log(v / (pa[a] * pb[b]));
    }
  return mi;
}

}  // namespace

MISuite exact_mi_suite(const DiscreteJoint& j) {
  const std::size_t nz = j.nz(), nd = j.nd(), ny = j.ny(), nt = nz + nd - 1;
  std::vector<double> pz(nz, 0.0), pd(nd, 0.0), py(ny, 0.0), pzd(nz * nd, 0.0),
      pzy(nz * ny, 0.0), pdy(nd * ny, 0.0), pt(nt, 0.0), pty(nt * ny, 0.0);
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t y = 0; y < ny; ++y) {
        const double v = j.p(z, d, y);
        pz[z] += v;
        pd[d] += v;
        py[y] += v;
        pzd[z * nd + d] += v;
        pzy[z * ny + y] += v;
        pdy[d * ny + y] += v;
        pt[z + d] += v;
        pty[(z + d) * ny + y] += v;
      }
  const std::vector<double> pzdy(j.pmf().begin(), j.pmf().end());

  MISuite s;
  s.i_z_y = mi_table(pzy, nz, ny);
  s.i_dz_y = mi_table(pdy, nd, ny);
  s.i_ztilde_y = mi_table(pty, nt, ny);

  // I(dZ;Y|Z) = sum p(z,d,y) ln(p(z,d,y) p(z) / (p(z,d) p(z,y))).
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t y = 0; y < ny; ++y) {
        const double v = j.p(z, d, y);
        if (v > 0.0)
          s.i_dz_y_given_z += v * std::log(v * pz[z] / (pzd[z * nd + d] * pzy[z * ny + y]));
      }

  const double hz = entropy_of(pz), hd = entropy_of(pd), hy = entropy_of(py);
  const double hzd = entropy_of(pzd), hzy = entropy_of(pzy), hdy = entropy_of(pdy);
  const double hzdy = entropy_of(pzdy);
  s.i_z_dz_y = hz + hd + hy - hzd - hzy - hdy + hzdy;
  s.h_y_given_z_dz = hzdy - hzd;
  s.h_y_given_ztilde = entropy_of(pty) - entropy_of(pt);
  return s;
}

}  // namespace trimlab

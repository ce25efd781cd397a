#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "trimlab/attacks.hpp"
#include "trimlab/error.hpp"
#include "trimlab/info.hpp"

using namespace trimlab;
using testing::random_image;

namespace {
constexpr double kLn2 = 0.6931471805599453;

// Plain p ln(p/q) sums on a 2-D table, written independently of the library.
double mi2(const std::vector<double>& t, std::size_t na, std::size_t nb) {
  std::vector<double> a(na, 0), b(nb, 0);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) a[i] += t[i * nb + j], b[j] += t[i * nb + j];
  double s = 0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      if (t[i * nb + j] > 0) s += t[i * nb + j] * std::log(t[i * nb + j] / (a[i] * b[j]));
  return s;
}
}  // namespace

TEST_CASE("entropy values") {
  CHECK(std::abs(prediction_entropy({0.5, 0.5}) - kLn2) <= 1e-15);
  CHECK(prediction_entropy({1.0, 0.0}) <= 1e-28);
  CHECK(std::abs(prediction_entropy({0.9, 0.1}) - 0.3250829733914482) <= 1e-12);
  // tiny p: H ~ p (1 - ln p)
  const double p = 1e-20;
  CHECK(std::abs(prediction_entropy({1.0 - p, p}) / (p * (1.0 - std::log(p))) - 1.0) <= 1e-9);
  CounterRng rng(derive_key(2, {2}));
  for (int i = 0; i < 500; ++i) {
    const double q = rng.uniform();
    const double h = prediction_entropy({q, 1.0 - q});
    CHECK((h >= 0.0 && h <= kLn2));
  }
}

TEST_CASE("KL values") {
  CHECK(kl_divergence({0.3, 0.7}, {0.3, 0.7}) <= 1e-12);
  CHECK(std::abs(kl_divergence({1.0, 0.0}, {0.5, 0.5}) - kLn2) <= 1e-15);
  CHECK(std::abs(kl_divergence({0.9, 0.1}, {0.5, 0.5}) - 0.3680642071684971) <= 1e-12);
}

TEST_CASE("KL identity on random pairs") {
  CounterRng rng(derive_key(3, {3}));
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    const KlIdentity k = kl_identity_check({a, 1.0 - a}, {b, 1.0 - b});
    CHECK(std::abs(k.residual()) <= 1e-12);
    CHECK(k.kl >= 0.0);
  }
  const KlIdentity same = kl_identity_check({0.4, 0.6}, {0.4, 0.6});
  CHECK(std::abs(same.kl) <= 1e-15);
  const KlIdentity deg = kl_identity_check({1.0, 0.0}, {0.5, 0.5});
  CHECK(std::abs(deg.kl - kLn2) <= 1e-15);
  CHECK(std::abs(deg.h_cross - deg.h - kLn2) <= 1e-15);
}

TEST_CASE("MI estimators on hand models") {
  std::vector<ImageTensor> xs;
  std::vector<Label> ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(random_image({1, 4, 4}, i));
    ys.push_back(static_cast<Label>(i % 2));
  }
  CHECK(std::abs(label_entropy(ys) - kLn2) <= 1e-15);
  const DetectorModel constant = testing::mean_model(0.0, 0.0);
  CHECK(std::abs(mi_estimate(constant, xs, ys)) <= 1e-15);

  // Oracle that saturates on the label: images of fakes are bright, reals dark.
  std::vector<ImageTensor> sep;
  for (int i = 0; i < 10; ++i) sep.push_back(ImageTensor({1, 4, 4}, i % 2 ? 0.9 : 0.1));
  const DetectorModel sat = testing::mean_model(-200.0, 200.0, 100.0, -100.0);
  CHECK(std::abs(mi_estimate(sat, sep, ys) - kLn2) <= 1e-12);

  CHECK(mi_delta_estimate(sat, sep, sep, ys) == 0.0);
  CHECK_THROWS_AS(mi_estimate(sat, {}, {}), InvalidArgument);
  CHECK_THROWS_AS(mi_delta_estimate(sat, sep, xs, std::vector<Label>(3, 0)), InvalidArgument);
}

TEST_CASE("delta estimator identity and sign under PGD") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 5);
  std::vector<ImageTensor> xs, adv;
  std::vector<Label> ys;
  for (std::uint64_t i = 0; i < 8; ++i) {
    xs.push_back(random_image({1, 16, 16}, i));
    ys.push_back(static_cast<Label>(i % 2));
    adv.push_back(pgd(m, xs.back(), ys.back(), AttackConfig::pgd(8 / 255.0), i).x_adv);
  }
  const double d = mi_delta_estimate(m, xs, adv, ys);
  CHECK(std::abs(d - (mi_estimate(m, adv, ys) - mi_estimate(m, xs, ys))) <= 1e-12);
  CHECK(d < 0.0);
  const MIRecord r = make_mi_record(4, label_entropy(ys), mean_cross_entropy(m, xs, ys),
                                    mean_cross_entropy(m, adv, ys));
  CHECK(r.i_adv == r.i_clean + r.i_delta);
}

TEST_CASE("feature shift") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 5);
  const ImageTensor a = random_image({1, 16, 16}, 1), b = random_image({1, 16, 16}, 2);
  CHECK(feature_shift(m, a, a) == 0.0);
  CHECK(feature_shift(m, a, b) == feature_shift(m, b, a));
  DetectorModel zero = m;
  for (double& w : zero.conv2_weight()) w = 0.0;
  for (double& w : zero.conv2_bias()) w = 0.0;
  CHECK(feature_shift(zero, a, b) == 0.0);
}

TEST_CASE("exact suite against independent marginal sums") {
  CounterRng rng(derive_key(9, {9}));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t nz = t % 2 ? 4 : 2, nd = nz, ny = 2;
    const DiscreteJoint j = DiscreteJoint::random(nz, nd, ny, rng);
    const MISuite s = exact_mi_suite(j);
    worst = std::max(worst, std::abs(s.residual()));

    std::vector<double> zy(nz * ny, 0), ty((nz + nd - 1) * ny, 0);
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t y = 0; y < ny; ++y) {
          zy[z * ny + y] += j.p(z, d, y);
          ty[(z + d) * ny + y] += j.p(z, d, y);
        }
    CHECK(std::abs(s.i_z_y - mi2(zy, nz, ny)) <= 1e-13);
    CHECK(std::abs(s.i_ztilde_y - mi2(ty, nz + nd - 1, ny)) <= 1e-13);
    CHECK(s.i_dz_y_given_z >= -1e-15);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("exact suite special joints") {
  // Y independent of (Z, dZ).
  std::vector<double> ind(2 * 3 * 2);
  const double pz[2] = {0.3, 0.7}, pd[3] = {0.2, 0.5, 0.3}, py[2] = {0.6, 0.4};
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t y = 0; y < 2; ++y) ind[(z * 3 + d) * 2 + y] = pz[z] * pd[d] * py[y];
  const MISuite a = exact_mi_suite(DiscreteJoint(2, 3, 2, ind));
  for (double v : {a.i_z_y, a.i_dz_y, a.i_ztilde_y, a.i_dz_y_given_z, a.i_z_dz_y})
    CHECK(std::abs(v) <= 1e-12);

  // Y = Z, dZ independent and uniform.
  std::vector<double> copy(2 * 2 * 2, 0.0);
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t d = 0; d < 2; ++d) copy[(z * 2 + d) * 2 + z] = pz[z] * 0.5;
  const MISuite b = exact_mi_suite(DiscreteJoint(2, 2, 2, copy));
  const double hy = -(0.3 * std::log(0.3) + 0.7 * std::log(0.7));
  CHECK(std::abs(b.i_z_y - hy) <= 1e-15);
  CHECK(std::abs(b.i_dz_y_given_z) <= 1e-15);
  CHECK(std::abs(b.residual()) <= 1e-12);
}

TEST_CASE("joint validation") {
  CHECK_THROWS_AS(DiscreteJoint(2, 2, 2, std::vector<double>(8, 0.1)), InvalidArgument);
  CHECK_THROWS_AS(DiscreteJoint(2, 2, 2, std::vector<double>(7, 1.0 / 7)), InvalidArgument);
  std::vector<double> neg(8, 0.125);
  neg[0] = -0.125;
  neg[1] = 0.375;
  CHECK_THROWS_AS(DiscreteJoint(2, 2, 2, neg), InvalidArgument);
  CHECK_THROWS_AS(DiscreteJoint(17, 16, 16, std::vector<double>(17 * 256, 1.0 / (17 * 256))),
                  InvalidArgument);
}

TEST_CASE("MI trace CSV") {
  MITrace t;
  t.records.push_back(make_mi_record(0, kLn2, 0.5, 0.75));
  const std::string csv = format_mi_csv(t);
  CHECK(csv.rfind(std::string(kMiCsvSchema) + "\nstep,I_clean,I_adv,I_delta,CE_clean,CE_adv\n", 0) == 0);
}

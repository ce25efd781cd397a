#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "trimlab/binary_io.hpp"
#include "trimlab/error.hpp"
#include "trimlab/model.hpp"

using namespace trimlab;
using testing::mean_model;
using testing::random_image;
using testing::rel_err;

TEST_CASE("softmax closed forms") {
  const SoftmaxOutput a = softmax({0.0, 0.0});
  CHECK(a.p_real == 0.5);
  CHECK(a.p_fake == 0.5);
  for (double t : {-700.0, -3.5, 0.0, 12.25, 900.0}) {
    const SoftmaxOutput b = softmax({t, t});
    CHECK(b.p_real == 0.5);
  }
  const SoftmaxOutput c = softmax({std::log(3.0), 0.0});
  CHECK(std::abs(c.p_real - 0.75) <= 1e-15);
  CHECK(std::abs(c.p_fake - 0.25) <= 1e-15);
  CHECK_THROWS_AS(softmax({NAN, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(softmax({INFINITY, 0.0}), InvalidArgument);
}

TEST_CASE("softmax is shift invariant") {
  CounterRng rng(derive_key(5, {1}));
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-30, 30), b = rng.uniform(-30, 30), c = rng.uniform(-500, 500);
    const SoftmaxOutput p = softmax({a, b}), q = softmax({a + c, b + c});
    CHECK(std::abs(p.p_real - q.p_real) <= 1e-12);
    CHECK(std::abs(p.p_real + p.p_fake - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy values") {
  CHECK(cross_entropy({1.0, 0.0}, kReal) <= 1e-12);
  CHECK(std::abs(cross_entropy({0.5, 0.5}, kFake) - 0.6931471805599453) <= 1e-15);
  CHECK(std::abs(cross_entropy({0.9, 0.1}, kFake) - 2.302585092994046) <= 1e-12);
  // clamp at 1e-30
  CHECK(std::abs(cross_entropy({1.0, 0.0}, kFake) - 30.0 * std::log(10.0)) <= 1e-12);
}

TEST_CASE("forward on zero model returns the head biases") {
  DetectorModel m(Architecture{});
  m.head_bias()[0] = 0.25;
  m.head_bias()[1] = -1.5;
  const ForwardResult r = forward(m, ImageTensor(Architecture{}.input_shape(), 0.0));
  CHECK(r.logits[0] == 0.25);
  CHECK(r.logits[1] == -1.5);
  CHECK(r.z.size() == 32);
}

TEST_CASE("hand-built 4x4 model matches hand arithmetic") {
  const DetectorModel m = mean_model(2.0, -3.0, 0.5, 1.0);
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i / 16.0;  // mean 15/32
  const ForwardResult r = forward(m, ImageTensor({1, 4, 4}, v));
  CHECK(std::abs(r.z[0] - 15.0 / 32.0) <= 1e-15);
  CHECK(std::abs(r.logits[0] - (2.0 * 15.0 / 32.0 + 0.5)) <= 1e-15);
  CHECK(std::abs(r.logits[1] - (-3.0 * 15.0 / 32.0 + 1.0)) <= 1e-15);
}

TEST_CASE("forward is deterministic and rejects wrong shapes") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 3);
  const ImageTensor x = random_image({1, 16, 16}, 1);
  const ForwardResult a = forward(m, x), b = forward(m, x);
  CHECK(a.logits == b.logits);
  CHECK(a.z == b.z);
  CHECK_THROWS_AS(forward(m, ImageTensor({1, 8, 8}, 0.5)), InvalidArgument);
}

TEST_CASE("initialization stays inside the fan-in bounds") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 11);
  DetectorModel copy = m;
  const double b1 = 1.0 / std::sqrt(9.0), b2 = 1.0 / std::sqrt(72.0), bh = 1.0 / std::sqrt(32.0);
  for (double w : copy.conv1_weight()) CHECK(std::abs(w) <= b1);
  for (double w : copy.conv2_weight()) CHECK(std::abs(w) <= b2);
  for (double w : copy.head_weight()) CHECK(std::abs(w) <= bh);
  CHECK(DetectorModel::initialized(Architecture{}, 11) == m);
  CHECK_FALSE(DetectorModel::initialized(Architecture{}, 12) == m);
}

TEST_CASE("input gradient matches central differences") {
  const double h = 1e-6;
  double worst = 0.0;
  for (std::uint64_t draw = 0; draw < 10; ++draw) {
    const DetectorModel m = DetectorModel::initialized(Architecture{}, 100 + draw);
    const ImageTensor x = random_image({1, 16, 16}, 200 + draw);
    const Label y = static_cast<Label>(draw % 2);
    const Tensor3 g = input_gradient(m, x, y);
    CounterRng pick(derive_key(draw, {9}));
    for (int k = 0; k < 10; ++k) {
      const std::size_t i = pick.below(x.size());
      std::vector<double> up(x.values().begin(), x.values().end()), dn = up;
      up[i] += h;
      dn[i] -= h;
      const double fd = (testing::ce_at(m, ImageTensor(x.shape(), up), y) -
                         testing::ce_at(m, ImageTensor(x.shape(), dn), y)) / (2 * h);
      worst = std::max(worst, rel_err(g.values[i], fd));
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("parameter gradient matches central differences") {
  const double h = 1e-6;
  const DetectorModel m0 = DetectorModel::initialized(Architecture{}, 21);
  std::vector<ImageTensor> xs{random_image({1, 16, 16}, 1), random_image({1, 16, 16}, 2)};
  std::vector<Label> ys{kReal, kFake};
  const std::vector<double> g = param_gradient(m0, xs, ys);
  CounterRng pick(derive_key(4, {4}));
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = pick.below(g.size());
    DetectorModel up = m0, dn = m0;
    up.parameters()[i] += h;
    dn.parameters()[i] -= h;
    const double fd = (mean_cross_entropy(up, xs, ys) - mean_cross_entropy(dn, xs, ys)) / (2 * h);
    worst = std::max(worst, rel_err(g[i], fd));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("input gradient for the two labels differs by the probability ratio") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 8);
  const ImageTensor x = random_image({1, 16, 16}, 8);
  const SoftmaxOutput p = softmax(forward(m, x).logits);
  const Tensor3 g0 = input_gradient(m, x, kReal), g1 = input_gradient(m, x, kFake);
  // dCE/dlogits is (-p_fake, p_fake) for y = real and (p_real, -p_real) for y = fake.
  for (std::size_t i = 0; i < g0.values.size(); ++i)
    CHECK(std::abs(g0.values[i] + (p.p_fake / p.p_real) * g1.values[i]) <=
          1e-12 * std::max(1.0, std::abs(g0.values[i])));
}

TEST_CASE("zero head gives zero input gradient") {
  DetectorModel m = DetectorModel::initialized(Architecture{}, 2);
  for (double& w : m.head_weight()) w = 0.0;
  const Tensor3 g = input_gradient(m, random_image({1, 16, 16}, 3), kFake);
  for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("saturated correct prediction has a vanishing parameter gradient") {
  DetectorModel m = DetectorModel::initialized(Architecture{}, 2);
  m.head_bias()[0] = 80.0;
  const std::vector<ImageTensor> xs{random_image({1, 16, 16}, 3)};
  const std::vector<Label> ys{kReal};
  double norm = 0.0;
  for (double v : param_gradient(m, xs, ys)) norm += v * v;
  CHECK(std::sqrt(norm) <= 1e-9);
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 6);
  std::vector<ImageTensor> xs{random_image({1, 16, 16}, 1), random_image({1, 16, 16}, 2),
                              random_image({1, 16, 16}, 3)};
  std::vector<Label> ys{kReal, kFake, kFake};
  const std::vector<double> g = param_gradient(m, xs, ys);
  std::vector<ImageTensor> xs2 = xs;
  std::vector<Label> ys2 = ys;
  xs2.insert(xs2.end(), xs.begin(), xs.end());
  ys2.insert(ys2.end(), ys.begin(), ys.end());
  const std::vector<double> g2 = param_gradient(m, xs2, ys2);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(std::abs(g[i] - g2[i]) <= 1e-15 * std::max(1.0, std::abs(g[i])) + 1e-18);
}

TEST_CASE("checkpoint round trip and corruption") {
  const DetectorModel m = DetectorModel::initialized(Architecture{}, 77);
  std::vector<std::uint8_t> bytes = encode_checkpoint(m);
  CHECK(decode_checkpoint(bytes) == m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "TRIMMDL1");

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 20);
  CHECK_THROWS_AS(decode_checkpoint(cut), TruncatedError);

  std::vector<std::uint8_t> magic = bytes;
  magic[3] = 'X';
  try {
    decode_checkpoint(magic);
    FAIL("bad magic accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 3);
  }

  std::vector<std::uint8_t> flipped = bytes;
  flipped[100] ^= 1;
  CHECK_THROWS_AS(decode_checkpoint(flipped), ChecksumError);
}

TEST_CASE("label convention") {
  CHECK(flip_label(kReal) == kFake);
  CHECK(flip_label(flip_label(kFake)) == kFake);
  CHECK(predict(Logits{1.0, 1.0}) == kReal);
}

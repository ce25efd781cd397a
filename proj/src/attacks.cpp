#include "trimlab/attacks.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "trimlab/error.hpp"
#include "trimlab/rng.hpp"

namespace trimlab {

std::string to_string(AttackFamily f) {
  switch (f) {
    case AttackFamily::kFgsm: return "fgsm";
    case AttackFamily::kPgd: return "pgd";
    case AttackFamily::kCwL2: return "cw-l2";
    case AttackFamily::kRandSearch: return "randsearch";
  }
  return "?";
}

AttackFamily parse_attack_family(const std::string& s) {
  if (s == "fgsm") return AttackFamily::kFgsm;
  if (s == "pgd") return AttackFamily::kPgd;
  if (s == "cw-l2" || s == "cw") return AttackFamily::kCwL2;
  if (s == "randsearch") return AttackFamily::kRandSearch;
  throw InvalidArgument("unknown attack family '" + s + "'");
}

void AttackConfig::validate() const {
  if (!(std::isfinite(epsilon) && epsilon >= 0.0)) throw InvalidArgument("attack: epsilon must be >= 0");
  if (!(std::isfinite(step_size) && step_size >= 0.0))
    throw InvalidArgument("attack: step size must be >= 0");
  if (iterations < 1) throw InvalidArgument("attack: iterations must be >= 1");
  if (family == AttackFamily::kFgsm && iterations != 1)
    throw InvalidArgument("attack: FGSM takes exactly one iteration");
  if (!(std::isfinite(kappa) && kappa >= 0.0)) throw InvalidArgument("attack: kappa must be >= 0");
  if (!(std::isfinite(c) && c > 0.0)) throw InvalidArgument("attack: c must be > 0");
  if (family == AttackFamily::kCwL2 && !(step_size > 0.0))
    throw InvalidArgument("attack: C&W learning rate must be > 0");
}

AttackConfig AttackConfig::fgsm(double epsilon) {
  AttackConfig c;
  c.family = AttackFamily::kFgsm;
  c.epsilon = epsilon;
  c.step_size = epsilon;
  c.iterations = 1;
  c.random_start = false;
  return c;
}

AttackConfig AttackConfig::pgd(double epsilon, std::uint64_t seed) {
  AttackConfig c;
  c.family = AttackFamily::kPgd;
  c.epsilon = epsilon;
  c.step_size = epsilon / 4.0;
  c.iterations = 40;
  c.random_start = true;
  c.seed = seed;
  return c;
}

AttackConfig AttackConfig::cw(double kappa) {
  AttackConfig c;
  c.family = AttackFamily::kCwL2;
  c.epsilon = 0.0;
  c.step_size = 0.01;
  c.iterations = 200;
  c.kappa = kappa;
  c.c = 1.0;
  c.random_start = false;
  return c;
}

AttackConfig AttackConfig::random_search(double epsilon, std::size_t queries, std::uint64_t seed) {
  AttackConfig c;
  c.family = AttackFamily::kRandSearch;
  c.epsilon = epsilon;
  c.step_size = epsilon;
  c.iterations = queries;
  c.seed = seed;
  return c;
}

std::pair<double, double> feasible_interval(double x, double eps) noexcept {
  double lo = std::max(0.0, x - eps);
  double hi = std::min(1.0, x + eps);
  // x - eps can round below the true bound; walk back inside.
  while (x - lo > eps) lo = std::nextafter(lo, 1.0);
  while (hi - x > eps) hi = std::nextafter(hi, 0.0);
  return {lo, hi};
}

namespace {

double sign(double g) noexcept { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

double project(double v, double x, double eps) noexcept {
  const auto [lo, hi] = feasible_interval(x, eps);
  return std::clamp(v, lo, hi);
}

bool misclassified(const DetectorModel& model, const ImageTensor& x, Label y) {
  return predict(forward(model, x).logits) != y;
}

ImageTensor signed_step(const DetectorModel& model, const ImageTensor& x0, const ImageTensor& xt,
                        Label y, double step, double eps) {
  const Tensor3 g = input_gradient(model, xt, y);
  std::vector<double> v(xt.size());
  const auto cur = xt.values();
  const auto orig = x0.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = project(cur[i] + step * sign(g.values[i]), orig[i], eps);
  return ImageTensor(x0.shape(), std::move(v));
}

void check_label(Label y) {
  if (!valid_label(y)) throw InvalidArgument("attack: label outside {0, 1}");
}

}  // namespace

AttackOutcome fgsm(const DetectorModel& model, const ImageTensor& x, Label y,
                   const AttackConfig& cfg) {
  cfg.validate();
  check_label(y);
  if (cfg.family != AttackFamily::kFgsm) throw InvalidArgument("fgsm: config family is not FGSM");
  AttackOutcome out{signed_step(model, x, x, y, cfg.epsilon, cfg.epsilon), false, 1};
  out.success = misclassified(model, out.x_adv, y);
  return out;
}

AttackOutcome pgd(const DetectorModel& model, const ImageTensor& x, Label y,
                  const AttackConfig& cfg, std::uint64_t sample_id,
                  const IterateObserver& observer) {
  cfg.validate();
  check_label(y);
  if (cfg.family != AttackFamily::kPgd) throw InvalidArgument("pgd: config family is not PGD");
  ImageTensor xt = x;
  if (cfg.random_start) {
    CounterRng rng(cfg.seed, StreamTag::kAttack, {sample_id});
    std::vector<double> v(x.size());
    const auto orig = x.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = project(orig[i] + rng.uniform(-cfg.epsilon, cfg.epsilon), orig[i], cfg.epsilon);
    xt = ImageTensor(x.shape(), std::move(v));
  }
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    xt = signed_step(model, x, xt, y, cfg.step_size, cfg.epsilon);
    if (observer) observer(t, xt);
  }
  AttackOutcome out{std::move(xt), false, cfg.iterations};
  out.success = misclassified(model, out.x_adv, y);
  return out;
}

AttackOutcome cw_l2(const DetectorModel& model, const ImageTensor& x, Label y,
                    const AttackConfig& cfg) {
  cfg.validate();
  check_label(y);
  if (cfg.family != AttackFamily::kCwL2) throw InvalidArgument("cw_l2: config family is not CW_L2");
  const Label other = flip_label(y);
  {
    const Logits l = forward(model, x).logits;
    if (predict(l) != y && l[other] - l[y] >= cfg.kappa) return {x, true, 0};
  }

  // Adam on w, x(w) = (tanh(w) + 1) / 2.
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8, kEdge = 1.0 - 1e-6;
  const auto orig = x.values();
  const std::size_t n = x.size();
  std::vector<double> w(n), m(n, 0.0), v(n, 0.0), xw(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::atanh((2.0 * orig[i] - 1.0) * kEdge);

  std::optional<ImageTensor> best;
  double best_l2 = 0.0;
  ImageTensor last = x;
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    for (std::size_t i = 0; i < n; ++i) xw[i] = (std::tanh(w[i]) + 1.0) / 2.0;
    last = ImageTensor::clamped(x.shape(), xw);
    const Logits l = forward(model, last).logits;
    const double margin = l[other] - l[y];
    if (predict(l) != y && margin >= cfg.kappa) {
      const double d = l2_distance(last, x);
      if (!best || d < best_l2) {
        best = last;
        best_l2 = d;
      }
    }

    std::vector<double> grad_x(n);
    for (std::size_t i = 0; i < n; ++i) grad_x[i] = 2.0 * (xw[i] - orig[i]);
    if (l[y] - l[other] + cfg.kappa > 0.0) {
      Logits weights{};
      weights[y] = cfg.c;
      weights[other] = -cfg.c;
      const Tensor3 g = logit_input_vjp(model, last, weights);
      for (std::size_t i = 0; i < n; ++i) grad_x[i] += g.values[i];
    }

    b1t *= kBeta1;
    b2t *= kBeta2;
    for (std::size_t i = 0; i < n; ++i) {
      const double th = std::tanh(w[i]);
      const double gw = grad_x[i] * (1.0 - th * th) / 2.0;
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gw;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gw * gw;
      const double mh = m[i] / (1.0 - b1t);
      const double vh = v[i] / (1.0 - b2t);
      w[i] -= cfg.step_size * mh / (std::sqrt(vh) + kAdamEps);
    }
  }
  // Score the final update as well.
  for (std::size_t i = 0; i < n; ++i) xw[i] = (std::tanh(w[i]) + 1.0) / 2.0;
  last = ImageTensor::clamped(x.shape(), xw);
  const Logits l = forward(model, last).logits;
  if (predict(l) != y && l[other] - l[y] >= cfg.kappa) {
    const double d = l2_distance(last, x);
    if (!best || d < best_l2) best = last;
  }
  if (best) return {std::move(*best), true, cfg.iterations};
  return {std::move(last), false, cfg.iterations};
}

AttackOutcome random_search_blackbox(const DetectorModel& model, const ImageTensor& x, Label y,
                                     const AttackConfig& cfg, std::uint64_t sample_id,
                                     const std::function<void(double)>& on_accept) {
  cfg.validate();
  check_label(y);
  if (cfg.family != AttackFamily::kRandSearch)
    throw InvalidArgument("random_search_blackbox: config family is not RANDSEARCH");
  const Shape s = x.shape();
  const auto orig = x.values();
  const double eps = cfg.epsilon;
  CounterRng rng(cfg.seed, StreamTag::kAttack, {sample_id});

  std::size_t queries = 1;
  Logits l = forward(model, x).logits;
  if (predict(l) != y) return {x, true, queries};
  double loss = cross_entropy(softmax(l), y);
  std::vector<double> cur(orig.begin(), orig.end());

  auto try_accept = [&](std::vector<double> cand) {
    ImageTensor img(s, std::move(cand));
    const Logits lc = forward(model, img).logits;
    ++queries;
    const double lossc = cross_entropy(softmax(lc), y);
    if (lossc > loss) {
      loss = lossc;
      cur.assign(img.values().begin(), img.values().end());
      if (on_accept) on_accept(loss);
      return predict(lc) != y;
    }
    return false;
  };

  // Vertical stripes of +-eps, one sign per channel and column.
  {
    std::vector<double> cand(cur.size());
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t w = 0; w < s.width; ++w) {
        const double d = rng.uniform() < 0.5 ? -eps : eps;
        for (std::size_t h = 0; h < s.height; ++h) {
          const std::size_t i = s.index(c, h, w);
          cand[i] = project(orig[i] + d, orig[i], eps);
        }
      }
    if (try_accept(std::move(cand))) return {ImageTensor(s, cur), true, queries};
  }

  const double area = static_cast<double>(s.height * s.width);
  const std::size_t max_side = std::min(s.height, s.width);
  while (queries < cfg.iterations) {
    // Patch fraction halves as the budget is spent.
    const double progress = static_cast<double>(queries) / static_cast<double>(cfg.iterations);
    double frac = 0.3;
    for (double mark : {0.02, 0.1, 0.2, 0.4, 0.6, 0.8})
      if (progress > mark) frac /= 2.0;
    const std::size_t side = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(std::sqrt(frac * area))), 1, max_side);
    const std::size_t top = rng.below(s.height - side + 1);
    const std::size_t left = rng.below(s.width - side + 1);
    std::vector<double> cand = cur;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double d = rng.uniform() < 0.5 ? -eps : eps;
      for (std::size_t h = top; h < top + side; ++h)
        for (std::size_t w = left; w < left + side; ++w) {
          const std::size_t i = s.index(c, h, w);
          cand[i] = project(orig[i] + d, orig[i], eps);
        }
    }
    if (try_accept(std::move(cand))) return {ImageTensor(s, cur), true, queries};
  }
  return {ImageTensor(s, cur), false, queries};
}

AttackOutcome run_attack(const DetectorModel& model, const ImageTensor& x, Label y,
                         const AttackConfig& cfg, std::uint64_t sample_id) {
  switch (cfg.family) {
    case AttackFamily::kFgsm: return fgsm(model, x, y, cfg);
    case AttackFamily::kPgd: return pgd(model, x, y, cfg, sample_id);
    case AttackFamily::kCwL2: return cw_l2(model, x, y, cfg);
    case AttackFamily::kRandSearch: return random_search_blackbox(model, x, y, cfg, sample_id);
  }
  throw InvalidArgument("attack: unknown family");
}

std::string format_attack_csv(std::span<const AttackRecord> rows) {
  std::string out = std::string(kAttackCsvSchema) + "\n";
  out += "sample_id,family,epsilon,success,linf,l2,steps\n";
  for (const AttackRecord& r : rows)
    out += fmt::format("{},{},{:.17g},{},{:.17g},{:.17g},{}\n", r.sample_id, to_string(r.family),
                       r.epsilon, r.success ? 1 : 0, r.linf, r.l2, r.steps);
  return out;
}

}  // namespace trimlab

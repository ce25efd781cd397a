#include "trimlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "trimlab/rng.hpp"

namespace trimlab {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kStandard: return "standard";
    case Regime::kPgdAt: return "pgd-at";
    case Regime::kTrades: return "trades";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "standard") return Regime::kStandard;
  if (s == "pgd-at") return Regime::kPgdAt;
  if (s == "trades") return Regime::kTrades;
  throw InvalidArgument("unknown training regime '" + s + "' (standard | pgd-at | trades)");
}

std::string to_string(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "sgd") return Optimizer::kSgd;
  throw InvalidArgument("unknown optimizer '" + s + "' (adam | sgd)");
}

AttackConfig TrainConfig::inner_pgd(double epsilon) {
  AttackConfig a = AttackConfig::pgd(epsilon);
  a.iterations = 10;
  return a;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw InvalidArgument("train: epochs must be >= 1");
  if (batch_size == 0) throw InvalidArgument("train: batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidArgument("train: learning rate must be > 0");
  if (!(trades_beta > 0.0) || !std::isfinite(trades_beta))
    throw InvalidArgument("train: TRADES beta must be > 0");
  attack.validate();
  if (attack.family != AttackFamily::kPgd)
    throw InvalidArgument("train: the inner attack must be PGD");
}

TrainingDiverged::TrainingDiverged(const DivergenceRecord& r)
    : Error(fmt::format("training diverged: non-finite loss {} at epoch {}, step {} "
                        "(parameter l2 norm {:.6g})",
                        r.loss, r.epoch, r.step, r.parameter_norm)),
      record_(r) {}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, StreamTag::kShuffle, {epoch});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

// ln max(p, floor) for both classes.
std::array<double, 2> log_probs(const SoftmaxOutput& p) {
  return {std::log(std::max(p.p_real, kProbabilityFloor)),
          std::log(std::max(p.p_fake, kProbabilityFloor))};
}

double kl_from(const SoftmaxOutput& p, const SoftmaxOutput& q) {
  const auto lp = log_probs(p), lq = log_probs(q);
  return p.p_real * (lp[0] - lq[0]) + p.p_fake * (lp[1] - lq[1]);
}

// Sign-gradient ascent on KL(p_clean || p(x')) inside the eps-ball.
ImageTensor trades_inner(const DetectorModel& model, const ImageTensor& x,
                         const SoftmaxOutput& p_clean, const AttackConfig& a,
                         std::uint64_t sample_id) {
  const auto orig = x.values();
  std::vector<double> v(orig.begin(), orig.end());
  if (a.random_start) {
    CounterRng rng(a.seed, StreamTag::kAttack, {sample_id});
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto [lo, hi] = feasible_interval(orig[i], a.epsilon);
      v[i] = std::clamp(orig[i] + rng.uniform(-a.epsilon, a.epsilon), lo, hi);
    }
  }
  ImageTensor xt(x.shape(), v);
  for (std::size_t t = 0; t < a.iterations; ++t) {
    const SoftmaxOutput q = softmax(forward(model, xt).logits);
    const Tensor3 g =
        logit_input_vjp(model, xt, {q.p_real - p_clean.p_real, q.p_fake - p_clean.p_fake});
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double s = g.values[i] > 0.0 ? 1.0 : (g.values[i] < 0.0 ? -1.0 : 0.0);
      const auto [lo, hi] = feasible_interval(orig[i], a.epsilon);
      v[i] = std::clamp(v[i] + a.step_size * s, lo, hi);
    }
    xt = ImageTensor(x.shape(), v);
  }
  return xt;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainResult train(const DetectorModel& init, std::span<const ImageTensor> xs,
                  std::span<const Label> ys, const TrainConfig& cfg) {
  cfg.validate();
  if (xs.empty() || xs.size() != ys.size())
    throw InvalidArgument("train: empty dataset or image/label count mismatch");
  for (const ImageTensor& x : xs)
    if (x.shape() != init.architecture().input_shape())
      throw InvalidArgument("train: image shape " + x.shape().str() + " does not match the model");
  TrainResult r{init, {}, {}, {}};
  DetectorModel& model = r.model;
  const std::size_t n = xs.size();
  std::size_t step = 0;
  std::vector<double> m1(model.parameters().size(), 0.0), m2(m1.size(), 0.0);
  double b1t = 1.0, b2t = 1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, n);
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
      const std::size_t m = std::min(cfg.batch_size, n - start);
      std::vector<ImageTensor> bx;
      std::vector<Label> by;
      bx.reserve(m);
      by.reserve(m);
      for (std::size_t k = 0; k < m; ++k) {
        bx.push_back(xs[order[start + k]]);
        by.push_back(ys[order[start + k]]);
      }

      AttackConfig inner = cfg.attack;
      inner.seed = derive_key(cfg.seed, {static_cast<std::uint64_t>(StreamTag::kTrainAttack), step});
      const bool tracing = cfg.trace_every != 0 && step % cfg.trace_every == 0;

      std::vector<ImageTensor> adv;
      double loss = 0.0;
      std::vector<double> grad;
      // Inputs were checked above, so a rejection here means the logits overflowed.
      try {
        if (cfg.regime == Regime::kTrades) {
          std::vector<SoftmaxOutput> pc(m);
          for (std::size_t k = 0; k < m; ++k) pc[k] = softmax(forward(model, bx[k]).logits);
          for (std::size_t k = 0; k < m; ++k)
            adv.push_back(trades_inner(model, bx[k], pc[k], inner, order[start + k]));
          grad.assign(model.parameters().size(), 0.0);
          const double beta = cfg.trades_beta;
          for (std::size_t k = 0; k < m; ++k) {
            const ForwardTrace tc = forward_trace(model, bx[k]);
            const ForwardTrace ta = forward_trace(model, adv[k]);
            const SoftmaxOutput p = softmax(tc.logits), q = softmax(ta.logits);
            const double kl = kl_from(p, q);
            loss += cross_entropy(p, by[k]) + beta * kl;
            const auto lp = log_probs(p), lq = log_probs(q);
            Logits dc = cross_entropy_logit_gradient(p, by[k]);
            dc[0] += beta * p.p_real * (lp[0] - lq[0] - kl);
            dc[1] += beta * p.p_fake * (lp[1] - lq[1] - kl);
            const Logits da{beta * (q.p_real - p.p_real), beta * (q.p_fake - p.p_fake)};
            backward(model, tc, dc, grad, nullptr);
            backward(model, ta, da, grad, nullptr);
          }
          loss /= static_cast<double>(m);
          for (double& g : grad) g /= static_cast<double>(m);
        } else {
          if (cfg.regime == Regime::kPgdAt || tracing) {
            for (std::size_t k = 0; k < m; ++k)
              adv.push_back(pgd(model, bx[k], by[k], inner, order[start + k]).x_adv);
          }
          const std::vector<ImageTensor>& fit = cfg.regime == Regime::kPgdAt ? adv : bx;
          loss = mean_cross_entropy(model, fit, by);
          grad = param_gradient(model, fit, by);
        }
      } catch (const InvalidArgument&) {
        loss = std::numeric_limits<double>::quiet_NaN();
      }

      if (!std::isfinite(loss))
        throw TrainingDiverged({epoch, step, loss, l2_norm(model.parameters())});

      if (tracing) {
        r.trace.records.push_back(make_mi_record(step, label_entropy(by),
                                                 mean_cross_entropy(model, bx, by),
                                                 mean_cross_entropy(model, adv, by)));
      }

      auto params = model.parameters();
      if (cfg.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
      } else {
        b1t *= 0.9;
        b2t *= 0.999;
        for (std::size_t i = 0; i < params.size(); ++i) {
          m1[i] = 0.9 * m1[i] + 0.1 * grad[i];
          m2[i] = 0.999 * m2[i] + 0.001 * grad[i] * grad[i];
          params[i] -= cfg.learning_rate * (m1[i] / (1.0 - b1t)) / (std::sqrt(m2[i] / (1.0 - b2t)) + 1e-8);
        }
      }
      r.step_losses.push_back(loss);
      epoch_sum += loss;
      ++epoch_steps;
    }
    r.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_steps));
  }
  return r;
}

std::string format_loss_csv(const TrainResult& r, std::size_t steps_per_epoch) {
  std::string out = std::string(kLossCsvSchema) + "\n";
  out += "step,epoch,loss\n";
  for (std::size_t s = 0; s < r.step_losses.size(); ++s)
    out += fmt::format("{},{},{:.17g}\n", s, steps_per_epoch ? s / steps_per_epoch : 0,
                       r.step_losses[s]);
  return out;
}

std::vector<ShiftRow> sweep_epsilon_feature_shift(const DetectorModel& model,
                                                  std::span<const ImageTensor> xs,
                                                  std::span<const Label> ys,
                                                  std::span<const double> epsilons,
                                                  std::uint64_t seed) {
  if (xs.size() != ys.size()) throw InvalidArgument("shift sweep: image/label count mismatch");
  std::vector<std::size_t> correct;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (predict(forward(model, xs[i]).logits) == ys[i]) correct.push_back(i);

  std::vector<ShiftRow> rows;
  for (double eps : epsilons) {
    const AttackConfig a = AttackConfig::pgd(eps, seed);
    ShiftRow row;
    row.epsilon = eps;
    row.attacked = correct.size();
    double sum_all = 0.0, sum_s = 0.0, sum_f = 0.0;
    for (std::size_t i : correct) {
      const AttackOutcome o = pgd(model, xs[i], ys[i], a, i);
      const double d = feature_shift(model, xs[i], o.x_adv);
      sum_all += d;
      if (o.success) {
        sum_s += d;
        ++row.successes;
      } else {
        sum_f += d;
      }
    }
    const std::size_t failures = row.attacked - row.successes;
    if (row.attacked > 0) row.mean_all = sum_all / static_cast<double>(row.attacked);
    if (row.successes > 0) row.mean_success = sum_s / static_cast<double>(row.successes);
    if (failures > 0) row.mean_failed = sum_f / static_cast<double>(failures);
    rows.push_back(row);
  }
  return rows;
}

std::string format_shift_csv(std::span<const ShiftRow> rows) {
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.17g}", *v) : std::string("NA");
  };
  std::string out = std::string(kShiftCsvSchema) + "\n";
  out += "epsilon,attacked,successes,mean_all,mean_success,mean_failed\n";
  for (const ShiftRow& r : rows)
    out += fmt::format("{:.17g},{},{},{:.17g},{},{}\n", r.epsilon, r.attacked, r.successes,
                       r.mean_all, opt(r.mean_success), opt(r.mean_failed));
  return out;
}

}  // namespace trimlab

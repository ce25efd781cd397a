#include "trimlab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "trimlab/binary_io.hpp"
#include "trimlab/error.hpp"
#include "trimlab/info.hpp"

namespace trimlab {

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

std::string to_string(Gate g) {
  switch (g) {
    case Gate::kPass: return "PASS";
    case Gate::kEntropyFlip: return "ENTROPY_FLIP";
    case Gate::kKlFlip: return "KL_FLIP";
  }
  return "?";
}

std::string to_string(KlAggregation a) {
  return a == KlAggregation::kSingleDraw ? "single-draw" : "mean-over-k";
}

KlAggregation parse_kl_aggregation(const std::string& s) {
  if (s == "single-draw") return KlAggregation::kSingleDraw;
  if (s == "mean-over-k") return KlAggregation::kMeanOverK;
  throw InvalidArgument("unknown kl aggregation '" + s + "' (single-draw | mean-over-k)");
}

void TrimConfig::validate() const {
  if (!(h_min >= 0.0 && h_min < h_max && h_max <= kLn2))
    throw InvalidArgument(fmt::format("entropy bounds must satisfy 0 <= h_min < h_max <= ln 2 "
                                      "(got h_min = {}, h_max = {})", h_min, h_max));
  if (!(tau.when_real > 0.0) || !(tau.when_fake > 0.0))
    throw InvalidArgument("KL thresholds must be > 0");
  denoiser.validate();
  if (aggregation == KlAggregation::kSingleDraw && denoiser.draws != 1)
    throw InvalidArgument("single-draw aggregation requires draws = 1");
}

TrimConfig TrimConfig::entropy_only() const {
  TrimConfig c = *this;
  c.tau = KlThreshold::infinite();
  return c;
}

namespace {

double kl_against_denoised(const DetectorModel& model, const TrimConfig& cfg,
                           const SoftmaxOutput& yb, const ImageTensor& x, std::uint64_t sample_id) {
  const std::size_t k = cfg.aggregation == KlAggregation::kSingleDraw ? 1 : cfg.denoiser.draws;
  double total = 0.0;
  for (std::size_t d = 0; d < k; ++d) {
    CounterRng rng = denoise_stream(cfg.seed, sample_id, d);
    const ImageTensor xa = apply_denoiser(cfg.denoiser, x, rng);
    total += kl_divergence(yb, softmax(forward(model, xa).logits));
  }
  return total / static_cast<double>(k);
}

}  // namespace

TrimVerdict trim_predict(const DetectorModel& model, const TrimConfig& cfg, const ImageTensor& x,
                         std::uint64_t sample_id) {
  cfg.validate();
  const SoftmaxOutput yb = softmax(forward(model, x).logits);
  TrimVerdict v;
  v.raw_label = predict(yb);
  v.entropy = prediction_entropy(yb);
  if (v.entropy < cfg.h_min || v.entropy > cfg.h_max) {
    v.gate = Gate::kEntropyFlip;
    v.final_label = flip_label(v.raw_label);
    return v;
  }
  v.kl = kl_against_denoised(model, cfg, yb, x, sample_id);
  if (*v.kl > cfg.tau.for_prediction(v.raw_label)) {
    v.gate = Gate::kKlFlip;
    v.final_label = flip_label(v.raw_label);
  } else {
    v.gate = Gate::kPass;
    v.final_label = v.raw_label;
  }
  return v;
}

double denoised_kl(const DetectorModel& model, const TrimConfig& cfg, const ImageTensor& x,
                   std::uint64_t sample_id) {
  cfg.denoiser.validate();
  return kl_against_denoised(model, cfg, softmax(forward(model, x).logits), x, sample_id);
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q * static_cast<double>(values.size()));
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(rank));
  return values[std::min(k, values.size()) - 1];
}

EntropyCalibration calibrate_entropy_bounds(const DetectorModel& model,
                                            std::span<const ImageTensor> clean, double lower_q,
                                            double upper_q) {
  if (clean.empty()) throw InvalidArgument("calibrate_entropy_bounds: empty validation set");
  if (!(lower_q >= 0.0 && lower_q < upper_q && upper_q <= 1.0))
    throw InvalidArgument("calibrate_entropy_bounds: need 0 <= lower_q < upper_q <= 1");
  std::vector<double> h;
  h.reserve(clean.size());
  for (const ImageTensor& x : clean) h.push_back(prediction_entropy(softmax(forward(model, x).logits)));

  EntropyCalibration c;
  c.q_lower = empirical_quantile(h, lower_q);
  c.q_upper = empirical_quantile(h, upper_q);
  if (clean.size() == 1)
    c.warnings.push_back("degenerate calibration: single sample, bounds span one entropy value");
  c.h_min = 0.1 * c.q_lower;
  c.h_max = std::min(10.0 * c.q_upper, kLn2);
  if (c.h_min == 0.0)
    c.warnings.push_back("lower entropy quantile is 0; h_min set to 0 (low-entropy gate disabled)");
  if (!(c.h_min < c.h_max))
    throw Error(fmt::format("calibrate_entropy_bounds: degenerate bounds [{}, {}]; every clean "
                            "entropy is zero", c.h_min, c.h_max));
  return c;
}

KlCalibration calibrate_kl_threshold(const DetectorModel& model, std::span<const ImageTensor> clean,
                                     const TrimConfig& cfg, double quantile_q, bool per_class) {
  if (clean.empty()) throw InvalidArgument("calibrate_kl_threshold: empty validation set");
  if (!(quantile_q >= 0.0 && quantile_q <= 1.0))
    throw InvalidArgument("calibrate_kl_threshold: quantile outside [0, 1]");
  cfg.denoiser.validate();
  std::vector<double> all;
  std::vector<double> by_class[2];
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const SoftmaxOutput yb = softmax(forward(model, clean[i]).logits);
    const double kl = kl_against_denoised(model, cfg, yb, clean[i], i);
    all.push_back(kl);
    by_class[predict(yb)].push_back(kl);
  }

  KlCalibration c;
  auto floored = [&](double q, const char* what) {
    if (q < kKlThresholdFloor) {
      c.degenerate = true;
      c.warnings.push_back(fmt::format("degenerate {} KL quantile {:.3g}; threshold floored at {:g}",
                                       what, q, kKlThresholdFloor));
      return kKlThresholdFloor;
    }
    return q;
  };
  const double global = floored(empirical_quantile(all, quantile_q), "global");
  if (!per_class) {
    c.tau = KlThreshold::single(global);
    return c;
  }
  double t[2];
  for (Label y : {kReal, kFake}) {
    const char* name = y == kReal ? "real-predicted" : "fake-predicted";
    if (by_class[y].empty()) {
      c.warnings.push_back(fmt::format("no {} samples; using the global threshold", name));
      t[y] = global;
    } else {
      t[y] = floored(empirical_quantile(by_class[y], quantile_q), name);
    }
  }
  c.tau = KlThreshold::per_class(t[kReal], t[kFake]);
  return c;
}

EvalReport evaluate_defense(const DetectorModel& model, const TrimConfig& cfg,
                            std::span<const ImageTensor> clean, std::span<const Label> ys,
                            std::span<const ImageTensor> adversarial) {
  cfg.validate();
  if (clean.size() != ys.size() || clean.size() != adversarial.size())
    throw InvalidArgument("evaluate_defense: clean, adversarial and label counts differ");
  if (clean.empty()) throw InvalidArgument("evaluate_defense: empty dataset");
  EvalReport r;
  r.n = clean.size();
  std::size_t raw_c = 0, trim_c = 0, raw_a = 0, trim_a = 0;
  auto count_gate = [](GateCounts& g, Gate gate) {
    (gate == Gate::kPass ? g.pass : gate == Gate::kEntropyFlip ? g.entropy_flip : g.kl_flip) += 1;
  };
  for (int pass = 0; pass < 2; ++pass) {
    const bool adv = pass == 1;
    const auto xs = adv ? adversarial : clean;
    for (std::size_t i = 0; i < r.n; ++i) {
      EvalRow row{adv, i, ys[i], trim_predict(model, cfg, xs[i], i)};
      const bool raw_ok = row.verdict.raw_label == ys[i];
      const bool trim_ok = row.verdict.final_label == ys[i];
      (adv ? raw_a : raw_c) += raw_ok ? 1 : 0;
      (adv ? trim_a : trim_c) += trim_ok ? 1 : 0;
      count_gate(adv ? r.adversarial_gates : r.clean_gates, row.verdict.gate);
      r.rows.push_back(std::move(row));
    }
  }
  const double n = static_cast<double>(r.n);
  r.raw_clean_accuracy = raw_c / n;
  r.trim_clean_accuracy = trim_c / n;
  r.raw_robust_accuracy = raw_a / n;
  r.trim_robust_accuracy = trim_a / n;
  r.attack_success_rate = 1.0 - r.raw_robust_accuracy;
  return r;
}

EvalReport evaluate_defense(const DetectorModel& model, const TrimConfig& cfg,
                            std::span<const ImageTensor> clean, std::span<const Label> ys,
                            const AttackConfig& attack) {
  if (clean.size() != ys.size())
    throw InvalidArgument("evaluate_defense: image and label counts differ");
  std::vector<ImageTensor> adv;
  adv.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i)
    adv.push_back(run_attack(model, clean[i], ys[i], attack, i).x_adv);
  return evaluate_defense(model, cfg, clean, ys, adv);
}

std::string format_eval_csv(const EvalReport& report) {
  std::string out = std::string(kEvalCsvSchema) + "\n";
  out += "input,sample_id,true_label,raw_label,final_label,entropy,kl,gate\n";
  for (const EvalRow& r : report.rows) {
    const TrimVerdict& v = r.verdict;
    out += fmt::format("{},{},{},{},{},{:.17g},{},{}\n", r.adversarial ? "adversarial" : "clean",
                       r.sample_id, r.true_label, v.raw_label, v.final_label, v.entropy,
                       v.kl ? fmt::format("{:.17g}", *v.kl) : std::string(), to_string(v.gate));
  }
  return out;
}

std::string format_eval_summary(const EvalReport& r) {
  auto gates = [](const GateCounts& g) {
    return fmt::format("PASS={} ENTROPY_FLIP={} KL_FLIP={}", g.pass, g.entropy_flip, g.kl_flip);
  };
  return fmt::format(
      "samples: {}\n"
      "raw clean accuracy:    {:.4f}\n"
      "TRIM clean accuracy:   {:.4f}\n"
      "raw robust accuracy:   {:.4f}\n"
      "TRIM robust accuracy:  {:.4f}\n"
      "attack success rate:   {:.4f}\n"
      "clean gates:           {}\n"
      "adversarial gates:     {}\n",
      r.n, r.raw_clean_accuracy, r.trim_clean_accuracy, r.raw_robust_accuracy,
      r.trim_robust_accuracy, r.attack_success_rate, gates(r.clean_gates),
      gates(r.adversarial_gates));
}

std::string format_profile(const TrimConfig& cfg, std::string_view name) {
  cfg.validate();
  std::string out = "# trimlab profile v1\n";
  if (!name.empty()) out += fmt::format("# {}\n", name);
  out += fmt::format("h_min = {:.17g}\n", cfg.h_min);
  out += fmt::format("h_max = {:.17g}\n", cfg.h_max);
  if (cfg.tau.is_single()) {
    out += fmt::format("tau = {:.17g}\n", cfg.tau.when_real);
  } else {
    out += fmt::format("tau_real = {:.17g}\n", cfg.tau.when_real);
    out += fmt::format("tau_fake = {:.17g}\n", cfg.tau.when_fake);
  }
  out += "denoiser = " + format_steps(cfg.denoiser.steps) + "\n";
  out += fmt::format("draws = {}\n", cfg.denoiser.draws);
  out += "kl_aggregation = " + to_string(cfg.aggregation) + "\n";
  out += fmt::format("seed = {}\n", cfg.seed);
  return out;
}

namespace {

std::string_view trim_view(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& v, const std::string& key, std::size_t at) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ParseError("profile: key '" + key + "' has bad number '" + v + "'", at);
  return d;
}

std::uint64_t parse_count(const std::string& v, const std::string& key, std::size_t at) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError("profile: key '" + key + "' needs a non-negative integer, got '" + v + "'", at);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ParseError("profile: key '" + key + "' out of range", at);
  }
}

}  // namespace

TrimConfig parse_profile(std::string_view text) {
  struct Entry {
    std::string value;
    std::size_t at;
  };
  std::map<std::string, Entry> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t at = pos;
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim_view(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("profile: expected 'key = value'", at);
    const std::string key(trim_view(line.substr(0, eq)));
    const std::string value(trim_view(line.substr(eq + 1)));
    static const char* known[] = {"h_min", "h_max", "tau", "tau_real", "tau_fake",
                                  "denoiser", "draws", "kl_aggregation", "seed"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ParseError("profile: unknown key '" + key + "'", at);
    if (!kv.emplace(key, Entry{value, at}).second)
      throw ParseError("profile: duplicate key '" + key + "'", at);
  }
  auto need = [&](const std::string& key) -> const Entry& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("profile: missing key '" + key + "'", text.size());
    return it->second;
  };

  TrimConfig cfg;
  cfg.h_min = parse_real(need("h_min").value, "h_min", need("h_min").at);
  cfg.h_max = parse_real(need("h_max").value, "h_max", need("h_max").at);
  const bool single = kv.count("tau") != 0;
  const bool pair = kv.count("tau_real") != 0 || kv.count("tau_fake") != 0;
  if (single == pair)
    throw ParseError("profile: give either 'tau' or both 'tau_real' and 'tau_fake'", text.size());
  if (single) {
    cfg.tau = KlThreshold::single(parse_real(kv["tau"].value, "tau", kv["tau"].at));
  } else {
    const Entry& r = need("tau_real");
    const Entry& f = need("tau_fake");
    cfg.tau = KlThreshold::per_class(parse_real(r.value, "tau_real", r.at),
                                     parse_real(f.value, "tau_fake", f.at));
  }
  const Entry& den = need("denoiser");
  try {
    cfg.denoiser.steps = parse_steps(den.value);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("profile: ") + e.what(), den.at);
  }
  cfg.denoiser.draws = kv.count("draws") ? parse_count(kv["draws"].value, "draws", kv["draws"].at) : 1;
  if (kv.count("kl_aggregation")) {
    try {
      cfg.aggregation = parse_kl_aggregation(kv["kl_aggregation"].value);
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string("profile: ") + e.what(), kv["kl_aggregation"].at);
    }
  }
  cfg.seed = kv.count("seed") ? parse_count(kv["seed"].value, "seed", kv["seed"].at) : 0;
  cfg.validate();
  return cfg;
}

void save_profile(const TrimConfig& cfg, const std::filesystem::path& path, std::string_view name) {
  write_text_file(path, format_profile(cfg, name));
}

TrimConfig load_profile(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse_profile(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

TrimConfig preset_profile(const std::string& name) {
  TrimConfig c;
  if (name == "cnnspot") {
    c.h_min = 1e-15;
    c.h_max = 1e-1;
    c.denoiser = DenoiserSpec::blur_crop_flip();
    c.tau = KlThreshold::single(1.0);
  } else if (name == "univfd") {
    c.h_min = 1e-6;
    c.h_max = 6e-1;
    c.denoiser = DenoiserSpec::blur_crop_flip();
    c.tau = KlThreshold::single(1.0);
  } else if (name == "npr") {
    c.h_min = 1e-25;
    c.h_max = 1e-1;
    c.denoiser = DenoiserSpec::flip_only();
    // Printed as "1 x e^{-10}" and "1 x e^{-6}"; read as powers of ten like the entropy bounds.
    c.tau = KlThreshold::per_class(1e-10, 1e-6);
  } else if (name == "freqnet-progan" || name == "freqnet-genimage") {
    c.h_min = 1e-20;
    c.h_max = 0.2;  // printed as "1 x 5^{-1}"
    c.denoiser = DenoiserSpec::flip_only();
    c.tau = name == "freqnet-progan" ? KlThreshold::per_class(1e-6, 1e-2)
                                     : KlThreshold::per_class(1e-4, 1.0);
  } else {
    throw InvalidArgument("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  return {"cnnspot", "univfd", "npr", "freqnet-progan", "freqnet-genimage"};
}

}  // namespace trimlab

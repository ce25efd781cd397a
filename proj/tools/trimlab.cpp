// trimlab command-line driver.
//
// Every subcommand writes its outputs plus manifest.json into --out DIR. The manifest
// records argv, working directory, resolved config, seed and FNV-1a checksums of the
// inputs and outputs; `report --rerun` replays argv into a scratch directory and
// compares the output checksums.
//
// Exit codes: 0 success, 2 invalid flags/config, 3 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "trimlab/attacks.hpp"
#include "trimlab/binary_io.hpp"
#include "trimlab/dataset.hpp"
#include "trimlab/defense.hpp"
#include "trimlab/info.hpp"
#include "trimlab/model.hpp"
#include "trimlab/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace trimlab;

namespace {

constexpr const char* kToolVersion = "trimlab 1.0.0";
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string file_checksum(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

// "0.03", "8/255"
double parse_budget(const std::string& text, const std::string& flag) {
  std::string s = text;
  double scale = 1.0;
  if (s.size() > 4 && s.compare(s.size() - 4, 4, "/255") == 0) {
    s.resize(s.size() - 4);
    scale = 1.0 / 255.0;
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw InvalidArgument(fmt::format("{}: cannot read '{}' as a number (use 0.03 or 8/255)", flag, text));
  return v * scale;
}

DenoiserSpec parse_denoiser(const std::string& text, std::size_t draws) {
  DenoiserSpec d;
  if (text == "blur-crop-flip")
    d = DenoiserSpec::blur_crop_flip();
  else if (text == "flip")
    d = DenoiserSpec::flip_only();
  else
    d.steps = parse_steps(text);
  d.draws = draws;
  return d;
}

TrimConfig resolve_profile(const std::string& ref) {
  if (ref.rfind("preset:", 0) == 0) return preset_profile(ref.substr(7));
  return load_profile(ref);
}

json attack_json(const AttackConfig& a) {
  return {{"family", to_string(a.family)}, {"epsilon", a.epsilon},   {"step_size", a.step_size},
          {"iterations", a.iterations},    {"kappa", a.kappa},       {"c", a.c},
          {"random_start", a.random_start}, {"seed", a.seed}};
}

// Collects what one invocation read and wrote.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  fs::path out;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;  // names inside `out`

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }

  void write_manifest() const {
    json m;
    m["tool_version"] = kToolVersion;
    m["command"] = command;
    m["argv"] = argv;
    m["cwd"] = fs::current_path().string();
    m["seed"] = seed;
    m["config"] = config;
    json in = json::object(), outs = json::object();
    for (const fs::path& p : inputs) in[p.string()] = file_checksum(p);
    for (const std::string& n : outputs) outs[n] = file_checksum(out / n);
    m["inputs"] = in;
    m["outputs"] = outs;
    write_text_file(out / "manifest.json", m.dump(2) + "\n");
  }
};

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    throw IoError("--out: cannot create directory '" + out.string() + "'");
}

// ---- subcommands --------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t n_per_class = 500;
  std::size_t channels = 1, height = 16, width = 16;
  std::string amplitude = "2/255";
  std::string pattern = "checkerboard";
  std::uint64_t seed = 0;
};

void gen_data(Run& run, const GenDataArgs& a) {
  DatasetSpec s;
  s.n_per_class = a.n_per_class;
  s.channels = a.channels;
  s.height = a.height;
  s.width = a.width;
  s.amplitude = parse_budget(a.amplitude, "--amplitude");
  s.pattern = parse_pattern(a.pattern);
  s.seed = a.seed;
  s.validate();
  run.seed = a.seed;
  run.config = {{"n_per_class", s.n_per_class}, {"channels", s.channels}, {"height", s.height},
                {"width", s.width},             {"amplitude", s.amplitude},
                {"pattern", to_string(s.pattern)}, {"texture", "smoothed-noise"}};
  prepare_out(run.out);
  save_dataset(generate(s), run.output("dataset.bin"));
  std::printf("wrote %zu samples to %s\n", static_cast<std::size_t>(2 * s.n_per_class),
              (run.out / "dataset.bin").string().c_str());
}

struct TrainArgs {
  std::string data, init;
  std::string regime = "standard", optimizer = "adam";
  std::size_t epochs = 5, batch = 64, trace_every = 1, hidden = 8, features = 32;
  double lr = 0.01, trades_beta = 6.0;
  std::string eps = "8/255";
  std::uint64_t seed = 0;
};

void train_cmd(Run& run, const TrainArgs& a) {
  TrainConfig c;
  c.regime = parse_regime(a.regime);
  c.optimizer = parse_optimizer(a.optimizer);
  c.epochs = a.epochs;
  c.batch_size = a.batch;
  c.learning_rate = a.lr;
  c.trades_beta = a.trades_beta;
  c.trace_every = a.trace_every;
  c.seed = a.seed;
  c.attack = TrainConfig::inner_pgd(parse_budget(a.eps, "--eps"));
  c.validate();
  const LabeledDataset ds = load_dataset(a.data);
  run.inputs.push_back(a.data);
  DetectorModel init(Architecture{});
  if (!a.init.empty()) {
    init = load_checkpoint(a.init);
    run.inputs.push_back(a.init);
  } else {
    Architecture arch;
    arch.channels = ds.spec.channels;
    arch.height = ds.spec.height;
    arch.width = ds.spec.width;
    arch.hidden = a.hidden;
    arch.features = a.features;
    arch.validate();
    init = DetectorModel::initialized(arch, a.seed);
  }
  run.seed = a.seed;
  run.config = {{"regime", to_string(c.regime)},   {"optimizer", to_string(c.optimizer)},
                {"epochs", c.epochs},              {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate}, {"trades_beta", c.trades_beta},
                {"trace_every", c.trace_every},    {"inner_attack", attack_json(c.attack)},
                {"hidden", init.architecture().hidden},
                {"features", init.architecture().features}};
  prepare_out(run.out);
  const TrainResult r = train(init, ds.images, ds.labels, c);
  save_checkpoint(r.model, run.output("model.bin"));
  write_text_file(run.output("mitrace.csv"), format_mi_csv(r.trace));
  const std::size_t per_epoch = (ds.size() + c.batch_size - 1) / c.batch_size;
  write_text_file(run.output("loss.csv"), format_loss_csv(r, per_epoch));
  std::printf("final epoch loss %.6f, train accuracy %.4f\n", r.epoch_losses.back(),
              accuracy(r.model, ds.images, ds.labels));
}

struct AttackArgs {
  std::string model, data;
  std::string family = "pgd", eps = "8/255", step_size;
  std::size_t steps = 0, queries = 1000;
  double kappa = 0.0, c = 1.0;
  bool no_random_start = false;
  std::uint64_t seed = 0;
};

void attack_cmd(Run& run, const AttackArgs& a) {
  const AttackFamily fam = parse_attack_family(a.family);
  const double eps = parse_budget(a.eps, "--eps");
  AttackConfig cfg;
  switch (fam) {
    case AttackFamily::kFgsm: cfg = AttackConfig::fgsm(eps); break;
    case AttackFamily::kPgd: cfg = AttackConfig::pgd(eps, a.seed); break;
    case AttackFamily::kCwL2: cfg = AttackConfig::cw(a.kappa); cfg.c = a.c; break;
    case AttackFamily::kRandSearch: cfg = AttackConfig::random_search(eps, a.queries, a.seed); break;
  }
  if (a.steps && fam != AttackFamily::kRandSearch) cfg.iterations = a.steps;
  if (!a.step_size.empty()) cfg.step_size = parse_budget(a.step_size, "--step-size");
  if (a.no_random_start) cfg.random_start = false;
  cfg.seed = a.seed;
  cfg.validate();
  const DetectorModel model = load_checkpoint(a.model);
  const LabeledDataset ds = load_dataset(a.data);
  run.inputs = {a.model, a.data};
  run.seed = a.seed;
  run.config = attack_json(cfg);
  prepare_out(run.out);

  LabeledDataset adv{{}, ds.labels, ds.spec};
  std::vector<AttackRecord> rows;
  std::size_t successes = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    AttackOutcome o = run_attack(model, ds.images[i], ds.labels[i], cfg, i);
    rows.push_back({i, fam, cfg.epsilon, o.success, linf_distance(o.x_adv, ds.images[i]),
                    l2_distance(o.x_adv, ds.images[i]), o.queries_or_steps});
    successes += o.success ? 1 : 0;
    adv.images.push_back(std::move(o.x_adv));
  }
  save_dataset(adv, run.output("adversarial.bin"));
  write_text_file(run.output("attack.csv"), format_attack_csv(rows));
  std::printf("attack success %zu / %zu\n", successes, ds.size());
}

struct CalibrateArgs {
  std::string model, data;
  double lower_q = 0.001, upper_q = 0.999, kl_q = 0.999;
  bool per_class = false;
  std::string denoiser = "flip", aggregation = "single-draw";
  std::size_t draws = 1;
  std::uint64_t seed = 0;
};

void calibrate_cmd(Run& run, const CalibrateArgs& a) {
  TrimConfig cfg;
  cfg.denoiser = parse_denoiser(a.denoiser, a.draws);
  cfg.aggregation = parse_kl_aggregation(a.aggregation);
  cfg.seed = a.seed;
  const DetectorModel model = load_checkpoint(a.model);
  const LabeledDataset ds = load_dataset(a.data);
  run.inputs = {a.model, a.data};
  run.seed = a.seed;
  const EntropyCalibration eb = calibrate_entropy_bounds(model, ds.images, a.lower_q, a.upper_q);
  cfg.h_min = eb.h_min;
  cfg.h_max = eb.h_max;
  cfg.validate();
  const KlCalibration kc = calibrate_kl_threshold(model, ds.images, cfg, a.kl_q, a.per_class);
  cfg.tau = kc.tau;
  for (const std::string& w : eb.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const std::string& w : kc.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  run.config = {{"lower_q", a.lower_q},     {"upper_q", a.upper_q},
                {"kl_q", a.kl_q},           {"per_class", a.per_class},
                {"denoiser", format_steps(cfg.denoiser.steps)}, {"draws", cfg.denoiser.draws},
                {"kl_aggregation", to_string(cfg.aggregation)}};
  prepare_out(run.out);
  save_profile(cfg, run.output("profile.txt"), "calibrated");
  std::printf("h in [%.6g, %.6g], tau real %.6g fake %.6g\n", cfg.h_min, cfg.h_max,
              cfg.tau.when_real, cfg.tau.when_fake);
}

struct DefendArgs {
  std::string model, profile, data, adv;
};

void defend_cmd(Run& run, const DefendArgs& a) {
  const TrimConfig cfg = resolve_profile(a.profile);
  const DetectorModel model = load_checkpoint(a.model);
  const LabeledDataset clean = load_dataset(a.data);
  const LabeledDataset adv = load_dataset(a.adv);
  if (adv.labels != clean.labels)
    throw InvalidArgument("--adv: labels do not match the clean set given by --data");
  run.inputs = {a.model, a.data, a.adv};
  if (a.profile.rfind("preset:", 0) != 0) run.inputs.push_back(a.profile);
  run.seed = cfg.seed;
  run.config = {{"profile", format_profile(cfg)}};
  prepare_out(run.out);
  const EvalReport rep = evaluate_defense(model, cfg, clean.images, clean.labels, adv.images);
  write_text_file(run.output("eval.csv"), format_eval_csv(rep));
  const std::string summary = format_eval_summary(rep);
  write_text_file(run.output("summary.txt"), summary);
  std::fputs(summary.c_str(), stdout);
}

struct MiOracleArgs {
  std::string joint;
  std::size_t random = 0;
  std::uint64_t seed = 0;
};

void mi_oracle_cmd(Run& run, const MiOracleArgs& a) {
  if (a.joint.empty() == (a.random == 0))
    throw InvalidArgument("mi-oracle: give exactly one of --joint FILE or --random N");
  std::vector<DiscreteJoint> joints;
  if (!a.joint.empty()) {
    const std::vector<std::uint8_t> bytes = read_file(a.joint);
    json j;
    try {
      j = json::parse(bytes.begin(), bytes.end());
      joints.emplace_back(j.at("nz").get<std::size_t>(), j.at("nd").get<std::size_t>(),
                          j.at("ny").get<std::size_t>(), j.at("pmf").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("--joint: ") + e.what());
    }
    run.inputs.push_back(a.joint);
  } else {
    // Alternate the 2x2x2 and 4x4x2 supports.
    CounterRng rng(a.seed, StreamTag::kInit, {0x4D49});
    for (std::size_t i = 0; i < a.random; ++i)
      joints.push_back(i % 2 == 0 ? DiscreteJoint::random(2, 2, 2, rng)
                                  : DiscreteJoint::random(4, 4, 2, rng));
  }
  run.seed = a.seed;
  run.config = {{"source", a.joint.empty() ? "random" : "file"}, {"count", joints.size()}};
  prepare_out(run.out);
  std::string csv = "# schema: trimlab-mioracle-v1\n";
  csv += "index,nz,nd,ny,I_ztilde_y,I_z_y,I_dz_y,I_z_dz_y,H_y_given_z_dz,H_y_given_ztilde,residual\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const DiscreteJoint& j = joints[i];
    const MISuite s = exact_mi_suite(j);
    worst = std::max(worst, std::abs(s.residual()));
    csv += fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", i,
                       j.nz(), j.nd(), j.ny(), s.i_ztilde_y, s.i_z_y, s.i_dz_y, s.i_z_dz_y,
                       s.h_y_given_z_dz, s.h_y_given_ztilde, s.residual());
  }
  write_text_file(run.output("oracle.csv"), csv);
  std::printf("joints %zu, max |residual| = %.3g\n", joints.size(), worst);
}

struct ShiftArgs {
  std::string model, data;
  std::vector<std::string> eps = {"1/255", "2/255", "3/255", "4/255",
                                  "5/255", "6/255", "7/255", "8/255"};
  std::uint64_t seed = 0;
};

void shift_cmd(Run& run, const ShiftArgs& a) {
  std::vector<double> eps;
  for (const std::string& e : a.eps) eps.push_back(parse_budget(e, "--eps"));
  for (double e : eps)
    if (!(e >= 0.0)) throw InvalidArgument("--eps: budgets must be >= 0");
  const DetectorModel model = load_checkpoint(a.model);
  const LabeledDataset ds = load_dataset(a.data);
  run.inputs = {a.model, a.data};
  run.seed = a.seed;
  run.config = {{"epsilons", eps}};
  prepare_out(run.out);
  const std::vector<ShiftRow> rows = sweep_epsilon_feature_shift(model, ds.images, ds.labels, eps, a.seed);
  const std::string csv = format_shift_csv(rows);
  write_text_file(run.output("shift.csv"), csv);
  std::fputs(csv.c_str(), stdout);
}

int run_cli(const std::vector<std::string>& args);

// Replays the manifest's argv into a scratch directory and compares checksums.
int report_cmd(const std::string& manifest_path, bool rerun) {
  const std::vector<std::uint8_t> bytes = read_file(manifest_path);
  json m;
  try {
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("--manifest: ") + e.what());
  }
  std::printf("%s: %s (seed %s)\n", manifest_path.c_str(), m.at("command").get<std::string>().c_str(),
              m.at("seed").dump().c_str());
  for (const auto& [name, sum] : m.at("outputs").items())
    std::printf("  %-18s %s\n", name.c_str(), sum.get<std::string>().c_str());
  if (!rerun) return 0;

  std::vector<std::string> argv = m.at("argv").get<std::vector<std::string>>();
  const fs::path scratch = fs::temp_directory_path() /
                           ("trimlab-rerun-" + hex64(fnv1a64(bytes)));
  fs::remove_all(scratch);
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--out") {
      argv[i + 1] = scratch.string();
      replaced = true;
    }
  if (!replaced) throw InvalidArgument("--manifest: recorded argv has no --out");

  const fs::path here = fs::current_path();
  fs::current_path(m.at("cwd").get<std::string>());
  const int code = run_cli(argv);
  fs::current_path(here);
  if (code != 0) return code;

  const json again = json::parse(read_file(scratch / "manifest.json"));
  bool same = true;
  for (const auto& [name, sum] : m.at("outputs").items()) {
    const bool ok = again.at("outputs").contains(name) && again["outputs"][name] == sum;
    std::printf("  rerun %-12s %s\n", name.c_str(), ok ? "identical" : "DIFFERS");
    same = same && ok;
  }
  fs::remove_all(scratch);
  if (!same) throw Error("rerun produced different outputs");
  std::printf("rerun reproduced every output byte-for-byte\n");
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"TRIM adversarial-defense lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Run run;
  std::string out;

  GenDataArgs gd;
  auto* sub_gen = app.add_subcommand("gen-data", "Generate a synthetic real/fake dataset");
  sub_gen->add_option("--out", out, "Output directory")->required();
  sub_gen->add_option("--n-per-class", gd.n_per_class, "Samples per class");
  sub_gen->add_option("--channels", gd.channels, "Image channels");
  sub_gen->add_option("--height", gd.height, "Image height");
  sub_gen->add_option("--width", gd.width, "Image width");
  sub_gen->add_option("--amplitude", gd.amplitude, "Artifact amplitude, e.g. 0.05 or 12/255");
  sub_gen->add_option("--pattern", gd.pattern, "checkerboard | horizontal-stripe");
  sub_gen->add_option("--seed", gd.seed, "Seed");

  TrainArgs tr;
  auto* sub_train = app.add_subcommand("train", "Train the detector");
  sub_train->add_option("--out", out, "Output directory")->required();
  sub_train->add_option("--data", tr.data, "Training dataset file")->required();
  sub_train->add_option("--init", tr.init, "Start from this checkpoint instead of a fresh init");
  sub_train->add_option("--regime", tr.regime, "standard | pgd-at | trades");
  sub_train->add_option("--optimizer", tr.optimizer, "adam | sgd");
  sub_train->add_option("--epochs", tr.epochs, "Epochs");
  sub_train->add_option("--batch", tr.batch, "Batch size");
  sub_train->add_option("--lr", tr.lr, "Learning rate");
  sub_train->add_option("--eps", tr.eps, "Inner PGD budget for pgd-at / trades");
  sub_train->add_option("--trades-beta", tr.trades_beta, "TRADES KL weight");
  sub_train->add_option("--trace-every", tr.trace_every, "MI trace period in steps (0 = off)");
  sub_train->add_option("--hidden", tr.hidden, "First conv width");
  sub_train->add_option("--features", tr.features, "Feature dimension d");
  sub_train->add_option("--seed", tr.seed, "Seed");

  AttackArgs at;
  auto* sub_attack = app.add_subcommand("attack", "Attack every sample of a dataset");
  sub_attack->add_option("--out", out, "Output directory")->required();
  sub_attack->add_option("--model", at.model, "Checkpoint")->required();
  sub_attack->add_option("--data", at.data, "Dataset")->required();
  sub_attack->add_option("--family", at.family, "fgsm | pgd | cw-l2 | randsearch");
  sub_attack->add_option("--eps", at.eps, "l-inf budget, e.g. 8/255");
  sub_attack->add_option("--steps", at.steps, "Iterations (family default when omitted)");
  sub_attack->add_option("--step-size", at.step_size, "Step size (PGD) or learning rate (C&W)");
  sub_attack->add_option("--kappa", at.kappa, "C&W confidence");
  sub_attack->add_option("--c", at.c, "C&W trade-off");
  sub_attack->add_option("--queries", at.queries, "Random-search query budget");
  sub_attack->add_flag("--no-random-start", at.no_random_start, "PGD starts at x");
  sub_attack->add_option("--seed", at.seed, "Seed");

  CalibrateArgs ca;
  auto* sub_cal = app.add_subcommand("calibrate", "Calibrate a TRIM profile on clean data");
  sub_cal->add_option("--out", out, "Output directory")->required();
  sub_cal->add_option("--model", ca.model, "Checkpoint")->required();
  sub_cal->add_option("--data", ca.data, "Clean calibration dataset")->required();
  sub_cal->add_option("--lower-q", ca.lower_q, "Entropy lower quantile");
  sub_cal->add_option("--upper-q", ca.upper_q, "Entropy upper quantile");
  sub_cal->add_option("--kl-q", ca.kl_q, "KL quantile");
  sub_cal->add_flag("--per-class", ca.per_class, "Separate tau per predicted class");
  sub_cal->add_option("--denoiser", ca.denoiser, "flip | blur-crop-flip | step list");
  sub_cal->add_option("--draws", ca.draws, "Denoiser draws k");
  sub_cal->add_option("--aggregation", ca.aggregation, "single-draw | mean-over-k");
  sub_cal->add_option("--seed", ca.seed, "Denoiser seed");

  DefendArgs de;
  auto* sub_def = app.add_subcommand("defend", "Evaluate TRIM on clean and adversarial sets");
  sub_def->add_option("--out", out, "Output directory")->required();
  sub_def->add_option("--model", de.model, "Checkpoint")->required();
  sub_def->add_option("--profile", de.profile, "Profile file or preset:NAME")->required();
  sub_def->add_option("--data", de.data, "Clean dataset")->required();
  sub_def->add_option("--adv", de.adv, "Adversarial dataset from `attack`")->required();

  MiOracleArgs mi;
  auto* sub_mi = app.add_subcommand("mi-oracle", "Exact MI identity check on discrete joints");
  sub_mi->add_option("--out", out, "Output directory")->required();
  sub_mi->add_option("--joint", mi.joint, "JSON file {nz, nd, ny, pmf}");
  sub_mi->add_option("--random", mi.random, "Number of random joints");
  sub_mi->add_option("--seed", mi.seed, "Seed");

  ShiftArgs sh;
  auto* sub_shift = app.add_subcommand("shift-sweep", "Feature shift of PGD over an eps grid");
  sub_shift->add_option("--out", out, "Output directory")->required();
  sub_shift->add_option("--model", sh.model, "Checkpoint")->required();
  sub_shift->add_option("--data", sh.data, "Dataset")->required();
  sub_shift->add_option("--eps", sh.eps, "Comma-separated budgets")->delimiter(',');
  sub_shift->add_option("--seed", sh.seed, "Seed");

  std::string manifest;
  bool rerun = false;
  auto* sub_report = app.add_subcommand("report", "Show a manifest, optionally re-run it");
  sub_report->add_option("--manifest", manifest, "manifest.json")->required();
  sub_report->add_flag("--rerun", rerun, "Re-execute and compare output checksums");

  std::vector<const char*> cargs{"trimlab"};
  for (const std::string& s : args) cargs.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: %s\nrun with --help for usage\n", e.what());
    return kExitInvalid;
  }

  run.argv = args;
  run.out = out;
  try {
    if (sub_report->parsed()) return report_cmd(manifest, rerun);
    if (sub_gen->parsed()) { run.command = "gen-data"; gen_data(run, gd); }
    if (sub_train->parsed()) { run.command = "train"; train_cmd(run, tr); }
    if (sub_attack->parsed()) { run.command = "attack"; attack_cmd(run, at); }
    if (sub_cal->parsed()) { run.command = "calibrate"; calibrate_cmd(run, ca); }
    if (sub_def->parsed()) { run.command = "defend"; defend_cmd(run, de); }
    if (sub_mi->parsed()) { run.command = "mi-oracle"; mi_oracle_cmd(run, mi); }
    if (sub_shift->parsed()) { run.command = "shift-sweep"; shift_cmd(run, sh); }
    run.write_manifest();
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

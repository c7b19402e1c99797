// critprop: command-line front end for the mean-field and training experiments.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numeric
// non-convergence (fixed point, bracketing, divergence).

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "critprop/critprop.hpp"
#include "critprop/io.hpp"

#ifndef CRITPROP_DEFAULT_MNIST_DIR
#define CRITPROP_DEFAULT_MNIST_DIR "data/mnist"
#endif

namespace fs = std::filesystem;
using namespace critprop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? std::string(v) : fallback;
}

// Representative initializations, all at sigma_b = 0.3.
const std::map<std::string, HyperParams>& named_phases() {
  static const std::map<std::string, HyperParams> phases{
      {"ordered", {1.0, 0.3}}, {"critical", {1.39, 0.3}}, {"chaotic", {2.5, 0.3}}};
  return phases;
}

struct Phase {
  std::string name;
  HyperParams hp;
};

// "ordered,critical" or "1.2:0.3,2.0:0.5"
std::vector<Phase> parse_phases(const std::string& spec) {
  std::vector<Phase> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (auto it = named_phases().find(item); it != named_phases().end()) {
      out.push_back({item, it->second});
      continue;
    }
    if (item == "disordered") {
      out.push_back({item, named_phases().at("chaotic")});
      continue;
    }
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw InvalidArgument("phase '" + item + "' is neither a name (ordered, critical, chaotic) nor sigma_w:sigma_b");
    }
    HyperParams hp;
    try {
      hp.sigma_w = std::stod(item.substr(0, colon));
      hp.sigma_b = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("cannot parse phase '" + item + "'");
    }
    hp.validate();
    out.push_back({item, hp});
  }
  if (out.empty()) throw InvalidArgument("no phases given");
  return out;
}

std::vector<double> parse_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("cannot parse number '" + item + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("empty number list");
  return out;
}

std::string file_label(const std::string& phase) {
  std::string s = phase;
  for (char& ch : s) {
    if (ch == ':') ch = '_';
  }
  return s;
}

Json json_of(const HyperParams& hp) { return Json{{"sigma_w", hp.sigma_w}, {"sigma_b", hp.sigma_b}}; }

Json json_of(const FixedPointResult& r) {
  return Json{{"value", json_number(r.value)},
              {"iterations", r.iterations},
              {"residual", json_number(r.residual)},
              {"converged", r.converged},
              {"stable", r.stable}};
}

Json json_scale(const char* name, double v) {
  Json j;
  j[name] = json_number(v);
  j[std::string(name) + "_infinite"] = std::isinf(v);
  return j;
}

// Shared by every subcommand: where files go and the manifest they get.
struct Output {
  std::string out_dir = env_or("CRITPROP_OUT_DIR", ".");

  fs::path path(const std::string& name) const { return fs::path(out_dir) / name; }

  void write(RunManifest& manifest, const std::string& name, const std::string& content) const {
    const fs::path p = path(name);
    write_atomic(p, content);
    manifest.add_output(p);
  }
};

void add_out_dir(CLI::App* sub, Output& out) {
  sub->add_option("--out-dir", out.out_dir, "Output directory (default $CRITPROP_OUT_DIR or .)")
      ->capture_default_str();
}

// ---- fixed-point ---------------------------------------------------------

struct FixedPointArgs {
  double sigma_w = 1.0;
  double sigma_b = 0.3;
  std::string activation = "tanh";
  double q0 = 1.0;
  double tol = kFixedPointTol;
  int max_iter = kFixedPointMaxIter;
  std::string out;
  Output output;
};

int run_fixed_point(const FixedPointArgs& a) {
  const HyperParams hp{a.sigma_w, a.sigma_b};
  hp.validate();
  const Activation act = activation_from_name(a.activation);
  const FixedPointResult q = q_fixed_point(hp, act, a.q0, a.tol, a.max_iter);

  Json j;
  j["schema_version"] = kSchemaVersion;
  j["subcommand"] = "fixed-point";
  j["params"] = json_of(hp);
  j["activation"] = a.activation;
  j["q_fixed_point"] = json_of(q);
  if (q.converged && q.value > 0.0) {
    const auto cfp = c_fixed_points(hp, act);
    Json pts = Json::array();
    for (const auto& p : cfp.points) pts.push_back(json_of(p));
    j["chi1"] = json_number(cfp.chi1);
    j["c_fixed_points"] = pts;
    j["c_map_degenerate"] = cfp.degenerate;
  } else if (q.converged) {
    j["chi1"] = json_number(chi1(hp, act));
  }
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    RunManifest m("fixed-point",
                  Json{{"sigma_w", a.sigma_w}, {"sigma_b", a.sigma_b}, {"activation", a.activation},
                       {"q0", a.q0}, {"tol", a.tol}, {"max_iter", a.max_iter}, {"out_dir", a.output.out_dir}},
                  0);
    a.output.write(m, a.out, text);
    m.write(a.output.path("fixed-point.manifest.json"));
  }
  return q.converged ? kExitOk : kExitNumeric;
}

// ---- phase-diagram -------------------------------------------------------

struct PhaseDiagramArgs {
  double sigma_b_min = 0.0;
  double sigma_b_max = 6.0;
  int sigma_b_steps = 13;
  double bracket_low = kDefaultSigmaWBracket.first;
  double bracket_high = kDefaultSigmaWBracket.second;
  std::string activation = "tanh";
  std::string out = "critical_line.csv";
  Output output;
};

int run_phase_diagram(const PhaseDiagramArgs& a) {
  if (a.sigma_b_steps < 1) throw InvalidArgument("--sigma-b-steps must be >= 1");
  if (a.sigma_b_max < a.sigma_b_min) throw InvalidArgument("--sigma-b-max must be >= --sigma-b-min");
  const Activation act = activation_from_name(a.activation);
  std::vector<double> sbs;
  for (int k = 0; k < a.sigma_b_steps; ++k) {
    sbs.push_back(a.sigma_b_steps == 1 ? a.sigma_b_min
                                       : a.sigma_b_min + (a.sigma_b_max - a.sigma_b_min) * k / (a.sigma_b_steps - 1));
  }
  const CriticalLine line = critical_line(sbs, act, {a.bracket_low, a.bracket_high});
  CsvTable csv({"sigma_b", "sigma_w_critical", "chi1_residual", "error"});
  bool failed = false;
  for (const auto& p : line.points) {
    csv.row(p.sigma_b, p.sigma_w, p.chi1_residual, p.error.value_or(""));
    failed = failed || p.error.has_value();
  }
  RunManifest m("phase-diagram",
                Json{{"sigma_b_min", a.sigma_b_min}, {"sigma_b_max", a.sigma_b_max},
                     {"sigma_b_steps", a.sigma_b_steps}, {"bracket", {a.bracket_low, a.bracket_high}},
                     {"activation", a.activation}, {"tol", 1e-12}, {"out", a.out}, {"out_dir", a.output.out_dir}},
                0);
  a.output.write(m, a.out, csv.str());
  m.write(a.output.path("phase-diagram.manifest.json"));
  std::cout << a.output.path(a.out).string() << "\n";
  if (!line.monotone) std::cerr << "warning: critical line is not monotone in sigma_b\n";
  return failed ? kExitNumeric : kExitOk;
}

// ---- depth-scales --------------------------------------------------------

struct DepthArgs {
  double sigma_w = 1.0;
  double sigma_b = 0.3;
  std::string activation = "tanh";
  std::string out;
  Output output;
};

int run_depth_scales(const DepthArgs& a) {
  const HyperParams hp{a.sigma_w, a.sigma_b};
  hp.validate();
  const Activation act = activation_from_name(a.activation);
  const DepthScales d = depth_scales(hp, act);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["subcommand"] = "depth-scales";
  j["params"] = json_of(hp);
  j["activation"] = a.activation;
  j["q_star"] = json_number(d.q_star);
  j["c_star"] = json_number(d.c_star);
  j["chi1"] = json_number(d.chi1);
  j.update(json_scale("zeta_q", d.zeta_q));
  j.update(json_scale("zeta_c", d.zeta_c));
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    RunManifest m("depth-scales",
                  Json{{"sigma_w", a.sigma_w}, {"sigma_b", a.sigma_b}, {"activation", a.activation},
                       {"out_dir", a.output.out_dir}},
                  0);
    a.output.write(m, a.out, text);
    m.write(a.output.path("depth-scales.manifest.json"));
  }
  return kExitOk;
}

// ---- exponents -----------------------------------------------------------

struct ExponentArgs {
  std::string sigma_b_list = "2,3,4,5,6";
  ExponentProtocol protocol;
  std::string activation = "tanh";
  std::string out = "exponents.csv";
  std::string trajectories;
  Output output;
};

int run_exponents(const ExponentArgs& a) {
  const auto sbs = parse_list(a.sigma_b_list);
  const Activation act = activation_from_name(a.activation);
  if (a.protocol.num_layers < 10) throw InvalidArgument("--num-layers must be >= 10");
  if (!(a.protocol.sigma_w_scale > 0.0)) throw InvalidArgument("--sigma-w-scale must be positive");
  const auto table = exponent_table(sbs, act, a.protocol);
  CsvTable csv({"sigma_b", "sigma_w_critical", "sigma_w", "alpha", "c", "b", "rss", "converged",
                "exp_amplitude", "exp_zeta", "exp_rss", "rss_ratio", "regime", "error"});
  bool failed = false;
  for (const auto& e : table) {
    csv.row(e.sigma_b, e.sigma_w_critical, e.sigma_w, e.fit.alpha, e.fit.c, e.fit.b, e.fit.rss,
            e.fit.converged, e.exponential.amplitude, e.exponential.zeta, e.exponential.rss,
            e.rss_ratio, std::string(e.power_law_regime ? "power-law" : "exponential"),
            e.error.value_or(""));
    failed = failed || e.error.has_value();
  }
  RunManifest m("exponents",
                Json{{"sigma_b_list", sbs}, {"c0_offset", a.protocol.c0_offset},
                     {"num_layers", a.protocol.num_layers}, {"l_min", a.protocol.l_min},
                     {"sigma_w_scale", a.protocol.sigma_w_scale}, {"activation", a.activation},
                     {"out", a.out}, {"trajectories", a.trajectories}, {"out_dir", a.output.out_dir}},
                0);
  a.output.write(m, a.out, csv.str());
  if (!a.trajectories.empty()) {
    CsvTable traj({"sigma_b", "layer", "deviation"});
    for (const auto& e : table) {
      if (e.error) continue;
      const HyperParams hp{e.sigma_w, e.sigma_b};
      const QuadratureRule& rule = default_rule(HyperParams{kDefaultSigmaWBracket.second, e.sigma_b}, act);
      const double c_star = stable_c_star(hp, act, rule);
      const Trajectory t = trajectory(hp, act, std::clamp(c_star - a.protocol.c0_offset, -1.0, 1.0),
                                      a.protocol.num_layers, rule);
      for (std::size_t k = 0; k < t.layers.size(); ++k) traj.row(e.sigma_b, t.layers[k], t.deviations[k]);
    }
    a.output.write(m, a.trajectories, traj.str());
  }
  m.write(a.output.path("exponents.manifest.json"));
  std::cout << csv.str();
  return failed ? kExitNumeric : kExitOk;
}

// ---- propagate -----------------------------------------------------------

struct PropagateArgs {
  std::string data = env_or("CRITPROP_DATA_DIR", CRITPROP_DEFAULT_MNIST_DIR);
  std::string split = "train";
  int count = 100;
  int offset = 0;
  std::string phases = "ordered,critical,chaotic";
  int layers = 10;
  int width = 50;
  std::uint64_t seed = 0;
  double subset_fraction = 1.0;
  bool matrices = true;
  Output output;
};

Json json_corr(const CorrelationMatrix& c) {
  return Json{{"mean_correlation", c.mean_correlation}, {"pair_standard_error", c.pair_standard_error}};
}

int run_propagate(const PropagateArgs& a) {
  if (a.count < 2) throw InvalidArgument("--count must be >= 2");
  if (a.layers < 1 || a.width < 1) throw InvalidArgument("--layers and --width must be >= 1");
  const Dataset all = load_mnist_split(a.data, a.split);
  const Dataset ds = slice(all, a.offset, a.count);
  const auto phases = parse_phases(a.phases);
  const NetworkArchitecture arch = uniform_architecture(static_cast<int>(ds.dim()), a.layers, a.width);

  std::vector<HyperParams> hps;
  for (const auto& p : phases) hps.push_back(p.hp);
  const auto results = propagate_experiment(ds.inputs, arch, hps, a.seed);

  RunManifest m("propagate",
                Json{{"data", a.data}, {"split", a.split}, {"count", a.count}, {"offset", a.offset},
                     {"phases", a.phases}, {"layers", a.layers}, {"width", a.width},
                     {"seed", a.seed}, {"subset_fraction", a.subset_fraction},
                     {"matrices", a.matrices}, {"representation", "pre-activations of the last layer"},
                     {"out_dir", a.output.out_dir}},
                a.seed);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["subcommand"] = "propagate";
  j["inputs"] = a.count;
  j["input"] = json_corr(results.front().input);
  Json per_phase = Json::array();
  if (a.matrices) a.output.write(m, "input_correlation.csv", matrix_csv(results.front().input.entries));
  for (std::size_t k = 0; k < results.size(); ++k) {
    Json e;
    e["phase"] = phases[k].name;
    e["params"] = json_of(results[k].hp);
    e["output"] = json_corr(results[k].output);
    if (a.subset_fraction < 1.0) {
      const ResizeReport r = resize_experiment(ds, a.subset_fraction, arch, results[k].hp, a.seed);
      e["resize"] = Json{{"full_size", r.full_size},       {"subset_size", r.subset_size},
                         {"input_full", r.input_full},     {"input_subset", r.input_subset},
                         {"output_full", r.output_full},   {"output_subset", r.output_subset}};
    }
    per_phase.push_back(e);
    if (a.matrices) {
      a.output.write(m, "output_correlation_" + file_label(phases[k].name) + ".csv",
                     matrix_csv(results[k].output.entries));
    }
  }
  j["phases"] = per_phase;
  const std::string text = j.dump(2) + "\n";
  a.output.write(m, "mean_correlation.json", text);
  m.write(a.output.path("propagate.manifest.json"));
  std::cout << text;
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data = env_or("CRITPROP_DATA_DIR", CRITPROP_DEFAULT_MNIST_DIR);
  std::string variant = "baseline";
  std::string phase = "ordered,critical,chaotic";
  std::string loss = "cross-entropy";
  int train_size = 10000;
  int validation_size = 2000;
  int hidden_layers = 6;
  int width = 50;
  int batch_size = 32;
  int epochs = 20;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  bool timing = false;
  Output output;
};

std::string curve_csv(const AccuracyCurve& c, bool timing) {
  std::vector<std::string> header{"epoch", "accuracy", "train_loss"};
  if (timing) header.push_back("wall_time");
  CsvTable csv(header);
  csv.row(timing ? std::vector<std::string>{"0", format_number(c.initial_accuracy), "nan", "0"}
                 : std::vector<std::string>{"0", format_number(c.initial_accuracy), "nan"});
  for (std::size_t k = 0; k < c.accuracy.size(); ++k) {
    std::vector<std::string> r{std::to_string(k + 1), format_number(c.accuracy[k]), format_number(c.train_loss[k])};
    if (timing) r.push_back(format_number(c.wall_time[k]));
    csv.row(r);
  }
  return csv.str();
}

Json run_json(const PhaseRun& r) {
  Json j;
  if (r.curve) {
    j["final_accuracy"] = r.curve->final_accuracy();
    j["accuracy"] = r.curve->accuracy;
  } else {
    j["final_accuracy"] = nullptr;
    j["error"] = r.error.value_or("unknown failure");
  }
  return j;
}

int run_train(const TrainArgs& a) {
  const Variant variant = variant_from_name(a.variant);
  const auto phases = parse_phases(a.phase);
  if (a.train_size < 1 || a.validation_size < 1) throw InvalidArgument("--train-size and --validation-size must be >= 1");
  if (a.hidden_layers < 1 || a.width < 1) throw InvalidArgument("--hidden-layers and --width must be >= 1");
  const Dataset all = load_mnist_split(a.data, "train");
  const Dataset train_rows = slice(all, 0, a.train_size);
  const Dataset validation = slice(all, a.train_size, a.validation_size);

  TrainConfig base;
  base.arch = uniform_architecture(static_cast<int>(all.dim()), a.hidden_layers, a.width, Tanh{}, 10);
  base.loss = loss_from_name(a.loss);
  base.learning_rate = a.learning_rate;
  base.batch_size = a.batch_size;
  base.epochs = a.epochs;
  base.train_size = a.train_size;
  base.seed = a.seed;
  base.validate();

  std::vector<HyperParams> hps;
  for (const auto& p : phases) hps.push_back(p.hp);

  RunManifest m("train",
                Json{{"data", a.data}, {"variant", a.variant}, {"phases", a.phase}, {"loss", a.loss},
                     {"train_size", a.train_size}, {"validation_size", a.validation_size},
                     {"validation_offset", a.train_size}, {"hidden_layers", a.hidden_layers},
                     {"width", a.width}, {"batch_size", a.batch_size}, {"epochs", a.epochs},
                     {"learning_rate", a.learning_rate}, {"seed", a.seed}, {"timing", a.timing},
                     {"out_dir", a.output.out_dir}},
                a.seed);
  Json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["subcommand"] = "train";
  summary["variant"] = a.variant;
  Json per_phase = Json::array();
  bool diverged = false;

  auto emit = [&](const PhaseRun& r, const std::string& phase, const std::string& tag) {
    if (r.curve) {
      a.output.write(m, "curve_" + file_label(phase) + "_" + tag + ".csv", curve_csv(*r.curve, a.timing));
    } else {
      diverged = true;
    }
  };

  if (variant == Variant::Baseline) {
    const auto runs = phase_comparison(base, hps, train_rows, validation);
    for (std::size_t k = 0; k < runs.size(); ++k) {
      emit(runs[k], phases[k].name, "baseline");
      Json e{{"phase", phases[k].name}, {"params", json_of(runs[k].hp)}};
      e["baseline"] = run_json(runs[k]);
      per_phase.push_back(e);
    }
  } else {
    const auto cmp = resize_training_experiment(base, variant, hps, train_rows, validation);
    for (std::size_t k = 0; k < cmp.size(); ++k) {
      emit(cmp[k].baseline, phases[k].name, "baseline");
      emit(cmp[k].variant, phases[k].name, a.variant);
      Json e{{"phase", phases[k].name}, {"params", json_of(cmp[k].hp)}};
      e["baseline"] = run_json(cmp[k].baseline);
      e["variant"] = run_json(cmp[k].variant);
      e["degradation"] = json_number(cmp[k].degradation);
      per_phase.push_back(e);
    }
  }
  summary["phases"] = per_phase;
  const std::string text = summary.dump(2) + "\n";
  a.output.write(m, "summary.json", text);
  m.write(a.output.path("train.manifest.json"));
  std::cout << text;
  return diverged ? kExitNumeric : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field signal propagation in random networks: fixed points, critical line, "
               "depth scales, critical exponents, correlation and training experiments."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  FixedPointArgs fp;
  auto* s_fp = app.add_subcommand("fixed-point", "Length-map fixed point q*, chi1 and correlation fixed points (JSON)");
  s_fp->add_option("--sigma-w", fp.sigma_w, "Weight scale")->required();
  s_fp->add_option("--sigma-b", fp.sigma_b, "Bias standard deviation")->capture_default_str();
  s_fp->add_option("--activation", fp.activation, "tanh or linear")->capture_default_str();
  s_fp->add_option("--q0", fp.q0, "Initial variance")->capture_default_str();
  s_fp->add_option("--tol", fp.tol, "Convergence tolerance")->capture_default_str();
  s_fp->add_option("--max-iter", fp.max_iter, "Iteration cap")->capture_default_str();
  s_fp->add_option("--out", fp.out, "Also write the JSON to this file in --out-dir");
  add_out_dir(s_fp, fp.output);

  PhaseDiagramArgs pd;
  auto* s_pd = app.add_subcommand("phase-diagram", "Critical line sigma_w(sigma_b) (CSV)");
  s_pd->add_option("--sigma-b-min", pd.sigma_b_min)->capture_default_str();
  s_pd->add_option("--sigma-b-max", pd.sigma_b_max)->capture_default_str();
  s_pd->add_option("--sigma-b-steps", pd.sigma_b_steps)->capture_default_str();
  s_pd->add_option("--bracket-low", pd.bracket_low, "Lower sigma_w bracket")->capture_default_str();
  s_pd->add_option("--bracket-high", pd.bracket_high, "Upper sigma_w bracket")->capture_default_str();
  s_pd->add_option("--activation", pd.activation)->capture_default_str();
  s_pd->add_option("--out", pd.out, "CSV file name in --out-dir")->capture_default_str();
  add_out_dir(s_pd, pd.output);

  DepthArgs ds;
  auto* s_ds = app.add_subcommand("depth-scales", "Depth scales zeta_q, zeta_c and chi1 (JSON)");
  s_ds->add_option("--sigma-w", ds.sigma_w)->required();
  s_ds->add_option("--sigma-b", ds.sigma_b)->capture_default_str();
  s_ds->add_option("--activation", ds.activation)->capture_default_str();
  s_ds->add_option("--out", ds.out, "Also write the JSON to this file in --out-dir");
  add_out_dir(s_ds, ds.output);

  ExponentArgs ex;
  auto* s_ex = app.add_subcommand("exponents", "Critical exponents along the critical line (CSV)");
  s_ex->add_option("--sigma-b-list", ex.sigma_b_list, "Comma-separated sigma_b values")->capture_default_str();
  s_ex->add_option("--c0-offset", ex.protocol.c0_offset, "Start at c0 = c* - offset")->capture_default_str();
  s_ex->add_option("--num-layers", ex.protocol.num_layers)->capture_default_str();
  s_ex->add_option("--l-min", ex.protocol.l_min, "First layer used by the fits")->capture_default_str();
  s_ex->add_option("--sigma-w-scale", ex.protocol.sigma_w_scale, "Run at this multiple of the critical sigma_w")
      ->capture_default_str();
  s_ex->add_option("--activation", ex.activation)->capture_default_str();
  s_ex->add_option("--out", ex.out, "CSV file name in --out-dir")->capture_default_str();
  s_ex->add_option("--trajectories", ex.trajectories, "Also write |c^l - c*| per layer to this CSV");
  add_out_dir(s_ex, ex.output);

  PropagateArgs pr;
  auto* s_pr = app.add_subcommand("propagate", "Correlation matrices of data through random networks");
  s_pr->add_option("--data", pr.data, "MNIST directory (default $CRITPROP_DATA_DIR)")->capture_default_str();
  s_pr->add_option("--split", pr.split, "train or t10k")->capture_default_str();
  s_pr->add_option("--count", pr.count, "Number of inputs")->capture_default_str();
  s_pr->add_option("--offset", pr.offset, "First input row")->capture_default_str();
  s_pr->add_option("--phases", pr.phases, "Names or sigma_w:sigma_b pairs")->capture_default_str();
  s_pr->add_option("--layers", pr.layers)->capture_default_str();
  s_pr->add_option("--width", pr.width)->capture_default_str();
  s_pr->add_option("--seed", pr.seed)->capture_default_str();
  s_pr->add_option("--subset-fraction", pr.subset_fraction, "Also report a random subset of this size")
      ->capture_default_str();
  s_pr->add_flag("--matrices,!--no-matrices", pr.matrices, "Write correlation-matrix CSVs");
  add_out_dir(s_pr, pr.output);

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "Train MLPs from ordered/critical/chaotic initializations");
  s_tr->add_option("--data", tr.data, "MNIST directory (default $CRITPROP_DATA_DIR)")->capture_default_str();
  s_tr->add_option("--variant", tr.variant, "baseline, half-data, half-width or half-batch")->capture_default_str();
  s_tr->add_option("--phase", tr.phase, "Names or sigma_w:sigma_b pairs")->capture_default_str();
  s_tr->add_option("--loss", tr.loss, "cross-entropy or sum-of-squares")->capture_default_str();
  s_tr->add_option("--train-size", tr.train_size)->capture_default_str();
  s_tr->add_option("--validation-size", tr.validation_size)->capture_default_str();
  s_tr->add_option("--hidden-layers", tr.hidden_layers)->capture_default_str();
  s_tr->add_option("--width", tr.width)->capture_default_str();
  s_tr->add_option("--batch-size", tr.batch_size)->capture_default_str();
  s_tr->add_option("--epochs", tr.epochs)->capture_default_str();
  s_tr->add_option("--learning-rate", tr.learning_rate)->capture_default_str();
  s_tr->add_option("--seed", tr.seed)->capture_default_str();
  s_tr->add_flag("--timing", tr.timing, "Add per-epoch wall_time to curve CSVs (not reproducible)");
  add_out_dir(s_tr, tr.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (s_fp->parsed()) return run_fixed_point(fp);
    if (s_pd->parsed()) return run_phase_diagram(pd);
    if (s_ds->parsed()) return run_depth_scales(ds);
    if (s_ex->parsed()) return run_exponents(ex);
    if (s_pr->parsed()) return run_propagate(pr);
    if (s_tr->parsed()) return run_train(tr);
  } catch (const NonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const BracketingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericDomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

#pragma once

// Command implementations behind the qvigeom executable.  Each command
// returns a process exit code: 0 success, 1 input or validation failure,
// 2 numeric failure.

#include "qvigeom/geometry.hpp"
#include "qvigeom/io.hpp"
#include "qvigeom/jsr.hpp"
#include "qvigeom/mdp.hpp"
#include "qvigeom/solver.hpp"
#include "qvigeom/spectral.hpp"
#include "qvigeom/trajectory.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace qvigeom {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitNumeric = 2 };

/// True when `mdp` is the built-in toy example, entry for entry.
inline bool is_toy3x2(const Mdp& mdp) {
  const MdpSpec ref = toy3x2_spec();
  const MdpSpec& s = mdp.spec();
  if (s.num_states != ref.num_states || s.num_actions != ref.num_actions || s.gamma != ref.gamma) return false;
  for (std::size_t a = 0; a < ref.num_actions; ++a)
    if (s.transitions[a] != ref.transitions[a]) return false;
  return s.rewards == ref.rewards;
}

inline PlaneBasis default_basis(const Mdp& mdp, const OptimalityReport& report) {
  if (is_toy3x2(mdp)) return contrast_basis(mdp.num_states(), mdp.num_actions());
  DetPolicy pi;
  for (const auto& s : report.phi_star) pi.actions.push_back(s.front());
  return dominant_basis(mdp, pi);
}

/// The documented start point for the toy example, zero otherwise.
inline QVector default_q0(const Mdp& mdp) {
  if (is_toy3x2(mdp)) return toy3x2_paper_q0();
  return QVector::Zero(static_cast<Eigen::Index>(mdp.dim()));
}

inline AnalyzeReport analyze(const Mdp& mdp, const AnalyzeConfig& config, const QVector& q0) {
  AnalyzeReport r;
  r.config = config;
  r.mdp = {mdp.name(), mdp.gamma(), mdp.num_states(), mdp.num_actions()};
  r.optimality = solve_qstar(mdp, config.tol);
  r.warnings = r.optimality.warnings;
  const OptimalityReport& opt = r.optimality;

  if (opt.delta_bar) {
    const TubeSpec tube = TubeSpec::make(opt, config.delta_frac);
    r.tube = TubeSummary{tube.fraction, tube.delta, tube.delta_bar};
  }
  if (auto rate = optimal_reference_rate(mdp, opt)) {
    r.gamma_lambda2 = *rate;
    r.lambda2 = *rate / mdp.gamma();
  }

  JsrOptions jo;
  jo.depth = config.depth;
  jo.cap = config.cap;
  jo.seed = config.seed;
  r.full = certify(mdp, opt, "full", jo);
  r.optimal = certify(mdp, opt, "optimal", jo);
  for (const auto* c : {&r.full, &r.optimal})
    for (const auto& n : c->notes) r.warnings.push_back(c->family_label + ": " + n);
  r.overlap = overlap_bounds(mdp);
  r.obstruction_verdict = r.full.obstruction ? r.full.obstruction->reason : "none";

  r.horizons.inf_err0 = (q0 - opt.q_star).lpNorm<Eigen::Infinity>();
  r.horizons.dist2_0 = dist2_to_X1(q0, opt.q_star);
  if (opt.delta_bar) {
    r.horizons.k_basic = k_basic(r.horizons.inf_err0, *opt.delta_bar, mdp.gamma());
    if (r.full.lyapunov) {
      r.horizons.c_eps = r.full.lyapunov->c_eps;
      r.horizons.beta_eps = r.full.lyapunov->beta_eps;
      r.horizons.k_id = k_id(r.horizons.dist2_0, *opt.delta_bar, r.full.lyapunov->c_eps, r.full.lyapunov->beta_eps);
    }
  }
  if (mdp.dim() >= 2) {
    const PlaneBasis basis = default_basis(mdp, opt);
    r.plane_basis = basis.label;
    if (r.tube) r.strip_half_width_v = basis.strip_half_width(r.tube->delta);
  } else {
    r.plane_basis = "none";
  }
  return r;
}

namespace detail {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const FileError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ValidationError& e) {
    err << "error: invalid MDP: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

struct CircleSpec {
  double radius = 2.0;
  std::size_t count = 12;
};

inline CircleSpec parse_circle(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("--circle expects R:M, got '" + text + "'");
  CircleSpec c;
  try {
    c.radius = std::stod(text.substr(0, colon));
    const long long m = std::stoll(text.substr(colon + 1));
    if (m < 1) throw std::invalid_argument("count");
    c.count = static_cast<std::size_t>(m);
  } catch (const std::exception&) {
    throw std::invalid_argument("--circle expects R:M with R > 0 and integer M >= 1, got '" + text + "'");
  }
  return c;
}

inline std::string indexed_name(const std::string& stem, std::size_t j) {
  std::ostringstream os;
  os << stem << "_" << std::setw(2) << std::setfill('0') << j << ".csv";
  return os.str();
}

struct Setup {
  Mdp mdp;
  OptimalityReport report;
  TubeSpec tube;
  PlaneBasis basis;
};

inline Setup prepare(const std::string& path, double delta_frac) {
  Mdp mdp = load_mdp(path);
  OptimalityReport report = solve_qstar(mdp);
  TubeSpec tube = TubeSpec::make(report, delta_frac);
  PlaneBasis basis = default_basis(mdp, report);
  return {std::move(mdp), std::move(report), std::move(tube), std::move(basis)};
}

inline Json manifest_header(const Setup& st, const std::string& kind) {
  Json m;
  m["schema"] = kManifestSchema;
  m["version"] = kVersion;
  m["kind"] = kind;
  m["mdp"] = st.mdp.name();
  m["gamma"] = st.mdp.gamma();
  const auto rate = optimal_reference_rate(st.mdp, st.report);
  m["gamma_lambda2"] = opt_json(rate);
  m["delta_bar"] = st.tube.delta_bar;
  m["delta_frac"] = st.tube.fraction;
  m["delta"] = st.tube.delta;
  const double c = st.basis.strip_half_width(st.tube.delta);
  m["strip_half_width_v"] = c;
  m["strip_half_width_qp"] = std::sqrt(2.0) * c;
  m["basis"] = {{"label", st.basis.label}, {"one_hat", vec_json(st.basis.one_hat)}, {"d_hat", vec_json(st.basis.d_hat)}};
  m["circle"] = nullptr;
  return m;
}

}  // namespace detail

inline int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const Mdp mdp = load_mdp(path);
    out << "valid: " << (mdp.name().empty() ? path : mdp.name()) << " (" << mdp.num_states() << " states, "
        << mdp.num_actions() << " actions, gamma " << mdp.gamma() << ")\n";
    return int{kExitOk};
  });
}

inline int cmd_example(const std::string& name, const std::string& out_path, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (name != "toy3x2") {
      err << "error: unknown example '" << name << "' (available: toy3x2)\n";
      return int{kExitInput};
    }
    if (out_path.empty() || out_path == "-")
      out << toy3x2_document();
    else
      write_file(out_path, toy3x2_document());
    return int{kExitOk};
  });
}

struct AnalyzeArgs {
  std::string path;
  AnalyzeConfig config;
  std::string q0_path;
  std::string report_path;
};

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const Mdp mdp = load_mdp(args.path);
    AnalyzeConfig cfg = args.config;
    if (!(cfg.delta_frac > 0.0 && cfg.delta_frac < 0.5)) throw std::invalid_argument("--delta-frac must lie in (0, 0.5)");
    if (cfg.depth < 1) throw std::invalid_argument("--depth must be >= 1");
    QVector q0;
    if (!args.q0_path.empty()) {
      q0 = q_from_json(parse_json(read_file(args.q0_path), args.q0_path), mdp.num_states(), mdp.num_actions());
      cfg.q0_source = args.q0_path;
    } else {
      q0 = default_q0(mdp);
      cfg.q0_source = is_toy3x2(mdp) ? "paper" : "zero";
    }
    const AnalyzeReport report = analyze(mdp, cfg, q0);
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    const std::string doc = to_json(report).dump(2) + "\n";
    if (args.report_path.empty() || args.report_path == "-")
      out << doc;
    else
      write_file(args.report_path, doc);
    return int{kExitOk};
  });
}

struct TrajectoryArgs {
  std::string path;
  std::string q0_path;
  bool paper_q0 = false;
  std::string circle;
  std::size_t iters = 50;
  double delta_frac = 0.4;
  std::string csv_dir = ".";
};

inline int cmd_trajectory(const TrajectoryArgs& args, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const int sources = int(!args.q0_path.empty()) + int(args.paper_q0) + int(!args.circle.empty());
    if (sources > 1) throw std::invalid_argument("choose at most one of --q0, --paper-q0, --circle");
    const detail::Setup st = detail::prepare(args.path, args.delta_frac);
    std::vector<QVector> starts;
    std::vector<std::string> labels;
    Json manifest = detail::manifest_header(st, "qvi");
    if (!args.circle.empty()) {
      const auto c = detail::parse_circle(args.circle);
      starts = circle_initials(st.report.q_star, st.basis, c.radius, c.count);
      for (std::size_t j = 0; j < starts.size(); ++j) labels.push_back("circle:" + std::to_string(j));
      manifest["circle"] = {{"radius", c.radius}, {"count", c.count}};
    } else if (!args.q0_path.empty()) {
      starts.push_back(
          q_from_json(parse_json(read_file(args.q0_path), args.q0_path), st.mdp.num_states(), st.mdp.num_actions()));
      labels.push_back(args.q0_path);
    } else if (args.paper_q0) {
      if (!is_toy3x2(st.mdp)) throw std::invalid_argument("--paper-q0 is only defined for the toy3x2 example");
      starts.push_back(toy3x2_paper_q0());
      labels.emplace_back("paper");
    } else {
      starts.push_back(default_q0(st.mdp));
      labels.emplace_back(is_toy3x2(st.mdp) ? "paper" : "zero");
    }

    JsrOptions jo;
    const JsrCertificate full = certify(st.mdp, st.report, "full", jo);
    const RunContext ctx{st.mdp, st.report, st.tube, st.basis};
    std::filesystem::create_directories(args.csv_dir);
    manifest["iters"] = args.iters;
    manifest["trajectories"] = Json::array();
    for (std::size_t j = 0; j < starts.size(); ++j) {
      const QviRun run = run_qvi(ctx, starts[j], args.iters);
      const std::string name = detail::indexed_name("qvi", j);
      write_file((std::filesystem::path(args.csv_dir) / name).string(), trajectory_csv(run.records));
      const double inf0 = run.records.front().inf_err;
      const double d20 = run.records.front().dist2_x1;
      Json t;
      t["csv"] = name;
      t["q0_source"] = labels[j];
      t["tube_entrance"] = opt_json(run.tube_entrance);
      t["poss_entrance"] = opt_json(run.poss_entrance);
      t["k_basic"] = k_basic(inf0, st.tube.delta_bar, st.mdp.gamma());
      t["k_id"] = full.lyapunov ? Json(k_id(d20, st.tube.delta_bar, full.lyapunov->c_eps, full.lyapunov->beta_eps))
                                : Json(nullptr);
      manifest["trajectories"].push_back(std::move(t));
    }
    if (full.lyapunov)
      manifest["lyapunov"] = {{"c_eps", full.lyapunov->c_eps}, {"beta_eps", full.lyapunov->beta_eps}};
    else
      manifest["lyapunov"] = nullptr;
    const auto manifest_path = std::filesystem::path(args.csv_dir) / "qvi_manifest.json";
    write_file(manifest_path.string(), manifest.dump(2) + "\n");
    out << "wrote " << starts.size() << " trajectory CSV(s) and " << manifest_path.string() << "\n";
    return int{kExitOk};
  });
}

struct QLearnArgs {
  std::string path;
  std::uint64_t seed = 1;
  std::size_t steps = 100000;
  double alpha0 = 0.35;
  double decay = 0.01;
  std::size_t stride = 100;
  double reward_noise = 0.0;
  std::string circle = "2:12";
  double delta_frac = 0.4;
  std::string csv_dir = ".";
};

/// Seed of trajectory j in a run seeded with `seed`.
inline std::uint64_t trajectory_seed(std::uint64_t seed, std::size_t j) {
  return Rng::splitmix64(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(j));
}

inline int cmd_qlearn(const QLearnArgs& args, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const detail::Setup st = detail::prepare(args.path, args.delta_frac);
    const auto c = detail::parse_circle(args.circle);
    const auto starts = circle_initials(st.report.q_star, st.basis, c.radius, c.count);
    const RunContext ctx{st.mdp, st.report, st.tube, st.basis};
    Json manifest = detail::manifest_header(st, "qlearn");
    manifest["circle"] = {{"radius", c.radius}, {"count", c.count}};
    manifest["config"] = {{"seed", args.seed},     {"steps", args.steps},   {"alpha0", args.alpha0},
                          {"decay", args.decay},   {"stride", args.stride}, {"reward_noise", args.reward_noise},
                          {"rng", "mt19937_64"}};
    manifest["trajectories"] = Json::array();
    std::filesystem::create_directories(args.csv_dir);
    for (std::size_t j = 0; j < starts.size(); ++j) {
      QLearnConfig cfg;
      cfg.seed = trajectory_seed(args.seed, j);
      cfg.steps = args.steps;
      cfg.alpha0 = args.alpha0;
      cfg.decay = args.decay;
      cfg.record_stride = args.stride;
      cfg.reward_noise = args.reward_noise;
      const auto records = run_qlearning(ctx, starts[j], cfg);
      const std::string name = detail::indexed_name("qlearn", j);
      write_file((std::filesystem::path(args.csv_dir) / name).string(), trajectory_csv(records));
      manifest["trajectories"].push_back({{"csv", name},
                                          {"seed", cfg.seed},
                                          {"tube_entrance", opt_json(entrance_index(records, Predicate::kTube))},
                                          {"poss_entrance", opt_json(entrance_index(records, Predicate::kPoss))}});
    }
    const auto manifest_path = std::filesystem::path(args.csv_dir) / "qlearn_manifest.json";
    write_file(manifest_path.string(), manifest.dump(2) + "\n");
    out << "wrote " << starts.size() << " trajectory CSV(s) and " << manifest_path.string() << "\n";
    return int{kExitOk};
  });
}

/// Parses argv and dispatches to a command.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Q-value iteration geometry: solve tabular MDPs, certify switching-system bounds, export trajectories"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check an MDP file");
  validate->add_option("path", validate_path, "MDP JSON file")->required();

  std::string example_name, example_out;
  auto* example = app.add_subcommand("example", "Write a built-in example MDP");
  example->add_option("name", example_name, "Example name (toy3x2)")->required();
  example->add_option("out", example_out, "Output path (stdout if omitted)");

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Solve, certify and report");
  analyze_cmd->add_option("path", an.path, "MDP JSON file")->required();
  analyze_cmd->add_option("--delta-frac", an.config.delta_frac, "Tube radius as a fraction of the gap")->capture_default_str();
  analyze_cmd->add_option("--depth", an.config.depth, "Product depth L for certificates")->capture_default_str();
  analyze_cmd->add_option("--cap", an.config.cap, "Max length-L sequences to enumerate")->capture_default_str();
  analyze_cmd->add_option("--seed", an.config.seed, "Seed for sampled lower bounds")->capture_default_str();
  analyze_cmd->add_option("--q0", an.q0_path, "Q0 JSON file for the horizons");
  analyze_cmd->add_option("--report", an.report_path, "Report output path (stdout if omitted)");

  TrajectoryArgs tr;
  auto* traj = app.add_subcommand("trajectory", "Run Q-value iteration and export CSVs");
  traj->add_option("path", tr.path, "MDP JSON file")->required();
  auto* q0_opt = traj->add_option("--q0", tr.q0_path, "Q0 JSON file");
  auto* paper_opt = traj->add_flag("--paper-q0", tr.paper_q0, "Start from the toy example's documented Q0");
  auto* circle_opt = traj->add_option("--circle", tr.circle, "R:M, M starts on a circle of radius R");
  q0_opt->excludes(paper_opt)->excludes(circle_opt);
  paper_opt->excludes(circle_opt);
  traj->add_option("--iters", tr.iters, "Iterations")->capture_default_str();
  traj->add_option("--delta-frac", tr.delta_frac, "Tube radius as a fraction of the gap")->capture_default_str();
  traj->add_option("--csv", tr.csv_dir, "Output directory")->capture_default_str();

  QLearnArgs ql;
  auto* qlearn = app.add_subcommand("qlearn", "Run tabular Q-learning from circle starts and export CSVs");
  qlearn->add_option("path", ql.path, "MDP JSON file")->required();
  qlearn->add_option("--seed", ql.seed, "Master seed")->capture_default_str();
  qlearn->add_option("--steps", ql.steps, "Updates per trajectory")->capture_default_str();
  qlearn->add_option("--alpha0", ql.alpha0, "Initial step size")->capture_default_str();
  qlearn->add_option("--decay", ql.decay, "Step-size decay")->capture_default_str();
  qlearn->add_option("--stride", ql.stride, "Record every N steps")->capture_default_str();
  qlearn->add_option("--reward-noise", ql.reward_noise, "Std-dev of Gaussian reward noise")->capture_default_str();
  qlearn->add_option("--circle", ql.circle, "R:M starts on a circle")->capture_default_str();
  qlearn->add_option("--delta-frac", ql.delta_frac, "Tube radius as a fraction of the gap")->capture_default_str();
  qlearn->add_option("--csv", ql.csv_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (validate->parsed()) return cmd_validate(validate_path, out, err);
  if (example->parsed()) return cmd_example(example_name, example_out, out, err);
  if (analyze_cmd->parsed()) return cmd_analyze(an, out, err);
  if (traj->parsed()) return cmd_trajectory(tr, out, err);
  if (qlearn->parsed()) return cmd_qlearn(ql, out, err);
  return kExitInput;
}

}  // namespace qvigeom

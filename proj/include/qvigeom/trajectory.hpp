#pragma once

// Q-value iteration and asynchronous tabular Q-learning runs with per-step
// geometric diagnostics.

#include "qvigeom/geometry.hpp"
#include "qvigeom/mdp.hpp"
#include "qvigeom/rng.hpp"
#include "qvigeom/solver.hpp"
#include "qvigeom/spectral.hpp"
#include "qvigeom/switching.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qvigeom {

struct TrajectoryRecord {
  std::size_t k = 0;
  double inf_err = 0.0;
  double dist2_x1 = 0.0;
  double distinf_x1 = 0.0;
  double alpha = 0.0;  // (1/n) 1^T (Q_k - Q*)
  bool poss_flag = false;
  bool tube_flag = false;
  std::optional<double> witness_residual;  // Q-VI only
  double u = 0.0, v = 0.0, p = 0.0, q = 0.0;
  DetPolicy greedy;  // not exported

  bool operator==(const TrajectoryRecord&) const = default;
};

struct RunContext {
  const Mdp& mdp;
  const OptimalityReport& report;
  const TubeSpec& tube;
  const PlaneBasis& basis;
};

inline TrajectoryRecord make_record(const RunContext& ctx, std::size_t k, const QVector& q) {
  const QVector& qs = ctx.report.q_star;
  TrajectoryRecord r;
  r.k = k;
  const Vector e = q - qs;
  r.inf_err = e.lpNorm<Eigen::Infinity>();
  r.dist2_x1 = dist2_to_X1(q, qs);
  r.distinf_x1 = distinf_to_X1(q, qs);
  r.alpha = e.mean();
  r.poss_flag = poss_contains(ctx.report, q);
  r.tube_flag = r.distinf_x1 <= ctx.tube.delta;
  const PlanePoint pt = plane_project(q, qs, ctx.basis);
  const RotatedPoint rp = rotate(pt);
  r.u = pt.u;
  r.v = pt.v;
  r.p = rp.p;
  r.q = rp.q;
  r.greedy = greedy_policy(q, ctx.mdp.num_states(), ctx.mdp.num_actions(), 0.0);
  return r;
}

enum class Predicate { kTube, kPoss };

/// Smallest recorded k with the flag set.
inline std::optional<std::size_t> entrance_index(const std::vector<TrajectoryRecord>& records, Predicate which) {
  if (records.empty()) throw std::invalid_argument("entrance_index: empty record list");
  for (const auto& r : records)
    if (which == Predicate::kTube ? r.tube_flag : r.poss_flag) return r.k;
  return std::nullopt;
}

struct QviRun {
  std::vector<TrajectoryRecord> records;
  std::optional<std::size_t> tube_entrance;
  std::optional<std::size_t> poss_entrance;
  double gamma = 0.0;
  std::optional<double> gamma_lambda2;  // gamma |lambda_2(P Pi^{pi*})| when Theta* is a singleton
};

/// Reference rate gamma |lambda_2| of the optimal kernel, if the optimal
/// policy is unique.
inline std::optional<double> optimal_reference_rate(const Mdp& mdp, const OptimalityReport& report) {
  for (const auto& s : report.phi_star)
    if (s.size() != 1) return std::nullopt;
  DetPolicy pi;
  for (const auto& s : report.phi_star) pi.actions.push_back(s.front());
  return mdp.gamma() * second_modulus(policy_kernel(mdp, pi));
}

inline QviRun run_qvi(const RunContext& ctx, const QVector& q0, std::size_t iters) {
  if (static_cast<std::size_t>(q0.size()) != ctx.mdp.dim()) throw std::invalid_argument("Q0 has wrong length");
  QviRun run;
  run.gamma = ctx.mdp.gamma();
  run.gamma_lambda2 = optimal_reference_rate(ctx.mdp, ctx.report);
  run.records.reserve(iters + 1);
  QVector q = q0;
  for (std::size_t k = 0;; ++k) {
    TrajectoryRecord rec = make_record(ctx, k, q);
    if (k == iters) {
      run.records.push_back(std::move(rec));
      break;
    }
    QVector next = bellman_apply(ctx.mdp, q);
    rec.witness_residual = error_step_verify(ctx.mdp, q, next, ctx.report.q_star);
    run.records.push_back(std::move(rec));
    q = std::move(next);
  }
  run.tube_entrance = entrance_index(run.records, Predicate::kTube);
  run.poss_entrance = entrance_index(run.records, Predicate::kPoss);
  return run;
}

struct QLearnConfig {
  std::uint64_t seed = 1;
  std::size_t steps = 100000;
  double alpha0 = 0.35;
  double decay = 0.01;
  std::size_t record_stride = 100;
  /// Initial state; empty means uniform over S.
  std::optional<std::size_t> initial_state;
  /// Standard deviation of zero-mean Gaussian noise added to R(s,a); 0 uses the expected reward.
  double reward_noise = 0.0;

  void check() const {
    if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw std::invalid_argument("alpha0 must lie in [0,1]");
    if (!(decay >= 0.0)) throw std::invalid_argument("decay must be >= 0");
    if (record_stride == 0) throw std::invalid_argument("record_stride must be >= 1");
    if (!(reward_noise >= 0.0)) throw std::invalid_argument("reward_noise must be >= 0");
  }
};

namespace detail {

inline std::size_t sample_row(const Matrix& p, Eigen::Index row, double u) {
  double acc = 0.0;
  const Eigen::Index last = p.cols() - 1;
  for (Eigen::Index t = 0; t < last; ++t) {
    acc += p(row, t);
    if (u < acc) return static_cast<std::size_t>(t);
  }
  return static_cast<std::size_t>(last);
}

// Box-Muller from two portable uniforms.
inline double normal(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Asynchronous tabular Q-learning along one continuing trajectory with a
/// uniform behavior policy and step size alpha0 / (1 + decay t).
/// Records at t = 0, every record_stride steps, and at the final step.
inline std::vector<TrajectoryRecord> run_qlearning(const RunContext& ctx, const QVector& q0,
                                                   const QLearnConfig& config) {
  config.check();
  const Mdp& mdp = ctx.mdp;
  if (static_cast<std::size_t>(q0.size()) != mdp.dim()) throw std::invalid_argument("Q0 has wrong length");
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  const double g = mdp.gamma();
  Rng rng(config.seed);
  std::size_t s = config.initial_state ? *config.initial_state : static_cast<std::size_t>(rng.below(ns));
  if (s >= ns) throw std::invalid_argument("initial state out of range");

  QVector q = q0;
  std::vector<TrajectoryRecord> records;
  records.push_back(make_record(ctx, 0, q));
  for (std::size_t t = 0; t < config.steps; ++t) {
    const auto a = static_cast<std::size_t>(rng.below(na));
    const std::size_t next = detail::sample_row(mdp.transition(a), static_cast<Eigen::Index>(s), rng.uniform());
    double r = mdp.spec().rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    if (config.reward_noise > 0.0) r += config.reward_noise * detail::normal(rng);
    double best = q(static_cast<Eigen::Index>(q_index(next, 0, ns)));
    for (std::size_t b = 1; b < na; ++b) best = std::max(best, q(static_cast<Eigen::Index>(q_index(next, b, ns))));
    const double step = config.alpha0 / (1.0 + config.decay * static_cast<double>(t));
    double& entry = q(static_cast<Eigen::Index>(q_index(s, a, ns)));
    entry += step * (r + g * best - entry);
    s = next;
    const std::size_t done = t + 1;
    if (done % config.record_stride == 0 || done == config.steps) records.push_back(make_record(ctx, done, q));
  }
  return records;
}

}  // namespace qvigeom

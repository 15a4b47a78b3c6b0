#pragma once

// Bellman operator, Q* by certified fixed-point iteration, optimal action
// sets, optimality gaps and membership in the policy-optimal set (POSS).

#include "qvigeom/mdp.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qvigeom {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (FQ)(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a').
inline QVector bellman_apply(const Mdp& mdp, const QVector& q) {
  return mdp.reward_vector() +
         mdp.gamma() * (mdp.stacked() * state_max(q, mdp.num_states(), mdp.num_actions()));
}

struct OptimalSets {
  std::vector<std::vector<std::size_t>> phi_star;  // per state, ascending
  std::vector<std::size_t> s_sep;                  // states with phi_star != A
  bool assumption_violated = false;                // s_sep empty
};

struct OptimalityReport {
  QVector q_star;
  Vector v_star;
  std::vector<std::vector<std::size_t>> phi_star;
  std::vector<std::size_t> s_sep;
  std::vector<double> delta_bar_per_state;  // aligned with s_sep
  std::optional<double> delta_bar;          // empty when s_sep is empty
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t iterations = 0;
  double residual = 0.0;  // last ||Q_{k+1} - Q_k||_inf
  double tol = 0.0;
  double tol_opt = 0.0;
  std::vector<std::string> warnings;
};

inline double default_tol_opt(const QVector& q_star) {
  return std::max(1e-8, 1e-6 * q_star.lpNorm<Eigen::Infinity>());
}

/// a in Phi*(s) iff V*(s) - Q*(s,a) <= tol_opt.
inline OptimalSets optimal_action_sets(const QVector& q_star, std::size_t num_states,
                                       std::size_t num_actions, double tol_opt) {
  OptimalSets out;
  const Vector v = state_max(q_star, num_states, num_actions);
  out.phi_star.resize(num_states);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      const double gap = v(static_cast<Eigen::Index>(s)) -
                         q_star(static_cast<Eigen::Index>(q_index(s, a, num_states)));
      if (gap <= tol_opt) out.phi_star[s].push_back(a);
    }
    if (out.phi_star[s].size() != num_actions) out.s_sep.push_back(s);
  }
  out.assumption_violated = out.s_sep.empty();
  return out;
}

/// Fills V*, Phi*, S_sep and the optimality gaps of `report` from its q_star.
inline void fill_optimality(OptimalityReport& report, double tol_opt) {
  const std::size_t ns = report.num_states;
  const std::size_t na = report.num_actions;
  report.tol_opt = tol_opt;
  report.v_star = state_max(report.q_star, ns, na);
  OptimalSets sets = optimal_action_sets(report.q_star, ns, na, tol_opt);
  report.phi_star = std::move(sets.phi_star);
  report.s_sep = std::move(sets.s_sep);
  report.delta_bar_per_state.clear();
  report.delta_bar.reset();
  for (std::size_t s : report.s_sep) {
    double best_other = -std::numeric_limits<double>::infinity();
    const auto& opt = report.phi_star[s];
    for (std::size_t a = 0; a < na; ++a) {
      if (std::find(opt.begin(), opt.end(), a) != opt.end()) continue;
      best_other = std::max(best_other, report.q_star(static_cast<Eigen::Index>(q_index(s, a, ns))));
    }
    const double gap = report.v_star(static_cast<Eigen::Index>(s)) - best_other;
    report.delta_bar_per_state.push_back(gap);
    report.delta_bar = report.delta_bar ? std::min(*report.delta_bar, gap) : gap;
  }
  if (sets.assumption_violated)
    report.warnings.emplace_back(
        "every action is optimal at every state; policy identification is trivial and the tube "
        "radius is undefined");
}

/// Iterates Q <- FQ from Q = 0 until gamma/(1-gamma) * ||Q_{k+1} - Q_k||_inf <= tol,
/// which certifies ||q_star - Q*||_inf <= tol.
inline OptimalityReport solve_qstar(const Mdp& mdp, double tol = 1e-10, std::size_t max_iter = 100000,
                                    std::optional<double> tol_opt = std::nullopt) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const double g = mdp.gamma();
  QVector q = QVector::Zero(static_cast<Eigen::Index>(mdp.dim()));
  OptimalityReport report;
  report.num_states = mdp.num_states();
  report.num_actions = mdp.num_actions();
  report.tol = tol;
  double diff = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  while (k < max_iter) {
    QVector next = bellman_apply(mdp, q);
    diff = (next - q).lpNorm<Eigen::Infinity>();
    q = std::move(next);
    ++k;
    if (g / (1.0 - g) * diff <= tol) break;
  }
  if (g / (1.0 - g) * diff > tol) {
    std::ostringstream os;
    os << "max_iter exceeded: residual " << diff << " after " << k << " iterations";
    throw NumericError(os.str());
  }
  report.q_star = std::move(q);
  report.iterations = k;
  report.residual = diff;
  fill_optimality(report, tol_opt ? *tol_opt : default_tol_opt(report.q_star));
  return report;
}

/// True iff the tie-broken greedy action of Q is optimal at every state.
inline bool poss_contains(const OptimalityReport& report, const QVector& q) {
  const DetPolicy pi = greedy_policy(q, report.num_states, report.num_actions, 0.0);
  for (std::size_t s = 0; s < report.num_states; ++s) {
    const auto& opt = report.phi_star[s];
    if (std::find(opt.begin(), opt.end(), pi.actions[s]) == opt.end()) return false;
  }
  return true;
}

inline std::vector<DetPolicy> enumerate_optimal_policies(
    const std::vector<std::vector<std::size_t>>& phi_star, double cap = 1e6) {
  return cartesian_policies(phi_star, cap);
}

}  // namespace qvigeom

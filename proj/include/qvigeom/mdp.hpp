#pragma once

// Finite MDP data model, policies and the policy-induced matrices.
//
// Vector convention: a Q-function over |S| states and |A| actions is a flat
// vector of length n = |S|*|A| in action-major order, i.e. all states for
// action 0, then all states for action 1, and so on:
//
//     index(s, a) = a * |S| + s        (0-based s, a)
//
// Policies, states and actions are 0-based in memory.  Files and reports
// print them 1-based.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qvigeom {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Q-function in action-major layout.
using QVector = Eigen::VectorXd;

inline constexpr double kStochasticTol = 1e-12;

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an enumeration would exceed the caller's budget.
class CapExceeded : public std::runtime_error {
 public:
  CapExceeded(const std::string& what, double count)
      : std::runtime_error(what), count_(count) {}
  double count() const noexcept { return count_; }

 private:
  double count_;
};

inline std::size_t q_index(std::size_t s, std::size_t a, std::size_t num_states) {
  return a * num_states + s;
}

/// Raw, unchecked MDP description as it appears in a file.
struct MdpSpec {
  std::string name;
  double gamma = 0.0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<Matrix> transitions;  // [a](s, s')
  Matrix rewards;                   // (s, a)
};

struct DetPolicy {
  std::vector<std::size_t> actions;  // per state, 0-based

  bool operator==(const DetPolicy&) const = default;
};

/// Per-state action distribution; dist(s, a).
struct StochPolicy {
  Matrix dist;
};

/// An MDP whose invariants have been checked.  Immutable.
class Mdp {
 public:
  /// Checks every invariant of `spec`.  With `renormalize`, rows that are
  /// nonnegative with a positive sum are rescaled instead of rejected.
  static Mdp validate(MdpSpec spec, bool renormalize = false) {
    if (spec.num_states < 1) throw ValidationError("num_states must be >= 1");
    if (spec.num_actions < 1) throw ValidationError("num_actions must be >= 1");
    if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) {
      std::ostringstream os;
      os << "gamma " << spec.gamma << " outside (0,1)";
      throw ValidationError(os.str());
    }
    const auto ns = static_cast<Eigen::Index>(spec.num_states);
    const auto na = static_cast<Eigen::Index>(spec.num_actions);
    if (spec.transitions.size() != spec.num_actions) {
      std::ostringstream os;
      os << "shape mismatch: " << spec.transitions.size() << " transition matrices for "
         << spec.num_actions << " actions";
      throw ValidationError(os.str());
    }
    for (std::size_t a = 0; a < spec.num_actions; ++a) {
      Matrix& p = spec.transitions[a];
      if (p.rows() != ns || p.cols() != ns) {
        std::ostringstream os;
        os << "shape mismatch: transitions[" << a + 1 << "] is " << p.rows() << "x" << p.cols()
           << ", expected " << ns << "x" << ns;
        throw ValidationError(os.str());
      }
      for (Eigen::Index s = 0; s < ns; ++s) {
        for (Eigen::Index t = 0; t < ns; ++t) {
          const double v = p(s, t);
          if (!std::isfinite(v) || v < 0.0) {
            std::ostringstream os;
            os << "negative or non-finite probability " << v << " at (a=" << a + 1
               << ", s=" << s + 1 << ", s'=" << t + 1 << ")";
            throw ValidationError(os.str());
          }
        }
        const double sum = p.row(s).sum();
        if (std::abs(sum - 1.0) > kStochasticTol) {
          if (renormalize && sum > 0.0) {
            p.row(s) /= sum;
          } else {
            std::ostringstream os;
            os.precision(15);
            os << "row sum " << sum << " != 1 at (a=" << a + 1 << ", s=" << s + 1 << ")";
            throw ValidationError(os.str());
          }
        }
      }
    }
    if (spec.rewards.rows() != ns || spec.rewards.cols() != na) {
      std::ostringstream os;
      os << "shape mismatch: rewards is " << spec.rewards.rows() << "x" << spec.rewards.cols()
         << ", expected " << ns << "x" << na;
      throw ValidationError(os.str());
    }
    if (!spec.rewards.allFinite()) throw ValidationError("non-finite reward");
    return Mdp(std::move(spec));
  }

  const MdpSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }
  double gamma() const noexcept { return spec_.gamma; }
  std::size_t num_states() const noexcept { return spec_.num_states; }
  std::size_t num_actions() const noexcept { return spec_.num_actions; }
  std::size_t dim() const noexcept { return spec_.num_states * spec_.num_actions; }
  const Matrix& transition(std::size_t a) const { return spec_.transitions.at(a); }

  /// Block-stacked kernel [P_1; ...; P_|A|], n x |S|.
  const Matrix& stacked() const noexcept { return stacked_; }
  /// Reward vector in action-major layout.
  const Vector& reward_vector() const noexcept { return reward_vec_; }

 private:
  explicit Mdp(MdpSpec spec) : spec_(std::move(spec)) {
    const auto ns = static_cast<Eigen::Index>(spec_.num_states);
    const auto na = static_cast<Eigen::Index>(spec_.num_actions);
    stacked_.resize(ns * na, ns);
    reward_vec_.resize(ns * na);
    for (Eigen::Index a = 0; a < na; ++a) {
      stacked_.block(a * ns, 0, ns, ns) = spec_.transitions[static_cast<std::size_t>(a)];
      reward_vec_.segment(a * ns, ns) = spec_.rewards.col(a);
    }
  }

  MdpSpec spec_;
  Matrix stacked_;
  Vector reward_vec_;
};

inline Matrix stack_transitions(const Mdp& mdp) { return mdp.stacked(); }

inline void check_policy(const DetPolicy& pi, std::size_t num_states, std::size_t num_actions) {
  if (pi.actions.size() != num_states) throw ValidationError("policy length != num_states");
  for (std::size_t s = 0; s < num_states; ++s) {
    if (pi.actions[s] >= num_actions) {
      std::ostringstream os;
      os << "policy action " << pi.actions[s] + 1 << " out of range at state " << s + 1;
      throw ValidationError(os.str());
    }
  }
}

inline void check_policy(const StochPolicy& mu) {
  for (Eigen::Index s = 0; s < mu.dist.rows(); ++s) {
    if ((mu.dist.row(s).array() < 0.0).any()) throw ValidationError("negative policy probability");
    if (std::abs(mu.dist.row(s).sum() - 1.0) > kStochasticTol) {
      std::ostringstream os;
      os << "policy row " << s + 1 << " does not sum to 1";
      throw ValidationError(os.str());
    }
  }
}

/// One-hot lift of a deterministic policy.
inline StochPolicy lift(const DetPolicy& pi, std::size_t num_actions) {
  StochPolicy mu{Matrix::Zero(static_cast<Eigen::Index>(pi.actions.size()),
                              static_cast<Eigen::Index>(num_actions))};
  for (std::size_t s = 0; s < pi.actions.size(); ++s)
    mu.dist(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(pi.actions[s])) = 1.0;
  return mu;
}

/// |S| x n matrix whose row s is mu(.|s)^T (x) e_s^T.
inline Matrix action_transition_matrix(const StochPolicy& mu) {
  const Eigen::Index ns = mu.dist.rows();
  const Eigen::Index na = mu.dist.cols();
  Matrix out = Matrix::Zero(ns, ns * na);
  for (Eigen::Index s = 0; s < ns; ++s)
    for (Eigen::Index a = 0; a < na; ++a) out(s, a * ns + s) = mu.dist(s, a);
  return out;
}

inline Matrix action_transition_matrix(const DetPolicy& pi, std::size_t num_actions) {
  return action_transition_matrix(lift(pi, num_actions));
}

/// B = P * Pi^mu, the n x n state-action kernel.  Row-stochastic.
inline Matrix policy_kernel(const Mdp& mdp, const StochPolicy& mu) {
  return mdp.stacked() * action_transition_matrix(mu);
}

inline Matrix policy_kernel(const Mdp& mdp, const DetPolicy& pi) {
  // P * Pi^pi just copies column s' of P into column index(s', pi(s')).
  const auto ns = static_cast<Eigen::Index>(mdp.num_states());
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(mdp.dim()), static_cast<Eigen::Index>(mdp.dim()));
  for (Eigen::Index t = 0; t < ns; ++t)
    out.col(static_cast<Eigen::Index>(pi.actions[static_cast<std::size_t>(t)]) * ns + t) =
        mdp.stacked().col(t);
  return out;
}

/// |S| x |S| state chain P_pi = Pi^pi P.
inline Matrix state_chain(const Mdp& mdp, const DetPolicy& pi) {
  const auto ns = static_cast<Eigen::Index>(mdp.num_states());
  Matrix out(ns, ns);
  for (Eigen::Index s = 0; s < ns; ++s)
    out.row(s) = mdp.transition(pi.actions[static_cast<std::size_t>(s)]).row(s);
  return out;
}

/// Per-state lowest-index action within `tie_tol` of the state maximum.
inline DetPolicy greedy_policy(const QVector& q, std::size_t num_states, std::size_t num_actions,
                               double tie_tol = 0.0) {
  DetPolicy pi;
  pi.actions.resize(num_states);
  for (std::size_t s = 0; s < num_states; ++s) {
    double best = q(static_cast<Eigen::Index>(s));
    for (std::size_t a = 1; a < num_actions; ++a)
      best = std::max(best, q(static_cast<Eigen::Index>(q_index(s, a, num_states))));
    std::size_t chosen = 0;
    for (std::size_t a = 0; a < num_actions; ++a) {
      if (q(static_cast<Eigen::Index>(q_index(s, a, num_states))) >= best - tie_tol) {
        chosen = a;
        break;
      }
    }
    pi.actions[s] = chosen;
  }
  return pi;
}

/// Per-state maximum over actions.
inline Vector state_max(const QVector& q, std::size_t num_states, std::size_t num_actions) {
  const auto ns = static_cast<Eigen::Index>(num_states);
  Vector v = q.head(ns);
  for (std::size_t a = 1; a < num_actions; ++a)
    v = v.cwiseMax(q.segment(static_cast<Eigen::Index>(a) * ns, ns));
  return v;
}

/// Mixed-radix odometer over per-state choice lists, lexicographic with
/// state 0 most significant.
inline std::vector<DetPolicy> cartesian_policies(const std::vector<std::vector<std::size_t>>& choices,
                                                 double cap) {
  double count = 1.0;
  for (const auto& c : choices) count *= static_cast<double>(c.size());
  if (count > cap) {
    std::ostringstream os;
    os << "policy space exceeds cap: " << count << " > " << cap;
    throw CapExceeded(os.str(), count);
  }
  std::vector<DetPolicy> out;
  if (count == 0.0) return out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<std::size_t> digit(choices.size(), 0);
  for (;;) {
    DetPolicy pi;
    pi.actions.resize(choices.size());
    for (std::size_t s = 0; s < choices.size(); ++s) pi.actions[s] = choices[s][digit[s]];
    out.push_back(std::move(pi));
    std::size_t pos = choices.size();
    while (pos > 0) {
      --pos;
      if (++digit[pos] < choices[pos].size()) break;
      digit[pos] = 0;
      if (pos == 0) return out;
    }
    if (choices.empty()) return out;
  }
}

inline std::vector<DetPolicy> enumerate_policies(const Mdp& mdp, double cap = 1e6) {
  std::vector<std::size_t> all(mdp.num_actions());
  for (std::size_t a = 0; a < all.size(); ++a) all[a] = a;
  return cartesian_policies(std::vector<std::vector<std::size_t>>(mdp.num_states(), all), cap);
}

/// The 3-state, 2-action discounted example used throughout the docs.
inline MdpSpec toy3x2_spec() {
  MdpSpec spec;
  spec.name = "toy3x2";
  spec.gamma = 0.95;
  spec.num_states = 3;
  spec.num_actions = 2;
  Matrix p1(3, 3), p2(3, 3), r(3, 2);
  p1 << 0.7, 0.2, 0.1,
        0.2, 0.6, 0.2,
        0.1, 0.3, 0.6;
  p2 << 0.2, 0.5, 0.3,
        0.4, 0.3, 0.3,
        0.3, 0.3, 0.4;
  r << 1.0, 0.2,
       0.6, 0.0,
       1.2, 0.3;
  spec.transitions = {p1, p2};
  spec.rewards = r;
  return spec;
}

inline Mdp toy3x2() { return Mdp::validate(toy3x2_spec()); }

/// Initial iterate of the single-trajectory toy experiment, (s, a) table.
inline QVector toy3x2_paper_q0() {
  QVector q(6);
  // action-major: Q(.,1) then Q(.,2)
  q << 19.5495, 17.9460, 18.8213, 16.6292, 17.5438, 17.8696;
  return q;
}

/// Printed optimal Q-function of the toy example (four decimals).
inline QVector toy3x2_printed_qstar() {
  QVector q(6);
  q << 18.2229, 17.6194, 18.4947, 17.3026, 17.2172, 17.5430;
  return q;
}

}  // namespace qvigeom

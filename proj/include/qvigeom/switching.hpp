#pragma once

// Error dynamics of Q-value iteration as a switched linear system, and its
// restriction to the complement of span(1).
//
// With e_k = Q_k - Q*, one Bellman step gives e_{k+1} = gamma P Pi^mu e_k for
// a state-dependent mixture mu of the greedy actions of Q_k and Q*.  The
// matrices A_pi = gamma P Pi^pi all fix the all-ones direction up to gamma,
// so projecting with I - (1/n) 1 1^T isolates the transverse part.

#include "qvigeom/mdp.hpp"
#include "qvigeom/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qvigeom {

inline Matrix perp_projector(std::size_t n) {
  if (n < 1) throw std::invalid_argument("perp_projector: n must be >= 1");
  const auto m = static_cast<Eigen::Index>(n);
  return Matrix::Identity(m, m) - Matrix::Constant(m, m, 1.0 / static_cast<double>(n));
}

/// Pi_perp * (gamma P Pi^pi) * Pi_perp.
template <typename Policy>
Matrix restricted_matrix(const Mdp& mdp, const Policy& policy) {
  const Matrix proj = perp_projector(mdp.dim());
  return proj * (mdp.gamma() * policy_kernel(mdp, policy)) * proj;
}

struct FamilyMember {
  DetPolicy policy;
  Matrix matrix;
};

struct ProjectedFamily {
  std::size_t n = 0;
  double gamma = 0.0;
  Matrix projector;
  std::vector<FamilyMember> members;

  std::vector<Matrix> matrices() const {
    std::vector<Matrix> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(m.matrix);
    return out;
  }
};

inline ProjectedFamily build_family(const Mdp& mdp, const std::vector<DetPolicy>& policies) {
  ProjectedFamily fam;
  fam.n = mdp.dim();
  fam.gamma = mdp.gamma();
  fam.projector = perp_projector(fam.n);
  fam.members.reserve(policies.size());
  for (const auto& pi : policies) {
    check_policy(pi, mdp.num_states(), mdp.num_actions());
    fam.members.push_back(
        {pi, fam.projector * (mdp.gamma() * policy_kernel(mdp, pi)) * fam.projector});
  }
  return fam;
}

struct StochasticWitness {
  StochPolicy mu;
  double residual = 0.0;  // max_s |mu(.|s)^T e(s,.) - delta(s)|
};

class WitnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stochastic policy mu with mu(.|s)^T e(s,.) = max_a Q(s,a) - max_a Q*(s,a),
/// where e = Q - Q*.  At most two actions per state carry mass: the argmax and
/// argmin of e(s,.), lowest index on ties.
inline StochasticWitness stochastic_witness(const Mdp& mdp, const QVector& q, const QVector& q_star) {
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  const QVector e = q - q_star;
  const Vector delta = state_max(q, ns, na) - state_max(q_star, ns, na);
  StochasticWitness w;
  w.mu.dist = Matrix::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
  const double scale = 1.0 + e.lpNorm<Eigen::Infinity>();
  for (std::size_t s = 0; s < ns; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    std::size_t arg_hi = 0, arg_lo = 0;
    double hi = e(si), lo = e(si);
    for (std::size_t a = 1; a < na; ++a) {
      const double v = e(static_cast<Eigen::Index>(q_index(s, a, ns)));
      if (v > hi) { hi = v; arg_hi = a; }
      if (v < lo) { lo = v; arg_lo = a; }
    }
    const double d = delta(si);
    if (d > hi + 1e-10 * scale || d < lo - 1e-10 * scale) {
      std::ostringstream os;
      os << "delta outside hull at state " << s + 1 << ": " << d << " not in [" << lo << ", " << hi << "]";
      throw WitnessError(os.str());
    }
    if (hi == lo) {
      w.mu.dist(si, 0) = 1.0;
      continue;
    }
    const double t = std::clamp((d - lo) / (hi - lo), 0.0, 1.0);
    w.mu.dist(si, static_cast<Eigen::Index>(arg_hi)) += t;
    w.mu.dist(si, static_cast<Eigen::Index>(arg_lo)) += 1.0 - t;
  }
  double res = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    double mix = 0.0;
    for (std::size_t a = 0; a < na; ++a)
      mix += w.mu.dist(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) *
             e(static_cast<Eigen::Index>(q_index(s, a, ns)));
    res = std::max(res, std::abs(mix - delta(static_cast<Eigen::Index>(s))));
  }
  w.residual = res;
  return w;
}

/// Residual of e_{k+1} = A_mu e_k and of its projected form z_{k+1} = Abar_mu z_k.
inline double error_step_verify(const Mdp& mdp, const QVector& q_k, const QVector& q_next,
                                const QVector& q_star) {
  const StochasticWitness w = stochastic_witness(mdp, q_k, q_star);
  const Matrix a_mu = mdp.gamma() * policy_kernel(mdp, w.mu);
  const Matrix proj = perp_projector(mdp.dim());
  const QVector e = q_k - q_star;
  const QVector e_next = q_next - q_star;
  const double full = (e_next - a_mu * e).lpNorm<Eigen::Infinity>();
  const Vector z = proj * e;
  const Vector z_next = proj * e_next;
  const double projected = (z_next - proj * a_mu * proj * z).lpNorm<Eigen::Infinity>();
  return std::max(full, projected);
}

}  // namespace qvigeom

#pragma once

// Distances to the affine line X1 = Q* + span(1), the invariant tube around
// it, finite entrance horizons, and the 2-D plane used for pictures.

#include "qvigeom/mdp.hpp"
#include "qvigeom/solver.hpp"
#include "qvigeom/switching.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qvigeom {

/// ||Pi_perp (Q - Q*)||_2.
inline double dist2_to_X1(const QVector& q, const QVector& q_star) {
  const Vector e = q - q_star;
  return (e.array() - e.mean()).matrix().norm();
}

/// min_alpha ||Q - Q* - alpha 1||_inf, attained at the midrange of Q - Q*.
inline double distinf_to_X1(const QVector& q, const QVector& q_star) {
  const Vector e = q - q_star;
  return 0.5 * (e.maxCoeff() - e.minCoeff());
}

/// Steps after which gamma^k ||Q0 - Q*||_inf < gap/2.
inline long long k_basic(double inf_err0, double delta_bar, double gamma) {
  if (!(delta_bar > 0.0)) throw std::invalid_argument("k_basic: delta_bar must be positive");
  if (inf_err0 < delta_bar / 2.0) return 0;
  return static_cast<long long>(std::floor(std::log(2.0 * inf_err0 / delta_bar) / -std::log(gamma))) + 1;
}

/// Steps after which c_eps beta_eps^k dist2(Q0, X1) < gap/2.
inline long long k_id(double dist2_0, double delta_bar, double c_eps, double beta_eps) {
  if (!(delta_bar > 0.0)) throw std::invalid_argument("k_id: delta_bar must be positive");
  if (!(beta_eps > 0.0 && beta_eps < 1.0)) throw std::invalid_argument("k_id: beta_eps must lie in (0,1)");
  if (c_eps < 1.0) throw std::invalid_argument("k_id: c_eps must be >= 1");
  if (c_eps * dist2_0 < delta_bar / 2.0) return 0;
  return static_cast<long long>(
             std::floor(std::log(2.0 * c_eps * dist2_0 / delta_bar) / -std::log(beta_eps))) +
         1;
}

struct TubeSpec {
  QVector q_star;
  double delta_bar = 0.0;
  double fraction = 0.4;
  double delta = 0.0;

  static TubeSpec make(const OptimalityReport& report, double fraction = 0.4) {
    if (!report.delta_bar)
      throw std::invalid_argument("tube radius undefined: every action is optimal at every state");
    if (!(fraction > 0.0 && fraction < 0.5))
      throw std::invalid_argument("tube fraction must lie in (0, 0.5)");
    return {report.q_star, *report.delta_bar, fraction, fraction * *report.delta_bar};
  }

  bool contains(const QVector& q) const { return distinf_to_X1(q, q_star) <= delta; }
};

struct PlaneBasis {
  Vector one_hat;
  Vector d_hat;
  std::string label;  // "action-contrast" or "visualization heuristic"

  /// Half-width c of the tube slice {|v| <= c} in this plane.
  double strip_half_width(double delta) const {
    const double span = d_hat.maxCoeff() - d_hat.minCoeff();
    return span > 0.0 ? 2.0 * delta / span : std::numeric_limits<double>::infinity();
  }
};

inline void check_basis(const PlaneBasis& b) {
  if (std::abs(b.one_hat.norm() - 1.0) > 1e-12 || std::abs(b.d_hat.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("plane basis vectors must have unit norm");
  if (std::abs(b.one_hat.dot(b.d_hat)) > 1e-12) throw std::invalid_argument("plane basis not orthogonal");
}

/// Plane through 1/sqrt(n) and (e_{(s,a1)} - e_{(s,a2)})/sqrt(2), the action
/// contrast at one state.  For the toy example with s=0, a1=0, a2=1 this is
/// (1,0,0,-1,0,0)/sqrt(2).
inline PlaneBasis contrast_basis(std::size_t num_states, std::size_t num_actions, std::size_t state = 0,
                                 std::size_t a1 = 0, std::size_t a2 = 1) {
  const auto n = static_cast<Eigen::Index>(num_states * num_actions);
  if (n < 2) throw std::invalid_argument("plane basis needs n >= 2");
  PlaneBasis b;
  b.one_hat = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  b.d_hat = Vector::Zero(n);
  if (num_actions >= 2) {
    b.d_hat(static_cast<Eigen::Index>(q_index(state, a1, num_states))) = 1.0;
    b.d_hat(static_cast<Eigen::Index>(q_index(state, a2, num_states))) = -1.0;
  } else {
    b.d_hat(0) = 1.0;
    b.d_hat(1) = -1.0;
  }
  b.d_hat /= std::sqrt(2.0);
  b.label = "action-contrast";
  return b;
}

/// Real part of the dominant eigenvector of the optimal restricted matrix,
/// orthogonalized against 1.  Falls back to the action contrast at state 0.
inline PlaneBasis dominant_basis(const Mdp& mdp, const DetPolicy& optimal) {
  PlaneBasis fallback = contrast_basis(mdp.num_states(), mdp.num_actions());
  fallback.label = "visualization heuristic";
  const Matrix abar = restricted_matrix(mdp, optimal);
  Eigen::EigenSolver<Matrix> es(abar, true);
  if (es.info() != Eigen::Success) return fallback;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(best))) best = i;
  Vector d = es.eigenvectors().col(best).real();
  d.array() -= d.mean();
  if (d.norm() < 1e-8) return fallback;
  d /= d.norm();
  fallback.d_hat = d;
  return fallback;
}

struct PlanePoint {
  double u = 0.0;
  double v = 0.0;
};

inline PlanePoint plane_project(const QVector& q, const QVector& q_star, const PlaneBasis& basis) {
  const Vector e = q - q_star;
  return {e.dot(basis.one_hat), e.dot(basis.d_hat)};
}

struct RotatedPoint {
  double p = 0.0;
  double q = 0.0;
};

/// p = (u - v)/sqrt(2), q = (u + v)/sqrt(2).
inline RotatedPoint rotate(const PlanePoint& pt) {
  return {(pt.u - pt.v) / std::numbers::sqrt2, (pt.u + pt.v) / std::numbers::sqrt2};
}

/// Q_j = Q* + r (cos t_j 1hat + sin t_j dhat), t_j = 2 pi j / count.
inline std::vector<QVector> circle_initials(const QVector& q_star, const PlaneBasis& basis, double radius,
                                            std::size_t count) {
  if (!(radius > 0.0)) throw std::invalid_argument("circle radius must be positive");
  if (count < 1) throw std::invalid_argument("circle count must be >= 1");
  std::vector<QVector> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(count);
    out.push_back(q_star + radius * (std::cos(t) * basis.one_hat + std::sin(t) * basis.d_hat));
  }
  return out;
}

}  // namespace qvigeom

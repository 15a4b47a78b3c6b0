#pragma once

// Eigenvalue moduli, Dobrushin coefficients, the diameter seminorm,
// scrambling tests and closed-class / period analysis of state chains.

#include "qvigeom/mdp.hpp"
#include "qvigeom/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace qvigeom {

/// Moduli of all eigenvalues, descending.  Real Schur form via Hessenberg
/// reduction and shifted QR.
inline std::vector<double> eigen_moduli(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eigen_moduli: matrix not square");
  if (m.rows() == 0) return {};
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw NumericError("eigen_moduli: iteration failed to converge");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

inline double spectral_radius(const Matrix& m) {
  const auto mod = eigen_moduli(m);
  return mod.empty() ? 0.0 : mod.front();
}

/// Largest eigenvalue modulus after removing the Perron eigenvalue 1 once.
/// A repeated eigenvalue 1 leaves a copy behind.
inline double second_modulus(const Matrix& b) {
  if (b.rows() != b.cols()) throw std::invalid_argument("second_modulus: matrix not square");
  if (b.rows() <= 1) return 0.0;
  Eigen::EigenSolver<Matrix> es(b, false);
  if (es.info() != Eigen::Success) throw NumericError("second_modulus: iteration failed to converge");
  const auto& ev = es.eigenvalues();
  Eigen::Index perron = 0;
  double closest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double d = std::abs(ev(i) - std::complex<double>(1.0, 0.0));
    if (d < closest) {
      closest = d;
      perron = i;
    }
  }
  double out = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (i != perron) out = std::max(out, std::abs(ev(i)));
  return out;
}

struct DobrushinValue {
  double value = 0.0;        // 1 - min_{x,y} sum_v min(B_xv, B_yv)
  double tv_form = 0.0;      // (1/2) max_{x,y} sum_v |B_xv - B_yv|
  double discrepancy = 0.0;  // |value - tv_form|
};

/// Smallest pairwise row overlap min_{x,y} sum_v min(B_xv, B_yv).
inline double min_row_overlap(const Matrix& b) {
  double best = 1.0;
  for (Eigen::Index x = 0; x < b.rows(); ++x)
    for (Eigen::Index y = x + 1; y < b.rows(); ++y)
      best = std::min(best, b.row(x).cwiseMin(b.row(y)).sum());
  return best;
}

inline DobrushinValue dobrushin_both(const Matrix& b) {
  DobrushinValue d;
  d.value = b.rows() < 2 ? 0.0 : 1.0 - min_row_overlap(b);
  double tv = 0.0;
  for (Eigen::Index x = 0; x < b.rows(); ++x)
    for (Eigen::Index y = x + 1; y < b.rows(); ++y)
      tv = std::max(tv, 0.5 * (b.row(x) - b.row(y)).cwiseAbs().sum());
  d.tv_form = tv;
  d.discrepancy = std::abs(d.value - d.tv_form);
  return d;
}

inline double dobrushin(const Matrix& b) { return dobrushin_both(b).value; }

/// max(v) - min(v).
inline double diameter(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("diameter: empty vector");
  return v.maxCoeff() - v.minCoeff();
}

/// Every pair of rows shares a strictly positive column.
inline bool is_scrambling(const Matrix& b) {
  for (Eigen::Index x = 0; x < b.rows(); ++x) {
    for (Eigen::Index y = x + 1; y < b.rows(); ++y) {
      bool shared = false;
      for (Eigen::Index c = 0; c < b.cols() && !shared; ++c) shared = b(x, c) > 0.0 && b(y, c) > 0.0;
      if (!shared) return false;
    }
  }
  return true;
}

struct ChainStructure {
  std::vector<std::vector<std::size_t>> closed_classes;
  std::vector<std::size_t> transient_states;
  std::vector<std::size_t> periods;  // aligned with closed_classes
  bool is_unichain = false;
  bool is_aperiodic = false;
};

namespace detail {

// Tarjan's algorithm on the support digraph; components in reverse
// topological order.
inline std::vector<std::vector<std::size_t>> strongly_connected(
    const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  constexpr std::size_t kUnvisited = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, kUnvisited), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : adj[v]) {
      if (index[w] == kUnvisited) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      comps.push_back(std::move(comp));
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] == kUnvisited) visit(v);
  return comps;
}

// gcd of level[u] + 1 - level[v] over edges inside a strongly connected class.
inline std::size_t class_period(const std::vector<std::vector<std::size_t>>& adj,
                                const std::vector<std::size_t>& members) {
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> level(adj.size(), kUnset);
  std::vector<bool> in_class(adj.size(), false);
  for (std::size_t v : members) in_class[v] = true;
  std::queue<std::size_t> frontier;
  level[members.front()] = 0;
  frontier.push(members.front());
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t w : adj[u]) {
      if (in_class[w] && level[w] == kUnset) {
        level[w] = level[u] + 1;
        frontier.push(w);
      }
    }
  }
  long long g = 0;
  for (std::size_t u : members)
    for (std::size_t w : adj[u])
      if (in_class[w])
        g = std::gcd(g, static_cast<long long>(level[u]) + 1 - static_cast<long long>(level[w]));
  return static_cast<std::size_t>(g == 0 ? 1 : std::llabs(g));
}

}  // namespace detail

/// Closed communicating classes, transient states and periods of a
/// row-stochastic state chain, from its zero pattern.
inline ChainStructure chain_structure(const Matrix& chain) {
  const auto n = static_cast<std::size_t>(chain.rows());
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t)
      if (chain(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) > 0.0) adj[s].push_back(t);
  auto comps = detail::strongly_connected(adj);
  std::vector<std::size_t> comp_of(n);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (std::size_t v : comps[c]) comp_of[v] = c;

  ChainStructure out;
  std::vector<std::vector<std::size_t>> closed;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    bool is_closed = true;
    for (std::size_t v : comps[c])
      for (std::size_t w : adj[v])
        if (comp_of[w] != c) is_closed = false;
    if (is_closed) {
      closed.push_back(comps[c]);
    } else {
      out.transient_states.insert(out.transient_states.end(), comps[c].begin(), comps[c].end());
    }
  }
  std::sort(closed.begin(), closed.end());
  std::sort(out.transient_states.begin(), out.transient_states.end());
  for (const auto& cls : closed) out.periods.push_back(detail::class_period(adj, cls));
  out.closed_classes = std::move(closed);
  out.is_unichain = out.closed_classes.size() == 1;
  out.is_aperiodic = std::all_of(out.periods.begin(), out.periods.end(), [](std::size_t p) { return p == 1; });
  return out;
}

inline ChainStructure chain_structure(const Mdp& mdp, const DetPolicy& pi) {
  return chain_structure(state_chain(mdp, pi));
}

}  // namespace qvigeom

#pragma once

// Certified bounds on the joint spectral radius of the restricted switching
// family {Pi_perp gamma P Pi^pi Pi_perp : pi in a policy set}.
//
// Upper bounds: product norms, one-step overlap (common descendant, Doeblin),
// uniform scrambling of depth-L kernel products, the exact spectral radius
// of a singleton family, and gamma itself.  Lower bounds: spectral radii of
// products, and gamma when a policy has a second unit-modulus eigenvalue.

#include "qvigeom/mdp.hpp"
#include "qvigeom/rng.hpp"
#include "qvigeom/solver.hpp"
#include "qvigeom/spectral.hpp"
#include "qvigeom/switching.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qvigeom {

inline constexpr double kVerdictSlack = 1e-9;

inline double norm2(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double norm_inf(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Largest l <= depth with size^l <= cap (0 if even l = 1 is too large).
inline std::size_t feasible_depth(std::size_t family_size, std::size_t depth, double cap) {
  if (family_size <= 1) return depth;
  std::size_t l = 0;
  double count = 1.0;
  while (l < depth && count * static_cast<double>(family_size) <= cap) {
    count *= static_cast<double>(family_size);
    ++l;
  }
  return l;
}

inline void require_enumerable(std::size_t family_size, std::size_t depth, double cap) {
  if (feasible_depth(family_size, depth, cap) < depth) {
    std::ostringstream os;
    os << "cap exceeded: " << family_size << "^" << depth << " products > " << cap
       << "; largest feasible depth " << feasible_depth(family_size, depth, cap);
    throw CapExceeded(os.str(), std::pow(static_cast<double>(family_size), static_cast<double>(depth)));
  }
}

/// Calls fn(length, product) for every product M_{s_l} ... M_{s_1},
/// l = 1..depth.  Prefixes are shared, so each product costs one multiply.
template <typename Fn>
void for_each_product(const std::vector<Matrix>& family, std::size_t depth, Fn&& fn) {
  if (family.empty() || depth == 0) return;
  std::vector<Matrix> stack(depth);
  auto rec = [&](auto&& self, std::size_t level) -> void {
    for (const Matrix& m : family) {
      stack[level] = level == 0 ? m : Matrix(m * stack[level - 1]);
      fn(level + 1, stack[level]);
      if (level + 1 < depth) self(self, level + 1);
    }
  };
  rec(rec, 0);
}

/// Per-length maxima over all products of the family.
struct ProductScan {
  std::size_t depth = 0;
  std::vector<double> max_norm2;    // index l-1
  std::vector<double> max_norm_inf;
  std::vector<double> max_rho;
};

inline ProductScan scan_products(const std::vector<Matrix>& family, std::size_t depth, double cap) {
  require_enumerable(family.size(), depth, cap);
  ProductScan scan;
  scan.depth = depth;
  scan.max_norm2.assign(depth, 0.0);
  scan.max_norm_inf.assign(depth, 0.0);
  scan.max_rho.assign(depth, 0.0);
  for_each_product(family, depth, [&](std::size_t l, const Matrix& p) {
    scan.max_norm2[l - 1] = std::max(scan.max_norm2[l - 1], norm2(p));
    scan.max_norm_inf[l - 1] = std::max(scan.max_norm_inf[l - 1], norm_inf(p));
    scan.max_rho[l - 1] = std::max(scan.max_rho[l - 1], spectral_radius(p));
  });
  return scan;
}

struct ProductNormBound {
  double value = 0.0;          // min_l (max ||product_l||_2)^(1/l)
  std::size_t best_depth = 0;  // the l attaining the minimum
  std::vector<double> per_depth;
};

inline ProductNormBound product_norm_bound(const ProductScan& scan) {
  ProductNormBound out;
  out.value = std::numeric_limits<double>::infinity();
  for (std::size_t l = 1; l <= scan.depth; ++l) {
    const double v = std::pow(scan.max_norm2[l - 1], 1.0 / static_cast<double>(l));
    out.per_depth.push_back(v);
    if (v < out.value) {
      out.value = v;
      out.best_depth = l;
    }
  }
  return out;
}

inline ProductNormBound product_norm_bound(const std::vector<Matrix>& family, std::size_t depth,
                                           double cap = 4096) {
  return product_norm_bound(scan_products(family, depth, cap));
}

inline double spectral_lower_bound(const ProductScan& scan) {
  double out = 0.0;
  for (std::size_t l = 1; l <= scan.depth; ++l)
    out = std::max(out, std::pow(scan.max_rho[l - 1], 1.0 / static_cast<double>(l)));
  return out;
}

inline double spectral_lower_bound(const std::vector<Matrix>& family, std::size_t depth,
                                   double cap = 4096) {
  return spectral_lower_bound(scan_products(family, depth, cap));
}

/// Per-length max of rho(Abar product)^(1/l) over the policy family.  Each
/// eigenvalue estimate is capped by the enclosure rho <= gamma^l tau(B product),
/// so rounding on nilpotent products cannot exceed what the kernels certify.
inline std::vector<double> switched_spectral_profile(const Mdp& mdp, const std::vector<DetPolicy>& policies,
                                                     std::size_t depth, double cap = 4096) {
  require_enumerable(policies.size(), depth, cap);
  std::vector<double> out(depth, 0.0);
  if (policies.empty() || depth == 0) return out;
  std::vector<Matrix> abar, kern;
  for (const auto& pi : policies) {
    abar.push_back(restricted_matrix(mdp, pi));
    kern.push_back(policy_kernel(mdp, pi));
  }
  std::vector<Matrix> pa(depth), pb(depth);
  auto rec = [&](auto&& self, std::size_t level) -> void {
    for (std::size_t i = 0; i < abar.size(); ++i) {
      pa[level] = level == 0 ? abar[i] : Matrix(abar[i] * pa[level - 1]);
      pb[level] = level == 0 ? kern[i] : Matrix(kern[i] * pb[level - 1]);
      const double l = static_cast<double>(level + 1);
      const double rho = std::min(spectral_radius(pa[level]), std::pow(mdp.gamma(), l) * dobrushin(pb[level]));
      out[level] = std::max(out[level], std::pow(rho, 1.0 / l));
      if (level + 1 < depth) self(self, level + 1);
    }
  };
  rec(rec, 0);
  return out;
}

/// max rho(product)^(1/l) over `samples` random sequences at each length
/// 1..depth.  Always a valid lower bound; never an upper bound.
inline double spectral_lower_bound_sampled(const std::vector<Matrix>& family, std::size_t depth,
                                           std::size_t samples, Rng& rng) {
  double out = 0.0;
  if (family.empty()) return out;
  for (std::size_t l = 1; l <= depth; ++l) {
    for (std::size_t i = 0; i < samples; ++i) {
      Matrix p = family[rng.below(family.size())];
      for (std::size_t j = 1; j < l; ++j) p = family[rng.below(family.size())] * p;
      out = std::max(out, std::pow(spectral_radius(p), 1.0 / static_cast<double>(l)));
    }
  }
  return out;
}

struct ScramblingCertificate {
  bool all_scrambling = false;
  double eta = 0.0;        // min over products and row pairs of the row overlap
  double max_tau = 0.0;    // max Dobrushin coefficient over products
  double bound = 0.0;      // gamma (1 - eta)^(1/L) if all scrambling, else gamma
  std::size_t depth = 0;
};

/// Scrambling check over all length-L products B_{pi_{L-1}} ... B_{pi_0}.
inline ScramblingCertificate scrambling_certificate(const Mdp& mdp, const std::vector<DetPolicy>& policies,
                                                    std::size_t depth, double cap = 4096) {
  if (depth == 0) throw std::invalid_argument("scrambling_certificate: depth must be >= 1");
  require_enumerable(policies.size(), depth, cap);
  std::vector<Matrix> kernels;
  kernels.reserve(policies.size());
  for (const auto& pi : policies) kernels.push_back(policy_kernel(mdp, pi));
  ScramblingCertificate cert;
  cert.depth = depth;
  cert.all_scrambling = !kernels.empty();
  cert.eta = 1.0;
  for_each_product(kernels, depth, [&](std::size_t l, const Matrix& b) {
    if (l != depth) return;
    cert.all_scrambling = cert.all_scrambling && is_scrambling(b);
    const double overlap = b.rows() < 2 ? 1.0 : min_row_overlap(b);
    cert.eta = std::min(cert.eta, overlap);
    cert.max_tau = std::max(cert.max_tau, dobrushin(b));
  });
  if (kernels.empty()) cert.eta = 0.0;
  cert.bound = cert.all_scrambling
                   ? mdp.gamma() * std::pow(1.0 - cert.eta, 1.0 / static_cast<double>(depth))
                   : mdp.gamma();
  return cert;
}

struct OverlapBounds {
  double p_min = 0.0;        // max_s' min_(s,a) P(s'|s,a)
  double eps_doeblin = 0.0;  // sum_s' min_(s,a) P(s'|s,a)
};

inline OverlapBounds overlap_bounds(const Mdp& mdp) {
  const Vector colmin = mdp.stacked().colwise().minCoeff().transpose();
  return {colmin.maxCoeff(), colmin.sum()};
}

struct Obstruction {
  DetPolicy policy;
  std::string reason;
};

/// First policy whose state chain has a second unit-modulus mode.
inline std::optional<Obstruction> obstruction_certificate(const Mdp& mdp,
                                                          const std::vector<DetPolicy>& policies) {
  for (const auto& pi : policies) {
    const ChainStructure cs = chain_structure(mdp, pi);
    if (!cs.is_unichain) return Obstruction{pi, "multiple closed classes"};
    if (!cs.is_aperiodic) return Obstruction{pi, "periodic closed class"};
    if (second_modulus(policy_kernel(mdp, pi)) >= 1.0 - 1e-8)
      return Obstruction{pi, "unit-modulus second eigenvalue"};
  }
  return std::nullopt;
}

struct LyapunovConstants {
  double eta = 0.0;
  std::size_t depth = 0;
  double beta_eps = 0.0;
  double c0 = 1.0;
  double c_big = 1.0;  // C_eps
  double c_eps = 1.0;  // sqrt(C_eps)
};

class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Constants with max ||length-k product||_2 <= C0 eta^k for all k, from a
/// depth-L certificate max ||length-L product||_2 <= eta^L and k = mL + r.
inline LyapunovConstants lyapunov_constants(const ProductScan& scan, double eta, double beta_eps,
                                            std::size_t depth) {
  if (!(eta > 0.0) || !(eta < beta_eps) || !(beta_eps < 1.0))
    throw CertificationError("lyapunov_constants: need 0 < eta < beta_eps < 1");
  if (depth == 0 || depth > scan.depth) throw CertificationError("lyapunov_constants: depth not scanned");
  const double certified = std::pow(eta, static_cast<double>(depth));
  if (scan.max_norm2[depth - 1] > certified * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "eta not certified at depth " << depth << ": max product norm " << scan.max_norm2[depth - 1]
       << " > eta^L = " << certified;
    throw CertificationError(os.str());
  }
  LyapunovConstants out;
  out.eta = eta;
  out.depth = depth;
  out.beta_eps = beta_eps;
  out.c0 = 1.0;
  for (std::size_t k = 1; k < depth; ++k)
    out.c0 = std::max(out.c0, scan.max_norm2[k - 1] / std::pow(eta, static_cast<double>(k)));
  const double ratio = eta / beta_eps;
  out.c_big = out.c0 * out.c0 / (1.0 - ratio * ratio);
  out.c_eps = std::sqrt(out.c_big);
  return out;
}

inline LyapunovConstants lyapunov_constants(const std::vector<Matrix>& family, double eta,
                                            double beta_eps, std::size_t depth, double cap = 4096) {
  return lyapunov_constants(scan_products(family, depth, cap), eta, beta_eps, depth);
}

enum class Strictness { kProvenStrict, kProvenNotStrict, kUndetermined };

inline const char* to_string(Strictness s) {
  switch (s) {
    case Strictness::kProvenStrict: return "proven-strict";
    case Strictness::kProvenNotStrict: return "proven-not-strict";
    case Strictness::kUndetermined: return "undetermined";
  }
  return "undetermined";
}

struct MethodEntry {
  std::string method;
  std::string kind;  // "upper", "lower" or "info"
  std::size_t depth = 0;
  double value = 0.0;
};

struct JsrOptions {
  std::size_t depth = 3;
  double cap = 4096;            // max length-L sequences enumerated
  std::size_t samples = 4096;   // random sequences per length when over cap
  std::uint64_t seed = 20240607;
  double beta_factor = 1.05;
};

struct JsrCertificate {
  std::string family_label;  // "full" or "optimal"
  std::size_t family_size = 0;
  std::size_t depth = 0;       // requested
  std::size_t depth_used = 0;  // exhaustive depth actually certified
  double upper_bound = 0.0;
  double lower_bound = 0.0;
  double gamma = 0.0;
  Strictness strict = Strictness::kUndetermined;
  std::vector<MethodEntry> method_trace;
  std::optional<Obstruction> obstruction;
  std::optional<ScramblingCertificate> scrambling;
  std::optional<LyapunovConstants> lyapunov;
  std::vector<std::string> notes;
};

/// Runs every method on the full (label "full") or optimal ("optimal")
/// restricted family and aggregates the bounds.
inline JsrCertificate certify(const Mdp& mdp, const OptimalityReport& report, const std::string& family_label,
                              const JsrOptions& opt = {}) {
  const double g = mdp.gamma();
  JsrCertificate cert;
  cert.family_label = family_label;
  cert.depth = opt.depth;
  cert.gamma = g;

  std::vector<std::vector<std::size_t>> choices;
  if (family_label == "full") {
    std::vector<std::size_t> all(mdp.num_actions());
    for (std::size_t a = 0; a < all.size(); ++a) all[a] = a;
    choices.assign(mdp.num_states(), all);
  } else if (family_label == "optimal") {
    choices = report.phi_star;
  } else {
    throw std::invalid_argument("certify: family label must be \"full\" or \"optimal\"");
  }

  std::vector<DetPolicy> policies;
  try {
    policies = cartesian_policies(choices, opt.cap);
  } catch (const CapExceeded& e) {
    cert.notes.emplace_back(std::string("policy set not enumerable (") + e.what() +
                            "); only one-step overlap bounds and sampled lower bounds reported");
  }
  cert.family_size = policies.size();

  auto add = [&](std::string method, std::string kind, std::size_t depth, double value) {
    cert.method_trace.push_back({std::move(method), std::move(kind), depth, value});
  };
  add("gamma_baseline", "upper", 0, g);

  // One-step overlap bounds hold for every sub-family of the full family.
  const OverlapBounds ob = overlap_bounds(mdp);
  add("common_descendant", "upper", 1, g * (1.0 - ob.p_min));
  add("doeblin", "upper", 1, g * (1.0 - ob.eps_doeblin));

  Rng rng(opt.seed);
  if (!policies.empty()) {
    const ProjectedFamily fam = build_family(mdp, policies);
    const std::vector<Matrix> mats = fam.matrices();
    cert.depth_used = feasible_depth(mats.size(), opt.depth, opt.cap);
    if (cert.depth_used < opt.depth) {
      std::ostringstream os;
      os << "cap exceeded at depth " << opt.depth << "; exhaustive certificate at depth " << cert.depth_used;
      cert.notes.push_back(os.str());
    }
    if (cert.depth_used >= 1) {
      const ProductScan scan = scan_products(mats, cert.depth_used, opt.cap);
      const ProductNormBound pn = product_norm_bound(scan);
      add("product_norm_2", "upper", pn.best_depth, pn.value);
      double inf_bound = std::numeric_limits<double>::infinity();
      for (std::size_t l = 1; l <= scan.depth; ++l)
        inf_bound = std::min(inf_bound, std::pow(scan.max_norm_inf[l - 1], 1.0 / static_cast<double>(l)));
      add("product_norm_inf", "upper", scan.depth, inf_bound);
      const auto profile = switched_spectral_profile(mdp, policies, cert.depth_used, opt.cap);
      add("spectral", "lower", scan.depth, *std::max_element(profile.begin(), profile.end()));

      const double eta = std::max(pn.value, 1e-12);
      const double beta = opt.beta_factor * eta;
      if (beta < 1.0) {
        cert.lyapunov = lyapunov_constants(scan, eta, beta, pn.best_depth);
      } else {
        cert.notes.emplace_back("product-norm bound too large for Lyapunov constants (beta_eps >= 1)");
      }

      const ScramblingCertificate sc = scrambling_certificate(mdp, policies, cert.depth_used, opt.cap);
      add("scrambling", sc.all_scrambling ? "upper" : "info", sc.depth, sc.bound);
      cert.scrambling = sc;
    }
    if (cert.depth_used < opt.depth)
      add("spectral_sampled", "lower", opt.depth,
          spectral_lower_bound_sampled(mats, opt.depth, opt.samples, rng));
    if (mats.size() == 1) {
      const double rho = std::min(spectral_radius(mats.front()), g * dobrushin(policy_kernel(mdp, policies.front())));
      add("singleton_spectral", "upper", 1, rho);
      add("singleton_spectral", "lower", 1, rho);
    }
    cert.obstruction = obstruction_certificate(mdp, policies);
  } else {
    // Sampled policies still give valid lower bounds.
    std::vector<Matrix> sampled;
    for (std::size_t i = 0; i < std::min<std::size_t>(opt.samples, 64); ++i) {
      DetPolicy pi;
      for (const auto& c : choices) pi.actions.push_back(c[rng.below(c.size())]);
      sampled.push_back(restricted_matrix(mdp, pi));
      if (auto obs = obstruction_certificate(mdp, {pi}); obs && !cert.obstruction) cert.obstruction = obs;
    }
    add("spectral_sampled", "lower", opt.depth,
        spectral_lower_bound_sampled(sampled, opt.depth, opt.samples / 8 + 1, rng));
  }
  if (cert.obstruction) add("obstruction", "lower", 1, g);

  cert.upper_bound = std::numeric_limits<double>::infinity();
  cert.lower_bound = 0.0;
  for (const auto& m : cert.method_trace) {
    if (m.kind == "upper") cert.upper_bound = std::min(cert.upper_bound, m.value);
    if (m.kind == "lower") cert.lower_bound = std::max(cert.lower_bound, m.value);
  }
  cert.upper_bound = std::min(cert.upper_bound, g);
  // Eigenvalues of defective products are only accurate to about eps^(1/k).
  if (cert.lower_bound > cert.upper_bound) {
    std::ostringstream os;
    os << "spectral lower bound " << cert.lower_bound << " clipped to upper bound (eigenvalue rounding)";
    cert.notes.push_back(os.str());
    cert.lower_bound = cert.upper_bound;
  }

  if (cert.upper_bound < g - kVerdictSlack)
    cert.strict = Strictness::kProvenStrict;
  else if (cert.lower_bound >= g - kVerdictSlack)
    cert.strict = Strictness::kProvenNotStrict;
  else
    cert.strict = Strictness::kUndetermined;
  return cert;
}

}  // namespace qvigeom

#pragma once

// File formats: MDP documents, Q0 documents, trajectory CSVs, run manifests
// and the analyze report.  States, actions and policies are written 1-based.

#include "qvigeom/geometry.hpp"
#include "qvigeom/jsr.hpp"
#include "qvigeom/mdp.hpp"
#include "qvigeom/solver.hpp"
#include "qvigeom/trajectory.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qvigeom {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kReportSchema = "qvigeom.analyze.v1";
inline constexpr const char* kTrajectorySchema = "qvigeom.trajectory.v1";
inline constexpr const char* kManifestSchema = "qvigeom.manifest.v1";

using Json = nlohmann::ordered_json;

/// File missing or unreadable.
class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed document.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write: " + path);
  out << content;
}

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("parse error in " + origin + ": " + e.what());
  }
}

// --- MDP documents ---------------------------------------------------------

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError("parse error: " + what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError("shape mismatch: ragged rows in " + what);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError("parse error: non-numeric entry in " + what);
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline MdpSpec mdp_spec_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("parse error: MDP document must be a JSON object");
  for (const char* key : {"gamma", "num_states", "num_actions", "transitions", "rewards"})
    if (!j.contains(key)) throw ParseError(std::string("parse error: missing field '") + key + "'");
  MdpSpec spec;
  try {
    spec.name = j.value("name", std::string{});
    spec.gamma = j.at("gamma").get<double>();
    const auto ns = j.at("num_states").get<long long>();
    const auto na = j.at("num_actions").get<long long>();
    if (ns < 1 || na < 1) throw ValidationError("num_states and num_actions must be >= 1");
    spec.num_states = static_cast<std::size_t>(ns);
    spec.num_actions = static_cast<std::size_t>(na);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("parse error: ") + e.what());
  }
  const Json& tr = j.at("transitions");
  if (!tr.is_array()) throw ParseError("parse error: transitions must be an array [a][s][s']");
  for (std::size_t a = 0; a < tr.size(); ++a)
    spec.transitions.push_back(matrix_from_json(tr[a], "transitions[" + std::to_string(a + 1) + "]"));
  spec.rewards = matrix_from_json(j.at("rewards"), "rewards");
  return spec;
}

inline Json mdp_to_json(const MdpSpec& spec) {
  Json j;
  j["name"] = spec.name;
  j["gamma"] = spec.gamma;
  j["num_states"] = spec.num_states;
  j["num_actions"] = spec.num_actions;
  Json tr = Json::array();
  for (const auto& p : spec.transitions) tr.push_back(matrix_to_json(p));
  j["transitions"] = std::move(tr);
  j["rewards"] = matrix_to_json(spec.rewards);
  return j;
}

inline Mdp load_mdp(const std::string& path, bool renormalize = false) {
  return Mdp::validate(mdp_spec_from_json(parse_json(read_file(path), path)), renormalize);
}

/// The toy example exactly as printed: every probability and reward is
/// written with the printed digits.
inline std::string toy3x2_document() {
  return R"({
  "name": "toy3x2",
  "gamma": 0.95,
  "num_states": 3,
  "num_actions": 2,
  "transitions": [
    [[0.7, 0.2, 0.1],
     [0.2, 0.6, 0.2],
     [0.1, 0.3, 0.6]],
    [[0.2, 0.5, 0.3],
     [0.4, 0.3, 0.3],
     [0.3, 0.3, 0.4]]
  ],
  "rewards": [
    [1.0, 0.2],
    [0.6, 0.0],
    [1.2, 0.3]
  ]
}
)";
}

// --- Q0 documents ----------------------------------------------------------

/// {"q": [[Q(1,1), ..., Q(1,|A|)], ...]} as an (s, a) table, or
/// {"values": [...]} flat in action-major order.
inline QVector q_from_json(const Json& j, std::size_t num_states, std::size_t num_actions) {
  const auto n = static_cast<Eigen::Index>(num_states * num_actions);
  QVector q(n);
  if (j.contains("q")) {
    const Matrix t = matrix_from_json(j.at("q"), "q");
    if (t.rows() != static_cast<Eigen::Index>(num_states) || t.cols() != static_cast<Eigen::Index>(num_actions))
      throw ValidationError("shape mismatch: q table must be num_states x num_actions");
    for (std::size_t s = 0; s < num_states; ++s)
      for (std::size_t a = 0; a < num_actions; ++a)
        q(static_cast<Eigen::Index>(q_index(s, a, num_states))) =
            t(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    return q;
  }
  if (j.contains("values")) {
    const Json& v = j.at("values");
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != n)
      throw ValidationError("shape mismatch: values must have num_states * num_actions entries");
    for (Eigen::Index i = 0; i < n; ++i) q(i) = v[static_cast<std::size_t>(i)].get<double>();
    return q;
  }
  throw ParseError("parse error: Q0 document needs a 'q' table or a 'values' array");
}

inline Json q_table_json(const QVector& q, std::size_t num_states, std::size_t num_actions) {
  Json out = Json::array();
  for (std::size_t s = 0; s < num_states; ++s) {
    Json row = Json::array();
    for (std::size_t a = 0; a < num_actions; ++a) row.push_back(q(static_cast<Eigen::Index>(q_index(s, a, num_states))));
    out.push_back(std::move(row));
  }
  return out;
}

// --- trajectory CSV --------------------------------------------------------

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline constexpr const char* kCsvHeader =
    "k,inf_err,dist2_x1,distinf_x1,alpha,poss_flag,tube_flag,witness_residual,u,v,p,q";

/// One comment line carrying the schema, the header, then one row per record.
inline std::string trajectory_csv(const std::vector<TrajectoryRecord>& records) {
  std::string out = std::string("# schema=") + kTrajectorySchema + "\n" + kCsvHeader + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.k);
    for (double x : {r.inf_err, r.dist2_x1, r.distinf_x1, r.alpha}) out += "," + format_g17(x);
    out += r.poss_flag ? ",1" : ",0";
    out += r.tube_flag ? ",1" : ",0";
    out += ",";
    if (r.witness_residual) out += format_g17(*r.witness_residual);
    for (double x : {r.u, r.v, r.p, r.q}) out += "," + format_g17(x);
    out += "\n";
  }
  return out;
}

// --- JSON for library types ------------------------------------------------

inline Json one_based(const std::vector<std::size_t>& v) {
  Json out = Json::array();
  for (std::size_t x : v) out.push_back(x + 1);
  return out;
}

inline std::vector<std::size_t> zero_based(const Json& j) {
  std::vector<std::size_t> out;
  for (const auto& x : j) {
    const auto v = x.get<long long>();
    if (v < 1) throw ParseError("parse error: 1-based index expected");
    out.push_back(static_cast<std::size_t>(v - 1));
  }
  return out;
}

inline Json vec_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Vector vec_from_json(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

template <typename T>
Json opt_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

inline Json to_json(const OptimalityReport& r) {
  Json j;
  j["q_star"] = vec_json(r.q_star);
  j["q_star_table"] = q_table_json(r.q_star, r.num_states, r.num_actions);
  j["v_star"] = vec_json(r.v_star);
  Json phi = Json::array();
  for (const auto& s : r.phi_star) phi.push_back(one_based(s));
  j["phi_star"] = std::move(phi);
  j["s_sep"] = one_based(r.s_sep);
  j["delta_bar_per_state"] = r.delta_bar_per_state;
  j["delta_bar"] = opt_json(r.delta_bar);
  j["num_states"] = r.num_states;
  j["num_actions"] = r.num_actions;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  j["tol"] = r.tol;
  j["tol_opt"] = r.tol_opt;
  j["warnings"] = r.warnings;
  return j;
}

inline OptimalityReport optimality_from_json(const Json& j) {
  OptimalityReport r;
  r.q_star = vec_from_json(j.at("q_star"));
  r.v_star = vec_from_json(j.at("v_star"));
  for (const auto& s : j.at("phi_star")) r.phi_star.push_back(zero_based(s));
  r.s_sep = zero_based(j.at("s_sep"));
  r.delta_bar_per_state = j.at("delta_bar_per_state").get<std::vector<double>>();
  r.delta_bar = opt_from<double>(j, "delta_bar");
  r.num_states = j.at("num_states").get<std::size_t>();
  r.num_actions = j.at("num_actions").get<std::size_t>();
  r.iterations = j.at("iterations").get<std::size_t>();
  r.residual = j.at("residual").get<double>();
  r.tol = j.at("tol").get<double>();
  r.tol_opt = j.at("tol_opt").get<double>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline Strictness strictness_from(const std::string& s) {
  if (s == "proven-strict") return Strictness::kProvenStrict;
  if (s == "proven-not-strict") return Strictness::kProvenNotStrict;
  if (s == "undetermined") return Strictness::kUndetermined;
  throw ParseError("parse error: unknown strictness '" + s + "'");
}

inline Json to_json(const JsrCertificate& c) {
  Json j;
  j["family_label"] = c.family_label;
  j["family_size"] = c.family_size;
  j["depth"] = c.depth;
  j["depth_used"] = c.depth_used;
  j["upper_bound"] = c.upper_bound;
  j["lower_bound"] = c.lower_bound;
  j["gamma"] = c.gamma;
  j["strict"] = to_string(c.strict);
  Json trace = Json::array();
  for (const auto& m : c.method_trace)
    trace.push_back({{"method", m.method}, {"kind", m.kind}, {"depth", m.depth}, {"value", m.value}});
  j["method_trace"] = std::move(trace);
  if (c.obstruction)
    j["obstruction"] = {{"policy", one_based(c.obstruction->policy.actions)}, {"reason", c.obstruction->reason}};
  else
    j["obstruction"] = nullptr;
  if (c.scrambling)
    j["scrambling"] = {{"all_scrambling", c.scrambling->all_scrambling},
                       {"eta", c.scrambling->eta},
                       {"max_tau", c.scrambling->max_tau},
                       {"bound", c.scrambling->bound},
                       {"depth", c.scrambling->depth}};
  else
    j["scrambling"] = nullptr;
  if (c.lyapunov)
    j["lyapunov"] = {{"eta", c.lyapunov->eta},   {"depth", c.lyapunov->depth}, {"beta_eps", c.lyapunov->beta_eps},
                     {"C0", c.lyapunov->c0},     {"C_eps", c.lyapunov->c_big}, {"c_eps", c.lyapunov->c_eps}};
  else
    j["lyapunov"] = nullptr;
  j["notes"] = c.notes;
  return j;
}

inline JsrCertificate certificate_from_json(const Json& j) {
  JsrCertificate c;
  c.family_label = j.at("family_label").get<std::string>();
  c.family_size = j.at("family_size").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.depth_used = j.at("depth_used").get<std::size_t>();
  c.upper_bound = j.at("upper_bound").get<double>();
  c.lower_bound = j.at("lower_bound").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.strict = strictness_from(j.at("strict").get<std::string>());
  for (const auto& m : j.at("method_trace"))
    c.method_trace.push_back({m.at("method").get<std::string>(), m.at("kind").get<std::string>(),
                              m.at("depth").get<std::size_t>(), m.at("value").get<double>()});
  if (!j.at("obstruction").is_null())
    c.obstruction = Obstruction{DetPolicy{zero_based(j.at("obstruction").at("policy"))},
                                j.at("obstruction").at("reason").get<std::string>()};
  if (const Json& s = j.at("scrambling"); !s.is_null())
    c.scrambling = ScramblingCertificate{s.at("all_scrambling").get<bool>(), s.at("eta").get<double>(),
                                         s.at("max_tau").get<double>(), s.at("bound").get<double>(),
                                         s.at("depth").get<std::size_t>()};
  if (const Json& l = j.at("lyapunov"); !l.is_null())
    c.lyapunov = LyapunovConstants{l.at("eta").get<double>(), l.at("depth").get<std::size_t>(),
                                   l.at("beta_eps").get<double>(), l.at("C0").get<double>(),
                                   l.at("C_eps").get<double>(), l.at("c_eps").get<double>()};
  c.notes = j.at("notes").get<std::vector<std::string>>();
  return c;
}

// --- analyze report ----------------------------------------------------------

struct AnalyzeConfig {
  std::size_t depth = 3;
  double delta_frac = 0.4;
  double tol = 1e-10;
  double cap = 4096;
  std::uint64_t seed = 20240607;
  std::string q0_source;  // "paper", "zero" or a file path
};

struct MdpSummary {
  std::string name;
  double gamma = 0.0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
};

struct TubeSummary {
  double fraction = 0.0;
  double delta = 0.0;
  double delta_bar = 0.0;
};

struct Horizons {
  double inf_err0 = 0.0;
  double dist2_0 = 0.0;
  std::optional<long long> k_basic;
  std::optional<long long> k_id;
  std::optional<double> c_eps;
  std::optional<double> beta_eps;
};

struct AnalyzeReport {
  std::string schema = kReportSchema;
  std::string version = kVersion;
  AnalyzeConfig config;
  MdpSummary mdp;
  OptimalityReport optimality;
  std::optional<TubeSummary> tube;
  std::optional<double> lambda2;        // |lambda_2(P Pi^{pi*})|, unique optimal policy only
  std::optional<double> gamma_lambda2;  // spectral radius of the optimal restricted matrix
  JsrCertificate full;
  JsrCertificate optimal;
  OverlapBounds overlap;
  std::string obstruction_verdict;  // "none" or the reason, for the full family
  Horizons horizons;
  std::string plane_basis;
  std::optional<double> strip_half_width_v;
  std::vector<std::string> warnings;
};

inline Json to_json(const AnalyzeReport& r) {
  Json j;
  j["schema"] = r.schema;
  j["version"] = r.version;
  j["config"] = {{"depth", r.config.depth},       {"delta_frac", r.config.delta_frac}, {"tol", r.config.tol},
                 {"cap", r.config.cap},           {"seed", r.config.seed},             {"q0_source", r.config.q0_source}};
  j["mdp"] = {{"name", r.mdp.name},
              {"gamma", r.mdp.gamma},
              {"num_states", r.mdp.num_states},
              {"num_actions", r.mdp.num_actions}};
  j["optimality"] = to_json(r.optimality);
  if (r.tube)
    j["tube"] = {{"fraction", r.tube->fraction}, {"delta", r.tube->delta}, {"delta_bar", r.tube->delta_bar}};
  else
    j["tube"] = nullptr;
  j["lambda2"] = opt_json(r.lambda2);
  j["gamma_lambda2"] = opt_json(r.gamma_lambda2);
  j["certificates"] = {{"full", to_json(r.full)}, {"optimal", to_json(r.optimal)}};
  j["overlap"] = {{"p_min", r.overlap.p_min}, {"eps_doeblin", r.overlap.eps_doeblin}};
  j["obstruction"] = r.obstruction_verdict;
  j["horizons"] = {{"inf_err0", r.horizons.inf_err0}, {"dist2_0", r.horizons.dist2_0},
                   {"k_basic", opt_json(r.horizons.k_basic)}, {"k_id", opt_json(r.horizons.k_id)},
                   {"c_eps", opt_json(r.horizons.c_eps)},     {"beta_eps", opt_json(r.horizons.beta_eps)}};
  j["plane_basis"] = r.plane_basis;
  j["strip_half_width_v"] = opt_json(r.strip_half_width_v);
  j["warnings"] = r.warnings;
  return j;
}

inline AnalyzeReport analyze_report_from_json(const Json& j) {
  AnalyzeReport r;
  try {
    r.schema = j.at("schema").get<std::string>();
    if (r.schema != kReportSchema) throw ParseError("parse error: unsupported report schema " + r.schema);
    r.version = j.at("version").get<std::string>();
    const Json& c = j.at("config");
    r.config = {c.at("depth").get<std::size_t>(), c.at("delta_frac").get<double>(), c.at("tol").get<double>(),
                c.at("cap").get<double>(),        c.at("seed").get<std::uint64_t>(), c.at("q0_source").get<std::string>()};
    const Json& m = j.at("mdp");
    r.mdp = {m.at("name").get<std::string>(), m.at("gamma").get<double>(), m.at("num_states").get<std::size_t>(),
             m.at("num_actions").get<std::size_t>()};
    r.optimality = optimality_from_json(j.at("optimality"));
    if (const Json& t = j.at("tube"); !t.is_null())
      r.tube = TubeSummary{t.at("fraction").get<double>(), t.at("delta").get<double>(), t.at("delta_bar").get<double>()};
    r.lambda2 = opt_from<double>(j, "lambda2");
    r.gamma_lambda2 = opt_from<double>(j, "gamma_lambda2");
    r.full = certificate_from_json(j.at("certificates").at("full"));
    r.optimal = certificate_from_json(j.at("certificates").at("optimal"));
    r.overlap = {j.at("overlap").at("p_min").get<double>(), j.at("overlap").at("eps_doeblin").get<double>()};
    r.obstruction_verdict = j.at("obstruction").get<std::string>();
    const Json& h = j.at("horizons");
    r.horizons = {h.at("inf_err0").get<double>(), h.at("dist2_0").get<double>(), opt_from<long long>(h, "k_basic"),
                  opt_from<long long>(h, "k_id"), opt_from<double>(h, "c_eps"), opt_from<double>(h, "beta_eps")};
    r.plane_basis = j.at("plane_basis").get<std::string>();
    r.strip_half_width_v = opt_from<double>(j, "strip_half_width_v");
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("parse error: ") + e.what());
  }
  return r;
}

}  // namespace qvigeom

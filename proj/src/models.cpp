#include "qtb/models.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qtb/liouvillian.hpp"
#include "qtb/statistics.hpp"

namespace qtb {

namespace {

using nlohmann::json;

Matrix basis_op(Eigen::Index d, Eigen::Index m, Eigen::Index n) {
  Matrix op = Matrix::Zero(d, d);
  op(m, n) = 1.0;
  return op;
}

void require_finite_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw Error(std::string("maser parameter ") + name + " must be finite and >= 0");
  }
}

// --- JSON model format ---------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error("model" + path + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) fail(path, std::string("missing field '") + key + "'");
  return obj.at(key);
}

double read_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "non-finite number");
  return v;
}

Matrix read_matrix(const json& j, Eigen::Index d, const std::string& path) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != d) {
    fail(path, "expected " + std::to_string(d) + " rows");
  }
  Matrix m(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
      fail(rp, "expected " + std::to_string(d) + " entries");
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      const std::string ep = rp + "[" + std::to_string(c) + "]";
      const json& e = row[static_cast<std::size_t>(c)];
      if (!e.is_array() || e.size() != 2) fail(ep, "expected [re, im] pair");
      m(r, c) = cplx(read_number(e[0], ep + "[0]"), read_number(e[1], ep + "[1]"));
    }
  }
  return m;
}

json write_matrix(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void MaserParams::validate() const {
  require_finite_nonneg(gamma_h, "gamma_h");
  require_finite_nonneg(gamma_c, "gamma_c");
  require_finite_nonneg(n_h, "n_h");
  require_finite_nonneg(n_c, "n_c");
  if (!std::isfinite(omega)) throw Error("maser parameter omega must be finite");
  if (!std::isfinite(delta)) throw Error("maser parameter delta must be finite");
}

OpenSystem build_maser(const MaserParams& p, std::vector<std::string>* notes) {
  p.validate();
  constexpr Eigen::Index d = 3;
  Matrix h = -p.delta * basis_op(d, 1, 1) + p.omega * (basis_op(d, 0, 1) + basis_op(d, 1, 0));

  struct Channel {
    int id;
    double rate;
    Eigen::Index to;
    Eigen::Index from;
  };
  const Channel channels[] = {
      {1, p.gamma_h * p.n_h, 2, 0},
      {2, p.gamma_h * (p.n_h + 1.0), 0, 2},
      {3, p.gamma_c * p.n_c, 2, 1},
      {4, p.gamma_c * (p.n_c + 1.0), 1, 2},
  };
  std::vector<JumpOperator> jumps;
  bool dropped = false;
  for (const auto& ch : channels) {
    const bool absorption = ch.id == 1 || ch.id == 3;
    const double occupation = ch.id <= 2 ? p.n_h : p.n_c;
    if (absorption && occupation == 0.0) {
      dropped = true;
      if (notes) {
        notes->push_back("channel " + std::to_string(ch.id) +
                         " dropped: zero occupation makes it vanish; pairing disabled");
      }
      continue;
    }
    jumps.emplace_back(ch.id, std::sqrt(ch.rate) * basis_op(d, ch.to, ch.from));
  }
  if (dropped) return OpenSystem(HermitianOperator(h), std::move(jumps));

  const double ds_h = std::log(p.n_h / (p.n_h + 1.0));
  const double ds_c = std::log(p.n_c / (p.n_c + 1.0));
  DetailedBalancePairing pairing({{1, 2, ds_h}, {2, 1, -ds_h}, {3, 4, ds_c}, {4, 3, -ds_c}});
  return OpenSystem(HermitianOperator(h), std::move(jumps), std::move(pairing));
}

CountingVector maser_cycle_current() {
  return CountingVector({{1, 1.0}, {2, -1.0}, {3, -1.0}, {4, 1.0}});
}

double bath_temperature(double omega, double occupation) {
  if (!(omega > 0.0) || !(occupation > 0.0)) {
    throw Error("bath_temperature: energy and occupation must be positive");
  }
  return omega / std::log1p(1.0 / occupation);
}

HeatEngine maser_engine(const MaserParams& p, double omega_h, double omega_c) {
  HeatEngine e{build_maser(p),
               CountingVector({{1, omega_h}, {2, -omega_h}, {3, 0.0}, {4, 0.0}}),
               CountingVector({{1, 0.0}, {2, 0.0}, {3, -omega_c}, {4, omega_c}}),
               bath_temperature(omega_h, p.n_h), bath_temperature(omega_c, p.n_c)};
  return e;
}

std::vector<EngineScanPoint> scan_maser_engine(const MaserParams& base, double omega_h,
                                               double omega_c, const std::vector<double>& deltas,
                                               double tau) {
  std::vector<EngineScanPoint> out;
  for (double delta : deltas) {
    MaserParams p = base;
    p.delta = delta;
    const HeatEngine e = maser_engine(p, omega_h, omega_c);
    const LiouvillianBundle b(e.system);
    EngineScanPoint pt;
    pt.delta = delta;
    const double q_hot = mean_observable(b, e.heat_hot, tau);
    const double q_cold = mean_observable(b, e.heat_cold, tau);
    pt.power = (q_hot - q_cold) / tau;
    pt.efficiency = q_hot != 0.0 ? pt.power * tau / q_hot : 0.0;
    pt.carnot = 1.0 - e.t_cold / e.t_hot;
    pt.engine_regime = pt.power > 0.0 && pt.efficiency > 0.0 && pt.efficiency < pt.carnot;
    out.push_back(pt);
  }
  return out;
}

void ClassicalChain::validate() const {
  if (rates.rows() != rates.cols() || rates.rows() < 1) {
    throw Error("classical chain: rate matrix must be square and nonempty");
  }
  for (Eigen::Index m = 0; m < dim(); ++m) {
    for (Eigen::Index n = 0; n < dim(); ++n) {
      if (m == n) continue;
      if (!std::isfinite(rates(m, n)) || rates(m, n) < 0.0) {
        throw Error("classical chain: rates must be finite and >= 0");
      }
    }
  }
  if (entropy && (entropy->rows() != dim() || entropy->cols() != dim())) {
    throw Error("classical chain: entropy matrix has the wrong shape");
  }
  if (!irreducible()) throw Error("classical chain is reducible (no unique stationary distribution)");
}

bool ClassicalChain::irreducible() const {
  const auto d = dim();
  // Strong connectivity: every state reachable from 0 forward and backward.
  for (int direction = 0; direction < 2; ++direction) {
    std::vector<bool> seen(static_cast<std::size_t>(d), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (Eigen::Index u = 0; u < d; ++u) {
        const double w = direction == 0 ? rates(u, v) : rates(v, u);
        if (u != v && w > 0.0 && !seen[static_cast<std::size_t>(u)]) {
          seen[static_cast<std::size_t>(u)] = true;
          stack.push_back(u);
        }
      }
    }
    for (bool s : seen) {
      if (!s) return false;
    }
  }
  return true;
}

std::vector<std::pair<int, int>> classical_edges(const ClassicalChain& chain) {
  std::vector<std::pair<int, int>> edges;
  for (Eigen::Index m = 0; m < chain.dim(); ++m) {
    for (Eigen::Index n = 0; n < chain.dim(); ++n) {
      if (m != n && chain.rates(m, n) > 0.0) {
        edges.emplace_back(static_cast<int>(m), static_cast<int>(n));
      }
    }
  }
  return edges;
}

OpenSystem embed_classical(const ClassicalChain& chain, bool with_pairing) {
  chain.validate();
  const auto d = chain.dim();
  const auto edges = classical_edges(chain);
  std::vector<JumpOperator> jumps;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [m, n] = edges[i];
    jumps.emplace_back(static_cast<int>(i + 1), std::sqrt(chain.rates(m, n)) * basis_op(d, m, n));
  }
  HermitianOperator h(Matrix::Zero(d, d));
  if (!with_pairing) return OpenSystem(std::move(h), std::move(jumps));

  std::vector<PairEntry> entries;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [m, n] = edges[i];
    if (!(chain.rates(n, m) > 0.0)) {
      throw Error("classical chain: edge " + std::to_string(n) + "->" + std::to_string(m) +
                  " has no reverse; local detailed balance is impossible");
    }
    std::size_t partner = 0;
    for (std::size_t j = 0; j < edges.size(); ++j) {
      if (edges[j].first == n && edges[j].second == m) partner = j;
    }
    const double ds = chain.entropy ? (*chain.entropy)(m, n)
                                    : std::log(chain.rates(m, n) / chain.rates(n, m));
    entries.push_back({static_cast<int>(i + 1), static_cast<int>(partner + 1), ds});
  }
  return OpenSystem(std::move(h), std::move(jumps), DetailedBalancePairing(std::move(entries)));
}

ClassicalChain random_chain(Eigen::Index dim, std::uint64_t seed, double lo, double hi) {
  if (dim < 1) throw Error("random_chain: dim must be >= 1");
  if (!(lo > 0.0 && hi >= lo)) throw Error("random_chain: need 0 < lo <= hi");
  std::mt19937_64 eng(seed);
  ClassicalChain chain;
  chain.rates = RealMatrix::Zero(dim, dim);
  for (Eigen::Index m = 0; m < dim; ++m) {
    for (Eigen::Index n = 0; n < dim; ++n) {
      if (m == n) continue;
      const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
      chain.rates(m, n) = lo + (hi - lo) * u;
    }
  }
  return chain;
}

HeatEngine classical_engine(const ClassicalEngineParams& p) {
  if (!(p.omega_h > 0.0 && p.omega_c > 0.0 && p.n_h > 0.0 && p.n_c > 0.0 && p.k_h > 0.0 &&
        p.k_c > 0.0 && p.k_w > 0.0)) {
    throw Error("classical engine: all parameters must be positive");
  }
  ClassicalChain chain;
  chain.rates = RealMatrix::Zero(3, 3);
  chain.rates(2, 0) = p.k_h * p.n_h;          // hot absorption 0 -> 2
  chain.rates(0, 2) = p.k_h * (p.n_h + 1.0);  // hot emission 2 -> 0
  chain.rates(2, 1) = p.k_c * p.n_c;          // cold absorption 1 -> 2
  chain.rates(1, 2) = p.k_c * (p.n_c + 1.0);  // cold emission 2 -> 1
  chain.rates(0, 1) = p.k_w;
  chain.rates(1, 0) = p.k_w;

  OpenSystem sys = embed_classical(chain);
  const auto edges = classical_edges(chain);
  std::map<int, double> hot;
  std::map<int, double> cold;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    const auto [m, n] = edges[i];
    hot[id] = 0.0;
    cold[id] = 0.0;
    if (m == 2 && n == 0) hot[id] = p.omega_h;
    if (m == 0 && n == 2) hot[id] = -p.omega_h;
    if (m == 1 && n == 2) cold[id] = p.omega_c;
    if (m == 2 && n == 1) cold[id] = -p.omega_c;
  }
  return {std::move(sys), CountingVector(std::move(hot)), CountingVector(std::move(cold)),
          bath_temperature(p.omega_h, p.n_h), bath_temperature(p.omega_c, p.n_c)};
}

OpenSystem parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("model: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("", "top level must be an object");
  const json& format = field(doc, "format", "");
  if (!format.is_number_integer() || format.get<int>() != 1) fail(".format", "unsupported format (expected 1)");
  const json& dim_j = field(doc, "dim", "");
  if (!dim_j.is_number_integer() || dim_j.get<long long>() < 1) fail(".dim", "expected a positive integer");
  const auto d = static_cast<Eigen::Index>(dim_j.get<long long>());

  const Matrix h = read_matrix(field(doc, "hamiltonian", ""), d, ".hamiltonian");
  const double herm = hermiticity_residual(h);
  if (herm > kTol.hermiticity) {
    std::ostringstream os;
    os << "matrix is not Hermitian (residual " << herm << ")";
    fail(".hamiltonian", os.str());
  }

  const json& jumps_j = field(doc, "jumps", "");
  if (!jumps_j.is_array()) fail(".jumps", "expected an array");
  std::vector<JumpOperator> jumps;
  for (std::size_t i = 0; i < jumps_j.size(); ++i) {
    const std::string path = ".jumps[" + std::to_string(i) + "]";
    const json& jj = jumps_j[i];
    if (!jj.is_object()) fail(path, "expected an object");
    const json& id = field(jj, "id", path);
    if (!id.is_number_integer() || id.get<long long>() < 1) fail(path + ".id", "expected an integer >= 1");
    const Matrix m = read_matrix(field(jj, "matrix", path), d, path + ".matrix");
    jumps.emplace_back(id.get<int>(), m);
  }

  std::optional<DetailedBalancePairing> pairing;
  if (doc.contains("pairing") && !doc.at("pairing").is_null()) {
    const json& pj = doc.at("pairing");
    if (!pj.is_array()) fail(".pairing", "expected an array");
    std::vector<PairEntry> entries;
    for (std::size_t i = 0; i < pj.size(); ++i) {
      const std::string path = ".pairing[" + std::to_string(i) + "]";
      const json& e = pj[i];
      if (!e.is_object()) fail(path, "expected an object");
      const json& k = field(e, "k", path);
      const json& ks = field(e, "k_star", path);
      if (!k.is_number_integer()) fail(path + ".k", "expected an integer");
      if (!ks.is_number_integer()) fail(path + ".k_star", "expected an integer");
      entries.push_back({k.get<int>(), ks.get<int>(), read_number(field(e, "ds", path), path + ".ds")});
    }
    try {
      pairing = DetailedBalancePairing(std::move(entries));
    } catch (const Error& err) {
      fail(".pairing", err.what());
    }
  }
  try {
    OpenSystem sys(HermitianOperator(h), std::move(jumps), std::move(pairing));
    const auto report = validate_system(sys);
    if (!report.passed) fail("", report.failures.empty() ? "validation failed" : report.failures.front());
    return sys;
  } catch (const Error& err) {
    const std::string what = err.what();
    if (what.rfind("model", 0) == 0) throw;
    fail("", what);
  }
}

std::string serialize_model(const OpenSystem& sys) {
  json doc;
  doc["format"] = 1;
  doc["dim"] = sys.dim();
  doc["hamiltonian"] = write_matrix(sys.hamiltonian().matrix());
  json jumps = json::array();
  for (const auto& j : sys.jumps()) jumps.push_back({{"id", j.channel_id}, {"matrix", write_matrix(j.entries)}});
  doc["jumps"] = std::move(jumps);
  if (sys.pairing()) {
    json pairs = json::array();
    for (const auto& e : sys.pairing()->entries()) {
      pairs.push_back({{"k", e.k}, {"k_star", e.k_star}, {"ds", e.ds}});
    }
    doc["pairing"] = std::move(pairs);
  }
  return doc.dump(2) + "\n";
}

OpenSystem load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("model: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

void save_model(const std::string& path, const OpenSystem& sys) {
  std::ofstream out(path);
  if (!out) throw Error("model: cannot write " + path);
  out << serialize_model(sys);
}

}  // namespace qtb

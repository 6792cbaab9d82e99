#include "qtb/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace qtb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_s(double s) { return s == 0.0 ? "0" : "0.5"; }

void require_current(const LiouvillianBundle& b, const CountingVector& c) {
  if (!b.system.pairing()) throw Error("delta_phi requires a detailed-balance pairing");
  if (!c.is_current(b.system)) throw Error("counting vector is not a current (c_k != -c_k*)");
}

// <<1| C |pi>>, the mean current rate.
double mean_rate(const LiouvillianBundle& b, const Matrix& csup) {
  return b.one_vec.dot(csup * b.pi_vec).real();
}

}  // namespace

std::string to_string(BoundName n) {
  switch (n) {
    case BoundName::tkur: return "tkur";
    case BoundName::tkur_classical_form: return "tkur_classical_form";
    case BoundName::iur: return "iur";
    case BoundName::rkur: return "rkur";
    case BoundName::eps_response: return "eps_response";
    case BoundName::power_efficiency: return "power_efficiency";
  }
  return "unknown";
}

bool BoundReport::satisfied() const {
  if (!applicable) return true;
  return slack >= -1e-9 * std::abs(rhs);
}

BoundReport make_report(BoundName name, std::string label, bool upper, double lhs, double rhs) {
  BoundReport r;
  r.name = name;
  r.label = std::move(label);
  r.upper_bound = upper;
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = upper ? rhs - lhs : lhs - rhs;
  return r;
}

double phi_inverse(double y) {
  if (!(y >= 0.0)) throw Error("phi_inverse: argument must be >= 0");
  if (y == 0.0) return 0.0;
  // x tanh x <= min(x^2, x) puts the root above max(sqrt y, y); (y+1) tanh(y+1) > y.
  double lo = std::max(std::sqrt(y), y);
  double hi = y + 1.0;
  if (lo * std::tanh(lo) - y >= 0.0) return lo;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double th = std::tanh(x);
    const double f = x * th - y;
    if (f == 0.0) return x;
    if (f < 0.0) lo = x; else hi = x;
    const double df = th + x * (1.0 - th * th);
    double next = x - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-16 * std::max(1.0, x)) return next;
    x = next;
  }
  return x;
}

double tkur_lower_bound(double sigma, double activity) {
  if (!(activity > 0.0)) throw Error("tkur bound: activity must be positive");
  if (sigma <= 0.0) return kInf;
  const double phi = phi_inverse(sigma / (2.0 * activity));
  return 4.0 * activity / (sigma * sigma) * phi * phi;
}

std::vector<double> tkur_coefficients(const LiouvillianBundle& b) {
  if (!b.system.pairing()) throw Error("tkur coefficients require a detailed-balance pairing");
  const auto t = channel_traffic(b).traffic;
  std::vector<double> ell(t.size(), 0.0);
  for (std::size_t k = 0; k < t.size(); ++k) {
    const std::size_t ks = b.system.partner_index(k);
    if (ks == k) continue;
    const double total = t[k] + t[ks];
    if (!(total > 0.0)) {
      throw Error("dead pair: channels " + std::to_string(b.system.jumps()[k].channel_id) +
                  " and its partner carry no traffic");
    }
    ell[k] = (t[k] - t[ks]) / total;
  }
  return ell;
}

// Same floor as the relative fluctuation: a rate below 1e-12 a is rounding noise.
void require_nonzero_rate(const LiouvillianBundle& b, double rate) {
  const double a = channel_traffic(b).activity;
  if (!(std::abs(rate) > kStatsConfig.mean_tol_factor * a)) {
    throw Error("delta_phi: zero mean current");
  }
}

double delta_phi_finite(const LiouvillianBundle& b, const CountingVector& c,
                        const Propagators& props) {
  require_current(b, c);
  const Matrix csup = counting_superoperator(b.system, c.aligned(b.system));
  const double rate = mean_rate(b, csup);
  require_nonzero_rate(b, rate);
  const Matrix dl = weighted_dissipator(b.system, tkur_coefficients(b));
  // int_0^tau phi_t dt with phi_0 = 0 is K2(tau) D_l |pi>>.
  const Vector integrated = props.K2 * (dl * b.pi_vec);
  const double trace = std::abs(b.one_vec.dot(integrated));
  if (trace > 1e-9 * std::max(1.0, integrated.norm())) {
    throw Error("delta_phi: response operator is not traceless");
  }
  const double response = b.one_vec.dot(csup * integrated).real();
  return response / (props.tau * rate);
}

double delta_phi_asymptotic(const LiouvillianBundle& b, const CountingVector& c) {
  require_current(b, c);
  const Matrix csup = counting_superoperator(b.system, c.aligned(b.system));
  const double rate = mean_rate(b, csup);
  require_nonzero_rate(b, rate);
  const Matrix dl = weighted_dissipator(b.system, tkur_coefficients(b));
  const Vector x = b.group_inverse.apply(dl * b.pi_vec);
  return -b.one_vec.dot(csup * x).real() / rate;
}

double delta_phi(const LiouvillianBundle& b, const CountingVector& c, DeltaMode mode, double tau) {
  if (mode == DeltaMode::asymptotic) return delta_phi_asymptotic(b, c);
  return delta_phi_finite(b, c, integrated_propagators(b.generator.entries, tau));
}

BoundReport check_tkur(const LiouvillianBundle& b, const CountingVector& c,
                       const Propagators& props, const TkurOptions& opt) {
  require_current(b, c);
  const auto rates = thermo_rates(b);
  if (!(rates.sigma > 0.0)) throw Error("tkur: entropy production rate must be positive");
  const auto stats = stats_exact(b, c, props);
  if (!stats.relative_fluctuation) throw Error("tkur: zero mean current");
  const double f = *stats.relative_fluctuation;
  const double d_fin = delta_phi_finite(b, c, props);
  const double d_asy = delta_phi_asymptotic(b, c);
  double delta = opt.mode == DeltaMode::finite ? d_fin : d_asy;
  if (opt.delta_override) delta = *opt.delta_override;
  const double denom = (1.0 + delta) * (1.0 + delta);
  const double lhs = denom > 0.0 ? f / denom : kInf;
  const double rhs = tkur_lower_bound(rates.sigma, rates.activity);

  BoundReport r = make_report(BoundName::tkur, "tkur", false, lhs, rhs);
  r.components = {
      {"sigma", rates.sigma},
      {"a", rates.activity},
      {"mean", stats.mean},
      {"variance", stats.variance},
      {"F", f},
      {"delta_finite", d_fin},
      {"delta_asymptotic", d_asy},
      {"delta_used", delta},
      {"phi_argument", rates.sigma / (2.0 * rates.activity)},
      {"weak_chain", std::max(2.0 / rates.sigma, 1.0 / rates.activity)},
      {"tau", props.tau},
  };
  if (opt.delta_override) r.note = "delta overridden";
  return r;
}

BoundReport tkur_classical_form(const BoundReport& tkur) {
  BoundReport r = make_report(BoundName::tkur_classical_form, "tkur_classical_form", false,
                              tkur.components.at("F"), tkur.rhs);
  r.components = tkur.components;
  r.informational = true;
  r.note = r.slack < 0.0 ? "classical thermo-kinetic bound violated" : "";
  return r;
}

SymmetrizedLiouvillian build_symmetrized(const LiouvillianBundle& b, double s) {
  require_supported_s(s);
  if (!b.pi.full_rank()) throw Error("stationary state not full rank");
  SymmetrizedLiouvillian out;
  out.s = s;
  out.dim = b.dim();
  const DensityOperator& pi = b.pi;
  out.weight = kron(pi.power(s), pi.power(1.0 - s).transpose());
  out.weight_sqrt = kron(pi.power(s / 2.0), pi.power((1.0 - s) / 2.0).transpose());
  out.weight_inv_sqrt = kron(pi.power(-s / 2.0), pi.power(-(1.0 - s) / 2.0).transpose());
  const Matrix weight_inv = kron(pi.power(-s), pi.power(-(1.0 - s)).transpose());
  // L~* = W^{-1} L W is the <.,.>_s adjoint of L~.
  out.matrix = 0.5 * (b.adjoint.entries + weight_inv * b.generator.entries * out.weight);
  out.hermitian = out.weight_sqrt * out.matrix * out.weight_inv_sqrt;
  return out;
}

GapData symmetrized_gap(const SymmetrizedLiouvillian& sym) {
  GapData g;
  g.s = sym.s;
  const double scale = std::max(sym.hermitian.norm(), 1.0);
  g.hermiticity_residual = (sym.hermitian - sym.hermitian.adjoint()).norm() / scale;
  if (g.hermiticity_residual > 1e-10) {
    throw Error("symmetrized generator is not self-adjoint (generator inconsistency)");
  }
  const Matrix herm = 0.5 * (sym.hermitian + sym.hermitian.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
  const auto n = herm.rows();
  g.eigenvalues = es.eigenvalues().reverse();
  g.eigenvectors = es.eigenvectors().rowwise().reverse();
  const Vector ground = sym.weight_sqrt * identity_vec(sym.dim);
  g.kernel_residual = (herm * ground).norm() / ground.norm();
  if (std::abs(g.eigenvalues(0)) > 1e-8 * scale || g.kernel_residual > 1e-8 * scale) {
    throw Error("symmetrized generator: zero mode residual too large (generator inconsistency)");
  }
  if (n < 2) throw Error("symmetrized generator: no decaying mode");
  g.gap = -g.eigenvalues(1);
  return g;
}

GapData symmetrized_gap(const LiouvillianBundle& b, double s) {
  return symmetrized_gap(build_symmetrized(b, s));
}

IurComponents iur_components(const LiouvillianBundle& b, const CountingVector& c, double s) {
  require_supported_s(s);
  if (c.is_zero()) throw Error("iur: counting vector is all zero");
  const auto w = c.aligned(b.system);
  const auto d = b.dim();
  const Matrix& pi = b.pi.matrix();
  IurComponents out;
  out.j1 = Matrix::Zero(d, d);
  out.j2 = Matrix::Zero(d, d);
  out.j_pi = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Matrix& l = b.system.jumps()[k].entries;
    const Matrix ldl = l.adjoint() * l;
    out.j1 += w[k] * ldl;
    out.j2 += w[k] * w[k] * ldl;
    out.j_pi += w[k] * (l * pi * l.adjoint());
  }
  out.j1_mean = (out.j1 * pi).trace().real();
  out.j2_mean = (out.j2 * pi).trace().real();
  const double tr_jpi = out.j_pi.trace().real();
  if (std::abs(out.j1_mean - tr_jpi) > 1e-12 * std::max(1.0, std::abs(tr_jpi))) {
    throw Error("iur: <J1,pi> and tr J_pi disagree");
  }
  if (!(out.j2_mean > 0.0)) throw Error("iur: <J2,pi> must be positive");
  const Matrix id = Matrix::Identity(d, d);
  out.norm_j1bar = norm_s(out.j1 - out.j1_mean * id, b.pi, s);
  const Matrix tilted = b.pi.power(-s) * out.j_pi * b.pi.power(-(1.0 - s));
  out.norm_jpi_term = norm_s(tilted - out.j1_mean * id, b.pi, s);
  out.kappa = out.norm_j1bar * out.norm_jpi_term / out.j2_mean;
  return out;
}

BoundReport check_iur(const LiouvillianBundle& b, const CountingVector& c, const Propagators& props,
                      const GapData& gap) {
  const auto comp = iur_components(b, c, gap.s);
  if (comp.j1_mean == 0.0) throw Error("iur: zero mean rate");
  const double tau = props.tau;
  const double var = variance_exact(b, c, props);
  const double mean = tau * comp.j1_mean;
  const double f = tau * var / (mean * mean);
  const double inst = comp.j2_mean / (comp.j1_mean * comp.j1_mean);
  const double g = gap.gap;
  const double rhs = inst * (1.0 + 2.0 * comp.kappa / g);
  BoundReport r = make_report(BoundName::iur, "iur_s" + format_s(gap.s), true, f, rhs);
  const double var_bound = tau * comp.j2_mean + 2.0 * (std::exp(-g * tau) + g * tau - 1.0) /
                                                    (g * g) * comp.norm_j1bar * comp.norm_jpi_term;
  r.components = {
      {"s", gap.s},
      {"F", f},
      {"mean", mean},
      {"variance", var},
      {"instantaneous_ratio", inst},
      {"kappa", comp.kappa},
      {"gap", g},
      {"j1_mean", comp.j1_mean},
      {"j2_mean", comp.j2_mean},
      {"variance_bound", var_bound},
      {"variance_bound_slack", var_bound - var},
      {"tau", tau},
  };
  return r;
}

BoundReport check_iur(const LiouvillianBundle& b, const CountingVector& c, const Propagators& props,
                      double s) {
  return check_iur(b, c, props, symmetrized_gap(b, s));
}

ResponseKernel::ResponseKernel(const LiouvillianBundle& b, const Propagators& props,
                               const ResponseConfig& cfg)
    : tau_(props.tau) {
  const auto& sys = b.system;
  const auto n = static_cast<Eigen::Index>(sys.num_channels());
  const auto traffic = channel_traffic(b).traffic;

  // Row functionals <<1| (L_j (x) L_j^*) = vec(L_j^dagger L_j)^dagger.
  std::vector<Vector> rows;
  for (const auto& j : sys.jumps()) rows.push_back(vectorize(j.entries.adjoint() * j.entries));

  analytic_ = RealMatrix::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vector response = props.K2 * (b.dissipators[k].entries * b.pi_vec);
    for (Eigen::Index j = 0; j < n; ++j) analytic_(j, k) = rows[j].dot(response).real();
    analytic_(k, k) += tau_ * traffic[k];
  }

  // Independent route: central differences of int_0^tau t_j(t) dt = <<1| S_j K1 |pi>>.
  fd_ = RealMatrix::Zero(n, n);
  const double h = cfg.fd_step;
  auto integrated_counts = [&](Eigen::Index k, double shift) {
    std::vector<JumpOperator> jumps = sys.jumps();
    jumps[k].entries *= std::exp(shift / 2.0);
    OpenSystem perturbed(sys.hamiltonian(), jumps);
    const auto gen = build_generator(perturbed);
    const Vector occupation = propagator_and_integral(gen.entries, tau_).second * b.pi_vec;
    RealVector out(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Matrix& l = jumps[j].entries;
      out(j) = vectorize(l.adjoint() * l).dot(occupation).real();
    }
    return out;
  };
  for (Eigen::Index k = 0; k < n; ++k) {
    fd_.col(k) = (integrated_counts(k, h) - integrated_counts(k, -h)) / (2.0 * h);
  }
  const double scale = analytic_.cwiseAbs().maxCoeff();
  disagreement_ = scale > 0.0 ? (analytic_ - fd_).cwiseAbs().maxCoeff() / scale : 0.0;
  if (disagreement_ > cfg.fd_rel_tol) {
    std::ostringstream os;
    os << "response gradient: analytic and finite-difference values disagree (relative "
       << disagreement_ << ")";
    throw Error(os.str());
  }
}

std::vector<double> ResponseKernel::gradient(const std::vector<double>& c) const {
  if (static_cast<Eigen::Index>(c.size()) != analytic_.rows()) {
    throw Error("response gradient: counting vector size mismatch");
  }
  const RealVector cv = Eigen::Map<const RealVector>(c.data(), static_cast<Eigen::Index>(c.size()));
  const RealVector g = analytic_.transpose() * cv;
  return {g.data(), g.data() + g.size()};
}

std::vector<double> response_gradient(const LiouvillianBundle& b, const CountingVector& c,
                                      const Propagators& props) {
  return ResponseKernel(b, props).gradient(c.aligned(b.system));
}

BoundReport check_rkur(const LiouvillianBundle& b, const CountingVector& c,
                       const Propagators& props, const ResponseKernel& kernel) {
  const auto w = c.aligned(b.system);
  const auto grad = kernel.gradient(w);
  double l1 = 0.0;
  for (double g : grad) l1 += std::abs(g);
  const double var = variance_exact(b, w, props);
  const double a = channel_traffic(b).activity;
  double lhs = 0.0;
  if (l1 > 0.0) {
    if (!(var > 0.0)) throw Error("rkur: zero variance");
    lhs = l1 * l1 / var;
  }
  BoundReport r = make_report(BoundName::rkur, "rkur", true, lhs, props.tau * a);
  r.components = {{"gradient_l1", l1}, {"variance", var}, {"a", a}, {"tau", props.tau},
                  {"mean", mean_observable(b, c, props.tau)},
                  {"fd_disagreement", kernel.disagreement()}};
  return r;
}

BoundReport check_eps_response(const LiouvillianBundle& b, const CountingVector& c,
                               const Propagators& props, const ResponseKernel& kernel,
                               const std::vector<double>& omega_prime) {
  const auto w = c.aligned(b.system);
  if (omega_prime.size() != w.size()) throw Error("eps response: omega' size mismatch");
  const auto grad = kernel.gradient(w);
  double d_eps = 0.0;
  double w_max = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    d_eps += omega_prime[k] * grad[k];
    w_max = std::max(w_max, std::abs(omega_prime[k]));
  }
  const double var = variance_exact(b, w, props);
  const double a = channel_traffic(b).activity;
  BoundReport r = make_report(BoundName::eps_response, "eps_response", true, d_eps * d_eps,
                              props.tau * w_max * w_max * var * a);
  r.components = {{"d_eps_mean", d_eps}, {"omega_max", w_max}, {"variance", var}, {"a", a},
                  {"tau", props.tau}};
  return r;
}

double variance_rate_slope(const LiouvillianBundle& b, const std::vector<double>& c,
                           double horizon) {
  const auto p1 = integrated_propagators(b.generator.entries, horizon);
  const auto p2 = integrated_propagators(b.generator.entries, 2.0 * horizon);
  return (variance_exact(b, c, p2) - variance_exact(b, c, p1)) / horizon;
}

BoundReport check_power_efficiency(const LiouvillianBundle& b, const CountingVector& c_hot,
                                   const CountingVector& c_cold, double t_hot, double t_cold,
                                   double tau, const PowerEfficiencyConfig& cfg) {
  if (!(t_hot > t_cold && t_cold > 0.0)) throw Error("power-efficiency: need T_h > T_c > 0");
  if (!(tau > 0.0)) throw Error("power-efficiency: tau must be positive");
  const auto& sys = b.system;
  if (!sys.pairing()) throw Error("power-efficiency: system has no detailed-balance pairing");
  const auto ch = c_hot.aligned(sys);
  const auto cc = c_cold.aligned(sys);
  for (std::size_t k = 0; k < ch.size(); ++k) {
    const double ds = sys.pairing()->ds(sys.jumps()[k].channel_id);
    const double expected = -ch[k] / t_hot + cc[k] / t_cold;
    if (std::abs(ds - expected) > cfg.temperature_tol * std::max(1.0, std::abs(ds))) {
      throw Error("power-efficiency: pairing entropy of channel " +
                  std::to_string(sys.jumps()[k].channel_id) +
                  " is inconsistent with the bath temperatures");
    }
  }

  const double heat_hot = mean_observable(b, c_hot, tau);
  const double heat_cold = mean_observable(b, c_cold, tau);
  const double power = (heat_hot - heat_cold) / tau;
  const double eta_c = 1.0 - t_cold / t_hot;
  const double eta = heat_hot != 0.0 ? power * tau / heat_hot : 0.0;

  BoundReport r;
  r.name = BoundName::power_efficiency;
  r.label = "power_efficiency";
  r.upper_bound = true;
  r.rhs = 0.5;
  r.components = {{"P", power}, {"eta", eta}, {"eta_C", eta_c}, {"T_h", t_hot}, {"T_c", t_cold}};
  if (!(power > 0.0 && eta > 0.0 && eta < eta_c)) {
    r.applicable = false;
    r.note = "inapplicable: not in the engine regime";
    r.slack = 0.0;
    return r;
  }

  std::vector<double> cw(ch.size());
  for (std::size_t k = 0; k < ch.size(); ++k) cw[k] = ch[k] - cc[k];
  const double est = variance_rate_slope(b, cw, cfg.tau0);
  const double est2 = variance_rate_slope(b, cw, 2.0 * cfg.tau0);
  const double change = std::abs(est - est2) / std::abs(est2);
  const double delta_p = delta_phi_asymptotic(b, CountingVector::from_ordered(sys, cw));
  const double lhs = power * eta / (eta_c - eta) * t_cold * (1.0 + delta_p) * (1.0 + delta_p) / est2;
  r.lhs = lhs;
  r.slack = r.rhs - lhs;
  r.components["Delta_P"] = est2;
  r.components["Delta_P_half_horizon"] = est;
  r.components["Delta_P_change"] = change;
  r.components["delta_P"] = delta_p;
  if (change >= cfg.convergence_tol) r.note = "Delta_P slope not converged";
  return r;
}

}  // namespace qtb

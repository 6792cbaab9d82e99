#include "qtb/statistics.hpp"

#include <algorithm>
#include <cmath>

#include "qtb/bounds.hpp"

namespace qtb {

std::string to_string(StatsMethod m) {
  switch (m) {
    case StatsMethod::exact_integral: return "exact_integral";
    case StatsMethod::fcs_numeric: return "fcs_numeric";
    case StatsMethod::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

ChannelTraffic channel_traffic(const LiouvillianBundle& b) {
  ChannelTraffic out;
  const Matrix& pi = b.pi.matrix();
  for (const auto& j : b.system.jumps()) {
    const double t = (j.entries * pi * j.entries.adjoint()).trace().real();
    out.traffic.push_back(t);
    out.activity += t;
  }
  return out;
}

double entropy_production_rate(const LiouvillianBundle& b) {
  const auto& pairing = b.system.pairing();
  if (!pairing) throw Error("sigma undefined without local detailed balance");
  const auto traffic = channel_traffic(b).traffic;
  double sigma = 0.0;
  for (std::size_t k = 0; k < traffic.size(); ++k) {
    sigma += traffic[k] * pairing->ds(b.system.jumps()[k].channel_id);
  }
  if (sigma < -1e-10) throw Error("negative entropy production: generator or pairing is inconsistent");
  return sigma;
}

ThermoRates thermo_rates(const LiouvillianBundle& b) {
  auto ct = channel_traffic(b);
  ThermoRates r;
  r.activity = ct.activity;
  r.traffic = std::move(ct.traffic);
  r.sigma = entropy_production_rate(b);
  return r;
}

double mean_observable(const LiouvillianBundle& b, const CountingVector& c, double tau) {
  const auto w = c.aligned(b.system);
  const auto t = channel_traffic(b).traffic;
  double rate = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) rate += w[k] * t[k];
  return tau * rate;
}

double variance_exact(const LiouvillianBundle& b, const std::vector<double>& c,
                      const Propagators& props, const StatsConfig& cfg) {
  const auto d = b.dim();
  const Matrix& pi = b.pi.matrix();
  Matrix j1 = Matrix::Zero(d, d);
  Matrix jpi = Matrix::Zero(d, d);
  double j2_mean = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] == 0.0) continue;
    const Matrix& l = b.system.jumps()[k].entries;
    const Matrix ldl = l.adjoint() * l;
    j1 += c[k] * ldl;
    jpi += c[k] * (l * pi * l.adjoint());
    j2_mean += c[k] * c[k] * (ldl * pi).trace().real();
  }
  const double j1_mean = (j1 * pi).trace().real();
  const Matrix j1bar = j1 - j1_mean * Matrix::Identity(d, d);
  const Matrix evolved = unvectorize(props.K2 * vectorize(jpi), d);
  const cplx corr = (j1bar * evolved).trace();
  const double var = props.tau * j2_mean + 2.0 * corr.real();
  const double scale = std::max(props.tau * j2_mean, 1e-300);
  if (std::abs(corr.imag()) > 1e-10 * std::max(1.0, scale)) {
    throw Error("variance_exact: correlation term is not real");
  }
  if (var < cfg.variance_floor * scale) {
    throw Error("variance_exact: negative variance (numerical-consistency failure)");
  }
  return std::max(var, 0.0);
}

double variance_exact(const LiouvillianBundle& b, const CountingVector& c, const Propagators& props,
                      const StatsConfig& cfg) {
  return variance_exact(b, c.aligned(b.system), props, cfg);
}

double variance_exact(const LiouvillianBundle& b, const CountingVector& c, double tau,
                      const StatsConfig& cfg) {
  return variance_exact(b, c, integrated_propagators(b.generator.entries, tau), cfg);
}

std::optional<double> relative_fluctuation(double mean, double variance, double tau,
                                           double activity, const StatsConfig& cfg) {
  if (!(std::abs(mean) > cfg.mean_tol_factor * activity * tau)) return std::nullopt;
  return tau * variance / (mean * mean);
}

ObservableStats stats_exact(const LiouvillianBundle& b, const CountingVector& c,
                            const Propagators& props, const StatsConfig& cfg) {
  ObservableStats s;
  s.tau = props.tau;
  s.mean = mean_observable(b, c, props.tau);
  s.variance = variance_exact(b, c, props, cfg);
  s.relative_fluctuation =
      relative_fluctuation(s.mean, s.variance, s.tau, channel_traffic(b).activity, cfg);
  s.method = StatsMethod::exact_integral;
  return s;
}

cplx generating_function(const LiouvillianBundle& b, const CountingVector& c, double tau, double u) {
  const auto tilted = build_tilted(b.system, c, u);
  const Vector evolved = expm(tilted.entries * tau) * b.pi_vec;
  return b.one_vec.dot(evolved);
}

namespace {

// Richardson table over step halvings for a central-difference estimator of
// order h^2. `estimate(h)` returns the raw difference quotient.
template <typename F>
cplx richardson(F&& estimate, double h, int levels) {
  std::vector<cplx> row;
  for (int i = 0; i <= levels; ++i) row.push_back(estimate(h / std::pow(2.0, i)));
  for (int lev = 1; lev <= levels; ++lev) {
    const double f = std::pow(4.0, lev);
    for (int i = levels; i >= lev; --i) row[i] = (f * row[i] - row[i - 1]) / (f - 1.0);
  }
  return row[levels];
}

}  // namespace

FcsMoments moments_fcs(const LiouvillianBundle& b, const CountingVector& c, double tau,
                       const StatsConfig& cfg) {
  if (c.is_zero()) {
    (void)c.aligned(b.system);  // still reject missing channels
    return {};
  }
  const cplx g0 = generating_function(b, c, tau, 0.0);
  auto check = [](cplx z) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      throw Error("moments_fcs: non-finite generating function on the stencil");
    }
    return z;
  };
  auto first = [&](double h) {
    const cplx gp = check(generating_function(b, c, tau, h));
    const cplx gm = check(generating_function(b, c, tau, -h));
    return (gp - gm) / (2.0 * h);
  };
  auto second = [&](double h) {
    const cplx gp = check(generating_function(b, c, tau, h));
    const cplx gm = check(generating_function(b, c, tau, -h));
    return (gp - 2.0 * g0 + gm) / (h * h);
  };
  const cplx d1 = richardson(first, cfg.fcs_step, cfg.fcs_richardson_levels);
  const cplx d2 = richardson(second, cfg.fcs_step, cfg.fcs_richardson_levels);
  // <phi^n> = (-i d/du)^n G
  return {(-cplx(0, 1) * d1).real(), (-d2).real()};
}

double moment_fcs(const LiouvillianBundle& b, const CountingVector& c, double tau, int n,
                  const StatsConfig& cfg) {
  if (n != 1 && n != 2) throw Error("moment_fcs: only n = 1, 2 are supported");
  const auto m = moments_fcs(b, c, tau, cfg);
  return n == 1 ? m.first : m.second;
}

ObservableStats stats_fcs(const LiouvillianBundle& b, const CountingVector& c, double tau,
                          const StatsConfig& cfg) {
  const auto m = moments_fcs(b, c, tau, cfg);
  ObservableStats s;
  s.tau = tau;
  s.mean = m.first;
  s.variance = m.second - m.first * m.first;
  s.relative_fluctuation =
      relative_fluctuation(s.mean, s.variance, tau, channel_traffic(b).activity, cfg);
  s.method = StatsMethod::fcs_numeric;
  return s;
}

QfiTkur qfi_tkur_rate(const LiouvillianBundle& b) {
  const auto ell = tkur_coefficients(b);
  const auto rates = thermo_rates(b);
  QfiTkur q;
  for (std::size_t k = 0; k < ell.size(); ++k) q.rate += ell[k] * ell[k] * rates.traffic[k];
  const double sigma = rates.sigma;
  const double a = rates.activity;
  if (sigma > 0.0) {
    const double phi = phi_inverse(sigma / (2.0 * a));
    q.jensen_bound = sigma * sigma / (4.0 * a) / (phi * phi);
  }
  q.min_bound = std::min(sigma / 2.0, a);
  const double slack = 1e-9 * std::max(q.min_bound, 1e-300);
  q.chain_holds = q.rate <= q.jensen_bound + slack && q.jensen_bound <= q.min_bound + slack;
  return q;
}

double qfi_response_rate(const LiouvillianBundle& b, double eps) {
  return eps * eps * channel_traffic(b).activity;
}

}  // namespace qtb

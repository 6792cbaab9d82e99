#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qtb/core.hpp"
#include "qtb/liouvillian.hpp"

namespace qtb {

enum class StatsMethod { exact_integral, fcs_numeric, monte_carlo };

[[nodiscard]] std::string to_string(StatsMethod m);

struct StatsConfig {
  double fcs_step = 1e-3;           // base step h of the counting-field stencil
  int fcs_richardson_levels = 1;    // h, h/2, ... extrapolation levels
  double mean_tol_factor = 1e-12;   // F is undefined when |mean| <= factor * a * tau
  double variance_floor = -1e-8;    // relative; below this the exact variance is inconsistent
};

inline constexpr StatsConfig kStatsConfig{};

struct ObservableStats {
  double mean = 0.0;
  double variance = 0.0;
  double tau = 0.0;
  std::optional<double> relative_fluctuation;  // F = tau Var / mean^2
  StatsMethod method = StatsMethod::exact_integral;
  std::optional<double> mean_se;
  std::optional<double> variance_se;
};

struct ChannelTraffic {
  std::vector<double> traffic;  // t_k = tr(L_k pi L_k^dagger), aligned with jumps
  double activity = 0.0;        // a = sum_k t_k
};

struct ThermoRates {
  double sigma = 0.0;
  double activity = 0.0;
  std::vector<double> traffic;
};

[[nodiscard]] ChannelTraffic channel_traffic(const LiouvillianBundle& b);

/// sigma = sum_k t_k ds_k. Requires a pairing; throws if sigma < -1e-10.
[[nodiscard]] double entropy_production_rate(const LiouvillianBundle& b);

[[nodiscard]] ThermoRates thermo_rates(const LiouvillianBundle& b);

/// tau * sum_k c_k t_k.
[[nodiscard]] double mean_observable(const LiouvillianBundle& b, const CountingVector& c, double tau);

/// Exact variance for a stationary start:
///   Var = tau <J2,pi> + 2 tr(J1bar K2(tau)[J_pi]),
/// with K2 the weighted time integral of the propagator.
[[nodiscard]] double variance_exact(const LiouvillianBundle& b, const CountingVector& c,
                                    const Propagators& props,
                                    const StatsConfig& cfg = kStatsConfig);
[[nodiscard]] double variance_exact(const LiouvillianBundle& b, const CountingVector& c, double tau,
                                    const StatsConfig& cfg = kStatsConfig);

/// Same as above for weights already aligned with the channel order.
[[nodiscard]] double variance_exact(const LiouvillianBundle& b, const std::vector<double>& c,
                                    const Propagators& props,
                                    const StatsConfig& cfg = kStatsConfig);

/// F = tau Var / mean^2, or nullopt when |mean| is below the configured floor.
[[nodiscard]] std::optional<double> relative_fluctuation(double mean, double variance, double tau,
                                                         double activity,
                                                         const StatsConfig& cfg = kStatsConfig);

[[nodiscard]] ObservableStats stats_exact(const LiouvillianBundle& b, const CountingVector& c,
                                          const Propagators& props,
                                          const StatsConfig& cfg = kStatsConfig);

/// Generating function G(u) = <<1| e^{L_u tau} |pi>>.
[[nodiscard]] cplx generating_function(const LiouvillianBundle& b, const CountingVector& c,
                                       double tau, double u);

struct FcsMoments {
  double first = 0.0;   // <phi>
  double second = 0.0;  // <phi^2>
};

/// Raw moments from Richardson-extrapolated central differences of G(u).
[[nodiscard]] FcsMoments moments_fcs(const LiouvillianBundle& b, const CountingVector& c, double tau,
                                     const StatsConfig& cfg = kStatsConfig);

/// n-th raw moment, n in {1, 2}.
[[nodiscard]] double moment_fcs(const LiouvillianBundle& b, const CountingVector& c, double tau,
                                int n, const StatsConfig& cfg = kStatsConfig);

[[nodiscard]] ObservableStats stats_fcs(const LiouvillianBundle& b, const CountingVector& c,
                                        double tau, const StatsConfig& cfg = kStatsConfig);

struct QfiTkur {
  double rate = 0.0;         // sum_k l_k^2 t_k
  double jensen_bound = 0.0; // (sigma^2 / 4a) Phi(sigma/2a)^{-2}
  double min_bound = 0.0;    // min(sigma/2, a)
  bool chain_holds = false;
};

/// Rate form of the quantum Fisher information of the thermo-kinetic
/// perturbation, plus the rate chain it must satisfy.
[[nodiscard]] QfiTkur qfi_tkur_rate(const LiouvillianBundle& b);

/// eps^2 * a.
[[nodiscard]] double qfi_response_rate(const LiouvillianBundle& b, double eps);

}  // namespace qtb

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qtb/core.hpp"
#include "qtb/liouvillian.hpp"
#include "qtb/statistics.hpp"

namespace qtb {

enum class BoundName { tkur, tkur_classical_form, iur, rkur, eps_response, power_efficiency };

[[nodiscard]] std::string to_string(BoundName n);

/// One inequality evaluation. `slack` is normalized so that the inequality
/// holds iff slack >= 0 (lhs - rhs for lower bounds, rhs - lhs for upper).
struct BoundReport {
  BoundName name = BoundName::tkur;
  std::string label;             // e.g. "iur_s0.5"
  bool upper_bound = false;      // true: lhs <= rhs is asserted
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool applicable = true;
  bool informational = false;    // reported, but not a theorem for this system
  std::string note;
  std::map<std::string, double> components;

  /// slack >= -1e-9 |rhs|; always true for inapplicable reports.
  [[nodiscard]] bool satisfied() const;
};

[[nodiscard]] BoundReport make_report(BoundName name, std::string label, bool upper, double lhs,
                                      double rhs);

/// Inverse of x tanh(x) on [0, inf).
[[nodiscard]] double phi_inverse(double y);

/// (4a / sigma^2) Phi(sigma / 2a)^2; +inf at sigma = 0.
[[nodiscard]] double tkur_lower_bound(double sigma, double activity);

/// l_k = (t_k - t_{k*}) / (t_k + t_{k*}), aligned with the channels.
[[nodiscard]] std::vector<double> tkur_coefficients(const LiouvillianBundle& b);

enum class DeltaMode { finite, asymptotic };

/// Coherent correction to the current response. Finite mode integrates the
/// first-order response operator exactly up to props.tau.
[[nodiscard]] double delta_phi_finite(const LiouvillianBundle& b, const CountingVector& c,
                                      const Propagators& props);
[[nodiscard]] double delta_phi_asymptotic(const LiouvillianBundle& b, const CountingVector& c);
[[nodiscard]] double delta_phi(const LiouvillianBundle& b, const CountingVector& c, DeltaMode mode,
                               double tau);

struct TkurOptions {
  DeltaMode mode = DeltaMode::finite;
  std::optional<double> delta_override;  // test hook: replaces the computed delta
};

/// Quantum thermo-kinetic bound F/(1+delta)^2 >= (4a/sigma^2) Phi(sigma/2a)^2.
[[nodiscard]] BoundReport check_tkur(const LiouvillianBundle& b, const CountingVector& c,
                                     const Propagators& props, const TkurOptions& opt = {});

/// The same bound with delta dropped; reported to detect classical violations.
[[nodiscard]] BoundReport tkur_classical_form(const BoundReport& tkur);

/// The symmetrized Heisenberg generator (L~ + L~*)/2 for one weight s.
struct SymmetrizedLiouvillian {
  double s = 0.0;
  Eigen::Index dim = 0;
  Matrix weight;           // W_s = pi^s (x) (pi^{1-s})^T
  Matrix weight_sqrt;      // W_s^{1/2}
  Matrix weight_inv_sqrt;  // W_s^{-1/2}
  Matrix matrix;           // vectorized L~_s
  Matrix hermitian;        // W^{1/2} L~_s W^{-1/2}

  [[nodiscard]] Matrix apply(const Matrix& a) const {
    return unvectorize(matrix * vectorize(a), dim);
  }
};

[[nodiscard]] SymmetrizedLiouvillian build_symmetrized(const LiouvillianBundle& b, double s);

struct GapData {
  double s = 0.0;
  RealVector eigenvalues;  // descending
  Matrix eigenvectors;     // of the Hermitianized form, same order
  double gap = 0.0;        // -lambda_1
  double hermiticity_residual = 0.0;
  double kernel_residual = 0.0;  // ||M W^{1/2} vec(1)||
};

[[nodiscard]] GapData symmetrized_gap(const LiouvillianBundle& b, double s);
[[nodiscard]] GapData symmetrized_gap(const SymmetrizedLiouvillian& sym);

struct IurComponents {
  Matrix j1;
  Matrix j2;
  Matrix j_pi;
  double j1_mean = 0.0;      // <J1, pi> = tr J_pi
  double j2_mean = 0.0;      // <J2, pi>
  double norm_j1bar = 0.0;   // ||J1 - <J1,pi> 1||_s
  double norm_jpi_term = 0.0;// ||pi^{-s} J_pi pi^{-(1-s)} - <J1,pi> 1||_s
  double kappa = 0.0;
};

[[nodiscard]] IurComponents iur_components(const LiouvillianBundle& b, const CountingVector& c,
                                           double s);

/// Inverse uncertainty bound F <= (<J2,pi>/<J1,pi>^2)(1 + 2 kappa / g_s). The
/// variance-level form is reported in the components.
[[nodiscard]] BoundReport check_iur(const LiouvillianBundle& b, const CountingVector& c,
                                    const Propagators& props, double s);
[[nodiscard]] BoundReport check_iur(const LiouvillianBundle& b, const CountingVector& c,
                                    const Propagators& props, const GapData& gap);

struct ResponseConfig {
  double fd_step = 1e-5;
  double fd_rel_tol = 1e-4;
};

/// Sensitivities of the time-integrated channel counts to log-rate
/// perturbations L_k -> e^{w_k/2} L_k, for a start in the unperturbed
/// stationary state. matrix()(j, k) = d/dw_k int_0^tau tr(L_j rho_t L_j^dagger) dt,
/// so the gradient of <phi> is c^T matrix(). Construction also evaluates the
/// same matrix by central differences and throws on disagreement.
class ResponseKernel {
 public:
  ResponseKernel(const LiouvillianBundle& b, const Propagators& props,
                 const ResponseConfig& cfg = {});

  [[nodiscard]] const RealMatrix& matrix() const { return analytic_; }
  [[nodiscard]] const RealMatrix& finite_difference() const { return fd_; }
  [[nodiscard]] double disagreement() const { return disagreement_; }
  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] std::vector<double> gradient(const std::vector<double>& c) const;

 private:
  double tau_ = 0.0;
  RealMatrix analytic_;
  RealMatrix fd_;
  double disagreement_ = 0.0;
};

[[nodiscard]] std::vector<double> response_gradient(const LiouvillianBundle& b,
                                                    const CountingVector& c,
                                                    const Propagators& props);

/// ||grad <phi>||_1^2 / Var <= tau a.
[[nodiscard]] BoundReport check_rkur(const LiouvillianBundle& b, const CountingVector& c,
                                     const Propagators& props, const ResponseKernel& kernel);

/// (d_eps <phi>)^2 <= tau w_max^2 Var a for rates depending on eps through
/// w_k(eps); omega_prime holds w_k'(eps) aligned with the channels.
[[nodiscard]] BoundReport check_eps_response(const LiouvillianBundle& b, const CountingVector& c,
                                             const Propagators& props, const ResponseKernel& kernel,
                                             const std::vector<double>& omega_prime);

struct PowerEfficiencyConfig {
  double tau0 = 200.0;          // variance-slope horizon
  double convergence_tol = 1e-3;// |est(tau0) - est(2 tau0)| / |est(2 tau0)|
  double temperature_tol = 1e-8;
};

/// Power-efficiency trade-off P eta/(eta_C - eta) T_c (1+delta_P)^2 / Delta_P <= 1/2.
/// c_hot counts heat drawn from the hot bath, c_cold heat delivered to the cold bath.
[[nodiscard]] BoundReport check_power_efficiency(const LiouvillianBundle& b,
                                                 const CountingVector& c_hot,
                                                 const CountingVector& c_cold, double t_hot,
                                                 double t_cold, double tau,
                                                 const PowerEfficiencyConfig& cfg = {});

/// Asymptotic variance rate by the large-horizon slope [Var(2T) - Var(T)] / T.
[[nodiscard]] double variance_rate_slope(const LiouvillianBundle& b, const std::vector<double>& c,
                                         double horizon);

}  // namespace qtb

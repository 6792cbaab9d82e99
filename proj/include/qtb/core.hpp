#pragma once

#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qtb {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

/// Library-wide error type. Messages name the violated precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every numerical tolerance used by the library, in one place.
struct Tolerances {
  double hermiticity = 1e-12;   // relative Frobenius residual of A - A^dagger
  double trace = 1e-10;         // |tr(rho) - 1|
  double positivity = 1e-10;    // minimum allowed eigenvalue of a state is -positivity
  double pairing = 1e-10;       // ||L_k - e^{ds/2} L_{k*}^dagger||
  double rank = 1e-12;          // eigenvalues of pi below this make pi^s undefined
  double generator = 1e-10;     // trace annihilation of generator columns
  double uniqueness = 1e-8;     // second-smallest singular value of the generator
  double kernel = 1e-10;        // <<1|v>> allowed for group-inverse input
  double imaginary = 1e-12;     // imaginary part tolerated in real-valued traces
};

inline constexpr Tolerances kTol{};

/// Self-adjoint operator. Construction fails for non-Hermitian input.
class HermitianOperator {
 public:
  HermitianOperator() = default;
  explicit HermitianOperator(Matrix entries);

  [[nodiscard]] const Matrix& matrix() const { return entries_; }
  [[nodiscard]] Eigen::Index dim() const { return entries_.rows(); }

 private:
  Matrix entries_;
};

struct JumpOperator {
  JumpOperator() = default;
  JumpOperator(int channel_id, Matrix entries);

  int channel_id = 0;
  Matrix entries;
};

struct PairEntry {
  int k = 0;
  int k_star = 0;
  double ds = 0.0;  // environment entropy change of jump k
};

/// Local-detailed-balance pairing k <-> k*. The structural invariants
/// (involution, ds antisymmetry, ds = 0 on self-pairs) are checked here;
/// the operator identity L_k = e^{ds/2} L_{k*}^dagger is checked by
/// validate_system.
class DetailedBalancePairing {
 public:
  DetailedBalancePairing() = default;
  explicit DetailedBalancePairing(std::vector<PairEntry> entries);

  [[nodiscard]] const std::vector<PairEntry>& entries() const { return entries_; }
  [[nodiscard]] bool contains(int k) const;
  [[nodiscard]] int partner(int k) const;
  [[nodiscard]] double ds(int k) const;

 private:
  std::vector<PairEntry> entries_;  // one entry per channel
};

class OpenSystem {
 public:
  OpenSystem(HermitianOperator hamiltonian, std::vector<JumpOperator> jumps,
             std::optional<DetailedBalancePairing> pairing = std::nullopt);

  [[nodiscard]] Eigen::Index dim() const { return hamiltonian_.dim(); }
  [[nodiscard]] const HermitianOperator& hamiltonian() const { return hamiltonian_; }
  [[nodiscard]] const std::vector<JumpOperator>& jumps() const { return jumps_; }
  [[nodiscard]] const std::optional<DetailedBalancePairing>& pairing() const { return pairing_; }
  [[nodiscard]] std::size_t num_channels() const { return jumps_.size(); }
  [[nodiscard]] std::vector<int> channel_ids() const;

  /// Position of a channel in jumps(); throws for unknown ids.
  [[nodiscard]] std::size_t index_of(int channel_id) const;

  /// Position of the paired channel; requires a pairing.
  [[nodiscard]] std::size_t partner_index(std::size_t index) const;

 private:
  HermitianOperator hamiltonian_;
  std::vector<JumpOperator> jumps_;
  std::optional<DetailedBalancePairing> pairing_;
};

class DensityOperator {
 public:
  DensityOperator() = default;
  explicit DensityOperator(Matrix entries);

  [[nodiscard]] const Matrix& matrix() const { return entries_; }
  [[nodiscard]] Eigen::Index dim() const { return entries_.rows(); }
  [[nodiscard]] const RealVector& eigenvalues() const { return eigenvalues_; }
  [[nodiscard]] const Matrix& eigenvectors() const { return eigenvectors_; }
  [[nodiscard]] double min_eigenvalue() const { return eigenvalues_.minCoeff(); }
  [[nodiscard]] bool full_rank(double rank_tol = kTol.rank) const {
    return min_eigenvalue() > rank_tol;
  }

  /// rho^p through the eigendecomposition. Negative and fractional powers
  /// require full rank; throws "stationary state not full rank" otherwise.
  [[nodiscard]] Matrix power(double p, double rank_tol = kTol.rank) const;

 private:
  Matrix entries_;
  RealVector eigenvalues_;
  Matrix eigenvectors_;
};

/// Per-channel counting weights c_k.
class CountingVector {
 public:
  CountingVector() = default;
  explicit CountingVector(std::map<int, double> weights) : weights_(std::move(weights)) {}

  /// Weights listed in the channel order of `sys`.
  static CountingVector from_ordered(const OpenSystem& sys, const std::vector<double>& values);

  [[nodiscard]] const std::map<int, double>& weights() const { return weights_; }

  /// Weights aligned with sys.jumps(); throws "missing channel weight".
  [[nodiscard]] std::vector<double> aligned(const OpenSystem& sys) const;

  /// True iff `sys` has a pairing and c_k = -c_{k*} for every pair.
  [[nodiscard]] bool is_current(const OpenSystem& sys, double tol = 1e-14) const;

  [[nodiscard]] bool is_zero() const;

 private:
  std::map<int, double> weights_;
};

/// Row-major vectorization |m><n| -> |m> (x) |n>, so that
/// vec(AB) = (A (x) 1) vec(B) and vec(BA) = (1 (x) A^T) vec(B).
[[nodiscard]] Vector vectorize(const Matrix& a);
[[nodiscard]] Matrix unvectorize(const Vector& v, Eigen::Index dim);

/// Kronecker product of dense complex matrices.
[[nodiscard]] Matrix kron(const Matrix& a, const Matrix& b);

/// vec(1)^dagger: the left kernel vector <<1| of every trace-preserving generator.
[[nodiscard]] Vector identity_vec(Eigen::Index dim);

[[nodiscard]] double hermiticity_residual(const Matrix& a);

/// <A,B>_s = tr(A^dagger pi^s B pi^{1-s}) for s in {0, 1/2}.
[[nodiscard]] cplx inner_product_s(const Matrix& a, const Matrix& b, const DensityOperator& pi,
                                   double s);
/// sqrt(Re <A,A>_s); throws if the imaginary part is not negligible.
[[nodiscard]] double norm_s(const Matrix& a, const DensityOperator& pi, double s);

void require_supported_s(double s);

struct PairingResidual {
  int k = 0;
  int k_star = 0;
  double residual = 0.0;
};

struct ValidationReport {
  double hamiltonian_residual = 0.0;
  std::vector<PairingResidual> pairing_residuals;
  std::vector<int> duplicate_ids;
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  bool passed = true;
};

[[nodiscard]] ValidationReport validate_system(const OpenSystem& sys,
                                               const Tolerances& tol = kTol);

}  // namespace qtb

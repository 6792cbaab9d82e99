#pragma once

#include <optional>
#include <vector>

#include <Eigen/LU>

#include "qtb/core.hpp"

namespace qtb {

enum class SuperKind { generator, adjoint, tilted, dissipator_channel, hamiltonian_part, symmetrized };

/// A dim^2 x dim^2 matrix acting on row-major vectorized operators.
struct SuperOperatorMatrix {
  Eigen::Index dim = 0;
  Matrix entries;
  SuperKind kind = SuperKind::generator;

  [[nodiscard]] Vector apply(const Vector& v) const { return entries * v; }
  [[nodiscard]] Matrix apply(const Matrix& op) const {
    return unvectorize(entries * vectorize(op), dim);
  }
};

/// L (x) L^*, the jump ("sandwich") part of one dissipator.
[[nodiscard]] Matrix jump_superoperator(const Matrix& l);

/// -i(H (x) 1 - 1 (x) H^T).
[[nodiscard]] SuperOperatorMatrix build_hamiltonian_part(const OpenSystem& sys);

/// Vectorized GKSL generator.
[[nodiscard]] SuperOperatorMatrix build_generator(const OpenSystem& sys);

/// Heisenberg-picture generator, built from its own operator formula:
/// i[H, .] + sum_k (L_k^dagger . L_k - {L_k^dagger L_k, .}/2).
[[nodiscard]] SuperOperatorMatrix build_adjoint(const OpenSystem& sys);

/// Counting-field tilted generator: jump terms weighted by e^{i u c_k}.
/// u = 0 reproduces build_generator bit for bit.
[[nodiscard]] SuperOperatorMatrix build_tilted(const OpenSystem& sys, const CountingVector& c,
                                               double u);

/// Single-channel dissipator L (x) L^* - (L^dagger L)(x)1/2 - 1(x)(L^dagger L)^T/2.
[[nodiscard]] SuperOperatorMatrix build_channel_dissipator(const OpenSystem& sys, int channel_id);

/// sum_k w_k D_k for per-channel weights aligned with sys.jumps().
[[nodiscard]] Matrix weighted_dissipator(const OpenSystem& sys, const std::vector<double>& weights);

/// sum_k c_k L_k (x) L_k^*.
[[nodiscard]] Matrix counting_superoperator(const OpenSystem& sys, const std::vector<double>& c);

struct StationaryResult {
  DensityOperator state;
  double smallest_singular_value = 0.0;
  double second_singular_value = 0.0;
  double residual = 0.0;  // ||L vec(pi)||
};

/// Unique stationary state of a generator: kernel direction from a full SVD,
/// then Hermitization and trace normalization. Throws "non-unique stationary
/// state" when the two smallest singular values are both below tolerance.
[[nodiscard]] StationaryResult stationary_state(const SuperOperatorMatrix& generator,
                                                const Tolerances& tol = kTol);

/// Group (Drazin) inverse of a generator with a simple zero eigenvalue, applied
/// to vectors in its range.
///
/// The defining spectral sum sum_{i>0} chi_i^{-1} |r_i>><<l_i| is evaluated
/// without diagonalizing: x solves the bordered system
///     [ L        vec(pi) ] [x]   [v]
///     [ <<1|       0     ] [mu] = [0]
/// which is nonsingular whenever the kernel is one-dimensional. This is also
/// what is commonly (if loosely) called the Moore-Penrose inverse of L in the
/// perturbation formulas; the two differ in general and this is the spectral one.
class GroupInverse {
 public:
  GroupInverse() = default;
  GroupInverse(const SuperOperatorMatrix& generator, const DensityOperator& pi);

  /// Requires <<1|v = 0 within tolerance; returns x with L x = v, <<1|x = 0.
  [[nodiscard]] Vector apply(const Vector& v, const Tolerances& tol = kTol) const;

 private:
  Eigen::Index dim2_ = 0;
  Vector left_;  // <<1|
  Eigen::PartialPivLU<Matrix> lu_;
};

/// Convenience wrapper: factorizes and applies once.
[[nodiscard]] Vector group_inverse_apply(const SuperOperatorMatrix& generator,
                                         const DensityOperator& pi, const Vector& v);

/// P = e^{G tau}, K1 = int_0^tau e^{G t} dt, K2 = int_0^tau (tau - t) e^{G t} dt.
struct Propagators {
  double tau = 0.0;
  Matrix P;
  Matrix K1;
  Matrix K2;
};

/// All three from one exponential of the block matrix [[G,1,0],[0,0,1],[0,0,0]] tau.
[[nodiscard]] Propagators integrated_propagators(const Matrix& g, double tau);

/// P and K1 only, from the 2x2 block exponential.
[[nodiscard]] std::pair<Matrix, Matrix> propagator_and_integral(const Matrix& g, double tau);

/// Dense matrix exponential (scaling and squaring, Pade 13).
[[nodiscard]] Matrix expm(const Matrix& a);

/// Everything derived from one OpenSystem that the statistics and bound
/// modules need. Immutable once built.
struct LiouvillianBundle {
  explicit LiouvillianBundle(OpenSystem sys, const Tolerances& tol = kTol);

  OpenSystem system;
  SuperOperatorMatrix generator;
  SuperOperatorMatrix adjoint;
  std::vector<SuperOperatorMatrix> dissipators;  // aligned with system.jumps()
  DensityOperator pi;
  Vector pi_vec;
  Vector one_vec;  // vec(1)
  double spectral_gap_real = 0.0;  // -max Re(chi_i) over the nonzero modes
  Eigen::VectorXcd generator_eigenvalues;
  GroupInverse group_inverse;

  [[nodiscard]] Eigen::Index dim() const { return system.dim(); }
};

}  // namespace qtb

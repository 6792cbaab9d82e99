#include "qtb/liouvillian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

namespace qtb {

namespace {

const cplx kI{0.0, 1.0};

Matrix identity(Eigen::Index d) { return Matrix::Identity(d, d); }

// L (x) L^* - (L^dagger L)(x)1/2 - 1(x)(L^dagger L)^T/2, with the jump term
// scaled by `jump_weight` when one is given.
Matrix dissipator_block(const Matrix& l, const cplx* jump_weight) {
  const auto d = l.rows();
  const Matrix ldl = l.adjoint() * l;
  Matrix out = jump_superoperator(l);
  if (jump_weight != nullptr) out *= *jump_weight;
  out -= 0.5 * kron(ldl, identity(d));
  out -= 0.5 * kron(identity(d), ldl.transpose());
  return out;
}

}  // namespace

Matrix jump_superoperator(const Matrix& l) { return kron(l, l.conjugate()); }

SuperOperatorMatrix build_hamiltonian_part(const OpenSystem& sys) {
  const auto d = sys.dim();
  const Matrix& h = sys.hamiltonian().matrix();
  Matrix m = -kI * (kron(h, identity(d)) - kron(identity(d), h.transpose()));
  return {d, std::move(m), SuperKind::hamiltonian_part};
}

SuperOperatorMatrix build_generator(const OpenSystem& sys) {
  SuperOperatorMatrix out = build_hamiltonian_part(sys);
  for (const auto& j : sys.jumps()) out.entries += dissipator_block(j.entries, nullptr);
  out.kind = SuperKind::generator;
  return out;
}

SuperOperatorMatrix build_adjoint(const OpenSystem& sys) {
  const auto d = sys.dim();
  const Matrix& h = sys.hamiltonian().matrix();
  Matrix m = kI * (kron(h, identity(d)) - kron(identity(d), h.transpose()));
  for (const auto& j : sys.jumps()) {
    const Matrix& l = j.entries;
    const Matrix ldl = l.adjoint() * l;
    m += kron(l.adjoint(), l.transpose());
    m -= 0.5 * kron(ldl, identity(d));
    m -= 0.5 * kron(identity(d), ldl.transpose());
  }
  return {d, std::move(m), SuperKind::adjoint};
}

SuperOperatorMatrix build_tilted(const OpenSystem& sys, const CountingVector& c, double u) {
  const auto weights = c.aligned(sys);
  SuperOperatorMatrix out = build_hamiltonian_part(sys);
  for (std::size_t k = 0; k < sys.num_channels(); ++k) {
    const double phase = u * weights[k];
    if (phase == 0.0) {
      out.entries += dissipator_block(sys.jumps()[k].entries, nullptr);
    } else {
      const cplx w = std::exp(kI * phase);
      out.entries += dissipator_block(sys.jumps()[k].entries, &w);
    }
  }
  out.kind = SuperKind::tilted;
  return out;
}

SuperOperatorMatrix build_channel_dissipator(const OpenSystem& sys, int channel_id) {
  const auto idx = sys.index_of(channel_id);
  return {sys.dim(), dissipator_block(sys.jumps()[idx].entries, nullptr),
          SuperKind::dissipator_channel};
}

Matrix weighted_dissipator(const OpenSystem& sys, const std::vector<double>& weights) {
  if (weights.size() != sys.num_channels()) throw Error("weighted_dissipator: size mismatch");
  const auto d2 = sys.dim() * sys.dim();
  Matrix out = Matrix::Zero(d2, d2);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] != 0.0) out += weights[k] * dissipator_block(sys.jumps()[k].entries, nullptr);
  }
  return out;
}

Matrix counting_superoperator(const OpenSystem& sys, const std::vector<double>& c) {
  if (c.size() != sys.num_channels()) throw Error("counting_superoperator: size mismatch");
  const auto d2 = sys.dim() * sys.dim();
  Matrix out = Matrix::Zero(d2, d2);
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] != 0.0) out += c[k] * jump_superoperator(sys.jumps()[k].entries);
  }
  return out;
}

StationaryResult stationary_state(const SuperOperatorMatrix& generator, const Tolerances& tol) {
  if (generator.kind != SuperKind::generator) {
    throw Error("stationary_state requires a generator");
  }
  const auto d = generator.dim;
  Eigen::JacobiSVD<Matrix> svd(generator.entries, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const auto n = sv.size();
  StationaryResult res;
  res.smallest_singular_value = sv(n - 1);
  res.second_singular_value = n > 1 ? sv(n - 2) : 0.0;
  if (res.second_singular_value <= tol.uniqueness) throw Error("non-unique stationary state");

  Matrix x = unvectorize(svd.matrixV().col(n - 1), d);
  const cplx tr = x.trace();
  if (std::abs(tr) < 1e-8) throw Error("kernel vector not positive-normalizable");
  x /= tr;
  x = 0.5 * (x + x.adjoint());
  x /= x.trace().real();
  res.residual = (generator.entries * vectorize(x)).norm();
  try {
    res.state = DensityOperator(std::move(x));
  } catch (const Error&) {
    throw Error("kernel vector not positive-normalizable");
  }
  return res;
}

GroupInverse::GroupInverse(const SuperOperatorMatrix& generator, const DensityOperator& pi)
    : dim2_(generator.entries.rows()), left_(identity_vec(generator.dim)) {
  Matrix bordered = Matrix::Zero(dim2_ + 1, dim2_ + 1);
  bordered.topLeftCorner(dim2_, dim2_) = generator.entries;
  bordered.topRightCorner(dim2_, 1) = vectorize(pi.matrix());
  bordered.bottomLeftCorner(1, dim2_) = left_.adjoint();
  lu_.compute(bordered);
  // PartialPivLU never reports singularity; test the factor's diagonal instead.
  const double diag_min = lu_.matrixLU().diagonal().cwiseAbs().minCoeff();
  const double diag_max = lu_.matrixLU().diagonal().cwiseAbs().maxCoeff();
  if (!(diag_min > 1e-13 * diag_max)) throw Error("group inverse: singular projected system");
}

Vector GroupInverse::apply(const Vector& v, const Tolerances& tol) const {
  if (v.size() != dim2_) throw Error("group inverse: dimension mismatch");
  const cplx kernel_part = left_.dot(v);
  if (std::abs(kernel_part) > tol.kernel * std::max(1.0, v.norm())) {
    throw Error("group inverse: input has a kernel component (<<1|v != 0)");
  }
  Vector rhs = Vector::Zero(dim2_ + 1);
  rhs.head(dim2_) = v;
  const Vector sol = lu_.solve(rhs);
  return sol.head(dim2_);
}

Vector group_inverse_apply(const SuperOperatorMatrix& generator, const DensityOperator& pi,
                           const Vector& v) {
  return GroupInverse(generator, pi).apply(v);
}

Matrix expm(const Matrix& a) { return a.exp(); }

Propagators integrated_propagators(const Matrix& g, double tau) {
  if (!(tau >= 0.0)) throw Error("integrated_propagators: tau must be >= 0");
  const auto n = g.rows();
  Matrix block = Matrix::Zero(3 * n, 3 * n);
  block.topLeftCorner(n, n) = g;
  block.block(0, n, n, n) = identity(n);
  block.block(n, 2 * n, n, n) = identity(n);
  const Matrix e = expm(block * tau);
  return {tau, e.topLeftCorner(n, n), e.block(0, n, n, n), e.block(0, 2 * n, n, n)};
}

std::pair<Matrix, Matrix> propagator_and_integral(const Matrix& g, double tau) {
  if (!(tau >= 0.0)) throw Error("propagator_and_integral: tau must be >= 0");
  const auto n = g.rows();
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = g;
  block.topRightCorner(n, n) = identity(n);
  const Matrix e = expm(block * tau);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, n)};
}

LiouvillianBundle::LiouvillianBundle(OpenSystem sys, const Tolerances& tol)
    : system(std::move(sys)),
      generator(build_generator(system)),
      adjoint(build_adjoint(system)) {
  for (const auto& j : system.jumps()) {
    dissipators.push_back(build_channel_dissipator(system, j.channel_id));
  }
  auto st = stationary_state(generator, tol);
  pi = std::move(st.state);
  pi_vec = vectorize(pi.matrix());
  one_vec = identity_vec(dim());

  Eigen::ComplexEigenSolver<Matrix> es(generator.entries, false);
  generator_eigenvalues = es.eigenvalues();
  Eigen::Index kernel = 0;
  generator_eigenvalues.cwiseAbs().minCoeff(&kernel);
  double max_re = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < generator_eigenvalues.size(); ++i) {
    if (i != kernel) max_re = std::max(max_re, generator_eigenvalues(i).real());
  }
  spectral_gap_real = -max_re;
  group_inverse = GroupInverse(generator, pi);
}

}  // namespace qtb

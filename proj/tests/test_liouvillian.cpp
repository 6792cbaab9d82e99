#include <doctest.h>

#include <array>

#include "support.hpp"

using namespace qtb;
using qtb::test::Rand;

namespace {

OpenSystem amplitude_damping(double gamma) {
  Matrix l = Matrix::Zero(2, 2);
  l(0, 1) = std::sqrt(gamma);
  return OpenSystem(HermitianOperator(Matrix::Zero(2, 2)), {JumpOperator(1, l)});
}

Matrix basis(Eigen::Index d, Eigen::Index m, Eigen::Index n) {
  Matrix e = Matrix::Zero(d, d);
  e(m, n) = 1.0;
  return e;
}

// int_0^tau (tau - t) e^{G t} dt by 5-point Gauss-Legendre on `panels` panels.
Matrix k2_quadrature(const Matrix& g, double tau, int panels) {
  static constexpr std::array<double, 5> x = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                              0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> w = {0.2369268850561891, 0.4786286704993665,
                                              0.5688888888888889, 0.4786286704993665,
                                              0.2369268850561891};
  Matrix acc = Matrix::Zero(g.rows(), g.cols());
  const double hw = tau / panels / 2.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (2 * p + 1) * hw;
    for (std::size_t i = 0; i < 5; ++i) {
      const double t = mid + hw * x[i];
      acc += (w[i] * hw * (tau - t)) * expm(g * t);
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("amplitude damping by hand") {
  const auto gen = build_generator(amplitude_damping(1.0));
  const Matrix out = gen.apply(basis(2, 1, 1));
  CHECK((out - (basis(2, 0, 0) - basis(2, 1, 1))).norm() < 1e-15);
}

TEST_CASE("generator is trace preserving on basis matrices") {
  const auto gen = build_generator(build_maser(test::maser_at(1.0)));
  for (Eigen::Index m = 0; m < 3; ++m)
    for (Eigen::Index n = 0; n < 3; ++n) CHECK(std::abs(gen.apply(basis(3, m, n)).trace()) < 1e-10);
}

TEST_CASE("generator matches the direct Lindblad action") {
  Rand rng(17);
  const OpenSystem sys = build_maser(test::maser_at(1.0));
  const auto gen = build_generator(sys);
  for (int i = 0; i < 5; ++i) {
    const Matrix rho = rng.density(3);
    CHECK((gen.apply(rho) - test::lindblad_action(sys, rho)).norm() < 1e-13);
  }
}

TEST_CASE("adjoint identity and unitality") {
  Rand rng(23);
  const OpenSystem sys = build_maser(test::maser_at(0.4));
  const auto gen = build_generator(sys);
  const auto adj = build_adjoint(sys);
  CHECK(adj.apply(Matrix(Matrix::Identity(3, 3))).norm() < 1e-14);
  for (int i = 0; i < 20; ++i) {
    const Matrix a = rng.matrix(3);
    const Matrix b = rng.matrix(3);
    const cplx lhs = (a.adjoint() * gen.apply(b)).trace();
    const cplx rhs = (adj.apply(a).adjoint() * b).trace();
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("adjoint of an embedded chain acts as the transposed rate matrix") {
  const ClassicalChain chain = random_chain(3, 5);
  const auto adj = build_adjoint(embed_classical(chain));
  Rand rng(2);
  RealVector f(3);
  for (int i = 0; i < 3; ++i) f(i) = rng.uniform(-1, 1);
  const Matrix out = adj.apply(Matrix(f.cast<cplx>().asDiagonal()));
  for (Eigen::Index n = 0; n < 3; ++n) {
    double expect = 0.0;
    for (Eigen::Index m = 0; m < 3; ++m)
      if (m != n) expect += chain.rates(m, n) * (f(m) - f(n));
    CHECK(std::abs(out(n, n) - expect) < 1e-13);
    for (Eigen::Index m = 0; m < 3; ++m)
      if (m != n) CHECK(std::abs(out(m, n)) < 1e-14);
  }
}

TEST_CASE("tilted generator") {
  const OpenSystem sys = build_maser(test::maser_at(1.0));
  const auto gen = build_generator(sys);
  CHECK(build_tilted(sys, maser_cycle_current(), 0.0).entries == gen.entries);
  const CountingVector zero = CountingVector::from_ordered(sys, {0, 0, 0, 0});
  CHECK(build_tilted(sys, zero, 0.7).entries == gen.entries);
  CHECK_THROWS_AS((void)build_tilted(sys, CountingVector({{1, 1.0}}), 0.1), Error);
}

TEST_CASE("tilted derivative gives i times the mean") {
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  const CountingVector c = maser_cycle_current();
  const double tau = 10.0;
  const double h = 1e-4;
  auto g = [&](double u) {
    const Matrix p = expm(build_tilted(b.system, c, u).entries * tau);
    return b.one_vec.dot(p * b.pi_vec);  // dot conjugates the first argument
  };
  const cplx deriv = (g(h) - g(-h)) / (2 * h);
  // mean = tau * sum c_k tr(L_k pi L_k^dagger)
  double mean = 0.0;
  const auto cw = c.aligned(b.system);
  for (std::size_t k = 0; k < cw.size(); ++k) {
    const Matrix& l = b.system.jumps()[k].entries;
    mean += cw[k] * (l * b.pi.matrix() * l.adjoint()).trace().real();
  }
  mean *= tau;
  CHECK(std::abs(deriv.real()) < 1e-6);
  CHECK(test::rel_err(deriv.imag(), mean) < 1e-6);
}

TEST_CASE("channel dissipators decompose the generator") {
  const OpenSystem sys = build_maser(test::maser_at(1.0));
  const LiouvillianBundle b(sys);
  Matrix sum = build_hamiltonian_part(sys).entries;
  for (const auto& j : sys.jumps()) sum += build_channel_dissipator(sys, j.channel_id).entries;
  CHECK((sum - b.generator.entries).norm() < 1e-14);

  for (const auto& j : sys.jumps()) {
    const auto dk = build_channel_dissipator(sys, j.channel_id);
    CHECK(std::abs(b.one_vec.dot(dk.entries * b.pi_vec)) < 1e-14);
  }
  const Matrix& l1 = sys.jumps()[0].entries;
  const Matrix& p = b.pi.matrix();
  const Matrix direct = l1 * p * l1.adjoint() - 0.5 * (l1.adjoint() * l1 * p + p * l1.adjoint() * l1);
  CHECK((build_channel_dissipator(sys, 1).apply(p) - direct).norm() < 1e-15);
  CHECK_THROWS_AS((void)build_channel_dissipator(sys, 9), Error);
}

TEST_CASE("stationary states") {
  SUBCASE("symmetric two-state chain") {
    ClassicalChain chain{RealMatrix::Zero(2, 2), std::nullopt};
    chain.rates(0, 1) = chain.rates(1, 0) = 0.8;
    const auto r = stationary_state(build_generator(embed_classical(chain)));
    CHECK((r.state.matrix() - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-14);
  }
  SUBCASE("amplitude damping returns the dark state") {
    const auto r = stationary_state(build_generator(amplitude_damping(1.0)));
    CHECK(std::abs(r.state.matrix()(0, 0) - 1.0) < 1e-14);
    CHECK_FALSE(r.state.full_rank());
    CHECK_THROWS_WITH_AS((void)r.state.power(0.5), "stationary state not full rank", Error);
  }
  SUBCASE("maser at unit detuning") {
    const auto r = stationary_state(build_generator(build_maser(test::maser_at(1.0))));
    CHECK(r.state.min_eigenvalue() > 0.0);
    CHECK(r.residual < 1e-12);
  }
  SUBCASE("degenerate kernel") {
    const OpenSystem sys(HermitianOperator(Matrix::Zero(2, 2)), {JumpOperator(1, Matrix::Zero(2, 2))});
    CHECK_THROWS_WITH_AS((void)stationary_state(build_generator(sys)), "non-unique stationary state",
                         Error);
  }
}

TEST_CASE("group inverse") {
  Rand rng(31);
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  CHECK(b.group_inverse.apply(Vector::Zero(9)).norm() == 0.0);

  Matrix w = rng.matrix(3);
  w -= (w.trace() / 3.0) * Matrix::Identity(3, 3);
  const Vector wv = vectorize(w);
  const Vector x = b.group_inverse.apply(b.generator.entries * wv);
  // w is traceless, so it is already the representative with <<1|x = 0
  CHECK((x - wv).norm() < 1e-11);

  const std::vector<double> ell = {0.3, -0.3, 0.5, -0.5};
  const Vector v = weighted_dissipator(b.system, ell) * b.pi_vec;
  const Vector y = b.group_inverse.apply(v);
  CHECK((b.generator.entries * y - v).norm() < 1e-11);
  CHECK(std::abs(b.one_vec.dot(y)) < 1e-12);
  CHECK_THROWS_AS((void)b.group_inverse.apply(b.pi_vec), Error);
}

TEST_CASE("integrated propagators") {
  SUBCASE("zero generator") {
    const Matrix g = Matrix::Zero(4, 4);
    const auto p = integrated_propagators(g, 3.0);
    const Matrix one = Matrix::Identity(4, 4);
    CHECK((p.P - one).norm() < 1e-15);
    CHECK((p.K1 - 3.0 * one).norm() < 1e-14);
    CHECK((p.K2 - 4.5 * one).norm() < 1e-14);
  }
  SUBCASE("scalar closed form") {
    Matrix g(1, 1);
    g(0, 0) = -2.0;
    const auto p = integrated_propagators(g, 1.0);
    CHECK(std::abs(p.K2(0, 0) - (std::exp(-2.0) - 1.0 + 2.0) / 4.0) < 1e-15);
    CHECK(std::abs(p.K1(0, 0) - (1.0 - std::exp(-2.0)) / 2.0) < 1e-15);
  }
  SUBCASE("maser residuals and quadrature") {
    const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
    const Matrix& g = b.generator.entries;
    const auto p = integrated_propagators(g, 10.0);
    CHECK((g * p.K1 - (p.P - Matrix::Identity(9, 9))).norm() < 1e-10);
    CHECK((k2_quadrature(g, 10.0, 200) - p.K2).norm() < 1e-8);
    const auto [pp, k1] = propagator_and_integral(g, 10.0);
    CHECK((pp - p.P).norm() < 1e-12);
    CHECK((k1 - p.K1).norm() < 1e-11);
  }
  CHECK_THROWS_AS((void)integrated_propagators(Matrix::Zero(2, 2), -1.0), Error);
}

TEST_CASE("propagator preserves trace, positivity and the stationary state") {
  Rand rng(41);
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  for (double tau : {0.1, 1.0, 10.0}) {
    const Matrix p = expm(b.generator.entries * tau);
    CHECK((p.adjoint() * b.one_vec - b.one_vec).norm() < 1e-10);
    CHECK((p * b.pi_vec - b.pi_vec).norm() < 1e-10);
    for (int i = 0; i < 3; ++i) {
      const Matrix rho = unvectorize(p * vectorize(rng.density(3)), 3);
      CHECK(std::abs(rho.trace() - 1.0) < 1e-10);
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()));
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
  }
}

TEST_CASE("bundle invariants") {
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  CHECK((b.generator.entries * b.pi_vec).norm() < 1e-10);
  int near_zero = 0;
  for (Eigen::Index i = 0; i < b.generator_eigenvalues.size(); ++i)
    if (std::abs(b.generator_eigenvalues(i)) < 1e-8) ++near_zero;
  CHECK(near_zero == 1);
  CHECK(b.spectral_gap_real > 0.0);
}

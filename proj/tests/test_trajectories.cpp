#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "qtb/statistics.hpp"
#include "qtb/trajectories.hpp"
#include "support.hpp"

using namespace qtb;
using qtb::test::rel_err;

namespace {

OpenSystem amplitude_damping(double gamma) {
  Matrix l = Matrix::Zero(2, 2);
  l(0, 1) = std::sqrt(gamma);
  return OpenSystem(HermitianOperator(Matrix::Zero(2, 2)), {JumpOperator(1, l)});
}

Vector basis_state(Eigen::Index d, Eigen::Index i) {
  Vector v = Vector::Zero(d);
  v(i) = 1.0;
  return v;
}

bool same_records(const std::vector<TrajectoryRecord>& a, const std::vector<TrajectoryRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].phi != b[i].phi || a[i].jumps.size() != b[i].jumps.size()) return false;
    for (std::size_t j = 0; j < a[i].jumps.size(); ++j) {
      if (a[i].jumps[j].time != b[i].jumps[j].time) return false;
      if (a[i].jumps[j].channel_id != b[i].jumps[j].channel_id) return false;
    }
    if (a[i].final_state != b[i].final_state) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("uniform stream") {
  RngStream a(5, 7), b(5, 7), c(5, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    if (x != c.uniform()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("no-jump propagator") {
  const OpenSystem sys = build_maser(test::maser_at(1.0));
  const NoJumpPropagator prop(sys, 10.0);
  CHECK(prop.finest_step() <= 1e-12);
  Matrix heff = sys.hamiltonian().matrix();
  for (const auto& j : sys.jumps()) heff -= cplx(0.0, 0.5) * j.entries.adjoint() * j.entries;
  const Vector psi = basis_state(3, 0);
  for (double t : {0.0, 0.3, 2.5, 10.0}) {
    const Vector ref = expm(cplx(0.0, -1.0) * heff * t) * psi;
    CHECK((prop.advance(psi, t) - ref).norm() < 1e-10);
  }
  // first passage lands on the last grid time above the threshold
  const auto [s, state] = prop.first_passage(psi, 10.0, 0.5);
  CHECK(state.squaredNorm() > 0.5);
  CHECK(prop.advance(psi, s + 2e-12).squaredNorm() <= 0.5 + 1e-12);
}

TEST_CASE("closed system evolves unitarily without jumps") {
  Matrix h = Matrix::Zero(2, 2);
  h(0, 1) = h(1, 0) = 0.8;
  const OpenSystem sys(HermitianOperator(h), {JumpOperator(1, Matrix::Zero(2, 2))});
  RngStream rng(1, 0);
  const Vector psi0 = basis_state(2, 0);
  const auto rec = sample_trajectory(sys, psi0, 3.0, {1.0}, rng);
  CHECK(rec.jumps.empty());
  CHECK(rec.phi == 0.0);
  const Vector ref = expm(cplx(0.0, -3.0) * h) * psi0;
  CHECK((rec.final_state - ref).norm() < 1e-10);
}

TEST_CASE("amplitude damping first-jump times are exponential") {
  const OpenSystem sys = amplitude_damping(1.0);
  const NoJumpPropagator prop(sys, 40.0);
  const std::size_t n = 10000;
  std::vector<double> times;
  times.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(2024, i);
    const auto rec = sample_trajectory(sys, prop, basis_state(2, 1), 40.0, {1.0}, rng);
    REQUIRE(rec.jumps.size() == 1);
    times.push_back(rec.jumps[0].time);
  }
  std::sort(times.begin(), times.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = 1.0 - std::exp(-times[i]);
    d = std::max({d, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
  }
  // 1.628 / sqrt(N) is the asymptotic KS critical value at p = 0.01
  CHECK(d < 1.628 / std::sqrt(double(n)));
}

TEST_CASE("trajectory records are well formed") {
  const OpenSystem sys = build_maser(test::maser_at(1.0));
  const LiouvillianBundle b(sys);
  const auto recs = sample_ensemble(b, maser_cycle_current(), 10.0, 200, 3);
  for (const auto& r : recs) {
    double prev = -1.0;
    double phi = 0.0;
    for (const auto& e : r.jumps) {
      CHECK(e.time > prev);
      CHECK(e.time <= 10.0);
      prev = e.time;
      phi += maser_cycle_current().weights().at(e.channel_id);
    }
    CHECK(std::abs(r.final_state.norm() - 1.0) < 1e-10);
    CHECK(r.phi == phi);
  }
  RngStream rng(0, 0);
  CHECK_THROWS_AS((void)sample_trajectory(sys, 2.0 * basis_state(3, 0), 1.0, {1, -1, -1, 1}, rng), Error);
}

TEST_CASE("zero weights give exact zeros") {
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  const auto est = estimate_moments(b, CountingVector::from_ordered(b.system, {0, 0, 0, 0}), 10.0, 500, 1);
  CHECK(est.mean == 0.0);
  CHECK(est.variance == 0.0);
  CHECK_THROWS_AS((void)estimate_moments(b, maser_cycle_current(), 10.0, 1, 1), Error);
}

TEST_CASE("symmetric two-state chain counts at rate gamma") {
  ClassicalChain chain{RealMatrix::Zero(2, 2), std::nullopt};
  chain.rates(0, 1) = chain.rates(1, 0) = 0.7;
  const LiouvillianBundle b(embed_classical(chain));
  const double tau = 5.0;
  const auto est = estimate_moments(b, CountingVector::from_ordered(b.system, {1, 1}), tau, 20000, 8);
  CHECK(std::abs(est.mean - 0.7 * tau) < 3.0 * est.mean_se);
}

TEST_CASE("maser activity and channel frequencies") {
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  const double tau = 10.0;
  const auto traffic = channel_traffic(b);
  const auto ones = CountingVector::from_ordered(b.system, {1, 1, 1, 1});
  const auto est = estimate_moments(b, ones, tau, 100000, 42);
  CHECK(std::abs(est.mean / tau - traffic.activity) < 3.0 * est.mean_se / tau);
  std::uint64_t total = 0;
  for (auto n : est.channel_counts) total += n;
  CHECK(double(total) == doctest::Approx(est.mean * est.samples).epsilon(1e-12));

  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> e(4, 0.0);
    e[k] = 1.0;
    const auto ek = estimate_moments(b, CountingVector::from_ordered(b.system, e), tau, 20000, 100 + k);
    CAPTURE(k);
    CHECK(std::abs(ek.mean / tau - traffic.traffic[k]) < 3.0 * ek.mean_se / tau);
  }
}

TEST_CASE("maser cycle current matches the exact moments") {
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  const CountingVector c = maser_cycle_current();
  const double tau = 10.0;
  const auto est = estimate_moments(b, c, tau, 100000, 20240601);
  const double mean = mean_observable(b, c, tau);
  const double var = variance_exact(b, c, tau);
  CHECK(std::abs(est.mean - mean) < 3.0 * est.mean_se);
  CHECK(std::abs(est.variance - var) < 3.0 * est.variance_se);
}

TEST_CASE("ensemble state follows the master equation") {
  const LiouvillianBundle b(build_maser(test::maser_at(1.0)));
  EnsembleOptions opt;
  Matrix rho0 = Matrix::Zero(3, 3);
  rho0(0, 0) = 0.6;
  rho0(1, 1) = 0.4;
  opt.initial_state = DensityOperator(rho0);
  const double tau = 2.0;
  const auto est = estimate_moments(b, maser_cycle_current(), tau, 10000, 77, opt);
  const Matrix ref = unvectorize(expm(b.generator.entries * tau) * vectorize(rho0), 3);
  Eigen::SelfAdjointEigenSolver<Matrix> es(est.average_final_state - ref);
  const double trace_distance = 0.5 * es.eigenvalues().cwiseAbs().sum();
  CHECK(trace_distance < 0.08);
}

TEST_CASE("replay is deterministic across thread counts") {
  const LiouvillianBundle b(build_maser(test::maser_at(0.5)));
  const CountingVector c = maser_cycle_current();
  EnsembleOptions one;
  one.threads = 1;
  EnsembleOptions many;
  many.threads = 3;
  many.chunk = 1024;
  const auto a = estimate_moments(b, c, 10.0, 5000, 9, one);
  const auto z = estimate_moments(b, c, 10.0, 5000, 9, many);
  CHECK(a.mean == z.mean);
  CHECK(a.variance == z.variance);
  CHECK(a.variance_se == z.variance_se);
  CHECK(a.channel_counts == z.channel_counts);
  CHECK(a.average_final_state == z.average_final_state);

  CHECK(same_records(sample_ensemble(b, c, 10.0, 50, 4), sample_ensemble(b, c, 10.0, 50, 4)));
  CHECK_FALSE(same_records(sample_ensemble(b, c, 10.0, 50, 4), sample_ensemble(b, c, 10.0, 50, 5)));
}

TEST_CASE("trajectory csv") {
  TrajectoryRecord r;
  r.jumps = {{0.25, 2}, {1.5, 1}};
  std::ostringstream os;
  write_trajectory_csv(os, {r, TrajectoryRecord{}}, 11, 3.0);
  CHECK(os.str() ==
        "# seed=11\n# tau=3\n# trajectories=2\ntime,channel\n# trajectory 0\n0.25,2\n1.5,1\n# trajectory 1\n");
}

#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "qtb/statistics.hpp"
#include "support.hpp"

using namespace qtb;
using qtb::test::rel_err;

namespace {

std::string error_of(const std::string& text) {
  try {
    (void)parse_model(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

const char* kTwoLevel = R"({
  "format": 1,
  "dim": 2,
  "hamiltonian": [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]],
  "jumps": [
    {"id": 1, "matrix": [[[0, 0], [0.8, 0]], [[0, 0], [0, 0]]]},
    {"id": 2, "matrix": [[[0, 0], [0, 0]], [[0.3, 0], [0, 0]]]}
  ]
})";

}  // namespace

TEST_CASE("maser structure") {
  for (double delta : {0.0, 0.5, 1.0, 2.0}) {
    const OpenSystem sys = build_maser(test::maser_at(delta));
    CHECK(sys.dim() == 3);
    CHECK(sys.channel_ids() == std::vector<int>{1, 2, 3, 4});
    const auto r = validate_system(sys);
    CHECK(r.passed);
    for (const auto& p : r.pairing_residuals) CHECK(p.residual < 1e-12);
    CHECK(maser_cycle_current().is_current(sys));
  }
  const MaserParams p = test::maser_at(1.0);
  const OpenSystem sys = build_maser(p);
  CHECK(sys.pairing()->ds(1) == doctest::Approx(std::log(p.n_h / (p.n_h + 1))).epsilon(1e-15));
  CHECK(sys.pairing()->ds(4) == doctest::Approx(-std::log(p.n_c / (p.n_c + 1))).epsilon(1e-15));
  CHECK(std::abs(sys.hamiltonian().matrix()(1, 1) + 1.0) < 1e-15);
  CHECK(std::abs(sys.hamiltonian().matrix()(0, 1) - 0.15) < 1e-15);
}

TEST_CASE("undriven maser has a unique state and no cycle current") {
  // Without the drive the populations still connect through level 3, so the
  // stationary state stays unique; only the cycle current vanishes.
  MaserParams p = test::maser_at(1.0);
  p.omega = 0.0;
  const LiouvillianBundle b(build_maser(p));
  CHECK(b.pi.min_eigenvalue() > 0.0);
  CHECK(std::abs(mean_observable(b, maser_cycle_current(), 10.0)) < 1e-14);
}

TEST_CASE("maser with a vanishing occupation drops the dead channel") {
  MaserParams p = test::maser_at(1.0);
  p.n_c = 0.0;
  std::vector<std::string> notes;
  const OpenSystem sys = build_maser(p, &notes);
  CHECK(sys.channel_ids() == std::vector<int>{1, 2, 4});
  CHECK_FALSE(sys.pairing().has_value());
  REQUIRE(notes.size() == 1);
  p.gamma_c = -1.0;
  CHECK_THROWS_AS((void)build_maser(p), Error);
}

TEST_CASE("bath temperature") {
  CHECK(rel_err(bath_temperature(1.0, 5.0), 1.0 / std::log(1.2)) < 1e-15);
  // occupation n = 1/(e^{w/T} - 1)
  const double t = bath_temperature(0.7, 0.3);
  CHECK(rel_err(1.0 / std::expm1(0.7 / t), 0.3) < 1e-14);
  CHECK_THROWS_AS((void)bath_temperature(1.0, 0.0), Error);
}

TEST_CASE("maser engine heat vectors") {
  const HeatEngine e = maser_engine(test::maser_at(1.0), 1.0, 0.5);
  CHECK(e.heat_hot.aligned(e.system) == std::vector<double>{1.0, -1.0, 0.0, 0.0});
  CHECK(e.heat_cold.aligned(e.system) == std::vector<double>{0.0, 0.0, -0.5, 0.5});
  CHECK(e.t_hot > e.t_cold);
  std::vector<double> grid = {0.0, 1.0, 2.0};
  const auto scan = scan_maser_engine(test::maser_at(0.0), 1.0, 0.5, grid, 10.0);
  REQUIRE(scan.size() == 3);
  for (const auto& pt : scan) {
    CHECK(pt.engine_regime);
    CHECK(rel_err(pt.efficiency, 0.5) < 1e-10);
  }
}

TEST_CASE("classical engine") {
  const HeatEngine e = classical_engine(ClassicalEngineParams{});
  CHECK(validate_system(e.system).passed);
  CHECK(e.t_hot > e.t_cold);
}

TEST_CASE("embedding classical chains") {
  SUBCASE("symmetric two-state") {
    ClassicalChain chain{RealMatrix::Zero(2, 2), std::nullopt};
    chain.rates(0, 1) = chain.rates(1, 0) = 1.3;
    const LiouvillianBundle b(embed_classical(chain));
    CHECK((b.pi.matrix() - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-14);
    CHECK(std::abs(entropy_production_rate(b)) < 1e-15);
  }
  SUBCASE("random four-state stationary distribution") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const ClassicalChain chain = random_chain(4, seed);
      const test::ClassicalReference ref(chain.rates);
      const LiouvillianBundle b(embed_classical(chain));
      const Matrix& pi = b.pi.matrix();
      CHECK((pi - Matrix(pi.diagonal().asDiagonal())).norm() < 1e-12);
      for (Eigen::Index n = 0; n < 4; ++n) CHECK(std::abs(pi(n, n) - ref.pi(n)) < 1e-12);
    }
  }
  SUBCASE("biased uniform ring") {
    // uniform ring: pi = 1/3 and the flux through each edge is (k+ - k-)/3
    ClassicalChain chain{RealMatrix::Zero(3, 3), std::nullopt};
    for (int i = 0; i < 3; ++i) {
      chain.rates((i + 1) % 3, i) = 2.0;
      chain.rates(i, (i + 1) % 3) = 0.5;
    }
    const OpenSystem sys = embed_classical(chain);
    const LiouvillianBundle b(sys);
    std::vector<double> c(sys.num_channels(), 0.0);
    const auto edges = classical_edges(chain);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      if (edges[k] == std::pair<int, int>{1, 0}) c[k] = 1.0;
      if (edges[k] == std::pair<int, int>{0, 1}) c[k] = -1.0;
    }
    CHECK(rel_err(mean_observable(b, CountingVector::from_ordered(sys, c), 4.0), 4.0 * 0.5) < 1e-13);
  }
  SUBCASE("pairing uses rate log-ratios") {
    const ClassicalChain chain = random_chain(3, 4);
    const OpenSystem sys = embed_classical(chain);
    CHECK(validate_system(sys).passed);
    const auto edges = classical_edges(chain);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto [m, n] = edges[k];
      CHECK(sys.pairing()->ds(int(k) + 1) == std::log(chain.rates(m, n) / chain.rates(n, m)));
    }
  }
  SUBCASE("preconditions") {
    ClassicalChain oneway{RealMatrix::Zero(3, 3), std::nullopt};
    oneway.rates(1, 0) = oneway.rates(2, 1) = oneway.rates(0, 2) = 1.0;
    CHECK_THROWS_AS((void)embed_classical(oneway), Error);
    CHECK_NOTHROW((void)embed_classical(oneway, false));
    ClassicalChain reducible{RealMatrix::Zero(3, 3), std::nullopt};
    reducible.rates(1, 0) = reducible.rates(0, 1) = 1.0;
    CHECK_FALSE(reducible.irreducible());
    CHECK_THROWS_WITH_AS((void)embed_classical(reducible),
                         "classical chain is reducible (no unique stationary distribution)", Error);
  }
}

TEST_CASE("random chains") {
  const ClassicalChain a = random_chain(5, 12);
  const ClassicalChain b = random_chain(5, 12);
  CHECK(a.rates == b.rates);
  for (Eigen::Index m = 0; m < 5; ++m)
    for (Eigen::Index n = 0; n < 5; ++n)
      if (m != n) {
        CHECK(a.rates(m, n) >= 0.1);
        CHECK(a.rates(m, n) <= 2.0);
      }
  CHECK(a.irreducible());
}

TEST_CASE("model file round trip") {
  const OpenSystem sys = build_maser(test::maser_at(0.7));
  const auto path = (std::filesystem::temp_directory_path() / "qtb_roundtrip.json").string();
  save_model(path, sys);
  const OpenSystem back = load_model(path);
  std::remove(path.c_str());
  CHECK(back.hamiltonian().matrix() == sys.hamiltonian().matrix());
  REQUIRE(back.num_channels() == sys.num_channels());
  for (std::size_t k = 0; k < sys.num_channels(); ++k) {
    CHECK(back.jumps()[k].channel_id == sys.jumps()[k].channel_id);
    CHECK(back.jumps()[k].entries == sys.jumps()[k].entries);
  }
  for (const auto& e : sys.pairing()->entries()) {
    CHECK(back.pairing()->partner(e.k) == e.k_star);
    CHECK(back.pairing()->ds(e.k) == e.ds);
  }
  CHECK(serialize_model(back) == serialize_model(sys));
}

TEST_CASE("hand-written two-level file matches the classical embedding") {
  const OpenSystem file = parse_model(kTwoLevel);
  CHECK_FALSE(file.pairing().has_value());
  ClassicalChain chain{RealMatrix::Zero(2, 2), std::nullopt};
  chain.rates(0, 1) = 0.64;  // id 1: 0.8 |0><1|
  chain.rates(1, 0) = 0.09;  // id 2: 0.3 |1><0|
  const OpenSystem ref = embed_classical(chain, false);
  const LiouvillianBundle bf(file);
  const LiouvillianBundle br(ref);
  // both list the decay 1 -> 0 first
  const auto cf = CountingVector::from_ordered(file, {1.0, -1.0});
  const auto cr = CountingVector::from_ordered(ref, {1.0, -1.0});
  CHECK(std::abs(bf.pi.matrix()(0, 0) - 0.64 / 0.73) < 1e-13);
  CHECK(std::abs(mean_observable(bf, cf, 5.0) - mean_observable(br, cr, 5.0)) < 1e-13);
  CHECK(rel_err(channel_traffic(bf).activity, channel_traffic(br).activity) < 1e-13);
  CHECK(rel_err(variance_exact(bf, cf, 5.0), variance_exact(br, cr, 5.0)) < 1e-12);
  const auto af = CountingVector::from_ordered(file, {1.0, 1.0});
  const auto ar = CountingVector::from_ordered(ref, {1.0, 1.0});
  CHECK(rel_err(variance_exact(bf, af, 5.0), variance_exact(br, ar, 5.0)) < 1e-12);
}

TEST_CASE("model file errors name the field") {
  std::string bad = kTwoLevel;
  bad.replace(bad.find("[[[0.5, 0], [0, 0]]"), 19, "[[[0.5, 0], [1, 0]]");
  const std::string herm = error_of(bad);
  CHECK(herm.find("model.hamiltonian: matrix is not Hermitian") == 0);

  std::string pair = kTwoLevel;
  pair.replace(pair.find("[0.8, 0]"), 8, "0.8");
  CHECK(error_of(pair) == "model.jumps[0].matrix[0][1]: expected [re, im] pair");

  std::string fmt = kTwoLevel;
  fmt.replace(fmt.find("\"format\": 1"), 11, "\"format\": 2");
  CHECK(error_of(fmt) == "model.format: unsupported format (expected 1)");

  std::string missing = kTwoLevel;
  missing.replace(missing.find("\"dim\": 2,"), 9, "");
  CHECK(error_of(missing) == "model: missing field 'dim'");

  CHECK(error_of("{").find("model: malformed JSON") == 0);
  CHECK_THROWS_AS((void)load_model("/nonexistent/model.json"), Error);
}

TEST_CASE("model file with an inconsistent pairing is rejected") {
  const OpenSystem ref = build_maser(test::maser_at(1.0));
  const double ds = ref.pairing()->ds(1) + 0.1;
  const double dc = ref.pairing()->ds(3);
  const OpenSystem off(ref.hamiltonian(), ref.jumps(),
                       DetailedBalancePairing({{1, 2, ds}, {2, 1, -ds}, {3, 4, dc}, {4, 3, -dc}}));
  const std::string err = error_of(serialize_model(off));
  CHECK(err.find("model: ") == 0);
  CHECK(err.find("pairing") != std::string::npos);
}

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "qtb/core.hpp"
#include "qtb/liouvillian.hpp"

namespace qtb {

struct JumpEvent {
  double time = 0.0;
  int channel_id = 0;
};

struct TrajectoryRecord {
  std::vector<JumpEvent> jumps;  // strictly increasing times in [0, tau]
  double phi = 0.0;
  Vector final_state;            // unit norm
};

/// Independent uniform stream for one trajectory, keyed by (seed, index).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index);

  /// Uniform double in [0, 1) built from the top 53 bits of one draw.
  double uniform();

 private:
  std::mt19937_64 engine_;
};

/// No-jump evolution e^{-i H_eff t} on a geometric time grid
/// horizon / 2^j, j = 0..levels, with the finest step <= resolution.
class NoJumpPropagator {
 public:
  NoJumpPropagator(const OpenSystem& sys, double horizon, double resolution = 1e-12);

  [[nodiscard]] double horizon() const { return horizon_; }
  [[nodiscard]] double finest_step() const { return steps_.back(); }

  /// Unnormalized state after time t <= horizon (t is truncated to the grid).
  [[nodiscard]] Vector advance(const Vector& psi, double t) const;

  /// Largest grid time s <= t_max with ||psi(s)||^2 > r, and psi(s).
  /// Requires ||psi||^2 > r.
  [[nodiscard]] std::pair<double, Vector> first_passage(const Vector& psi, double t_max,
                                                        double r) const;

 private:
  double horizon_ = 0.0;
  std::vector<double> steps_;
  std::vector<Matrix> props_;
};

/// One quantum-jump trajectory from the pure state psi0 over [0, tau].
/// Counting weights are aligned with sys.jumps().
[[nodiscard]] TrajectoryRecord sample_trajectory(const OpenSystem& sys, const Vector& psi0,
                                                 double tau, const std::vector<double>& c,
                                                 RngStream& rng);

/// Same, reusing a propagator built for `sys` with horizon >= tau.
[[nodiscard]] TrajectoryRecord sample_trajectory(const OpenSystem& sys,
                                                 const NoJumpPropagator& prop, const Vector& psi0,
                                                 double tau, const std::vector<double>& c,
                                                 RngStream& rng);

/// Draws an eigenvector of rho with probability equal to its eigenvalue.
[[nodiscard]] Vector sample_eigen_mixture(const DensityOperator& rho, RngStream& rng);

struct EnsembleEstimate {
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  double tau = 0.0;
  double mean = 0.0;
  double variance = 0.0;       // unbiased
  double mean_se = 0.0;        // sqrt(Var / N)
  double variance_se = 0.0;    // sqrt((m4 - var^2) / N)
  std::vector<std::uint64_t> channel_counts;  // total jumps per channel
  Matrix average_final_state;  // ensemble mean of |psi_tau><psi_tau|
};

struct EnsembleOptions {
  std::optional<DensityOperator> initial_state;  // default: stationary state
  unsigned threads = 0;        // 0: QTB_THREADS env var, else hardware concurrency
  std::size_t chunk = 1024;    // reduction order is fixed by chunk index
};

[[nodiscard]] EnsembleEstimate estimate_moments(const LiouvillianBundle& b,
                                                const CountingVector& c, double tau,
                                                std::size_t n, std::uint64_t seed,
                                                const EnsembleOptions& opt = {});

/// Builds the stationary state first; throws if it is not unique.
[[nodiscard]] EnsembleEstimate estimate_moments(const OpenSystem& sys, const CountingVector& c,
                                                double tau, std::size_t n, std::uint64_t seed,
                                                const EnsembleOptions& opt = {});

/// Trajectories index 0..n-1 of the same streams estimate_moments uses.
[[nodiscard]] std::vector<TrajectoryRecord> sample_ensemble(const LiouvillianBundle& b,
                                                            const CountingVector& c, double tau,
                                                            std::size_t n, std::uint64_t seed);

/// `time,channel` CSV, one event per line, "# trajectory i" separators.
void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records,
                          std::uint64_t seed, double tau);

unsigned resolve_thread_count(unsigned requested);

}  // namespace qtb

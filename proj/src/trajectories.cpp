#include "qtb/trajectories.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>

namespace qtb {

namespace {

constexpr double kNormSlack = 1e-10;

// Running central moments up to order four, mergeable in any fixed order.
struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;

  void merge(const Moments& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double na = n;
    const double nb = o.n;
    const double nt = na + nb;
    const double d = o.mean - mean;
    const double d2 = d * d;
    const double new_m4 = m4 + o.m4 + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (nt * nt * nt) +
                          6.0 * d2 * (na * na * o.m2 + nb * nb * m2) / (nt * nt) +
                          4.0 * d * (na * o.m3 - nb * m3) / nt;
    const double new_m3 = m3 + o.m3 + d * d2 * na * nb * (na - nb) / (nt * nt) +
                          3.0 * d * (na * o.m2 - nb * m2) / nt;
    m2 = m2 + o.m2 + d2 * na * nb / nt;
    m3 = new_m3;
    m4 = new_m4;
    mean += d * nb / nt;
    n = nt;
  }

  void push(double x) { merge(Moments{1.0, x, 0.0, 0.0, 0.0}); }
};

struct ChunkResult {
  Moments moments;
  std::vector<std::uint64_t> counts;
  Matrix rho_sum;
};

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  engine_.seed(seq);
}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

NoJumpPropagator::NoJumpPropagator(const OpenSystem& sys, double horizon, double resolution)
    : horizon_(horizon) {
  if (!(horizon > 0.0)) throw Error("no-jump propagator: horizon must be positive");
  if (!(resolution > 0.0)) throw Error("no-jump propagator: resolution must be positive");
  Matrix h_eff = sys.hamiltonian().matrix();
  for (const auto& j : sys.jumps()) h_eff -= cplx(0.0, 0.5) * (j.entries.adjoint() * j.entries);
  const int levels = std::max(0, static_cast<int>(std::ceil(std::log2(horizon / resolution))));
  if (levels > 62) throw Error("no-jump propagator: grid too fine for the horizon");
  for (int j = 0; j <= levels; ++j) {
    const double step = std::ldexp(horizon, -j);
    steps_.push_back(step);
    props_.push_back(expm(cplx(0.0, -step) * h_eff));
  }
}

Vector NoJumpPropagator::advance(const Vector& psi, double t) const {
  const int levels = static_cast<int>(steps_.size()) - 1;
  const double clipped = std::clamp(t, 0.0, horizon_);
  auto ticks = static_cast<std::uint64_t>(std::floor(clipped / steps_.back()));
  ticks = std::min(ticks, std::uint64_t{1} << levels);
  Vector cur = psi;
  Vector tmp(psi.size());
  for (int j = 0; j <= levels; ++j) {
    if (ticks & (std::uint64_t{1} << (levels - j))) {
      tmp.noalias() = props_[j] * cur;
      cur.swap(tmp);
    }
  }
  return cur;
}

std::pair<double, Vector> NoJumpPropagator::first_passage(const Vector& psi, double t_max,
                                                          double r) const {
  const int levels = static_cast<int>(steps_.size()) - 1;
  const double clipped = std::clamp(t_max, 0.0, horizon_);
  auto cap = static_cast<std::uint64_t>(std::floor(clipped / steps_.back()));
  cap = std::min(cap, std::uint64_t{1} << levels);
  std::uint64_t ticks = 0;
  Vector cur = psi;
  Vector trial(psi.size());
  for (int j = 0; j <= levels; ++j) {
    const std::uint64_t span = std::uint64_t{1} << (levels - j);
    if (ticks + span > cap) continue;
    trial.noalias() = props_[j] * cur;
    if (trial.squaredNorm() > r) {
      cur.swap(trial);
      ticks += span;
    }
  }
  return {static_cast<double>(ticks) * steps_.back(), cur};
}

TrajectoryRecord sample_trajectory(const OpenSystem& sys, const NoJumpPropagator& prop,
                                   const Vector& psi0, double tau, const std::vector<double>& c,
                                   RngStream& rng) {
  if (!(tau >= 0.0)) throw Error("sample_trajectory: tau must be >= 0");
  if (tau > prop.horizon() * (1.0 + 1e-15)) {
    throw Error("sample_trajectory: tau exceeds the propagator horizon");
  }
  if (c.size() != sys.num_channels()) throw Error("sample_trajectory: counting vector size mismatch");
  if (psi0.size() != sys.dim()) throw Error("sample_trajectory: state dimension mismatch");
  if (std::abs(psi0.norm() - 1.0) > kNormSlack) throw Error("sample_trajectory: psi0 not normalized");

  TrajectoryRecord rec;
  Vector psi = psi0;
  double t = 0.0;
  while (true) {
    const double r = rng.uniform();
    const double remaining = tau - t;
    Vector end = prop.advance(psi, remaining);
    const double end_norm2 = end.squaredNorm();
    if (end_norm2 > 1.0 + kNormSlack) {
      throw Error("sample_trajectory: norm increase detected (H_eff inconsistent)");
    }
    if (end_norm2 > r) {
      psi = end / std::sqrt(end_norm2);
      break;
    }
    auto [dt, cur] = prop.first_passage(psi, remaining, r);
    if (dt == 0.0) {
      // Crossing inside the first grid cell; keep jump times strictly increasing.
      dt = prop.finest_step();
      cur = prop.advance(psi, dt);
    }
    t = std::min(t + dt, tau);

    double total = 0.0;
    std::vector<double> w(sys.num_channels());
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] = (sys.jumps()[k].entries * cur).squaredNorm();
      total += w[k];
    }
    if (!(total > 0.0)) throw Error("sample_trajectory: no channel can fire at the jump time");
    const double u = rng.uniform() * total;
    std::size_t k = 0;
    double acc = w[0];
    while (k + 1 < w.size() && !(u < acc)) acc += w[++k];
    while (w[k] == 0.0 && k > 0) --k;  // u landed past the last nonzero weight

    psi = sys.jumps()[k].entries * cur;
    psi /= psi.norm();
    rec.jumps.push_back({t, sys.jumps()[k].channel_id});
    rec.phi += c[k];
  }
  rec.final_state = std::move(psi);
  return rec;
}

TrajectoryRecord sample_trajectory(const OpenSystem& sys, const Vector& psi0, double tau,
                                   const std::vector<double>& c, RngStream& rng) {
  if (tau == 0.0) {
    TrajectoryRecord rec;
    rec.final_state = psi0;
    return rec;
  }
  return sample_trajectory(sys, NoJumpPropagator(sys, tau), psi0, tau, c, rng);
}

Vector sample_eigen_mixture(const DensityOperator& rho, RngStream& rng) {
  const auto& ev = rho.eigenvalues();
  double total = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) total += std::max(ev(i), 0.0);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  Eigen::Index pick = ev.size() - 1;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    acc += std::max(ev(i), 0.0);
    if (u < acc) {
      pick = i;
      break;
    }
  }
  while (pick > 0 && ev(pick) <= 0.0) --pick;
  Vector v = rho.eigenvectors().col(pick);
  return v / v.norm();
}

unsigned resolve_thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QTB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

EnsembleEstimate estimate_moments(const LiouvillianBundle& b, const CountingVector& c, double tau,
                                  std::size_t n, std::uint64_t seed, const EnsembleOptions& opt) {
  if (n < 2) throw Error("estimate_moments: N must be >= 2");
  if (!(tau > 0.0)) throw Error("estimate_moments: tau must be positive");
  const OpenSystem& sys = b.system;
  const auto w = c.aligned(sys);
  const DensityOperator& rho0 = opt.initial_state ? *opt.initial_state : b.pi;
  if (rho0.dim() != sys.dim()) throw Error("estimate_moments: initial state dimension mismatch");
  const NoJumpPropagator prop(sys, tau);
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  const auto d = sys.dim();

  std::vector<ChunkResult> results(num_chunks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    try {
      while (!failed) {
        const std::size_t ci = next.fetch_add(1);
        if (ci >= num_chunks) return;
        ChunkResult res;
        res.counts.assign(sys.num_channels(), 0);
        res.rho_sum = Matrix::Zero(d, d);
        const std::size_t lo = ci * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) {
          RngStream rng(seed, i);
          const Vector psi0 = sample_eigen_mixture(rho0, rng);
          const auto rec = sample_trajectory(sys, prop, psi0, tau, w, rng);
          res.moments.push(rec.phi);
          for (const auto& e : rec.jumps) ++res.counts[sys.index_of(e.channel_id)];
          res.rho_sum += rec.final_state * rec.final_state.adjoint();
        }
        results[ci] = std::move(res);
      }
    } catch (...) {
      if (!failed.exchange(true)) failure = std::current_exception();
    }
  };
  const unsigned threads =
      std::min<unsigned>(resolve_thread_count(opt.threads), static_cast<unsigned>(num_chunks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  Moments total;
  EnsembleEstimate est;
  est.channel_counts.assign(sys.num_channels(), 0);
  est.average_final_state = Matrix::Zero(d, d);
  for (const auto& r : results) {
    total.merge(r.moments);
    for (std::size_t k = 0; k < r.counts.size(); ++k) est.channel_counts[k] += r.counts[k];
    est.average_final_state += r.rho_sum;
  }
  const double nn = static_cast<double>(n);
  est.seed = seed;
  est.samples = n;
  est.tau = tau;
  est.mean = total.mean;
  est.variance = total.m2 / (nn - 1.0);
  est.mean_se = std::sqrt(est.variance / nn);
  const double pop_var = total.m2 / nn;
  est.variance_se = std::sqrt(std::max(total.m4 / nn - pop_var * pop_var, 0.0) / nn);
  est.average_final_state /= nn;
  return est;
}

EnsembleEstimate estimate_moments(const OpenSystem& sys, const CountingVector& c, double tau,
                                  std::size_t n, std::uint64_t seed, const EnsembleOptions& opt) {
  return estimate_moments(LiouvillianBundle(sys), c, tau, n, seed, opt);
}

std::vector<TrajectoryRecord> sample_ensemble(const LiouvillianBundle& b, const CountingVector& c,
                                              double tau, std::size_t n, std::uint64_t seed) {
  const auto w = c.aligned(b.system);
  const NoJumpPropagator prop(b.system, tau);
  std::vector<TrajectoryRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, i);
    const Vector psi0 = sample_eigen_mixture(b.pi, rng);
    out.push_back(sample_trajectory(b.system, prop, psi0, tau, w, rng));
  }
  return out;
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records,
                          std::uint64_t seed, double tau) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", tau);
  os << "# seed=" << seed << "\n# tau=" << buf << "\n# trajectories=" << records.size() << "\n";
  os << "time,channel\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    os << "# trajectory " << i << "\n";
    for (const auto& e : records[i].jumps) {
      std::snprintf(buf, sizeof buf, "%.17g", e.time);
      os << buf << "," << e.channel_id << "\n";
    }
  }
}

}  // namespace qtb

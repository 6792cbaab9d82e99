#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qtb/core.hpp"

namespace qtb {

/// Three-level maser in the frame rotating with the drive.
struct MaserParams {
  double gamma_h = 0.1;
  double gamma_c = 2.0;
  double n_h = 5.0;
  double n_c = 0.02;
  double omega = 0.15;  // drive amplitude
  double delta = 0.0;   // detuning

  void validate() const;
};

/// Levels 1, 2, 3 are basis indices 0, 1, 2. Channels are ordered
/// (1, 1*, 2, 2*) with ids 1..4. A zero occupation makes the matching
/// absorption channel vanish; it is dropped together with the pairing and a
/// note is appended to `notes` when given.
[[nodiscard]] OpenSystem build_maser(const MaserParams& p,
                                     std::vector<std::string>* notes = nullptr);

/// c = (1, -1, -1, 1): net hot absorptions plus net cold emissions, i.e. twice
/// the net number of completed cycles 1 -> 3 -> 2 -> 1.
[[nodiscard]] CountingVector maser_cycle_current();

/// omega / ln(1 + 1/n): the temperature at which a mode of energy omega has
/// Bose occupation n.
[[nodiscard]] double bath_temperature(double omega, double occupation);

/// A two-bath heat engine together with its heat counting vectors.
struct HeatEngine {
  OpenSystem system;
  CountingVector heat_hot;   // heat drawn from the hot bath
  CountingVector heat_cold;  // heat released into the cold bath
  double t_hot = 0.0;
  double t_cold = 0.0;
};

/// Maser heat currents for per-channel energy quanta omega_h (hot
/// transition 1 <-> 3) and omega_c (cold transition 2 <-> 3).
[[nodiscard]] HeatEngine maser_engine(const MaserParams& p, double omega_h, double omega_c);

struct EngineScanPoint {
  double delta = 0.0;
  double power = 0.0;
  double efficiency = 0.0;
  double carnot = 0.0;
  bool engine_regime = false;  // P > 0 and 0 < eta < eta_C
};

/// Evaluates power and efficiency of maser_engine over a detuning grid.
[[nodiscard]] std::vector<EngineScanPoint> scan_maser_engine(const MaserParams& base,
                                                             double omega_h, double omega_c,
                                                             const std::vector<double>& deltas,
                                                             double tau);

/// Classical continuous-time Markov chain; rates(m, n) is the rate of n -> m.
struct ClassicalChain {
  RealMatrix rates;
  /// Optional per-edge entropy changes ds(m, n) for the jump n -> m. When
  /// absent the pairing uses ln(w_mn / w_nm).
  std::optional<RealMatrix> entropy;

  [[nodiscard]] Eigen::Index dim() const { return rates.rows(); }
  /// Nonnegative finite off-diagonal rates and a strongly connected graph.
  void validate() const;
  [[nodiscard]] bool irreducible() const;
};

/// Directed edges (m, n) with w_mn > 0, in channel order; channel ids are 1-based positions.
[[nodiscard]] std::vector<std::pair<int, int>> classical_edges(const ClassicalChain& chain);

/// H = 0 and L = sqrt(w_mn) |m><n| per edge. With `with_pairing`, edge
/// (m, n) is paired with (n, m); a one-way edge is then an error.
[[nodiscard]] OpenSystem embed_classical(const ClassicalChain& chain, bool with_pairing = true);

/// Random irreducible chain with every off-diagonal rate in [lo, hi].
[[nodiscard]] ClassicalChain random_chain(Eigen::Index dim, std::uint64_t seed, double lo = 0.1,
                                          double hi = 2.0);

struct ClassicalEngineParams {
  double omega_h = 1.0;  // energy gap of the hot edge 0 <-> 2
  double omega_c = 0.4;  // energy gap of the cold edge 1 <-> 2
  double n_h = 2.0;
  double n_c = 0.1;
  double k_h = 1.0;
  double k_c = 1.0;
  double k_w = 1.0;      // symmetric work edge 0 <-> 1
};

/// Three-state engine with a hot edge 0 <-> 2, a cold edge 1 <-> 2 and an
/// unbiased work edge 0 <-> 1.
[[nodiscard]] HeatEngine classical_engine(const ClassicalEngineParams& p);

/// JSON model format, version 1. Complex entries are [re, im] pairs.
[[nodiscard]] OpenSystem parse_model(const std::string& text);
[[nodiscard]] std::string serialize_model(const OpenSystem& sys);
[[nodiscard]] OpenSystem load_model(const std::string& path);
void save_model(const std::string& path, const OpenSystem& sys);

}  // namespace qtb

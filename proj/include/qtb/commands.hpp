#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qtb/bounds.hpp"
#include "qtb/models.hpp"

namespace qtb {

/// Settings shared by every subcommand. `--config` files use the same keys
/// as the struct fields.
struct RunSpec {
  std::string model = "maser";  // "maser" or a model file path
  MaserParams maser;
  std::string parameter = "delta";  // delta, omega, gamma_h, gamma_c, n_h, n_c or tau
  double lo = 0.0;
  double hi = 2.0;
  int points = 21;
  double tau = 10.0;
  std::vector<double> counting;  // channel order; empty means the maser cycle current
  std::vector<std::string> bounds = {"tkur", "iur", "rkur"};
  std::uint64_t seed = 20240601;
  std::size_t trajectories = 100000;
  std::size_t rkur_samples = 0;  // random counting vectors per sweep point
  std::string delta_mode = "finite";
  std::optional<double> delta_override;  // test hook
  std::optional<double> omega_h;  // maser heat quanta; both enable power_efficiency
  std::optional<double> omega_c;
  std::vector<double> omega_prime;  // eps-response rate derivatives; empty means all 1
  std::size_t trials = 20;          // verify-classical
  int chain_dim = 4;
  std::string chain;   // verify-classical: JSON file {"rates": [[...]]}
  std::string output;  // empty: stdout
  std::string dump;    // traj: trajectory CSV path
  std::size_t dump_count = 100;

  /// Checks the fields every command uses.
  void validate() const;
  /// validate() plus the grid fields of a sweep.
  void validate_sweep() const;
};

/// Overlays the keys of a JSON object onto `spec`; unknown keys are errors.
void apply_config(RunSpec& spec, const std::string& json_text);

[[nodiscard]] std::vector<double> sweep_grid(const RunSpec& spec);

/// System of the spec with the swept parameter set to `x` (tau is not a
/// system parameter and leaves it unchanged).
[[nodiscard]] OpenSystem spec_system(const RunSpec& spec, double x);
[[nodiscard]] CountingVector spec_counting(const RunSpec& spec, const OpenSystem& sys);

struct SweepRow {
  double x = 0.0;
  double tau = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double fano = 0.0;  // F_phi; NaN when undefined
  double sigma = 0.0;
  double activity = 0.0;
  double delta_finite = 0.0;
  double delta_asymptotic = 0.0;
  double gap_s0 = 0.0;
  double gap_s05 = 0.0;
  double tkur_lhs = 0.0;
  double tkur_rhs = 0.0;
  double iur_rhs_s0 = 0.0;
  double iur_rhs_s05 = 0.0;
  double rkur_lhs = 0.0;
  double rkur_rhs = 0.0;
  double qfi_rate = 0.0;
  double rkur_random_max_ratio = 0.0;  // max lhs/rhs over the random vectors
  // 1 satisfied, 0 violated, -1 not applicable
  int tkur_ok = -1;
  int classical_violation = -1;
  int iur_s0_ok = -1;
  int iur_s05_ok = -1;
  int rkur_ok = -1;
  int rkur_random_ok = -1;
};

[[nodiscard]] SweepRow sweep_row(const RunSpec& spec, std::size_t index, double x);
[[nodiscard]] std::vector<SweepRow> run_sweep(const RunSpec& spec);
void write_sweep_csv(std::ostream& out, const RunSpec& spec, const std::vector<SweepRow>& rows);

/// Exit codes: 0 every applicable bound holds, 1 a bound failed, 2 bad input.
int cmd_sweep(const RunSpec& spec, std::ostream& out, std::ostream& err);
int cmd_bounds(const RunSpec& spec, std::ostream& out, std::ostream& err);
int cmd_traj(const RunSpec& spec, std::ostream& out, std::ostream& err);
int cmd_verify_classical(const RunSpec& spec, std::ostream& out, std::ostream& err);

[[nodiscard]] std::vector<BoundReport> bounds_reports(const RunSpec& spec);

}  // namespace qtb

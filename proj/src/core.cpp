#include "qtb/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace qtb {

namespace {

bool all_finite(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const cplx z = m.data()[i];
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  }
  return true;
}

}  // namespace

double hermiticity_residual(const Matrix& a) {
  const double scale = std::max(a.norm(), 1.0);
  return (a - a.adjoint()).norm() / scale;
}

HermitianOperator::HermitianOperator(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) throw Error("hermitian operator must be square");
  if (entries_.rows() < 1) throw Error("hermitian operator must be non-empty");
  if (!all_finite(entries_)) throw Error("hermitian operator has non-finite entries");
  const double r = hermiticity_residual(entries_);
  if (r > kTol.hermiticity) {
    std::ostringstream os;
    os << "operator is not Hermitian (residual " << r << ")";
    throw Error(os.str());
  }
}

JumpOperator::JumpOperator(int id, Matrix m) : channel_id(id), entries(std::move(m)) {
  if (channel_id < 1) throw Error("jump channel id must be >= 1");
  if (entries.rows() != entries.cols()) throw Error("jump operator must be square");
  if (!all_finite(entries)) throw Error("jump operator has non-finite entries");
}

DetailedBalancePairing::DetailedBalancePairing(std::vector<PairEntry> entries)
    : entries_(std::move(entries)) {
  std::set<int> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.k).second) {
      throw Error("pairing lists channel " + std::to_string(e.k) + " twice");
    }
    if (!std::isfinite(e.ds)) throw Error("pairing ds must be finite");
  }
  for (const auto& e : entries_) {
    if (!contains(e.k_star)) {
      throw Error("pairing is not an involution: partner " + std::to_string(e.k_star) +
                  " of channel " + std::to_string(e.k) + " is not listed");
    }
    if (partner(e.k_star) != e.k) {
      throw Error("pairing is not an involution at channel " + std::to_string(e.k));
    }
    if (e.k == e.k_star && e.ds != 0.0) {
      throw Error("self-paired channel " + std::to_string(e.k) + " must have ds = 0");
    }
    const double other = ds(e.k_star);
    if (std::abs(e.ds + other) > 1e-12 * std::max(1.0, std::abs(e.ds))) {
      throw Error("pairing ds is not antisymmetric for channel " + std::to_string(e.k));
    }
  }
}

bool DetailedBalancePairing::contains(int k) const {
  return std::any_of(entries_.begin(), entries_.end(), [k](const PairEntry& e) { return e.k == k; });
}

int DetailedBalancePairing::partner(int k) const {
  for (const auto& e : entries_)
    if (e.k == k) return e.k_star;
  throw Error("channel " + std::to_string(k) + " has no pairing entry");
}

double DetailedBalancePairing::ds(int k) const {
  for (const auto& e : entries_)
    if (e.k == k) return e.ds;
  throw Error("channel " + std::to_string(k) + " has no pairing entry");
}

OpenSystem::OpenSystem(HermitianOperator hamiltonian, std::vector<JumpOperator> jumps,
                       std::optional<DetailedBalancePairing> pairing)
    : hamiltonian_(std::move(hamiltonian)), jumps_(std::move(jumps)), pairing_(std::move(pairing)) {
  if (jumps_.empty()) throw Error("open system needs at least one jump operator");
  const auto d = hamiltonian_.dim();
  for (const auto& j : jumps_) {
    if (j.entries.rows() != d) {
      throw Error("dimension mismatch: jump " + std::to_string(j.channel_id) + " has dim " +
                  std::to_string(j.entries.rows()) + ", hamiltonian has dim " + std::to_string(d));
    }
  }
  if (pairing_) {
    for (const auto& j : jumps_) {
      if (!pairing_->contains(j.channel_id)) {
        throw Error("pairing does not cover channel " + std::to_string(j.channel_id));
      }
    }
    for (const auto& e : pairing_->entries()) {
      const bool known = std::any_of(jumps_.begin(), jumps_.end(),
                                     [&](const JumpOperator& j) { return j.channel_id == e.k; });
      if (!known) throw Error("pairing names unknown channel " + std::to_string(e.k));
    }
  }
}

std::vector<int> OpenSystem::channel_ids() const {
  std::vector<int> ids;
  ids.reserve(jumps_.size());
  for (const auto& j : jumps_) ids.push_back(j.channel_id);
  return ids;
}

std::size_t OpenSystem::index_of(int channel_id) const {
  for (std::size_t i = 0; i < jumps_.size(); ++i)
    if (jumps_[i].channel_id == channel_id) return i;
  throw Error("unknown channel " + std::to_string(channel_id));
}

std::size_t OpenSystem::partner_index(std::size_t index) const {
  if (!pairing_) throw Error("system has no detailed-balance pairing");
  return index_of(pairing_->partner(jumps_.at(index).channel_id));
}

DensityOperator::DensityOperator(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() < 1) {
    throw Error("density operator must be square and non-empty");
  }
  if (!all_finite(entries_)) throw Error("density operator has non-finite entries");
  if (hermiticity_residual(entries_) > kTol.hermiticity) {
    throw Error("density operator is not Hermitian");
  }
  const cplx tr = entries_.trace();
  if (std::abs(tr - 1.0) > kTol.trace) throw Error("density operator trace is not 1");
  Matrix herm = 0.5 * (entries_ + entries_.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
  eigenvalues_ = es.eigenvalues();
  eigenvectors_ = es.eigenvectors();
  if (eigenvalues_.minCoeff() < -kTol.positivity) {
    throw Error("density operator is not positive semidefinite");
  }
}

Matrix DensityOperator::power(double p, double rank_tol) const {
  if (p == 0.0) return Matrix::Identity(dim(), dim());
  if (p == 1.0) return entries_;
  if (min_eigenvalue() <= rank_tol) throw Error("stationary state not full rank");
  RealVector lam = eigenvalues_.array().pow(p);
  return eigenvectors_ * lam.cast<cplx>().asDiagonal() * eigenvectors_.adjoint();
}

CountingVector CountingVector::from_ordered(const OpenSystem& sys,
                                            const std::vector<double>& values) {
  if (values.size() != sys.num_channels()) {
    throw Error("counting vector has " + std::to_string(values.size()) + " entries, system has " +
                std::to_string(sys.num_channels()) + " channels");
  }
  std::map<int, double> w;
  for (std::size_t i = 0; i < values.size(); ++i) w[sys.jumps()[i].channel_id] = values[i];
  return CountingVector(std::move(w));
}

std::vector<double> CountingVector::aligned(const OpenSystem& sys) const {
  std::vector<double> out;
  out.reserve(sys.num_channels());
  for (const auto& j : sys.jumps()) {
    auto it = weights_.find(j.channel_id);
    if (it == weights_.end()) {
      throw Error("missing channel weight for channel " + std::to_string(j.channel_id));
    }
    out.push_back(it->second);
  }
  return out;
}

bool CountingVector::is_current(const OpenSystem& sys, double tol) const {
  if (!sys.pairing()) return false;
  const auto c = aligned(sys);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double partner = c[sys.partner_index(i)];
    if (std::abs(c[i] + partner) > tol * std::max(1.0, std::abs(c[i]))) return false;
  }
  return true;
}

bool CountingVector::is_zero() const {
  return std::all_of(weights_.begin(), weights_.end(), [](const auto& kv) { return kv.second == 0.0; });
}

Vector vectorize(const Matrix& a) {
  if (a.rows() != a.cols()) throw Error("vectorize: matrix must be square");
  const auto d = a.rows();
  Vector v(d * d);
  for (Eigen::Index m = 0; m < d; ++m)
    for (Eigen::Index n = 0; n < d; ++n) v(m * d + n) = a(m, n);
  return v;
}

Matrix unvectorize(const Vector& v, Eigen::Index dim) {
  if (v.size() != dim * dim) throw Error("unvectorize: length is not dim^2");
  Matrix a(dim, dim);
  for (Eigen::Index m = 0; m < dim; ++m)
    for (Eigen::Index n = 0; n < dim; ++n) a(m, n) = v(m * dim + n);
  return a;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Vector identity_vec(Eigen::Index dim) { return vectorize(Matrix::Identity(dim, dim)); }

void require_supported_s(double s) {
  if (s != 0.0 && s != 0.5) throw Error("inner-product weight s must be 0 or 1/2");
}

cplx inner_product_s(const Matrix& a, const Matrix& b, const DensityOperator& pi, double s) {
  require_supported_s(s);
  if (a.rows() != pi.dim() || b.rows() != pi.dim() || a.cols() != a.rows() || b.cols() != b.rows()) {
    throw Error("inner_product_s: dimension mismatch");
  }
  if (!pi.full_rank()) throw Error("stationary state not full rank");
  const Matrix ps = pi.power(s);
  const Matrix pr = pi.power(1.0 - s);
  return (a.adjoint() * ps * b * pr).trace();
}

double norm_s(const Matrix& a, const DensityOperator& pi, double s) {
  const cplx v = inner_product_s(a, a, pi, s);
  if (std::abs(v.imag()) > kTol.imaginary * std::max(1.0, std::abs(v.real()))) {
    throw Error("norm_s: inner product has non-negligible imaginary part");
  }
  return std::sqrt(std::max(v.real(), 0.0));
}

ValidationReport validate_system(const OpenSystem& sys, const Tolerances& tol) {
  ValidationReport rep;
  rep.hamiltonian_residual = hermiticity_residual(sys.hamiltonian().matrix());
  if (rep.hamiltonian_residual > tol.hermiticity) {
    rep.failures.push_back("hamiltonian is not Hermitian");
  }

  std::set<int> seen;
  for (const auto& j : sys.jumps()) {
    if (!seen.insert(j.channel_id).second) {
      rep.duplicate_ids.push_back(j.channel_id);
      rep.failures.push_back("duplicate channel id " + std::to_string(j.channel_id));
    }
  }

  if (!sys.pairing()) {
    rep.notes.emplace_back("no pairing; TKUR unavailable");
  } else if (rep.duplicate_ids.empty()) {
    for (const auto& e : sys.pairing()->entries()) {
      const Matrix& lk = sys.jumps()[sys.index_of(e.k)].entries;
      const Matrix& lks = sys.jumps()[sys.index_of(e.k_star)].entries;
      const double r = (lk - std::exp(e.ds / 2.0) * lks.adjoint()).norm();
      rep.pairing_residuals.push_back({e.k, e.k_star, r});
      if (!(r < tol.pairing)) {
        std::ostringstream os;
        os << "pairing residual " << r << " for channel " << e.k << " exceeds tolerance";
        rep.failures.push_back(os.str());
      }
    }
  }
  rep.passed = rep.failures.empty();
  return rep;
}

}  // namespace qtb

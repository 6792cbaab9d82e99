#pragma once

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "qtb/core.hpp"
#include "qtb/liouvillian.hpp"
#include "qtb/models.hpp"

namespace qtb::test {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

class Rand {
 public:
  explicit Rand(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }

  Matrix matrix(Eigen::Index d) {
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = cplx(uniform(-1, 1), uniform(-1, 1));
    }
    return m;
  }

  Matrix hermitian(Eigen::Index d) {
    const Matrix a = matrix(d);
    return 0.5 * (a + a.adjoint());
  }

  Matrix density(Eigen::Index d) {
    const Matrix a = matrix(d);
    Matrix rho = a * a.adjoint();
    return rho / rho.trace().real();
  }

 private:
  std::mt19937_64 eng_;
};

inline MaserParams maser_at(double delta) {
  MaserParams p;
  p.delta = delta;
  return p;
}

/// Direct Lindblad action, no vectorization.
inline Matrix lindblad_action(const OpenSystem& sys, const Matrix& rho) {
  const cplx i(0.0, 1.0);
  const Matrix& h = sys.hamiltonian().matrix();
  Matrix out = -i * (h * rho - rho * h);
  for (const auto& j : sys.jumps()) {
    const Matrix& l = j.entries;
    const Matrix ldl = l.adjoint() * l;
    out += l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl);
  }
  return out;
}

/// Classical Markov jump reference built from the rate matrix alone.
struct ClassicalReference {
  RealMatrix w;        // generator: off-diagonal rates, columns sum to zero
  RealVector pi;
  Eigen::Index d = 0;

  explicit ClassicalReference(const RealMatrix& rates) : d(rates.rows()) {
    w = rates;
    for (Eigen::Index n = 0; n < d; ++n) {
      w(n, n) = 0.0;
      w(n, n) = -w.col(n).sum();
    }
    Eigen::FullPivLU<RealMatrix> lu(w);
    RealVector k = lu.kernel().col(0);
    pi = k / k.sum();
  }

  double traffic(Eigen::Index m, Eigen::Index n) const { return w(m, n) * pi(n); }

  double activity() const {
    double a = 0.0;
    for (Eigen::Index m = 0; m < d; ++m)
      for (Eigen::Index n = 0; n < d; ++n)
        if (m != n) a += traffic(m, n);
    return a;
  }

  double sigma() const {
    double s = 0.0;
    for (Eigen::Index m = 0; m < d; ++m)
      for (Eigen::Index n = 0; n < d; ++n)
        if (m != n && w(m, n) > 0.0) s += traffic(m, n) * std::log(w(m, n) / w(n, m));
    return s;
  }

  /// Edge weights c(m, n) for jumps n -> m.
  RealMatrix counting_matrix(const RealMatrix& c) const {
    RealMatrix out = RealMatrix::Zero(d, d);
    for (Eigen::Index m = 0; m < d; ++m)
      for (Eigen::Index n = 0; n < d; ++n)
        if (m != n) out(m, n) = c(m, n) * w(m, n);
    return out;
  }

  double mean(const RealMatrix& c, double tau) const {
    return tau * counting_matrix(c).colwise().sum().dot(pi);
  }

  /// Var = tau sum c^2 t + 2 int_0^tau (tau - t) [1^T C e^{Wt} C pi - m^2] dt,
  /// with the integral done mode by mode on the eigenvalues of W.
  double variance(const RealMatrix& c, double tau) const {
    RealMatrix c2(d, d);
    for (Eigen::Index m = 0; m < d; ++m)
      for (Eigen::Index n = 0; n < d; ++n) c2(m, n) = m == n ? 0.0 : c(m, n) * c(m, n);
    const double first = tau * counting_matrix(c2).colwise().sum().dot(pi);
    const RealMatrix cm = counting_matrix(c);
    const double rate = cm.colwise().sum().dot(pi);
    Eigen::EigenSolver<RealMatrix> es(w);
    const Eigen::MatrixXcd v = es.eigenvectors();
    const Eigen::MatrixXcd vinv = v.inverse();
    const Eigen::VectorXcd left = (RealVector::Ones(d).transpose() * cm).transpose().cast<cplx>();
    const Eigen::VectorXcd right = (cm * pi).cast<cplx>();
    const Eigen::VectorXcd l2 = v.transpose() * left;
    const Eigen::VectorXcd r2 = vinv * right;
    cplx corr = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const cplx lam = es.eigenvalues()(i);
      cplx integral;
      if (std::abs(lam) < 1e-12) {
        integral = tau * tau / 2.0;
      } else {
        integral = (std::exp(lam * tau) - 1.0 - lam * tau) / (lam * lam);
      }
      corr += l2(i) * r2(i) * integral;
    }
    return first + 2.0 * (corr.real() - rate * rate * tau * tau / 2.0);
  }

  /// Long-time variance rate: sum c^2 t - 2 1^T C W^# C pi.
  double variance_rate(const RealMatrix& c) const {
    RealMatrix c2(d, d);
    for (Eigen::Index m = 0; m < d; ++m)
      for (Eigen::Index n = 0; n < d; ++n) c2(m, n) = m == n ? 0.0 : c(m, n) * c(m, n);
    const RealMatrix proj = pi * RealVector::Ones(d).transpose();
    const RealMatrix drazin = (w - proj).inverse() + proj;
    const RealMatrix cm = counting_matrix(c);
    return counting_matrix(c2).colwise().sum().dot(pi) -
           2.0 * RealVector::Ones(d).dot(cm * drazin * cm * pi);
  }
};

/// Edge matrix c(m, n) from weights aligned with classical_edges().
inline RealMatrix edge_matrix(const ClassicalChain& chain, const std::vector<double>& w) {
  RealMatrix c = RealMatrix::Zero(chain.dim(), chain.dim());
  const auto edges = classical_edges(chain);
  for (std::size_t i = 0; i < edges.size(); ++i) c(edges[i].first, edges[i].second) = w[i];
  return c;
}

}  // namespace qtb::test

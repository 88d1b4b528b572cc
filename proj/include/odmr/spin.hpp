#ifndef ODMR_SPIN_HPP
#define ODMR_SPIN_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace odmr::spin {

template <class Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <class Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

/// Zero-field-splitting parameters of a spin-1 ground state, in MHz.
/// E is stored as a nonnegative magnitude; resonance ordering carries the
/// sign information.
template <class Scalar>
struct ZfsParamsT {
  Scalar d;
  Scalar e;

  ZfsParamsT(Scalar d_mhz, Scalar e_mhz) : d(d_mhz), e(e_mhz) {
    if (!(d > Scalar(0))) throw std::invalid_argument("ZfsParams: D must be positive");
    if (!(e >= Scalar(0))) throw std::invalid_argument("ZfsParams: E must be nonnegative");
    if (!(e < d)) throw std::invalid_argument("ZfsParams: requires E < D");
  }
};

/// The two microwave resonance frequencies, in MHz, ordered nu1 <= nu2.
template <class Scalar>
struct TransitionPairT {
  Scalar nu1;
  Scalar nu2;

  TransitionPairT(Scalar nu1_mhz, Scalar nu2_mhz) : nu1(nu1_mhz), nu2(nu2_mhz) {
    if (!(nu1 > Scalar(0) && nu2 > Scalar(0)))
      throw std::invalid_argument("TransitionPair: frequencies must be positive");
    if (!(nu1 <= nu2)) throw std::invalid_argument("TransitionPair: requires nu1 <= nu2");
  }
};

using ZfsParams = ZfsParamsT<double>;
using TransitionPair = TransitionPairT<double>;

/// Ground-state Hamiltonian D·(S_z² − (2/3)·I) + E·(S_x² − S_y²) in the
/// {m_s = +1, 0, −1} basis with z along the crystal c axis. Real symmetric
/// and traceless; the E term couples m_s = ±1 with off-diagonal element E.
template <class Scalar>
Matrix3<Scalar> build_hamiltonian(const ZfsParamsT<Scalar>& p) {
  Matrix3<Scalar> h = Matrix3<Scalar>::Zero();
  const Scalar third = p.d / Scalar(3);
  h(0, 0) = third;
  h(1, 1) = Scalar(-2) * third;
  h(2, 2) = third;
  h(0, 2) = p.e;
  h(2, 0) = p.e;
  return h;
}

/// Closed-form spectrum {−2D/3, D/3 − E, D/3 + E}, ascending. The E < D
/// invariant makes this ordering unconditional.
template <class Scalar>
Vector3<Scalar> analytic_eigenvalues(const ZfsParamsT<Scalar>& p) {
  const Scalar third = p.d / Scalar(3);
  return Vector3<Scalar>(Scalar(-2) * third, third - p.e, third + p.e);
}

/// Numeric spectrum of a symmetric 3×3, ascending. The test suite holds this
/// route and analytic_eigenvalues to 1e−9 relative agreement.
template <class Scalar>
Vector3<Scalar> eigenvalues(const Matrix3<Scalar>& h) {
  const Scalar scale = h.template lpNorm<Eigen::Infinity>();
  const Scalar tol = Scalar(1e-12) * (Scalar(1) + scale);
  if ((h - h.transpose()).template lpNorm<Eigen::Infinity>() > tol)
    throw std::invalid_argument("eigenvalues: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix3<Scalar>> solver(h, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigenvalues: solver failed");
  return solver.eigenvalues();
}

/// nu1 = D − E, nu2 = D + E.
template <class Scalar>
TransitionPairT<Scalar> transitions_from_zfs(const ZfsParamsT<Scalar>& p) {
  return TransitionPairT<Scalar>(p.d - p.e, p.d + p.e);
}

/// Exact inverse of transitions_from_zfs: D = (nu1 + nu2)/2, E = (nu2 − nu1)/2.
template <class Scalar>
ZfsParamsT<Scalar> zfs_from_transitions(const TransitionPairT<Scalar>& t) {
  return ZfsParamsT<Scalar>((t.nu1 + t.nu2) / Scalar(2), (t.nu2 - t.nu1) / Scalar(2));
}

} // namespace odmr::spin

#endif

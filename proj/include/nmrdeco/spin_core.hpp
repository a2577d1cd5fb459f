#pragma once

// Dense complex linear algebra for systems of spin-1/2 nuclei.
//
// Conventions used everywhere in the library:
//   * basis state |up> has index 0, |down> has index 1;
//   * spin 1 is the leftmost (most significant) tensor factor, so spin k of n
//     lives in bit (n - k) of a basis index;
//   * spins are addressed with 1-based indices.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nmrdeco/errors.hpp"

namespace nmrdeco {

using Complex = std::complex<double>;

inline constexpr double kEntryTolerance = 1e-10;
inline constexpr double kEigenTolerance = 1e-9;
inline constexpr std::size_t kMaxSpins = 12;
// Dense eigen-decomposition of bigger states is too slow for a validity check.
inline constexpr std::size_t kMaxPsdCheckDim = 256;

enum class Axis { x, y, z };

inline char axis_name(Axis a) {
  switch (a) {
    case Axis::x: return 'x';
    case Axis::y: return 'y';
    case Axis::z: return 'z';
  }
  return '?';
}

// Square complex matrix whose dimension is a power of two.
class ComplexMatrix {
 public:
  ComplexMatrix() : ComplexMatrix(std::size_t{1}) {}

  explicit ComplexMatrix(std::size_t dim) : m_(Eigen::MatrixXcd::Zero(checked(dim), checked(dim))) {}

  explicit ComplexMatrix(Eigen::MatrixXcd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw InputError("matrix must be square");
    checked(static_cast<std::size_t>(m_.rows()));
  }

  ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows)
      : ComplexMatrix(rows.size()) {
    Eigen::Index r = 0;
    for (const auto& row : rows) {
      if (row.size() != rows.size()) throw InputError("matrix must be square");
      Eigen::Index c = 0;
      for (const auto& v : row) m_(r, c++) = v;
      ++r;
    }
  }

  static ComplexMatrix identity(std::size_t dim) {
    return ComplexMatrix(Eigen::MatrixXcd::Identity(checked(dim), checked(dim)));
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  std::size_t spin_count() const noexcept { return static_cast<std::size_t>(std::countr_zero(dim())); }

  Complex& operator()(std::size_t r, std::size_t c) { return m_(to_index(r), to_index(c)); }
  const Complex& operator()(std::size_t r, std::size_t c) const { return m_(to_index(r), to_index(c)); }

  const Eigen::MatrixXcd& eigen() const noexcept { return m_; }
  Eigen::MatrixXcd& eigen() noexcept { return m_; }

  Complex trace() const { return m_.trace(); }
  ComplexMatrix adjoint() const { return ComplexMatrix(Eigen::MatrixXcd(m_.adjoint())); }

  double max_abs_diff(const ComplexMatrix& other) const {
    if (dim() != other.dim()) throw InputError("dimension mismatch");
    return (m_ - other.m_).cwiseAbs().maxCoeff();
  }

  bool is_approx(const ComplexMatrix& other, double tol = kEntryTolerance) const {
    return dim() == other.dim() && max_abs_diff(other) <= tol;
  }

  bool is_hermitian(double tol = kEntryTolerance) const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= tol;
  }

  bool is_unitary(double tol = kEntryTolerance) const {
    const Eigen::MatrixXcd g = m_.adjoint() * m_;
    return (g - Eigen::MatrixXcd::Identity(m_.rows(), m_.cols())).cwiseAbs().maxCoeff() <= tol;
  }

  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.dim() != b.dim()) throw InputError("dimension mismatch in product");
    return ComplexMatrix(Eigen::MatrixXcd(a.m_ * b.m_));
  }
  friend ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.dim() != b.dim()) throw InputError("dimension mismatch in sum");
    return ComplexMatrix(Eigen::MatrixXcd(a.m_ + b.m_));
  }
  friend ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.dim() != b.dim()) throw InputError("dimension mismatch in difference");
    return ComplexMatrix(Eigen::MatrixXcd(a.m_ - b.m_));
  }
  friend ComplexMatrix operator*(Complex s, const ComplexMatrix& a) {
    return ComplexMatrix(Eigen::MatrixXcd(s * a.m_));
  }
  friend ComplexMatrix operator*(double s, const ComplexMatrix& a) { return Complex(s) * a; }

 private:
  static Eigen::Index to_index(std::size_t i) { return static_cast<Eigen::Index>(i); }

  static Eigen::Index checked(std::size_t dim) {
    if (dim == 0 || !std::has_single_bit(dim))
      throw InputError("matrix dimension " + std::to_string(dim) + " is not a power of two");
    if (dim > (std::size_t{1} << kMaxSpins))
      throw InputError("matrix dimension " + std::to_string(dim) + " exceeds the 12-spin limit");
    return static_cast<Eigen::Index>(dim);
  }

  Eigen::MatrixXcd m_;
};

// Kronecker product a (x) b, a being the more significant factor.
inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t db = b.dim();
  ComplexMatrix out(a.dim() * db);
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) {
      const Complex aij = a(i, j);
      if (aij == Complex{}) continue;
      out.eigen().block(i * db, j * db, db, db) = aij * b.eigen();
    }
  return out;
}

// ---------------------------------------------------------------------------
// Single-spin operators

struct SpinOperatorTriple {
  ComplexMatrix ix;
  ComplexMatrix iy;
  ComplexMatrix iz;
};

inline const SpinOperatorTriple& spin_operators() {
  static const SpinOperatorTriple ops{
      ComplexMatrix{{0.0, 0.5}, {0.5, 0.0}},
      ComplexMatrix{{0.0, Complex(0, -0.5)}, {Complex(0, 0.5), 0.0}},
      ComplexMatrix{{0.5, 0.0}, {0.0, -0.5}},
  };
  return ops;
}

inline const ComplexMatrix& spin_x() { return spin_operators().ix; }
inline const ComplexMatrix& spin_y() { return spin_operators().iy; }
inline const ComplexMatrix& spin_z() { return spin_operators().iz; }

// I- = Ix - i Iy = |down><up|
inline ComplexMatrix lowering() { return ComplexMatrix{{0.0, 0.0}, {1.0, 0.0}}; }
inline ComplexMatrix raising() { return ComplexMatrix{{0.0, 1.0}, {0.0, 0.0}}; }
inline ComplexMatrix projector_up() { return ComplexMatrix{{1.0, 0.0}, {0.0, 0.0}}; }
inline ComplexMatrix projector_down() { return ComplexMatrix{{0.0, 0.0}, {0.0, 1.0}}; }

inline const ComplexMatrix& spin_component(Axis a) {
  switch (a) {
    case Axis::x: return spin_x();
    case Axis::y: return spin_y();
    case Axis::z: return spin_z();
  }
  return spin_z();
}

// ---------------------------------------------------------------------------
// Index helpers

inline void check_spin_count(std::size_t n) {
  if (n < 1 || n > kMaxSpins)
    throw InputError("spin count " + std::to_string(n) + " outside [1, 12]");
}

inline void check_spin_index(std::size_t k, std::size_t n) {
  if (k < 1 || k > n)
    throw InputError("spin index " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
}

inline std::size_t spin_mask(std::size_t k, std::size_t n) { return std::size_t{1} << (n - k); }

// +1/2 for |up>, -1/2 for |down> of spin k in basis state `index`.
inline double spin_z_value(std::size_t index, std::size_t k, std::size_t n) {
  return (index & spin_mask(k, n)) ? -0.5 : 0.5;
}

// Sorted, duplicate-free, range-checked copy of a spin set.
inline std::vector<std::size_t> normalized_spin_set(std::span<const std::size_t> spins, std::size_t n,
                                                    const char* what) {
  std::vector<std::size_t> out(spins.begin(), spins.end());
  for (std::size_t k : out) check_spin_index(k, n);
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end())
    throw InputError(std::string(what) + " contains a repeated spin");
  return out;
}

// ---------------------------------------------------------------------------
// Operators on the full register

inline ComplexMatrix embed(const ComplexMatrix& op, std::size_t target, std::size_t n) {
  check_spin_count(n);
  check_spin_index(target, n);
  if (op.dim() != 2) throw InputError("embed expects a single-spin (2x2) operator");
  const std::size_t dim = std::size_t{1} << n;
  const std::size_t mask = spin_mask(target, n);
  ComplexMatrix out(dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t b = 0; b < 2; ++b) {
      const std::size_t c = b ? (r | mask) : (r & ~mask);
      out(r, c) = op((r & mask) ? 1 : 0, b);
    }
  return out;
}

// exp(-i angle I_axis) for one spin: cos(angle/2) 1 - 2i sin(angle/2) I_axis.
inline ComplexMatrix single_spin_rotation(double angle, Axis axis) {
  if (axis == Axis::z) throw InputError("z rotations are not physical pulses here");
  const ComplexMatrix& a = spin_component(axis);
  return ComplexMatrix(Eigen::MatrixXcd(std::cos(angle / 2) * Eigen::MatrixXcd::Identity(2, 2) -
                                        Complex(0, 2 * std::sin(angle / 2)) * a.eigen()));
}

inline ComplexMatrix rotation(double angle, Axis axis, std::span<const std::size_t> targets, std::size_t n) {
  check_spin_count(n);
  if (targets.empty()) throw InputError("rotation needs at least one target spin");
  const auto set = normalized_spin_set(targets, n, "rotation targets");
  const ComplexMatrix r = single_spin_rotation(angle, axis);
  const ComplexMatrix one = ComplexMatrix::identity(2);
  ComplexMatrix out = std::binary_search(set.begin(), set.end(), std::size_t{1}) ? r : one;
  for (std::size_t k = 2; k <= n; ++k)
    out = kron(out, std::binary_search(set.begin(), set.end(), k) ? r : one);
  return out;
}

inline ComplexMatrix rotation(double angle, Axis axis, std::initializer_list<std::size_t> targets,
                              std::size_t n) {
  return rotation(angle, axis, std::span<const std::size_t>(targets.begin(), targets.size()), n);
}

// exp(-i E_k t) along the diagonal.
inline std::vector<Complex> phase_factors(std::span<const double> energies, double t) {
  if (energies.empty() || !std::has_single_bit(energies.size()))
    throw InputError("energy vector length " + std::to_string(energies.size()) + " is not a power of two");
  if (!(t >= 0)) throw InputError("evolution time must be non-negative");
  std::vector<Complex> out(energies.size());
  for (std::size_t k = 0; k < energies.size(); ++k) out[k] = std::polar(1.0, -energies[k] * t);
  return out;
}

inline ComplexMatrix diagonal_propagator(std::span<const double> energies, double t) {
  const auto phases = phase_factors(energies, t);
  ComplexMatrix out(phases.size());
  for (std::size_t k = 0; k < phases.size(); ++k) out(k, k) = phases[k];
  return out;
}

// CNOT that flips `target` when `control` is |down>.
inline ComplexMatrix cnot(std::size_t control, std::size_t target, std::size_t n) {
  check_spin_count(n);
  check_spin_index(control, n);
  check_spin_index(target, n);
  if (control == target) throw InputError("cnot control and target must differ");
  const std::size_t dim = std::size_t{1} << n;
  const std::size_t cm = spin_mask(control, n);
  const std::size_t tm = spin_mask(target, n);
  ComplexMatrix out(dim);
  for (std::size_t c = 0; c < dim; ++c) out((c & cm) ? (c ^ tm) : c, c) = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Density matrices

enum class StateKind { TrueState, Deviation };

struct unchecked_t {
  explicit unchecked_t() = default;
};
inline constexpr unchecked_t unchecked{};

class DensityMatrix {
 public:
  // Validating constructors.
  static DensityMatrix true_state(ComplexMatrix m) {
    DensityMatrix d(std::move(m), StateKind::TrueState, unchecked);
    d.validate();
    return d;
  }
  static DensityMatrix deviation(ComplexMatrix m) {
    DensityMatrix d(std::move(m), StateKind::Deviation, unchecked);
    d.validate();
    return d;
  }
  static DensityMatrix make(ComplexMatrix m, StateKind kind) {
    return kind == StateKind::TrueState ? true_state(std::move(m)) : deviation(std::move(m));
  }

  // Used by operations that preserve the invariants by construction.
  DensityMatrix(ComplexMatrix m, StateKind kind, unchecked_t) : mat_(std::move(m)), kind_(kind) {}

  const ComplexMatrix& matrix() const noexcept { return mat_; }
  ComplexMatrix& mutable_matrix() noexcept { return mat_; }
  StateKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return mat_.dim(); }
  std::size_t spin_count() const noexcept { return mat_.spin_count(); }
  Complex operator()(std::size_t r, std::size_t c) const { return mat_(r, c); }

  Complex trace() const { return mat_.trace(); }
  double purity() const { return (mat_.eigen() * mat_.eigen()).trace().real(); }

  // Throws InvariantViolation when the state is not Hermitian, or for a
  // TrueState, when trace != 1 or (for dim <= 256) it has a negative eigenvalue.
  void validate() const {
    if (!mat_.is_hermitian(kEntryTolerance)) throw InvariantViolation("density matrix is not Hermitian");
    if (kind_ == StateKind::Deviation) return;
    if (std::abs(mat_.trace() - Complex(1.0)) > kEntryTolerance)
      throw InvariantViolation("true state has trace " + std::to_string(mat_.trace().real()) + ", expected 1");
    if (dim() <= kMaxPsdCheckDim && min_eigenvalue() < -kEigenTolerance)
      throw InvariantViolation("true state has a negative eigenvalue");
  }

  Eigen::VectorXd eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(mat_.eigen(), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }
  double min_eigenvalue() const { return eigenvalues().minCoeff(); }

  // Traceless part rho - Tr(rho)/dim.
  ComplexMatrix deviation_part() const {
    ComplexMatrix out = mat_;
    out.eigen().diagonal().array() -= mat_.trace() / static_cast<double>(dim());
    return out;
  }

 private:
  ComplexMatrix mat_;
  StateKind kind_;
};

inline DensityMatrix conjugate(const DensityMatrix& rho, const ComplexMatrix& u) {
  if (u.dim() != rho.dim())
    throw InputError("propagator dimension " + std::to_string(u.dim()) + " does not match state dimension " +
                     std::to_string(rho.dim()));
  if (!u.is_unitary(kEntryTolerance)) throw InputError("conjugate requires a unitary matrix");
  Eigen::MatrixXcd out = u.eigen() * rho.matrix().eigen() * u.eigen().adjoint();
  return DensityMatrix(ComplexMatrix(std::move(out)), rho.kind(), unchecked);
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> keep) {
  const std::size_t n = rho.spin_count();
  if (keep.empty()) throw InputError("partial_trace needs at least one kept spin");
  const auto kept = normalized_spin_set(keep, n, "kept spins");
  std::vector<std::size_t> traced;
  for (std::size_t k = 1; k <= n; ++k)
    if (!std::binary_search(kept.begin(), kept.end(), k)) traced.push_back(k);

  auto scatter = [n](std::size_t bits, const std::vector<std::size_t>& spins) {
    // bit j of `bits` (most significant first) goes to spin spins[j]
    std::size_t idx = 0;
    const std::size_t m = spins.size();
    for (std::size_t j = 0; j < m; ++j)
      if (bits & (std::size_t{1} << (m - 1 - j))) idx |= spin_mask(spins[j], n);
    return idx;
  };

  const std::size_t dk = std::size_t{1} << kept.size();
  const std::size_t de = std::size_t{1} << traced.size();
  std::vector<std::size_t> kept_offsets(dk), env_offsets(de);
  for (std::size_t i = 0; i < dk; ++i) kept_offsets[i] = scatter(i, kept);
  for (std::size_t e = 0; e < de; ++e) env_offsets[e] = scatter(e, traced);

  ComplexMatrix out(dk);
  const auto& m = rho.matrix();
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dk; ++j) {
      Complex s{};
      for (std::size_t e = 0; e < de; ++e) s += m(kept_offsets[i] | env_offsets[e], kept_offsets[j] | env_offsets[e]);
      out(i, j) = s;
    }
  return DensityMatrix(std::move(out), rho.kind(), unchecked);
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<std::size_t> keep) {
  return partial_trace(rho, std::span<const std::size_t>(keep.begin(), keep.size()));
}

}  // namespace nmrdeco

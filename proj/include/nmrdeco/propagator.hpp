#pragma once

// Structured unitaries. Every propagator in the simulator is a rotation on a
// subset of spins, a diagonal phase evolution, or a CNOT, and each of them can
// be applied to a density matrix without forming the dense 2^n x 2^n unitary.

#include <span>
#include <variant>
#include <vector>

#include "nmrdeco/spin_core.hpp"

namespace nmrdeco {

struct RotationOp {
  double angle = 0.0;
  Axis axis = Axis::x;
  std::vector<std::size_t> targets;  // 1-based, sorted
  std::size_t spin_count = 1;
  bool operator==(const RotationOp&) const = default;
};

struct PhaseOp {
  std::vector<Complex> diagonal;
  bool operator==(const PhaseOp&) const = default;
};

struct CnotOp {
  std::size_t control = 1;
  std::size_t target = 2;
  std::size_t spin_count = 2;
  bool operator==(const CnotOp&) const = default;
};

using Propagator = std::variant<RotationOp, PhaseOp, CnotOp>;
using PropagatorList = std::vector<Propagator>;

inline RotationOp make_rotation(double angle, Axis axis, std::span<const std::size_t> targets, std::size_t n) {
  check_spin_count(n);
  if (targets.empty()) throw InputError("rotation needs at least one target spin");
  if (axis == Axis::z) throw InputError("z rotations are not physical pulses here");
  return RotationOp{angle, axis, normalized_spin_set(targets, n, "rotation targets"), n};
}

inline PhaseOp make_phase(std::span<const double> energies, double t) { return PhaseOp{phase_factors(energies, t)}; }

inline CnotOp make_cnot(std::size_t control, std::size_t target, std::size_t n) {
  check_spin_count(n);
  check_spin_index(control, n);
  check_spin_index(target, n);
  if (control == target) throw InputError("cnot control and target must differ");
  return CnotOp{control, target, n};
}

inline std::size_t spin_count_of(const Propagator& p) {
  struct V {
    std::size_t operator()(const RotationOp& r) const { return r.spin_count; }
    std::size_t operator()(const PhaseOp& d) const { return static_cast<std::size_t>(std::countr_zero(d.diagonal.size())); }
    std::size_t operator()(const CnotOp& c) const { return c.spin_count; }
  };
  return std::visit(V{}, p);
}

inline ComplexMatrix to_matrix(const Propagator& p) {
  struct V {
    ComplexMatrix operator()(const RotationOp& r) const {
      return rotation(r.angle, r.axis, r.targets, r.spin_count);
    }
    ComplexMatrix operator()(const PhaseOp& d) const {
      ComplexMatrix out(d.diagonal.size());
      for (std::size_t k = 0; k < d.diagonal.size(); ++k) out(k, k) = d.diagonal[k];
      return out;
    }
    ComplexMatrix operator()(const CnotOp& c) const { return cnot(c.control, c.target, c.spin_count); }
  };
  return std::visit(V{}, p);
}

// U_k ... U_2 U_1 for a list applied in order U_1 first.
inline ComplexMatrix product(const PropagatorList& list, std::size_t n) {
  ComplexMatrix u = ComplexMatrix::identity(std::size_t{1} << n);
  for (const auto& p : list) {
    if (spin_count_of(p) != n) throw InputError("propagator spin count mismatch");
    u = to_matrix(p) * u;
  }
  return u;
}

namespace detail {

// rho <- (1 (x) u (x) 1) rho (1 (x) u (x) 1)^dagger with u acting on the spin
// selected by `mask`.
inline void apply_local(Eigen::MatrixXcd& m, const ComplexMatrix& u, std::size_t mask) {
  const Complex u00 = u(0, 0), u01 = u(0, 1), u10 = u(1, 0), u11 = u(1, 1);
  const auto dim = static_cast<std::size_t>(m.rows());
  // left multiply: mix row pairs
  for (std::size_t c = 0; c < dim; ++c) {
    Complex* col = m.col(static_cast<Eigen::Index>(c)).data();
    for (std::size_t r0 = 0; r0 < dim; ++r0) {
      if (r0 & mask) continue;
      const std::size_t r1 = r0 | mask;
      const Complex a = col[r0], b = col[r1];
      col[r0] = u00 * a + u01 * b;
      col[r1] = u10 * a + u11 * b;
    }
  }
  // right multiply by u^dagger: mix column pairs
  const Complex v00 = std::conj(u00), v01 = std::conj(u10), v10 = std::conj(u01), v11 = std::conj(u11);
  for (std::size_t c0 = 0; c0 < dim; ++c0) {
    if (c0 & mask) continue;
    const std::size_t c1 = c0 | mask;
    Complex* a = m.col(static_cast<Eigen::Index>(c0)).data();
    Complex* b = m.col(static_cast<Eigen::Index>(c1)).data();
    for (std::size_t r = 0; r < dim; ++r) {
      const Complex x = a[r], y = b[r];
      a[r] = x * v00 + y * v10;
      b[r] = x * v01 + y * v11;
    }
  }
}

}  // namespace detail

inline DensityMatrix apply(DensityMatrix rho, const Propagator& p) {
  const std::size_t n = rho.spin_count();
  if (spin_count_of(p) != n)
    throw InputError("propagator acts on " + std::to_string(spin_count_of(p)) + " spins, state has " +
                     std::to_string(n));
  Eigen::MatrixXcd& m = rho.mutable_matrix().eigen();
  if (const auto* r = std::get_if<RotationOp>(&p)) {
    const ComplexMatrix u = single_spin_rotation(r->angle, r->axis);
    for (std::size_t k : r->targets) detail::apply_local(m, u, spin_mask(k, n));
  } else if (const auto* d = std::get_if<PhaseOp>(&p)) {
    const auto dim = static_cast<Eigen::Index>(d->diagonal.size());
    for (Eigen::Index c = 0; c < dim; ++c) {
      const Complex pc = std::conj(d->diagonal[static_cast<std::size_t>(c)]);
      for (Eigen::Index r = 0; r < dim; ++r) m(r, c) *= d->diagonal[static_cast<std::size_t>(r)] * pc;
    }
  } else {
    const auto& c = std::get<CnotOp>(p);
    const std::size_t cm = spin_mask(c.control, n), tm = spin_mask(c.target, n);
    const std::size_t dim = rho.dim();
    // P rho P with P the involutive permutation i -> i ^ tm on control-down states.
    auto perm = [&](std::size_t i) { return (i & cm) ? (i ^ tm) : i; };
    for (std::size_t col = 0; col < dim; ++col) {
      const std::size_t pc = perm(col);
      if (pc < col) continue;
      m.col(static_cast<Eigen::Index>(col)).swap(m.col(static_cast<Eigen::Index>(pc)));
    }
    for (std::size_t row = 0; row < dim; ++row) {
      const std::size_t pr = perm(row);
      if (pr <= row) continue;
      m.row(static_cast<Eigen::Index>(row)).swap(m.row(static_cast<Eigen::Index>(pr)));
    }
  }
  return rho;
}

inline DensityMatrix apply_all(DensityMatrix rho, const PropagatorList& list) {
  for (const auto& p : list) rho = apply(std::move(rho), p);
  return rho;
}

}  // namespace nmrdeco

#pragma once

#include <span>
#include <vector>

#include "cjcm/hilbert.hpp"

namespace cjcm {

double fidelity(const PureState& a, const PureState& b);          // |<a|b>|^2
double fidelity(const DensityMatrix& rho, const PureState& psi);  // <psi|rho|psi>
double fidelity(const PureState& psi, const DensityMatrix& rho);
double fidelity(const DensityMatrix& a, const DensityMatrix& b);  // Uhlmann (Tr sqrt(sqrt(a) b sqrt(a)))^2

/// Partial trace onto `keep` (factor indices, returned in ascending order).
DensityMatrix reduce(const PureState& psi, std::span<const std::size_t> keep);
DensityMatrix reduce(const DensityMatrix& rho, std::span<const std::size_t> keep);
DensityMatrix reduce(const PureState& psi, std::initializer_list<std::size_t> keep);
DensityMatrix reduce(const DensityMatrix& rho, std::initializer_list<std::size_t> keep);

// Uniform rectangular grid of displacement amplitudes, row-major in Im(beta).
struct BetaGrid {
  std::vector<cplx> points;
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dx = 0.0;
  double dy = 0.0;

  static BetaGrid square(cplx center, double half_width, std::size_t per_side);
};

struct WignerMap {
  BetaGrid grid;
  std::vector<double> values;
  double max_imag_residue = 0.0;

  // Rectangle-rule integral over the grid.
  double integral() const;
  double max_abs() const;
};

/// W(beta) = (2/pi) Tr[rho D(beta) P D(beta)^+] from the closed-form Laguerre
/// matrix elements of the displaced parity, with no truncation of the
/// displaced state. `mode` must be a single oscillator factor.
WignerMap wigner_exact(const DensityMatrix& mode, const BetaGrid& grid);
double wigner_exact_at(const DensityMatrix& mode, cplx beta);

// von Neumann entropy in bits, eigenvalues below 1e-12 dropped.
double entanglement_entropy(const DensityMatrix& rho);

/// <2 n_b / N> on a CollectiveDicke factor: deviation of [b, b^+] from 1.
double bosonization_defect(const PureState& psi, std::size_t factor_index);
double bosonization_defect(const DensityMatrix& rho, std::size_t factor_index);

}  // namespace cjcm

#include "cjcm/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace cjcm {

namespace {

std::vector<std::size_t> sorted_keep(const SpaceDescriptor& space, std::span<const std::size_t> keep) {
  std::vector<std::size_t> k(keep.begin(), keep.end());
  std::sort(k.begin(), k.end());
  if (std::adjacent_find(k.begin(), k.end()) != k.end()) throw ValidationError("reduce: duplicate factor index");
  for (std::size_t i : k) {
    if (i >= space.size()) throw ValidationError("reduce: factor index " + std::to_string(i) + " out of range");
  }
  if (k.empty()) throw ValidationError("reduce: keep list is empty");
  return k;
}

// Split each full index into (kept index, traced index).
struct Split {
  std::vector<Eigen::Index> kept;
  std::vector<Eigen::Index> rest;
  Eigen::Index kept_dim = 1;
  Eigen::Index rest_dim = 1;
};

Split split_indices(const SpaceDescriptor& space, const std::vector<std::size_t>& keep) {
  std::vector<bool> is_kept(space.size(), false);
  for (std::size_t i : keep) is_kept[i] = true;
  Split s;
  for (std::size_t i = 0; i < space.size(); ++i) (is_kept[i] ? s.kept_dim : s.rest_dim) *= space.factor(i).dim();
  s.kept.resize(static_cast<std::size_t>(space.dim()));
  s.rest.resize(static_cast<std::size_t>(space.dim()));
  for (Eigen::Index idx = 0; idx < space.dim(); ++idx) {
    Eigen::Index k = 0;
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < space.size(); ++i) {
      const int lvl = space.level(idx, i);
      if (is_kept[i]) {
        k = k * space.factor(i).dim() + lvl;
      } else {
        r = r * space.factor(i).dim() + lvl;
      }
    }
    s.kept[static_cast<std::size_t>(idx)] = k;
    s.rest[static_cast<std::size_t>(idx)] = r;
  }
  return s;
}

DenseMat psd_sqrt(const DenseMat& m) {
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (m + m.adjoint()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

void require_single_mode(const DensityMatrix& mode) {
  if (mode.space().size() != 1 || !mode.space().factor(0).is_oscillator()) {
    throw ValidationError("Wigner function needs a single oscillator factor, got " + mode.space().describe());
  }
}

// X = D(beta) P D(beta)^+. For m >= n:
//   X_{mn} = (-1)^n sqrt(n!/m!) (2 beta)^{m-n} e^{-2|beta|^2} L_n^{(m-n)}(4|beta|^2),
// and X_{nm} = conj(X_{mn}).
cplx parity_trace(const DenseMat& rho, cplx beta) {
  const Eigen::Index d = rho.rows();
  const double r2 = std::norm(beta);
  const double x = 4.0 * r2;
  const double gauss = std::exp(-2.0 * r2);
  const double mag = 2.0 * std::abs(beta);
  const cplx dir = mag > 0.0 ? 2.0 * beta / mag : cplx{1.0, 0.0};
  cplx total = 0.0;
  for (Eigen::Index m = 0; m < d; ++m) {
    for (Eigen::Index n = 0; n <= m; ++n) {
      const unsigned k = static_cast<unsigned>(m - n);
      double amp;
      if (k == 0) {
        amp = 1.0;
      } else if (mag == 0.0) {
        continue;
      } else {
        amp = std::exp(0.5 * (std::lgamma(n + 1.0) - std::lgamma(m + 1.0)) + k * std::log(mag));
      }
      const double lag = std::assoc_laguerre(static_cast<unsigned>(n), k, x);
      const double sign = (n % 2 == 0) ? 1.0 : -1.0;
      const cplx xmn = sign * amp * gauss * lag * std::pow(dir, static_cast<int>(k));
      // Tr(rho X) = sum_{m,n} rho_{nm} X_{mn}
      total += rho(n, m) * xmn;
      if (m != n) total += rho(m, n) * std::conj(xmn);
    }
  }
  return total;
}

}  // namespace

double fidelity(const PureState& a, const PureState& b) { return std::norm(a.inner(b)); }

double fidelity(const DensityMatrix& rho, const PureState& psi) {
  require_same_space(rho.space(), psi.space(), "fidelity");
  return std::clamp(psi.amplitudes().dot(rho.matrix() * psi.amplitudes()).real(), 0.0, 1.0);
}

double fidelity(const PureState& psi, const DensityMatrix& rho) { return fidelity(rho, psi); }

double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  require_same_space(a.space(), b.space(), "fidelity");
  const DenseMat sa = psd_sqrt(a.matrix());
  const DenseMat m = sa * b.matrix() * sa;
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  const double s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::clamp(s * s, 0.0, 1.0);
}

DensityMatrix reduce(const PureState& psi, std::span<const std::size_t> keep) {
  const auto k = sorted_keep(psi.space(), keep);
  const Split s = split_indices(psi.space(), k);
  DenseMat m = DenseMat::Zero(s.kept_dim, s.rest_dim);
  for (Eigen::Index idx = 0; idx < psi.space().dim(); ++idx) {
    m(s.kept[static_cast<std::size_t>(idx)], s.rest[static_cast<std::size_t>(idx)]) = psi.amplitudes()[idx];
  }
  return DensityMatrix(psi.space().subspace(k), m * m.adjoint());
}

DensityMatrix reduce(const DensityMatrix& rho, std::span<const std::size_t> keep) {
  const auto k = sorted_keep(rho.space(), keep);
  const Split s = split_indices(rho.space(), k);
  DenseMat out = DenseMat::Zero(s.kept_dim, s.kept_dim);
  const Eigen::Index d = rho.space().dim();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (s.rest[static_cast<std::size_t>(i)] != s.rest[static_cast<std::size_t>(j)]) continue;
      out(s.kept[static_cast<std::size_t>(i)], s.kept[static_cast<std::size_t>(j)]) += rho.matrix()(i, j);
    }
  }
  return DensityMatrix(rho.space().subspace(k), std::move(out));
}

DensityMatrix reduce(const PureState& psi, std::initializer_list<std::size_t> keep) {
  return reduce(psi, std::span<const std::size_t>(keep.begin(), keep.size()));
}

DensityMatrix reduce(const DensityMatrix& rho, std::initializer_list<std::size_t> keep) {
  return reduce(rho, std::span<const std::size_t>(keep.begin(), keep.size()));
}

BetaGrid BetaGrid::square(cplx center, double half_width, std::size_t per_side) {
  if (per_side < 2 || !(half_width > 0.0)) throw ValidationError("beta grid needs >= 2 points and positive width");
  BetaGrid g;
  g.nx = g.ny = per_side;
  g.dx = g.dy = 2.0 * half_width / static_cast<double>(per_side - 1);
  for (std::size_t iy = 0; iy < per_side; ++iy) {
    for (std::size_t ix = 0; ix < per_side; ++ix) {
      g.points.emplace_back(center.real() - half_width + g.dx * static_cast<double>(ix),
                            center.imag() - half_width + g.dy * static_cast<double>(iy));
    }
  }
  return g;
}

double WignerMap::integral() const {
  double s = 0.0;
  for (double w : values) s += w;
  return s * grid.dx * grid.dy;
}

double WignerMap::max_abs() const {
  double m = 0.0;
  for (double w : values) m = std::max(m, std::abs(w));
  return m;
}

WignerMap wigner_exact(const DensityMatrix& mode, const BetaGrid& grid) {
  require_single_mode(mode);
  WignerMap map;
  map.grid = grid;
  map.values.reserve(grid.points.size());
  for (cplx beta : grid.points) {
    const cplx w = (2.0 / kPi) * parity_trace(mode.matrix(), beta);
    map.max_imag_residue = std::max(map.max_imag_residue, std::abs(w.imag()));
    map.values.push_back(w.real());
  }
  return map;
}

double wigner_exact_at(const DensityMatrix& mode, cplx beta) {
  require_single_mode(mode);
  return (2.0 / kPi) * parity_trace(mode.matrix(), beta).real();
}

double entanglement_entropy(const DensityMatrix& rho) {
  const DenseMat h = 0.5 * (rho.matrix() + rho.matrix().adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(h, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double l = es.eigenvalues()[i];
    if (l > 1e-12) s -= l * std::log2(l);
  }
  return std::max(s, 0.0);
}

double bosonization_defect(const PureState& psi, std::size_t factor_index) {
  return bosonization_defect(DensityMatrix::from_pure(psi), factor_index);
}

double bosonization_defect(const DensityMatrix& rho, std::size_t factor_index) {
  const Factor& f = rho.space().factor(factor_index);
  if (f.kind != FactorKind::CollectiveDicke) {
    throw ValidationError("bosonization_defect needs a CollectiveDicke factor, got " + f.describe());
  }
  return 2.0 * rho.expectation(number_operator(rho.space(), factor_index)).real() / f.atoms;
}

}  // namespace cjcm

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cjcm/common.hpp"

namespace cjcm {

// Qubit basis convention used throughout: level 0 = |g>, level 1 = |e>.
// Dicke and Fock factors are indexed by excitation number.
enum class FactorKind {
  ControlQubit,
  CollectiveDicke,
  BosonMode,
  CavityFock,
  SampleAtom,  // one two-level atom of a sample, for per-atom (brute-force) spaces
};

struct Factor {
  FactorKind kind = FactorKind::ControlQubit;
  int atoms = 0;   // CollectiveDicke: N
  int cutoff = 0;  // highest retained excitation (m_max or n_max)
  int sample = 0;  // SampleAtom: owning sample

  static Factor control() { return {FactorKind::ControlQubit, 0, 1, 0}; }
  static Factor dicke(int atoms, int m_max) { return {FactorKind::CollectiveDicke, atoms, m_max, 0}; }
  static Factor boson(int n_max) { return {FactorKind::BosonMode, 0, n_max, 0}; }
  static Factor cavity(int n_max) { return {FactorKind::CavityFock, 0, n_max, 0}; }
  static Factor atom(int sample = 0) { return {FactorKind::SampleAtom, 1, 1, sample}; }

  Eigen::Index dim() const { return cutoff + 1; }
  bool is_qubit() const { return kind == FactorKind::ControlQubit || kind == FactorKind::SampleAtom; }
  bool is_oscillator() const { return kind == FactorKind::BosonMode || kind == FactorKind::CavityFock; }
  std::string describe() const;

  bool operator==(const Factor&) const = default;
};

// Ordered list of factors. The first factor is the most significant in the
// Kronecker index.
class SpaceDescriptor {
 public:
  const std::vector<Factor>& factors() const { return factors_; }
  std::size_t size() const { return factors_.size(); }
  const Factor& factor(std::size_t i) const;
  Eigen::Index dim() const { return dim_; }
  Eigen::Index stride(std::size_t i) const { return strides_.at(i); }

  Eigen::Index index_of(std::span<const int> levels) const;
  std::vector<int> levels_of(Eigen::Index index) const;
  int level(Eigen::Index index, std::size_t factor) const {
    return static_cast<int>((index / strides_[factor]) % factors_[factor].dim());
  }

  std::vector<std::size_t> find(FactorKind kind) const;
  SpaceDescriptor subspace(std::span<const std::size_t> keep) const;
  std::string describe() const;

  bool operator==(const SpaceDescriptor& other) const { return factors_ == other.factors_; }

 private:
  friend SpaceDescriptor make_space(std::vector<Factor> factors);
  explicit SpaceDescriptor(std::vector<Factor> factors);

  std::vector<Factor> factors_;
  std::vector<Eigen::Index> strides_;
  Eigen::Index dim_ = 1;
};

/// Validates truncations and builds the descriptor. Throws ValidationError on
/// an empty list, a cutoff < 1, or a Dicke cutoff above N.
SpaceDescriptor make_space(std::vector<Factor> factors);

void require_same_space(const SpaceDescriptor& a, const SpaceDescriptor& b, const char* context);

class Operator {
 public:
  struct Entry {
    Eigen::Index row;
    Eigen::Index col;
    cplx value;
    bool operator==(const Entry&) const = default;
  };

  Operator(SpaceDescriptor space, SparseMat matrix);

  static Operator zero(const SpaceDescriptor& space);
  static Operator identity(const SpaceDescriptor& space);

  const SpaceDescriptor& space() const { return space_; }
  const SparseMat& matrix() const { return matrix_; }
  Eigen::Index dim() const { return space_.dim(); }

  DenseMat dense() const { return DenseMat(matrix_); }
  cplx element(Eigen::Index row, Eigen::Index col) const { return matrix_.coeff(row, col); }
  // Row-major canonical entry list, explicit zeros removed.
  std::vector<Entry> entries() const;

  Operator adjoint() const;
  double hermiticity_defect() const;
  double max_abs() const;
  Vec apply(const Vec& v) const { return matrix_ * v; }

  Operator& operator+=(const Operator& other);
  Operator& operator-=(const Operator& other);
  Operator& operator*=(cplx s);

 private:
  SpaceDescriptor space_;
  SparseMat matrix_;
};

Operator operator+(Operator a, const Operator& b);
Operator operator-(Operator a, const Operator& b);
Operator operator*(const Operator& a, const Operator& b);
Operator operator*(cplx s, Operator a);
Operator operator*(double s, Operator a);
Operator commutator(const Operator& a, const Operator& b);
// Operator on the concatenated space a.space() ++ b.space().
Operator tensor(const Operator& a, const Operator& b);

// Single-factor matrices.
namespace local {
SparseMat identity(Eigen::Index dim);
SparseMat sigma_minus();  // |g><e|
SparseMat sigma_plus();
SparseMat sigma_x();
SparseMat sigma_y();
SparseMat sigma_z();  // |e><e| - |g><g|
SparseMat excited_projector();
SparseMat ground_projector();
SparseMat annihilation(int n_max);
SparseMat number(int n_max);
// <m-1|S^-|m> = sqrt(m (N - m + 1)) for m = 1..m_max
SparseMat dicke_lowering(int atoms, int m_max);
}  // namespace local

Operator embed(const SparseMat& local_op, const SpaceDescriptor& space, std::size_t factor_index);
Operator embed(const Operator& local_op, const SpaceDescriptor& space, std::size_t factor_index);

/// Unnormalized collective S^- on a CollectiveDicke factor. The bosonic mode
/// operator of the sample is this divided by sqrt(N).
Operator collective_lowering(const SpaceDescriptor& space, std::size_t factor_index);
Operator boson_annihilation(const SpaceDescriptor& space, std::size_t factor_index);
// Excitation number of a factor: |e><e| for qubits, m for Dicke, n for Fock.
Operator number_operator(const SpaceDescriptor& space, std::size_t factor_index);

class PureState {
 public:
  PureState(SpaceDescriptor space, Vec amplitudes);

  const SpaceDescriptor& space() const { return space_; }
  const Vec& amplitudes() const { return amplitudes_; }
  double norm() const { return amplitudes_.norm(); }
  PureState normalized() const;

  cplx inner(const PureState& other) const;  // <this|other>
  cplx expectation(const Operator& op) const;

 private:
  SpaceDescriptor space_;
  Vec amplitudes_;
};

class DensityMatrix {
 public:
  DensityMatrix(SpaceDescriptor space, DenseMat matrix);
  static DensityMatrix from_pure(const PureState& psi);

  const SpaceDescriptor& space() const { return space_; }
  const DenseMat& matrix() const { return matrix_; }

  cplx trace() const { return matrix_.trace(); }
  cplx expectation(const Operator& op) const;
  double purity() const;
  double hermiticity_defect() const;
  double min_eigenvalue() const;

 private:
  SpaceDescriptor space_;
  DenseMat matrix_;
};

PureState basis_state(const SpaceDescriptor& space, std::span<const int> levels);
PureState basis_state(const SpaceDescriptor& space, std::initializer_list<int> levels);
// Kronecker product of per-factor vectors (normalized on return).
PureState product_state(const SpaceDescriptor& space, const std::vector<Vec>& locals);

/// Truncated coherent amplitudes e^{-|a|^2/2} a^n / sqrt(n!), n = 0..n_max,
/// renormalized. Throws TruncationError when |a|^2 > n_max / 4 or the lost
/// tail mass exceeds 1e-8.
Vec coherent_amplitudes(int n_max, cplx alpha);
// Coherent state on one oscillator factor; every other factor in level 0.
PureState coherent_state(const SpaceDescriptor& space, std::size_t factor_index, cplx alpha);

/// D(beta) = exp(beta b^+ - conj(beta) b) on levels 0..n_max, by Hermitian
/// eigendecomposition of the truncated generator.
DenseMat displacement(int n_max, cplx beta);

/// Isometry from a space holding CollectiveDicke(N, N) factors into the
/// per-atom space where each such factor is replaced by N SampleAtom
/// factors. |m> maps to the normalized symmetric sum over m-excitation
/// configurations.
SparseMat symmetric_isometry(const SpaceDescriptor& dicke_space, const SpaceDescriptor& atom_space);

// Default excitation cutoff for a mode that must hold `target` excitations.
inline int default_cutoff(int target) { return target + 8; }

}  // namespace cjcm

#include "cjcm/hilbert.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace cjcm {

namespace {

SparseMat from_triplets(Eigen::Index rows, Eigen::Index cols, const std::vector<Eigen::Triplet<cplx>>& t) {
  SparseMat m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.prune(cplx{0.0, 0.0});
  m.makeCompressed();
  return m;
}

SparseMat kron(const SparseMat& a, const SparseMat& b) {
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
  for (Eigen::Index i = 0; i < a.outerSize(); ++i) {
    for (SparseMat::InnerIterator ia(a, i); ia; ++ia) {
      for (Eigen::Index k = 0; k < b.outerSize(); ++k) {
        for (SparseMat::InnerIterator ib(b, k); ib; ++ib) {
          t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                         ia.value() * ib.value());
        }
      }
    }
  }
  return from_triplets(a.rows() * b.rows(), a.cols() * b.cols(), t);
}

SparseMat canonical(SparseMat m) {
  m.prune(cplx{0.0, 0.0});
  m.makeCompressed();
  return m;
}

const char* kind_name(FactorKind k) {
  switch (k) {
    case FactorKind::ControlQubit: return "ControlQubit";
    case FactorKind::CollectiveDicke: return "CollectiveDicke";
    case FactorKind::BosonMode: return "BosonMode";
    case FactorKind::CavityFock: return "CavityFock";
    case FactorKind::SampleAtom: return "SampleAtom";
  }
  return "?";
}

}  // namespace

std::string Factor::describe() const {
  std::ostringstream os;
  os << kind_name(kind);
  switch (kind) {
    case FactorKind::CollectiveDicke: os << "(N=" << atoms << ", m_max=" << cutoff << ")"; break;
    case FactorKind::BosonMode:
    case FactorKind::CavityFock: os << "(n_max=" << cutoff << ")"; break;
    case FactorKind::SampleAtom: os << "(sample=" << sample << ")"; break;
    case FactorKind::ControlQubit: break;
  }
  return os.str();
}

SpaceDescriptor::SpaceDescriptor(std::vector<Factor> factors) : factors_(std::move(factors)) {
  strides_.assign(factors_.size(), 1);
  dim_ = 1;
  for (std::size_t i = factors_.size(); i-- > 0;) {
    strides_[i] = dim_;
    dim_ *= factors_[i].dim();
  }
}

const Factor& SpaceDescriptor::factor(std::size_t i) const {
  if (i >= factors_.size()) {
    throw ValidationError("factor index " + std::to_string(i) + " out of range for " + describe());
  }
  return factors_[i];
}

Eigen::Index SpaceDescriptor::index_of(std::span<const int> levels) const {
  if (levels.size() != factors_.size()) {
    throw ValidationError("level list length does not match factor count of " + describe());
  }
  Eigen::Index idx = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 0 || levels[i] > factors_[i].cutoff) {
      throw ValidationError("level " + std::to_string(levels[i]) + " outside " + factors_[i].describe());
    }
    idx += levels[i] * strides_[i];
  }
  return idx;
}

std::vector<int> SpaceDescriptor::levels_of(Eigen::Index index) const {
  std::vector<int> out(factors_.size());
  for (std::size_t i = 0; i < factors_.size(); ++i) out[i] = level(index, i);
  return out;
}

std::vector<std::size_t> SpaceDescriptor::find(FactorKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].kind == kind) out.push_back(i);
  }
  return out;
}

SpaceDescriptor SpaceDescriptor::subspace(std::span<const std::size_t> keep) const {
  std::vector<Factor> f;
  for (std::size_t k : keep) f.push_back(factor(k));
  return make_space(std::move(f));
}

std::string SpaceDescriptor::describe() const {
  std::string s = "[";
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (i) s += ", ";
    s += factors_[i].describe();
  }
  return s + "]";
}

SpaceDescriptor make_space(std::vector<Factor> factors) {
  if (factors.empty()) throw ValidationError("space needs at least one factor");
  for (const auto& f : factors) {
    if (f.cutoff < 1) throw ValidationError("truncation must be >= 1 in " + f.describe());
    if (f.is_qubit() && f.cutoff != 1) throw ValidationError("qubit factor must have dimension 2");
    if (f.kind == FactorKind::CollectiveDicke) {
      if (f.atoms < 1) throw ValidationError("Dicke factor needs N >= 1");
      if (f.cutoff > f.atoms) {
        throw ValidationError("Dicke truncation m_max=" + std::to_string(f.cutoff) +
                              " exceeds N=" + std::to_string(f.atoms));
      }
    }
  }
  return SpaceDescriptor(std::move(factors));
}

void require_same_space(const SpaceDescriptor& a, const SpaceDescriptor& b, const char* context) {
  if (!(a == b)) {
    throw ValidationError(std::string(context) + ": space mismatch " + a.describe() + " vs " + b.describe());
  }
}

// ---------------------------------------------------------------------------
// Operator

Operator::Operator(SpaceDescriptor space, SparseMat matrix) : space_(std::move(space)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != space_.dim() || matrix_.cols() != space_.dim()) {
    throw ValidationError("operator dimension " + std::to_string(matrix_.rows()) + " does not match space " +
                          space_.describe());
  }
  matrix_ = canonical(std::move(matrix_));
}

Operator Operator::zero(const SpaceDescriptor& space) { return Operator(space, SparseMat(space.dim(), space.dim())); }

Operator Operator::identity(const SpaceDescriptor& space) { return Operator(space, local::identity(space.dim())); }

std::vector<Operator::Entry> Operator::entries() const {
  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(matrix_.nonZeros()));
  for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(matrix_, r); it; ++it) out.push_back({it.row(), it.col(), it.value()});
  }
  return out;
}

Operator Operator::adjoint() const { return Operator(space_, SparseMat(matrix_.adjoint())); }

double Operator::hermiticity_defect() const {
  SparseMat d = matrix_ - SparseMat(matrix_.adjoint());
  double m = 0.0;
  for (Eigen::Index r = 0; r < d.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(d, r); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

double Operator::max_abs() const {
  double m = 0.0;
  for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(matrix_, r); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

Operator& Operator::operator+=(const Operator& other) {
  require_same_space(space_, other.space_, "operator +");
  matrix_ = canonical(matrix_ + other.matrix_);
  return *this;
}

Operator& Operator::operator-=(const Operator& other) {
  require_same_space(space_, other.space_, "operator -");
  matrix_ = canonical(matrix_ - other.matrix_);
  return *this;
}

Operator& Operator::operator*=(cplx s) {
  matrix_ = canonical(matrix_ * s);
  return *this;
}

Operator operator+(Operator a, const Operator& b) { return a += b; }
Operator operator-(Operator a, const Operator& b) { return a -= b; }

Operator operator*(const Operator& a, const Operator& b) {
  require_same_space(a.space(), b.space(), "operator *");
  return Operator(a.space(), SparseMat(a.matrix() * b.matrix()));
}

Operator operator*(cplx s, Operator a) { return a *= s; }
Operator operator*(double s, Operator a) { return a *= cplx{s, 0.0}; }

Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

Operator tensor(const Operator& a, const Operator& b) {
  std::vector<Factor> f = a.space().factors();
  f.insert(f.end(), b.space().factors().begin(), b.space().factors().end());
  return Operator(make_space(std::move(f)), kron(a.matrix(), b.matrix()));
}

// ---------------------------------------------------------------------------
// Local matrices

namespace local {

SparseMat identity(Eigen::Index dim) {
  SparseMat m(dim, dim);
  m.setIdentity();
  return canonical(std::move(m));
}

SparseMat sigma_minus() { return from_triplets(2, 2, {{0, 1, 1.0}}); }
SparseMat sigma_plus() { return from_triplets(2, 2, {{1, 0, 1.0}}); }
SparseMat sigma_x() { return from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}}); }
SparseMat sigma_y() { return from_triplets(2, 2, {{0, 1, kI}, {1, 0, -kI}}); }
SparseMat sigma_z() { return from_triplets(2, 2, {{0, 0, -1.0}, {1, 1, 1.0}}); }
SparseMat excited_projector() { return from_triplets(2, 2, {{1, 1, 1.0}}); }
SparseMat ground_projector() { return from_triplets(2, 2, {{0, 0, 1.0}}); }

SparseMat annihilation(int n_max) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 1; n <= n_max; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  return from_triplets(n_max + 1, n_max + 1, t);
}

SparseMat number(int n_max) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 1; n <= n_max; ++n) t.emplace_back(n, n, static_cast<double>(n));
  return from_triplets(n_max + 1, n_max + 1, t);
}

SparseMat dicke_lowering(int atoms, int m_max) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int m = 1; m <= m_max; ++m) {
    t.emplace_back(m - 1, m, std::sqrt(static_cast<double>(m) * static_cast<double>(atoms - m + 1)));
  }
  return from_triplets(m_max + 1, m_max + 1, t);
}

}  // namespace local

Operator embed(const SparseMat& local_op, const SpaceDescriptor& space, std::size_t factor_index) {
  const Factor& f = space.factor(factor_index);
  if (local_op.rows() != f.dim() || local_op.cols() != f.dim()) {
    throw ValidationError("local operator dimension " + std::to_string(local_op.rows()) + " does not match " +
                          f.describe());
  }
  const Eigen::Index inner = space.stride(factor_index);
  const Eigen::Index outer = space.dim() / (inner * f.dim());
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(local_op.nonZeros() * inner * outer));
  for (Eigen::Index o = 0; o < outer; ++o) {
    for (Eigen::Index r = 0; r < local_op.outerSize(); ++r) {
      for (SparseMat::InnerIterator it(local_op, r); it; ++it) {
        const Eigen::Index base_r = (o * f.dim() + it.row()) * inner;
        const Eigen::Index base_c = (o * f.dim() + it.col()) * inner;
        for (Eigen::Index i = 0; i < inner; ++i) t.emplace_back(base_r + i, base_c + i, it.value());
      }
    }
  }
  return Operator(space, from_triplets(space.dim(), space.dim(), t));
}

Operator embed(const Operator& local_op, const SpaceDescriptor& space, std::size_t factor_index) {
  if (local_op.space().size() != 1 || !(local_op.space().factor(0) == space.factor(factor_index))) {
    throw ValidationError("local operator space " + local_op.space().describe() + " does not match factor " +
                          std::to_string(factor_index) + " of " + space.describe());
  }
  return embed(local_op.matrix(), space, factor_index);
}

Operator collective_lowering(const SpaceDescriptor& space, std::size_t factor_index) {
  const Factor& f = space.factor(factor_index);
  if (f.kind != FactorKind::CollectiveDicke) {
    throw ValidationError("collective_lowering needs a CollectiveDicke factor, got " + f.describe());
  }
  return embed(local::dicke_lowering(f.atoms, f.cutoff), space, factor_index);
}

Operator boson_annihilation(const SpaceDescriptor& space, std::size_t factor_index) {
  const Factor& f = space.factor(factor_index);
  if (!f.is_oscillator()) throw ValidationError("boson_annihilation needs a Fock factor, got " + f.describe());
  return embed(local::annihilation(f.cutoff), space, factor_index);
}

Operator number_operator(const SpaceDescriptor& space, std::size_t factor_index) {
  const Factor& f = space.factor(factor_index);
  return embed(local::number(f.cutoff), space, factor_index);
}

// ---------------------------------------------------------------------------
// States

PureState::PureState(SpaceDescriptor space, Vec amplitudes) : space_(std::move(space)), amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() != space_.dim()) {
    throw ValidationError("state length " + std::to_string(amplitudes_.size()) + " does not match space " +
                          space_.describe());
  }
}

PureState PureState::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericsError("cannot normalize a zero or non-finite state");
  return PureState(space_, amplitudes_ / n);
}

cplx PureState::inner(const PureState& other) const {
  require_same_space(space_, other.space_, "inner product");
  return amplitudes_.dot(other.amplitudes_);
}

cplx PureState::expectation(const Operator& op) const {
  require_same_space(space_, op.space(), "expectation");
  return amplitudes_.dot(op.matrix() * amplitudes_);
}

DensityMatrix::DensityMatrix(SpaceDescriptor space, DenseMat matrix) : space_(std::move(space)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != space_.dim() || matrix_.cols() != space_.dim()) {
    throw ValidationError("density matrix dimension does not match space " + space_.describe());
  }
}

DensityMatrix DensityMatrix::from_pure(const PureState& psi) {
  return DensityMatrix(psi.space(), psi.amplitudes() * psi.amplitudes().adjoint());
}

cplx DensityMatrix::expectation(const Operator& op) const {
  require_same_space(space_, op.space(), "expectation");
  return (op.matrix() * matrix_).trace();
}

double DensityMatrix::purity() const { return (matrix_ * matrix_).trace().real(); }

double DensityMatrix::hermiticity_defect() const { return (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
  DenseMat h = 0.5 * (matrix_ + matrix_.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

PureState basis_state(const SpaceDescriptor& space, std::span<const int> levels) {
  Vec v = Vec::Zero(space.dim());
  v[space.index_of(levels)] = 1.0;
  return PureState(space, std::move(v));
}

PureState basis_state(const SpaceDescriptor& space, std::initializer_list<int> levels) {
  std::vector<int> l(levels);
  return basis_state(space, std::span<const int>(l));
}

PureState product_state(const SpaceDescriptor& space, const std::vector<Vec>& locals) {
  if (locals.size() != space.size()) throw ValidationError("product_state needs one vector per factor");
  Vec v = Vec::Ones(1);
  for (std::size_t i = 0; i < locals.size(); ++i) {
    if (locals[i].size() != space.factor(i).dim()) {
      throw ValidationError("local vector size mismatch for " + space.factor(i).describe());
    }
    Vec next(v.size() * locals[i].size());
    for (Eigen::Index a = 0; a < v.size(); ++a) next.segment(a * locals[i].size(), locals[i].size()) = v[a] * locals[i];
    v = std::move(next);
  }
  return PureState(space, std::move(v)).normalized();
}

Vec coherent_amplitudes(int n_max, cplx alpha) {
  const double nbar = std::norm(alpha);
  if (nbar > n_max / 4.0) {
    throw TruncationError("coherent state |alpha|^2=" + std::to_string(nbar) + " needs n_max >= " +
                          std::to_string(static_cast<int>(std::ceil(4.0 * nbar))) + ", have " + std::to_string(n_max));
  }
  Vec v(n_max + 1);
  cplx term = std::exp(-nbar / 2.0);
  v[0] = term;
  for (int n = 1; n <= n_max; ++n) {
    term *= alpha / std::sqrt(static_cast<double>(n));
    v[n] = term;
  }
  const double kept = v.squaredNorm();
  if (1.0 - kept > 1e-8) {
    throw TruncationError("coherent state tail mass " + std::to_string(1.0 - kept) + " above 1e-8 at n_max=" +
                          std::to_string(n_max));
  }
  return v / std::sqrt(kept);
}

PureState coherent_state(const SpaceDescriptor& space, std::size_t factor_index, cplx alpha) {
  const Factor& f = space.factor(factor_index);
  if (!f.is_oscillator()) throw ValidationError("coherent_state needs a Fock factor, got " + f.describe());
  std::vector<Vec> locals;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (i == factor_index) {
      locals.push_back(coherent_amplitudes(f.cutoff, alpha));
    } else {
      Vec g = Vec::Zero(space.factor(i).dim());
      g[0] = 1.0;
      locals.push_back(std::move(g));
    }
  }
  return product_state(space, locals);
}

DenseMat displacement(int n_max, cplx beta) {
  DenseMat a = DenseMat(local::annihilation(n_max));
  DenseMat k = kI * (beta * a.adjoint() - std::conj(beta) * a);  // Hermitian; D = exp(-iK)
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (k + k.adjoint()));
  Vec phases = (-kI * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

SparseMat symmetric_isometry(const SpaceDescriptor& dicke_space, const SpaceDescriptor& atom_space) {
  SparseMat iso = local::identity(1);
  std::size_t j = 0;
  for (const Factor& f : dicke_space.factors()) {
    if (f.kind == FactorKind::CollectiveDicke) {
      if (f.cutoff != f.atoms) throw ValidationError("symmetric_isometry needs untruncated Dicke factors");
      if (f.atoms > 20) throw ValidationError("per-atom expansion limited to N <= 20");
      for (int a = 0; a < f.atoms; ++a, ++j) {
        if (j >= atom_space.size() || atom_space.factor(j).kind != FactorKind::SampleAtom) {
          throw ValidationError("atom space does not expand " + f.describe());
        }
      }
      const Eigen::Index rows = Eigen::Index{1} << f.atoms;
      std::vector<Eigen::Triplet<cplx>> t;
      for (Eigen::Index cfg = 0; cfg < rows; ++cfg) {
        const int m = std::popcount(static_cast<unsigned long long>(cfg));
        const double binom = std::exp(std::lgamma(f.atoms + 1.0) - std::lgamma(m + 1.0) - std::lgamma(f.atoms - m + 1.0));
        t.emplace_back(cfg, m, 1.0 / std::sqrt(binom));
      }
      iso = kron(iso, from_triplets(rows, f.atoms + 1, t));
    } else {
      if (j >= atom_space.size() || !(atom_space.factor(j) == f)) {
        throw ValidationError("atom space factor mismatch at " + f.describe());
      }
      iso = kron(iso, local::identity(f.dim()));
      ++j;
    }
  }
  if (j != atom_space.size()) throw ValidationError("atom space has extra factors");
  return iso;
}

}  // namespace cjcm

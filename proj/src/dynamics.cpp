#include "cjcm/dynamics.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace cjcm {

template <class State>
const std::vector<double>& PropagationReport<State>::trace(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return traces[k];
  }
  throw ValidationError("no trace named " + std::string(name));
}

template struct PropagationReport<PureState>;
template struct PropagationReport<DensityMatrix>;

namespace {

template <class State>
void init_report(PropagationReport<State>& r, const PropagationOptions& o) {
  for (const auto& obs : o.observables) r.names.push_back(obs.name);
  r.traces.resize(o.observables.size());
}

template <class State>
void record(PropagationReport<State>& r, const PropagationOptions& o, double t, const State& s, double drift) {
  r.times.push_back(t);
  r.drift.push_back(drift);
  for (std::size_t k = 0; k < o.observables.size(); ++k) {
    r.traces[k].push_back(s.expectation(o.observables[k].op).real());
  }
  if (o.record_states) r.snapshots.push_back(s);
}

std::size_t step_count(double t_final, double dt) {
  if (!(t_final >= 0.0) || !std::isfinite(t_final)) throw ValidationError("t_final must be finite and >= 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
  return static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
}

}  // namespace

StaticPropagator::StaticPropagator(const Operator& h) : space_(h.space()) {
  if (h.dim() > kMaxEigenDim) {
    throw NumericsError("dimension " + std::to_string(h.dim()) + " exceeds eigendecomposition cap " +
                        std::to_string(kMaxEigenDim) + "; use the stepped integrator");
  }
  DenseMat d = h.dense();
  d = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(d);
  if (es.info() != Eigen::Success) throw NumericsError("Hermitian eigendecomposition failed");
  energies_ = es.eigenvalues();
  vectors_ = es.eigenvectors();
}

DenseMat StaticPropagator::unitary(double t) const {
  const Vec phases = (-kI * t * energies_.cast<cplx>()).array().exp();
  return vectors_ * phases.asDiagonal() * vectors_.adjoint();
}

PureState StaticPropagator::evolve(const PureState& psi, double t) const {
  require_same_space(space_, psi.space(), "StaticPropagator::evolve");
  if (t == 0.0) return psi;
  const Vec phases = (-kI * t * energies_.cast<cplx>()).array().exp();
  Vec coeffs = vectors_.adjoint() * psi.amplitudes();
  coeffs = coeffs.cwiseProduct(phases);
  return PureState(space_, vectors_ * coeffs);
}

DensityMatrix StaticPropagator::evolve(const DensityMatrix& rho, double t) const {
  require_same_space(space_, rho.space(), "StaticPropagator::evolve");
  if (t == 0.0) return rho;
  const DenseMat u = unitary(t);
  return DensityMatrix(space_, u * rho.matrix() * u.adjoint());
}

PureState propagate_static(const Operator& h, const PureState& psi0, double t) {
  require_same_space(h.space(), psi0.space(), "propagate_static");
  if (t == 0.0) return psi0;
  return StaticPropagator(h).evolve(psi0, t);
}

StateReport sample_static(const StaticPropagator& prop, const PureState& psi0, const std::vector<double>& times,
                          const PropagationOptions& options) {
  StateReport r{psi0, {}, {}, {}, {}, {}, 0.0, true, {}};
  init_report(r, options);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0 && !(times[i] > times[i - 1])) throw ValidationError("time grid must be strictly increasing");
    PureState s = prop.evolve(psi0, times[i]);
    record(r, options, times[i], s, 0.0);
    r.final_state = std::move(s);
  }
  return r;
}

StateReport propagate_timedep(const TimeDependentHamiltonian& h, const PureState& psi0, double t_final, double dt,
                              const PropagationOptions& options) {
  require_same_space(h.space(), psi0.space(), "propagate_timedep");
  const std::size_t steps = step_count(t_final, dt);
  const double step = steps ? t_final / static_cast<double>(steps) : 0.0;
  const std::size_t stride = std::max<std::size_t>(1, options.sample_stride);

  StateReport r{psi0, {}, {}, {}, {}, {}, 0.0, true, {}};
  init_report(r, options);
  Vec psi = psi0.amplitudes();
  const Eigen::Index n = psi.size();
  Vec k1(n), k2(n), k3(n), k4(n), tmp(n);
  double drift = 0.0;
  record(r, options, 0.0, psi0, drift);

  for (std::size_t s = 0; s < steps; ++s) {
    const double t = step * static_cast<double>(s);
    h.apply(t, psi, k1);
    k1 *= -kI;
    tmp = psi + (0.5 * step) * k1;
    h.apply(t + 0.5 * step, tmp, k2);
    k2 *= -kI;
    tmp = psi + (0.5 * step) * k2;
    h.apply(t + 0.5 * step, tmp, k3);
    k3 *= -kI;
    tmp = psi + step * k3;
    h.apply(t + step, tmp, k4);
    k4 *= -kI;
    psi += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    const double norm = psi.norm();
    if (!std::isfinite(norm)) {
      throw NumericsError("non-finite amplitudes at step " + std::to_string(s + 1));
    }
    drift += std::abs(norm - 1.0);
    psi /= norm;
    if ((s + 1) % stride == 0 || s + 1 == steps) {
      record(r, options, step * static_cast<double>(s + 1), PureState(psi0.space(), psi), drift);
    }
  }
  r.final_state = PureState(psi0.space(), psi);
  const double allowed = options.drift_tolerance * std::max(1.0, t_final / options.time_unit);
  if (drift > allowed) {
    r.converged = false;
    r.diagnostic = "norm drift " + std::to_string(drift) + " exceeds " + std::to_string(allowed);
  }
  return r;
}

DensityReport lindblad_evolve(const TimeDependentHamiltonian& h, const std::vector<CollapseChannel>& channels,
                              const DensityMatrix& rho0, double t_final, double dt, const PropagationOptions& options) {
  require_same_space(h.space(), rho0.space(), "lindblad_evolve");
  const Eigen::Index n = rho0.space().dim();
  if (n > kMaxLindbladDim) {
    throw NumericsError("dimension " + std::to_string(n) + " exceeds Lindblad cap " + std::to_string(kMaxLindbladDim));
  }
  SparseMat decay(n, n);  // sum_k gamma_k L_k^+ L_k
  std::vector<std::pair<SparseMat, SparseMat>> jumps;
  for (const auto& ch : channels) {
    require_same_space(ch.op.space(), rho0.space(), "collapse channel");
    if (!(ch.rate >= 0.0)) throw ValidationError("collapse rate must be >= 0");
    if (ch.rate == 0.0) continue;
    const SparseMat l = std::sqrt(ch.rate) * ch.op.matrix();
    const SparseMat ld = l.adjoint();
    decay = decay + SparseMat(ld * l);
    jumps.emplace_back(l, ld);
  }

  const bool fixed = h.is_constant();
  const SparseMat heff_fixed = fixed ? SparseMat(h.at(0.0).matrix() - (0.5 * kI) * decay) : SparseMat();
  DenseMat hr;
  auto rhs = [&](double t, const DenseMat& rho, DenseMat& out) {
    // H_eff = H - (i/2) decay;  d rho = -i(H_eff rho - rho H_eff^+) + sum L rho L^+.
    // (H_eff rho)^+ = rho H_eff^+ holds because every RK4 stage stays Hermitian.
    if (fixed) {
      hr.noalias() = heff_fixed * rho;
    } else {
      const SparseMat heff = h.at(t).matrix() - (0.5 * kI) * decay;
      hr.noalias() = heff * rho;
    }
    out = -kI * (hr - hr.adjoint());
    for (const auto& [l, ld] : jumps) out.noalias() += l * (rho * ld);
  };

  const std::size_t steps = step_count(t_final, dt);
  const double step = steps ? t_final / static_cast<double>(steps) : 0.0;
  const std::size_t stride = std::max<std::size_t>(1, options.sample_stride);

  DensityReport r{rho0, {}, {}, {}, {}, {}, 0.0, true, {}};
  init_report(r, options);
  DenseMat rho = rho0.matrix();
  DenseMat k1, k2, k3, k4;
  double drift = std::abs(rho.trace() - cplx{1.0, 0.0});
  r.min_eigenvalue = rho0.min_eigenvalue();
  record(r, options, 0.0, rho0, drift);

  for (std::size_t s = 0; s < steps; ++s) {
    const double t = step * static_cast<double>(s);
    rhs(t, rho, k1);
    rhs(t + 0.5 * step, rho + (0.5 * step) * k1, k2);
    rhs(t + 0.5 * step, rho + (0.5 * step) * k2, k3);
    rhs(t + step, rho + step * k3, k4);
    rho += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!rho.allFinite()) throw NumericsError("non-finite density matrix at step " + std::to_string(s + 1));
    drift = std::max(drift, std::abs(rho.trace() - cplx{1.0, 0.0}));
    if ((s + 1) % stride == 0 || s + 1 == steps) {
      DensityMatrix snap(rho0.space(), rho);
      r.min_eigenvalue = std::min(r.min_eigenvalue, snap.min_eigenvalue());
      record(r, options, step * static_cast<double>(s + 1), snap, drift);
    }
  }
  r.final_state = DensityMatrix(rho0.space(), rho);
  if (drift > options.trace_tolerance) {
    r.converged = false;
    r.diagnostic = "trace drift " + std::to_string(drift) + " exceeds " + std::to_string(options.trace_tolerance);
  }
  if (r.min_eigenvalue < options.positivity_floor) {
    r.converged = false;
    r.diagnostic += (r.diagnostic.empty() ? "" : "; ") + std::string("min eigenvalue ") +
                    std::to_string(r.min_eigenvalue) + " below floor";
  }
  return r;
}

DensityReport lindblad_evolve(const Operator& h, const std::vector<CollapseChannel>& channels,
                              const DensityMatrix& rho0, double t_final, double dt, const PropagationOptions& options) {
  return lindblad_evolve(TimeDependentHamiltonian::constant(h), channels, rho0, t_final, dt, options);
}

PureState jcm_analytic(JcmBranch branch, int n, double t, double epsilon, int atoms, int n_max) {
  if (n < 0 || n + 1 > n_max) throw ValidationError("jcm_analytic needs 0 <= n and n + 1 <= n_max");
  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(n_max)});
  const double theta = std::sqrt(n + 1.0) * epsilon * t;
  const cplx phase = std::exp(-kI * std::sqrt(static_cast<double>(atoms)) * epsilon * t * (n + 0.5));
  const Eigen::Index upper = space.index_of(std::vector<int>{1, n});
  const Eigen::Index lower = space.index_of(std::vector<int>{0, n + 1});
  Vec v = Vec::Zero(space.dim());
  const Eigen::Index start = branch == JcmBranch::ExcitedN ? upper : lower;
  const Eigen::Index other = branch == JcmBranch::ExcitedN ? lower : upper;
  v[start] = phase * std::cos(theta);
  v[other] = phase * (-kI) * std::sin(theta);
  return PureState(space, std::move(v));
}

}  // namespace cjcm

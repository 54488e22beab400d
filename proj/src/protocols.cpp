#include "cjcm/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

namespace cjcm {

const char* to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Jcm: return "jcm";
    case ModelKind::Dicke: return "dicke";
    case ModelKind::Full: return "full";
  }
  return "?";
}

namespace {

using State = std::variant<PureState, DensityMatrix>;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void append_unique(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& w : from) {
    if (std::find(into.begin(), into.end(), w) == into.end()) into.push_back(w);
  }
}

// Largest absolute row sum, an upper bound on the spectral radius.
double row_sum_norm(const Operator& h) {
  double best = 0.0;
  const SparseMat& m = h.matrix();
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double s = 0.0;
    for (SparseMat::InnerIterator it(m, r); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

// Fills Omega from the resonance condition when the caller left it at zero;
// otherwise keeps the given drive and warns when it is off resonance.
SystemParams resonant(SystemParams p, std::vector<std::string>& warnings) {
  if (p.omega == 0.0) {
    const ResonanceDrive r = resonance_drive(p);
    p.omega = r.omega;
    append_unique(warnings, r.warnings);
    return p;
  }
  const EffectiveParams e = effective_params(p);
  if (std::abs(e.detuning) > 1e-6 * std::abs(e.epsilon)) {
    warnings.push_back("drive is off resonance: delta/epsilon = " + fmt(e.detuning / e.epsilon));
  }
  return p;
}

PureState apply_op(const Operator& u, const PureState& psi) { return PureState(psi.space(), u.apply(psi.amplitudes())); }

State apply_op(const Operator& u, const State& s) {
  if (const auto* psi = std::get_if<PureState>(&s)) return apply_op(u, *psi);
  const auto& rho = std::get<DensityMatrix>(s);
  const DenseMat ud = u.dense();
  return DensityMatrix(rho.space(), ud * rho.matrix() * ud.adjoint());
}

DensityMatrix as_density(const State& s) {
  if (const auto* psi = std::get_if<PureState>(&s)) return DensityMatrix::from_pure(*psi);
  return std::get<DensityMatrix>(s);
}

DensityMatrix reduce_state(const State& s, std::span<const std::size_t> keep) {
  if (const auto* psi = std::get_if<PureState>(&s)) return reduce(*psi, keep);
  return reduce(std::get<DensityMatrix>(s), keep);
}

// Population of the highest retained level of a factor.
double top_population(const State& s, std::size_t factor) {
  const DensityMatrix r = reduce_state(s, std::vector<std::size_t>{factor});
  const Eigen::Index d = r.matrix().rows();
  return r.matrix()(d - 1, d - 1).real();
}

void require_top_empty(const State& s, std::size_t factor, double limit, const std::string& what) {
  const double p = top_population(s, factor);
  if (p > limit) {
    throw TruncationError(what + ": population " + fmt(p) + " in the highest retained level exceeds " + fmt(limit) +
                          "; raise the cutoff");
  }
}

std::vector<Observable> control_observables(const SpaceDescriptor& space, std::size_t c) {
  return {{"P_e", embed(local::excited_projector(), space, c)},
          {"P_g", embed(local::ground_projector(), space, c)},
          {"Sz_c", embed(local::sigma_z(), space, c)}};
}

// Propagates consecutive protocol segments and appends their samples to a
// ProtocolResult. The Hamiltonian is either static (exact eigendecomposition
// for pure states, RK4 Lindblad otherwise) or the time-dependent full model,
// whose phases continue across segments.
class SegmentRunner {
 public:
  SegmentRunner(std::vector<Observable> observables, std::size_t samples)
      : observables_(std::move(observables)), samples_(std::max<std::size_t>(samples, 2)) {}

  void set_static(const Operator& h) {
    static_h_ = h;
    if (h.dim() <= kMaxEigenDim) prop_.emplace(h);
  }
  void set_timedep(TimeDependentHamiltonian h, double time_unit) {
    timedep_ = std::move(h);
    time_unit_ = time_unit;
  }
  void set_channels(std::vector<CollapseChannel> channels) { channels_ = std::move(channels); }
  void set_dt(double dt) { dt_ = dt; }

  // Stepped static runs in the frame rotating at omega per excitation. Exact
  // when H conserves `excitations`, every jump lowers it by one and every
  // observable is diagonal in it; the final state is rotated back.
  void set_rotating_frame(const Operator& excitations, double omega) {
    if (!static_h_ || timedep_) throw ValidationError("rotating frame needs a static Hamiltonian");
    const double scale = std::max(1.0, static_h_->max_abs());
    auto conserved = [&](const Operator& op) { return commutator(op, excitations).max_abs() <= 1e-12 * scale; };
    if (!conserved(*static_h_)) throw ValidationError("rotating frame: Hamiltonian does not conserve excitations");
    for (const auto& o : observables_) {
      if (!conserved(o.op)) throw ValidationError("rotating frame: observable " + o.name + " is not excitation-diagonal");
    }
    for (const auto& c : channels_) {
      if ((commutator(excitations, c.op) + c.op).max_abs() > 1e-12 * std::max(1.0, c.op.max_abs())) {
        throw ValidationError("rotating frame: collapse operator does not lower excitations by one");
      }
    }
    frame_levels_.resize(excitations.dim());
    for (Eigen::Index i = 0; i < excitations.dim(); ++i) frame_levels_[i] = excitations.element(i, i).real();
    frame_omega_ = omega;
    frame_h_ = *static_h_ - omega * excitations;
  }

  State run(const State& s, double t0, double duration, ProtocolResult& out) {
    const bool skip_first = !out.times.empty();
    PropagationOptions o;
    o.observables = observables_;
    o.time_unit = time_unit_;
    const auto* psi = std::get_if<PureState>(&s);

    if (psi && channels_.empty() && !timedep_ && prop_) {
      std::vector<double> grid;
      for (std::size_t i = 0; i < samples_; ++i) grid.push_back(duration * static_cast<double>(i) / (samples_ - 1));
      const StateReport r = sample_static(*prop_, *psi, grid, o);
      absorb(r, t0, skip_first, out);
      return r.final_state;
    }

    const bool framed = frame_h_.has_value();
    const TimeDependentHamiltonian h = timedep_  ? timedep_->shifted(t0)
                                       : framed ? TimeDependentHamiltonian::constant(*frame_h_)
                                                : TimeDependentHamiltonian::constant(*static_h_);
    const double dt = step(duration);
    const std::size_t steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
    o.sample_stride = std::max<std::size_t>(1, steps / (samples_ - 1));
    out.metrics["steps"] += static_cast<double>(steps);

    if (psi && channels_.empty()) {
      const StateReport r = propagate_timedep(h, *psi, duration, dt, o);
      absorb(r, t0, skip_first, out);
      return r.final_state;
    }
    const DensityReport r = lindblad_evolve(h, channels_, as_density(s), duration, dt, o);
    absorb(r, t0, skip_first, out);
    if (!framed) return r.final_state;
    DenseMat rho = r.final_state.matrix();
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      for (Eigen::Index j = 0; j < rho.cols(); ++j) {
        rho(i, j) *= std::exp(-kI * frame_omega_ * duration * (frame_levels_[i] - frame_levels_[j]));
      }
    }
    return DensityMatrix(r.final_state.space(), std::move(rho));
  }

 private:
  double step(double duration) const {
    double dt = dt_;
    if (!(dt > 0.0)) {
      double scale = timedep_ ? 0.0 : row_sum_norm(frame_h_ ? *frame_h_ : *static_h_);
      if (timedep_) {
        // Upper bound on |H(t)| from the operator norms at two phases.
        scale = std::max(row_sum_norm(timedep_->at(0.0)), row_sum_norm(timedep_->at(0.37 * duration)));
      }
      for (const auto& c : channels_) scale += c.rate * row_sum_norm(c.op.adjoint() * c.op);
      dt = scale > 0.0 ? 0.02 / scale : duration;
    }
    return std::min(dt, duration);
  }

  template <class Report>
  void absorb(const Report& r, double t0, bool skip_first, ProtocolResult& out) const {
    for (std::size_t i = skip_first ? 1 : 0; i < r.times.size(); ++i) {
      out.times.push_back(t0 + r.times[i]);
      for (std::size_t k = 0; k < r.names.size(); ++k) out.traces[r.names[k]].push_back(r.traces[k][i]);
    }
    if constexpr (std::is_same_v<Report, DensityReport>) {
      auto [it, fresh] = out.metrics.try_emplace("min_eigenvalue", r.min_eigenvalue);
      if (!fresh) it->second = std::min(it->second, r.min_eigenvalue);
    }
    if (!r.converged) {
      out.converged = false;
      out.warnings.push_back("non-converged segment at t0=" + fmt(t0) + ": " + r.diagnostic);
    }
  }

  std::vector<Observable> observables_;
  std::size_t samples_;
  std::optional<Operator> static_h_;
  std::optional<StaticPropagator> prop_;
  std::optional<TimeDependentHamiltonian> timedep_;
  std::vector<CollapseChannel> channels_;
  double time_unit_ = 1.0;
  double dt_ = 0.0;
  std::optional<Operator> frame_h_;
  std::vector<double> frame_levels_;
  double frame_omega_ = 0.0;
};

// Single-sample spaces and Hamiltonians shared by the Fock ladder and the
// n-sample entangler. Index 0 is the control; `modes` lists the mode factors.
struct ModelSetup {
  SpaceDescriptor space;
  std::vector<std::size_t> modes;
  std::optional<std::size_t> cavity;
  std::optional<Operator> static_h;
  std::optional<TimeDependentHamiltonian> timedep;
};

ModelSetup build_model(ModelKind kind, const SystemParams& p, int cutoff, int cavity_cutoff) {
  std::vector<Factor> factors{Factor::control()};
  std::optional<std::size_t> cavity;
  if (kind == ModelKind::Full) {
    factors.push_back(Factor::cavity(cavity_cutoff));
    cavity = 1;
  }
  std::vector<std::size_t> modes;
  for (int j = 0; j < p.samples; ++j) {
    modes.push_back(factors.size());
    factors.push_back(kind == ModelKind::Jcm ? Factor::boson(cutoff) : Factor::dicke(p.atoms, std::min(cutoff, p.atoms)));
  }
  ModelSetup m{make_space(std::move(factors)), modes, cavity, std::nullopt, std::nullopt};
  switch (kind) {
    case ModelKind::Jcm:
      m.static_h = p.samples == 1 ? jcm_hamiltonian(m.space, p) : multi_sample_hamiltonian(m.space, p);
      break;
    case ModelKind::Dicke:
      m.static_h = effective_vacuum_hamiltonian(m.space, p);
      break;
    case ModelKind::Full:
      m.timedep = full_model(m.space, p);
      break;
  }
  return m;
}

std::vector<CollapseChannel> decoherence_channels(const ModelSetup& m, const DecoherenceRates& rates) {
  std::vector<CollapseChannel> ch;
  if (rates.gamma_eff > 0.0) ch.push_back({embed(local::sigma_minus(), m.space, 0), rates.gamma_eff});
  for (std::size_t k : m.modes) {
    const Operator b = mode_lowering(m.space, k);
    if (rates.gamma_eff > 0.0) ch.push_back({b, rates.gamma_eff});
    if (rates.kappa_eff > 0.0) ch.push_back({b, rates.kappa_eff});
  }
  return ch;
}

}  // namespace

// ---------------------------------------------------------------------------

ProtocolResult fock_ladder(const SystemParams& params, const FockLadderOptions& options) {
  if (options.target_n < 1) throw ValidationError("fock_ladder: target_n must be >= 1");
  if (params.samples != 1) throw ValidationError("fock_ladder: single sample only");
  ProtocolResult out;
  const SystemParams p = resonant(params, out.warnings);
  append_unique(out.warnings, regime_warnings(p));
  const EffectiveParams e = effective_params(p);

  int cutoff = options.cutoff > 0 ? options.cutoff : default_cutoff(options.target_n);
  if (options.model != ModelKind::Jcm) cutoff = std::min(cutoff, p.atoms);
  if (cutoff < options.target_n + 1) {
    throw TruncationError("fock_ladder: mode cutoff " + std::to_string(cutoff) + " cannot hold |" +
                          std::to_string(options.target_n) + "> with a spare level");
  }
  if (options.model == ModelKind::Full && options.cavity_cutoff < 1) {
    throw TruncationError("fock_ladder: cavity cutoff must be >= 1");
  }

  const ModelSetup m = build_model(options.model, p, cutoff, options.cavity_cutoff);
  const std::size_t mode = m.modes.front();
  auto obs = control_observables(m.space, 0);
  obs.push_back({"n_b", number_operator(m.space, mode)});
  {
    SparseMat proj(cutoff + 1, cutoff + 1);
    proj.insert(options.target_n, options.target_n) = 1.0;
    obs.push_back({"fidelity", embed(proj, m.space, mode)});
  }

  SegmentRunner runner(obs, options.samples_per_step);
  if (m.static_h) runner.set_static(*m.static_h);
  if (m.timedep) runner.set_timedep(*m.timedep, 1.0 / p.g);
  runner.set_dt(options.dt);
  const bool mixed = options.decoherence && options.decoherence->any();
  if (mixed) {
    runner.set_channels(decoherence_channels(m, *options.decoherence));
    if (options.model == ModelKind::Full) {
      out.warnings.push_back("decoherence rates applied to the full model are model-dependent");
    } else {
      Operator excitations = number_operator(m.space, 0);
      excitations += number_operator(m.space, mode);
      runner.set_rotating_frame(excitations, std::sqrt(static_cast<double>(p.atoms)) * e.epsilon);
    }
  }

  const Operator flip = embed(local::sigma_x(), m.space, 0);
  State s = basis_state(m.space, std::vector<int>(m.space.size(), 0));
  s = apply_op(flip, s);  // |e_c> with every mode and the cavity in vacuum
  if (mixed) s = as_density(s);

  double t = 0.0;
  for (int k = 1; k <= options.target_n; ++k) {
    const double dur = kPi / (2.0 * std::sqrt(static_cast<double>(k)) * e.epsilon);
    if (k > 1) s = apply_op(flip, s);
    out.schedule.push_back({"exchange", dur, k > 1, "k=" + std::to_string(k)});
    s = runner.run(s, t, dur, out);
    t += dur;
  }
  require_top_empty(s, mode, 1e-6, "fock_ladder mode");

  const SpaceDescriptor mode_space = m.space.subspace(std::vector<std::size_t>{mode});
  const PureState target = basis_state(mode_space, {options.target_n});
  const DensityMatrix rho_mode = reduce_state(s, std::vector<std::size_t>{mode});
  out.fidelity = fidelity(rho_mode, target);
  out.target = target;
  out.final_state = s;
  out.metrics["duration"] = t;
  out.metrics["epsilon"] = e.epsilon;
  out.metrics["control_excited"] = as_density(s).expectation(embed(local::excited_projector(), m.space, 0)).real();
  if (options.model == ModelKind::Dicke) out.metrics["bosonization_defect"] = bosonization_defect(as_density(s), mode);
  return out;
}

// ---------------------------------------------------------------------------

int coherent_cutoff(cplx alpha) {
  const double n = std::norm(alpha);
  const double r = std::abs(alpha);
  return std::max({static_cast<int>(std::ceil(4.0 * n)), static_cast<int>(std::ceil(n + 8.0 * r + 10.0)), 8});
}

CatReference cat_reference(cplx alpha, double t, const SystemParams& p, int cutoff) {
  const double nbar = std::norm(alpha);
  if (!(nbar > 0.0)) throw ValidationError("cat_reference: alpha must be nonzero");
  const EffectiveParams e = effective_params(p);
  const double eps = e.epsilon;
  const double sq_n = std::sqrt(static_cast<double>(p.atoms));
  const double root = std::sqrt(nbar);
  const double theta = std::arg(alpha);
  const Vec c = coherent_amplitudes(cutoff, alpha);
  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(cutoff)});

  auto branch = [&](double sign) {
    Vec mode(cutoff + 1);
    for (int n = 0; n <= cutoff; ++n) {
      const double dn = n - nbar;
      const double phase = -sq_n * eps * t * n - sign * eps * t * n / (2.0 * root) +
                           sign * dn * dn * eps * t / (8.0 * nbar * root);
      mode[n] = c[n] * std::exp(kI * phase);
    }
    Vec ctrl(2);
    ctrl[1] = std::exp(kI * (theta - sq_n * eps * t - sign * eps * t / (2.0 * root))) / std::sqrt(2.0);
    ctrl[0] = sign / std::sqrt(2.0);
    const cplx global = std::exp(-sign * kI * root * eps * t / 2.0) / std::sqrt(2.0);
    Vec amp(space.dim());
    for (int q = 0; q < 2; ++q) amp.segment(q * (cutoff + 1), cutoff + 1) = global * ctrl[q] * mode;
    return PureState(space, amp);
  };

  CatReference ref{branch(1.0), branch(-1.0), branch(1.0), 0.0};
  ref.superposition = PureState(space, ref.plus.amplitudes() - ref.minus.amplitudes());
  ref.branch_overlap = std::abs(ref.plus.inner(ref.minus)) / (ref.plus.norm() * ref.minus.norm());
  return ref;
}

ProtocolResult cat_resonant(cplx alpha, double t, const SystemParams& params, int cutoff) {
  ProtocolResult out;
  if (params.samples != 1) throw ValidationError("cat_resonant: single sample only");
  if (!(t >= 0.0)) throw ValidationError("cat_resonant: t must be >= 0");
  const double nbar = std::norm(alpha);
  if (nbar < 4.0) out.warnings.push_back("|alpha|^2 = " + fmt(nbar) + " is below 4; the branch picture is not meaningful");
  const SystemParams p = resonant(params, out.warnings);
  const EffectiveParams e = effective_params(p);
  if (cutoff <= 0) cutoff = coherent_cutoff(alpha);

  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(cutoff)});
  const PureState psi0 = product_state(space, {Vec::Unit(2, 0), coherent_amplitudes(cutoff, alpha)});
  auto obs = control_observables(space, 0);
  obs.push_back({"n_b", number_operator(space, 1)});

  SegmentRunner runner(obs, 201);
  runner.set_static(jcm_hamiltonian(space, p));
  out.schedule.push_back({"resonant", t, false, "alpha=" + fmt(alpha.real()) + (alpha.imag() < 0 ? "" : "+") +
                                                    fmt(alpha.imag()) + "i"});
  const State s = t > 0.0 ? runner.run(psi0, 0.0, t, out) : State(psi0);
  require_top_empty(s, 1, 1e-10, "cat_resonant mode");

  const PureState& exact = std::get<PureState>(s);
  const CatReference ref = cat_reference(alpha, t, p, cutoff);
  const double raw = std::norm(ref.superposition.inner(exact));
  const double ref_norm2 = std::norm(ref.superposition.norm());
  out.fidelity = std::clamp(raw / ref_norm2, 0.0, 1.0);
  out.target = ref.superposition.normalized();
  out.final_state = s;
  out.metrics["raw_overlap"] = raw;
  out.metrics["branch_overlap"] = ref.branch_overlap;
  out.metrics["reference_norm"] = std::sqrt(ref_norm2);
  out.metrics["eps_t_over_4nbar"] = e.epsilon * t / (4.0 * nbar);
  out.metrics["epsilon"] = e.epsilon;
  return out;
}

RevivalAnalysis collapse_revival(cplx alpha, double t_final, const SystemParams& params, std::size_t points,
                                 double collapse_level) {
  if (!(t_final > 0.0) || points < 16) throw ValidationError("collapse_revival: need t_final > 0 and >= 16 points");
  std::vector<std::string> ignored;
  const SystemParams p = resonant(params, ignored);
  const EffectiveParams e = effective_params(p);
  const int cutoff = coherent_cutoff(alpha);
  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(cutoff)});
  const PureState psi0 = product_state(space, {Vec::Unit(2, 0), coherent_amplitudes(cutoff, alpha)});

  RevivalAnalysis r;
  for (std::size_t i = 0; i < points; ++i) r.times.push_back(t_final * static_cast<double>(i) / (points - 1));
  PropagationOptions o;
  o.observables = {{"Sz_c", embed(local::sigma_z(), space, 0)}};
  const StateReport rep = sample_static(StaticPropagator(jcm_hamiltonian(space, p)), psi0, r.times, o);
  r.inversion = rep.traces.front();

  // Inversion oscillates at 2 sqrt(nbar) eps; the window spans one period.
  const double period = kPi / (std::sqrt(std::max(std::norm(alpha), 1.0)) * std::abs(e.epsilon));
  const double dt = r.times[1] - r.times[0];
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(0.5 * period / dt));
  const auto n = static_cast<std::ptrdiff_t>(points);
  r.envelope.resize(points);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half); j <= std::min(n - 1, i + half); ++j) {
      m = std::max(m, std::abs(r.inversion[j]));
    }
    r.envelope[i] = m;
  }
  for (std::size_t i = 0; i < points; ++i) {
    if (r.envelope[i] < collapse_level) {
      r.collapse_time = r.times[i];
      break;
    }
  }
  if (r.collapse_time > 0.0) {
    for (std::size_t i = 0; i < points; ++i) {
      if (r.times[i] > 2.0 * r.collapse_time && r.envelope[i] > r.revival_height) {
        r.revival_height = r.envelope[i];
        r.revival_time = r.times[i];
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

PureState dispersive_cat_state(cplx alpha, double phi, int cutoff) {
  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(cutoff)});
  const Vec excited = std::exp(-kI * phi) * coherent_amplitudes(cutoff, alpha * std::exp(-kI * phi));
  const Vec ground = coherent_amplitudes(cutoff, alpha * std::exp(kI * phi));
  Vec amp(space.dim());
  amp.head(cutoff + 1) = ground / std::sqrt(2.0);
  amp.tail(cutoff + 1) = excited / std::sqrt(2.0);
  return PureState(space, amp);
}

ProtocolResult cat_dispersive(cplx alpha, double t, const SystemParams& p, int cutoff) {
  ProtocolResult out;
  if (p.samples != 1) throw ValidationError("cat_dispersive: single sample only");
  if (!(t >= 0.0)) throw ValidationError("cat_dispersive: t must be >= 0");
  const EffectiveParams e = effective_params(p);
  if (e.detuning == 0.0) throw ValidationError("cat_dispersive: delta = 0 is the resonant case");
  append_unique(out.warnings, regime_warnings(p, true));
  if (cutoff <= 0) cutoff = coherent_cutoff(alpha);

  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(cutoff)});
  Vec plus(2);
  plus << 1.0, 1.0;
  const PureState psi0 = product_state(space, {plus, coherent_amplitudes(cutoff, alpha)});
  auto obs = control_observables(space, 0);
  obs.push_back({"n_b", number_operator(space, 1)});

  SegmentRunner runner(obs, 101);
  runner.set_static(dispersive_mode_hamiltonian(space, e));
  out.schedule.push_back({"dispersive", t, false, "chi=" + fmt(e.chi())});
  const State s = t > 0.0 ? runner.run(psi0, 0.0, t, out) : State(psi0);

  const double phi = e.chi() * t;
  const PureState target = dispersive_cat_state(alpha, phi, cutoff);
  const PureState& exact = std::get<PureState>(s);
  out.fidelity = fidelity(target, exact);
  out.target = target;
  out.final_state = s;
  out.metrics["phi"] = phi;
  out.metrics["mode_purity"] = reduce(exact, {1}).purity();
  out.metrics["purity_closed_form"] = 0.5 * (1.0 + std::exp(-4.0 * std::norm(alpha) * std::pow(std::sin(phi), 2)));
  out.metrics["chi"] = e.chi();
  return out;
}

// ---------------------------------------------------------------------------

PureState w_state(const SpaceDescriptor& modes) {
  Vec amp = Vec::Zero(modes.dim());
  const double w = 1.0 / std::sqrt(static_cast<double>(modes.size()));
  for (std::size_t j = 0; j < modes.size(); ++j) {
    if (modes.factor(j).cutoff < 1) throw TruncationError("w_state: factor cannot hold one excitation");
    amp[modes.stride(j)] = w;
  }
  return PureState(modes, amp);
}

ProtocolResult entangle_samples(int n_samples, const SystemParams& params, const EntangleOptions& options) {
  if (n_samples < 1) throw ValidationError("entangle_samples: need at least one sample");
  if (options.cutoff < 1) throw TruncationError("entangle_samples: mode cutoff must be >= 1");
  if (!(options.duration_scale > 0.0)) throw ValidationError("entangle_samples: duration_scale must be positive");
  ProtocolResult out;
  SystemParams p = params;
  p.samples = n_samples;
  p = resonant(p, out.warnings);
  append_unique(out.warnings, regime_warnings(p));
  const EffectiveParams e = effective_params(p);

  const ModelSetup m = build_model(options.model, p, options.cutoff, options.cavity_cutoff);
  auto obs = control_observables(m.space, 0);
  Operator n_total = Operator::zero(m.space);
  Operator bright = Operator::zero(m.space);
  for (std::size_t k : m.modes) {
    n_total += number_operator(m.space, k);
    bright += mode_lowering(m.space, k);
  }
  obs.push_back({"n_b", n_total});
  // Excitations outside the symmetric combination B = sum_j b_j (single-excitation sector).
  obs.push_back({"dark", n_total - (1.0 / n_samples) * (bright.adjoint() * bright)});
  {
    // Mode factors are trailing, so the W projector is identity (x) |W><W|.
    std::vector<std::size_t> head;
    for (std::size_t i = 0; i < m.modes.front(); ++i) head.push_back(i);
    const PureState w = w_state(m.space.subspace(m.modes));
    SparseMat proj = (w.amplitudes() * w.amplitudes().adjoint()).sparseView();
    obs.push_back({"fidelity", tensor(Operator::identity(m.space.subspace(head)), Operator(w.space(), proj))});
  }

  SegmentRunner runner(obs, options.samples);
  if (m.static_h) runner.set_static(*m.static_h);
  if (m.timedep) runner.set_timedep(*m.timedep, 1.0 / p.g);
  runner.set_dt(options.dt);

  const double duration = options.duration_scale * kPi / (2.0 * std::sqrt(static_cast<double>(n_samples)) * e.epsilon);
  State s = apply_op(embed(local::sigma_x(), m.space, 0), basis_state(m.space, std::vector<int>(m.space.size(), 0)));
  out.schedule.push_back({"exchange", duration, false, "n=" + std::to_string(n_samples)});
  s = runner.run(s, 0.0, duration, out);

  const DensityMatrix rho_modes = reduce_state(s, m.modes);
  const PureState target = w_state(rho_modes.space());
  out.fidelity = fidelity(rho_modes, target);
  out.target = target;
  out.final_state = s;
  const auto& dark = out.traces["dark"];
  out.metrics["duration"] = duration;
  out.metrics["epsilon"] = e.epsilon;
  out.metrics["control_ground_population"] = out.traces["P_g"].back();
  double dark_max = 0.0;
  for (double d : dark) dark_max = std::max(dark_max, std::abs(d));
  out.metrics["dark_population_max"] = dark_max;
  out.metrics["mode_entropy"] = entanglement_entropy(reduce_state(s, std::vector<std::size_t>{m.modes.front()}));
  const double q = 1.0 / n_samples;
  out.metrics["mode_entropy_closed_form"] = n_samples == 1 ? 0.0 : -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
  if (n_samples > 1 && options.model != ModelKind::Jcm) {
    out.warnings.push_back("multi-sample decoherence, if added, is model-dependent");
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Displacement D(beta) on levels 0..n_max from one eigendecomposition of
// K = i(b^+ - b): D = R V e^{-i|beta| lambda} V^+ R^+, R = diag(e^{i arg(beta) n}).
class Displacer {
 public:
  explicit Displacer(int n_max) : n_max_(n_max) {
    const DenseMat a = DenseMat(local::annihilation(n_max));
    const DenseMat k = kI * (a.adjoint() - a);
    Eigen::SelfAdjointEigenSolver<DenseMat> es(k);
    if (es.info() != Eigen::Success) throw NumericsError("displacement eigendecomposition failed");
    lambda_ = es.eigenvalues();
    v_ = es.eigenvectors();
  }

  Vec apply(cplx beta, const Vec& psi) const {
    const double r = std::abs(beta);
    const double th = std::arg(beta);
    Vec w(psi.size());
    for (Eigen::Index n = 0; n < psi.size(); ++n) w[n] = std::exp(-kI * th * static_cast<double>(n)) * psi[n];
    Vec x = v_.adjoint() * w;
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] *= std::exp(-kI * r * lambda_[j]);
    w = v_ * x;
    for (Eigen::Index n = 0; n < w.size(); ++n) w[n] *= std::exp(kI * th * static_cast<double>(n));
    return w;
  }

  int n_max() const { return n_max_; }

 private:
  int n_max_;
  Eigen::VectorXd lambda_;
  DenseMat v_;
};

void require_single_oscillator(const SpaceDescriptor& s) {
  if (s.size() != 1 || !s.factor(0).is_oscillator()) {
    throw ValidationError("wigner_measurement needs a single oscillator factor, got " + s.describe());
  }
}

Vec padded(const Vec& v, int n_max) {
  Vec out = Vec::Zero(n_max + 1);
  out.head(v.size()) = v;
  return out;
}

// Working truncation for displacing a state supported on 0..support by any grid point.
int working_cutoff(int support, const BetaGrid& grid) {
  double max_beta = 0.0;
  for (cplx b : grid.points) {
    if (!std::isfinite(b.real()) || !std::isfinite(b.imag())) throw ValidationError("wigner_measurement: non-finite beta");
    max_beta = std::max(max_beta, std::abs(b));
  }
  const double r = std::sqrt(static_cast<double>(support)) + max_beta;
  return std::max(support, static_cast<int>(std::ceil(r * r + 6.0 * r + 12.0)));
}

// components: (weight, amplitudes on 0..n_work) of the mode state.
WignerMap measure(const std::vector<std::pair<double, Vec>>& components, int n_work, const BetaGrid& grid,
                  const EffectiveParams& eff, unsigned threads) {
  if (eff.detuning == 0.0 || eff.epsilon == 0.0) throw ValidationError("wigner_measurement needs dispersive parameters");
  const Displacer disp(n_work);

  const SpaceDescriptor joint = make_space({Factor::control(), Factor::boson(n_work)});
  const Operator h = dispersive_mode_hamiltonian(joint, eff);
  const double t = 0.5 * kPi / std::abs(eff.chi());
  Vec phases(joint.dim());
  for (Eigen::Index i = 0; i < joint.dim(); ++i) phases[i] = std::exp(-kI * h.element(i, i) * t);
  const Operator sy = embed(local::sigma_y(), joint, 0);
  const double sign = eff.chi() > 0.0 ? 1.0 : -1.0;

  std::vector<double> values(grid.points.size());
  std::vector<std::string> errors(grid.points.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < grid.points.size(); i += step) {
      double w = 0.0;
      for (const auto& [weight, psi] : components) {
        const Vec d = disp.apply(-grid.points[i], psi);
        if (std::norm(d[n_work]) > 1e-10) {
          errors[i] = "displaced state reaches the working cutoff " + std::to_string(n_work);
          break;
        }
        Vec amp(joint.dim());
        amp.head(n_work + 1) = d / std::sqrt(2.0);
        amp.tail(n_work + 1) = d / std::sqrt(2.0);
        amp = amp.cwiseProduct(phases);
        w += weight * PureState(joint, amp).expectation(sy).real();
      }
      values[i] = (2.0 / kPi) * sign * w;
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(grid.points.size())));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw TruncationError("wigner_measurement: " + e);
  }
  WignerMap map;
  map.grid = grid;
  map.values = std::move(values);
  return map;
}

}  // namespace

WignerMap wigner_measurement(const PureState& mode, const BetaGrid& grid, const EffectiveParams& eff,
                             unsigned threads) {
  require_single_oscillator(mode.space());
  const int n_work = working_cutoff(mode.space().factor(0).cutoff, grid);
  return measure({{1.0, padded(mode.normalized().amplitudes(), n_work)}}, n_work, grid, eff, threads);
}

WignerMap wigner_measurement(const DensityMatrix& mode, const BetaGrid& grid, const EffectiveParams& eff,
                             unsigned threads) {
  require_single_oscillator(mode.space());
  const int n_work = working_cutoff(mode.space().factor(0).cutoff, grid);
  // Mixture of eigenvectors; negligible weights dropped.
  const DenseMat h = 0.5 * (mode.matrix() + mode.matrix().adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(h);
  std::vector<std::pair<double, Vec>> comps;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double w = es.eigenvalues()[k];
    if (w > 1e-14) comps.emplace_back(w, padded(es.eigenvectors().col(k), n_work));
  }
  return measure(comps, n_work, grid, eff, threads);
}

// ---------------------------------------------------------------------------

DecoherenceBudget decoherence_budget(const RamanParams& raman, double duration) {
  if (!(duration >= 0.0)) throw ValidationError("decoherence_budget: duration must be >= 0");
  const RamanEffective e = raman_effective(raman);
  return {e.gamma_eff, e.kappa_eff, duration, (e.gamma_eff + e.kappa_eff) * duration};
}

double fock_one_time(const RamanParams& raman) {
  const RamanEffective e = raman_effective(raman);
  if (!(e.epsilon > 0.0)) throw ValidationError("fock_one_time: epsilon is zero");
  return kPi / (2.0 * e.epsilon);
}

RamanParams reference_raman_parameters() {
  const double two_pi = 2.0 * kPi;
  RamanParams r;
  r.g = two_pi * 34e6;
  r.alpha = r.g;
  r.big_detuning = 100.0 * r.g;
  r.detuning = 10.0 * r.g;
  r.gamma = two_pi * 2.6e6;
  r.kappa = two_pi * 4.1e6;
  r.atoms = 10000;
  return r;
}

}  // namespace cjcm

#include "cjcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace cjcm {

namespace {

std::string ratio_warning(const char* what, double ratio) {
  std::ostringstream os;
  os << what << " ratio " << ratio << " below 10";
  return os.str();
}

std::vector<std::size_t> mode_indices(const SpaceDescriptor& space) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto k = space.factor(i).kind;
    if (k == FactorKind::BosonMode || k == FactorKind::CollectiveDicke) out.push_back(i);
  }
  return out;
}

void require_no_cavity(const SpaceDescriptor& space, const char* who) {
  if (!space.find(FactorKind::CavityFock).empty()) {
    throw ValidationError(std::string(who) + ": cavity factor present; use the full model instead");
  }
}

}  // namespace

void SystemParams::validate() const {
  if (!(g > 0.0) || !std::isfinite(g)) throw ValidationError("g must be positive");
  if (atoms < 1) throw ValidationError("atom count N must be >= 1");
  if (samples < 1) throw ValidationError("sample count must be >= 1");
  if (!std::isfinite(omega) || omega < 0.0) throw ValidationError("Omega must be finite and non-negative");
  if (!std::isfinite(delta_c) || !std::isfinite(delta_d)) throw ValidationError("detunings must be finite");
  if (nbar < 0.0) throw ValidationError("mean photon number must be non-negative");
}

EffectiveParams effective_params(const SystemParams& p) {
  p.validate();
  if (p.delta_c == 0.0) throw ValidationError("dispersive builders need delta_c != 0");
  EffectiveParams e;
  e.lambda_c = p.g * p.g / p.delta_c;
  e.lambda_d = (p.omega == 0.0) ? 0.0 : p.omega * p.omega / p.delta_d;
  if (p.omega != 0.0 && p.delta_d == 0.0) throw ValidationError("dispersive builders need delta_d != 0");
  e.epsilon = std::sqrt(static_cast<double>(p.atoms)) * e.lambda_c;
  e.detuning = 2.0 * e.lambda_d - (static_cast<double>(p.samples) * p.atoms - 1.0) * e.lambda_c;
  e.atoms = p.atoms;
  e.samples = p.samples;
  return e;
}

std::vector<std::string> regime_warnings(const SystemParams& p, bool dispersive_mode) {
  std::vector<std::string> w;
  const double total_atoms = static_cast<double>(p.atoms) * p.samples + 1.0;
  const double cavity_scale = p.g * std::sqrt(total_atoms * (p.nbar + 1.0));
  if (std::abs(p.delta_c) < 10.0 * cavity_scale) {
    w.push_back(ratio_warning("cavity dispersive delta_c/(g sqrt(N(nbar+1)))", std::abs(p.delta_c) / cavity_scale));
  }
  if (p.omega > 0.0 && std::abs(p.delta_d) < 10.0 * p.omega) {
    w.push_back(ratio_warning("drive Stark delta_d/Omega", std::abs(p.delta_d) / p.omega));
  }
  if (dispersive_mode && p.delta_c != 0.0) {
    const EffectiveParams e = effective_params(p);
    if (std::abs(e.detuning) < 10.0 * std::abs(e.epsilon)) {
      w.push_back(ratio_warning("mode dispersive delta/epsilon", std::abs(e.detuning / e.epsilon)));
    }
  }
  return w;
}

ResonanceDrive resonance_drive(const SystemParams& p) {
  p.validate();
  if (p.delta_c == 0.0) throw ValidationError("resonance_drive needs delta_c != 0");
  const double lambda_c = p.g * p.g / p.delta_c;
  ResonanceDrive r;
  r.lambda_d = (static_cast<double>(p.samples) * p.atoms - 1.0) * lambda_c / 2.0;
  if (r.lambda_d != 0.0) {
    if (p.delta_d == 0.0 || r.lambda_d / p.delta_d < 0.0) {
      throw ValidationError("delta_d must be nonzero with the sign of delta_c to reach resonance");
    }
    r.omega = std::sqrt(r.lambda_d * p.delta_d);
    if (std::abs(p.delta_d) < 10.0 * r.omega) {
      r.warnings.push_back(ratio_warning("drive Stark delta_d/Omega", std::abs(p.delta_d) / r.omega));
    }
  }
  return r;
}

SystemParams with_resonant_drive(SystemParams p) {
  p.omega = resonance_drive(p).omega;
  return p;
}

double suggested_dt(const SystemParams& p) {
  const double scale = std::max({std::abs(p.delta_c), std::abs(p.delta_d), p.omega,
                                 p.g * std::sqrt(static_cast<double>(p.atoms) * p.samples)});
  return 0.05 / scale;
}

RamanEffective raman_effective(const RamanParams& r) {
  if (r.g < 0 || r.alpha < 0 || r.big_detuning <= 0 || r.detuning <= 0 || r.gamma < 0 || r.kappa < 0 || r.atoms < 1) {
    throw ValidationError("Raman parameters must be positive (couplings and rates non-negative)");
  }
  RamanEffective e;
  e.g_prime = 0.5 * r.g * r.alpha * (1.0 / (r.big_detuning + r.detuning) + 1.0 / r.big_detuning);
  e.lambda_c = e.g_prime * e.g_prime / r.detuning;
  e.epsilon = std::sqrt(static_cast<double>(r.atoms)) * e.lambda_c;
  e.gamma_eff = r.gamma * r.g * r.g / (r.big_detuning * r.big_detuning);
  e.kappa_eff = r.kappa * e.g_prime * e.g_prime / (r.detuning * r.detuning);
  const double largest = std::max({r.g, r.alpha, r.detuning});
  if (r.big_detuning < 10.0 * largest) {
    e.warnings.push_back(ratio_warning("Raman Delta/max(g, alpha, delta)", r.big_detuning / largest));
  }
  if (e.g_prime > 0.0 && r.detuning < 10.0 * e.g_prime) {
    e.warnings.push_back(ratio_warning("Raman delta/g'", r.detuning / e.g_prime));
  }
  return e;
}

SystemParams raman_system(const RamanParams& r) {
  const RamanEffective e = raman_effective(r);
  if (!(e.g_prime > 0.0)) throw ValidationError("Raman coupling g' is zero");
  SystemParams p;
  p.g = e.g_prime;
  p.delta_c = r.detuning;
  p.delta_d = r.detuning;
  p.atoms = r.atoms;
  return p;
}

// ---------------------------------------------------------------------------

TimeDependentHamiltonian TimeDependentHamiltonian::constant(const Operator& h) {
  TimeDependentHamiltonian td(h.space());
  td.add(h);
  return td;
}

void TimeDependentHamiltonian::add(Operator op, Coefficient coefficient) {
  require_same_space(space_, op.space(), "TimeDependentHamiltonian::add");
  terms_.push_back({std::move(op), std::move(coefficient)});
}

bool TimeDependentHamiltonian::is_constant() const {
  return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) { return !t.coefficient; });
}

TimeDependentHamiltonian TimeDependentHamiltonian::shifted(double t0) const {
  TimeDependentHamiltonian out(space_);
  for (const auto& term : terms_) {
    if (term.coefficient) {
      out.add(term.op, [c = term.coefficient, t0](double t) { return c(t + t0); });
    } else {
      out.add(term.op);
    }
  }
  return out;
}

Operator TimeDependentHamiltonian::at(double t) const {
  Operator h = Operator::zero(space_);
  for (const auto& term : terms_) {
    const cplx c = term.coefficient ? term.coefficient(t) : cplx{1.0, 0.0};
    h += c * term.op;
  }
  return h;
}

void TimeDependentHamiltonian::apply(double t, const Vec& in, Vec& out) const {
  out.setZero(in.size());
  for (const auto& term : terms_) {
    const cplx c = term.coefficient ? term.coefficient(t) : cplx{1.0, 0.0};
    out.noalias() += c * (term.op.matrix() * in);
  }
}

// ---------------------------------------------------------------------------

std::size_t control_index(const SpaceDescriptor& space) {
  const auto idx = space.find(FactorKind::ControlQubit);
  if (idx.size() != 1) throw ValidationError("space needs exactly one ControlQubit: " + space.describe());
  return idx.front();
}

Operator mode_lowering(const SpaceDescriptor& space, std::size_t factor_index) {
  const Factor& f = space.factor(factor_index);
  if (f.kind == FactorKind::CollectiveDicke) {
    return (1.0 / std::sqrt(static_cast<double>(f.atoms))) * collective_lowering(space, factor_index);
  }
  if (f.kind == FactorKind::BosonMode) return boson_annihilation(space, factor_index);
  throw ValidationError("mode_lowering needs a BosonMode or CollectiveDicke factor, got " + f.describe());
}

std::vector<SampleOperators> sample_operators(const SpaceDescriptor& space) {
  std::vector<SampleOperators> out;
  std::map<int, std::size_t> atom_groups;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Factor& f = space.factor(i);
    if (f.kind == FactorKind::CollectiveDicke) {
      out.push_back({collective_lowering(space, i), number_operator(space, i), f.atoms});
    } else if (f.kind == FactorKind::SampleAtom) {
      auto [it, fresh] = atom_groups.try_emplace(f.sample, out.size());
      Operator lower = embed(local::sigma_minus(), space, i);
      Operator exc = embed(local::excited_projector(), space, i);
      if (fresh) {
        out.push_back({std::move(lower), std::move(exc), 1});
      } else {
        auto& s = out[it->second];
        s.lowering += lower;
        s.excitations += exc;
        s.atoms += 1;
      }
    }
  }
  return out;
}

namespace {

void check_samples(const std::vector<SampleOperators>& samples, const SystemParams& p, const char* who) {
  if (samples.empty()) throw ValidationError(std::string(who) + ": no atomic sample factor in space");
  if (static_cast<int>(samples.size()) != p.samples) {
    throw ValidationError(std::string(who) + ": space holds " + std::to_string(samples.size()) +
                          " samples but params say " + std::to_string(p.samples));
  }
  for (const auto& s : samples) {
    if (s.atoms != p.atoms) {
      throw ValidationError(std::string(who) + ": sample with " + std::to_string(s.atoms) +
                            " atoms, params say N=" + std::to_string(p.atoms));
    }
  }
}

Operator total_sample_lowering(const SpaceDescriptor& space, const std::vector<SampleOperators>& samples) {
  Operator j = Operator::zero(space);
  for (const auto& s : samples) j += s.lowering;
  return j;
}

}  // namespace

TimeDependentHamiltonian full_model(const SpaceDescriptor& space, const SystemParams& p) {
  p.validate();
  const std::size_t c = control_index(space);
  const auto cav = space.find(FactorKind::CavityFock);
  if (cav.size() != 1) throw ValidationError("full model needs exactly one CavityFock factor");
  const auto samples = sample_operators(space);
  check_samples(samples, p, "full model");

  const Operator sc_minus = embed(local::sigma_minus(), space, c);
  const Operator a = boson_annihilation(space, cav.front());
  const Operator j_minus = sc_minus + total_sample_lowering(space, samples);
  const Operator emit = a.adjoint() * j_minus;  // a^+ J^-

  TimeDependentHamiltonian h(space);
  const double dd = p.delta_d;
  const double dc = p.delta_c;
  if (p.omega != 0.0) {
    h.add(p.omega * sc_minus.adjoint(), [dd](double t) { return std::exp(kI * dd * t); });
    h.add(p.omega * sc_minus, [dd](double t) { return std::exp(-kI * dd * t); });
  }
  h.add(p.g * emit, [dc](double t) { return std::exp(-kI * dc * t); });
  h.add(p.g * emit.adjoint(), [dc](double t) { return std::exp(kI * dc * t); });
  return h;
}

Operator full_hamiltonian(const SpaceDescriptor& space, const SystemParams& p, double t) {
  return full_model(space, p).at(t);
}

Operator dispersive_cavity_hamiltonian(const SpaceDescriptor& space, const SystemParams& p) {
  const EffectiveParams e = effective_params(p);
  const std::size_t c = control_index(space);
  const auto cav = space.find(FactorKind::CavityFock);
  if (cav.size() != 1) throw ValidationError("dispersive cavity Hamiltonian needs one CavityFock factor");
  const auto samples = sample_operators(space);
  check_samples(samples, p, "dispersive cavity Hamiltonian");

  const Operator one = Operator::identity(space);
  const Operator na = number_operator(space, cav.front());
  const Operator aa_dag = na + one;  // a a^+ without the truncation edge
  const Operator pe = embed(local::excited_projector(), space, c);
  const Operator pg = embed(local::ground_projector(), space, c);
  const Operator sc_minus = embed(local::sigma_minus(), space, c);

  Operator h = e.lambda_d * embed(local::sigma_z(), space, c);
  h += e.lambda_c * (pe * aa_dag - pg * na);
  Operator n_exc = Operator::zero(space);
  for (const auto& s : samples) {
    const Operator ground = static_cast<double>(s.atoms) * one - s.excitations;
    h += e.lambda_c * (s.excitations * aa_dag - ground * na);
    n_exc += s.excitations;
  }
  const Operator j = total_sample_lowering(space, samples);
  h += e.lambda_c * (sc_minus.adjoint() * j + sc_minus * j.adjoint());
  h += e.lambda_c * (j.adjoint() * j - n_exc);  // sum over j != k of S_j^+ S_k^-
  return h;
}

Operator effective_vacuum_hamiltonian(const SpaceDescriptor& space, const SystemParams& p) {
  require_no_cavity(space, "effective_vacuum_hamiltonian");
  const EffectiveParams e = effective_params(p);
  const std::size_t c = control_index(space);
  const auto samples = sample_operators(space);
  check_samples(samples, p, "effective_vacuum_hamiltonian");

  const Operator sc_minus = embed(local::sigma_minus(), space, c);
  const Operator j = total_sample_lowering(space, samples);
  Operator h = e.lambda_d * embed(local::sigma_z(), space, c);
  h += e.lambda_c * embed(local::excited_projector(), space, c);
  h += e.lambda_c * (sc_minus.adjoint() * j + sc_minus * j.adjoint());
  h += e.lambda_c * (j.adjoint() * j);
  return h;
}

Operator jcm_hamiltonian(const SpaceDescriptor& space, const SystemParams& p) {
  if (space.size() != 2 || space.factor(0).kind != FactorKind::ControlQubit ||
      space.factor(1).kind != FactorKind::BosonMode) {
    throw ValidationError("jcm_hamiltonian needs [ControlQubit, BosonMode], got " + space.describe());
  }
  const EffectiveParams e = effective_params(p);
  const Operator b = boson_annihilation(space, 1);
  const Operator sc_minus = embed(local::sigma_minus(), space, 0);
  Operator h = (0.5 * (2.0 * e.lambda_d + e.lambda_c)) * embed(local::sigma_z(), space, 0);
  h += (std::sqrt(static_cast<double>(p.atoms)) * e.epsilon) * number_operator(space, 1);
  h += e.epsilon * (sc_minus.adjoint() * b + sc_minus * b.adjoint());
  return h;
}

Operator dispersive_mode_hamiltonian(const SpaceDescriptor& space, const EffectiveParams& eff) {
  if (space.size() != 2 || space.factor(0).kind != FactorKind::ControlQubit ||
      space.factor(1).kind != FactorKind::BosonMode) {
    throw ValidationError("dispersive_mode_hamiltonian needs [ControlQubit, BosonMode], got " + space.describe());
  }
  if (eff.detuning == 0.0) throw ValidationError("dispersive_mode_hamiltonian needs delta != 0");
  const Operator n = number_operator(space, 1);
  const Operator pe = embed(local::excited_projector(), space, 0);
  const Operator pg = embed(local::ground_projector(), space, 0);
  return eff.chi() * (pe * (n + Operator::identity(space)) - pg * n);
}

Operator multi_sample_hamiltonian(const SpaceDescriptor& space, const SystemParams& p) {
  const std::size_t c = control_index(space);
  require_no_cavity(space, "multi_sample_hamiltonian");
  const auto modes = mode_indices(space);
  if (static_cast<int>(modes.size()) != p.samples || space.size() != modes.size() + 1) {
    throw ValidationError("multi_sample_hamiltonian needs [ControlQubit, one mode per sample], got " +
                          space.describe());
  }
  for (std::size_t m : modes) {
    const Factor& f = space.factor(m);
    if (f.kind == FactorKind::CollectiveDicke && f.atoms != p.atoms) {
      throw ValidationError("Dicke mode atom count does not match params N");
    }
  }
  const EffectiveParams e = effective_params(p);
  Operator bsum = Operator::zero(space);
  for (std::size_t m : modes) bsum += mode_lowering(space, m);
  const Operator sc_minus = embed(local::sigma_minus(), space, c);

  Operator h = (0.5 * (2.0 * e.lambda_d + e.lambda_c)) * embed(local::sigma_z(), space, c);
  h += (std::sqrt(static_cast<double>(p.atoms)) * e.epsilon) * (bsum.adjoint() * bsum);
  h += e.epsilon * (sc_minus.adjoint() * bsum + sc_minus * bsum.adjoint());
  return h;
}

}  // namespace cjcm

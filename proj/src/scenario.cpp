#include "cjcm/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

namespace cjcm::cli {

using nlohmann::json;

const std::vector<ScenarioInfo>& scenarios() {
  static const std::vector<ScenarioInfo> list{
      {"jcm-rabi", "vacuum/Fock Rabi oscillation of the control atom under the resonant bosonized model"},
      {"fock-ladder", "Fock state |n> of the collective mode by repeated exchange and control re-excitation"},
      {"cat-resonant", "resonant cat from |g>|alpha>, scored against the two-branch reference; collapse and revival"},
      {"cat-dispersive", "dispersive cat from (|e>+|g>)|alpha>/sqrt2 with its exact Wigner function"},
      {"two-sample", "maximally entangled state of two samples sharing one excitation"},
      {"w-state", "W state of n samples"},
      {"wigner", "displaced-parity Wigner measurement against the closed-form oracle"},
      {"full-vs-effective", "time-dependent full model against the vacuum effective Hamiltonian"},
      {"decoherence", "Lindblad Fock-state preparation at Raman-derived rates against the (G'+k')t budget"},
      {"feasibility", "Raman-scheme epsilon, G', k', t1 and decoherence budget"},
  };
  return list;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Strict reader over one JSON object: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  bool has(const std::string& k) {
    used_.insert(k);
    return j_.contains(k);
  }
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  double number(const std::string& k, double dflt) {
    if (!has(k)) return dflt;
    const json& v = j_.at(k);
    if (!v.is_number()) throw ValidationError(key(k) + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError(key(k) + ": must be finite");
    return d;
  }
  double frequency(const std::string& k, double dflt) {
    if (!has(k)) return dflt;
    return parse_frequency(j_.at(k), key(k));
  }
  int integer(const std::string& k, int dflt) {
    if (!has(k)) return dflt;
    const json& v = j_.at(k);
    if (!v.is_number_integer()) throw ValidationError(key(k) + ": expected an integer");
    return v.get<int>();
  }
  bool boolean(const std::string& k, bool dflt) {
    if (!has(k)) return dflt;
    const json& v = j_.at(k);
    if (!v.is_boolean()) throw ValidationError(key(k) + ": expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& k, const std::string& dflt) {
    if (!has(k)) return dflt;
    const json& v = j_.at(k);
    if (!v.is_string()) throw ValidationError(key(k) + ": expected a string");
    return v.get<std::string>();
  }
  cplx complex(const std::string& k, cplx dflt) {
    if (!has(k)) return dflt;
    const json& v = j_.at(k);
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      return {v[0].get<double>(), v[1].get<double>()};
    }
    throw ValidationError(key(k) + ": expected a number or [re, im]");
  }
  const json& object(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ValidationError("unknown key " + key(it.key()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

struct ScenarioRules {
  std::vector<std::string> models;  // empty: model key not accepted
  std::vector<std::string> protocol_keys;
};

const std::map<std::string, ScenarioRules>& rules() {
  static const std::map<std::string, ScenarioRules> r{
      {"jcm-rabi", {{"jcm"}, {"n"}}},
      {"fock-ladder", {{"jcm", "effective", "full"}, {"n"}}},
      {"cat-resonant", {{"jcm"}, {"alpha", "eps_t", "revival", "revival_eps_t", "revival_points"}}},
      {"cat-dispersive", {{"dispersive"}, {"alpha", "phi", "delta_over_epsilon", "grid_points", "grid_half_width"}}},
      {"two-sample", {{"jcm", "effective", "full"}, {"duration_scale"}}},
      {"w-state", {{"jcm", "effective", "full"}, {"n", "duration_scale"}}},
      {"wigner",
       {{"dispersive"},
        {"state", "n", "alpha", "phi", "delta_over_epsilon", "grid_points", "grid_half_width", "grid_center"}}},
      {"full-vs-effective", {{"full"}, {}}},
      {"decoherence", {{"jcm", "effective"}, {"n"}}},
      {"feasibility", {{}, {}}},
  };
  return r;
}

RamanParams parse_raman(const json& j) {
  Reader r(j, "raman");
  const RamanParams ref = reference_raman_parameters();
  RamanParams p;
  p.g = r.frequency("g", ref.g);
  p.alpha = r.frequency("alpha", ref.alpha);
  p.big_detuning = r.frequency("big_detuning", ref.big_detuning);
  p.detuning = r.frequency("detuning", ref.detuning);
  p.gamma = r.frequency("gamma", ref.gamma);
  p.kappa = r.frequency("kappa", ref.kappa);
  p.atoms = r.integer("atoms", ref.atoms);
  r.finish();
  if (p.atoms < 1) throw ValidationError("raman.atoms: must be >= 1");
  raman_effective(p);
  return p;
}

json system_json(const SystemParams& p) {
  return {{"g", p.g},           {"omega", p.omega},   {"delta_c", p.delta_c}, {"delta_d", p.delta_d},
          {"atoms", p.atoms},   {"samples", p.samples}, {"nbar", p.nbar}};
}

json raman_json(const RamanParams& r) {
  return {{"g", r.g},         {"alpha", r.alpha}, {"big_detuning", r.big_detuning}, {"detuning", r.detuning},
          {"gamma", r.gamma}, {"kappa", r.kappa}, {"atoms", r.atoms}};
}

json effective_json(const SystemParams& p) {
  if (p.delta_c == 0.0) return json::object();
  const EffectiveParams e = effective_params(p);
  json j{{"lambda_c", e.lambda_c}, {"lambda_d", e.lambda_d}, {"epsilon", e.epsilon}, {"delta", e.detuning}};
  if (std::abs(e.detuning) > 1e-9 * std::abs(e.epsilon)) j["chi"] = e.chi();
  return j;
}

json schedule_json(const std::vector<ScheduleStep>& s) {
  json a = json::array();
  for (const auto& st : s) {
    a.push_back({{"kind", st.kind}, {"duration", st.duration}, {"pre_pulse", st.pre_pulse}, {"detail", st.detail}});
  }
  return a;
}

// ---------------------------------------------------------------------------
// Scenario runners. Each is called at truncation scale 1 and 2.

struct Context {
  const ScenarioConfig& cfg;
  int scale;
  unsigned threads;
  SystemParams system;  // resolved
  json resolved = json::object();
  json protocol = json::object();  // resolved protocol values

  double time_factor() const { return cfg.physical_units ? 1.0 : system.g; }
};

void add_traces(ScenarioResult& r, const std::vector<double>& times, const std::map<std::string, std::vector<double>>& tr,
                double factor, const std::string& suffix = "") {
  std::vector<double> t(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) t[i] = times[i] * factor;
  for (const auto& [name, values] : tr) r.traces[name + suffix] = {t, values};
}

void absorb_protocol(ScenarioResult& r, const ProtocolResult& p, double factor) {
  add_traces(r, p.times, p.traces, factor);
  r.summary["fidelity"] = p.fidelity;
  r.summary["schedule"] = schedule_json(p.schedule);
  json m = json::object();
  for (const auto& [k, v] : p.metrics) m[k] = v;
  r.summary["metrics"] = m;
  r.summary["warnings"] = p.warnings;
  r.converged = r.converged && p.converged;
}

ModelKind model_kind(const std::string& m) {
  if (m == "effective") return ModelKind::Dicke;
  if (m == "full") return ModelKind::Full;
  return ModelKind::Jcm;
}

SystemParams resonant_system(const Context& c, SystemParams p) {
  if (!c.cfg.omega_given) p.omega = resonance_drive(p).omega;
  return p;
}

// Omega from delta = r eps when no drive was given: 2 lambda_d = (N - 1) lambda_c + r eps.
SystemParams dispersive_system(Context& c, Reader& proto) {
  SystemParams p = c.system;
  const double ratio = proto.number("delta_over_epsilon", 20.0);
  if (!c.cfg.omega_given) {
    c.protocol["delta_over_epsilon"] = ratio;
    const double lambda_c = p.g * p.g / p.delta_c;
    const double lambda_d = 0.5 * ((p.atoms - 1.0) * lambda_c + ratio * std::sqrt(double(p.atoms)) * lambda_c);
    if (p.delta_d == 0.0 || lambda_d / p.delta_d < 0.0) {
      throw ValidationError("system.delta_d: needs the sign of the required Stark shift");
    }
    p.omega = std::sqrt(lambda_d * p.delta_d);
  }
  if (effective_params(p).detuning == 0.0) throw ValidationError("system.omega: gives delta = 0, not dispersive");
  return p;
}

BetaGrid grid_from(Context& c, Reader& proto, cplx center, double half_width_default) {
  const int points = proto.integer("grid_points", 21);
  const double half = proto.number("grid_half_width", half_width_default);
  if (points < 2 || points > 401) throw ValidationError("protocol.grid_points: must be in [2, 401]");
  if (!(half > 0.0)) throw ValidationError("protocol.grid_half_width: must be positive");
  c.protocol["grid_points"] = points;
  c.protocol["grid_half_width"] = half;
  c.protocol["grid_center"] = {center.real(), center.imag()};
  return BetaGrid::square(center, half, static_cast<std::size_t>(points));
}

ScenarioResult run_jcm_rabi(Context& c) {
  Reader proto(c.cfg.protocol, "protocol");
  const int n = proto.integer("n", 0);
  proto.finish();
  if (n < 0) throw ValidationError("protocol.n: must be >= 0");
  c.protocol["n"] = n;
  if (c.system.samples != 1) throw ValidationError("system.samples: jcm-rabi uses one sample");
  const SystemParams p = resonant_system(c, c.system);
  c.system = p;
  const EffectiveParams e = effective_params(p);
  const double t_final = c.cfg.t_final > 0.0 ? c.cfg.t_final : 2.0 * kPi / e.epsilon;
  const int cutoff = (c.cfg.mode_cutoff > 0 ? c.cfg.mode_cutoff : default_cutoff(n + 1)) * c.scale;
  if (cutoff < n + 1) throw TruncationError("truncation.mode: must be >= n + 1");
  c.resolved["t_final"] = t_final;
  c.resolved["mode_cutoff"] = cutoff / c.scale;

  const SpaceDescriptor space = make_space({Factor::control(), Factor::boson(cutoff)});
  PropagationOptions o;
  o.observables = {{"P_e", embed(local::excited_projector(), space, 0)},
                   {"P_g", embed(local::ground_projector(), space, 0)},
                   {"Sz_c", embed(local::sigma_z(), space, 0)},
                   {"n_b", number_operator(space, 1)}};
  o.record_states = true;
  std::vector<double> grid;
  const std::size_t pts = std::max<std::size_t>(c.cfg.samples, 2);
  for (std::size_t i = 0; i < pts; ++i) grid.push_back(t_final * double(i) / double(pts - 1));
  const StateReport rep = sample_static(StaticPropagator(jcm_hamiltonian(space, p)), basis_state(space, {1, n}), grid, o);

  ScenarioResult r;
  std::map<std::string, std::vector<double>> tr;
  for (std::size_t k = 0; k < rep.names.size(); ++k) tr[rep.names[k]] = rep.traces[k];
  double max_err = 0.0;
  std::vector<double> fid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double cf = std::pow(std::cos(std::sqrt(n + 1.0) * e.epsilon * grid[i]), 2);
    max_err = std::max(max_err, std::abs(tr["P_e"][i] - cf));
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const PureState ref = jcm_analytic(JcmBranch::ExcitedN, n, grid[i], e.epsilon, p.atoms, cutoff);
    tr["fidelity"].push_back(fidelity(ref, rep.snapshots[i]));
  }
  add_traces(r, grid, tr, c.time_factor());
  r.summary["fidelity"] = tr["fidelity"].back();
  r.summary["metrics"] = {{"max_abs_error_P_e_vs_cos2", max_err}, {"epsilon", e.epsilon}};
  r.summary["warnings"] = regime_warnings(p);
  return r;
}

ScenarioResult run_fock_ladder(Context& c, bool decoherence_scenario) {
  Reader proto(c.cfg.protocol, "protocol");
  const int n = proto.integer("n", 1);
  proto.finish();
  if (n < 1) throw ValidationError("protocol.n: must be >= 1");
  c.protocol["n"] = n;
  FockLadderOptions o;
  o.target_n = n;
  o.model = model_kind(c.cfg.model);
  const int base = c.cfg.mode_cutoff > 0 ? c.cfg.mode_cutoff : default_cutoff(n);
  o.cutoff = base * c.scale;
  o.cavity_cutoff = c.cfg.cavity_cutoff * c.scale;
  o.samples_per_step = std::max<std::size_t>(2, c.cfg.samples / static_cast<std::size_t>(n));
  o.dt = c.cfg.dt;
  if (o.model == ModelKind::Full && o.dt == 0.0) o.dt = suggested_dt(resonant_system(c, c.system));
  c.resolved["mode_cutoff"] = base;
  c.resolved["cavity_cutoff"] = c.cfg.cavity_cutoff;

  std::optional<DecoherenceBudget> budget;
  if (c.cfg.decoherence || decoherence_scenario) {
    const RamanParams rp = c.cfg.raman ? *c.cfg.raman : reference_raman_parameters();
    const RamanEffective re = raman_effective(rp);
    o.decoherence = DecoherenceRates{re.gamma_eff, re.kappa_eff};
    double duration = 0.0;
    for (int k = 1; k <= n; ++k) duration += kPi / (2.0 * std::sqrt(double(k)) * re.epsilon);
    budget = decoherence_budget(rp, duration);
  }
  ProtocolResult pr = fock_ladder(c.system, o);
  c.system = resonant_system(c, c.system);
  ScenarioResult r;
  absorb_protocol(r, pr, c.time_factor());
  if (budget) {
    const double infid = 1.0 - pr.fidelity;
    r.summary["decoherence"] = {{"gamma_eff", budget->gamma_eff}, {"kappa_eff", budget->kappa_eff},
                                {"duration", budget->duration},   {"budget", budget->budget},
                                {"infidelity", infid},            {"ratio", budget->budget > 0 ? infid / budget->budget : 0.0}};
  }
  return r;
}

ScenarioResult run_cat_resonant(Context& c) {
  Reader proto(c.cfg.protocol, "protocol");
  const cplx alpha = proto.complex("alpha", {4.0, 0.0});
  const double eps_t = proto.number("eps_t", 0.2 * std::abs(alpha));
  const bool revival = proto.boolean("revival", true);
  const double nbar = std::norm(alpha);
  const double revival_eps_t = proto.number("revival_eps_t", 1.6 * 2.0 * kPi * std::sqrt(nbar));
  const int revival_points = proto.integer("revival_points", 4000);
  proto.finish();
  if (nbar < 1e-12) throw ValidationError("protocol.alpha: must be nonzero");
  if (eps_t < 0.0) throw ValidationError("protocol.eps_t: must be >= 0");
  if (revival && (revival_eps_t <= 0.0 || revival_points < 16)) {
    throw ValidationError("protocol.revival_eps_t/revival_points: need a positive window and >= 16 points");
  }
  c.protocol = {{"alpha", {alpha.real(), alpha.imag()}}, {"eps_t", eps_t}, {"revival", revival}};
  if (c.system.samples != 1) throw ValidationError("system.samples: cat-resonant uses one sample");
  const SystemParams p = resonant_system(c, c.system);
  c.system = p;
  const EffectiveParams e = effective_params(p);
  const int base = c.cfg.mode_cutoff > 0 ? c.cfg.mode_cutoff : coherent_cutoff(alpha);
  c.resolved["mode_cutoff"] = base;

  ProtocolResult pr = cat_resonant(alpha, eps_t / e.epsilon, p, base * c.scale);
  ScenarioResult r;
  absorb_protocol(r, pr, c.time_factor());
  if (revival) {
    c.protocol["revival_eps_t"] = revival_eps_t;
    c.protocol["revival_points"] = revival_points;
    const RevivalAnalysis rv = collapse_revival(alpha, revival_eps_t / e.epsilon, p, std::size_t(revival_points));
    add_traces(r, rv.times, {{"Sz_c", rv.inversion}, {"envelope", rv.envelope}}, c.time_factor(), "_revival");
    r.summary["revival"] = {{"collapse_eps_t", rv.collapse_time * e.epsilon},
                            {"revival_eps_t", rv.revival_time * e.epsilon},
                            {"revival_height", rv.revival_height},
                            {"expected_revival_eps_t", 2.0 * kPi * std::sqrt(nbar)}};
  }
  return r;
}

ScenarioResult run_cat_dispersive(Context& c) {
  Reader proto(c.cfg.protocol, "protocol");
  const cplx alpha = proto.complex("alpha", {2.0, 0.0});
  const double phi = proto.number("phi", kPi / 2.0);
  if (c.system.samples != 1) throw ValidationError("system.samples: cat-dispersive uses one sample");
  const SystemParams p = dispersive_system(c, proto);
  const BetaGrid grid = grid_from(c, proto, 0.0, std::abs(alpha) + 3.0);
  proto.finish();
  c.protocol["alpha"] = {alpha.real(), alpha.imag()};
  c.protocol["phi"] = phi;
  c.system = p;
  const EffectiveParams e = effective_params(p);
  const double t = phi / e.chi();
  if (t < 0.0) throw ValidationError("protocol.phi: must have the sign of chi = " + fmt(e.chi()));
  const int base = c.cfg.mode_cutoff > 0 ? c.cfg.mode_cutoff : coherent_cutoff(alpha);
  c.resolved["mode_cutoff"] = base;

  ProtocolResult pr = cat_dispersive(alpha, t, p, base * c.scale);
  ScenarioResult r;
  absorb_protocol(r, pr, c.time_factor());
  const DensityMatrix mode = reduce(std::get<PureState>(*pr.final_state), {1});
  r.wigner = wigner_exact(mode, grid);
  return r;
}

ScenarioResult run_entangle(Context& c, int default_n) {
  Reader proto(c.cfg.protocol, "protocol");
  const int n = default_n == 2 ? 2 : proto.integer("n", default_n);
  const double scale = proto.number("duration_scale", 1.0);
  proto.finish();
  if (n < 1) throw ValidationError("protocol.n: must be >= 1");
  if (!(scale > 0.0)) throw ValidationError("protocol.duration_scale: must be positive");
  c.protocol = {{"n", n}, {"duration_scale", scale}};
  EntangleOptions o;
  o.model = model_kind(c.cfg.model);
  // The full model's drive leaks population above one excitation per mode.
  const int base = c.cfg.mode_cutoff > 0 ? c.cfg.mode_cutoff : (o.model == ModelKind::Full ? 3 : 2);
  o.cutoff = base * c.scale;
  o.cavity_cutoff = c.cfg.cavity_cutoff * c.scale;
  o.samples = c.cfg.samples;
  o.duration_scale = scale;
  SystemParams p = c.system;
  p.samples = n;
  p = resonant_system(c, p);
  o.dt = c.cfg.dt > 0.0 ? c.cfg.dt : (o.model == ModelKind::Full ? suggested_dt(p) : 0.0);
  c.resolved["mode_cutoff"] = base;
  c.resolved["cavity_cutoff"] = c.cfg.cavity_cutoff;
  c.system = p;

  ProtocolResult pr = entangle_samples(n, p, o);
  ScenarioResult r;
  absorb_protocol(r, pr, c.time_factor());
  if (n > 1 && o.model != ModelKind::Jcm && c.cfg.decoherence) r.summary["decoherence_label"] = "model-dependent";
  return r;
}

ScenarioResult run_wigner(Context& c) {
  Reader proto(c.cfg.protocol, "protocol");
  const std::string state = proto.string("state", "coherent");
  const int n = proto.integer("n", 1);
  const cplx alpha = proto.complex("alpha", {2.0, 0.0});
  const double phi = proto.number("phi", kPi / 2.0);
  const SystemParams p = dispersive_system(c, proto);
  const cplx center = proto.complex("grid_center", state == "coherent" ? alpha : cplx{0.0, 0.0});
  const BetaGrid grid = grid_from(c, proto, center, 4.0);
  proto.finish();
  c.system = p;
  c.protocol["state"] = state;

  int base = c.cfg.mode_cutoff;
  std::optional<DensityMatrix> mode;
  auto mode_space = [&](int cut) { return make_space({Factor::boson(cut)}); };
  if (state == "vacuum") {
    base = base > 0 ? base : default_cutoff(0);
    mode = DensityMatrix::from_pure(basis_state(mode_space(base * c.scale), {0}));
  } else if (state == "fock") {
    if (n < 0) throw ValidationError("protocol.n: must be >= 0");
    c.protocol["n"] = n;
    base = base > 0 ? base : default_cutoff(n);
    mode = DensityMatrix::from_pure(basis_state(mode_space(base * c.scale), {n}));
  } else if (state == "coherent") {
    c.protocol["alpha"] = {alpha.real(), alpha.imag()};
    base = base > 0 ? base : coherent_cutoff(alpha);
    mode = DensityMatrix::from_pure(coherent_state(mode_space(base * c.scale), 0, alpha));
  } else if (state == "cat") {
    c.protocol["alpha"] = {alpha.real(), alpha.imag()};
    c.protocol["phi"] = phi;
    base = base > 0 ? base : coherent_cutoff(alpha);
    mode = reduce(dispersive_cat_state(alpha, phi, base * c.scale), {1});
  } else {
    throw ValidationError("protocol.state: expected vacuum, fock, coherent or cat");
  }
  c.resolved["mode_cutoff"] = base;

  const EffectiveParams e = effective_params(p);
  WignerMap measured = wigner_measurement(*mode, grid, e, c.threads);
  const WignerMap exact = wigner_exact(*mode, grid);
  double diff = 0.0;
  for (std::size_t i = 0; i < measured.values.size(); ++i) {
    diff = std::max(diff, std::abs(measured.values[i] - exact.values[i]));
  }
  BetaGrid origin;
  origin.points = {0.0};
  origin.nx = origin.ny = 1;
  ScenarioResult r;
  r.summary["metrics"] = {{"max_abs_diff_vs_exact", diff},
                          {"integral", measured.integral()},
                          {"max_abs", measured.max_abs()},
                          {"W_origin", wigner_measurement(*mode, origin, e, 1).values.front()},
                          {"chi", e.chi()},
                          {"parity_time", 0.5 * kPi / std::abs(e.chi())}};
  r.summary["warnings"] = regime_warnings(p, true);
  r.wigner = std::move(measured);
  return r;
}

ScenarioResult run_full_vs_effective(Context& c) {
  Reader proto(c.cfg.protocol, "protocol");
  proto.finish();
  if (c.system.samples != 1) throw ValidationError("system.samples: full-vs-effective uses one sample");
  const SystemParams p = resonant_system(c, c.system);
  c.system = p;
  const EffectiveParams e = effective_params(p);
  const int base = c.cfg.mode_cutoff > 0 ? c.cfg.mode_cutoff : std::min(9, p.atoms);
  const int m = std::min(base * c.scale, p.atoms);
  const int cav = c.cfg.cavity_cutoff * c.scale;
  const double t_final = c.cfg.t_final > 0.0 ? c.cfg.t_final : kPi / e.epsilon;
  const double dt = c.cfg.dt > 0.0 ? c.cfg.dt : suggested_dt(p);
  c.resolved["mode_cutoff"] = base;
  c.resolved["cavity_cutoff"] = c.cfg.cavity_cutoff;
  c.resolved["t_final"] = t_final;
  c.resolved["dt"] = dt;

  const SpaceDescriptor full = make_space({Factor::control(), Factor::cavity(cav), Factor::dicke(p.atoms, m)});
  const SpaceDescriptor eff = make_space({Factor::control(), Factor::dicke(p.atoms, m)});
  const std::size_t pts = std::max<std::size_t>(c.cfg.samples, 2);
  const std::size_t steps = static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
  PropagationOptions of;
  of.observables = {{"P_e", embed(local::excited_projector(), full, 0)}, {"n_b", number_operator(full, 2)}};
  of.sample_stride = std::max<std::size_t>(1, steps / (pts - 1));
  of.time_unit = 1.0 / p.g;
  const StateReport rf = propagate_timedep(full_model(full, p), basis_state(full, {1, 0, 0}), t_final, dt, of);

  PropagationOptions oe;
  oe.observables = {{"P_e", embed(local::excited_projector(), eff, 0)}, {"n_b", number_operator(eff, 1)}};
  const StateReport re =
      sample_static(StaticPropagator(effective_vacuum_hamiltonian(eff, p)), basis_state(eff, {1, 0}), rf.times, oe);

  const auto& pf = rf.trace("P_e");
  const auto& pe = re.trace("P_e");
  double diff = 0.0;
  std::size_t first_min = 0;
  for (std::size_t i = 0; i < pf.size(); ++i) {
    diff = std::max(diff, std::abs(pf[i] - pe[i]));
    // First minimum of P_e: search up to 3/4 of the nominal Rabi period.
    if (rf.times[i] <= 0.75 * kPi / e.epsilon && pf[i] < pf[first_min]) first_min = i;
  }
  ScenarioResult r;
  add_traces(r, rf.times, {{"P_e", pf}, {"n_b", rf.trace("n_b")}}, c.time_factor());
  add_traces(r, rf.times, {{"P_e", pe}, {"n_b", re.trace("n_b")}}, c.time_factor(), "_effective");
  const double half = rf.times[first_min];
  r.summary["metrics"] = {{"max_abs_diff_P_e", diff},
                          {"half_period", half},
                          {"half_period_expected", kPi / (2.0 * e.epsilon)},
                          {"half_period_rel_error", std::abs(half * 2.0 * e.epsilon / kPi - 1.0)},
                          {"norm_drift", rf.drift.back()},
                          {"steps", static_cast<double>(steps)}};
  r.summary["warnings"] = regime_warnings(p);
  r.converged = rf.converged;
  if (!rf.converged) r.summary["warnings"].push_back(rf.diagnostic);
  return r;
}

ScenarioResult run_feasibility(Context& c) {
  Reader proto(c.cfg.protocol, "protocol");
  proto.finish();
  const RamanParams rp = c.cfg.raman ? *c.cfg.raman : reference_raman_parameters();
  ScenarioResult r;
  r.summary["feasibility"] = feasibility_summary(rp);
  r.summary["warnings"] = raman_effective(rp).warnings;
  c.resolved["raman"] = raman_json(rp);
  return r;
}

ScenarioResult dispatch(Context& c) {
  const std::string& s = c.cfg.scenario;
  if (s == "jcm-rabi") return run_jcm_rabi(c);
  if (s == "fock-ladder") return run_fock_ladder(c, false);
  if (s == "cat-resonant") return run_cat_resonant(c);
  if (s == "cat-dispersive") return run_cat_dispersive(c);
  if (s == "two-sample") return run_entangle(c, 2);
  if (s == "w-state") return run_entangle(c, 3);
  if (s == "wigner") return run_wigner(c);
  if (s == "full-vs-effective") return run_full_vs_effective(c);
  if (s == "decoherence") return run_fock_ladder(c, true);
  if (s == "feasibility") return run_feasibility(c);
  throw ValidationError("scenario: unknown name " + s);
}

std::string default_model(const std::string& scenario) {
  const auto& m = rules().at(scenario).models;
  return m.empty() ? "" : m.front();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double parse_frequency(const json& v, const std::string& key) {
  if (v.is_number()) {
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError(key + ": must be finite");
    return d;
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    const std::string prefix = "2pi*";
    if (s.rfind(prefix, 0) == 0) {
      const std::string rest = s.substr(prefix.size());
      std::size_t used = 0;
      double d = 0.0;
      try {
        d = std::stod(rest, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == rest.size() && used > 0 && std::isfinite(d)) return 2.0 * kPi * d;
    }
    throw ValidationError(key + ": cannot parse frequency \"" + s + "\" (expected a number or \"2pi*<value>\")");
  }
  throw ValidationError(key + ": expected a number or \"2pi*<value>\"");
}

ScenarioConfig parse_config(const json& j) {
  Reader top(j, "");
  ScenarioConfig c;
  if (!top.has("scenario")) throw ValidationError("scenario: required");
  c.scenario = top.string("scenario", "");
  const auto rule = rules().find(c.scenario);
  if (rule == rules().end()) throw ValidationError("scenario: unknown name " + c.scenario);

  if (top.has("raman")) c.raman = parse_raman(top.object("raman"));
  const bool needs_raman = c.scenario == "decoherence" || c.scenario == "feasibility" ||
                           (top.has("decoherence") && top.object("decoherence") == json(true));
  if (needs_raman && !c.raman) c.raman = reference_raman_parameters();
  if (needs_raman && top.has("system")) {
    throw ValidationError("system: decoherence and feasibility runs take the system from the raman block");
  }
  if (top.has("system")) {
    Reader r(top.object("system"), "system");
    c.system.g = r.frequency("g", 1.0);
    c.omega_given = r.has("omega");
    c.system.omega = r.frequency("omega", 0.0);
    c.system.delta_c = r.frequency("delta_c", 100.0 * c.system.g);
    c.system.delta_d = r.frequency("delta_d", c.system.delta_c);
    c.system.atoms = r.integer("atoms", 50);
    c.system.samples = r.integer("samples", 1);
    c.system.nbar = r.number("nbar", 0.0);
    r.finish();
    if (c.system.atoms < 1) throw ValidationError("system.atoms: must be >= 1");
    if (c.system.samples < 1) throw ValidationError("system.samples: must be >= 1");
    if (!(c.system.g > 0.0)) throw ValidationError("system.g: must be positive");
    if (c.system.delta_c == 0.0) throw ValidationError("system.delta_c: must be nonzero");
  } else if (c.raman) {
    c.system = raman_system(*c.raman);
  } else {
    c.system.g = 1.0;
    c.system.delta_c = c.system.delta_d = 100.0;
    c.system.atoms = 50;
  }
  c.system.validate();

  if (top.has("truncation")) {
    Reader r(top.object("truncation"), "truncation");
    c.mode_cutoff = r.integer("mode", 0);
    c.cavity_cutoff = r.integer("cavity", 4);
    r.finish();
    if (c.mode_cutoff < 0) throw ValidationError("truncation.mode: must be >= 1 (or 0 for the default)");
    if (c.cavity_cutoff < 1) throw ValidationError("truncation.cavity: must be >= 1");
  }
  if (top.has("time")) {
    Reader r(top.object("time"), "time");
    c.t_final = r.number("t_final", 0.0);
    c.dt = r.number("dt", 0.0);
    const int samples = r.integer("samples", 201);
    r.finish();
    if (c.t_final < 0.0) throw ValidationError("time.t_final: must be >= 0");
    if (c.dt < 0.0) throw ValidationError("time.dt: must be >= 0");
    if (samples < 2) throw ValidationError("time.samples: must be >= 2");
    c.samples = static_cast<std::size_t>(samples);
  }
  c.model = top.string("model", default_model(c.scenario));
  const auto& models = rule->second.models;
  if (models.empty() ? top.has("model") && !c.model.empty()
                     : std::find(models.begin(), models.end(), c.model) == models.end()) {
    std::string allowed;
    for (const auto& m : models) allowed += (allowed.empty() ? "" : ", ") + m;
    throw ValidationError("model: \"" + c.model + "\" not available for " + c.scenario +
                          (allowed.empty() ? "" : " (allowed: " + allowed + ")"));
  }
  c.decoherence = top.boolean("decoherence", false);
  if (c.decoherence && c.scenario != "fock-ladder" && c.scenario != "decoherence") {
    throw ValidationError("decoherence: only fock-ladder and decoherence scenarios accept it");
  }
  c.physical_units = top.boolean("physical_units", false);
  if (top.has("output")) c.output = top.string("output", "");
  if (top.has("protocol")) {
    const json& p = top.object("protocol");
    if (!p.is_object()) throw ValidationError("protocol: expected an object");
    const auto& keys = rule->second.protocol_keys;
    for (auto it = p.begin(); it != p.end(); ++it) {
      if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
        throw ValidationError("unknown key protocol." + it.key() + " for scenario " + c.scenario);
      }
    }
    c.protocol = p;
  }
  top.finish();
  return c;
}

json feasibility_summary(const RamanParams& raman) {
  const RamanEffective e = raman_effective(raman);
  const double t1 = fock_one_time(raman);
  const DecoherenceBudget b = decoherence_budget(raman, t1);
  const double two_pi = 2.0 * kPi;
  return {{"g_prime", e.g_prime},
          {"epsilon_hz", e.epsilon},
          {"gamma_eff_hz", e.gamma_eff},
          {"kappa_eff_hz", e.kappa_eff},
          {"epsilon_over_2pi", e.epsilon / two_pi},
          {"gamma_eff_over_2pi", e.gamma_eff / two_pi},
          {"kappa_eff_over_2pi", e.kappa_eff / two_pi},
          {"t1_us", t1 * 1e6},
          {"budget", b.budget},
          {"raman", raman_json(raman)}};
}

ScenarioResult run_scenario(const ScenarioConfig& config, unsigned threads) {
  auto once = [&](int scale, json* resolved) {
    Context c{config, scale, threads, config.system};
    ScenarioResult r = dispatch(c);
    if (resolved) {
      json res = c.resolved;
      res["scenario"] = config.scenario;
      res["system"] = system_json(c.system);
      if (config.raman) res["raman"] = raman_json(*config.raman);
      if (!config.model.empty()) res["model"] = config.model;
      res["cavity_cutoff"] = config.cavity_cutoff;
      res["dt"] = res.contains("dt") ? res["dt"] : json(config.dt);
      res["samples"] = config.samples;
      res["decoherence"] = config.decoherence;
      res["physical_units"] = config.physical_units;
      res["protocol"] = c.protocol;
      *resolved = res;
      r.summary["derived"] = effective_json(c.system);
    }
    return r;
  };

  json resolved;
  ScenarioResult base = once(1, &resolved);
  base.summary["resolved"] = resolved;
  if (config.scenario == "feasibility") {
    base.summary["truncation_check"] = {{"applied", false}};
  } else {
    const ScenarioResult doubled = once(2, nullptr);
    double change = 0.0;
    std::string worst = "none";
    for (const auto& [name, tr] : base.traces) {
      const auto it = doubled.traces.find(name);
      if (it == doubled.traces.end() || it->second.values.size() != tr.values.size()) continue;
      for (std::size_t i = 0; i < tr.values.size(); ++i) {
        const double d = std::abs(tr.values[i] - it->second.values[i]);
        if (d > change) {
          change = d;
          worst = name;
        }
      }
    }
    if (base.summary.contains("fidelity") && doubled.summary.contains("fidelity")) {
      const double d = std::abs(base.summary["fidelity"].get<double>() - doubled.summary["fidelity"].get<double>());
      if (d > change) {
        change = d;
        worst = "fidelity";
      }
    }
    if (base.wigner && doubled.wigner) {
      for (std::size_t i = 0; i < base.wigner->values.size(); ++i) {
        const double d = std::abs(base.wigner->values[i] - doubled.wigner->values[i]);
        if (d > change) {
          change = d;
          worst = "wigner";
        }
      }
    }
    if (change > 1e-6) {
      throw TruncationError("doubling every truncation changed " + worst + " by " + fmt(change) +
                            " (limit 1e-6); raise the truncation");
    }
    base.summary["truncation_check"] = {{"applied", true}, {"max_change", change}, {"observable", worst}};
  }
  base.summary["scenario"] = config.scenario;
  base.summary["converged"] = base.converged;
  if (!base.summary.contains("warnings")) base.summary["warnings"] = json::array();
  return base;
}

std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  json summary = result.summary;
  json listed = json::array();
  for (const auto& [name, tr] : result.traces) {
    std::string csv = "t," + name + "\n";
    for (std::size_t i = 0; i < tr.values.size(); ++i) csv += num(tr.t[i]) + "," + num(tr.values[i]) + "\n";
    const auto path = dir / (name + ".csv");
    write_atomic(path, csv);
    files.push_back(path);
    listed.push_back(name + ".csv");
  }
  if (result.wigner) {
    std::string csv = "beta_re,beta_im,W\n";
    for (std::size_t i = 0; i < result.wigner->values.size(); ++i) {
      const cplx b = result.wigner->grid.points[i];
      csv += num(b.real()) + "," + num(b.imag()) + "," + num(result.wigner->values[i]) + "\n";
    }
    const auto path = dir / "wigner.csv";
    write_atomic(path, csv);
    files.push_back(path);
    listed.push_back("wigner.csv");
  }
  summary["files"] = listed;
  const auto path = dir / "summary.json";
  write_atomic(path, summary.dump(2) + "\n");
  files.push_back(path);
  return files;
}

std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag,
                                         const std::optional<std::string>& from_config) {
  if (flag) return *flag;
  if (from_config && !from_config->empty()) return *from_config;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "cjcm_out";
}

int run_command(const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& out_dir,
                unsigned threads, std::ostream& log) {
  ScenarioConfig cfg;
  try {
    std::ifstream f(config_path);
    if (!f) throw ValidationError("cannot read config " + config_path.string());
    json j;
    try {
      j = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    cfg = parse_config(j);
  } catch (const ValidationError& e) {
    log << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  ScenarioResult result;
  try {
    result = run_scenario(cfg, threads);
  } catch (const ValidationError& e) {
    log << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const TruncationError& e) {
    log << "numerics: " << e.what() << "\n";
    return kExitNumerics;
  } catch (const NumericsError& e) {
    log << "numerics: " << e.what() << "\n";
    return kExitNumerics;
  }
  const auto dir = resolve_output_dir(out_dir, cfg.output);
  write_outputs(result, dir);
  for (const auto& w : result.summary["warnings"]) log << "warning: " << w.get<std::string>() << "\n";
  if (!result.converged) {
    log << "numerics: propagation did not converge; see " << (dir / "summary.json").string() << "\n";
    return kExitNumerics;
  }
  log << "wrote " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace cjcm::cli

#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cjcm/analysis.hpp"
#include "cjcm/dynamics.hpp"
#include "cjcm/hilbert.hpp"
#include "cjcm/model.hpp"

namespace cjcm {

// Which Hamiltonian drives a protocol.
//   Jcm   - bosonized model on ideal BosonMode factors
//   Dicke - vacuum-cavity effective Hamiltonian on CollectiveDicke factors
//   Full  - time-dependent interaction-picture model with the cavity retained
enum class ModelKind { Jcm, Dicke, Full };

const char* to_string(ModelKind m);

struct ScheduleStep {
  std::string kind;
  double duration = 0.0;
  bool pre_pulse = false;  // ideal control pi pulse |g> -> |e> applied at the start of the step
  std::string detail;
};

struct ProtocolResult {
  std::vector<ScheduleStep> schedule;
  std::vector<double> times;
  std::map<std::string, std::vector<double>> traces;
  std::optional<std::variant<PureState, DensityMatrix>> final_state;
  std::optional<PureState> target;
  double fidelity = 0.0;
  std::map<std::string, double> metrics;
  std::vector<std::string> warnings;
  bool converged = true;
};

struct DecoherenceRates {
  double gamma_eff = 0.0;  // acts on S_c^- and on the collective mode
  double kappa_eff = 0.0;  // acts on the collective mode
  bool any() const { return gamma_eff > 0.0 || kappa_eff > 0.0; }
};

struct FockLadderOptions {
  int target_n = 1;
  ModelKind model = ModelKind::Jcm;
  int cutoff = 0;          // mode truncation; 0 -> target_n + 8 (clamped to N for Dicke)
  int cavity_cutoff = 2;   // Full only
  std::optional<DecoherenceRates> decoherence;
  std::size_t samples_per_step = 40;
  double dt = 0.0;         // stepped runs; 0 -> automatic
};

/// Alternates resonant exchange for t_k = pi / (2 sqrt(k) eps), k = 1..target_n,
/// with ideal control re-excitation, starting from |e_c>|0>. Fidelity is
/// <target_n| rho_mode |target_n>.
ProtocolResult fock_ladder(const SystemParams& p, const FockLadderOptions& options);

// Branches of the large-|alpha| resonant cat, with the +/- structure and an
// imaginary quadratic phase.
struct CatReference {
  PureState plus;   // (1/sqrt2) e^{-i sqrt(nbar) eps t/2} |alpha+(t)>|phi+(t)>
  PureState minus;  // (1/sqrt2) e^{+i sqrt(nbar) eps t/2} |alpha-(t)>|phi-(t)>
  PureState superposition;  // plus - minus, not renormalized
  double branch_overlap = 0.0;  // |<plus|minus>| / (|plus| |minus|)
};

/// Reference state on [control, BosonMode(cutoff)] for |g_c>|alpha> evolved
/// for time t under the resonant bosonized model.
CatReference cat_reference(cplx alpha, double t, const SystemParams& p, int cutoff);

// Coherent-state truncation that passes the coherent_amplitudes guard.
int coherent_cutoff(cplx alpha);

/// Exact resonant evolution of |g_c>|alpha>, scored against cat_reference.
/// fidelity = |<ref|exact>|^2 / <ref|ref>; metrics hold raw_overlap,
/// branch_overlap and eps_t_over_4nbar.
ProtocolResult cat_resonant(cplx alpha, double t, const SystemParams& p, int cutoff = 0);

struct RevivalAnalysis {
  std::vector<double> times;
  std::vector<double> inversion;  // <sigma_z> of the control atom
  std::vector<double> envelope;   // max |<sigma_z>| over one Rabi period centred at each sample
  double collapse_time = 0.0;     // first time the envelope falls below collapse_level
  double revival_time = 0.0;      // envelope maximum after twice the collapse time
  double revival_height = 0.0;
};

/// Inversion dynamics of |g_c>|alpha> under the resonant bosonized model on
/// [0, t_final], sampled at `points` times.
RevivalAnalysis collapse_revival(cplx alpha, double t_final, const SystemParams& p, std::size_t points,
                                 double collapse_level = 0.2);

/// (|e>+|g>)/sqrt2 (x) |alpha> under the dispersive mode Hamiltonian for time t,
/// scored against (e^{-i phi}|alpha e^{-i phi}>|e> + |alpha e^{i phi}>|g>)/sqrt2,
/// phi = eps^2 t / delta. metrics: phi, mode_purity, purity_closed_form.
ProtocolResult cat_dispersive(cplx alpha, double t, const SystemParams& p, int cutoff = 0);

// (e^{-i phi}|alpha e^{-i phi}>|e> + |alpha e^{i phi}>|g>)/sqrt2 on [control, BosonMode(cutoff)].
PureState dispersive_cat_state(cplx alpha, double phi, int cutoff);

struct EntangleOptions {
  ModelKind model = ModelKind::Jcm;
  int cutoff = 2;         // per-mode truncation; the exchange conserves excitations so one spare level suffices
  int cavity_cutoff = 2;  // Full only
  std::size_t samples = 200;
  double dt = 0.0;
  double duration_scale = 1.0;  // run for duration_scale * pi / (2 sqrt(n) eps)
};

/// Control in |e>, n modes in vacuum, evolved for pi / (2 sqrt(n) eps).
/// Fidelity is <W_n| rho_modes |W_n>. metrics: control_ground_population,
/// dark_population_max, mode_entropy, mode_entropy_closed_form.
ProtocolResult entangle_samples(int n_samples, const SystemParams& p, const EntangleOptions& options = {});

// (|10..0> + |01..0> + ... + |0..01>)/sqrt(n) on n identical factors.
PureState w_state(const SpaceDescriptor& modes);

/// Displaced-parity measurement: for each beta the mode is displaced by
/// -beta, coupled to a control prepared in (|e>+|g>)/sqrt2 under the
/// dispersive mode Hamiltonian for |eps^2 t/delta| = pi/2, and
/// W(beta) = (2/pi) sign(chi) <sigma_y>_control.
WignerMap wigner_measurement(const PureState& mode, const BetaGrid& grid, const EffectiveParams& eff,
                             unsigned threads = 1);
WignerMap wigner_measurement(const DensityMatrix& mode, const BetaGrid& grid, const EffectiveParams& eff,
                             unsigned threads = 1);

struct DecoherenceBudget {
  double gamma_eff = 0.0;
  double kappa_eff = 0.0;
  double duration = 0.0;
  double budget = 0.0;  // (gamma_eff + kappa_eff) * duration
};

DecoherenceBudget decoherence_budget(const RamanParams& raman, double duration);
// Single-excitation transfer time pi / (2 eps) for the Raman scheme.
double fock_one_time(const RamanParams& raman);

/// Cs cavity parameters with N = 10^4, Delta = 100 g, delta = 10 g, alpha = g.
RamanParams reference_raman_parameters();

}  // namespace cjcm

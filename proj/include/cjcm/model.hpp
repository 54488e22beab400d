#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cjcm/hilbert.hpp"

namespace cjcm {

// Physical inputs. All rates are angular frequencies in a common unit
// (rad/s, or multiples of g for dimensionless runs).
struct SystemParams {
  double g = 1.0;        // atom-cavity coupling
  double omega = 0.0;    // classical drive Rabi frequency
  double delta_c = 0.0;  // omega_0 - omega_c
  double delta_d = 0.0;  // omega_0 - omega_d
  int atoms = 1;         // atoms per sample
  int samples = 1;
  double nbar = 0.0;     // mean cavity photon number, used by the regime checks only

  void validate() const;
};

struct EffectiveParams {
  double lambda_c = 0.0;  // g^2 / delta_c
  double lambda_d = 0.0;  // Omega^2 / delta_d
  double epsilon = 0.0;   // sqrt(N) lambda_c
  double detuning = 0.0;  // 2 lambda_d - (n N - 1) lambda_c
  int atoms = 1;
  int samples = 1;

  // Conditional Stark rate of the dispersive mode Hamiltonian.
  double chi() const { return epsilon * epsilon / detuning; }
};

EffectiveParams effective_params(const SystemParams& p);

/// Soft regime checks at ratio 10: cavity dispersive condition, drive
/// Stark-shift condition and, when `dispersive_mode` is set, delta >> epsilon.
std::vector<std::string> regime_warnings(const SystemParams& p, bool dispersive_mode = false);

struct ResonanceDrive {
  double lambda_d = 0.0;
  double omega = 0.0;
  std::vector<std::string> warnings;
};

/// Stark shift that makes the control atom resonant with the bright
/// collective mode, 2 lambda_d = (n N - 1) lambda_c, and the drive amplitude
/// Omega = sqrt(lambda_d delta_d) that produces it.
ResonanceDrive resonance_drive(const SystemParams& p);
SystemParams with_resonant_drive(SystemParams p);

// Suggested RK4 step for the full model: 0.05 / max(|delta_c|, |delta_d|, Omega, g sqrt(nN)).
double suggested_dt(const SystemParams& p);

struct RamanParams {
  double g = 0.0;             // cavity coupling of the Raman leg
  double alpha = 0.0;         // classical Raman field coupling
  double big_detuning = 0.0;  // one-photon detuning Delta
  double detuning = 0.0;      // Raman/cavity detuning delta
  double gamma = 0.0;         // excited-state decay
  double kappa = 0.0;         // cavity decay
  int atoms = 1;
};

struct RamanEffective {
  double g_prime = 0.0;
  double lambda_c = 0.0;  // g'^2 / delta
  double epsilon = 0.0;   // sqrt(N) g'^2 / delta
  double gamma_eff = 0.0; // Gamma g^2 / Delta^2
  double kappa_eff = 0.0; // kappa g'^2 / delta^2
  std::vector<std::string> warnings;
};

RamanEffective raman_effective(const RamanParams& r);

/// Two-level stand-in for the Raman scheme: coupling g', cavity detuning
/// delta, so that lambda_c and epsilon match raman_effective().
SystemParams raman_system(const RamanParams& r);

// H(t) = sum_k c_k(t) O_k with fixed sparse O_k.
class TimeDependentHamiltonian {
 public:
  using Coefficient = std::function<cplx(double)>;

  explicit TimeDependentHamiltonian(SpaceDescriptor space) : space_(std::move(space)) {}
  static TimeDependentHamiltonian constant(const Operator& h);

  void add(Operator op, Coefficient coefficient = {});

  const SpaceDescriptor& space() const { return space_; }
  bool is_constant() const;
  // H'(s) = H(s + t0)
  TimeDependentHamiltonian shifted(double t0) const;
  Operator at(double t) const;
  // out = H(t) in
  void apply(double t, const Vec& in, Vec& out) const;

 private:
  struct Term {
    Operator op;
    Coefficient coefficient;
  };
  SpaceDescriptor space_;
  std::vector<Term> terms_;
};

// Collective lowering and excitation-number operators for each atomic
// sample in the space (a CollectiveDicke factor, or the SampleAtom factors
// sharing one sample id).
struct SampleOperators {
  Operator lowering;     // unnormalized sum of single-atom S^-
  Operator excitations;  // n_b
  int atoms = 0;
};
std::vector<SampleOperators> sample_operators(const SpaceDescriptor& space);

/// Interaction picture with respect to omega_c a^+a + omega_0 S_z:
/// H_I(t) = Omega (S_c^+ e^{i delta_d t} + h.c.) + g (e^{-i delta_c t} a^+ J^- + h.c.),
/// J^- = S_c^- + sum over samples of S^-.
TimeDependentHamiltonian full_model(const SpaceDescriptor& space, const SystemParams& p);
Operator full_hamiltonian(const SpaceDescriptor& space, const SystemParams& p, double t);

// Dispersive Hamiltonian with the cavity retained (photon-number dependent Stark shifts).
Operator dispersive_cavity_hamiltonian(const SpaceDescriptor& space, const SystemParams& p);

/// Vacuum-cavity effective Hamiltonian on [control, samples...]:
/// lambda_d sigma_z + lambda_c |e><e| + lambda_c (S_c^+ S^- + h.c.) + lambda_c S^+ S^-,
/// with S^+ S^- containing the sample Stark term n_b.
Operator effective_vacuum_hamiltonian(const SpaceDescriptor& space, const SystemParams& p);

/// Bosonized model on [control, BosonMode]:
/// (2 lambda_d + lambda_c) S_z + sqrt(N) eps b^+ b + eps (S_c^+ b + S_c^- b^+).
Operator jcm_hamiltonian(const SpaceDescriptor& space, const SystemParams& p);

/// (eps^2/delta)(|e><e| b b^+ - |g><g| b^+ b) on [control, BosonMode].
/// b b^+ is taken as n + 1 on every retained level.
Operator dispersive_mode_hamiltonian(const SpaceDescriptor& space, const EffectiveParams& eff);

/// n-sample bosonized model on [control, mode_1, ..., mode_n], each mode a
/// BosonMode or a CollectiveDicke (b = S^- / sqrt(N)):
/// (2 lambda_d + lambda_c) S_z + sqrt(N) eps sum_jk b_j^+ b_k + eps (S_c^+ sum b_j + h.c.).
Operator multi_sample_hamiltonian(const SpaceDescriptor& space, const SystemParams& p);

// Control-qubit helpers on a space that has exactly one ControlQubit factor.
std::size_t control_index(const SpaceDescriptor& space);
// Mode lowering b for a BosonMode or CollectiveDicke factor.
Operator mode_lowering(const SpaceDescriptor& space, std::size_t factor_index);

}  // namespace cjcm

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cjcm/hilbert.hpp"
#include "cjcm/model.hpp"

namespace cjcm {

struct Observable {
  std::string name;
  Operator op;
};

struct CollapseChannel {
  Operator op;
  double rate = 0.0;  // gamma in gamma (L rho L^+ - {L^+ L, rho}/2)
};

struct PropagationOptions {
  std::size_t sample_stride = 1;  // record every k-th step (the last step is always recorded)
  bool record_states = false;
  std::vector<Observable> observables;
  // Pure states: accumulated norm drift before renormalization may not
  // exceed drift_tolerance per time_unit of evolution.
  double drift_tolerance = 1e-7;
  double time_unit = 1.0;
  // Density matrices: |Tr rho - 1| limit and eigenvalue floor at samples.
  double trace_tolerance = 1e-7;
  double positivity_floor = -1e-7;
};

template <class State>
struct PropagationReport {
  State final_state;
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> traces;  // traces[k][sample] for observable k
  std::vector<double> drift;                // accumulated norm / trace drift at each sample
  std::vector<State> snapshots;             // when record_states
  double min_eigenvalue = 0.0;              // density matrices: lowest eigenvalue seen at samples
  bool converged = true;
  std::string diagnostic;

  const std::vector<double>& trace(std::string_view name) const;
};

using StateReport = PropagationReport<PureState>;
using DensityReport = PropagationReport<DensityMatrix>;

inline constexpr Eigen::Index kMaxEigenDim = 4096;
inline constexpr Eigen::Index kMaxLindbladDim = 512;

/// Exact propagator of a time-independent Hermitian operator through its
/// eigendecomposition.
class StaticPropagator {
 public:
  explicit StaticPropagator(const Operator& h);

  const SpaceDescriptor& space() const { return space_; }
  const Eigen::VectorXd& energies() const { return energies_; }

  DenseMat unitary(double t) const;
  PureState evolve(const PureState& psi, double t) const;
  DensityMatrix evolve(const DensityMatrix& rho, double t) const;

 private:
  SpaceDescriptor space_;
  Eigen::VectorXd energies_;
  DenseMat vectors_;
};

PureState propagate_static(const Operator& h, const PureState& psi0, double t);

// Static evolution sampled on a time grid (observables and optional snapshots).
StateReport sample_static(const StaticPropagator& prop, const PureState& psi0, const std::vector<double>& times,
                          const PropagationOptions& options = {});

/// Fixed-step RK4 with per-step renormalization. The step is t_final / ceil(t_final / dt).
/// Throws NumericsError naming the step index on non-finite amplitudes.
StateReport propagate_timedep(const TimeDependentHamiltonian& h, const PureState& psi0, double t_final, double dt,
                              const PropagationOptions& options = {});

/// Fixed-step RK4 on the Lindblad master equation. No trace renormalization;
/// trace drift and positivity are diagnostics that set converged = false.
DensityReport lindblad_evolve(const TimeDependentHamiltonian& h, const std::vector<CollapseChannel>& channels,
                              const DensityMatrix& rho0, double t_final, double dt,
                              const PropagationOptions& options = {});
DensityReport lindblad_evolve(const Operator& h, const std::vector<CollapseChannel>& channels,
                              const DensityMatrix& rho0, double t_final, double dt,
                              const PropagationOptions& options = {});

enum class JcmBranch { ExcitedN, GroundNPlusOne };

/// Closed-form resonant evolution of the bosonized model within the
/// {|e,n>, |g,n+1>} doublet:
///   |e,n>   -> e^{-i sqrt(N) eps t (n + 1/2)} [cos(sqrt(n+1) eps t)|e,n> - i sin(...)|g,n+1>]
///   |g,n+1> -> e^{-i sqrt(N) eps t (n + 1/2)} [cos(sqrt(n+1) eps t)|g,n+1> - i sin(...)|e,n>]
/// The global phase is the diagonal energy of the doublet, which is what
/// exact propagation of jcm_hamiltonian produces at resonance.
PureState jcm_analytic(JcmBranch branch, int n, double t, double epsilon, int atoms, int n_max);

}  // namespace cjcm

#include <doctest.h>

#include <cmath>
#include <limits>

#include "cjcm/analysis.hpp"
#include "cjcm/dynamics.hpp"
#include "oracles.hpp"

using namespace cjcm;

namespace {

SystemParams resonant(int atoms) {
  SystemParams p;
  p.delta_c = 100.0;
  p.delta_d = 100.0;
  p.atoms = atoms;
  return with_resonant_drive(p);
}

PureState plus_state(const SpaceDescriptor& s) {
  Vec v = Vec::Ones(s.dim());
  return PureState(s, v).normalized();
}

}  // namespace

TEST_CASE("static propagation against a Taylor exponential") {
  const SystemParams p = resonant(10);
  const auto s = make_space({Factor::control(), Factor::boson(6)});
  const Operator h = jcm_hamiltonian(s, p);
  const PureState psi = plus_state(s);
  const double t = 3.3;
  const Vec ref = oracle::expm(-kI * t * h.dense()) * psi.amplitudes();
  const PureState out = propagate_static(h, psi, t);
  CHECK((out.amplitudes() - ref).norm() < 1e-10);
  CHECK(std::abs(out.norm() - 1.0) < 1e-12);
  CHECK((propagate_static(h, psi, 0.0).amplitudes() - psi.amplitudes()).norm() == 0.0);
}

TEST_CASE("ground state of the bosonized model only picks up a phase") {
  const SystemParams p = resonant(10);
  const auto s = make_space({Factor::control(), Factor::boson(4)});
  const PureState g0 = basis_state(s, {0, 0});
  const PureState out = propagate_static(jcm_hamiltonian(s, p), g0, 7.1);
  CHECK(std::abs(fidelity(out, g0) - 1.0) < 1e-14);
}

TEST_CASE("two-level phase evolution") {
  const auto s = make_space({Factor::control()});
  const double w = 2.5, t = 0.9;
  const Operator h = w * embed(local::excited_projector(), s, 0);
  const PureState out = propagate_static(h, plus_state(s), t);
  const cplx rel = out.amplitudes()[1] / out.amplitudes()[0];
  CHECK(std::abs(rel - std::exp(-kI * w * t)) < 1e-14);
}

TEST_CASE("unitary evolution preserves inner products") {
  const SystemParams p = resonant(10);
  const auto s = make_space({Factor::control(), Factor::boson(5)});
  const StaticPropagator prop(jcm_hamiltonian(s, p));
  const PureState a = plus_state(s);
  const PureState b = basis_state(s, {1, 2});
  const cplx before = a.inner(b);
  for (double t : {0.3, 1.7, 12.0}) CHECK(std::abs(std::abs(prop.evolve(a, t).inner(prop.evolve(b, t))) - std::abs(before)) < 1e-8);
}

TEST_CASE("closed-form resonant doublet matches exact propagation") {
  const SystemParams p = resonant(30);
  const double eps = effective_params(p).epsilon;
  const int n_max = 7;
  const auto s = make_space({Factor::control(), Factor::boson(n_max)});
  const StaticPropagator prop(jcm_hamiltonian(s, p));
  for (int n = 0; n <= 5; ++n) {
    for (double et : {0.1, 0.7, oracle::pi / 2.0, 2.3}) {
      const double t = et / eps;
      const PureState a = jcm_analytic(JcmBranch::ExcitedN, n, t, eps, p.atoms, n_max);
      const PureState b = prop.evolve(basis_state(s, {1, n}), t);
      CHECK(fidelity(a, b) >= 1.0 - 1e-10);
      // Global phase is pinned too.
      CHECK(std::abs(a.inner(b) - 1.0) < 1e-9);
      const PureState c = jcm_analytic(JcmBranch::GroundNPlusOne, n, t, eps, p.atoms, n_max);
      CHECK(fidelity(c, prop.evolve(basis_state(s, {0, n + 1}), t)) >= 1.0 - 1e-10);
    }
  }

  const PureState swap = jcm_analytic(JcmBranch::ExcitedN, 0, oracle::pi / 2.0 / eps, eps, p.atoms, 3);
  CHECK(fidelity(swap, basis_state(swap.space(), {0, 1})) == doctest::Approx(1.0).epsilon(1e-15));
  const PureState half = jcm_analytic(JcmBranch::ExcitedN, 0, oracle::pi / 4.0 / eps, eps, p.atoms, 3);
  CHECK(std::norm(half.amplitudes()[half.space().index_of(std::vector<int>{1, 0})]) == doctest::Approx(0.5));
  const PureState zero = jcm_analytic(JcmBranch::ExcitedN, 2, 0.0, eps, p.atoms, 4);
  CHECK(fidelity(zero, basis_state(zero.space(), {1, 2})) == 1.0);
}

TEST_CASE("excitation number is conserved") {
  const SystemParams p = resonant(10);
  const auto s = make_space({Factor::control(), Factor::boson(12)});
  const Operator n = number_operator(s, 0) + number_operator(s, 1);
  PropagationOptions o;
  o.observables = {{"n", n}};
  std::vector<double> times;
  for (int k = 0; k <= 40; ++k) times.push_back(0.25 * k);
  const PureState psi0 = product_state(s, {Vec::Ones(2), coherent_amplitudes(12, 1.0)});
  const StateReport r = sample_static(StaticPropagator(jcm_hamiltonian(s, p)), psi0, times, o);
  for (double v : r.trace("n")) CHECK(std::abs(v - r.trace("n").front()) < 1e-9);
}

TEST_CASE("RK4 reproduces static evolution with fourth-order convergence") {
  const SystemParams p = resonant(10);
  const auto s = make_space({Factor::control(), Factor::boson(4)});
  const Operator h = jcm_hamiltonian(s, p);
  const PureState psi = basis_state(s, {1, 0});
  const double t = 1.0 / effective_params(p).epsilon;
  const PureState exact = propagate_static(h, psi, t);
  const auto td = TimeDependentHamiltonian::constant(h);
  auto err = [&](double dt) { return (propagate_timedep(td, psi, t, dt).final_state.amplitudes() - exact.amplitudes()).norm(); };
  const double e1 = err(0.08), e2 = err(0.04);
  CHECK(e1 < 1e-5);
  CHECK(e1 / e2 > 12.0);
  CHECK(e1 / e2 < 20.0);
}

TEST_CASE("zero Hamiltonian is the identity") {
  SystemParams p;
  p.delta_c = 100.0;
  p.g = 1.0;
  p.atoms = 4;
  const auto s = make_space({Factor::control(), Factor::dicke(4, 2), Factor::cavity(2)});
  const TimeDependentHamiltonian h(s);
  const PureState psi = plus_state(s);
  const StateReport r = propagate_timedep(h, psi, 2.0, 0.01);
  CHECK((r.final_state.amplitudes() - psi.amplitudes()).norm() == 0.0);
  CHECK(r.converged);
}

TEST_CASE("stepped report bookkeeping") {
  const auto s = make_space({Factor::control()});
  const auto h = TimeDependentHamiltonian::constant(embed(local::sigma_x(), s, 0));
  PropagationOptions o;
  o.sample_stride = 3;
  o.observables = {{"P_e", embed(local::excited_projector(), s, 0)}};
  const StateReport r = propagate_timedep(h, basis_state(s, {1}), 1.0, 0.1, o);
  // 10 steps, stride 3: t = 0, 0.3, 0.6, 0.9 and the final step.
  CHECK(r.times.size() == 5);
  for (std::size_t i = 1; i < r.times.size(); ++i) {
    CHECK(r.times[i] > r.times[i - 1]);
    CHECK(r.drift[i] >= r.drift[i - 1]);
  }
  CHECK(r.times.back() == doctest::Approx(1.0));
  CHECK(std::abs(r.trace("P_e").back() - std::pow(std::cos(1.0), 2)) < 1e-6);
  CHECK_THROWS_AS(propagate_timedep(h, basis_state(s, {1}), 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(r.trace("nope"), ValidationError);
}

TEST_CASE("non-finite coefficients abort with the step index") {
  const auto s = make_space({Factor::control()});
  TimeDependentHamiltonian h(s);
  h.add(embed(local::sigma_x(), s, 0), [](double t) { return t > 0.25 ? cplx{std::numeric_limits<double>::quiet_NaN()} : cplx{1.0}; });
  try {
    propagate_timedep(h, basis_state(s, {0}), 1.0, 0.1);
    FAIL("expected NumericsError");
  } catch (const NumericsError& e) {
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("Lindblad without channels is unitary") {
  const SystemParams p = resonant(10);
  const auto s = make_space({Factor::control(), Factor::boson(4)});
  const Operator h = jcm_hamiltonian(s, p);
  const PureState psi = basis_state(s, {1, 1});
  const double t = 1.3 / effective_params(p).epsilon;
  const DensityReport r = lindblad_evolve(h, {}, DensityMatrix::from_pure(psi), t, 0.01);
  CHECK(fidelity(r.final_state, propagate_static(h, psi, t)) > 1.0 - 1e-8);
  CHECK(r.converged);
}

TEST_CASE("amplitude damping matches the exact decay") {
  const auto s = make_space({Factor::boson(2)});
  const double gamma = 0.8, t = 2.0;
  PropagationOptions o;
  o.observables = {{"n", number_operator(s, 0)}};
  o.sample_stride = 10;
  const DensityReport r = lindblad_evolve(Operator::zero(s), {{boson_annihilation(s, 0), gamma}},
                                          DensityMatrix::from_pure(basis_state(s, {1})), t, 0.002, o);
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    CHECK(std::abs(r.trace("n")[i] - oracle::damped_population(gamma, r.times[i])) < 1e-6);
  }
  CHECK(std::abs(r.final_state.trace() - 1.0) < 1e-12);
  CHECK(r.min_eigenvalue > -1e-12);
  CHECK(r.converged);
  CHECK_THROWS_AS(lindblad_evolve(Operator::zero(s), {{boson_annihilation(s, 0), -1.0}},
                                  DensityMatrix::from_pure(basis_state(s, {1})), t, 0.01),
                  ValidationError);
}

TEST_CASE("dimension caps") {
  const auto big = make_space({Factor::control(), Factor::boson(300)});
  CHECK_THROWS_AS(lindblad_evolve(Operator::zero(big), {}, DensityMatrix::from_pure(basis_state(big, {0, 0})), 1.0, 0.1),
                  NumericsError);
  const auto huge = make_space({Factor::control(), Factor::boson(2100)});
  CHECK_THROWS_AS(StaticPropagator(Operator::zero(huge)), NumericsError);
}

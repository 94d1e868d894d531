import math

import numpy as np
import pytest

from cornn.errors import NumericalError
from cornn.ode import (SCENARIOS, Activation, OscillatorSystem, check_continuous_energy,
                       check_continuous_sensitivity, check_gradient_ode_bound, discrete_error,
                       integrate, integrate_gradient_ode, random_system, scenario, step_input)


def zero_system(m=2, d=1):
    return OscillatorSystem(np.zeros((m, m)), np.zeros((m, m)), np.zeros((m, d)), np.zeros(m), 1.0, 1.0)


def test_zero_system_stays_zero():
    tr = integrate(zero_system(), 2.0, 0.01)
    assert not tr.ys.any() and not tr.zs.any()
    assert tr.times[0] == 0 and len(tr.times) == 201


def test_sho_from_zero_data_is_zero():
    assert not integrate(scenario("SHO"), 5.0, 0.01).ys.any()


def test_sho_matches_cosine():
    tr = integrate(scenario("SHO"), 10.0, 1e-3, y0=[1.0])
    assert np.max(np.abs(tr.ys[:, 0] - np.cos(tr.times))) < 1e-6


def test_rk4_fourth_order():
    errs = []
    for h in (0.1, 0.05):
        tr = integrate(scenario("SHO"), 10.0, h, y0=[1.0])
        errs.append(np.max(np.abs(tr.ys[:, 0] - np.cos(tr.times))))
    assert 14 < errs[0] / errs[1] < 18


def test_integrate_rejects_bad_step():
    with pytest.raises(ValueError):
        integrate(zero_system(), 0.01, 0.1)


def test_scenario_coefficients():
    s = scenario("SHO")
    assert s.gamma == 1 and s.eps == 0 and not s.W.any() and not s.V.any()
    assert s.activation is Activation.IDENTITY
    c = scenario("CFDO")
    assert (c.W[0, 0], c.V[0, 0], c.b[0], c.Wvel[0, 0], c.eps) == (-2, 2, 0.25, 0.75, 0.25)
    assert scenario("FC").W[0, 1] == 1 and scenario("ORD").W[0, 1] == 0
    with pytest.raises(ValueError):
        scenario("XYZ")


@pytest.mark.parametrize("kind", ["cos", "step"])
def test_ord_first_neuron_matches_uncoupled(kind):
    a = integrate(scenario("ORD", kind), 10.0, 1e-3)
    b = integrate(scenario("UC", kind), 10.0, 1e-3)
    assert np.max(np.abs(a.ys[:, 0] - b.ys[:, 0])) <= 1e-12
    assert np.max(np.abs(a.ys[:, 1] - b.ys[:, 1])) > 1e-3


def test_duffing_blowup_guard():
    with pytest.raises(NumericalError) as info:
        integrate(scenario("DUFF"), 10.0, 1e-3)
    assert info.value.time is not None and "blow-up" in str(info.value)


def test_all_scenarios_construct():
    for name in SCENARIOS:
        assert scenario(name).m in (1, 2)


def test_step_input_definition():
    u = step_input(8.0)
    assert [u(t)[0] for t in (0.0, 2.0, 3.9, 4.0, 6.0, 8.0)] == [0, 1, 1, 0, 1, 1]


def test_trajectory_csv(tmp_path):
    tr = integrate(scenario("UC"), 0.1, 0.01)
    tr.to_csv(tmp_path / "t.csv", {"scenario": "UC"})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "t,y0,y1,z0,z1" and len(lines) == 13


def test_continuous_energy_bound(rng):
    sys_ = random_system(rng, 4, 2, 2.0, 1.0)
    reps = check_continuous_energy(integrate(sys_, 1.0, 1e-3), 4, 2.0, 1.0)
    assert all(r.claimed and r.satisfied for r in reps)


def test_continuous_energy_zero_system():
    reps = check_continuous_energy(integrate(zero_system(), 1.0, 0.1), 2, 1.0, 1.0)
    assert all(r.observed == 0 for r in reps)


def test_continuous_energy_cfdo_not_claimed():
    tr = integrate(scenario("CORNN"), 2.0, 0.01)
    reps = check_continuous_energy(tr, 1, 1.0, 0.25)
    assert not any(r.claimed for r in reps)


def test_continuous_sensitivity(rng):
    sys_ = random_system(rng, 3, 2, 1.0, 1.0)
    other = random_system(rng, 3, 2, 1.0, 1.0).input_signal
    assert all(r.observed == 0 for r in
               check_continuous_sensitivity(sys_, sys_.input_signal, sys_.input_signal, 1.0, 0.01))
    reps = check_continuous_sensitivity(sys_, sys_.input_signal, other, 3.0, 0.01)
    assert all(r.claimed and r.satisfied for r in reps)


def test_continuous_sensitivity_causal(rng):
    sys_ = random_system(rng, 3, 1, 1.0, 1.0)
    base = sys_.input_signal

    def later(t):
        return base(t) + (1.0 if t > 1.0 else 0.0)

    reps = check_continuous_sensitivity(sys_, base, later, 2.0, 0.01)
    early = [r for r in reps if r.context["t"] <= 1.0 - 0.01]
    assert all(r.observed == 0 for r in early)


def test_gradient_ode_zero_forcing():
    sys_ = zero_system()
    tr = integrate(sys_, 1.0, 0.01)
    sens = integrate_gradient_ode(sys_, ("W", (0, 1)), tr)
    assert not sens.ys.any()


@pytest.mark.parametrize("theta", [("W", (0, 1)), ("Wvel", (1, 2)), ("V", (2, 0)), ("b", (1,))])
def test_gradient_ode_matches_finite_differences(rng, theta):
    sys_ = random_system(rng, 3, 2, 2.0, 1.0)
    tr = integrate(sys_, 2.0, 1e-2)
    sens = integrate_gradient_ode(sys_, theta, tr)
    h = 1e-5

    def shifted(delta):
        arr = getattr(sys_, theta[0]).copy()
        arr[theta[1]] += delta
        kw = {k: getattr(sys_, k) for k in ("W", "Wvel", "V", "b", "gamma", "eps", "activation",
                                            "input_signal")}
        kw[theta[0]] = arr
        return integrate(OscillatorSystem(**kw), 2.0, 1e-2).ys

    fd = (shifted(h) - shifted(-h)) / (2 * h)
    assert np.max(np.abs(fd - sens.ys)) <= 1e-4 * np.max(np.abs(sens.ys))


def test_gradient_ode_rejects_foreign_trajectory(rng):
    a = random_system(rng, 2, 1, 1.0, 1.0)
    b = random_system(rng, 2, 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        integrate_gradient_ode(a, ("b", (0,)), integrate(b, 1.0, 0.01))


def test_gradient_ode_bound(rng):
    for _ in range(10):
        sys_ = random_system(rng, 3, 2, rng.uniform(0.5, 3), rng.uniform(0.5, 3))
        norm = np.abs(sys_.W).sum(1).max() + np.abs(sys_.Wvel).sum(1).max()
        shrink = min(1.0, 0.99 * sys_.eps / norm)
        sys_.W, sys_.Wvel = sys_.W * shrink, sys_.Wvel * shrink
        sens = integrate_gradient_ode(sys_, ("W", (1, 2)), integrate(sys_, 3.0, 0.01))
        reps = check_gradient_ode_bound(sys_, sens)
        assert all(r.claimed and r.satisfied for r in reps)


def test_discrete_cell_first_order(rng):
    sys_ = random_system(rng, 3, 2, 1.0, 1.0)
    e = [discrete_error(sys_, dt, 3.0) for dt in (0.01, 0.005, 0.0025)]
    assert 1.7 <= e[0] / e[1] <= 2.3 and 1.7 <= e[1] / e[2] <= 2.3


def test_linear_separation_in_time(rng):
    sys_ = random_system(rng, 2, 2, 1.0, 1.0)
    other = random_system(rng, 2, 2, 1.0, 1.0).input_signal
    reps = check_continuous_sensitivity(sys_, sys_.input_signal, other, 5.0, 0.01)
    for r in reps:
        assert r.observed <= r.bound
        assert math.isfinite(r.observed)

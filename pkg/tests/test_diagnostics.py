import json
import math

import numpy as np
import pytest

from cornn.cell import CoRnnParams, Variant, rollout
from cornn.diagnostics import (BoundReport, chat, check_energy, check_gradient_bound,
                               check_jacobian_products, check_jacobians, check_sensitivity, eta,
                               eta_fraction, eta_satisfying_params, fit_log_decay, gradient_bound,
                               ltd_profile, matched_tanh_params, min_training_steps, random_params,
                               write_csv, write_jsonl)
from cornn.grad import GradReport, bptt, gradient_contribution


def test_bound_report_slack():
    assert BoundReport("x", 1.0 + 1e-13, 1.0).satisfied
    assert not BoundReport("x", 1.0 + 1e-9, 1.0).satisfied


def test_unclaimed_violation_passes():
    rep = BoundReport("x", 2.0, 1.0, claimed=False)
    assert not rep.satisfied and rep.passed


def test_eta_examples():
    p = CoRnnParams.zeros(3, 1, dt=0.01)
    e, thr = eta(p, 0.5)
    assert e == pytest.approx(0.01 / 1.01) and thr == pytest.approx(0.1)
    W = np.array([[0.5, -0.5], [0.25, 0.0]])
    Wv = np.array([[1.0, 0.0], [0.0, 0.5]])
    p = CoRnnParams(W, Wv, np.ones((2, 1)), np.zeros(2), 0.01, 1.0, 1.0)
    assert eta(p)[0] == pytest.approx(0.019802, abs=1e-6)
    assert eta(CoRnnParams.zeros(1, 1, dt=0.04), 0.5)[1] == pytest.approx(0.2)


def test_eta_general_form():
    p = CoRnnParams(np.eye(2) * 2, np.eye(2) * 3, np.ones((2, 1)), np.zeros(2), 0.1, 4.0, 2.0,
                    Variant.EXPLICIT)
    assert eta(p)[0] == pytest.approx(max(0.1 * 6, 0.1 * 3))


def test_eta_rejects_bad_r():
    with pytest.raises(ValueError):
        eta(CoRnnParams.zeros(1, 1), 0.4)


def test_eta_fraction():
    assert eta_fraction([(0.1, 0.2), (0.3, 0.2)]) == 0.5
    assert math.isnan(eta_fraction([]))


def test_check_energy_zero_rollout():
    p = CoRnnParams.zeros(2, 1)
    reps = check_energy(rollout(p, np.zeros((5, 1))), p)
    assert all(r.satisfied and r.observed == 0 for r in reps)


def test_check_energy_random_unit_instance(rng):
    p = random_params(rng, 8, 2, 0.01)
    reps = check_energy(rollout(p, rng.uniform(-1, 1, (100, 2))), p)
    assert len(reps) == 100 and all(r.claimed and r.satisfied for r in reps)
    assert reps[-1].bound == pytest.approx(8.0)


def test_check_energy_condition_not_met_is_not_claimed(rng):
    p = random_params(rng, 4, 2, 0.05, gamma=1.0, eps=0.3, variant=Variant.EXPLICIT)
    reps = check_energy(rollout(p, rng.uniform(-1, 1, (20, 2))), p)
    assert all(not r.claimed and r.passed for r in reps)
    assert "eps <= 1/2" in reps[0].context["condition"]


def test_check_energy_explicit_dt_too_large(rng):
    p = random_params(rng, 4, 2, 0.5, gamma=1.0, eps=1.0, variant=Variant.EXPLICIT)
    reps = check_energy(rollout(p, rng.uniform(-1, 1, (20, 2))), p)
    assert not reps[0].claimed


def test_check_sensitivity_examples(rng):
    p = random_params(rng, 8, 2, 0.01)
    a = rng.uniform(-1, 1, (100, 2))
    assert all(r.observed == 0 for r in check_sensitivity(p, a, a))
    b = rng.uniform(-1, 1, (100, 2))
    reps = check_sensitivity(p, a, b)
    assert all(r.satisfied for r in reps) and reps[-1].bound == pytest.approx(32.0)
    c = a.copy()
    c[-1] += 1.0
    reps = check_sensitivity(p, a, c)
    assert all(r.observed == 0 for r in reps[:-1]) and reps[-1].observed > 0


def test_check_sensitivity_length_mismatch(rng):
    p = random_params(rng, 2, 1, 0.01)
    with pytest.raises(ValueError):
        check_sensitivity(p, np.zeros((3, 1)), np.zeros((4, 1)))


def test_gradient_bound_values():
    assert gradient_bound(128, 1.0) == pytest.approx(1.5 * (128 + math.sqrt(128)))
    assert gradient_bound(128, 1.0) == pytest.approx(208.97, abs=0.01)
    assert gradient_bound(1, 0.0) == 1.5
    zero = GradReport({"W": np.zeros((2, 2))}, 0.0)
    assert check_gradient_bound(zero, 2, 0.0).satisfied


def test_jacobian_checks_under_weight_assumption(rng):
    for rexp in (0.5, 1.0):
        p = eta_satisfying_params(rng, 4, 2, 0.01, rexp)
        assert eta(p, rexp)[0] <= eta(p, rexp)[1]
        r = rollout(p, rng.uniform(-1, 1, (60, 2)))
        reps = check_jacobians(p, r, rexp) + check_jacobian_products(p, r, rexp)
        assert all(x.claimed and x.satisfied for x in reps)


def test_chat_examples():
    assert chat(0, 0.01) == 1.0
    assert chat(int(1e6), 1e-6) == pytest.approx(1 / math.cosh(1) ** 2, rel=1e-5)
    vals = [chat(k, 0.01) for k in range(0, 500, 7)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_min_training_steps():
    L = min_training_steps(1e-5, 128, 1.0, 0.01, 0.5, 1 / 1.01)
    assert L == pytest.approx(37.8, abs=0.05)
    assert min_training_steps(0.5e-5, 128, 1.0, 0.01, 0.5, 1 / 1.01) == pytest.approx(2 * L)
    assert min_training_steps(1.0, 1, 0.0, 1.0, 1.0, 1.0) == pytest.approx(1 / 1.5)


def test_ltd_profile_matches_contributions(rng):
    p = eta_satisfying_params(rng, 3, 2, 0.05, 0.5)
    u = rng.uniform(0, 1, (12, 2))
    t = rng.uniform(-1, 1, (12, 3))
    coord = ("V", (1, 0))
    prof = ltd_profile(p, u, t, coord, n=10)
    r = rollout(p, u)
    for k in range(1, 11):
        assert prof.magnitude[k - 1] == pytest.approx(
            abs(gradient_contribution(p, r, t, 10, k, coord)), rel=1e-9, abs=1e-15)
    assert prof.reference[0] == pytest.approx(chat(1, 0.05) * p.delta * 0.05 ** 1.5)


def test_ltd_profile_short_term_scale(rng):
    p = eta_satisfying_params(rng, 8, 2, 0.01, 0.5)
    u = rng.uniform(0, 1, (50, 2))
    prof = ltd_profile(p, u, np.zeros((50, 8)), "b")
    # |y_n| <= sqrt(m t_n), so the n = k term is at most m delta dt times that
    assert prof.magnitude[-1] <= p.m * p.delta * p.dt * math.sqrt(p.m * 50 * p.dt)


def test_ltd_contrast_small(rng):
    p = eta_satisfying_params(rng, 16, 2, 0.01, 0.5)
    u = rng.uniform(0, 1, (100, 2))
    prof = ltd_profile(p, u, np.zeros((100, 16)), "b", tanh_params=matched_tanh_params(p, 3))
    assert prof.ratio() <= 100
    slope, r2 = fit_log_decay(100 - prof.k[:50], prof.tanh_magnitude[:50])
    assert slope < 0 and r2 > 0.9


def test_fit_log_decay_exact():
    x = np.arange(10)
    slope, r2 = fit_log_decay(x, 3 * np.exp(-0.7 * x))
    assert slope == pytest.approx(-0.7) and r2 == pytest.approx(1.0)


def test_reports_serialize(tmp_path, rng):
    p = random_params(rng, 2, 1, 0.1)
    reps = check_energy(rollout(p, np.ones((3, 1))), p)
    write_jsonl(reps, tmp_path / "r.jsonl", header={"seed": 1})
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert json.loads(lines[0]) == {"header": {"seed": 1}}
    assert json.loads(lines[1])["context"]["variant"] == "implicit"
    write_csv(reps, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().count("\n") == 4


def test_gradient_bound_on_unit_instances(rng):
    for _ in range(10):
        p = eta_satisfying_params(rng, 3, 2, 0.05, 0.5)
        u = rng.uniform(-1, 1, (10, 2))
        t = rng.uniform(-1, 1, (10, 3))
        g = bptt(p, rollout(p, u), t)
        assert check_gradient_bound(g, 3, np.abs(t).max()).satisfied

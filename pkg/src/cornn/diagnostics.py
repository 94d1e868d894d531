"""Executable checks for the hidden-state and gradient bounds.

Each check returns :class:`BoundReport` objects. A report records whether the
check's precondition held (``claimed``) separately from whether the observed
quantity stayed under the bound (``satisfied``), so a check whose
precondition fails never reads as a pass or as a violation.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cell import CoRnnParams, TanhRnnParams, Variant, rollout, tanh_rollout
from .grad import bptt, finite_diff_gradient, preact_adjoints, step_jacobian, tanh_preact_adjoints
from .linalg import inf_norm

REL_SLACK = 1e-12


@dataclass
class BoundReport:
    name: str
    observed: float
    bound: float
    satisfied: bool = None
    claimed: bool = True
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        self.observed = float(self.observed)
        self.bound = float(self.bound)
        if self.satisfied is None:
            self.satisfied = bool(self.observed <= self.bound + REL_SLACK * abs(self.bound))

    @property
    def passed(self):
        """True unless the bound was claimed and violated."""
        return self.satisfied or not self.claimed

    def to_dict(self):
        d = asdict(self)
        d["context"] = {k: _jsonable(v) for k, v in self.context.items()}
        return d


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Variant):
        return v.value
    return v


def write_jsonl(reports, path, header=None):
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"header": header}) + "\n")
        for rep in reports:
            fh.write(json.dumps(rep.to_dict()) + "\n")


def write_csv(reports, path, header=None):
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write("# " + json.dumps(header) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["name", "observed", "bound", "satisfied", "claimed", "context"])
        for rep in reports:
            writer.writerow([rep.name, repr(rep.observed), repr(rep.bound), rep.satisfied,
                             rep.claimed, json.dumps(rep.to_dict()["context"])])


def all_passed(reports):
    return all(rep.passed for rep in reports)


# -- weight assumption --------------------------------------------------------

def is_unit_implicit(p):
    return p.variant is Variant.IMPLICIT and p.eps == 1.0 and p.gamma == 1.0


def eta(p, r=0.5):
    """Weight/time-step quantity and its threshold dt**r.

    For the implicit cell with eps = gamma = 1 the damping factor 1/(1+dt)
    is folded in; otherwise the general max{dt(gamma+|W|), dt|Wvel|} is used.
    """
    if not 0.5 <= r <= 1.0:
        raise ValueError(f"r must lie in [1/2, 1], got {r}")
    w, wv = inf_norm(p.W), inf_norm(p.Wvel)
    dt = p.dt
    if is_unit_implicit(p):
        value = max(dt * (1.0 + w), dt * wv) / (1.0 + dt)
    else:
        value = max(dt * (p.gamma + w), dt * wv)
    return value, dt ** r


def eta_fraction(series):
    """Fraction of (eta, threshold) pairs with eta <= threshold."""
    series = list(series)
    if not series:
        return float("nan")
    return sum(1 for e, thr in series if e <= thr) / len(series)


# -- hidden-state bounds ------------------------------------------------------

def energy_condition(p):
    """(holds, description, gamma_scale) for the energy bound of this cell."""
    dt, eps, gamma = p.dt, p.eps, p.gamma
    if is_unit_implicit(p):
        return dt < 1.0, "implicit eps=gamma=1: dt < 1", 1.0
    if eps <= 0.5:
        return False, "eps <= 1/2", gamma
    if p.variant is Variant.IMPLICIT:
        limit = (2 * eps - 1) / gamma
        return dt < limit, f"implicit: dt < (2eps-1)/gamma = {limit:.6g}", gamma
    limit = (2 * eps - 1) / (gamma + eps ** 2)
    return dt < limit, f"explicit: dt < (2eps-1)/(gamma+eps^2) = {limit:.6g}", gamma


def check_energy(r, p):
    """Energy y.y + z.z/gamma against m t_n / gamma at every step.

    Batched rollouts report the maximum over the batch.
    """
    holds, why, g = energy_condition(p)
    reports = []
    for n in range(1, r.n_steps + 1):
        e = np.sum(r.y[n] ** 2, axis=-1) + np.sum(r.z[n] ** 2, axis=-1) / g
        reports.append(BoundReport(
            "energy", np.max(e), p.m * n * p.dt / g, claimed=holds,
            context={"n": n, "dt": p.dt, "variant": p.variant, "condition": why,
                     "eps": p.eps, "gamma": p.gamma}))
    return reports


def check_sensitivity(p, inputs_a, inputs_b):
    """Input-perturbation separation against 4 m t_n (implicit, eps=gamma=1)."""
    inputs_a = np.asarray(inputs_a, dtype=np.float64)
    inputs_b = np.asarray(inputs_b, dtype=np.float64)
    if inputs_a.shape != inputs_b.shape:
        raise ValueError(f"input sequences differ in shape: {inputs_a.shape} vs {inputs_b.shape}")
    claimed = is_unit_implicit(p)
    ra, rb = rollout(p, inputs_a), rollout(p, inputs_b)
    reports = []
    for n in range(1, ra.n_steps + 1):
        dy, dz = ra.y[n] - rb.y[n], ra.z[n] - rb.z[n]
        obs = np.max(np.sum(dy ** 2, axis=-1) + np.sum(dz ** 2, axis=-1))
        reports.append(BoundReport("sensitivity", obs, 4 * p.m * n * p.dt, claimed=claimed,
                                   context={"n": n, "dt": p.dt, "variant": p.variant}))
    return reports


# -- gradient bounds ------------------------------------------------------------

def gradient_bound(m, ybar):
    return 1.5 * (m + ybar * math.sqrt(m))


def check_gradient_bound(g, m, ybar, claimed=True):
    return BoundReport("gradient_magnitude", g.max_abs(), gradient_bound(m, ybar), claimed=claimed,
                       context={"m": m, "Ybar": ybar})


def check_jacobians(p, r, rexp=0.5):
    """Infinity norm of every step Jacobian against 1 + 3 dt^r."""
    e, thr = eta(p, rexp)
    claimed = is_unit_implicit(p) and e <= thr
    bound = 1.0 + 3.0 * p.dt ** rexp
    return [BoundReport("step_jacobian", inf_norm(step_jacobian(p, r, i).full()), bound,
                        claimed=claimed, context={"i": i, "r": rexp, "eta": e, "dt": p.dt})
            for i in range(1, r.n_steps + 1)]


def check_jacobian_products(p, r, rexp=0.5, span_limit=0.5, tolerance=0.05):
    """Norms of dX_n/dX_k against (1 + 3 (n-k) dt^r)(1 + tolerance).

    Only pairs with (n - k) dt^r <= span_limit are checked, where the
    linearised product bound is meaningful.
    """
    e, thr = eta(p, rexp)
    claimed = is_unit_implicit(p) and e <= thr
    step = p.dt ** rexp
    N = r.n_steps
    jac = [None] + [step_jacobian(p, r, i).full() for i in range(1, N + 1)]
    reports = []
    for k in range(0, N):
        prod = np.eye(2 * p.m)
        for n in range(k + 1, N + 1):
            if (n - k) * step > span_limit:
                break
            prod = jac[n] @ prod
            reports.append(BoundReport(
                "jacobian_product", inf_norm(prod), (1 + 3 * (n - k) * step) * (1 + tolerance),
                claimed=claimed, context={"n": n, "k": k, "r": rexp, "eta": e}))
    return reports


def chat(k, dt):
    """sech^2(sqrt(k dt)(1 + dt))."""
    if k < 0 or dt <= 0:
        raise ValueError("need k >= 0 and dt > 0")
    return 1.0 / math.cosh(math.sqrt(k * dt) * (1.0 + dt)) ** 2


def min_training_steps(zeta, m, ybar, dt, r, delta):
    """Worst-case number of plain gradient steps before the weight assumption can fail."""
    if not r <= 1:
        raise ValueError("r must be <= 1")
    return 1.0 / (zeta * gradient_bound(m, ybar) * m * dt ** (1.0 - r) * delta)


# -- long-term dependency profile -----------------------------------------------

@dataclass
class LtdProfile:
    """Per-k magnitudes of the (n, k) gradient terms for a fixed n."""

    n: int
    k: np.ndarray
    magnitude: np.ndarray
    reference: np.ndarray
    tanh_magnitude: np.ndarray = None

    def ratio(self, k_max=None):
        """max/min of the magnitudes over 1 <= k <= k_max."""
        k_max = self.n // 2 if k_max is None else k_max
        sel = self.magnitude[(self.k >= 1) & (self.k <= k_max)]
        return float(sel.max() / sel.min())

    def rows(self):
        for i, k in enumerate(self.k):
            row = {"k": int(k), "magnitude": float(self.magnitude[i]),
                   "reference": float(self.reference[i])}
            if self.tanh_magnitude is not None:
                row["tanh_magnitude"] = float(self.tanh_magnitude[i])
            yield row


def _term_magnitudes(g_pre, rho_fn, theta, N):
    # g_pre[k-1] is the adjoint of the k-th pre-activation for the single loss term E_n
    mags = np.empty(N)
    if isinstance(theta, str):
        for k in range(1, N + 1):
            rho = rho_fn(theta, k)
            mags[k - 1] = np.linalg.norm(g_pre[k - 1]) * (1.0 if rho is None else np.linalg.norm(rho))
    else:
        name, (i, *rest) = theta
        for k in range(1, N + 1):
            rho = rho_fn(name, k)
            mags[k - 1] = abs(g_pre[k - 1][i] * (1.0 if rho is None else rho[rest[0]]))
    return mags


def ltd_profile(p, inputs, targets, theta="b", n=None, tanh_params=None):
    """|dE_n^(k)/dtheta| for k = 1..n.

    ``theta`` is a coordinate (``Coord``/tuple) or a parameter name; a name
    reports the Euclidean norm of the term over the whole parameter block.
    The reference column is chat(k) * delta * dt^(3/2).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    r = rollout(p, inputs)
    n = r.n_steps if n is None else n
    dy = np.zeros_like(r.y[1:])
    dy[n - 1] = r.y[n] - targets[n - 1]
    gA = preact_adjoints(p, r, dy)[:n]

    def rho_fn(name, k):
        return {"W": r.y[k - 1], "Wvel": r.z[k - 1], "V": r.inputs[k - 1], "b": None}[name]

    mags = _term_magnitudes(gA, rho_fn, theta, n)
    ks = np.arange(1, n + 1)
    ref = np.array([chat(k, p.dt) for k in ks]) * p.delta * p.dt ** 1.5
    profile = LtdProfile(n, ks, mags, ref)
    if tanh_params is not None:
        profile.tanh_magnitude = tanh_ltd_magnitudes(tanh_params, inputs, targets, theta, n)
    return profile


def tanh_ltd_magnitudes(tp, inputs, targets, theta="b", n=None):
    tr = tanh_rollout(tp, inputs)
    n = tr.n_steps if n is None else n
    dh = np.zeros_like(tr.h[1:])
    dh[n - 1] = tr.h[n] - targets[n - 1]
    g_pre = tanh_preact_adjoints(tp, tr, dh)[:n]
    name_map = {"W": "Wh", "V": "Vin"}

    def rho_fn(name, k):
        name = name_map.get(name, name)
        return {"Wh": tr.h[k - 1], "Vin": tr.inputs[k - 1], "b": None}[name]

    return _term_magnitudes(g_pre, rho_fn, theta, n)


def matched_tanh_params(p, seed, radius=0.9):
    """tanh RNN sharing the input map and bias of ``p`` with a random
    recurrent matrix rescaled to the given spectral radius."""
    rng = np.random.default_rng(seed)
    Wh = rng.standard_normal((p.m, p.m))
    Wh *= radius / np.max(np.abs(np.linalg.eigvals(Wh)))
    return TanhRnnParams(Wh, p.V, p.b)


def fit_log_decay(distance, magnitude):
    """Least-squares fit of log(magnitude) against distance; returns (slope, r2)."""
    x = np.asarray(distance, dtype=np.float64)
    y = np.log(np.asarray(magnitude, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


# -- random instances -----------------------------------------------------------

def random_params(rng, m, d, dt, gamma=1.0, eps=1.0, variant=Variant.IMPLICIT, scale=1.0):
    """Uniform(-scale/sqrt(m), scale/sqrt(m)) recurrent weights, Uniform(-1, 1) V and b."""
    s = scale / math.sqrt(m)
    return CoRnnParams(rng.uniform(-s, s, (m, m)), rng.uniform(-s, s, (m, m)),
                       rng.uniform(-1, 1, (m, d)), rng.uniform(-1, 1, m), dt, gamma, eps, variant)


def eta_satisfying_params(rng, m, d, dt, r=0.5, fill=0.9):
    """Implicit eps = gamma = 1 parameters whose eta is at most ``fill`` times dt^r."""
    cap = (1.0 + dt) * dt ** (r - 1.0)
    w_limit = max(fill * cap - 1.0, 0.0)
    wv_limit = fill * cap

    def scaled(limit):
        M = rng.uniform(-1, 1, (m, m))
        norm = inf_norm(M)
        return M * (rng.uniform(0.1, 1.0) * limit / norm) if norm > 0 else M

    return CoRnnParams(scaled(w_limit), scaled(wv_limit), rng.uniform(-1, 1, (m, d)),
                       rng.uniform(-1, 1, m), dt, 1.0, 1.0, Variant.IMPLICIT)


def gradcheck_instance(rng, unit_eta=False):
    """A random small instance for the gradient oracle: (params, inputs, targets)."""
    m, d, N = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 13))
    dt = float(rng.uniform(0.01, 0.5))
    if unit_eta:
        p = eta_satisfying_params(rng, m, d, dt, 0.5)
    else:
        variant = Variant.IMPLICIT if rng.random() < 0.5 else Variant.EXPLICIT
        p = random_params(rng, m, d, dt, rng.uniform(0.5, 4), rng.uniform(0.5, 4), variant,
                          scale=rng.uniform(0.5, 3))
    return p, rng.uniform(-1, 1, (N, d)), rng.uniform(-1, 1, (N, m))


def gradcheck_reports(p, inputs, targets, tol=1e-6, floor=1e-8):
    """Relative BPTT vs finite-difference error, plus the gradient bound when eta holds."""
    r = rollout(p, inputs)
    g = bptt(p, r, targets)
    fd = finite_diff_gradient(p, inputs, targets, precision=np.longdouble)
    a, b = g.flat(), fd.flat()
    mask = np.abs(b) > floor
    rel = float(np.max(np.abs(a[mask] - b[mask]) / np.abs(b[mask]))) if mask.any() else 0.0
    ctx = {"m": p.m, "d": p.d, "N": len(inputs), "variant": p.variant, "dt": p.dt}
    reports = [BoundReport("gradcheck_relative_error", rel, tol, context=ctx)]
    e, thr = eta(p, 0.5)
    ybar = float(np.max(np.abs(targets))) if len(targets) else 0.0
    reports.append(check_gradient_bound(g, p.m, ybar, claimed=bool(e <= thr)))
    return reports

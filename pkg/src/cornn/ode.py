"""Continuous-time oscillator network, its scenario library and bound checks.

The system is y' = z, z' = sigma(W y + Wvel z + V u(t) + b) - gamma y - eps z,
integrated with classical fixed-step RK4 from zero initial data unless
overridden.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diagnostics import BoundReport
from .errors import NumericalError, ShapeError
from .linalg import inf_norm, one_norm

BLOWUP_LIMIT = 1e6


class Activation(str, enum.Enum):
    TANH = "tanh"
    IDENTITY = "identity"
    DUFFING = "duffing"

    def __call__(self, x):
        if self is Activation.TANH:
            return np.tanh(x)
        if self is Activation.IDENTITY:
            return x
        return x - x ** 3 / 3.0

    def derivative(self, x):
        if self is Activation.TANH:
            return 1.0 - np.tanh(x) ** 2
        if self is Activation.IDENTITY:
            return np.ones_like(x)
        return 1.0 - x ** 2


def cos_input(freq=4.0, d=1):
    def u(t):
        return np.full(d, math.cos(freq * t))
    return u


def step_input(T, d=1):
    """1 on [T/4, T/2) and [3T/4, T], 0 elsewhere."""
    def u(t):
        on = 0.25 * T <= t < 0.5 * T or 0.75 * T <= t <= T
        return np.full(d, 1.0 if on else 0.0)
    return u


def zero_input(d=1):
    def u(t):
        return np.zeros(d)
    return u


@dataclass
class OscillatorSystem:
    W: np.ndarray
    Wvel: np.ndarray
    V: np.ndarray
    b: np.ndarray
    gamma: float
    eps: float
    activation: Activation = Activation.TANH
    input_signal: Callable = None
    name: str = ""

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        self.Wvel = np.atleast_2d(np.asarray(self.Wvel, dtype=np.float64))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=np.float64))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        m = self.W.shape[0]
        if self.W.shape != (m, m) or self.Wvel.shape != (m, m):
            raise ShapeError("W and Wvel must be square of equal size")
        if self.V.shape[0] != m or self.b.shape != (m,):
            raise ShapeError("V rows and b length must match the hidden size")
        if self.gamma <= 0 or self.eps < 0:
            raise ValueError("need gamma > 0 and eps >= 0")
        self.activation = Activation(self.activation)
        if self.input_signal is None:
            self.input_signal = zero_input(self.d)

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.V.shape[1]

    def preactivation(self, t, y, z):
        return self.W @ y + self.Wvel @ z + self.V @ self.input_signal(t) + self.b

    def rhs(self, t, y, z):
        A = self.preactivation(t, y, z)
        return z, self.activation(A) - self.gamma * y - self.eps * z

    def with_input(self, u):
        return OscillatorSystem(self.W, self.Wvel, self.V, self.b, self.gamma, self.eps,
                                self.activation, u, self.name)


@dataclass
class Trajectory:
    times: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, header=None):
        import json

        m = self.ys.shape[1]
        with open(path, "w") as fh:
            if header is not None:
                fh.write("# " + json.dumps(header) + "\n")
            cols = ["t"] + [f"y{i}" for i in range(m)] + [f"z{i}" for i in range(m)]
            fh.write(",".join(cols) + "\n")
            for t, y, z in zip(self.times, self.ys, self.zs):
                fh.write(",".join(repr(float(v)) for v in (t, *y, *z)) + "\n")


def _n_steps(T, h):
    if h <= 0 or T < h:
        raise ValueError(f"need h > 0 and T >= h, got T={T}, h={h}")
    return int(round(T / h))


def _rk4(f, t, state, h):
    k1 = f(t, state)
    k2 = f(t + 0.5 * h, state + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, state + 0.5 * h * k2)
    k4 = f(t + h, state + h * k3)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(sys, T, h, y0=None, z0=None):
    """RK4 with step h, sampled every step; aborts on non-finite or blown-up states."""
    n = _n_steps(T, h)
    m = sys.m
    state = np.concatenate([np.zeros(m) if y0 is None else np.asarray(y0, dtype=np.float64),
                            np.zeros(m) if z0 is None else np.asarray(z0, dtype=np.float64)])

    def f(t, s):
        dy, dz = sys.rhs(t, s[:m], s[m:])
        return np.concatenate([dy, dz])

    out = np.empty((n + 1, 2 * m))
    out[0] = state
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t = k * h
            state = _rk4(f, t, state, h)
            if not np.isfinite(state).all():
                raise NumericalError(f"non-finite state at t={(k + 1) * h:.6g}", index=k + 1,
                                     time=(k + 1) * h)
            if np.abs(state).max() > BLOWUP_LIMIT:
                raise NumericalError(f"state exceeded {BLOWUP_LIMIT:g} at t={(k + 1) * h:.6g} (blow-up)",
                                     index=k + 1, time=(k + 1) * h)
            out[k + 1] = state
    return Trajectory(np.arange(n + 1) * h, out[:, :m], out[:, m:],
                      {"scenario": sys.name, "T": T, "h": h})


# -- scenarios ----------------------------------------------------------------

SCENARIOS = ("SHO", "FHO", "FDO", "CFDO", "CORNN", "DUFF", "UC", "ORD", "FC")
DEFAULT_T = 10.0


def scenario(name, input_kind="cos", T=DEFAULT_T):
    """Single- and two-neuron waveform systems; ``input_kind`` is "cos" or "step"."""
    key = name.upper()
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    if input_kind not in ("cos", "step"):
        raise ValueError("input_kind must be 'cos' or 'step'")
    m = 2 if key in ("UC", "ORD", "FC") else 1
    u = cos_input(4.0) if input_kind == "cos" else step_input(T)
    if key in ("SHO", "FHO", "FDO"):
        V = 0.0 if key == "SHO" else 1.0
        eps = 0.25 if key == "FDO" else 0.0
        return OscillatorSystem([[0.0]], [[0.0]], [[V]], [0.0], 1.0, eps, Activation.IDENTITY, u, key)
    if key in ("CFDO", "CORNN", "DUFF"):
        act = {"CFDO": Activation.IDENTITY, "CORNN": Activation.TANH, "DUFF": Activation.DUFFING}[key]
        return OscillatorSystem([[-2.0]], [[0.75]], [[2.0]], [0.25], 1.0, 0.25, act, u, key)
    W = {"UC": [[-2, 0], [0, -2]], "ORD": [[-2, 0], [3, -2]], "FC": [[-2, 1], [3, -2]]}[key]
    Wvel = {"UC": [[0.75, 0], [0, 0.75]], "ORD": [[0.75, 0], [-1, 0.75]],
            "FC": [[0.75, 0.3], [-1, 0.75]]}[key]
    return OscillatorSystem(W, Wvel, [[2.0], [2.0]], [0.25, 0.25], 1.0, 0.25, Activation.TANH, u, key)


def random_system(rng, m, d, gamma, eps, weight_scale=1.0, input_freqs=None):
    """Random tanh system driven by a smooth sum of sinusoids."""
    s = weight_scale / math.sqrt(m)
    freqs = rng.uniform(0.5, 4.0, d) if input_freqs is None else np.asarray(input_freqs)
    phases = rng.uniform(0, 2 * math.pi, d)

    def u(t):
        return np.sin(freqs * t + phases)

    return OscillatorSystem(rng.uniform(-s, s, (m, m)), rng.uniform(-s, s, (m, m)),
                            rng.uniform(-1, 1, (m, d)), rng.uniform(-1, 1, m), gamma, eps,
                            Activation.TANH, u, "random")


# -- continuous bounds --------------------------------------------------------

def _precondition(sys_or_eps, activation=Activation.TANH):
    eps = sys_or_eps
    return eps >= 0.5 and Activation(activation) is Activation.TANH


def check_continuous_energy(traj, m, gamma, eps, activation=Activation.TANH, zero_initial=True):
    """|y|^2 <= m t / gamma and |z|^2 <= m t at every sample."""
    claimed = _precondition(eps, activation) and zero_initial
    reports = []
    for t, y, z in zip(traj.times[1:], traj.ys[1:], traj.zs[1:]):
        ctx = {"t": float(t), "eps": eps, "gamma": gamma}
        reports.append(BoundReport("continuous_energy_y", y @ y, m * t / gamma, claimed=claimed, context=ctx))
        reports.append(BoundReport("continuous_energy_z", z @ z, m * t, claimed=claimed, context=ctx))
    return reports


def check_continuous_sensitivity(sys, u_a, u_b, T, h):
    """Integrate under two inputs; |dy|^2 <= 4 m t / gamma and |dz|^2 <= 4 m t."""
    ta = integrate(sys.with_input(u_a), T, h)
    tb = integrate(sys.with_input(u_b), T, h)
    claimed = _precondition(sys.eps, sys.activation)
    reports = []
    for t, ya, za, yb, zb in zip(ta.times[1:], ta.ys[1:], ta.zs[1:], tb.ys[1:], tb.zs[1:]):
        dy, dz = ya - yb, za - zb
        ctx = {"t": float(t), "eps": sys.eps, "gamma": sys.gamma}
        reports.append(BoundReport("continuous_sensitivity_y", dy @ dy, 4 * sys.m * t / sys.gamma,
                                   claimed=claimed, context=ctx))
        reports.append(BoundReport("continuous_sensitivity_z", dz @ dz, 4 * sys.m * t,
                                   claimed=claimed, context=ctx))
    return reports


def _rho(sys, name, y, z, t):
    if name == "W":
        return y
    if name == "Wvel":
        return z
    if name == "V":
        return sys.input_signal(t)
    if name == "b":
        return np.ones(1)
    raise ValueError(f"unknown parameter {name!r}")


def integrate_gradient_ode(sys, theta, traj):
    """State sensitivities (y_theta, z_theta) for one coordinate ``theta``.

    The hidden state is re-integrated jointly with its sensitivity using the
    same RK4 step as ``traj`` (zero initial sensitivity), so the result is
    consistent with the cached trajectory to roundoff.
    """
    name, index = theta
    index = tuple(np.atleast_1d(index))
    i = int(index[0])
    j = int(index[1]) if len(index) > 1 else 0
    m = sys.m
    times = np.asarray(traj.times)
    h = float(times[1] - times[0])

    def f(t, s):
        y, z, yt, zt = s[:m], s[m:2 * m], s[2 * m:3 * m], s[3 * m:]
        A = sys.preactivation(t, y, z)
        dsig = sys.activation.derivative(A)
        forcing = np.zeros(m)
        forcing[i] = dsig[i] * _rho(sys, name, y, z, t)[j]
        dzt = dsig * (sys.W @ yt + sys.Wvel @ zt) + forcing - sys.gamma * yt - sys.eps * zt
        return np.concatenate([z, sys.activation(A) - sys.gamma * y - sys.eps * z, zt, dzt])

    state = np.concatenate([traj.ys[0], traj.zs[0], np.zeros(2 * m)])
    out = np.empty((len(times), 4 * m))
    out[0] = state
    for k in range(len(times) - 1):
        state = _rk4(f, times[k], state, h)
        out[k + 1] = state
    if not np.allclose(out[:, :m], traj.ys, rtol=1e-9, atol=1e-12):
        raise ValueError("trajectory was not produced by this system with the same step")
    return Trajectory(times, out[:, 2 * m:3 * m], out[:, 3 * m:],
                      {"theta": [name, list(index)], "h": h})


def gradient_growth_constant(sys):
    return max(one_norm(sys.W) / sys.gamma, 1.0 + one_norm(sys.Wvel))


def check_gradient_ode_bound(sys, sens):
    """Sensitivity energy against E0 exp(C t) + m t^2 / (2 gamma^2) for W entries.

    Claimed only when |W|_inf + |Wvel|_inf <= eps.
    """
    claimed = (sens.meta.get("theta", [None])[0] == "W"
               and inf_norm(sys.W) + inf_norm(sys.Wvel) <= sys.eps)
    C = gradient_growth_constant(sys)
    g = sys.gamma
    e0 = sens.ys[0] @ sens.ys[0] + sens.zs[0] @ sens.zs[0] / g
    reports = []
    for t, y, z in zip(sens.times[1:], sens.ys[1:], sens.zs[1:]):
        bound = e0 * math.exp(C * t) + sys.m * t ** 2 / (2 * g ** 2)
        reports.append(BoundReport("gradient_ode", y @ y + z @ z / g, bound, claimed=claimed,
                                   context={"t": float(t), "C": C}))
    return reports


def discrete_error(sys, p_dt, T, variant="implicit", reference_h=None):
    """max_n |y_n - y(t_n)|_inf between the coRNN cell with step p_dt and RK4.

    The cell consumes u(t_n) at step n, the sample that matches the
    right end of each step.
    """
    from .cell import CoRnnParams, rollout

    n = _n_steps(T, p_dt)
    ref_h = p_dt / 4 if reference_h is None else reference_h
    ref = integrate(sys, T, ref_h)
    stride = int(round(p_dt / ref_h))
    inputs = np.array([sys.input_signal(k * p_dt) for k in range(1, n + 1)])
    p = CoRnnParams(sys.W, sys.Wvel, sys.V, sys.b, p_dt, sys.gamma, sys.eps, variant)
    r = rollout(p, inputs)
    return float(np.max(np.abs(r.y - ref.ys[::stride][: n + 1])))

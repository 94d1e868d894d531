"""The coupled oscillatory recurrence and a plain tanh RNN baseline.

Arrays follow a sequence-major layout: inputs are ``(N, d)`` for one sequence
or ``(N, B, d)`` for a batch, and every rollout array carries the same leading
axes. All functions are pure; parameters are immutable dataclasses.
"""

import dataclasses
import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ShapeError
from .linalg import as_matrix, as_vector

PARAM_NAMES = ("W", "Wvel", "V", "b")


class Variant(str, enum.Enum):
    """Treatment of the damping term in the velocity update."""

    IMPLICIT = "implicit"
    EXPLICIT = "explicit"


class Coord(NamedTuple):
    """A single trainable coordinate, e.g. ``Coord("W", (0, 2))``."""

    name: str
    index: tuple


@dataclass(frozen=True)
class CoRnnParams:
    W: np.ndarray
    Wvel: np.ndarray
    V: np.ndarray
    b: np.ndarray
    dt: float
    gamma: float
    eps: float
    variant: Variant = Variant.IMPLICIT

    def __post_init__(self):
        W = as_matrix(self.W, "W").copy()
        Wvel = as_matrix(self.Wvel, "Wvel").copy()
        V = as_matrix(self.V, "V").copy()
        b = as_vector(self.b, "b").copy()
        m = W.shape[0]
        if W.shape != (m, m) or Wvel.shape != (m, m):
            raise ShapeError(f"W and Wvel must be square of equal size, got {W.shape}, {Wvel.shape}")
        if V.shape[0] != m or b.shape[0] != m:
            raise ShapeError(f"V rows and b length must equal {m}, got {V.shape}, {b.shape}")
        if not 0.0 < self.dt < 1.0:
            raise ValueError(f"dt must lie in (0, 1), got {self.dt}")
        if self.gamma <= 0 or self.eps <= 0:
            raise ValueError(f"gamma and eps must be positive, got {self.gamma}, {self.eps}")
        for name, value in (("W", W), ("Wvel", Wvel), ("V", V), ("b", b)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.V.shape[1]

    @property
    def delta(self):
        return 1.0 / (1.0 + self.dt * self.eps)

    def coefficients(self):
        """Return ``(c_z, c_s, c_y)`` with z_new = c_z z + c_s tanh(A) - c_y y."""
        dt = self.dt
        if self.variant is Variant.IMPLICIT:
            delta = self.delta
            return delta, delta * dt, delta * dt * self.gamma
        return 1.0 - self.eps * dt, dt, dt * self.gamma

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_entry(self, coord, value):
        arr = np.array(getattr(self, coord.name))
        arr[coord.index] = value
        return self.replace(**{coord.name: arr})

    def coords(self):
        """All trainable coordinates in the fixed order W, Wvel, V, b."""
        for name in PARAM_NAMES:
            for index in np.ndindex(getattr(self, name).shape):
                yield Coord(name, index)

    @classmethod
    def zeros(cls, m, d, dt=0.1, gamma=1.0, eps=1.0, variant=Variant.IMPLICIT):
        return cls(np.zeros((m, m)), np.zeros((m, m)), np.zeros((m, d)), np.zeros(m),
                   dt, gamma, eps, variant)


@dataclass(frozen=True)
class HiddenState:
    y: np.ndarray
    z: np.ndarray

    @classmethod
    def zeros(cls, m, batch_shape=()):
        shape = tuple(batch_shape) + (m,)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass(frozen=True)
class Rollout:
    """Trajectory of one sequence (or a batch) from the zero state.

    ``y[n]``, ``z[n]`` hold the state after n steps (``y[0]`` is zero);
    ``preacts[n-1]`` is the pre-activation that produced step n and
    ``inputs[n-1]`` the input consumed there.
    """

    y: np.ndarray
    z: np.ndarray
    preacts: np.ndarray
    inputs: np.ndarray

    @property
    def n_steps(self):
        return self.preacts.shape[0]

    @property
    def states(self):
        return [HiddenState(y, z) for y, z in zip(self.y, self.z)]

    def state(self, n):
        return HiddenState(self.y[n], self.z[n])


def _check_input(p, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != p.d:
        raise ShapeError(f"input dimension {u.shape[-1]} does not match V columns {p.d}")
    return u


def preactivation(p, s, u):
    u = _check_input(p, u)
    if s.y.shape[-1] != p.m or s.z.shape[-1] != p.m:
        raise ShapeError(f"state dimension does not match hidden size {p.m}")
    return s.y @ p.W.T + s.z @ p.Wvel.T + u @ p.V.T + p.b


def _advance(p, y, z, drive):
    """One update given the input part ``drive = V u + b``; returns (y, z, A)."""
    c_z, c_s, c_y = p.coefficients()
    A = y @ p.W.T + z @ p.Wvel.T + drive
    z_new = c_z * z + c_s * np.tanh(A) - c_y * y
    y_new = y + p.dt * z_new
    return y_new, z_new, A


def step(p, s, u):
    u = _check_input(p, u)
    y, z, _ = _advance(p, s.y, s.z, u @ p.V.T + p.b)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise NumericalError("non-finite hidden state")
    return HiddenState(y, z)


def rollout(p, inputs):
    """Iterate the recurrence from the zero state over ``inputs``.

    Raises NumericalError carrying the 1-based index of the first step whose
    state is not finite.
    """
    if isinstance(inputs, (list, tuple)) and len(inputs) == 0:
        inputs = np.zeros((0, p.d))
    inputs = _check_input(p, inputs)
    N = inputs.shape[0]
    batch = inputs.shape[1:-1]
    y = np.zeros((N + 1,) + batch + (p.m,))
    z = np.zeros_like(y)
    preacts = np.zeros((N,) + batch + (p.m,))
    with np.errstate(over="ignore", invalid="ignore"):
        drive = inputs @ p.V.T + p.b
        for n in range(1, N + 1):
            y[n], z[n], preacts[n - 1] = _advance(p, y[n - 1], z[n - 1], drive[n - 1])
            if not np.isfinite(z[n]).all() or not np.isfinite(y[n]).all():
                raise NumericalError(f"non-finite hidden state at step {n}", index=n)
    return Rollout(y, z, preacts, inputs)


def energy(s, gamma=1.0):
    """y.y + z.z / gamma (batched over leading axes)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return np.sum(s.y * s.y, axis=-1) + np.sum(s.z * s.z, axis=-1) / gamma


# -- tanh RNN baseline ------------------------------------------------------

@dataclass(frozen=True)
class TanhRnnParams:
    Wh: np.ndarray
    Vin: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Wh = as_matrix(self.Wh, "Wh").copy()
        Vin = as_matrix(self.Vin, "Vin").copy()
        b = as_vector(self.b, "b").copy()
        m = Wh.shape[0]
        if Wh.shape != (m, m) or Vin.shape[0] != m or b.shape[0] != m:
            raise ShapeError("inconsistent tanh RNN shapes")
        for name, value in (("Wh", Wh), ("Vin", Vin), ("b", b)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def m(self):
        return self.Wh.shape[0]

    @property
    def d(self):
        return self.Vin.shape[1]


@dataclass(frozen=True)
class TanhRollout:
    h: np.ndarray
    inputs: np.ndarray

    @property
    def n_steps(self):
        return self.inputs.shape[0]


def tanh_rnn_step(Wh, Vin, b, h, u):
    Wh, Vin = np.asarray(Wh, dtype=np.float64), np.asarray(Vin, dtype=np.float64)
    h, u = np.asarray(h, dtype=np.float64), np.asarray(u, dtype=np.float64)
    if Wh.shape[1] != h.shape[-1] or Vin.shape[1] != u.shape[-1]:
        raise ShapeError("tanh RNN step shape mismatch")
    return np.tanh(h @ Wh.T + u @ Vin.T + b)


def tanh_rollout(p, inputs):
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[-1] != p.d:
        raise ShapeError(f"input dimension {inputs.shape[-1]} does not match {p.d}")
    N = inputs.shape[0]
    h = np.zeros((N + 1,) + inputs.shape[1:-1] + (p.m,))
    drive = inputs @ p.Vin.T + p.b
    for n in range(1, N + 1):
        h[n] = np.tanh(h[n - 1] @ p.Wh.T + drive[n - 1])
    return TanhRollout(h, inputs)

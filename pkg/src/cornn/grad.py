"""Gradients of the per-step squared loss.

Three independent routes to the same numbers:

* ``bptt``: reverse accumulation through the closed-form update, reusing the
  cached pre-activations of a :class:`~cornn.cell.Rollout`;
* ``gradient_contribution``: the chain-rule decomposition into per-(n, k)
  terms built from explicit step Jacobians and direct partials;
* ``finite_diff_gradient``: central differences over full re-rollouts.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .cell import PARAM_NAMES, Coord, tanh_rollout
from .errors import NumericalError, ShapeError

TANH_PARAM_NAMES = ("Wh", "Vin", "b")


@dataclass
class GradReport:
    """Per-parameter gradients keyed by parameter name, plus the loss."""

    grads: dict
    loss: float

    def __getitem__(self, name):
        return self.grads[name]

    def __getattr__(self, attr):
        # dW, dWvel, dV, db, dWh, dVin
        grads = self.__dict__.get("grads", {})
        if attr.startswith("d") and attr[1:] in grads:
            return grads[attr[1:]]
        raise AttributeError(attr)

    def coord(self, c):
        return float(self.grads[c.name][c.index])

    def flat(self):
        return np.concatenate([np.ravel(g) for g in self.grads.values()])

    def max_abs(self):
        flat = self.flat()
        return float(np.max(np.abs(flat))) if flat.size else 0.0


@dataclass(frozen=True)
class StepJacobian:
    """Blocks of d X_i / d X_{i-1} for X = (y, z)."""

    B: np.ndarray
    C: np.ndarray
    dt: float

    def full(self):
        m = self.B.shape[0]
        eye = np.eye(m)
        return np.block([[eye + self.dt * self.B, self.dt * self.C], [self.B, self.C]])


def _check_targets(r, targets):
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != r.y[1:].shape:
        raise ShapeError(f"targets of shape {targets.shape} do not match states {r.y[1:].shape}")
    return targets


def _batch_size(arr):
    # arrays are (N, ..., m); everything between is batch
    return int(np.prod(arr.shape[1:-1], dtype=np.int64))


def mse_loss(r, targets):
    """(1/N) sum_n 0.5 |y_n - target_n|^2, averaged over any batch axes."""
    targets = _check_targets(r, targets)
    N = r.n_steps
    if N == 0:
        return 0.0
    err = r.y[1:] - targets
    return float(0.5 * np.sum(err * err) / (N * _batch_size(err)))


def preact_adjoints(p, r, dy):
    """Reverse sweep returning dLoss/dA_{n-1} for n = 1..N.

    ``dy[n-1]`` is the direct derivative of the loss with respect to ``y_n``.
    The result has the layout of ``r.preacts``.
    """
    c_z, c_s, c_y = p.coefficients()
    dt = p.dt
    dsig = c_s * (1.0 - np.tanh(r.preacts) ** 2)
    gA = np.empty_like(r.preacts)
    N = r.n_steps
    if N == 0:
        return gA
    gy = np.zeros_like(r.y[0])
    gz = np.zeros_like(r.z[0])
    W, Wvel = p.W, p.Wvel
    for n in range(N, 0, -1):
        gy = gy + dy[n - 1]
        gzt = gz + dt * gy
        g = gzt * dsig[n - 1]
        gA[n - 1] = g
        gy = gy - c_y * gzt + g @ W
        gz = c_z * gzt + g @ Wvel
    return gA


def _contract(gA, rho):
    # sum over time and batch of outer(gA, rho)
    m, k = gA.shape[-1], rho.shape[-1]
    return gA.reshape(-1, m).T @ rho.reshape(-1, k)


def backprop(p, r, dy):
    """Parameter gradients for an arbitrary loss with y-derivatives ``dy``."""
    gA = preact_adjoints(p, r, dy)
    grads = {
        "W": _contract(gA, r.y[:-1]),
        "Wvel": _contract(gA, r.z[:-1]),
        "V": _contract(gA, r.inputs),
        "b": gA.reshape(-1, p.m).sum(axis=0),
    }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    return grads


def bptt(p, r, targets):
    targets = _check_targets(r, targets)
    N = r.n_steps
    if N == 0:
        return GradReport({name: np.zeros_like(getattr(p, name)) for name in PARAM_NAMES}, 0.0)
    dy = (r.y[1:] - targets) / (N * _batch_size(targets))
    return GradReport(backprop(p, r, dy), mse_loss(r, targets))


def _check_index(r, i, lo=1):
    if not lo <= i <= r.n_steps:
        raise IndexError(f"step index {i} outside [{lo}, {r.n_steps}]")


def step_jacobian(p, r, i):
    """d X_i / d X_{i-1} for a single-sequence rollout."""
    _check_index(r, i)
    c_z, c_s, c_y = p.coefficients()
    dsig = 1.0 - np.tanh(r.preacts[i - 1]) ** 2
    eye = np.eye(p.m)
    B = c_s * dsig[:, None] * p.W - c_y * eye
    C = c_z * eye + c_s * dsig[:, None] * p.Wvel
    return StepJacobian(B, C, p.dt)


def _rho(p, r, k, coord):
    name, index = coord
    if name == "W":
        return r.y[k - 1][index[1]]
    if name == "Wvel":
        return r.z[k - 1][index[1]]
    if name == "V":
        return r.inputs[k - 1][index[1]]
    if name == "b":
        return 1.0
    raise KeyError(f"unknown parameter {name!r}")


def partial_plus(p, r, k, coord):
    """Direct partial of X_k = (y_k, z_k) with respect to one coordinate,
    holding X_{k-1} and the input fixed."""
    _check_index(r, k)
    coord = Coord(*coord)
    if coord.name not in PARAM_NAMES:
        raise KeyError(f"unknown parameter {coord.name!r}")
    shape = getattr(p, coord.name).shape
    if len(coord.index) != len(shape) or any(not 0 <= i < s for i, s in zip(coord.index, shape)):
        raise IndexError(f"coordinate {coord} outside parameter shape {shape}")
    _, c_s, _ = p.coefficients()
    i = coord.index[0]
    dz = np.zeros(p.m)
    dz[i] = c_s * (1.0 - np.tanh(r.preacts[k - 1][i]) ** 2) * _rho(p, r, k, coord)
    return np.concatenate([p.dt * dz, dz])


def gradient_contribution(p, r, targets, n, k, coord):
    """The (n, k) term dE_n/dX_n * dX_n/dX_k * d+X_k/dtheta."""
    targets = _check_targets(r, targets)
    _check_index(r, n)
    if not 1 <= k <= n:
        raise IndexError(f"need 1 <= k <= n, got k={k}, n={n}")
    row = np.concatenate([r.y[n] - targets[n - 1], np.zeros(p.m)])
    for i in range(n, k, -1):
        row = row @ step_jacobian(p, r, i).full()
    return float(row @ partial_plus(p, r, k, coord))


def decomposed_gradient(p, r, targets, coord):
    """(1/N) sum_n sum_{k<=n} gradient_contribution(n, k)."""
    N = r.n_steps
    total = 0.0
    for n in range(1, N + 1):
        for k in range(1, n + 1):
            total += gradient_contribution(p, r, targets, n, k, coord)
    return total / N


def _loss_in(arrays, p, inputs, targets, dtype):
    # standalone forward pass so the oracle shares no code with rollout()
    one = dtype(1)
    dt, gamma, eps = dtype(p.dt), dtype(p.gamma), dtype(p.eps)
    if p.variant.value == "implicit":
        c_z = one / (one + dt * eps)
        c_s, c_y = c_z * dt, c_z * dt * gamma
    else:
        c_z, c_s, c_y = one - eps * dt, dt, dt * gamma
    W, Wvel, V, b = (arrays[name] for name in PARAM_NAMES)
    N = inputs.shape[0]
    y = np.zeros(inputs.shape[1:-1] + (p.m,), dtype=dtype)
    z = np.zeros_like(y)
    total = dtype(0)
    for n in range(N):
        A = y @ W.T + z @ Wvel.T + inputs[n] @ V.T + b
        z = c_z * z + c_s * np.tanh(A) - c_y * y
        y = y + dt * z
        err = y - targets[n]
        total += np.sum(err * err)
    if N == 0:
        return total
    return total / (2 * N * _batch_size(targets))


def finite_diff_gradient(p, inputs, targets, h=1e-5, precision=np.float64):
    """Central differences of the loss, one full forward pass per perturbation.

    ``precision`` selects the float type of the oracle's own forward pass;
    ``np.longdouble`` removes most of the roundoff that limits float64
    differences on coordinates with tiny gradients.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    inputs = np.asarray(inputs, dtype=precision)
    targets = np.asarray(targets, dtype=precision)
    arrays = {name: np.array(getattr(p, name), dtype=precision) for name in PARAM_NAMES}
    step = precision(h)
    grads = {name: np.zeros(getattr(p, name).shape) for name in PARAM_NAMES}
    for name in PARAM_NAMES:
        arr = arrays[name]
        for index in np.ndindex(arr.shape):
            theta = arr[index]
            arr[index] = theta + step
            up = _loss_in(arrays, p, inputs, targets, precision)
            arr[index] = theta - step
            down = _loss_in(arrays, p, inputs, targets, precision)
            arr[index] = theta
            grads[name][index] = float((up - down) / (2 * step))
    loss = float(_loss_in(arrays, p, inputs, targets, precision))
    return GradReport(grads, loss)


# -- tanh RNN baseline ------------------------------------------------------

def tanh_mse_loss(tr, targets):
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != tr.h[1:].shape:
        raise ShapeError(f"targets of shape {targets.shape} do not match states {tr.h[1:].shape}")
    N = tr.n_steps
    if N == 0:
        return 0.0
    err = tr.h[1:] - targets
    return float(0.5 * np.sum(err * err) / (N * _batch_size(err)))


def tanh_preact_adjoints(tp, tr, dh):
    N = tr.n_steps
    dsig = 1.0 - tr.h[1:] ** 2
    g_pre = np.empty_like(tr.h[1:])
    gh = np.zeros_like(tr.h[0])
    for n in range(N, 0, -1):
        gh = gh + dh[n - 1]
        g = gh * dsig[n - 1]
        g_pre[n - 1] = g
        gh = g @ tp.Wh
    return g_pre


def tanh_backprop(tp, tr, dh):
    g_pre = tanh_preact_adjoints(tp, tr, dh)
    grads = {
        "Wh": _contract(g_pre, tr.h[:-1]),
        "Vin": _contract(g_pre, tr.inputs),
        "b": g_pre.reshape(-1, tp.m).sum(axis=0),
    }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    return grads


def tanh_rnn_bptt(tp, tr, targets):
    targets = np.asarray(targets, dtype=np.float64)
    loss = tanh_mse_loss(tr, targets)
    N = tr.n_steps
    if N == 0:
        return GradReport({name: np.zeros_like(getattr(tp, name)) for name in TANH_PARAM_NAMES}, 0.0)
    dh = (tr.h[1:] - targets) / (N * _batch_size(targets))
    return GradReport(tanh_backprop(tp, tr, dh), loss)


def tanh_finite_diff_gradient(tp, inputs, targets, h=1e-5):
    grads = {name: np.zeros_like(getattr(tp, name)) for name in TANH_PARAM_NAMES}
    for name in TANH_PARAM_NAMES:
        base = getattr(tp, name)
        for index in np.ndindex(base.shape):
            vals = []
            for sign in (1.0, -1.0):
                arr = np.array(base)
                arr[index] += sign * h
                shifted = dataclasses.replace(tp, **{name: arr})
                vals.append(tanh_mse_loss(tanh_rollout(shifted, inputs), targets))
            grads[name][index] = (vals[0] - vals[1]) / (2 * h)
    return GradReport(grads, tanh_mse_loss(tanh_rollout(tp, inputs), targets))

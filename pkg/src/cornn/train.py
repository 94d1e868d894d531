"""Readout, losses, optimizers and the mini-batch training loop.

The training path uses a fused forward/backward over the stacked state
``s = [y, z]`` (one matrix product per step instead of two). It computes
exactly the quantities of :func:`cornn.grad.backprop` and is checked against
it in the test suite; it may run in float32 when ``TrainConfig.dtype`` asks for
it, while every bound check elsewhere stays in float64.
"""

import dataclasses
import json
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .cell import CoRnnParams, TanhRnnParams, Variant
from .diagnostics import eta
from .errors import ConfigError, FormatError, NumericalError
from .tasks import adding_batch, gen_adding, lorenz96_splits, load_idx, permute_dataset, random_permutation

CHECKPOINT_MAGIC = b"CORNN1"
TASKS = ("adding", "lorenz96", "smnist", "psmnist")
MODELS = ("cornn", "tanh")


@dataclass(frozen=True)
class ReadoutParams:
    Wout: np.ndarray
    bout: np.ndarray

    def __post_init__(self):
        Wout = np.array(self.Wout, dtype=np.float64, ndmin=2)
        bout = np.array(self.bout, dtype=np.float64, ndmin=1)
        if Wout.shape[0] != bout.shape[0]:
            raise ValueError(f"Wout rows {Wout.shape[0]} != bout length {bout.shape[0]}")
        object.__setattr__(self, "Wout", Wout)
        object.__setattr__(self, "bout", bout)


def readout(ro, y):
    """Affine map Wout y + bout over the last axis of ``y``."""
    y = np.asarray(y)
    if y.shape[-1] != ro.Wout.shape[1]:
        raise ValueError(f"readout expects hidden size {ro.Wout.shape[1]}, got {y.shape[-1]}")
    return y @ ro.Wout.T + ro.bout


def cross_entropy(logits, label):
    """Softmax cross-entropy; batched over leading axes when ``label`` is an array."""
    logits = np.asarray(logits, dtype=np.float64)
    label = np.asarray(label)
    if np.any(label < 0) or np.any(label >= logits.shape[-1]):
        raise ValueError("label out of range")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, label[..., None], axis=-1)[..., 0]
    return logz - picked


def softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def nrmse(preds, targets):
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {targets.shape}")
    denom = np.sqrt(np.mean(targets ** 2))
    if denom == 0:
        raise ValueError("targets are identically zero")
    return float(np.sqrt(np.mean((preds - targets) ** 2)) / denom)


# -- optimizers ---------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(state, params, grads, lr, beta1=0.9, beta2=0.999, epsc=1e-8):
    """One bias-corrected Adam update; returns new params and updates ``state``."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        out[k] = p - lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + epsc)
    return out


def sgd_step(params, grads, lr):
    return {k: p - lr * grads[k] for k, p in params.items()}


# -- models -------------------------------------------------------------------

def init_params(m, d, seed, out=1, dt=0.1, gamma=1.0, eps=1.0, variant=Variant.IMPLICIT):
    """Uniform(-1/sqrt(n_in), 1/sqrt(n_in)) weights and biases of every affine map.

    n_in is m for W, Wvel and the readout, d for V and the input bias b.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be >= 1")
    rng = np.random.default_rng(seed)
    sm, sd = 1.0 / math.sqrt(m), 1.0 / math.sqrt(d)
    W = rng.uniform(-sm, sm, (m, m))
    Wvel = rng.uniform(-sm, sm, (m, m))
    V = rng.uniform(-sd, sd, (m, d))
    b = rng.uniform(-sd, sd, m)
    ro = ReadoutParams(rng.uniform(-sm, sm, (out, m)), rng.uniform(-sm, sm, out))
    return CoRnnParams(W, Wvel, V, b, dt, gamma, eps, variant), ro


def init_tanh_params(m, d, seed, out=1):
    rng = np.random.default_rng(seed)
    sm, sd = 1.0 / math.sqrt(m), 1.0 / math.sqrt(d)
    tp = TanhRnnParams(rng.uniform(-sm, sm, (m, m)), rng.uniform(-sd, sd, (m, d)),
                       rng.uniform(-sd, sd, m))
    ro = ReadoutParams(rng.uniform(-sm, sm, (out, m)), rng.uniform(-sm, sm, out))
    return tp, ro


class CoRnnModel:
    """Trainable coRNN + readout held as a flat dict of arrays.

    ``forward`` returns hidden states ``y`` of shape (N+1, B, m); ``backward``
    takes dLoss/dy_n for n = 1..N and returns gradients of the cell weights.
    """

    names = ("W", "Wvel", "V", "b")

    def __init__(self, p, dtype=np.float64):
        self.dt, self.gamma, self.eps, self.variant = p.dt, p.gamma, p.eps, p.variant
        self.coef = p.coefficients()
        self.dtype = np.dtype(dtype)
        self.m = p.m
        self.set_weights({n: getattr(p, n) for n in self.names})

    def weights(self):
        return dict(self._w)

    def set_weights(self, w):
        self._w = {k: np.asarray(v, dtype=self.dtype) for k, v in w.items()}
        self._Wcat = np.ascontiguousarray(np.concatenate([self._w["W"], self._w["Wvel"]], axis=1))

    def params(self):
        w = self._w
        return CoRnnParams(w["W"].astype(np.float64), w["Wvel"].astype(np.float64),
                           w["V"].astype(np.float64), w["b"].astype(np.float64),
                           self.dt, self.gamma, self.eps, self.variant)

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        N, B = x.shape[0], x.shape[1]
        m = self.m
        c_z, c_s, c_y = self.coef
        dt = self.dt
        S = np.zeros((N + 1, B, 2 * m), dtype=self.dtype)
        T = np.empty((N, B, m), dtype=self.dtype)
        drive = x @ self._w["V"].T + self._w["b"]
        WcT = self._Wcat.T
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(N):
                s = S[n]
                th = np.tanh(s @ WcT + drive[n])
                T[n] = th
                y, z = s[:, :m], s[:, m:]
                z_new = c_z * z + c_s * th - c_y * y
                S[n + 1, :, m:] = z_new
                S[n + 1, :, :m] = y + dt * z_new
        if not np.isfinite(S[N]).all():
            raise NumericalError("non-finite hidden state during training forward pass")
        self._cache = (x, S, T)
        return S[:, :, :m]

    def backward(self, dy):
        x, S, T = self._cache
        m = self.m
        c_z, c_s, c_y = self.coef
        dt = self.dt
        N, B = T.shape[0], T.shape[1]
        dsig = c_s * (1.0 - T * T)
        gA = np.empty_like(T)
        gy = np.zeros((B, m), dtype=self.dtype)
        gz = np.zeros((B, m), dtype=self.dtype)
        Wc = self._Wcat
        for n in range(N - 1, -1, -1):
            if dy[n] is not None:
                gy = gy + dy[n]
            gzt = gz + dt * gy
            g = gzt * dsig[n]
            gA[n] = g
            back = g @ Wc
            gy = gy - c_y * gzt + back[:, :m]
            gz = c_z * gzt + back[:, m:]
        flat = gA.reshape(-1, m)
        dcat = flat.T @ S[:-1].reshape(-1, 2 * m)
        grads = {"W": dcat[:, :m], "Wvel": dcat[:, m:],
                 "V": flat.T @ x.reshape(-1, x.shape[-1]), "b": flat.sum(axis=0)}
        return grads


class TanhModel:
    names = ("Wh", "Vin", "b")

    def __init__(self, tp, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.m = tp.m
        self.set_weights({n: getattr(tp, n) for n in self.names})

    def weights(self):
        return dict(self._w)

    def set_weights(self, w):
        self._w = {k: np.asarray(v, dtype=self.dtype) for k, v in w.items()}

    def params(self):
        return TanhRnnParams(*(self._w[n].astype(np.float64) for n in self.names))

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        N, B = x.shape[0], x.shape[1]
        H = np.zeros((N + 1, B, self.m), dtype=self.dtype)
        drive = x @ self._w["Vin"].T + self._w["b"]
        WT = self._w["Wh"].T
        for n in range(N):
            H[n + 1] = np.tanh(H[n] @ WT + drive[n])
        if not np.isfinite(H[N]).all():
            raise NumericalError("non-finite hidden state during training forward pass")
        self._cache = (x, H)
        return H

    def backward(self, dy):
        x, H = self._cache
        N, B = H.shape[0] - 1, H.shape[1]
        gA = np.empty((N, B, self.m), dtype=self.dtype)
        gh = np.zeros((B, self.m), dtype=self.dtype)
        Wh = self._w["Wh"]
        for n in range(N - 1, -1, -1):
            if dy[n] is not None:
                gh = gh + dy[n]
            g = gh * (1.0 - H[n + 1] ** 2)
            gA[n] = g
            gh = g @ Wh
        flat = gA.reshape(-1, self.m)
        return {"Wh": flat.T @ H[:-1].reshape(-1, self.m),
                "Vin": flat.T @ x.reshape(-1, x.shape[-1]), "b": flat.sum(axis=0)}


# -- losses on the readout ----------------------------------------------------

def _head_loss(mode, ro_w, y, targets):
    """Loss, gradient dict for the readout and per-step dLoss/dy.

    mode "final": half squared error on readout(y_N), batch mean.
    mode "sequence": half squared error on readout(y_n) at every n, mean over n and batch.
    mode "classify": cross-entropy on readout(y_N), batch mean.
    """
    Wout, bout = ro_w["Wout"], ro_w["bout"]
    N = y.shape[0] - 1
    dy = [None] * N
    if mode == "sequence":
        B = y.shape[1]
        out = y[1:] @ Wout.T + bout
        err = out - targets
        loss = 0.5 * float(np.sum(err * err)) / (N * B)
        dout = err / (N * B)
        hs = y[1:].reshape(-1, y.shape[-1])
        grads = {"Wout": dout.reshape(-1, dout.shape[-1]).T @ hs, "bout": dout.sum(axis=(0, 1))}
        dyall = dout @ Wout
        dy = list(dyall)
        return loss, grads, dy
    yN = y[N]
    B = yN.shape[0]
    out = yN @ Wout.T + bout
    if mode == "final":
        err = out - targets
        loss = 0.5 * float(np.sum(err * err)) / B
        dout = err / B
    elif mode == "classify":
        labels = np.asarray(targets)
        loss = float(np.mean(cross_entropy(out, labels)))
        prob = softmax(out.astype(np.float64))
        prob[np.arange(B), labels] -= 1.0
        dout = (prob / B).astype(out.dtype)
    else:
        raise ValueError(f"unknown head mode {mode}")
    grads = {"Wout": dout.T @ yN, "bout": dout.sum(axis=0)}
    dy[N - 1] = dout @ Wout
    return loss, grads, dy


# -- configuration ------------------------------------------------------------

@dataclass
class TrainConfig:
    task: str
    hidden_size: int
    dt: float
    gamma: float
    eps: float
    lr: float
    batch: int
    epochs: int
    variant: str = "implicit"
    seed: int = 0
    loss: str = "auto"
    lr_decay: dict = None
    model: str = "cornn"
    optimizer: str = "adam"
    dtype: str = "float64"
    steps_per_epoch: int = 100
    T: int = 100
    F: float = 0.9
    shift: int = 25
    length: int = 2000
    train_count: int = 128
    valid_count: int = 128
    test_count: int = 128
    eval_every: int = 0
    images: str = None
    labels: str = None
    test_images: str = None
    test_labels: str = None
    permutation_seed: int = 0
    select_best: bool = False

    REQUIRED = ("task", "hidden_size", "dt", "gamma", "eps", "lr", "batch", "epochs")

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        for name in ("hidden_size", "batch", "epochs", "steps_per_epoch", "T", "length",
                     "train_count", "valid_count", "test_count"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        try:
            Variant(self.variant)
        except ValueError:
            raise ConfigError(f"unknown variant {self.variant!r}") from None
        if self.lr_decay is not None:
            if not {"factor", "final_epochs"} <= set(self.lr_decay):
                raise ConfigError("lr_decay needs 'factor' and 'final_epochs'")

    @property
    def head_mode(self):
        if self.loss == "auto":
            return {"adding": "final", "lorenz96": "sequence"}.get(self.task, "classify")
        return {"mse": "final", "sequence_mse": "sequence", "cross_entropy": "classify"}[self.loss]

    def lr_at(self, epoch):
        if self.lr_decay and epoch >= self.epochs - int(self.lr_decay["final_epochs"]):
            return self.lr / float(self.lr_decay["factor"])
        return self.lr

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        missing = [k for k in cls.REQUIRED if k not in d]
        if missing:
            raise ConfigError(f"config is missing required field(s): {', '.join(missing)}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            text = fh.read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(d)


@dataclass
class MetricsRow:
    step: int
    epoch: int
    train_loss: float
    eval_metric: float
    eta: float
    eta_threshold: float
    wall_time: float

    FIELDS = ("step", "epoch", "train_loss", "eval_metric", "eta", "eta_threshold", "wall_time")


@dataclass
class TrainResult:
    params: object
    readout: ReadoutParams
    metrics: list
    config: TrainConfig
    test_metric: float = None
    metric_name: str = ""
    diverged: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def eta_fraction(self):
        rows = [r for r in self.metrics if r.eta is not None]
        if not rows:
            return float("nan")
        return sum(r.eta <= r.eta_threshold for r in rows) / len(rows)


class TrainingDiverged(NumericalError):
    """Raised when training hits a non-finite value; carries the last good result."""

    def __init__(self, message, result, index=None):
        super().__init__(message, index=index)
        self.result = result


# -- data ---------------------------------------------------------------------

class _TaskData:
    """Batches for training and the held-out validation/test sets of a config."""

    def __init__(self, cfg):
        self.cfg = cfg
        if cfg.task == "adding":
            self.out = 1
            self.d = 2
            self.rng = np.random.default_rng([cfg.seed, 1])
            self.valid = gen_adding(cfg.T, cfg.valid_count, [cfg.seed, 2], split="valid")
            self.test = gen_adding(cfg.T, cfg.test_count, [cfg.seed, 3], split="test")
            self.train = None
        elif cfg.task == "lorenz96":
            self.train, self.valid, self.test = lorenz96_splits(
                cfg.F, cfg.length, cfg.seed * 1000 + 17,
                (cfg.train_count, cfg.valid_count, cfg.test_count), cfg.shift)
            self.out = self.d = self.train.d
            self.rng = np.random.default_rng([cfg.seed, 1])
        else:
            if not cfg.images or not cfg.labels:
                raise ConfigError("MNIST tasks need 'images' and 'labels' paths")
            full = load_idx(cfg.images, cfg.labels)
            test = load_idx(cfg.test_images, cfg.test_labels) if cfg.test_images else None
            if cfg.task == "psmnist":
                perm = random_permutation(cfg.permutation_seed, full.T)
                full = permute_dataset(full, perm)
                test = permute_dataset(test, perm) if test is not None else None
            n_valid = min(cfg.valid_count, len(full) // 5)
            self.valid = full.subset(np.arange(n_valid), "valid")
            self.train = full.subset(np.arange(n_valid, len(full)), "train")
            self.test = test if test is not None else self.valid
            self.out, self.d = 10, 1
            self.rng = np.random.default_rng([cfg.seed, 1])

    def epoch_batches(self):
        cfg = self.cfg
        if self.train is None:
            for _ in range(cfg.steps_per_epoch):
                x, t = adding_batch(self.rng, cfg.T, cfg.batch)
                yield np.ascontiguousarray(x.transpose(1, 0, 2)), t
            return
        order = self.rng.permutation(len(self.train))
        last_start = max(len(order) - cfg.batch, 0)
        for i in range(0, last_start + 1, cfg.batch):
            yield self.train.batch(order[i:i + cfg.batch])


# -- training -----------------------------------------------------------------

def _metric_name(cfg):
    return {"adding": "mse", "lorenz96": "nrmse"}.get(cfg.task, "accuracy")


def predict(model, ro, dataset, mode, batch=256):
    """Readout predictions for every sample (sequence mode: every step)."""
    preds = []
    for i in range(0, len(dataset), batch):
        x, _ = dataset.batch(np.arange(i, min(i + batch, len(dataset))))
        y = model.forward(x).astype(np.float64)
        if mode == "sequence":
            preds.append(readout(ro, y[1:]).transpose(1, 0, 2))
        else:
            preds.append(readout(ro, y[-1]))
    return np.concatenate(preds, axis=0)


def evaluate(params, ro, dataset, metric, mode=None, dtype=np.float64):
    """MSE (plain, no 1/2), NRMSE or accuracy of the model on ``dataset``."""
    model = CoRnnModel(params, dtype) if isinstance(params, CoRnnParams) else TanhModel(params, dtype)
    if mode is None:
        mode = {"mse": "final", "nrmse": "sequence", "accuracy": "classify"}[metric]
    preds = predict(model, ro, dataset, mode)
    targets = dataset.targets
    if metric == "mse":
        return float(np.mean((preds - targets) ** 2))
    if metric == "nrmse":
        return nrmse(preds, targets)
    if metric == "accuracy":
        return float(np.mean(np.argmax(preds, axis=-1) == targets))
    raise ValueError(f"unknown metric {metric!r}")


def _build_model(cfg, data):
    dtype = np.dtype(cfg.dtype)
    if cfg.model == "cornn":
        p, ro = init_params(cfg.hidden_size, data.d, cfg.seed, data.out, cfg.dt, cfg.gamma,
                            cfg.eps, Variant(cfg.variant))
        return CoRnnModel(p, dtype), ro
    tp, ro = init_tanh_params(cfg.hidden_size, data.d, cfg.seed, data.out)
    return TanhModel(tp, dtype), ro


def train(cfg, data=None, log=None, max_seconds=None):
    """Train per ``cfg``; returns a :class:`TrainResult`.

    One MetricsRow is recorded per optimizer step (eta with r = 1/2 for the
    coRNN); the validation metric is filled in every ``eval_every`` steps and
    at the end of each epoch. ``max_seconds`` stops early at an epoch-free
    step boundary when the wall-clock budget is spent. With ``select_best``
    the returned weights are those with the best validation metric.
    """
    data = data or _TaskData(cfg)
    model, ro = _build_model(cfg, data)
    mode = cfg.head_mode
    metric = _metric_name(cfg)
    weights = dict(model.weights())
    weights["Wout"] = ro.Wout.astype(model.dtype)
    weights["bout"] = ro.bout.astype(model.dtype)
    opt = AdamState.zeros_like(weights)
    metrics = []
    start = time.perf_counter()
    step = 0
    good = dict(weights)

    def snapshot(w):
        model.set_weights({k: w[k] for k in model.names})
        return model.params(), ReadoutParams(w["Wout"], w["bout"])

    def result(w, diverged=False):
        p, r = snapshot(w)
        return TrainResult(p, r, metrics, cfg, metric_name=metric, diverged=diverged)

    best = {"value": None, "weights": None}
    higher = metric == "accuracy"

    def validate(w):
        p, r = snapshot(w)
        v = evaluate(p, r, data.valid, metric, mode, model.dtype)
        b = best["value"]
        if math.isfinite(v) and (b is None or (v > b if higher else v < b)):
            best.update(value=v, weights=w)
        return v

    stop = False
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        for x, t in data.epoch_batches():
            step += 1
            try:
                model.set_weights({k: weights[k] for k in model.names})
                y = model.forward(x)
                t = t.astype(model.dtype) if mode != "classify" else t
                loss, ro_grads, dy = _head_loss(mode, {"Wout": weights["Wout"], "bout": weights["bout"]}, y, t)
                grads = model.backward(dy)
                grads.update(ro_grads)
                if not all(np.isfinite(g).all() for g in grads.values()) or not math.isfinite(loss):
                    raise NumericalError("non-finite loss or gradient", index=step)
            except NumericalError as exc:
                raise TrainingDiverged(f"training diverged at step {step}: {exc}",
                                       result(good, diverged=True), index=step) from None
            if cfg.optimizer == "adam":
                weights = adam_step(opt, weights, grads, lr)
            else:
                weights = sgd_step(weights, grads, lr)
            good = weights
            e, thr = (None, None)
            if cfg.model == "cornn":
                model.set_weights({k: weights[k] for k in model.names})
                e, thr = eta(model.params(), 0.5)
            row = MetricsRow(step, epoch, loss, None, e, thr, time.perf_counter() - start)
            if cfg.eval_every and step % cfg.eval_every == 0:
                row.eval_metric = validate(weights)
            if metrics and log is not None:
                log(metrics[-1])
            metrics.append(row)
            if max_seconds is not None and row.wall_time > max_seconds:
                stop = True
                break
        if metrics and metrics[-1].eval_metric is None:
            metrics[-1].eval_metric = validate(weights)
        if stop:
            break
    if metrics and log is not None:
        log(metrics[-1])
    if cfg.select_best and best["weights"] is not None:
        weights = best["weights"]
    res = result(weights)
    res.test_metric = evaluate(res.params, res.readout, data.test, metric, mode, model.dtype)
    return res


# -- metrics and checkpoints --------------------------------------------------

def write_metrics_csv(rows, path, header=None):
    with open(path, "w") as fh:
        if header is not None:
            fh.write("# " + json.dumps(header) + "\n")
        fh.write(",".join(MetricsRow.FIELDS) + "\n")
        for r in rows:
            vals = [getattr(r, f) for f in MetricsRow.FIELDS]
            fh.write(",".join("" if v is None else repr(v) for v in vals) + "\n")


def save_checkpoint(path, params, ro):
    """Flat binary: magic, u32 LE (m, d, out), f64 LE W, Wvel, V, b, Wout, bout."""
    m, d, out = params.m, params.d, ro.Wout.shape[0]
    if ro.Wout.shape[1] != m:
        raise ValueError("readout does not match hidden size")
    arrays = (params.W, params.Wvel, params.V, params.b, ro.Wout, ro.bout)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", m, d, out))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path, dt, gamma, eps, variant=Variant.IMPLICIT):
    """Read a checkpoint; the scalar hyperparameters come from the echoed config."""
    with open(path, "rb") as fh:
        raw = fh.read()
    n_magic = len(CHECKPOINT_MAGIC)
    if raw[:n_magic] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < n_magic + 12:
        raise FormatError(f"{path}: truncated header")
    m, d, out = struct.unpack("<III", raw[n_magic:n_magic + 12])
    shapes = ((m, m), (m, m), (m, d), (m,), (out, m), (out,))
    need = sum(int(np.prod(s)) for s in shapes) * 8
    payload = raw[n_magic + 12:]
    if len(payload) != need:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {need}")
    flat = np.frombuffer(payload, dtype="<f8")
    arrays, pos = [], 0
    for s in shapes:
        size = int(np.prod(s))
        arrays.append(flat[pos:pos + size].reshape(s).astype(np.float64))
        pos += size
    W, Wvel, V, b, Wout, bout = arrays
    return CoRnnParams(W, Wvel, V, b, dt, gamma, eps, variant), ReadoutParams(Wout, bout)

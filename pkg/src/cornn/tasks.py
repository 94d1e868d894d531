"""Dataset generators and loaders for the desk-scale experiments.

All generators are deterministic functions of their arguments and seed.
Datasets hold dense arrays: ``inputs`` is ``(count, T, d)``; ``targets`` is
``(count, out)`` for final-state regression, ``(count, T, out)`` for per-step
regression, or integer labels ``(count,)`` for classification.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

PIXELS = 784
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class TaskSample:
    inputs: np.ndarray
    target: object


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        if self.inputs.ndim != 3:
            raise ValueError(f"inputs must be (count, T, d), got shape {self.inputs.shape}")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ValueError("inputs and targets disagree on sample count")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def T(self):
        return self.inputs.shape[1]

    @property
    def d(self):
        return self.inputs.shape[2]

    @property
    def samples(self):
        return [TaskSample(self.inputs[i], self.targets[i]) for i in range(len(self))]

    def batch(self, idx):
        """Sequence-major ``(T, B, d)`` inputs and the matching targets."""
        idx = np.asarray(idx)
        x = np.ascontiguousarray(self.inputs[idx].transpose(1, 0, 2))
        t = self.targets[idx]
        if t.ndim == 3:
            t = np.ascontiguousarray(t.transpose(1, 0, 2))
        return x, t

    def subset(self, idx, split=None):
        meta = dict(self.meta)
        if split is not None:
            meta["split"] = split
        return Dataset(self.inputs[idx], self.targets[idx], meta)


# -- adding problem -----------------------------------------------------------

def adding_batch(rng, T, count):
    """Draw ``count`` adding-problem samples from ``rng``; returns (inputs, targets)."""
    if T < 2:
        raise ValueError(f"adding problem needs T >= 2, got {T}")
    values = rng.uniform(0.0, 1.0, size=(count, T))
    half = T // 2
    p1 = rng.integers(0, half, size=count)
    p2 = rng.integers(half, T, size=count)
    markers = np.zeros((count, T))
    rows = np.arange(count)
    markers[rows, p1] = 1.0
    markers[rows, p2] = 1.0
    inputs = np.stack([values, markers], axis=-1)
    targets = (values[rows, p1] + values[rows, p2])[:, None]
    return inputs, targets


def gen_adding(T, count, seed, split="train"):
    if count < 1:
        raise ValueError("count must be >= 1")
    inputs, targets = adding_batch(np.random.default_rng(seed), T, count)
    return Dataset(inputs, targets, {"task": "adding", "T": T, "d": 2, "seed": seed, "split": split})


# -- Lorenz-96 ----------------------------------------------------------------

def lorenz96_rhs(x, F):
    """Cyclic five-term Lorenz-96 vector field (works on ``(..., n)`` arrays)."""
    return (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) * np.roll(x, 1, axis=-1) - x + F


def lorenz96_trajectory(x0, F, n_samples, sample_dt=0.01, substeps=2):
    """RK4 with internal step sample_dt/substeps; returns ``(..., n_samples, n)``
    with the first sample equal to ``x0``."""
    x = np.array(x0, dtype=np.float64)
    h = sample_dt / substeps
    out = np.empty(x.shape[:-1] + (n_samples, x.shape[-1]))
    for s in range(n_samples):
        out[..., s, :] = x
        for _ in range(substeps):
            k1 = lorenz96_rhs(x, F)
            k2 = lorenz96_rhs(x + 0.5 * h * k1, F)
            k3 = lorenz96_rhs(x + 0.5 * h * k2, F)
            k4 = lorenz96_rhs(x + h * k3, F)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def gen_lorenz96(F, count, length, seed, shift=25, dim=5, split="train", substeps=2):
    """Inputs x(t_n), targets x(t_{n+shift}) for n < length."""
    if count < 1 or length < 1:
        raise ValueError("count and length must be >= 1")
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(F - 0.5, F + 0.5, size=(count, dim))
    traj = lorenz96_trajectory(x0, F, length + shift, substeps=substeps)
    meta = {"task": "lorenz96", "F": F, "T": length, "d": dim, "shift": shift,
            "seed": seed, "split": split}
    return Dataset(traj[:, :length], traj[:, shift:shift + length], meta)


def lorenz96_splits(F, length, seed, counts=(128, 128, 128), shift=25):
    names = ("train", "valid", "test")
    return tuple(gen_lorenz96(F, c, length, seed + i, shift=shift, split=name)
                 for i, (c, name) in enumerate(zip(counts, names)))


# -- MNIST IDX ----------------------------------------------------------------

def _read_idx(path, magic, ndim):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 + 4 * ndim:
        raise FormatError(f"{path}: truncated IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(">" + "I" * ndim, raw[4:4 + 4 * ndim])
    payload = raw[4 + 4 * ndim:]
    size = int(np.prod(dims))
    if len(payload) < size:
        raise FormatError(f"{path}: truncated IDX payload ({len(payload)} of {size} bytes)")
    return np.frombuffer(payload[:size], dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path):
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images_path} holds {images.shape[0]} images but "
                          f"{labels_path} holds {labels.shape[0]} labels")
    pixels = images.reshape(images.shape[0], -1, 1).astype(np.float64) / 255.0
    return Dataset(pixels, labels.astype(np.int64),
                   {"task": "mnist", "T": pixels.shape[1], "d": 1})


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images ``(N, rows, cols)`` and labels ``(N,)`` as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def random_permutation(seed, n=PIXELS):
    return np.random.default_rng(seed).permutation(n)


def _check_permutation(perm, n):
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError(f"permutation must be a bijection on 0..{n - 1}")
    return perm


def to_pixel_sequence(sample, permutation=None):
    """Flatten an image sample to a (784, 1) sequence in raster order,
    reordered by ``permutation`` if given."""
    pixels = np.asarray(sample.inputs, dtype=np.float64).reshape(-1)
    if permutation is not None:
        pixels = pixels[_check_permutation(permutation, pixels.size)]
    return TaskSample(pixels[:, None], sample.target)


def permute_dataset(ds, permutation):
    perm = _check_permutation(permutation, ds.T)
    meta = dict(ds.meta, task="psmnist")
    return Dataset(ds.inputs[:, perm], ds.targets, meta)


# -- JSON lines ---------------------------------------------------------------

def write_jsonl(ds, path, header=None):
    """One header line ``{"header": ...}`` then one ``{"inputs", "target"}`` per sample."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": dict(header or {}, meta=ds.meta)}) + "\n")
        for x, t in zip(ds.inputs, ds.targets):
            fh.write(json.dumps({"inputs": x.tolist(), "target": t.tolist()}) + "\n")


def read_jsonl(path):
    inputs, targets, meta = [], [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc.msg}") from None
            if "header" in rec:
                meta = rec["header"].get("meta", {})
                continue
            if "inputs" not in rec or "target" not in rec:
                raise FormatError(f"{path}:{lineno}: sample needs 'inputs' and 'target'")
            inputs.append(rec["inputs"])
            targets.append(rec["target"])
    if not inputs:
        raise FormatError(f"{path}: no samples")
    return Dataset(np.array(inputs, dtype=np.float64), np.array(targets), meta)

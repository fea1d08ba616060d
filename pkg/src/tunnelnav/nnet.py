"""Small convolutional yaw regressor written directly in numpy.

Architecture (input ``(3, 80, 60)``, channels-first)::

    conv 3->8, 3x3, stride 2, pad 1, relu     -> (8, 40, 30)
    conv 8->16, 3x3, stride 2, pad 1, relu    -> (16, 20, 15)
    flatten -> fc 4800->64, relu -> fc 64->1

The raw output is multiplied by ``OUTPUT_SCALE`` (40 degrees in radians) to
give the yaw. Loss is the mean squared error in radians squared, and the
parameters are updated with RMSProp.
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CorruptFile, DatasetTooSmall, ShapeMismatch, VersionMismatch

INPUT_SHAPE = (3, 80, 60)
OUTPUT_SCALE = math.radians(40.0)
RAW_CLAMP = 1.5
MODEL_VERSION = 1
MAGIC = b"TNAVCNN\0"

PARAM_SHAPES = {
    "conv1_w": (8, 3, 3, 3),
    "conv1_b": (8,),
    "conv2_w": (16, 8, 3, 3),
    "conv2_b": (16,),
    "fc1_w": (64, 16 * 20 * 15),
    "fc1_b": (64,),
    "fc2_w": (1, 64),
    "fc2_b": (1,),
}
FAN_IN = {"conv1_w": 27, "conv2_w": 72, "fc1_w": 4800, "fc2_w": 64}


@dataclass
class NetModel:
    params: dict[str, np.ndarray]
    trained: bool = False
    version: int = MODEL_VERSION

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def astype(self, dtype) -> "NetModel":
        return NetModel({k: v.astype(dtype) for k, v in self.params.items()}, self.trained, self.version)

    def copy(self) -> "NetModel":
        return NetModel({k: v.copy() for k, v in self.params.items()}, self.trained, self.version)


@dataclass
class OptimizerState:
    acc: dict[str, np.ndarray]
    lr: float = 1e-4
    decay: float = 0.99
    eps: float = 1e-8


def init_model(seed: int = 0, dtype=np.float32) -> NetModel:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in PARAM_SHAPES.items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = math.sqrt(1.0 / FAN_IN[name])
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return NetModel(params)


def zero_model(dtype=np.float32) -> NetModel:
    return NetModel({k: np.zeros(s, dtype=dtype) for k, s in PARAM_SHAPES.items()})


def init_optimizer(model: NetModel, lr: float = 1e-4) -> OptimizerState:
    return OptimizerState({k: np.zeros_like(v) for k, v in model.params.items()}, lr)


# -- layers -----------------------------------------------------------------


def _conv_forward(x, w, b):
    # x (N, C, H, W); 3x3 kernel, stride 2, pad 1
    n, c, h, wd = x.shape
    o = w.shape[0]
    ho, wo = (h - 1) // 2 + 1, (wd - 1) // 2 + 1
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, : 2 * ho : 2, : 2 * wo : 2]
    # (N, ho, wo, C, 3, 3) -> rows of C*9
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * 9)
    out = cols @ w.reshape(o, c * 9).T + b
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, w):
    n, c, h, wd = x_shape
    o = w.shape[0]
    ho, wo = dout.shape[2], dout.shape[3]
    d = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
    dw = (d.T @ cols).reshape(w.shape)
    db = d.sum(axis=0)
    dcols = (d @ w.reshape(o, c * 9)).reshape(n, ho, wo, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i : i + 2 * ho : 2, j : j + 2 * wo : 2] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _check_batch(x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape == INPUT_SHAPE:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != INPUT_SHAPE:
        raise ShapeMismatch(f"expected images of shape {INPUT_SHAPE}, got {x.shape}")
    return x


def _forward(model: NetModel, x: np.ndarray):
    p = model.params
    x = x.astype(p["conv1_w"].dtype, copy=False)
    z1, cols1 = _conv_forward(x, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0)
    z2, cols2 = _conv_forward(a1, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0)
    f = a2.reshape(len(x), -1)
    z3 = f @ p["fc1_w"].T + p["fc1_b"]
    a3 = np.maximum(z3, 0)
    raw = (a3 @ p["fc2_w"].T + p["fc2_b"])[:, 0]
    cache = (x, z1, cols1, a1, z2, cols2, f, z3, a3)
    return raw, cache


def forward(model: NetModel, img) -> np.ndarray:
    """Raw network output for one image or a batch (no clamping, no scaling)."""
    raw, _ = _forward(model, _check_batch(img))
    return raw


def predict(model: NetModel, img):
    """Yaw in radians; raw output is clamped to +-1.5 before scaling."""
    x = np.asarray(img)
    raw = np.clip(forward(model, x), -RAW_CLAMP, RAW_CLAMP) * OUTPUT_SCALE
    return float(raw[0]) if x.ndim == 3 else raw


def backward(model: NetModel, images, labels) -> tuple[dict[str, np.ndarray], float]:
    """MSE loss over the batch and its exact gradient for every parameter."""
    x = _check_batch(images)
    y = np.asarray(labels, dtype=model.params["fc2_w"].dtype).reshape(-1)
    if len(y) != len(x) or len(x) == 0:
        raise ShapeMismatch("labels must match a non-empty batch")
    p = model.params
    raw, (x, z1, cols1, a1, z2, cols2, f, z3, a3) = _forward(model, x)
    err = raw * OUTPUT_SCALE - y
    loss = float(np.mean(err * err))
    n = len(x)
    draw = (2.0 / n) * err * OUTPUT_SCALE
    g = {}
    g["fc2_w"] = (draw[:, None] * a3).sum(axis=0)[None, :]
    g["fc2_b"] = np.array([draw.sum()], dtype=draw.dtype)
    dz3 = draw[:, None] * p["fc2_w"][0][None, :] * (z3 > 0)
    g["fc1_w"] = dz3.T @ f
    g["fc1_b"] = dz3.sum(axis=0)
    dz2 = (dz3 @ p["fc1_w"]).reshape(z2.shape) * (z2 > 0)
    da1, g["conv2_w"], g["conv2_b"] = _conv_backward(dz2, cols2, a1.shape, p["conv2_w"])
    dz1 = da1 * (z1 > 0)
    _, g["conv1_w"], g["conv1_b"] = _conv_backward(dz1, cols1, x.shape, p["conv1_w"])
    g = {k: v.astype(p[k].dtype, copy=False) for k, v in g.items()}
    return g, loss


def rmsprop_step(model: NetModel, grads: dict, state: OptimizerState, lr: float | None = None) -> None:
    """In-place update: ``acc = d*acc + (1-d)*g^2``, ``p -= lr*g/(sqrt(acc)+eps)``."""
    lr = state.lr if lr is None else lr
    for k, g in grads.items():
        if g.shape != model.params[k].shape:
            raise ShapeMismatch(f"gradient shape mismatch for {k}")
        acc = state.acc[k]
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        model.params[k] -= lr * g / (np.sqrt(acc) + state.eps)


# -- training ---------------------------------------------------------------


@dataclass
class TrainRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_mae_deg: float


@dataclass
class TrainResult:
    model: NetModel
    history: list[TrainRecord] = field(default_factory=list)
    best_epoch: int = 0


def split_indices(n: int, seed: int, train_fraction: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def evaluate(model: NetModel, images, labels, batch_size: int = 256) -> tuple[float, float]:
    """Validation loss (unclamped, as trained) and MAE in degrees (clamped, as deployed)."""
    if len(images) == 0:
        return float("nan"), float("nan")
    sq, ab = 0.0, 0.0
    for i in range(0, len(images), batch_size):
        raw = forward(model, images[i : i + batch_size])
        y = np.asarray(labels[i : i + batch_size], dtype=float)
        sq += float(np.sum((raw * OUTPUT_SCALE - y) ** 2))
        ab += float(np.sum(np.abs(np.clip(raw, -RAW_CLAMP, RAW_CLAMP) * OUTPUT_SCALE - y)))
    return sq / len(images), math.degrees(ab / len(images))


def mirror(images, labels):
    """Left-right reflection of a batch: columns flipped, roll plane reflected, yaw negated.

    The sensor layout is symmetric about the body x-z plane, so the mirrored
    sample is what the vehicle would see in the mirrored tunnel.
    """
    out = images[..., ::-1].copy()
    out[:, 1] = 1.0 - out[:, 1]
    return out, -labels


def shift(images, dz, dy):
    """Translate the depth channel of each image by whole pixels, filling with background."""
    out = images.copy()
    h, w = images.shape[2:]
    for i, (a, b) in enumerate(zip(dz, dy)):
        src = images[i, 0, max(-a, 0) : h - max(a, 0), max(-b, 0) : w - max(b, 0)]
        out[i, 0] = 0.0
        out[i, 0, max(a, 0) : h - max(-a, 0), max(b, 0) : w - max(-b, 0)] = src
    return out


def train(images, labels, epochs: int = 60, batch_size: int = 32, lr: float = 1e-4, seed: int = 0,
          min_samples: int = 1000, augment: bool = False, cosine: bool = False, max_shift: int = 0,
          log=None, progress=None) -> TrainResult:
    """Train from scratch with a seeded 90/10 split; keep the best-validation snapshot.

    With ``augment`` a seeded random half of every training batch is replaced
    by its :func:`mirror`; ``max_shift`` > 0 also translates every training
    image by up to that many pixels each way (a different lateral offset at
    the same relative yaw). ``cosine`` anneals the step size from ``lr`` to
    zero over the run, one step per epoch. ``log`` may be a path for the per-epoch CSV;
    ``progress`` an optional callable receiving each :class:`TrainRecord`.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.float32)
    if len(images) < min_samples:
        raise DatasetTooSmall(f"need at least {min_samples} samples, got {len(images)}")
    tr, va = split_indices(len(images), seed)
    model = init_model(seed)
    state = init_optimizer(model, lr)
    rng = np.random.default_rng(seed + 1)
    result = TrainResult(model.copy())
    best = math.inf
    for epoch in range(1, epochs + 1):
        if cosine:
            state.lr = 0.5 * lr * (1 + math.cos(math.pi * (epoch - 1) / epochs))
        order = tr[rng.permutation(len(tr))]
        total = 0.0
        for i in range(0, len(order), batch_size):
            idx = np.sort(order[i : i + batch_size])
            xb, yb = images[idx], labels[idx]
            if augment:
                flip = rng.random(len(idx)) < 0.5
                xb, yb = xb.copy(), yb.copy()
                xb[flip], yb[flip] = mirror(xb[flip], yb[flip])
            if max_shift:
                d = rng.integers(-max_shift, max_shift + 1, size=(2, len(idx)))
                xb = shift(xb, d[0], d[1])
            grads, loss = backward(model, xb, yb)
            rmsprop_step(model, grads, state)
            total += loss * len(idx)
        train_loss = total / len(order)
        val_loss, val_mae = evaluate(model, images[va], labels[va]) if len(va) else (train_loss, float("nan"))
        rec = TrainRecord(epoch, train_loss, val_loss, val_mae)
        result.history.append(rec)
        if progress is not None:
            progress(rec)
        if val_loss < best:
            best = val_loss
            result.model = model.copy()
            result.best_epoch = epoch
    result.model.trained = True
    if log is not None:
        write_log(result.history, log)
    return result


def write_log(history: list[TrainRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_mae_deg"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_mae_deg)])


# -- model file -------------------------------------------------------------


def save_model(model: NetModel, path) -> None:
    """Little-endian float32 tensors behind a header with shapes and a CRC32."""
    payload = b"".join(model.params[k].astype("<f4").tobytes() for k in PARAM_SHAPES)
    head = [MAGIC, struct.pack("<HHI", model.version, int(model.trained), len(PARAM_SHAPES))]
    for k in PARAM_SHAPES:
        shape = model.params[k].shape
        head.append(struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}I", *shape))
    head.append(struct.pack("<QI", len(payload), zlib.crc32(payload)))
    Path(path).write_bytes(b"".join(head) + payload)


def load_model(path) -> NetModel:
    data = Path(path).read_bytes()
    try:
        if data[: len(MAGIC)] != MAGIC:
            raise CorruptFile("bad magic")
        off = len(MAGIC)
        version, trained, n = struct.unpack_from("<HHI", data, off)
        off += 8
        if version != MODEL_VERSION:
            raise VersionMismatch(f"model version {version}, expected {MODEL_VERSION}")
        shapes = []
        for _ in range(n):
            (nd,) = struct.unpack_from("<I", data, off)
            off += 4
            shapes.append(struct.unpack_from(f"<{nd}I", data, off))
            off += 4 * nd
        size, crc = struct.unpack_from("<QI", data, off)
        off += 12
    except struct.error as exc:
        raise CorruptFile("truncated header") from exc
    payload = data[off:]
    if len(payload) != size or zlib.crc32(payload) != crc:
        raise CorruptFile("payload length or checksum mismatch")
    if tuple(map(tuple, shapes)) != tuple(PARAM_SHAPES.values()):
        raise CorruptFile("layer dimensions do not match the architecture")
    params, pos = {}, 0
    for k, shape in PARAM_SHAPES.items():
        cnt = int(np.prod(shape))
        params[k] = np.frombuffer(payload, dtype="<f4", count=cnt, offset=pos * 4).reshape(shape).astype(np.float32)
        pos += cnt
    return NetModel(params, bool(trained), version)

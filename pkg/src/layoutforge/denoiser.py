"""Noise-prediction network, manual backprop, training loss, and optimizer.

The network is a per-slot MLP shared across the 16 component slots. Each
slot row is concatenated with a sinusoidal timestep embedding, the dense
condition vector, and a mean-pooled global context of all slot rows, then
passed through two SiLU hidden layers of width 256. Weight sharing plus
mean pooling make the forward pass permutation-equivariant over slots.

All gradients are derived by hand and checked against central finite
differences in the test suite before any training result is trusted.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .diffusion import DiffusionSchedule
from .layout import FEAT_DIM, N_MAX, encode
from .prng import make_rng, standard_normal
from .rules import RuleConfig, penalty_and_grad

log = logging.getLogger("layoutforge.train")

# Fixed, versioned keyword vocabulary for the text condition.
VOCAB = (
    "app", "button", "input", "form", "login", "text", "title", "image",
    "icon", "list", "item", "dark", "light", "toolbar", "header", "content",
    "gallery", "photo", "grid", "row", "vertical", "bar", "card", "menu",
    "profile", "search", "settings", "screen", "compact", "minimal", "warm",
    "wide",
)
VOCAB_VERSION = "kw32-v1"
VOCAB_INDEX = {word: i for i, word in enumerate(VOCAB)}

SKETCH_SIDE = 8
COND_DIM = len(VOCAB) + SKETCH_SIDE * SKETCH_SIDE  # 96
TEMB_DIM = 32
CTX_DIM = 64
HIDDEN_DIM = 256
IN_DIM = FEAT_DIM + TEMB_DIM + COND_DIM + CTX_DIM  # 208

_TEMB_FREQS = np.geomspace(1.0, 100.0, TEMB_DIM // 2)

WEIGHTS_MAGIC = b"LFDN"
WEIGHTS_VERSION = 1
_PARAM_SHAPES = (
    ("ctx_w", (CTX_DIM, FEAT_DIM)),
    ("ctx_b", (CTX_DIM,)),
    ("w1", (HIDDEN_DIM, IN_DIM)),
    ("b1", (HIDDEN_DIM,)),
    ("w2", (HIDDEN_DIM, HIDDEN_DIM)),
    ("b2", (HIDDEN_DIM,)),
    ("w3", (FEAT_DIM, HIDDEN_DIM)),
    ("b3", (FEAT_DIM,)),
)


@dataclass(frozen=True)
class Condition:
    """Text-keyword bag plus 8x8 sketch occupancy, encoded as 96 reals."""

    bag: np.ndarray
    sketch: np.ndarray
    keywords: tuple[str, ...] = ()

    @property
    def encoded(self) -> np.ndarray:
        return np.concatenate([self.bag, self.sketch.reshape(-1)])

    def to_json_dict(self) -> dict:
        return {
            "keywords": list(self.keywords),
            "sketch": [float(v) for v in self.sketch.reshape(-1)],
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "Condition":
        sketch = np.asarray(doc.get("sketch", [0.0] * 64), dtype=np.float64)
        return encode_condition(" ".join(doc.get("keywords", [])), sketch)


def encode_condition(prompt: str = "", sketch=None) -> Condition:
    """Tokenize a prompt into vocabulary bits and attach the sketch grid.

    Unknown words are ignored; a missing sketch becomes an all-zero grid.
    """
    bag = np.zeros(len(VOCAB), dtype=np.float64)
    matched = []
    for token in (prompt or "").lower().split():
        idx = VOCAB_INDEX.get(token)
        if idx is not None and bag[idx] == 0.0:
            bag[idx] = 1.0
            matched.append(token)
    if sketch is None:
        grid = np.zeros((SKETCH_SIDE, SKETCH_SIDE), dtype=np.float64)
    else:
        grid = np.asarray(sketch, dtype=np.float64).reshape(SKETCH_SIDE, SKETCH_SIDE)
        grid = np.clip(grid, 0.0, 1.0)
    matched.sort(key=VOCAB_INDEX.__getitem__)
    return Condition(bag=bag, sketch=grid, keywords=tuple(matched))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    condition_dropout_p: float = 0.1
    design_penalty_lambda: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if min(self.learning_rate, self.beta1, self.beta2, self.epsilon) <= 0:
            raise ValueError("optimizer rates must be positive")
        if not 0.0 <= self.condition_dropout_p <= 1.0:
            raise ValueError("condition_dropout_p must lie in [0,1]")
        if self.design_penalty_lambda < 0:
            raise ValueError("design_penalty_lambda must be >= 0")


@dataclass
class DenoiserParams:
    """Weights of the noise-prediction network.

    `uncond` marks a model trained with full condition dropout; such a
    model ignores any condition passed at prediction time.
    """

    ctx_w: np.ndarray
    ctx_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    T: int = 200
    uncond: bool = False

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name, _ in _PARAM_SHAPES]

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            **{name: arr.copy() for name, arr in self.param_items()},
            T=self.T,
            uncond=self.uncond,
        )

    def predict_eps(self, xt: np.ndarray, t: int, c=None) -> np.ndarray:
        return predict_eps(self, xt, t, c)


def init_params(seed: int, T: int = 200) -> DenoiserParams:
    """Glorot-uniform weights, zero biases, drawn in a fixed order."""
    rng = make_rng(seed)
    arrays = {}
    for name, shape in _PARAM_SHAPES:
        if len(shape) == 2:
            fan_out, fan_in = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return DenoiserParams(**arrays, T=T, uncond=False)


def time_embedding(t, T: int) -> np.ndarray:
    """Sine/cosine features of t/T at geometrically spaced frequencies."""
    u = np.atleast_1d(np.asarray(t, dtype=np.float64)) / float(T)
    angles = 2.0 * np.pi * u[:, None] * _TEMB_FREQS[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return emb if np.ndim(t) else emb[0]


def _condition_vector(c) -> np.ndarray:
    if c is None:
        return np.zeros(COND_DIM)
    if isinstance(c, Condition):
        return c.encoded
    vec = np.asarray(c, dtype=np.float64).reshape(-1)
    if vec.shape != (COND_DIM,):
        raise ValueError(f"condition vector must have length {COND_DIM}, got {vec.shape}")
    return vec


def _forward(params: DenoiserParams, x: np.ndarray, temb: np.ndarray, cond: np.ndarray):
    """Batched forward pass; returns the output and the backprop cache."""
    B = x.shape[0]
    proj = x @ params.ctx_w.T + params.ctx_b
    ctx = proj.mean(axis=1)
    z = np.concatenate(
        [
            x,
            np.repeat(temb[:, None, :], N_MAX, axis=1),
            np.repeat(cond[:, None, :], N_MAX, axis=1),
            np.repeat(ctx[:, None, :], N_MAX, axis=1),
        ],
        axis=2,
    )
    s1 = z @ params.w1.T + params.b1
    sig1 = 1.0 / (1.0 + np.exp(-s1))
    h1 = s1 * sig1
    s2 = h1 @ params.w2.T + params.b2
    sig2 = 1.0 / (1.0 + np.exp(-s2))
    h2 = s2 * sig2
    out = h2 @ params.w3.T + params.b3
    cache = (x, z, s1, sig1, h1, s2, sig2, h2)
    return out, cache


def _backward(params: DenoiserParams, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode accumulation of parameter gradients from d(loss)/d(out)."""
    x, z, s1, sig1, h1, s2, sig2, h2 = cache
    flat = lambda a: a.reshape(-1, a.shape[-1])

    grads: dict[str, np.ndarray] = {}
    grads["w3"] = flat(d_out).T @ flat(h2)
    grads["b3"] = flat(d_out).sum(axis=0)
    d_h2 = d_out @ params.w3
    d_s2 = d_h2 * (sig2 * (1.0 + s2 * (1.0 - sig2)))
    grads["w2"] = flat(d_s2).T @ flat(h1)
    grads["b2"] = flat(d_s2).sum(axis=0)
    d_h1 = d_s2 @ params.w2
    d_s1 = d_h1 * (sig1 * (1.0 + s1 * (1.0 - sig1)))
    grads["w1"] = flat(d_s1).T @ flat(z)
    grads["b1"] = flat(d_s1).sum(axis=0)
    d_z = d_s1 @ params.w1
    # Context path: ctx = mean over slots of (x @ ctx_w.T + ctx_b).
    d_ctx = d_z[:, :, FEAT_DIM + TEMB_DIM + COND_DIM :].sum(axis=1)
    grads["ctx_w"] = d_ctx.T @ x.mean(axis=1)
    grads["ctx_b"] = d_ctx.sum(axis=0)
    return grads


def predict_eps(params: DenoiserParams, xt: np.ndarray, t: int, c=None) -> np.ndarray:
    """Deterministic noise prediction for one layout tensor."""
    xt = np.asarray(xt, dtype=np.float64)
    if xt.shape != (N_MAX, FEAT_DIM):
        raise ValueError(f"expected shape {(N_MAX, FEAT_DIM)}, got {xt.shape}")
    cond = np.zeros(COND_DIM) if params.uncond else _condition_vector(c)
    temb = time_embedding(t, params.T)
    out, _ = _forward(params, xt[None], temb[None], cond[None])
    return out[0]


def _normalize_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    x0s, conds = [], []
    for x0, c in batch:
        x0s.append(np.asarray(x0, dtype=np.float64))
        conds.append(_condition_vector(c))
    return np.stack(x0s), np.stack(conds)


def loss_and_grad(
    params: DenoiserParams,
    batch: Sequence[tuple],
    sched: DiffusionSchedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    rules: RuleConfig = RuleConfig(),
) -> tuple[float, dict[str, np.ndarray]]:
    """Noise-matching loss plus the design penalty, with hand gradients.

    Per example: a uniform timestep and fresh noise produce x_t; the
    condition is dropped with probability condition_dropout_p; the loss is
    the squared noise residual plus lambda times the smooth rule penalty of
    the implied clean-state estimate, averaged over the batch.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    x0, cond = _normalize_batch(batch)
    return _loss_and_grad_arrays(params, x0, cond, sched, cfg, rng, rules)


def _loss_and_grad_arrays(
    params: DenoiserParams,
    x0: np.ndarray,
    cond: np.ndarray,
    sched: DiffusionSchedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    rules: RuleConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    B = x0.shape[0]
    ts = rng.integers(1, sched.T + 1, size=B)
    eps = standard_normal(rng, x0.shape)
    if cfg.condition_dropout_p > 0:
        keep = rng.random(B) >= cfg.condition_dropout_p
        cond = cond * keep[:, None]
    abar = sched.alpha_bar[ts - 1][:, None, None]
    xt = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps

    temb = time_embedding(ts, params.T)
    out, cache = _forward(params, xt, temb, cond)

    resid = out - eps
    loss = float(np.sum(resid**2)) / B
    d_out = 2.0 * resid / B

    lam = cfg.design_penalty_lambda
    if lam > 0:
        scale = np.sqrt(1.0 - abar) / np.sqrt(abar)
        x0_hat = (xt - np.sqrt(1.0 - abar) * out) / np.sqrt(abar)
        for b in range(B):
            r, d_r = penalty_and_grad(x0_hat[b], rules)
            loss += lam * r / B
            d_out[b] += lam / B * d_r * -scale[b]

    return loss, _backward(params, cache, d_out)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def for_params(params: DenoiserParams) -> "AdamState":
        return AdamState(
            m={name: np.zeros_like(arr) for name, arr in params.param_items()},
            v={name: np.zeros_like(arr) for name, arr in params.param_items()},
        )


def adam_step(
    params: DenoiserParams, grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig
) -> None:
    """In-place adaptive-moment update with bias correction."""
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    for name, arr in params.param_items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g**2
        m_hat = state.m[name] / (1 - b1**state.step)
        v_hat = state.v[name] / (1 - b2**state.step)
        arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values in parameter {name!r} after update")


def train(
    dataset,
    cfg: TrainConfig,
    sched: DiffusionSchedule,
    rules: RuleConfig = RuleConfig(),
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> DenoiserParams:
    """Train the denoiser on (Layout, Condition) pairs.

    Deterministic given (seed, dataset order, config): initialization,
    shuffling, timestep and noise draws all flow from the config seed.
    """
    cfg.validate()
    items = list(dataset.items) if hasattr(dataset, "items") else list(dataset)
    if len(items) == 0:
        raise ValueError("dataset is empty")
    if len(items) < cfg.batch_size:
        raise ValueError(f"dataset size {len(items)} is below batch_size {cfg.batch_size}")

    x0 = np.stack([encode(layout) for layout, _ in items])
    cond = np.stack([_condition_vector(c) for _, c in items])

    params = init_params(cfg.seed, T=sched.T)
    rng = make_rng(cfg.seed + 1)
    state = AdamState.for_params(params)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(items))
        total, batches = 0.0, 0
        for lo in range(0, len(items), cfg.batch_size):
            sel = order[lo : lo + cfg.batch_size]
            loss, grads = _loss_and_grad_arrays(
                params, x0[sel], cond[sel], sched, cfg, rng, rules
            )
            adam_step(params, grads, state, cfg)
            total += loss
            batches += 1
        mean_loss = total / batches
        log.info("epoch %d loss %.6f", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)

    params.uncond = cfg.condition_dropout_p >= 1.0
    return params


# ---------------------------------------------------------------------------
# Weights file format: magic, version, flags, dims, then float64 LE arrays
# in param_items order. A JSON sidecar carries the vocabulary and config.
# ---------------------------------------------------------------------------


def save_params(params: DenoiserParams, path: str, sidecar_extra: Optional[dict] = None) -> None:
    dims = (N_MAX, FEAT_DIM, TEMB_DIM, COND_DIM, CTX_DIM, HIDDEN_DIM, params.T)
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, 1 if params.uncond else 0))
        fh.write(struct.pack("<7I", *dims))
        for _, arr in params.param_items():
            fh.write(arr.astype("<f8").tobytes())
    sidecar = {
        "format_version": WEIGHTS_VERSION,
        "vocab_version": VOCAB_VERSION,
        "vocab": list(VOCAB),
        "dims": {
            "slots": N_MAX,
            "features": FEAT_DIM,
            "time_embedding": TEMB_DIM,
            "condition": COND_DIM,
            "context": CTX_DIM,
            "hidden": HIDDEN_DIM,
            "T": params.T,
        },
        "uncond": params.uncond,
    }
    if sidecar_extra:
        sidecar.update(sidecar_extra)
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path: str) -> DenoiserParams:
    with open(path, "rb") as fh:
        if fh.read(4) != WEIGHTS_MAGIC:
            raise ValueError(f"{path}: not a LFDN weights file")
        version, flags = struct.unpack("<II", fh.read(8))
        if version != WEIGHTS_VERSION:
            raise ValueError(f"{path}: unsupported weights version {version}")
        dims = struct.unpack("<7I", fh.read(28))
        expected = (N_MAX, FEAT_DIM, TEMB_DIM, COND_DIM, CTX_DIM, HIDDEN_DIM)
        if dims[:6] != expected:
            raise ValueError(f"{path}: architecture dims {dims[:6]} do not match {expected}")
        arrays = {}
        for name, shape in _PARAM_SHAPES:
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated while reading {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return DenoiserParams(**arrays, T=int(dims[6]), uncond=bool(flags & 1))

"""Noise schedule, forward process, ancestral sampler, and inpainting refine.

The forward corruption uses the closed form x_t = sqrt(abar_t) x_0 +
sqrt(1 - abar_t) eps. The reverse chain is the standard ancestral update
with sigma_t^2 = beta_t and a deterministic final step. Design-rule
guidance projects the running clean-state estimate every k steps and at
the end of the chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .layout import FEAT_DIM, N_MAX, Layout, decode, encode
from .prng import make_rng, standard_normal
from .rules import RuleConfig, project

DEFAULT_T = 200
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_PROJECTION_EVERY = 25


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")

    # 1-based accessors matching the chain's timestep convention.
    def beta_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.beta[t - 1])

    def alpha_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha[t - 1])

    def alpha_bar_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha_bar[t - 1])

    def to_json_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_start": float(self.beta[0]),
            "beta_end": float(self.beta[-1]),
        }


def build_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> DiffusionSchedule:
    """Linear beta schedule with alpha products precomputed."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    return schedule_from_betas(np.linspace(beta_start, beta_end, T))


def schedule_from_betas(betas) -> DiffusionSchedule:
    beta = np.asarray(betas, dtype=np.float64)
    if beta.ndim != 1 or beta.size < 1:
        raise ValueError("betas must be a non-empty 1-D sequence")
    if np.any(beta <= 0.0) or np.any(beta >= 1.0):
        raise ValueError("every beta must lie strictly inside (0,1)")
    alpha = 1.0 - beta
    return DiffusionSchedule(T=int(beta.size), beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    steps: int = DEFAULT_T
    sigma_mode: str = "beta"
    condition: object = None
    projection_every: int = DEFAULT_PROJECTION_EVERY
    rules: RuleConfig = field(default_factory=RuleConfig)

    def validate(self, sched: DiffusionSchedule) -> None:
        if self.steps != sched.T:
            raise ValueError(f"steps {self.steps} must equal schedule T {sched.T}")
        if self.sigma_mode != "beta":
            raise ValueError(f"unsupported sigma_mode {self.sigma_mode!r}")
        if self.projection_every < 0:
            raise ValueError("projection_every must be >= 0")


def forward_sample(
    x0: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule
) -> np.ndarray:
    """Jump the clean state to noise level t in one linear step."""
    abar = sched.alpha_bar_t(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def reverse_step(
    xt: np.ndarray,
    t: int,
    eps_hat: np.ndarray,
    z: np.ndarray,
    sched: DiffusionSchedule,
) -> np.ndarray:
    """One ancestral denoising step; the t = 1 step is deterministic."""
    alpha = sched.alpha_t(t)
    abar = sched.alpha_bar_t(t)
    mean = (xt - (1.0 - alpha) / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
    if t == 1:
        return mean
    return mean + np.sqrt(sched.beta_t(t)) * z


def x0_estimate(
    xt: np.ndarray, t: int, eps_hat: np.ndarray, sched: DiffusionSchedule
) -> np.ndarray:
    """Invert the forward closed form under the predicted noise."""
    abar = sched.alpha_bar_t(t)
    return (xt - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)


def eps_from_x0(
    xt: np.ndarray, t: int, x0: np.ndarray, sched: DiffusionSchedule
) -> np.ndarray:
    abar = sched.alpha_bar_t(t)
    return (xt - np.sqrt(abar) * x0) / np.sqrt(1.0 - abar)


def ancestral_sample(
    eps_fn: Callable[[np.ndarray, int], np.ndarray],
    shape: tuple,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    t_start: Optional[int] = None,
    x_start: Optional[np.ndarray] = None,
    project_x0: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    projection_every: int = 0,
    pinned_rows: tuple = (),
    x0_reference: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Run the reverse chain from pure noise (or a given noisy state).

    When projection is enabled, the clean-state estimate is repaired every
    `projection_every` steps and at the final step, then folded back into
    the noise prediction. Pinned rows are overwritten after every step with
    a fresh forward sample of the reference state, and with the reference
    itself once the chain reaches t = 0.
    """
    t_start = sched.T if t_start is None else t_start
    sched._check_t(t_start)
    x = standard_normal(rng, shape) if x_start is None else np.array(x_start, copy=True)
    rows = tuple(sorted(pinned_rows))
    for t in range(t_start, 0, -1):
        eps_hat = eps_fn(x, t)
        step_index = t_start - t + 1
        if project_x0 is not None and projection_every > 0:
            if t == 1 or step_index % projection_every == 0:
                eps_hat = eps_from_x0(x, t, project_x0(x0_estimate(x, t, eps_hat, sched)), sched)
        z = standard_normal(rng, x.shape) if t > 1 else np.zeros_like(x)
        x = reverse_step(x, t, eps_hat, z, sched)
        if rows:
            if t > 1:
                noised = forward_sample(x0_reference, t - 1, standard_normal(rng, x.shape), sched)
                x[list(rows)] = noised[list(rows)]
            else:
                x[list(rows)] = x0_reference[list(rows)]
    return x


def _tensor_projector(cfg: RuleConfig) -> Callable[[np.ndarray], np.ndarray]:
    def apply(x0_hat: np.ndarray) -> np.ndarray:
        return encode(project(decode(x0_hat), cfg))

    return apply


def sample(cfg: SamplerConfig, denoiser, sched: DiffusionSchedule) -> Layout:
    """Generate a layout from pure noise under the config's condition.

    Deterministic: equal (seed, config, weights, schedule) give the same
    serialized layout.
    """
    if denoiser is None:
        raise ValueError("sampling requires trained denoiser weights")
    cfg.validate(sched)
    if getattr(denoiser, "T", sched.T) != sched.T:
        raise ValueError(f"weights trained for T={denoiser.T}, schedule has T={sched.T}")
    rng = make_rng(cfg.seed)
    x = ancestral_sample(
        eps_fn=lambda xt, t: denoiser.predict_eps(xt, t, cfg.condition),
        shape=(N_MAX, FEAT_DIM),
        sched=sched,
        rng=rng,
        project_x0=_tensor_projector(cfg.rules) if cfg.projection_every > 0 else None,
        projection_every=cfg.projection_every,
    )
    return decode(x)


def refine(
    original: Layout,
    pinned: set[int],
    cfg: SamplerConfig,
    t_start: int,
    denoiser,
    sched: DiffusionSchedule,
) -> Layout:
    """Masked-inpainting resample: re-noise to t_start, then denoise while
    holding the pinned components at the original's (re-noised) values.

    Pinned components survive to the output exactly on discrete fields and
    within encode/decode round-trip error on continuous ones. Slots beyond
    the original's component list are held empty; new components enter a
    refinement by editing the submitted layout, not by slot spawning.
    """
    if denoiser is None:
        raise ValueError("refinement requires trained denoiser weights")
    cfg.validate(sched)
    sched._check_t(t_start)
    bad = [p for p in pinned if not 0 <= p < len(original.components)]
    if bad:
        raise IndexError(f"pinned indices out of range: {sorted(bad)}")
    held_rows = set(pinned) | set(range(len(original.components), N_MAX))
    x0 = encode(original)
    rng = make_rng(cfg.seed)
    x_init = forward_sample(x0, t_start, standard_normal(rng, x0.shape), sched)
    x = ancestral_sample(
        eps_fn=lambda xt, t: denoiser.predict_eps(xt, t, cfg.condition),
        shape=x0.shape,
        sched=sched,
        rng=rng,
        t_start=t_start,
        x_start=x_init,
        project_x0=_tensor_projector(cfg.rules) if cfg.projection_every > 0 else None,
        projection_every=cfg.projection_every,
        pinned_rows=tuple(held_rows),
        x0_reference=x0,
    )
    return decode(x, canvas_px=original.canvas_px)

"""PSNR / SSIM / Fréchet-distance evaluation and the ablation harness.

Raster metrics compare deterministic rasterizations of generated layouts
against ground-truth layouts that share the same condition. Distributional
quality uses a Fréchet distance between Gaussian fits of hand-crafted
22-dim layout features (reported as "layout-FD", never as FID: no
Inception network is involved).
"""

from __future__ import annotations

import colorsys
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import rules
from .dataio import Corpus
from .denoiser import DenoiserParams, TrainConfig, train
from .diffusion import DiffusionSchedule, SamplerConfig, refine, sample
from .layout import Component, Layout, rasterize
from .rules import RuleConfig

log = logging.getLogger("layoutforge.metrics")

FEATURE_DIM = 22
_COV_RIDGE = 1e-6
_PSNR_CAP_DB = 100.0
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2
_SSIM_WINDOW = 8
_SSIM_STRIDE = 4

ABLATION_LABELS = (
    "Full Model (Ours)",
    "Without Conditional Inputs",
    "Without Design Optimization",
    "Without Feedback Mechanism",
)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at
    100 dB for (near-)identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return _PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over uniform 8x8 luma windows, stride 4."""
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    luma_a = a.mean(axis=2) if a.ndim == 3 else a
    luma_b = b.mean(axis=2) if b.ndim == 3 else b
    h, w = luma_a.shape
    if h < _SSIM_WINDOW or w < _SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than one {_SSIM_WINDOW}x{_SSIM_WINDOW} window")

    win = np.lib.stride_tricks.sliding_window_view(luma_a, (_SSIM_WINDOW, _SSIM_WINDOW))
    win_a = win[::_SSIM_STRIDE, ::_SSIM_STRIDE].reshape(-1, _SSIM_WINDOW * _SSIM_WINDOW)
    win = np.lib.stride_tricks.sliding_window_view(luma_b, (_SSIM_WINDOW, _SSIM_WINDOW))
    win_b = win[::_SSIM_STRIDE, ::_SSIM_STRIDE].reshape(-1, _SSIM_WINDOW * _SSIM_WINDOW)

    mu_a, mu_b = win_a.mean(axis=1), win_b.mean(axis=1)
    var_a = win_a.var(axis=1)
    var_b = win_b.var(axis=1)
    cov = ((win_a - mu_a[:, None]) * (win_b - mu_b[:, None])).mean(axis=1)
    scores = ((2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)) / (
        (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    )
    return float(scores.mean())


def layout_features(layout: Layout) -> np.ndarray:
    """22-dim descriptor: count fraction, area stats, alignment, circular
    mean hue, mean saturation, and a flattened 4x4 occupancy grid."""
    visible = layout.visible_components()
    feats = np.zeros(FEATURE_DIM)
    feats[0] = len(visible) / 16.0
    if visible:
        areas = np.array([c.w * c.h for c in visible])
        feats[1] = areas.mean()
        feats[2] = areas.std()
    feats[3] = rules.alignment_score(layout)
    hues, sats = [], []
    for c in visible:
        hue, sat, _ = colorsys.rgb_to_hsv(*c.color)
        sats.append(sat)
        if sat > 0.1:
            hues.append(hue * 2.0 * math.pi)
    if hues:
        angle = math.atan2(
            float(np.mean(np.sin(hues))), float(np.mean(np.cos(hues)))
        )
        feats[4] = (angle / (2.0 * math.pi)) % 1.0
    feats[5] = float(np.mean(sats)) if sats else 0.0
    centers = (np.arange(4) + 0.5) / 4.0
    grid = np.zeros((4, 4))
    for c in visible:
        col = (centers >= c.left) & (centers <= c.right)
        row = (centers >= c.top) & (centers <= c.bottom)
        grid[np.ix_(row, col)] = 1.0
    feats[6:] = grid.reshape(-1)
    return feats


def frechet_distance(
    mu_a: np.ndarray, cov_a: np.ndarray, mu_b: np.ndarray, cov_b: np.ndarray
) -> float:
    """Fréchet distance between two Gaussians.

    FD^2 = |mu_a - mu_b|^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^(1/2)),
    with the matrix square root taken through the symmetrized product
    sqrt(cov_a) cov_b sqrt(cov_a) and tiny negative eigenvalues clamped.
    The trace terms cancel catastrophically for (near-)identical inputs, so
    FD^2 below the float-noise scale of the traces is flushed to zero.
    """
    eigval_a, eigvec_a = np.linalg.eigh(cov_a)
    root_a = (eigvec_a * np.sqrt(np.maximum(eigval_a, 0.0))) @ eigvec_a.T
    inner = root_a @ cov_b @ root_a
    inner = (inner + inner.T) / 2.0
    eigval = np.linalg.eigvalsh(inner)
    trace_sqrt = float(np.sum(np.sqrt(np.maximum(eigval, 0.0))))
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    traces = float(np.trace(cov_a) + np.trace(cov_b))
    fd2 = float(diff @ diff) + traces - 2.0 * trace_sqrt
    if fd2 < 1e-10 * (1.0 + traces):
        return 0.0
    return math.sqrt(fd2)


def _feature_stats(layouts: Sequence[Layout]) -> tuple[np.ndarray, np.ndarray]:
    feats = np.stack([layout_features(l) for l in layouts])
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False) + _COV_RIDGE * np.eye(FEATURE_DIM)
    return mu, cov


def layout_fd(set_a: Sequence[Layout], set_b: Sequence[Layout]) -> float:
    """Fréchet distance between Gaussian fits of layout features."""
    for name, group in (("a", set_a), ("b", set_b)):
        if len(group) <= FEATURE_DIM:
            raise ValueError(
                f"set {name} has {len(group)} layouts; need more than {FEATURE_DIM}"
            )
    mu_a, cov_a = _feature_stats(set_a)
    mu_b, cov_b = _feature_stats(set_b)
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)


# ---------------------------------------------------------------------------
# Evaluation protocol
# ---------------------------------------------------------------------------


class DiffusionLayoutModel:
    """Bundles trained weights with the sampling policy used at evaluation."""

    def __init__(
        self,
        params: DenoiserParams,
        sched: DiffusionSchedule,
        projection_every: int = 25,
        rule_cfg: RuleConfig = RuleConfig(),
        use_condition: bool = True,
        t_refine: Optional[int] = None,
    ):
        self.params = params
        self.sched = sched
        self.projection_every = projection_every
        self.rule_cfg = rule_cfg
        self.use_condition = use_condition
        self.t_refine = t_refine if t_refine is not None else max(1, sched.T // 2)

    def _sampler_cfg(self, condition, seed: int) -> SamplerConfig:
        return SamplerConfig(
            seed=seed,
            steps=self.sched.T,
            condition=condition if self.use_condition else None,
            projection_every=self.projection_every,
            rules=self.rule_cfg,
        )

    def generate(self, condition, seed: int, index: int = 0) -> Layout:
        return sample(self._sampler_cfg(condition, seed), self.params, self.sched)

    def refine(self, layout: Layout, pinned: set[int], condition, seed: int) -> Layout:
        return refine(
            layout,
            pinned,
            self._sampler_cfg(condition, seed),
            self.t_refine,
            self.params,
            self.sched,
        )

    def describe(self) -> dict:
        digest = hashlib.sha256()
        for _, arr in self.params.param_items():
            digest.update(arr.tobytes())
        return {
            "weights_sha": digest.hexdigest()[:16],
            "T": self.sched.T,
            "projection_every": self.projection_every,
            "use_condition": self.use_condition,
            "t_refine": self.t_refine,
        }


class IdentityModel:
    """Oracle stub that returns the ground-truth layout for each item."""

    def __init__(self, layouts: Sequence[Layout]):
        self.layouts = list(layouts)

    def generate(self, condition, seed: int, index: int = 0) -> Layout:
        return self.layouts[index]

    def refine(self, layout, pinned, condition, seed: int) -> Layout:
        return layout

    def describe(self) -> dict:
        return {"stub": "identity"}


class RandomModel:
    """Baseline stub that scatters random components, ignoring conditions."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, condition, seed: int, index: int = 0) -> Layout:
        from .layout import ComponentType
        from .prng import make_rng

        rng = make_rng(_item_seed(self.seed, seed))
        comps = []
        for _ in range(int(rng.integers(2, 9))):
            w = float(rng.uniform(0.05, 0.5))
            h = float(rng.uniform(0.05, 0.5))
            comps.append(
                Component(
                    ctype=ComponentType(int(rng.integers(0, 8))),
                    cx=float(rng.uniform(w / 2, 1 - w / 2)),
                    cy=float(rng.uniform(h / 2, 1 - h / 2)),
                    w=w,
                    h=h,
                    color=tuple(float(v) for v in rng.uniform(0, 1, size=3)),
                )
            )
        return Layout(components=tuple(comps))

    def refine(self, layout, pinned, condition, seed: int) -> Layout:
        return layout

    def describe(self) -> dict:
        return {"stub": "random", "seed": self.seed}


@dataclass(frozen=True)
class EvalConfig:
    seed: int = 0
    max_items: Optional[int] = None
    apply_feedback: bool = True
    feedback_fraction: float = 0.25
    rule_cfg: RuleConfig = field(default_factory=RuleConfig)


@dataclass(frozen=True)
class EvalReport:
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    layout_fd: float
    mean_alignment: float
    total_violations: int
    n_items: int
    config_hash: str
    label: str = ""

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "psnr_db": {"mean": self.psnr_mean, "std": self.psnr_std},
            "ssim": {"mean": self.ssim_mean, "std": self.ssim_std},
            "layout_fd": self.layout_fd,
            "rule_stats": {
                "mean_alignment": self.mean_alignment,
                "total_violations": self.total_violations,
            },
            "n_items": self.n_items,
            "config_hash": self.config_hash,
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "EvalReport":
        return EvalReport(
            psnr_mean=doc["psnr_db"]["mean"],
            psnr_std=doc["psnr_db"]["std"],
            ssim_mean=doc["ssim"]["mean"],
            ssim_std=doc["ssim"]["std"],
            layout_fd=doc["layout_fd"],
            mean_alignment=doc["rule_stats"]["mean_alignment"],
            total_violations=doc["rule_stats"]["total_violations"],
            n_items=doc["n_items"],
            config_hash=doc["config_hash"],
            label=doc.get("label", ""),
        )


def feedback_pins(layout: Layout, fraction: float = 0.25, cfg: RuleConfig = RuleConfig()) -> set[int]:
    """Scripted stand-in for a human: pin the best-aligned components.

    Each matched edge relation credits both endpoints; the top `fraction`
    of subject components (at least one) by credit are pinned.
    """
    subject_idx = [
        k
        for k, c in enumerate(layout.components)
        if c.visible and c.ctype.name != "background"
    ]
    if not subject_idx:
        return set()
    subjects = [layout.components[k] for k in subject_idx]
    credit = np.zeros(len(subjects))
    for i in range(len(subjects)):
        for j in range(i + 1, len(subjects)):
            a, b = subjects[i], subjects[j]
            pairs = (
                (a.left, b.left),
                (a.right, b.right),
                (a.cx, b.cx),
                (a.top, b.top),
                (a.bottom, b.bottom),
                (a.cy, b.cy),
            )
            matched = sum(1 for u, v in pairs if abs(u - v) < cfg.tau_align)
            credit[i] += matched
            credit[j] += matched
    k = max(1, int(round(fraction * len(subjects))))
    ranked = sorted(range(len(subjects)), key=lambda s: (-credit[s], s))
    return {subject_idx[s] for s in ranked[:k]}


def _item_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def evaluate(
    model,
    corpus: Corpus,
    cfg: EvalConfig = EvalConfig(),
    label: str = "",
    per_item_sink: Optional[list] = None,
) -> EvalReport:
    """Generate one sample per validation item and score the battery.

    PSNR/SSIM pair each generated raster with the ground-truth raster that
    shares its condition; layout-FD compares the generated set against the
    validation set; rule stats come from the design-rule scorers.
    """
    val = corpus.val_items() if corpus.val_idx else list(corpus.items)
    if cfg.max_items is not None:
        val = val[: cfg.max_items]
    if not val:
        raise ValueError("validation split is empty")

    t0 = time.perf_counter()
    psnrs, ssims, aligns, viols = [], [], [], []
    samples = []
    for i, (gt_layout, condition) in enumerate(val):
        seed = _item_seed(cfg.seed, i)
        generated = model.generate(condition, seed, index=i)
        if cfg.apply_feedback:
            pins = feedback_pins(generated, cfg.feedback_fraction, cfg.rule_cfg)
            if pins:
                generated = model.refine(generated, pins, condition, _item_seed(seed, 1))
        samples.append(generated)
        raster_gen, raster_gt = rasterize(generated), rasterize(gt_layout)
        psnrs.append(psnr(raster_gen, raster_gt))
        ssims.append(ssim(raster_gen, raster_gt))
        aligns.append(rules.alignment_score(generated, cfg.rule_cfg))
        viols.append(rules.spacing_violations(generated, cfg.rule_cfg))
        if per_item_sink is not None:
            per_item_sink.append(
                {
                    "index": i,
                    "seed": seed,
                    "psnr_db": psnrs[-1],
                    "ssim": ssims[-1],
                    "alignment": aligns[-1],
                    "violations": viols[-1],
                }
            )
    fd = layout_fd(samples, [gt for gt, _ in val])
    log.info(
        "evaluated %d items in %.1f ms", len(val), (time.perf_counter() - t0) * 1e3
    )

    digest_src = {"eval": cfg.seed, "max_items": cfg.max_items,
                  "apply_feedback": cfg.apply_feedback, "model": model.describe()}
    config_hash = hashlib.sha256(
        json.dumps(digest_src, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]
    return EvalReport(
        psnr_mean=float(np.mean(psnrs)),
        psnr_std=float(np.std(psnrs)),
        ssim_mean=float(np.mean(ssims)),
        ssim_std=float(np.std(ssims)),
        layout_fd=fd,
        mean_alignment=float(np.mean(aligns)),
        total_violations=int(np.sum(viols)),
        n_items=len(val),
        config_hash=config_hash,
        label=label,
    )


def shuffled_baseline(layouts: Sequence[Layout], seed: int) -> list[Layout]:
    """Scramble component centers across the set; a rule-blind baseline."""
    from .prng import make_rng

    pool = []
    for layout in layouts:
        pool.extend((c.cx, c.cy) for c in layout.components)
    order = make_rng(seed).permutation(len(pool))
    out, cursor = [], 0
    for layout in layouts:
        comps = []
        for c in layout.components:
            cx, cy = pool[order[cursor]]
            cursor += 1
            comps.append(replace(c, cx=cx, cy=cy))
        out.append(Layout(components=tuple(comps), canvas_px=layout.canvas_px))
    return out


# ---------------------------------------------------------------------------
# Ablation harness (the four model variants, shared seeds)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    label: str
    report: EvalReport
    flags: dict

    def to_json_dict(self) -> dict:
        return {"label": self.label, "flags": self.flags, "report": self.report.to_json_dict()}


def ablation_suite(
    corpus: Corpus,
    base_cfg: TrainConfig,
    sched: DiffusionSchedule,
    eval_cfg: EvalConfig = EvalConfig(),
    rule_cfg: RuleConfig = RuleConfig(),
    projection_every: int = 25,
) -> list[AblationRow]:
    """Train and evaluate the four ablation variants under shared seeds.

    The full model and the no-feedback variant share one set of weights
    (they differ only in whether evaluation applies the scripted refine
    pass), so three trainings cover the four rows.
    """
    if not corpus.train_idx:
        raise ValueError("corpus needs a train/val split before ablation")

    variants = {
        "full": base_cfg,
        "nocond": replace(base_cfg, condition_dropout_p=1.0),
        "nodesign": replace(base_cfg, design_penalty_lambda=0.0),
    }
    trained = {}
    for name, cfg in variants.items():
        log.info("ablation: training variant %s", name)
        trained[name] = train(corpus.train_items(), cfg, sched, rules=rule_cfg)

    def model(params, proj, use_cond):
        return DiffusionLayoutModel(
            params, sched, projection_every=proj, rule_cfg=rule_cfg, use_condition=use_cond
        )

    rows = [
        AblationRow(
            label=ABLATION_LABELS[0],
            report=evaluate(model(trained["full"], projection_every, True), corpus,
                            eval_cfg, label=ABLATION_LABELS[0]),
            flags={"condition_dropout_p": base_cfg.condition_dropout_p,
                   "design_penalty_lambda": base_cfg.design_penalty_lambda,
                   "projection_every": projection_every, "feedback": True,
                   "use_condition": True},
        ),
        AblationRow(
            label=ABLATION_LABELS[1],
            report=evaluate(model(trained["nocond"], projection_every, False), corpus,
                            eval_cfg, label=ABLATION_LABELS[1]),
            flags={"condition_dropout_p": 1.0,
                   "design_penalty_lambda": base_cfg.design_penalty_lambda,
                   "projection_every": projection_every, "feedback": True,
                   "use_condition": False},
        ),
        AblationRow(
            label=ABLATION_LABELS[2],
            report=evaluate(model(trained["nodesign"], 0, True), corpus,
                            eval_cfg, label=ABLATION_LABELS[2]),
            flags={"condition_dropout_p": base_cfg.condition_dropout_p,
                   "design_penalty_lambda": 0.0,
                   "projection_every": 0, "feedback": True,
                   "use_condition": True},
        ),
        AblationRow(
            label=ABLATION_LABELS[3],
            report=evaluate(model(trained["full"], projection_every, True), corpus,
                            replace(eval_cfg, apply_feedback=False),
                            label=ABLATION_LABELS[3]),
            flags={"condition_dropout_p": base_cfg.condition_dropout_p,
                   "design_penalty_lambda": base_cfg.design_penalty_lambda,
                   "projection_every": projection_every, "feedback": False,
                   "use_condition": True},
        ),
    ]
    return rows


def report_table(rows: Sequence[AblationRow]) -> str:
    """Aligned-column text table in the shape of the evaluation tables."""
    headers = ("Model Variant", "PSNR", "SSIM", "layout-FD")
    cells = [
        (
            row.label,
            f"{row.report.psnr_mean:.1f}",
            f"{row.report.ssim_mean:.2f}",
            f"{row.report.layout_fd:.3f}",
        )
        for row in rows
    ]
    widths = [max(len(h), *(len(c[k]) for c in cells)) for k, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[k]) for k, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(c[k].ljust(widths[k]) for k in range(len(headers))))
    return "\n".join(lines)


def eval_table(report: EvalReport) -> str:
    headers = ("Model", "PSNR", "SSIM", "layout-FD")
    row = (
        report.label or "model",
        f"{report.psnr_mean:.1f}",
        f"{report.ssim_mean:.2f}",
        f"{report.layout_fd:.3f}",
    )
    widths = [max(len(h), len(r)) for h, r in zip(headers, row)]
    return "\n".join(
        [
            "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
            "  ".join("-" * w for w in widths),
            "  ".join(r.ljust(w) for r, w in zip(row, widths)),
        ]
    )

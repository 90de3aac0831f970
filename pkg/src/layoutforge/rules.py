"""Design-rule scoring, a differentiable training penalty, and projection.

Three rule families are scored on decoded layouts: edge alignment, spacing
(overlap / minimum gutter / canvas bounds), and color-scheme harmony.
Training uses a smooth penalty on the tensor state; sampling uses a hard
deterministic repair (edge snapping, overlap resolution, canvas clamping).
Background-type components legitimately overlap everything, so they are
exempt from the pairwise alignment and spacing rules.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, replace

import numpy as np

from .layout import (
    FEAT_DIM,
    GEOM_SLICE,
    N_MAX,
    PRESENCE_COL,
    Component,
    ComponentType,
    Layout,
    encode,
)

# Tolerance used when comparing float gaps produced by exact repairs.
_EDGE_TOL = 1e-9
# Repair cycles are iterated to a fixed point so projection is idempotent;
# the snap/resolve tug-of-war contracts slowly (ratio ~0.85), so allow room.
_MAX_REPAIR_CYCLES = 250


@dataclass(frozen=True)
class RuleConfig:
    tau_align: float = 0.01
    tau_snap: float = 0.02
    g_min: float = 0.01
    lambda_weight: float = 0.1
    hue_sigma: float = 60.0

    def validate(self) -> None:
        if min(self.tau_align, self.tau_snap, self.g_min, self.hue_sigma) <= 0:
            raise ValueError("rule tolerances must be positive")
        if self.tau_align > self.tau_snap:
            raise ValueError("tau_align must not exceed tau_snap")


@dataclass(frozen=True)
class RuleReport:
    alignment_score: float
    spacing_violations: int
    harmony: float
    penalty: float

    def to_json_dict(self) -> dict:
        return {
            "alignment_score": self.alignment_score,
            "spacing_violations": self.spacing_violations,
            "harmony": self.harmony,
            "penalty": self.penalty,
        }


def _rule_subjects(layout: Layout) -> list[Component]:
    """Visible, non-background components: the subjects of pairwise rules."""
    return [
        c
        for c in layout.components
        if c.visible and c.ctype is not ComponentType.background
    ]


def alignment_score(layout: Layout, cfg: RuleConfig = RuleConfig()) -> float:
    """Fraction of matched edge relations over all subject pairs.

    Six relations per unordered pair (left-left, right-right, cx-cx,
    top-top, bottom-bottom, cy-cy) match when the difference is below
    tau_align. Layouts with fewer than two subjects score 1.0.
    """
    subjects = _rule_subjects(layout)
    if len(subjects) < 2:
        return 1.0
    matched = 0
    total = 0
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
            total += 6
            matched += sum(1 for u, v in pairs if abs(u - v) < cfg.tau_align)
    return matched / total


def _pair_overlaps(a: Component, b: Component) -> tuple[float, float]:
    ox = min(a.right, b.right) - max(a.left, b.left)
    oy = min(a.bottom, b.bottom) - max(a.top, b.top)
    return ox, oy


def _pair_violates(a: Component, b: Component, g_min: float) -> bool:
    # Overlap makes the separation negative; a gutter below g_min on the
    # separating axis (or both corner gaps) also violates.
    ox, oy = _pair_overlaps(a, b)
    return max(-ox, -oy) < g_min - _EDGE_TOL


def spacing_violations(layout: Layout, cfg: RuleConfig = RuleConfig()) -> int:
    """Count of overlapping / under-spaced subject pairs plus out-of-canvas
    visible components."""
    subjects = _rule_subjects(layout)
    count = 0
    for i in range(len(subjects)):
        for j in range(i + 1, len(subjects)):
            if _pair_violates(subjects[i], subjects[j], cfg.g_min):
                count += 1
    for c in layout.components:
        if not c.visible:
            continue
        if (
            c.left < -_EDGE_TOL
            or c.right > 1.0 + _EDGE_TOL
            or c.top < -_EDGE_TOL
            or c.bottom > 1.0 + _EDGE_TOL
        ):
            count += 1
    return count


def harmony(layout: Layout, cfg: RuleConfig = RuleConfig()) -> float:
    """exp(-mean pairwise circular hue distance / hue_sigma) over visible
    components with saturation above 0.1; fewer than two such gives 1.0."""
    hues = []
    for c in layout.components:
        if not c.visible:
            continue
        h, s, _ = colorsys.rgb_to_hsv(*c.color)
        if s > 0.1:
            hues.append(h * 360.0)
    if len(hues) < 2:
        return 1.0
    dists = []
    for i in range(len(hues)):
        for j in range(i + 1, len(hues)):
            d = abs(hues[i] - hues[j]) % 360.0
            dists.append(min(d, 360.0 - d))
    return math.exp(-float(np.mean(dists)) / cfg.hue_sigma)


def rule_report(layout: Layout, cfg: RuleConfig = RuleConfig()) -> RuleReport:
    return RuleReport(
        alignment_score=alignment_score(layout, cfg),
        spacing_violations=spacing_violations(layout, cfg),
        harmony=harmony(layout, cfg),
        penalty=penalty(encode(layout), cfg),
    )


# ---------------------------------------------------------------------------
# Smooth training penalty
# ---------------------------------------------------------------------------


def penalty_and_grad(x: np.ndarray, cfg: RuleConfig = RuleConfig()) -> tuple[float, np.ndarray]:
    """Smooth rule penalty on a tensor state and its analytic gradient.

    R = sum over slot pairs of gate_i * gate_j * (relu(ox) * relu(oy))^2
      + sum over slots of gate_i * squared out-of-canvas excursions,
    with geometry taken from the unclamped affine inverse of the tensor and
    each slot gated by a sigmoid-shaped smoothstep of its presence flag
    (exactly 0 at or below presence 0, exactly 1 at or above 1, so encoded
    rule-clean layouts score exactly zero). Colors and type logits do not
    contribute.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_MAX, FEAT_DIM):
        raise ValueError(f"expected shape {(N_MAX, FEAT_DIM)}, got {x.shape}")
    geom = (x[:, GEOM_SLICE] + 1.0) / 2.0
    cx, cy, w, h = geom[:, 0], geom[:, 1], geom[:, 2], geom[:, 3]
    left, right = cx - w / 2, cx + w / 2
    top, bottom = cy - h / 2, cy + h / 2
    u = np.clip(x[:, PRESENCE_COL], 0.0, 1.0)
    gate = u * u * (3.0 - 2.0 * u)
    dgate_dp = 6.0 * u * (1.0 - u)

    d_left = np.zeros(N_MAX)
    d_right = np.zeros(N_MAX)
    d_top = np.zeros(N_MAX)
    d_bottom = np.zeros(N_MAX)
    d_gate = np.zeros(N_MAX)
    total = 0.0

    ii, jj = np.triu_indices(N_MAX, k=1)
    ox = np.minimum(right[ii], right[jj]) - np.maximum(left[ii], left[jj])
    oy = np.minimum(bottom[ii], bottom[jj]) - np.maximum(top[ii], top[jj])
    rx, ry = np.maximum(ox, 0.0), np.maximum(oy, 0.0)
    area = rx * ry
    gg = gate[ii] * gate[jj]
    total += float(np.sum(gg * area**2))

    d_area = 2.0 * gg * area
    d_ox = d_area * ry * (ox > 0.0)
    d_oy = d_area * rx * (oy > 0.0)
    # min/max branch selection; ties attribute to the lower index.
    min_r_is_i = right[ii] <= right[jj]
    max_l_is_i = left[ii] >= left[jj]
    min_b_is_i = bottom[ii] <= bottom[jj]
    max_t_is_i = top[ii] >= top[jj]
    np.add.at(d_right, ii, d_ox * min_r_is_i)
    np.add.at(d_right, jj, d_ox * ~min_r_is_i)
    np.add.at(d_left, ii, -d_ox * max_l_is_i)
    np.add.at(d_left, jj, -d_ox * ~max_l_is_i)
    np.add.at(d_bottom, ii, d_oy * min_b_is_i)
    np.add.at(d_bottom, jj, d_oy * ~min_b_is_i)
    np.add.at(d_top, ii, -d_oy * max_t_is_i)
    np.add.at(d_top, jj, -d_oy * ~max_t_is_i)
    np.add.at(d_gate, ii, gate[jj] * area**2)
    np.add.at(d_gate, jj, gate[ii] * area**2)

    # Out-of-canvas excursions, squared and gated.
    exc_l = np.maximum(-left, 0.0)
    exc_r = np.maximum(right - 1.0, 0.0)
    exc_t = np.maximum(-top, 0.0)
    exc_b = np.maximum(bottom - 1.0, 0.0)
    total += float(np.sum(gate * (exc_l**2 + exc_r**2 + exc_t**2 + exc_b**2)))
    d_left += gate * 2.0 * exc_l * -1.0 * (exc_l > 0.0)
    d_right += gate * 2.0 * exc_r * (exc_r > 0.0)
    d_top += gate * 2.0 * exc_t * -1.0 * (exc_t > 0.0)
    d_bottom += gate * 2.0 * exc_b * (exc_b > 0.0)
    d_gate += exc_l**2 + exc_r**2 + exc_t**2 + exc_b**2

    grad = np.zeros_like(x)
    d_cx = d_left + d_right
    d_w = (d_right - d_left) / 2.0
    d_cy = d_top + d_bottom
    d_h = (d_bottom - d_top) / 2.0
    # Affine inverse contributes a factor 1/2 per continuous channel.
    grad[:, GEOM_SLICE] = np.stack([d_cx, d_cy, d_w, d_h], axis=1) / 2.0
    grad[:, PRESENCE_COL] = d_gate * dgate_dp
    return total, grad


def penalty(x: np.ndarray, cfg: RuleConfig = RuleConfig()) -> float:
    return penalty_and_grad(x, cfg)[0]


# ---------------------------------------------------------------------------
# Hard projection
# ---------------------------------------------------------------------------

# Edge families processed in fixed order; each snap translates the whole box.
_FAMILIES = (
    ("x", lambda c: c.left),
    ("x", lambda c: c.right),
    ("x", lambda c: c.cx),
    ("y", lambda c: c.top),
    ("y", lambda c: c.bottom),
    ("y", lambda c: c.cy),
)


def _clusters(values: list[float], radius: float) -> list[list[int]]:
    """Single-linkage 1-D clustering: split sorted values at gaps > radius."""
    order = sorted(range(len(values)), key=lambda k: values[k])
    groups: list[list[int]] = []
    for k in order:
        if groups and values[k] - values[groups[-1][-1]] <= radius:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def snap_edges(layout: Layout, cfg: RuleConfig = RuleConfig()) -> Layout:
    """Pass 1 of projection: snap each edge family to its cluster means."""
    comps = list(layout.components)
    idx = [
        k
        for k, c in enumerate(comps)
        if c.visible and c.ctype is not ComponentType.background
    ]
    if len(idx) < 2:
        return layout
    for axis, edge in _FAMILIES:
        values = [edge(comps[k]) for k in idx]
        for group in _clusters(values, cfg.tau_snap):
            if len(group) < 2:
                continue
            target = float(np.mean([values[g] for g in group]))
            for g in group:
                k = idx[g]
                shift = target - values[g]
                if axis == "x":
                    comps[k] = replace(comps[k], cx=comps[k].cx + shift)
                else:
                    comps[k] = replace(comps[k], cy=comps[k].cy + shift)
    return Layout(components=tuple(comps), canvas_px=layout.canvas_px)


def _resolve_overlaps(layout: Layout, cfg: RuleConfig) -> Layout:
    """Pass 2: for each violating pair in ascending index order, translate
    the higher-index component along the axis of minimal penetration until
    the gap equals g_min."""
    comps = list(layout.components)
    idx = [
        k
        for k, c in enumerate(comps)
        if c.visible and c.ctype is not ComponentType.background
    ]
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            i, j = idx[a], idx[b]
            ci, cj = comps[i], comps[j]
            if not _pair_violates(ci, cj, cfg.g_min):
                continue
            ox, oy = _pair_overlaps(ci, cj)
            move_x, move_y = ox + cfg.g_min, oy + cfg.g_min
            if move_x <= move_y:
                sign = 1.0 if cj.cx >= ci.cx else -1.0
                comps[j] = replace(cj, cx=cj.cx + sign * move_x)
            else:
                sign = 1.0 if cj.cy >= ci.cy else -1.0
                comps[j] = replace(cj, cy=cj.cy + sign * move_y)
    return Layout(components=tuple(comps), canvas_px=layout.canvas_px)


def _clamp_canvas(layout: Layout) -> Layout:
    """Pass 3: clamp every visible box into the unit canvas."""
    comps = []
    for c in layout.components:
        if c.visible:
            w, h = min(c.w, 1.0), min(c.h, 1.0)
            c = replace(
                c,
                w=w,
                h=h,
                cx=min(max(c.cx, w / 2), 1.0 - w / 2),
                cy=min(max(c.cy, h / 2), 1.0 - h / 2),
            )
        comps.append(c)
    return Layout(components=tuple(comps), canvas_px=layout.canvas_px)


def _max_shift(a: Layout, b: Layout) -> float:
    return max(
        (
            abs(u.cx - v.cx) + abs(u.cy - v.cy) + abs(u.w - v.w) + abs(u.h - v.h)
            for u, v in zip(a.components, b.components)
        ),
        default=0.0,
    )


def project(layout: Layout, cfg: RuleConfig = RuleConfig()) -> Layout:
    """Deterministic rule repair: snap, resolve overlaps, clamp.

    The three passes run in fixed order and the cycle is iterated to a
    fixed point, which makes the repair idempotent. If the cycle fails to
    converge, or the result would score worse than the input, the input is
    returned unchanged (still idempotent; violations never increase).
    """
    current = layout
    converged = False
    for _ in range(_MAX_REPAIR_CYCLES):
        candidate = _clamp_canvas(_resolve_overlaps(snap_edges(current, cfg), cfg))
        shift = _max_shift(candidate, current)
        current = candidate
        if shift < 1e-10:
            converged = True
            break
    if not converged:
        return layout
    if spacing_violations(current, cfg) > spacing_violations(layout, cfg):
        return layout
    return current

"""RICO-format ingestion, the seeded synthetic corpus, and dataset splits.

RICO documents are hierarchical bounding-box trees; only the leaf nodes
carry visual content, so ingestion flattens to leaves, maps class labels
through a versioned table, and keeps the largest N_MAX boxes.

The synthetic corpus is the default desk-scale training source: four
single-column screen templates (login form, vertical list, photo gallery,
toolbar with content) with shared-offset jitter so that every generated
layout is rule-clean by construction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .denoiser import SKETCH_SIDE, Condition, encode_condition
from .layout import N_MAX, Component, ComponentType, Layout
from .prng import make_rng

log = logging.getLogger("layoutforge.dataio")

CORPUS_FORMAT = "layoutforge-corpus"
CORPUS_VERSION = 1

# Fallback fill colors when a RICO node carries no color annotation.
TYPE_PALETTE = {
    ComponentType.background: (0.96, 0.96, 0.96),
    ComponentType.text: (0.15, 0.15, 0.20),
    ComponentType.image: (0.60, 0.70, 0.85),
    ComponentType.button: (0.25, 0.50, 0.90),
    ComponentType.input: (0.90, 0.92, 0.96),
    ComponentType.icon: (0.40, 0.45, 0.55),
    ComponentType.list_item: (0.85, 0.88, 0.92),
    ComponentType.other: (0.75, 0.75, 0.80),
}


def load_label_map() -> dict[str, str]:
    with resources.files("layoutforge.data").joinpath("rico_label_map.json").open() as fh:
        return json.load(fh)["labels"]


_LABEL_MAP: dict[str, str] | None = None


def _label_to_type(label: str) -> ComponentType:
    global _LABEL_MAP
    if _LABEL_MAP is None:
        _LABEL_MAP = load_label_map()
    name = _LABEL_MAP.get(label)
    if name is None:
        return ComponentType.other
    return ComponentType[name]


def _node_color(node: dict, ctype: ComponentType) -> tuple[float, float, float]:
    raw = node.get("color")
    if not (isinstance(raw, (list, tuple)) and len(raw) == 3):
        return TYPE_PALETTE[ctype]
    vals = [float(v) for v in raw]
    if any(v > 1.0 for v in vals):
        vals = [v / 255.0 for v in vals]
    return tuple(min(max(v, 0.0), 1.0) for v in vals)


def _collect_leaves(node, path: str, out: list) -> None:
    if not isinstance(node, dict):
        log.warning("dropping malformed node at %s: not an object", path)
        return
    bounds = node.get("bounds")
    ok = (
        isinstance(bounds, (list, tuple))
        and len(bounds) == 4
        and all(isinstance(v, (int, float)) for v in bounds)
        and bounds[0] <= bounds[2]
        and bounds[1] <= bounds[3]
    )
    if not ok:
        log.warning("dropping malformed node at %s: bad bounds %r", path, bounds)
        return
    children = node.get("children") or []
    if children:
        for i, child in enumerate(children):
            _collect_leaves(child, f"{path}.children[{i}]", out)
    else:
        out.append((node, path))


def parse_rico(doc, screen_px: tuple[int, int]) -> Layout:
    """Flatten a RICO-style hierarchy to a layout of its leaf boxes.

    Bounds are clipped to the screen and normalized; class labels map
    through the shipped table (unmapped labels become `other`); the
    N_MAX largest leaves are kept in document order.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed RICO JSON: {exc}") from exc
    sw, sh = float(screen_px[0]), float(screen_px[1])
    if sw <= 0 or sh <= 0:
        raise ValueError(f"screen size must be positive, got {screen_px}")

    leaves: list = []
    _collect_leaves(doc, "$", leaves)
    sized = []
    for order, (node, path) in enumerate(leaves):
        left, top, right, bottom = (float(v) for v in node["bounds"])
        left, right = max(left, 0.0), min(right, sw)
        top, bottom = max(top, 0.0), min(bottom, sh)
        w, h = (right - left) / sw, (bottom - top) / sh
        if w <= 0.0 or h <= 0.0:
            continue
        label = node.get("class_label") or node.get("componentLabel") or node.get("class") or ""
        ctype = _label_to_type(str(label))
        comp = Component(
            ctype=ctype,
            cx=(left + right) / (2 * sw),
            cy=(top + bottom) / (2 * sh),
            w=w,
            h=h,
            color=_node_color(node, ctype),
            visible=True,
        )
        sized.append((w * h, order, comp))

    keep = sorted(sized, key=lambda item: -item[0])[:N_MAX]
    keep.sort(key=lambda item: item[1])
    layout = Layout(components=tuple(comp for _, _, comp in keep))
    layout.validate()
    return layout


def sketch_from_layout(layout: Layout) -> np.ndarray:
    """Rasterize visible components to the 8x8 occupancy grid (row-major)."""
    grid = np.zeros((SKETCH_SIDE, SKETCH_SIDE), dtype=np.float64)
    centers = (np.arange(SKETCH_SIDE) + 0.5) / SKETCH_SIDE
    for c in layout.components:
        if not c.visible:
            continue
        col = (centers >= c.left) & (centers <= c.right)
        row = (centers >= c.top) & (centers <= c.bottom)
        grid[np.ix_(row, col)] = 1.0
    return grid


# ---------------------------------------------------------------------------
# Synthetic corpus templates
# ---------------------------------------------------------------------------

# Rows are (component type, nominal cy, nominal h); every template is a
# single centered column of equal-width components, which keeps the
# alignment score at 0.5 and the spacing violations at zero under the
# shared-offset jitter below.
_TEMPLATES: dict[str, dict] = {
    "login": {
        "keywords": "login form input button",
        "width": 0.60,
        "rows": (
            (ComponentType.icon, 0.13, 0.10),
            (ComponentType.text, 0.28, 0.06),
            (ComponentType.input, 0.415, 0.07),
            (ComponentType.input, 0.555, 0.07),
            (ComponentType.button, 0.70, 0.08),
        ),
        "palette": ((0.20, 0.40, 0.85), (0.55, 0.75, 0.95), (0.10, 0.60, 0.80)),
    },
    "list": {
        "keywords": "list item row vertical",
        "width": 0.90,
        "rows": tuple(
            (ComponentType.list_item, 0.14 + 0.15 * i, 0.08) for i in range(6)
        ),
        "palette": ((0.20, 0.65, 0.35), (0.70, 0.90, 0.75), (0.15, 0.50, 0.45)),
        "variable_rows": (4, 6),
    },
    "gallery": {
        "keywords": "gallery photo image grid",
        "width": 0.88,
        "rows": (
            (ComponentType.text, 0.055, 0.05),
            (ComponentType.image, 0.25, 0.20),
            (ComponentType.text, 0.4425, 0.045),
            (ComponentType.image, 0.635, 0.20),
            (ComponentType.text, 0.8275, 0.045),
        ),
        "palette": ((0.90, 0.45, 0.20), (0.95, 0.75, 0.50), (0.85, 0.30, 0.30)),
    },
    "toolbar": {
        "keywords": "toolbar content header bar",
        "width": 0.94,
        "rows": (
            (ComponentType.other, 0.065, 0.07),
            (ComponentType.list_item, 0.26, 0.18),
            (ComponentType.list_item, 0.51, 0.18),
            (ComponentType.list_item, 0.76, 0.18),
            (ComponentType.button, 0.94, 0.05),
        ),
        "palette": ((0.45, 0.25, 0.75), (0.75, 0.65, 0.90), (0.60, 0.35, 0.85)),
    },
}

TEMPLATE_NAMES = tuple(_TEMPLATES)


def sample_template(name: str, rng: np.random.Generator) -> tuple[Layout, Condition]:
    """Draw one jittered layout plus its paired condition from a template.

    Position jitter (within +/-0.02) is shared along each axis and size
    jitter (within +/-0.01) is shared across the column width, so the
    equal-width alignment structure survives exactly.
    """
    spec = _TEMPLATES[name]
    rows = spec["rows"]
    if "variable_rows" in spec:
        lo, hi = spec["variable_rows"]
        rows = rows[: int(rng.integers(lo, hi + 1))]
    dx = rng.uniform(-0.02, 0.02)
    dy = rng.uniform(-0.015, 0.015)
    dw = rng.uniform(-0.01, 0.01)
    palette = spec["palette"]
    comps = []
    for i, (ctype, cy, h) in enumerate(rows):
        base = palette[i % len(palette)]
        shade = rng.uniform(-0.03, 0.03)
        cy_jitter = rng.uniform(-0.01, 0.01)
        h_jitter = rng.uniform(-0.01, 0.01)
        comps.append(
            Component(
                ctype=ctype,
                cx=0.5 + dx,
                cy=cy + dy + cy_jitter,
                w=spec["width"] + dw,
                h=h + h_jitter,
                color=tuple(float(min(max(v + shade, 0.0), 1.0)) for v in base),
            )
        )
    layout = Layout(components=tuple(comps))
    condition = encode_condition(spec["keywords"], sketch_from_layout(layout))
    return layout, condition


@dataclass
class Corpus:
    """Dataset of (Layout, Condition) pairs with an optional train/val split."""

    items: list[tuple[Layout, Condition]]
    train_idx: list[int] = field(default_factory=list)
    val_idx: list[int] = field(default_factory=list)
    provenance: str = ""
    seed: int = 0

    def train_items(self) -> list[tuple[Layout, Condition]]:
        return [self.items[i] for i in self.train_idx]

    def val_items(self) -> list[tuple[Layout, Condition]]:
        return [self.items[i] for i in self.val_idx]


def synth_corpus(n: int, seed: int) -> Corpus:
    """Generate n template layouts with balanced template counts."""
    if n < 1:
        raise ValueError(f"corpus size must be >= 1, got {n}")
    rng = make_rng(seed)
    names = np.tile(np.arange(len(TEMPLATE_NAMES)), (n + 3) // 4)[:n]
    rng.shuffle(names)
    items = [sample_template(TEMPLATE_NAMES[k], rng) for k in names]
    return Corpus(items=items, provenance="synth:templates-v1", seed=seed)


def split(corpus: Corpus, ratio: float, seed: int) -> Corpus:
    """Seeded shuffle then prefix/suffix split into train and validation."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0,1), got {ratio}")
    n = len(corpus.items)
    n_train = int(round(ratio * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split of {n} items at ratio {ratio} leaves an empty side")
    order = make_rng(seed).permutation(n)
    return replace(
        corpus,
        train_idx=[int(i) for i in order[:n_train]],
        val_idx=[int(i) for i in order[n_train:]],
    )


# ---------------------------------------------------------------------------
# Corpus files: one header line, then one JSON item per line.
# ---------------------------------------------------------------------------


def save_corpus(corpus: Corpus, path: str) -> None:
    header = {
        "format": CORPUS_FORMAT,
        "version": CORPUS_VERSION,
        "provenance": corpus.provenance,
        "seed": corpus.seed,
        "n": len(corpus.items),
        "train_idx": corpus.train_idx,
        "val_idx": corpus.val_idx,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for layout, condition in corpus.items:
            line = {
                "layout": layout.to_json_dict(),
                "condition": condition.to_json_dict() if condition else None,
            }
            fh.write(json.dumps(line, separators=(",", ":")) + "\n")


def load_corpus(path: str) -> Corpus:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty corpus file")
    header = json.loads(lines[0])
    if header.get("format") != CORPUS_FORMAT:
        raise ValueError(f"{path}: not a {CORPUS_FORMAT} file")
    items = []
    for line in lines[1:]:
        doc = json.loads(line)
        condition = Condition.from_json_dict(doc["condition"]) if doc.get("condition") else None
        items.append((Layout.from_json_dict(doc["layout"]), condition))
    if len(items) != header.get("n"):
        raise ValueError(f"{path}: header declares {header.get('n')} items, found {len(items)}")
    return Corpus(
        items=items,
        train_idx=[int(i) for i in header.get("train_idx", [])],
        val_idx=[int(i) for i in header.get("val_idx", [])],
        provenance=header.get("provenance", ""),
        seed=int(header.get("seed", 0)),
    )


def load_rico_dir(path, screen_px: tuple[int, int]) -> Corpus:
    """Ingest a directory of RICO-style JSON files in sorted path order.

    Conditions are derived from each layout: the component type names that
    appear in the vocabulary become keywords, and the sketch is the layout's
    own occupancy grid.
    """
    from pathlib import Path

    from .denoiser import VOCAB_INDEX

    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ValueError(f"no .json files under {path}")
    items = []
    for fp in files:
        try:
            layout = parse_rico(fp.read_text(), screen_px)
        except ValueError as exc:
            raise ValueError(f"{fp}: {exc}") from exc
        words = []
        for comp in layout.components:
            token = comp.ctype.name.replace("_", " ").split()[0]
            if token in VOCAB_INDEX and token not in words:
                words.append(token)
        condition = encode_condition(" ".join(words), sketch_from_layout(layout))
        items.append((layout, condition))
    return Corpus(items=items, provenance=f"rico:{path}", seed=0)

"""Layout domain types, tensor encoding, and deterministic rasterization.

A layout is an ordered list of flat rectangular components on a unit canvas.
For diffusion it is packed into a fixed-shape tensor of N_MAX x FEAT_DIM
values in [-1, 1]: eight type logits, four geometry channels, three color
channels, and a presence flag per component slot.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

N_MAX = 16
FEAT_DIM = 16
NUM_TYPES = 8
W_MIN = 0.02
DEFAULT_CANVAS = (144, 256)

# Column layout of one tensor row: [type logits | cx cy w h | r g b | presence]
GEOM_SLICE = slice(8, 12)
COLOR_SLICE = slice(12, 15)
PRESENCE_COL = 15


class ComponentType(IntEnum):
    background = 0
    text = 1
    image = 2
    button = 3
    input = 4
    icon = 5
    list_item = 6
    other = 7


@dataclass(frozen=True)
class Component:
    """One flat UI component: type, centered box geometry, and fill color."""

    ctype: ComponentType
    cx: float
    cy: float
    w: float
    h: float
    color: tuple[float, float, float]
    visible: bool = True

    def validate(self) -> None:
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"center out of range: ({self.cx}, {self.cy})")
        if self.visible and not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"visible component needs 0 < w,h <= 1, got ({self.w}, {self.h})")
        if any(not (0.0 <= c <= 1.0) for c in self.color):
            raise ValueError(f"color channels must lie in [0,1]: {self.color}")

    @property
    def left(self) -> float:
        return self.cx - self.w / 2

    @property
    def right(self) -> float:
        return self.cx + self.w / 2

    @property
    def top(self) -> float:
        return self.cy - self.h / 2

    @property
    def bottom(self) -> float:
        return self.cy + self.h / 2


@dataclass(frozen=True)
class Layout:
    """Ordered component list; later components overdraw earlier ones."""

    components: tuple[Component, ...] = ()
    canvas_px: tuple[int, int] = DEFAULT_CANVAS

    def validate(self) -> None:
        if len(self.components) > N_MAX:
            raise ValueError(f"at most {N_MAX} components, got {len(self.components)}")
        for comp in self.components:
            comp.validate()

    def visible_components(self) -> list[Component]:
        return [c for c in self.components if c.visible]

    def to_json_dict(self) -> dict:
        return {
            "canvas": [self.canvas_px[0], self.canvas_px[1]],
            "components": [
                {
                    "type": c.ctype.name,
                    "cx": c.cx,
                    "cy": c.cy,
                    "w": c.w,
                    "h": c.h,
                    "color": [c.color[0], c.color[1], c.color[2]],
                    "visible": c.visible,
                }
                for c in self.components
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))

    @staticmethod
    def from_json_dict(doc: dict) -> "Layout":
        canvas = doc.get("canvas", list(DEFAULT_CANVAS))
        comps = []
        for entry in doc.get("components", []):
            comps.append(
                Component(
                    ctype=ComponentType[entry["type"]],
                    cx=float(entry["cx"]),
                    cy=float(entry["cy"]),
                    w=float(entry["w"]),
                    h=float(entry["h"]),
                    color=tuple(float(v) for v in entry["color"]),
                    visible=bool(entry.get("visible", True)),
                )
            )
        layout = Layout(components=tuple(comps), canvas_px=(int(canvas[0]), int(canvas[1])))
        layout.validate()
        return layout

    @staticmethod
    def from_json(text: str) -> "Layout":
        return Layout.from_json_dict(json.loads(text))


def encode(layout: Layout) -> np.ndarray:
    """Pack a layout into the (N_MAX, FEAT_DIM) diffusion state in [-1, 1].

    Continuous fields map affinely from [0,1] to [-1,1]; the component type
    becomes a +1/-1 one-hot over the logit block; unused slots carry
    presence -1 and zeros elsewhere.
    """
    layout.validate()
    x = np.zeros((N_MAX, FEAT_DIM), dtype=np.float64)
    x[:, PRESENCE_COL] = -1.0
    for i, comp in enumerate(layout.components):
        x[i, :NUM_TYPES] = -1.0
        x[i, int(comp.ctype)] = 1.0
        x[i, GEOM_SLICE] = np.array([comp.cx, comp.cy, comp.w, comp.h]) * 2.0 - 1.0
        x[i, COLOR_SLICE] = np.asarray(comp.color) * 2.0 - 1.0
        x[i, PRESENCE_COL] = 1.0 if comp.visible else -1.0
    return x


def decode(tensor: np.ndarray, canvas_px: tuple[int, int] = DEFAULT_CANVAS) -> Layout:
    """Invert :func:`encode`, tolerating out-of-range values from sampling.

    Entries are clamped to [-1,1] before the affine inverse; type is the
    argmax over logits (ties to the lowest class id); a slot yields a
    component only when its presence flag is strictly positive, and visible
    sizes are floored at W_MIN.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.shape != (N_MAX, FEAT_DIM):
        raise ValueError(f"expected shape {(N_MAX, FEAT_DIM)}, got {tensor.shape}")
    clamped = np.clip(tensor, -1.0, 1.0)
    comps = []
    for i in range(N_MAX):
        if tensor[i, PRESENCE_COL] <= 0.0:
            continue
        ctype = ComponentType(int(np.argmax(clamped[i, :NUM_TYPES])))
        cx, cy, w, h = (clamped[i, GEOM_SLICE] + 1.0) / 2.0
        r, g, b = (clamped[i, COLOR_SLICE] + 1.0) / 2.0
        comps.append(
            Component(
                ctype=ctype,
                cx=float(cx),
                cy=float(cy),
                w=float(max(w, W_MIN)),
                h=float(max(h, W_MIN)),
                color=(float(r), float(g), float(b)),
                visible=True,
            )
        )
    return Layout(components=tuple(comps), canvas_px=canvas_px)


def rasterize(layout: Layout) -> np.ndarray:
    """Paint the layout onto a white (H, W, 3) float canvas in [0,1].

    A pixel takes the color of the last visible component whose rectangle
    contains the pixel center. Pure function: equal layouts give
    byte-identical rasters.
    """
    width, height = layout.canvas_px
    img = np.ones((height, width, 3), dtype=np.float64)
    xs = (np.arange(width) + 0.5) / width
    ys = (np.arange(height) + 0.5) / height
    for comp in layout.components:
        if not comp.visible or comp.w <= 0.0 or comp.h <= 0.0:
            continue
        mask_x = (xs >= comp.left) & (xs <= comp.right)
        mask_y = (ys >= comp.top) & (ys <= comp.bottom)
        if not mask_x.any() or not mask_y.any():
            continue
        img[np.ix_(mask_y, mask_x)] = comp.color
    return img


def raster_to_bytes(img: np.ndarray) -> np.ndarray:
    """Quantize a float raster to 8-bit channels via round(255 * v)."""
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_ppm(img: np.ndarray, path: str) -> None:
    """Write a raster as binary PPM (P6, 8-bit)."""
    data = raster_to_bytes(img)
    h, w, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def png_bytes(img: np.ndarray) -> bytes:
    """Encode a raster as a minimal RGB PNG (deterministic bytes)."""
    data = raster_to_bytes(img)
    h, w, _ = data.shape
    raw = b"".join(b"\x00" + data[y].tobytes() for y in range(h))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )


def write_png(img: np.ndarray, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(png_bytes(img))

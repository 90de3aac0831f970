import json
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutforge.layout import (
    FEAT_DIM,
    N_MAX,
    PRESENCE_COL,
    Component,
    ComponentType,
    Layout,
    decode,
    encode,
    png_bytes,
    rasterize,
    raster_to_bytes,
    write_ppm,
)

from conftest import random_layout
from layoutforge.prng import make_rng


def comp(ctype=ComponentType.button, cx=0.5, cy=0.5, w=0.2, h=0.1, color=(0.2, 0.4, 0.9), visible=True):
    return Component(ctype=ctype, cx=cx, cy=cy, w=w, h=h, color=color, visible=visible)


class TestComponentTypes:
    def test_eight_classes_with_stable_ids(self):
        assert len(ComponentType) == 8
        assert [t.value for t in ComponentType] == list(range(8))
        assert ComponentType.background == 0
        assert ComponentType.button == 3
        assert ComponentType.other == 7


class TestEncode:
    def test_empty_layout_all_absent(self):
        x = encode(Layout())
        assert x.shape == (N_MAX, FEAT_DIM)
        assert np.all(x[:, PRESENCE_COL] == -1.0)
        assert np.all(x[:, :PRESENCE_COL] == 0.0)

    def test_single_button_affine_map(self):
        x = encode(Layout(components=(comp(cx=0.5),)))
        assert x[0, PRESENCE_COL] == 1.0
        assert x[0, 8] == 0.0  # 2*0.5 - 1
        assert x[0, int(ComponentType.button)] == 1.0
        assert np.all(x[0, :8][np.arange(8) != 3] == -1.0)

    def test_rejects_too_many_components(self):
        big = Layout(components=tuple(comp() for _ in range(N_MAX + 1)))
        with pytest.raises(ValueError):
            encode(big)

    def test_output_in_unit_box(self):
        rng = make_rng(3)
        for _ in range(50):
            x = encode(random_layout(rng))
            assert np.all(x >= -1.0) and np.all(x <= 1.0)


class TestDecode:
    def test_all_zeros_is_empty(self):
        assert decode(np.zeros((N_MAX, FEAT_DIM))).components == ()

    def test_argmax_tie_breaks_to_lowest_id(self):
        x = np.zeros((N_MAX, FEAT_DIM))
        x[0, PRESENCE_COL] = 1.0
        x[0, int(ComponentType.button)] = 1.0
        x[0, int(ComponentType.background)] = 1.0
        x[0, 10] = -0.9  # keep width above the floor path irrelevant
        assert decode(x).components[0].ctype is ComponentType.background

    def test_out_of_range_clamped(self):
        x = encode(Layout(components=(comp(),)))
        x[0, 8] = 1.7
        assert decode(x).components[0].cx == 1.0

    def test_minimum_visible_size(self):
        x = encode(Layout(components=(comp(),)))
        x[0, 10] = -1.0
        x[0, 11] = -0.999
        out = decode(x).components[0]
        assert out.w == 0.02 and out.h == 0.02

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            decode(np.zeros((4, 4)))

    def test_round_trip_seeded(self):
        rng = make_rng(8)
        for _ in range(100):
            layout = random_layout(rng)
            back = decode(encode(layout))
            assert len(back.components) == len(layout.components)
            for a, b in zip(back.components, layout.components):
                assert a.ctype is b.ctype and a.visible == b.visible
                for fa, fb in [(a.cx, b.cx), (a.cy, b.cy), (a.w, b.w), (a.h, b.h)]:
                    assert abs(fa - fb) < 1e-6
                assert max(abs(u - v) for u, v in zip(a.color, b.color)) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, seed):
        layout = random_layout(make_rng(seed))
        back = decode(encode(layout))
        assert len(back.components) == len(layout.components)
        for a, b in zip(back.components, layout.components):
            assert a.ctype is b.ctype
            assert abs(a.cx - b.cx) < 1e-6 and abs(a.w - b.w) < 1e-6


class TestRasterize:
    def test_empty_is_white(self):
        img = rasterize(Layout())
        assert img.shape == (256, 144, 3)
        assert np.all(img == 1.0)

    def test_full_cover(self):
        layout = Layout(components=(comp(ctype=ComponentType.background, cx=0.5, cy=0.5, w=1.0, h=1.0, color=(1.0, 0.0, 0.0)),))
        assert np.all(rasterize(layout) == (1.0, 0.0, 0.0))

    def test_draw_order_overdraw(self):
        red = comp(cx=0.5, cy=0.5, w=1.0, h=1.0, color=(1.0, 0.0, 0.0))
        blue = comp(cx=0.5, cy=0.5, w=1.0, h=1.0, color=(0.0, 0.0, 1.0))
        assert np.all(rasterize(Layout(components=(red, blue))) == (0.0, 0.0, 1.0))

    def test_deterministic_bytes(self):
        rng = make_rng(4)
        layout = random_layout(rng)
        assert rasterize(layout).tobytes() == rasterize(layout).tobytes()

    def test_zero_area_paints_nothing(self):
        layout = Layout(components=(comp(w=0.5, h=0.5, visible=False),))
        assert np.all(rasterize(layout) == 1.0)

    def test_pixel_coverage_matches_bruteforce(self):
        rng = make_rng(5)
        layout = random_layout(rng, max_components=6)
        img = rasterize(layout)
        w_px, h_px = layout.canvas_px
        for yi in range(0, h_px, 37):
            for xi in range(0, w_px, 29):
                px, py = (xi + 0.5) / w_px, (yi + 0.5) / h_px
                expected = (1.0, 1.0, 1.0)
                for c in layout.components:
                    if c.visible and c.w > 0 and c.h > 0 and c.left <= px <= c.right and c.top <= py <= c.bottom:
                        expected = c.color
                assert tuple(img[yi, xi]) == pytest.approx(expected)


class TestSerialization:
    def test_json_round_trip(self):
        rng = make_rng(6)
        layout = random_layout(rng)
        back = Layout.from_json(layout.to_json())
        assert back.to_json() == layout.to_json()

    def test_canonical_shape(self):
        doc = json.loads(Layout(components=(comp(),)).to_json())
        assert doc["canvas"] == [144, 256]
        entry = doc["components"][0]
        assert list(entry.keys()) == ["type", "cx", "cy", "w", "h", "color", "visible"]
        assert entry["type"] == "button"

    def test_ppm_bytes(self, tmp_path):
        layout = Layout(components=(comp(ctype=ComponentType.background, cx=0.5, cy=0.5, w=1.0, h=1.0, color=(0.0, 0.0, 1.0)),))
        path = tmp_path / "out.ppm"
        write_ppm(rasterize(layout), str(path))
        data = path.read_bytes()
        assert data.startswith(b"P6\n144 256\n255\n")
        body = data.split(b"\n", 3)[3]
        assert len(body) == 144 * 256 * 3
        assert body[:3] == bytes([0, 0, 255])

    def test_png_scanlines_round_trip(self):
        layout = Layout(components=(comp(color=(0.2, 0.4, 0.9)),))
        img = rasterize(layout)
        blob = png_bytes(img)
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"
        # walk the chunks and reassemble the raw scanlines
        pos, idat = 8, b""
        while pos < len(blob):
            (length,) = struct.unpack(">I", blob[pos : pos + 4])
            tag = blob[pos + 4 : pos + 8]
            payload = blob[pos + 8 : pos + 8 + length]
            if tag == b"IDAT":
                idat += payload
            pos += 12 + length
        raw = zlib.decompress(idat)
        expected = raster_to_bytes(img)
        h, w, _ = expected.shape
        assert len(raw) == h * (1 + w * 3)
        for y in range(0, h, 64):
            row = raw[y * (1 + w * 3) : (y + 1) * (1 + w * 3)]
            assert row[0] == 0
            assert row[1:] == expected[y].tobytes()

    def test_quantization_rule(self):
        img = np.full((2, 2, 3), 0.5)
        assert np.all(raster_to_bytes(img) == round(255 * 0.5))

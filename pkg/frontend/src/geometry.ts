import type { ComponentJson, LayoutJson } from "./types.js";

export interface ViewRect {
  x: number;
  y: number;
  w: number;
  h: number;
  index: number;
  component: ComponentJson;
}

// Canvas-normalized [0,1] coordinates to viewport pixels, preserving
// component order (later entries draw on top).
export function layoutToRects(layout: LayoutJson, viewW: number, viewH: number): ViewRect[] {
  const rects: ViewRect[] = [];
  layout.components.forEach((c, index) => {
    if (!c.visible) return;
    rects.push({
      x: (c.cx - c.w / 2) * viewW,
      y: (c.cy - c.h / 2) * viewH,
      w: c.w * viewW,
      h: c.h * viewH,
      index,
      component: c,
    });
  });
  return rects;
}

// Topmost visible component whose rectangle contains the point, or -1.
export function hitTest(layout: LayoutJson, px: number, py: number, viewW: number, viewH: number): number {
  const rects = layoutToRects(layout, viewW, viewH);
  for (let i = rects.length - 1; i >= 0; i--) {
    const r = rects[i];
    if (px >= r.x && px <= r.x + r.w && py >= r.y && py <= r.y + r.h) {
      return r.index;
    }
  }
  return -1;
}

export function cssColor([r, g, b]: [number, number, number]): string {
  const to255 = (v: number) => Math.round(Math.min(Math.max(v, 0), 1) * 255);
  return `rgb(${to255(r)}, ${to255(g)}, ${to255(b)})`;
}

// Viewport pixel delta applied to a component's center, clamped so the
// box stays inside the unit canvas.
export function movedComponent(
  c: ComponentJson,
  dxPx: number,
  dyPx: number,
  viewW: number,
  viewH: number,
): ComponentJson {
  const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
  return {
    ...c,
    cx: clamp(c.cx + dxPx / viewW, c.w / 2, 1 - c.w / 2),
    cy: clamp(c.cy + dyPx / viewH, c.h / 2, 1 - c.h / 2),
  };
}

export function resizedComponent(
  c: ComponentJson,
  dwPx: number,
  dhPx: number,
  viewW: number,
  viewH: number,
): ComponentJson {
  const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
  const w = clamp(c.w + dwPx / viewW, 0.02, 1);
  const h = clamp(c.h + dhPx / viewH, 0.02, 1);
  return {
    ...c,
    w,
    h,
    cx: clamp(c.cx, w / 2, 1 - w / 2),
    cy: clamp(c.cy, h / 2, 1 - h / 2),
  };
}

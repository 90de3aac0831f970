import { cssColor, hitTest, layoutToRects } from "./geometry.js";
import type { LayoutJson } from "./types.js";

export interface CanvasCallbacks {
  onSelect(index: number): void;
  onDrag(index: number, mode: "move" | "resize", dxPx: number, dyPx: number): void;
  onDragEnd(index: number): void;
}

const HANDLE_PX = 10;

// Draws the layout as flat rectangles in list order; pinned components get a
// dashed outline, the selected one a solid accent outline with a resize
// handle. Pointer gestures become select / drag / drag-end callbacks; the
// controller owns what a drag means.
export class LayoutCanvas {
  private drag: { index: number; mode: "move" | "resize"; lastX: number; lastY: number } | null =
    null;
  private lastLayout: LayoutJson | null = null;
  private lastSelected = -1;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly callbacks: CanvasCallbacks,
  ) {
    canvas.addEventListener("pointerdown", (ev) => this.pointerDown(ev));
    canvas.addEventListener("pointermove", (ev) => this.pointerMove(ev));
    canvas.addEventListener("pointerup", (ev) => this.pointerUp(ev));
  }

  render(layout: LayoutJson | null, pinned: Set<number>, selected: number): void {
    this.lastLayout = layout;
    this.lastSelected = selected;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(0, 0, width, height);
    if (!layout) return;
    for (const rect of layoutToRects(layout, width, height)) {
      ctx.fillStyle = cssColor(rect.component.color);
      ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
      if (pinned.has(rect.index)) {
        ctx.setLineDash([5, 3]);
        ctx.lineWidth = 2;
        ctx.strokeStyle = "#d97706";
        ctx.strokeRect(rect.x + 1, rect.y + 1, rect.w - 2, rect.h - 2);
        ctx.setLineDash([]);
      }
      if (rect.index === selected) {
        ctx.lineWidth = 2;
        ctx.strokeStyle = "#2563eb";
        ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
        ctx.fillStyle = "#2563eb";
        ctx.fillRect(
          rect.x + rect.w - HANDLE_PX / 2,
          rect.y + rect.h - HANDLE_PX / 2,
          HANDLE_PX,
          HANDLE_PX,
        );
      }
    }
  }

  private localPoint(ev: PointerEvent): { x: number; y: number } {
    const bounds = this.canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - bounds.left) / bounds.width) * this.canvas.width,
      y: ((ev.clientY - bounds.top) / bounds.height) * this.canvas.height,
    };
  }

  private pointerDown(ev: PointerEvent): void {
    const layout = this.lastLayout;
    if (!layout) return;
    const { x, y } = this.localPoint(ev);
    if (this.lastSelected >= 0) {
      const rect = layoutToRects(layout, this.canvas.width, this.canvas.height).find(
        (r) => r.index === this.lastSelected,
      );
      if (
        rect &&
        Math.abs(x - (rect.x + rect.w)) <= HANDLE_PX &&
        Math.abs(y - (rect.y + rect.h)) <= HANDLE_PX
      ) {
        this.drag = { index: this.lastSelected, mode: "resize", lastX: x, lastY: y };
        this.canvas.setPointerCapture(ev.pointerId);
        return;
      }
    }
    const hit = hitTest(layout, x, y, this.canvas.width, this.canvas.height);
    this.callbacks.onSelect(hit);
    if (hit >= 0) {
      this.drag = { index: hit, mode: "move", lastX: x, lastY: y };
      this.canvas.setPointerCapture(ev.pointerId);
    }
  }

  private pointerMove(ev: PointerEvent): void {
    if (!this.drag) return;
    const { x, y } = this.localPoint(ev);
    this.callbacks.onDrag(this.drag.index, this.drag.mode, x - this.drag.lastX, y - this.drag.lastY);
    this.drag.lastX = x;
    this.drag.lastY = y;
  }

  private pointerUp(ev: PointerEvent): void {
    if (!this.drag) return;
    this.canvas.releasePointerCapture(ev.pointerId);
    const index = this.drag.index;
    this.drag = null;
    this.callbacks.onDragEnd(index);
  }
}

import { SKETCH_SIDE } from "./types.js";

// 8x8 occupancy brush: cells map row-major onto the condition vector, the
// same grid the model was trained on.
export class SketchGrid {
  private painting = false;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly cells: number[],
    private readonly onPaint: (row: number, col: number, value: number) => void,
  ) {
    canvas.addEventListener("pointerdown", (ev) => {
      this.painting = true;
      this.paintAt(ev);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (this.painting) this.paintAt(ev);
    });
    canvas.addEventListener("pointerup", () => {
      this.painting = false;
    });
    canvas.addEventListener("pointerleave", () => {
      this.painting = false;
    });
  }

  brushValue = 1.0;

  private paintAt(ev: PointerEvent): void {
    const bounds = this.canvas.getBoundingClientRect();
    const col = Math.floor(((ev.clientX - bounds.left) / bounds.width) * SKETCH_SIDE);
    const row = Math.floor(((ev.clientY - bounds.top) / bounds.height) * SKETCH_SIDE);
    if (row < 0 || row >= SKETCH_SIDE || col < 0 || col >= SKETCH_SIDE) return;
    this.onPaint(row, col, ev.shiftKey ? 0 : this.brushValue);
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const cell = this.canvas.width / SKETCH_SIDE;
    for (let row = 0; row < SKETCH_SIDE; row++) {
      for (let col = 0; col < SKETCH_SIDE; col++) {
        const v = this.cells[row * SKETCH_SIDE + col];
        const shade = Math.round(255 - v * 200);
        ctx.fillStyle = `rgb(${shade}, ${shade}, ${shade})`;
        ctx.fillRect(col * cell, row * cell, cell, cell);
        ctx.strokeStyle = "#cbd5e1";
        ctx.strokeRect(col * cell + 0.5, row * cell + 0.5, cell - 1, cell - 1);
      }
    }
  }
}

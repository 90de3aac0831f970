import type { ComponentJson, GenerateRequest, LayoutJson, RefineRequest } from "./types.js";
import { SKETCH_CELLS } from "./types.js";

export interface Snapshot {
  layoutText: string | null;
  pinned: number[];
}

// Layouts are stored as the JSON text captured when a server response (or a
// deliberate local edit) arrived, so history restores byte-equal state and
// the renderer can never invent layout data of its own.
export class SessionState {
  layoutText: string | null = null;
  pinned = new Set<number>();
  prompt = "";
  sketch: number[] = new Array(SKETCH_CELLS).fill(0);
  seed = 0;
  tStart: number | null = null;
  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];

  layout(): LayoutJson | null {
    return this.layoutText === null ? null : (JSON.parse(this.layoutText) as LayoutJson);
  }

  componentCount(): number {
    const layout = this.layout();
    return layout ? layout.components.length : 0;
  }

  private snapshot(): Snapshot {
    return { layoutText: this.layoutText, pinned: [...this.pinned].sort((a, b) => a - b) };
  }

  private restore(snap: Snapshot): void {
    this.layoutText = snap.layoutText;
    this.pinned = new Set(snap.pinned);
  }

  private pushHistory(): void {
    this.undoStack.push(this.snapshot());
    this.redoStack = [];
  }

  // Swap in a layout received from the server; the old state becomes an
  // undo entry and pins survive where their indices remain valid. A
  // malformed layout throws before any state changes, so the previous
  // render is retained.
  applyServerLayout(layout: LayoutJson): void {
    if (!layout || !Array.isArray(layout.components) || !Array.isArray(layout.canvas)) {
      throw new Error("malformed layout in server response");
    }
    this.pushHistory();
    this.layoutText = JSON.stringify(layout);
    const count = layout.components.length;
    this.pinned = new Set([...this.pinned].filter((i) => i < count));
  }

  // Direct-manipulation edit: replace one component locally and pin it so a
  // later refine preserves the user's change exactly.
  applyLocalEdit(index: number, edited: ComponentJson): void {
    const layout = this.layout();
    if (!layout || index < 0 || index >= layout.components.length) {
      throw new Error(`no component at index ${index}`);
    }
    this.pushHistory();
    layout.components[index] = edited;
    this.layoutText = JSON.stringify(layout);
    this.pinned.add(index);
  }

  addComponent(component: ComponentJson): number {
    const layout = this.layout();
    if (!layout) throw new Error("no layout to add to");
    if (layout.components.length >= 16) throw new Error("layout is full (16 components)");
    this.pushHistory();
    layout.components.push(component);
    this.layoutText = JSON.stringify(layout);
    const index = layout.components.length - 1;
    this.pinned.add(index);
    return index;
  }

  togglePin(index: number): void {
    if (index < 0 || index >= this.componentCount()) return;
    if (this.pinned.has(index)) this.pinned.delete(index);
    else this.pinned.add(index);
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.redoStack.push(this.snapshot());
    this.restore(prev);
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (next === undefined) return false;
    this.undoStack.push(this.snapshot());
    this.restore(next);
    return true;
  }

  paintSketch(row: number, col: number, value: number): void {
    if (row < 0 || row >= 8 || col < 0 || col >= 8) return;
    this.sketch[row * 8 + col] = Math.min(Math.max(value, 0), 1);
  }

  clearSketch(): void {
    this.sketch.fill(0);
  }

  sketchIsEmpty(): boolean {
    return this.sketch.every((v) => v === 0);
  }

  buildGenerateRequest(): GenerateRequest {
    const req: GenerateRequest = { prompt: this.prompt, seed: this.seed };
    if (!this.sketchIsEmpty()) req.sketch = [...this.sketch];
    return req;
  }

  buildRefineRequest(): RefineRequest {
    const layout = this.layout();
    if (!layout) throw new Error("nothing to refine yet");
    const req: RefineRequest = {
      layout,
      pinned: [...this.pinned].sort((a, b) => a - b),
      seed: this.seed,
    };
    if (this.prompt) req.prompt = this.prompt;
    if (!this.sketchIsEmpty()) req.sketch = [...this.sketch];
    if (this.tStart !== null) req.t_start = this.tStart;
    return req;
  }
}

import { FieldError, HttpTransport, NetworkError, StudioClient } from "./api.js";
import { LayoutCanvas } from "./canvas.js";
import { movedComponent, resizedComponent } from "./geometry.js";
import { SessionState } from "./state.js";
import { SketchGrid } from "./sketch.js";
import type { ComponentJson, GenerateResponse, RuleReportJson } from "./types.js";

const TYPES = ["background", "text", "image", "button", "input", "icon", "list_item", "other"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class StudioController {
  private readonly state = new SessionState();
  private readonly client = new StudioClient(new HttpTransport());
  private readonly layoutCanvas: LayoutCanvas;
  private readonly sketchGrid: SketchGrid;
  private selected = -1;
  private busy = false;
  private pendingEdit: ComponentJson | null = null;
  private lastAction: (() => Promise<void>) | null = null;

  constructor() {
    this.layoutCanvas = new LayoutCanvas(el<HTMLCanvasElement>("layout-canvas"), {
      onSelect: (index) => {
        this.selected = index;
        this.render();
      },
      onDrag: (index, mode, dx, dy) => this.previewDrag(index, mode, dx, dy),
      onDragEnd: (index) => this.commitDrag(index),
    });
    this.sketchGrid = new SketchGrid(
      el<HTMLCanvasElement>("sketch-canvas"),
      this.state.sketch,
      (row, col, value) => this.state.paintSketch(row, col, value),
    );

    el<HTMLButtonElement>("btn-generate").onclick = () => this.run(() => this.generate());
    el<HTMLButtonElement>("btn-refine").onclick = () => this.run(() => this.refine());
    el<HTMLButtonElement>("btn-undo").onclick = () => {
      if (this.state.undo()) this.afterHistoryJump();
    };
    el<HTMLButtonElement>("btn-redo").onclick = () => {
      if (this.state.redo()) this.afterHistoryJump();
    };
    el<HTMLButtonElement>("btn-clear-sketch").onclick = () => {
      this.state.clearSketch();
      this.sketchGrid.render();
    };
    el<HTMLButtonElement>("btn-pin").onclick = () => {
      if (this.selected >= 0) {
        this.state.togglePin(this.selected);
        this.render();
      }
    };
    el<HTMLButtonElement>("btn-add").onclick = () => this.addComponent();
    el<HTMLButtonElement>("btn-retry").onclick = () => {
      if (this.lastAction) this.run(this.lastAction);
    };
    el<HTMLInputElement>("prompt").oninput = (ev) => {
      this.state.prompt = (ev.target as HTMLInputElement).value;
    };
    el<HTMLInputElement>("seed").oninput = (ev) => {
      this.state.seed = Math.trunc(Number((ev.target as HTMLInputElement).value)) || 0;
    };
    el<HTMLInputElement>("comp-color").oninput = (ev) => this.recolor((ev.target as HTMLInputElement).value);
    el<HTMLSelectElement>("comp-type").onchange = (ev) => this.retype((ev.target as HTMLSelectElement).value);

    const typeSelect = el<HTMLSelectElement>("comp-type");
    for (const name of TYPES) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      typeSelect.appendChild(opt);
    }

    this.client
      .vocab()
      .then((v) => {
        el<HTMLElement>("vocab").textContent = v.vocab.join(" ");
      })
      .catch(() => {
        el<HTMLElement>("vocab").textContent = "(vocabulary unavailable)";
      });

    this.sketchGrid.render();
    this.render();
  }

  private async run(action: () => Promise<void>): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    this.lastAction = action;
    this.setBanner("");
    this.setControlsEnabled(false);
    try {
      await action();
      el<HTMLButtonElement>("btn-retry").hidden = true;
    } catch (err) {
      if (err instanceof FieldError) {
        this.setBanner(`rejected: ${err.message}${err.field ? ` (field ${err.field})` : ""}`);
        el<HTMLButtonElement>("btn-retry").hidden = true;
      } else if (err instanceof NetworkError) {
        this.setBanner("network failure; state unchanged");
        el<HTMLButtonElement>("btn-retry").hidden = false;
      } else {
        this.setBanner(String(err));
      }
    } finally {
      this.busy = false;
      this.setControlsEnabled(true);
      this.render();
    }
  }

  private async generate(): Promise<void> {
    const resp = await this.client.generate(this.state.buildGenerateRequest());
    this.applyResponse(resp);
  }

  private async refine(): Promise<void> {
    const resp = await this.client.refine(this.state.buildRefineRequest());
    this.applyResponse(resp);
  }

  private applyResponse(resp: GenerateResponse): void {
    this.state.applyServerLayout(resp.layout);
    this.selected = -1;
    el<HTMLElement>("model-version").textContent = resp.model_version;
    el<HTMLElement>("sample-time").textContent = `${resp.sample_time_ms.toFixed(0)} ms`;
    this.showRuleReport(resp.rule_report);
  }

  private showRuleReport(report: RuleReportJson): void {
    el<HTMLElement>("rule-report").textContent =
      `alignment ${report.alignment_score.toFixed(2)} | ` +
      `violations ${report.spacing_violations} | ` +
      `harmony ${report.harmony.toFixed(2)}`;
  }

  private previewDrag(index: number, mode: "move" | "resize", dx: number, dy: number): void {
    const layout = this.state.layout();
    if (!layout) return;
    const canvas = el<HTMLCanvasElement>("layout-canvas");
    const current = this.pendingEdit ?? layout.components[index];
    this.pendingEdit =
      mode === "move"
        ? movedComponent(current, dx, dy, canvas.width, canvas.height)
        : resizedComponent(current, dx, dy, canvas.width, canvas.height);
    layout.components[index] = this.pendingEdit;
    this.layoutCanvas.render(layout, this.state.pinned, this.selected);
  }

  private commitDrag(index: number): void {
    if (!this.pendingEdit) return;
    this.state.applyLocalEdit(index, this.pendingEdit);
    this.pendingEdit = null;
    this.render();
  }

  private recolor(hex: string): void {
    if (this.selected < 0) return;
    const layout = this.state.layout();
    if (!layout) return;
    const rgb: [number, number, number] = [
      parseInt(hex.slice(1, 3), 16) / 255,
      parseInt(hex.slice(3, 5), 16) / 255,
      parseInt(hex.slice(5, 7), 16) / 255,
    ];
    this.state.applyLocalEdit(this.selected, { ...layout.components[this.selected], color: rgb });
    this.render();
  }

  private retype(type: string): void {
    if (this.selected < 0) return;
    const layout = this.state.layout();
    if (!layout) return;
    this.state.applyLocalEdit(this.selected, { ...layout.components[this.selected], type });
    this.render();
  }

  private addComponent(): void {
    if (!this.state.layout()) {
      this.setBanner("generate a layout first");
      return;
    }
    try {
      this.selected = this.state.addComponent({
        type: "button",
        cx: 0.5,
        cy: 0.5,
        w: 0.3,
        h: 0.08,
        color: [0.25, 0.5, 0.9],
        visible: true,
      });
    } catch (err) {
      this.setBanner(String(err));
    }
    this.render();
  }

  private afterHistoryJump(): void {
    this.selected = -1;
    this.pendingEdit = null;
    this.render();
  }

  private setBanner(text: string): void {
    const banner = el<HTMLElement>("banner");
    banner.textContent = text;
    banner.hidden = text === "";
  }

  private setControlsEnabled(enabled: boolean): void {
    for (const id of ["btn-generate", "btn-refine", "btn-undo", "btn-redo"]) {
      el<HTMLButtonElement>(id).disabled = !enabled;
    }
  }

  private render(): void {
    const layout = this.state.layout();
    this.layoutCanvas.render(layout, this.state.pinned, this.selected);
    el<HTMLButtonElement>("btn-undo").disabled = this.busy || !this.state.canUndo();
    el<HTMLButtonElement>("btn-redo").disabled = this.busy || !this.state.canRedo();
    el<HTMLElement>("pinned-list").textContent = [...this.state.pinned].sort((a, b) => a - b).join(", ") || "none";
    const info = el<HTMLElement>("selection-info");
    if (layout && this.selected >= 0 && this.selected < layout.components.length) {
      const c = layout.components[this.selected];
      info.textContent = `#${this.selected} ${c.type} @ (${c.cx.toFixed(2)}, ${c.cy.toFixed(2)})`;
      el<HTMLSelectElement>("comp-type").value = c.type;
    } else {
      info.textContent = "nothing selected";
    }
  }
}

window.addEventListener("DOMContentLoaded", () => new StudioController());

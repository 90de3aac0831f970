// Wire types mirroring the server's JSON schema exactly.

export interface ComponentJson {
  type: string;
  cx: number;
  cy: number;
  w: number;
  h: number;
  color: [number, number, number];
  visible: boolean;
}

export interface LayoutJson {
  canvas: [number, number];
  components: ComponentJson[];
}

export interface RuleReportJson {
  alignment_score: number;
  spacing_violations: number;
  harmony: number;
  penalty: number;
}

export interface GenerateRequest {
  prompt: string;
  sketch?: number[];
  seed: number;
  projection?: boolean;
}

export interface RefineRequest {
  layout: LayoutJson;
  pinned: number[];
  prompt?: string;
  sketch?: number[];
  seed: number;
  t_start?: number;
}

export interface GenerateResponse {
  layout: LayoutJson;
  rule_report: RuleReportJson;
  sample_time_ms: number;
  model_version: string;
}

export interface VocabResponse {
  vocab: string[];
  vocab_version: string;
  sketch_grid: [number, number];
}

export interface ApiError {
  error: string;
  field?: string;
}

export const SKETCH_SIDE = 8;
export const SKETCH_CELLS = SKETCH_SIDE * SKETCH_SIDE;

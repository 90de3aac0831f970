import type {
  ApiError,
  GenerateRequest,
  GenerateResponse,
  RefineRequest,
  VocabResponse,
} from "./types.js";

// Server-side request rejection (status 400) with a field path.
export class FieldError extends Error {
  constructor(message: string, readonly field: string | undefined, readonly status: number) {
    super(message);
  }
}

// Transport failure: the request may be retried with identical state.
export class NetworkError extends Error {}

export interface Transport {
  get(path: string): Promise<unknown>;
  post(path: string, body: unknown): Promise<unknown>;
}

export class HttpTransport implements Transport {
  constructor(private readonly base: string = "") {}

  private async run(path: string, init: RequestInit): Promise<unknown> {
    let resp: Response;
    try {
      resp = await fetch(this.base + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    const body = (await resp.json().catch(() => ({ error: "malformed response" }))) as ApiError;
    if (!resp.ok) {
      throw new FieldError(body.error ?? resp.statusText, body.field, resp.status);
    }
    return body;
  }

  get(path: string): Promise<unknown> {
    return this.run(path, { method: "GET" });
  }

  post(path: string, body: unknown): Promise<unknown> {
    return this.run(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}

export class StudioClient {
  constructor(private readonly transport: Transport) {}

  vocab(): Promise<VocabResponse> {
    return this.transport.get("/api/vocab") as Promise<VocabResponse>;
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.transport.post("/api/generate", req) as Promise<GenerateResponse>;
  }

  refine(req: RefineRequest): Promise<GenerateResponse> {
    return this.transport.post("/api/refine", req) as Promise<GenerateResponse>;
  }
}

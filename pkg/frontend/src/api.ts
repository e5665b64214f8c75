/** Typed client for the manta service JSON endpoints.
 *
 * All server mutation goes through these calls; the fetch function is
 * injectable so tests can script the server side.
 */

export interface Concept {
  name: string;
  details: string[];
  styles: string[];
}

export interface ConceptMap {
  main: Concept;
  support: Concept[];
  image_styles: string[];
  image_details: string[];
}

export interface Knobs {
  cfg_scale: number;
  seed: number;
  width: number;
  height: number;
  batch_size: number;
}

export interface Workflow {
  checkpoint_id: string;
  adapters: [string, number][];
  positive_prompt: string;
  negative_prompt: string;
  cfg_scale: number;
  seed: number;
  width: number;
  height: number;
  batch_size: number;
}

export interface SelectionInfo {
  checkpoint: { id: string; display_name: string };
  adapters: { id: string; display_name: string; weight: number }[];
  trace: string[];
}

export interface ComposeResponse {
  concept_map: ConceptMap;
  selection: SelectionInfo;
  workflow: Workflow;
}

export interface RunImage {
  index: number;
  seed_used: number;
  base64: string;
  feature_vector: number[] | null;
}

export interface RunResponse {
  run_id: string;
  parent_id: string | null;
  concept_map: ConceptMap | null;
  workflow: Workflow | null;
  images: RunImage[];
  tokens: { completion_tokens: number; embedding_tokens: number; budget: number | null };
}

export interface CollectionStats {
  name: string;
  kind: string;
  dimension: number;
  records: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly stage?: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class MantaClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    const body = await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, body.error ?? res.statusText, body.stage);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  compose(prompt: string, knobs?: Knobs, conceptMap?: ConceptMap): Promise<ComposeResponse> {
    if (!prompt.trim()) {
      throw new Error("prompt must not be empty");
    }
    return this.post("/v1/compose", {
      prompt,
      ...(knobs ? { knobs } : {}),
      ...(conceptMap ? { concept_map: conceptMap } : {}),
    });
  }

  generate(prompt: string, knobs?: Knobs, conceptMap?: ConceptMap): Promise<RunResponse> {
    if (!prompt.trim()) {
      throw new Error("prompt must not be empty");
    }
    return this.post("/v1/generate", {
      prompt,
      ...(knobs ? { knobs } : {}),
      ...(conceptMap ? { concept_map: conceptMap } : {}),
    });
  }

  refine(runId: string, imageIndex: number, denoise: number): Promise<RunResponse> {
    return this.post("/v1/refine", {
      run_id: runId,
      image_index: imageIndex,
      denoise,
    });
  }

  listRuns(): Promise<{ runs: string[] }> {
    return this.request("/v1/runs");
  }

  getRun(runId: string): Promise<Record<string, unknown>> {
    return this.request(`/v1/runs/${encodeURIComponent(runId)}`);
  }

  collections(): Promise<{ collections: CollectionStats[] }> {
    return this.request("/v1/collections");
  }

  /** Stable URL for an image payload; fetched by the browser, not the client. */
  imageUrl(runId: string, index: number): string {
    return `${this.baseUrl}/v1/runs/${encodeURIComponent(runId)}/images/${index}`;
  }
}

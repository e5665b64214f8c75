/** Studio session logic: compose a prompt, let the artist edit the concept
 * map, generate with the edited map, and refine individual images. The
 * session never touches server state except through the MantaClient.
 */

import type { ComposeResponse, ConceptMap, MantaClient, RunResponse } from "./api";
import { knobsOf, type KnobState } from "./state";

function cloneMap(map: ConceptMap): ConceptMap {
  return JSON.parse(JSON.stringify(map)) as ConceptMap;
}

export class StudioSession {
  conceptMap: ConceptMap | null = null;
  lastCompose: ComposeResponse | null = null;
  runs: RunResponse[] = [];
  private edited = false;

  constructor(
    private readonly client: MantaClient,
    public state: KnobState,
  ) {}

  /** Decompose the current prompt and show the concept map cards. */
  async compose(): Promise<ComposeResponse> {
    const response = await this.client.compose(this.state.prompt, knobsOf(this.state));
    this.conceptMap = cloneMap(response.concept_map);
    this.lastCompose = response;
    this.edited = false;
    return response;
  }

  /** Re-compose with the edited map so the inspector reflects the change. */
  private async recompose(): Promise<ComposeResponse> {
    if (!this.conceptMap) {
      throw new Error("compose a prompt before editing");
    }
    const response = await this.client.compose(
      this.state.prompt,
      knobsOf(this.state),
      this.conceptMap,
    );
    this.lastCompose = response;
    return response;
  }

  removeMainDetail(detail: string): Promise<ComposeResponse> {
    if (!this.conceptMap) {
      throw new Error("compose a prompt before editing");
    }
    this.conceptMap.main.details = this.conceptMap.main.details.filter(
      (d) => d !== detail,
    );
    this.edited = true;
    return this.recompose();
  }

  replaceMainDetail(oldDetail: string, newDetail: string): Promise<ComposeResponse> {
    if (!this.conceptMap) {
      throw new Error("compose a prompt before editing");
    }
    this.conceptMap.main.details = this.conceptMap.main.details.map((d) =>
      d === oldDetail ? newDetail : d,
    );
    this.edited = true;
    return this.recompose();
  }

  /** Generate with the edited map if there is one, else from the raw prompt. */
  async generate(): Promise<RunResponse> {
    const run = await this.client.generate(
      this.state.prompt,
      knobsOf(this.state),
      this.edited && this.conceptMap ? this.conceptMap : undefined,
    );
    this.runs.push(run);
    return run;
  }

  async refine(runId: string, imageIndex: number): Promise<RunResponse> {
    const run = await this.client.refine(runId, imageIndex, this.state.denoise);
    this.runs.push(run);
    return run;
  }
}

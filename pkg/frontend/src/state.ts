/** Knob state fully encoded in the URL query string so a session is
 * shareable and reproducible from the address bar alone.
 */

import type { Knobs } from "./api";

export interface KnobState extends Knobs {
  prompt: string;
  denoise: number;
}

export const DEFAULT_STATE: KnobState = {
  prompt: "",
  cfg_scale: 7,
  seed: 0,
  width: 512,
  height: 512,
  batch_size: 3,
  denoise: 0.5,
};

const NUMERIC_KEYS = [
  "cfg_scale",
  "seed",
  "width",
  "height",
  "batch_size",
  "denoise",
] as const;

export function encodeState(state: KnobState): string {
  const params = new URLSearchParams();
  if (state.prompt) {
    params.set("prompt", state.prompt);
  }
  for (const key of NUMERIC_KEYS) {
    if (state[key] !== DEFAULT_STATE[key]) {
      params.set(key, String(state[key]));
    }
  }
  return params.toString();
}

export function decodeState(query: string): KnobState {
  const params = new URLSearchParams(query);
  const state: KnobState = { ...DEFAULT_STATE };
  const prompt = params.get("prompt");
  if (prompt !== null) {
    state.prompt = prompt;
  }
  for (const key of NUMERIC_KEYS) {
    const raw = params.get(key);
    if (raw === null) {
      continue;
    }
    const value = Number(raw);
    if (Number.isFinite(value)) {
      state[key] = value;
    }
  }
  return state;
}

export function knobsOf(state: KnobState): Knobs {
  return {
    cfg_scale: state.cfg_scale,
    seed: state.seed,
    width: state.width,
    height: state.height,
    batch_size: state.batch_size,
  };
}

/** Minimal DOM bootstrap for the studio page served at /ui. All logic lives
 * in api.ts / state.ts / session.ts, which the tests exercise directly.
 */

import { MantaClient } from "./api";
import { StudioSession } from "./session";
import { decodeState, encodeState } from "./state";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function boot(): StudioSession {
  const state = decodeState(window.location.search);
  const session = new StudioSession(new MantaClient(""), state);

  const promptInput = el<HTMLInputElement>("prompt");
  const cfgInput = el<HTMLInputElement>("cfg");
  const seedInput = el<HTMLInputElement>("seed");
  const cards = el<HTMLDivElement>("concept-cards");
  const gallery = el<HTMLDivElement>("gallery");
  const status = el<HTMLDivElement>("status");

  promptInput.value = state.prompt;
  cfgInput.value = String(state.cfg_scale);
  seedInput.value = String(state.seed);

  const syncUrl = () => {
    session.state.prompt = promptInput.value;
    session.state.cfg_scale = Number(cfgInput.value);
    session.state.seed = Number(seedInput.value);
    const query = encodeState(session.state);
    window.history.replaceState({}, "", query ? `?${query}` : window.location.pathname);
  };

  const renderMap = () => {
    cards.textContent = "";
    if (!session.conceptMap) {
      return;
    }
    const concepts = [session.conceptMap.main, ...session.conceptMap.support];
    for (const concept of concepts) {
      const card = document.createElement("div");
      card.className = concept === session.conceptMap.main ? "card main" : "card";
      card.textContent = `${concept.name}: ${concept.details.join(", ")}`;
      cards.appendChild(card);
    }
  };

  const renderRun = (runId: string, count: number) => {
    gallery.textContent = "";
    const client = new MantaClient("");
    for (let i = 0; i < count; i += 1) {
      const img = document.createElement("img");
      img.src = client.imageUrl(runId, i);
      gallery.appendChild(img);
    }
  };

  el<HTMLButtonElement>("compose-btn").addEventListener("click", async () => {
    syncUrl();
    if (!promptInput.value.trim()) {
      status.textContent = "enter a prompt first";
      return;
    }
    try {
      await session.compose();
      renderMap();
      status.textContent = "composed";
    } catch (err) {
      status.textContent = String(err);
    }
  });

  el<HTMLButtonElement>("generate-btn").addEventListener("click", async () => {
    syncUrl();
    try {
      const run = await session.generate();
      renderRun(run.run_id, run.images.length);
      status.textContent = `run ${run.run_id}`;
    } catch (err) {
      status.textContent = String(err);
    }
  });

  return session;
}

if (typeof document !== "undefined" && document.getElementById("prompt")) {
  boot();
}

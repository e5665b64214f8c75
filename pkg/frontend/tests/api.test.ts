import { describe, expect, it } from "vitest";

import { ApiError, MantaClient } from "../src/api";
import { MockServer } from "./mockServer";

describe("MantaClient", () => {
  it("composes a prompt into a concept map and workflow", async () => {
    const server = new MockServer();
    const client = new MantaClient("", server.fetch);
    const res = await client.compose("techno samurai warrior with cyberpunk dog");
    expect(res.concept_map.main.name).toBe("techno samurai warrior");
    expect(res.concept_map.support.map((c) => c.name)).toEqual(["cyberpunk dog"]);
    expect(res.workflow.positive_prompt).toContain("techno samurai warrior");
    expect(server.calls).toEqual(["POST /v1/compose"]);
  });

  it("rejects an empty prompt without issuing a request", async () => {
    const server = new MockServer();
    const client = new MantaClient("", server.fetch);
    expect(() => client.compose("   ")).toThrow(/empty/);
    expect(server.calls).toEqual([]);
  });

  it("passes knobs through to generate", async () => {
    const server = new MockServer();
    const client = new MantaClient("", server.fetch);
    const run = await client.generate("a red fox", {
      cfg_scale: 11,
      seed: 5,
      width: 512,
      height: 512,
      batch_size: 2,
    });
    expect(run.workflow?.cfg_scale).toBe(11);
    expect(run.images).toHaveLength(2);
    expect(run.images[1].seed_used).toBe(6);
  });

  it("surfaces API errors with status and message", async () => {
    const server = new MockServer();
    const client = new MantaClient("", server.fetch);
    const err = await client.refine("nope", 0, 0.5).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toContain("nope");
  });

  it("builds stable image URLs without fetching", () => {
    const server = new MockServer();
    const client = new MantaClient("http://host", server.fetch);
    expect(client.imageUrl("run-3", 1)).toBe("http://host/v1/runs/run-3/images/1");
    expect(server.calls).toEqual([]);
  });

  it("lists runs and collections", async () => {
    const server = new MockServer();
    const client = new MantaClient("", server.fetch);
    await client.generate("a red fox");
    const runs = await client.listRuns();
    expect(runs.runs).toHaveLength(1);
    const cols = await client.collections();
    expect(cols.collections.map((c) => c.kind)).toEqual(["checkpoint", "adapter"]);
  });
});

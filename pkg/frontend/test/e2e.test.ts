/** End-to-end contract test against the real backend.
 *
 * Generates a 3-case manifest, starts `score serve`, then drives the
 * same code paths the UI uses: browse the case list, inspect slices,
 * fill the form through CaseView and submit.  Verifies the manifest on
 * disk afterwards and that an inconsistent payload is impossible via
 * the form and rejected by the server when posted directly.
 */

import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { CaseView, MemoryStore } from "../src/model.js";

const PY = process.env.PYTHON ?? "python3";

let base = "";
let manifest = "";
let proc: ReturnType<typeof spawn> | null = null;

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "score-e2e-"));
  const cfg = join(dir, "gen.cfg");
  const fs = await import("node:fs");
  fs.writeFileSync(
    cfg,
    [
      "[phantom]",
      "dims=24,24,24",
      "sphere_radius=5,6",
      "capsule_half_length=3,4",
      "capsule_radius=2.5,3.5",
      "ellipsoid_semiaxes=4,6",
      "margin=2",
      "n_distractors=1",
      "[degrade]",
      "r_max=1",
      "dice_range=0.3,0.99",
      "[dataset]",
      "n_train=3",
      "n_val=0",
      "n_test=0",
      "",
    ].join("\n"),
  );
  const gen = spawnSync(
    PY,
    ["-m", "score.cli", "gen", "--config", cfg, "--out", join(dir, "data"), "--seed", "21"],
    { encoding: "utf-8" },
  );
  expect(gen.status, gen.stderr).toBe(0);
  manifest = join(dir, "data", "train", "cases.jsonl");

  proc = spawn(PY, ["-m", "score.cli", "serve", "--manifest", manifest, "--bind", "127.0.0.1:0"]);
  base = await new Promise<string>((resolve, reject) => {
    let out = "";
    const timer = setTimeout(() => reject(new Error(`serve did not start: ${out}`)), 30000);
    proc!.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/at (http:\/\/[\d.]+:\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    proc!.stderr!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
    });
    proc!.on("exit", (code) => reject(new Error(`serve exited ${code}: ${out}`)));
  });
}, 60000);

afterAll(() => {
  proc?.kill();
});

describe("browse → inspect → submit against the live server", () => {
  it("walks the full annotation workflow", async () => {
    const api = new ApiClient(base);

    // browse: three cases, generated unlabeled... the generator labels
    // them synthetically, so first verify the list shape, then overwrite
    const cases = await api.listCases();
    expect(cases).toHaveLength(3);
    for (const c of cases) {
      expect(typeof c.case_id).toBe("string");
      expect(c.K).toBe(1);
    }

    // inspect: open the first case, fetch slices along every axis
    const meta = await api.getCase(cases[0].case_id);
    expect(meta.dims).toEqual([24, 24, 24]);
    const view = new CaseView(meta, new MemoryStore());
    for (const axis of ["x", "y", "z"] as const) {
      view.setAxis(axis);
      const blob = await api.fetchSlice(view.caseId, view.axis, view.index, view.overlay);
      expect(blob.type).toBe("image/png");
      expect(blob.size).toBeGreaterThan(100);
    }

    // fill the form and submit
    view.setScore(0, 2);
    view.setError(0, 2);
    expect(view.canSubmit()).toBe(true);
    const result = await api.submitLabels(view.caseId, view.payload(), "e2e-bot");
    expect(result.status).toBe(200);
    expect(result.ok).toBe(true);

    // the submitted labels appear in cases.jsonl with schema-exact fields
    const lines = readFileSync(manifest, "utf-8").trim().split("\n");
    const last = JSON.parse(lines[lines.length - 1]);
    expect(Object.keys(last).sort()).toEqual(
      ["annotator", "case_id", "gt_masks", "image", "init_masks", "labels", "timestamp"],
    );
    expect(last.case_id).toBe(view.caseId);
    expect(last.labels).toEqual([{ k: 1, q: 2, l: 2 }]);
    expect(last.annotator).toBe("e2e-bot");
    expect(last.timestamp).toMatch(/^\d{4}-\d{2}-\d{2}T/);

    // and the server reflects it on re-fetch
    const again = await api.getCase(view.caseId);
    expect(again.labeled).toBe(true);
    expect(again.labels).toEqual([{ k: 1, q: 2, l: 2 }]);
  }, 30000);

  it("q=5 with an error label is unproducible via the form and rejected directly", async () => {
    const api = new ApiClient(base);
    const cases = await api.listCases();
    const meta = await api.getCase(cases[1].case_id);
    const view = new CaseView(meta, new MemoryStore());

    // the form cannot reach (q=5, l!=0) no matter the interaction order
    view.setScore(0, 5);
    view.setError(0, 1);
    expect(view.payload()).toEqual([{ k: 1, q: 5, l: 0 }]);
    view.setError(0, -1);
    view.setScore(0, 5);
    expect(view.payload()).toEqual([{ k: 1, q: 5, l: 0 }]);

    // posting the forbidden payload directly gets a 422 with the rule
    const direct = await api.submitLabels(view.caseId, [{ k: 1, q: 5, l: 1 }], "e2e-bot");
    expect(direct.status).toBe(422);
    expect(direct.ok).toBe(false);
    expect(direct.errors.join(" ")).toContain("q=5");

    // the case keeps its previous labels
    const after = await api.getCase(view.caseId);
    expect(after.labels).not.toEqual([{ k: 1, q: 5, l: 1 }]);
  }, 30000);

  it("unknown case returns 404", async () => {
    const resp = await fetch(`${base}/api/cases/nope`);
    expect(resp.status).toBe(404);
  });
});

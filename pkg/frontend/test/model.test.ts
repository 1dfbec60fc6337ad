import { describe, expect, it } from "vitest";

import type { CaseMeta } from "../src/api.js";
import { CaseView, ERROR_CHOICES, MemoryStore } from "../src/model.js";

function meta(K = 1, labels: CaseMeta["labels"] = null): CaseMeta {
  return {
    case_id: "c0",
    K,
    dims: [24, 30, 40],
    spacing: [1, 1, 1],
    labeled: labels !== null,
    labels,
    annotator: "",
    timestamp: "",
  };
}

function consistent(q: number, l: number): boolean {
  if (q === 5) return l === 0;
  return l === -1 || l === 1 || l === 2;
}

describe("label form rules", () => {
  it("every payload the form permits satisfies the consistency invariant", () => {
    // exhaust all (score, attempted error) interaction orders
    for (const first of ["score", "error"] as const) {
      for (let q = 0; q <= 5; q++) {
        for (const l of [-1, 0, 1, 2]) {
          const v = new CaseView(meta());
          if (first === "score") {
            v.setScore(0, q);
            v.setError(0, l);
          } else {
            v.setError(0, l);
            v.setScore(0, q);
          }
          if (v.canSubmit()) {
            const [label] = v.payload();
            expect(consistent(label.q, label.l), `q=${q} l=${l} via ${first}`).toBe(true);
          }
        }
      }
    }
  });

  it("random interaction sequences never produce an inconsistent draft", () => {
    let seed = 12345;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2 ** 31;
      return seed / 2 ** 31;
    };
    for (let trial = 0; trial < 200; trial++) {
      const v = new CaseView(meta(2));
      for (let step = 0; step < 20; step++) {
        const k = rand() < 0.5 ? 0 : 1;
        if (rand() < 0.5) v.setScore(k, Math.floor(rand() * 6));
        else v.setError(k, [-1, 0, 1, 2][Math.floor(rand() * 4)]);
      }
      if (v.canSubmit()) {
        for (const label of v.payload()) {
          expect(consistent(label.q, label.l)).toBe(true);
        }
      }
    }
  });

  it("q=5 locks the error selector to no-error", () => {
    const v = new CaseView(meta());
    v.setScore(0, 5);
    expect(v.errorLocked(0)).toBe(true);
    expect(v.drafts[0].l).toBe(0);
    v.setError(0, 1); // must be rejected
    expect(v.drafts[0].l).toBe(0);
    expect(v.payload()).toEqual([{ k: 1, q: 5, l: 0 }]);
  });

  it("downgrading from 5 clears the no-error choice and blocks submit", () => {
    const v = new CaseView(meta());
    v.setScore(0, 5);
    v.setScore(0, 3);
    expect(v.drafts[0].l).toBeNull();
    expect(v.canSubmit()).toBe(false);
    v.setError(0, 0); // q<5 cannot pick "no error"
    expect(v.canSubmit()).toBe(false);
    v.setError(0, 2);
    expect(v.canSubmit()).toBe(true);
    expect(v.payload()).toEqual([{ k: 1, q: 3, l: 2 }]);
  });

  it("submit stays disabled until every region is scored", () => {
    const v = new CaseView(meta(2));
    v.setScore(0, 4);
    v.setError(0, -1);
    expect(v.canSubmit()).toBe(false);
    v.setScore(1, 5);
    expect(v.canSubmit()).toBe(true);
  });

  it("covers every error choice the UI offers", () => {
    expect(ERROR_CHOICES.map((c) => c.value).sort()).toEqual([-1, 0, 1, 2]);
    expect(new Set(ERROR_CHOICES.map((c) => c.key)).size).toBe(4);
  });
});

describe("viewer state", () => {
  it("axis toggle resets to the mid slice", () => {
    const v = new CaseView(meta());
    expect(v.axis).toBe("z");
    expect(v.index).toBe(20); // dims z=40
    v.setIndex(3);
    v.setAxis("x");
    expect(v.index).toBe(12); // dims x=24
  });

  it("slider clamps to the axis range", () => {
    const v = new CaseView(meta());
    v.setIndex(999);
    expect(v.index).toBe(39);
    v.setIndex(-5);
    expect(v.index).toBe(0);
    v.stepIndex(+100);
    expect(v.index).toBe(39);
  });
});

describe("draft persistence", () => {
  it("reloading the case restores unsubmitted drafts", () => {
    const store = new MemoryStore();
    const v1 = new CaseView(meta(), store);
    v1.setScore(0, 2);
    v1.setError(0, 1);
    const v2 = new CaseView(meta(), store);
    expect(v2.drafts[0]).toEqual({ q: 2, l: 1 });
    v2.clearDrafts();
    const v3 = new CaseView(meta(), store);
    expect(v3.drafts[0]).toEqual({ q: null, l: null });
  });

  it("stored labels seed the draft for labeled cases", () => {
    const v = new CaseView(meta(1, [{ k: 1, q: 4, l: 1 }]));
    expect(v.drafts[0]).toEqual({ q: 4, l: 1 });
    expect(v.canSubmit()).toBe(true);
  });
});

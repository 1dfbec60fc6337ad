/** Case-view state and the label-form rules.
 *
 * The form enforces the label consistency invariant structurally:
 * picking quality 5 locks the error type to "no error", picking any
 * lower quality clears a stale "no error" choice and requires one of
 * under / over / both.  Whatever sequence of interactions happens, a
 * submittable draft always satisfies (q = 5) <=> (l = 0).
 */

import type { Axis, CaseMeta, RegionLabel } from "./api.js";

export const ERROR_CHOICES = [
  { value: -1, key: "u", caption: "too small → under" },
  { value: 1, key: "o", caption: "too big → over" },
  { value: 2, key: "b", caption: "both" },
  { value: 0, key: "n", caption: "no error" },
] as const;

export interface Draft {
  q: number | null;
  l: number | null;
}

export interface DraftStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
  remove(key: string): void;
}

export class MemoryStore implements DraftStore {
  private items = new Map<string, string>();
  get(key: string): string | null {
    return this.items.get(key) ?? null;
  }
  set(key: string, value: string): void {
    this.items.set(key, value);
  }
  remove(key: string): void {
    this.items.delete(key);
  }
}

export class CaseView {
  readonly caseId: string;
  readonly K: number;
  readonly dims: [number, number, number];
  axis: Axis = "z";
  index: number;
  overlay = true;
  drafts: Draft[];

  constructor(
    meta: CaseMeta,
    private store: DraftStore = new MemoryStore(),
  ) {
    this.caseId = meta.case_id;
    this.K = meta.K;
    this.dims = meta.dims;
    this.index = Math.floor(this.axisSize() / 2);
    this.drafts = Array.from({ length: this.K }, () => ({ q: null, l: null }));
    // stored labels seed the draft; unsubmitted local drafts win over them
    if (meta.labels) {
      for (const { k, q, l } of meta.labels) {
        if (k >= 1 && k <= this.K) this.drafts[k - 1] = { q, l };
      }
    }
    this.restoreDrafts();
  }

  private draftKey(): string {
    return `score-draft:${this.caseId}`;
  }

  private persistDrafts(): void {
    this.store.set(this.draftKey(), JSON.stringify(this.drafts));
  }

  private restoreDrafts(): void {
    const raw = this.store.get(this.draftKey());
    if (!raw) return;
    try {
      const saved = JSON.parse(raw) as Draft[];
      if (Array.isArray(saved) && saved.length === this.K) this.drafts = saved;
    } catch {
      /* corrupted draft: fall back to stored labels */
    }
  }

  clearDrafts(): void {
    this.store.remove(this.draftKey());
  }

  axisSize(): number {
    return this.dims["xyz".indexOf(this.axis)];
  }

  setAxis(axis: Axis): void {
    if (axis === this.axis) return;
    this.axis = axis;
    this.index = Math.floor(this.axisSize() / 2); // reset to mid-slice
  }

  setIndex(index: number): void {
    this.index = Math.min(Math.max(index, 0), this.axisSize() - 1);
  }

  stepIndex(delta: number): void {
    this.setIndex(this.index + delta);
  }

  toggleOverlay(): void {
    this.overlay = !this.overlay;
  }

  /** Assign a quality score; q=5 locks the error type to "no error". */
  setScore(k: number, q: number): void {
    if (q < 0 || q > 5 || !Number.isInteger(q)) return;
    const d = this.drafts[k];
    d.q = q;
    if (q === 5) {
      d.l = 0;
    } else if (d.l === 0) {
      d.l = null; // a real error type must be chosen now
    }
    this.persistDrafts();
  }

  /** Choose the error type; rejected when the score forbids it. */
  setError(k: number, l: number): void {
    const d = this.drafts[k];
    if (![-1, 0, 1, 2].includes(l)) return;
    if (d.q === 5 && l !== 0) return; // locked to "no error"
    if (d.q !== null && d.q < 5 && l === 0) return; // q<5 needs an error type
    d.l = l;
    this.persistDrafts();
  }

  errorLocked(k: number): boolean {
    return this.drafts[k].q === 5;
  }

  regionComplete(k: number): boolean {
    const d = this.drafts[k];
    if (d.q === null || d.l === null) return false;
    if (d.q === 5) return d.l === 0;
    return d.l === -1 || d.l === 1 || d.l === 2;
  }

  canSubmit(): boolean {
    return this.drafts.every((_, k) => this.regionComplete(k));
  }

  payload(): RegionLabel[] {
    if (!this.canSubmit()) throw new Error("incomplete draft");
    return this.drafts.map((d, i) => ({ k: i + 1, q: d.q as number, l: d.l as number }));
  }
}

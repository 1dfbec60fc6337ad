/** Typed client over the annotation server's JSON API. */

export interface CaseSummary {
  case_id: string;
  K: number;
  labeled: boolean;
}

export interface RegionLabel {
  k: number;
  q: number;
  l: number;
}

export interface CaseMeta {
  case_id: string;
  K: number;
  dims: [number, number, number];
  spacing: [number, number, number];
  labeled: boolean;
  labels: RegionLabel[] | null;
  annotator: string;
  timestamp: string;
}

export interface SubmitResult {
  status: number;
  ok: boolean;
  errors: string[];
}

export type Axis = "x" | "y" | "z";

export class ApiClient {
  constructor(private base: string) {}

  async listCases(): Promise<CaseSummary[]> {
    const resp = await fetch(`${this.base}/api/cases`);
    if (!resp.ok) throw new Error(`GET /api/cases -> ${resp.status}`);
    return (await resp.json()) as CaseSummary[];
  }

  async getCase(id: string): Promise<CaseMeta> {
    const resp = await fetch(`${this.base}/api/cases/${encodeURIComponent(id)}`);
    if (!resp.ok) throw new Error(`GET /api/cases/${id} -> ${resp.status}`);
    return (await resp.json()) as CaseMeta;
  }

  sliceUrl(id: string, axis: Axis, index: number, overlay: boolean): string {
    const ov = overlay ? 1 : 0;
    return `${this.base}/api/cases/${encodeURIComponent(id)}/slice?axis=${axis}&index=${index}&overlay=${ov}`;
  }

  async fetchSlice(id: string, axis: Axis, index: number, overlay: boolean): Promise<Blob> {
    const resp = await fetch(this.sliceUrl(id, axis, index, overlay));
    if (!resp.ok) throw new Error(`slice -> ${resp.status}`);
    return await resp.blob();
  }

  async submitLabels(
    id: string,
    labels: RegionLabel[],
    annotator: string,
  ): Promise<SubmitResult> {
    const resp = await fetch(`${this.base}/api/cases/${encodeURIComponent(id)}/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ labels, annotator }),
    });
    const body = (await resp.json().catch(() => ({}))) as {
      ok?: boolean;
      errors?: string[];
    };
    return {
      status: resp.status,
      ok: resp.status === 200 && body.ok === true,
      errors: body.errors ?? [],
    };
  }
}

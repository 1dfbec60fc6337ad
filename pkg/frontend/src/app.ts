/** DOM wiring: case browser, slice viewer, label form, shortcuts. */

import { ApiClient, type Axis, type CaseSummary } from "./api.js";
import { CaseView, ERROR_CHOICES, type DraftStore } from "./model.js";

const api = new ApiClient("");

const el = {
  caseList: document.getElementById("case-list") as HTMLUListElement,
  viewer: document.getElementById("viewer") as HTMLDivElement,
  slice: document.getElementById("slice") as HTMLImageElement,
  slider: document.getElementById("slider") as HTMLInputElement,
  sliceLabel: document.getElementById("slice-label") as HTMLSpanElement,
  axisButtons: document.getElementById("axis-buttons") as HTMLDivElement,
  overlayToggle: document.getElementById("overlay-toggle") as HTMLInputElement,
  form: document.getElementById("label-form") as HTMLDivElement,
  submit: document.getElementById("submit") as HTMLButtonElement,
  annotator: document.getElementById("annotator") as HTMLInputElement,
  status: document.getElementById("status") as HTMLDivElement,
  banner: document.getElementById("banner") as HTMLDivElement,
};

const storage: DraftStore = {
  get: (k) => window.localStorage.getItem(k),
  set: (k, v) => window.localStorage.setItem(k, v),
  remove: (k) => window.localStorage.removeItem(k),
};

let cases: CaseSummary[] = [];
let view: CaseView | null = null;

function setBanner(message: string | null): void {
  el.banner.textContent = message ?? "";
  el.banner.hidden = !message;
}

async function refreshCases(): Promise<void> {
  try {
    cases = await api.listCases();
    setBanner(null);
  } catch {
    setBanner("Cannot reach the server — drafts are kept locally. Retrying…");
    window.setTimeout(refreshCases, 2000);
    return;
  }
  el.caseList.replaceChildren(
    ...cases.map((c) => {
      const li = document.createElement("li");
      const badge = c.labeled ? "✓" : "·";
      li.textContent = `${badge} ${c.case_id}`;
      li.className = c.labeled ? "labeled" : "unlabeled";
      if (view && view.caseId === c.case_id) li.classList.add("open");
      li.onclick = () => void openCase(c.case_id);
      return li;
    }),
  );
}

async function openCase(id: string): Promise<void> {
  try {
    const meta = await api.getCase(id);
    view = new CaseView(meta, storage);
    setBanner(null);
  } catch (exc) {
    setBanner(`Cannot open ${id}: ${String(exc)}`);
    return;
  }
  renderAll();
}

function renderAll(): void {
  if (!view) return;
  renderViewer();
  renderForm();
  void refreshCases();
}

function renderViewer(): void {
  if (!view) return;
  const v = view;
  el.slider.max = String(v.axisSize() - 1);
  el.slider.value = String(v.index);
  el.sliceLabel.textContent = `${v.axis} = ${v.index}/${v.axisSize() - 1}`;
  el.overlayToggle.checked = v.overlay;
  const img = new Image();
  img.onload = () => {
    el.slice.src = img.src;
    el.slice.classList.remove("stale");
  };
  img.onerror = () => el.slice.classList.add("stale"); // placeholder keeps last tile
  img.src = api.sliceUrl(v.caseId, v.axis, v.index, v.overlay);

  el.axisButtons.replaceChildren(
    ...(["x", "y", "z"] as Axis[]).map((axis) => {
      const b = document.createElement("button");
      b.textContent = axis;
      b.className = axis === v.axis ? "active" : "";
      b.onclick = () => {
        v.setAxis(axis);
        renderViewer();
      };
      return b;
    }),
  );
}

function renderForm(): void {
  if (!view) return;
  const v = view;
  const blocks = [];
  for (let k = 0; k < v.K; k++) {
    const d = v.drafts[k];
    const block = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = v.K === 1 ? "region" : `region ${k + 1}`;
    block.append(legend);

    const scores = document.createElement("div");
    scores.className = "scores";
    for (let q = 0; q <= 5; q++) {
      const b = document.createElement("button");
      b.textContent = String(q);
      b.className = d.q === q ? "active" : "";
      b.title = q === 0 ? "unusable" : q === 5 ? "excellent" : "";
      b.onclick = () => {
        v.setScore(k, q);
        renderForm();
      };
      scores.append(b);
    }
    block.append(scores);

    const errors = document.createElement("div");
    errors.className = "errors";
    for (const choice of ERROR_CHOICES) {
      const b = document.createElement("button");
      b.textContent = choice.caption;
      b.className = d.l === choice.value ? "active" : "";
      b.disabled =
        (v.errorLocked(k) && choice.value !== 0) ||
        (d.q !== null && d.q < 5 && choice.value === 0);
      b.onclick = () => {
        v.setError(k, choice.value);
        renderForm();
      };
      errors.append(b);
    }
    block.append(errors);
    blocks.push(block);
  }
  el.form.replaceChildren(...blocks);
  el.submit.disabled = !v.canSubmit();
}

async function submit(): Promise<void> {
  if (!view || !view.canSubmit()) return;
  const v = view;
  el.submit.disabled = true;
  let result;
  try {
    result = await api.submitLabels(v.caseId, v.payload(), el.annotator.value || "anonymous");
  } catch {
    setBanner("Submit failed (network) — your draft is preserved locally.");
    el.submit.disabled = false;
    return;
  }
  if (result.ok) {
    v.clearDrafts();
    el.status.textContent = `${v.caseId} saved.`;
    await refreshCases();
    const next = cases.find((c) => !c.labeled);
    if (next) await openCase(next.case_id);
  } else {
    el.status.textContent = "";
    setBanner(`Server rejected the labels: ${result.errors.join("; ")}`);
    el.submit.disabled = false;
  }
}

function onKey(ev: KeyboardEvent): void {
  if (!view || ev.target instanceof HTMLInputElement) return;
  const v = view;
  if (ev.key >= "0" && ev.key <= "5") {
    v.setScore(0, Number(ev.key));
    renderForm();
  } else if (ev.key === "ArrowLeft" || ev.key === "ArrowDown") {
    v.stepIndex(-1);
    renderViewer();
  } else if (ev.key === "ArrowRight" || ev.key === "ArrowUp") {
    v.stepIndex(+1);
    renderViewer();
  } else {
    const choice = ERROR_CHOICES.find((c) => c.key === ev.key);
    if (choice) {
      v.setError(0, choice.value);
      renderForm();
    }
  }
}

el.slider.oninput = () => {
  if (!view) return;
  view.setIndex(Number(el.slider.value));
  renderViewer();
};
el.overlayToggle.onchange = () => {
  if (!view) return;
  view.toggleOverlay();
  renderViewer();
};
el.submit.onclick = () => void submit();
document.addEventListener("keydown", onKey);

void refreshCases().then(() => {
  const first = cases.find((c) => !c.labeled) ?? cases[0];
  if (first) void openCase(first.case_id);
});

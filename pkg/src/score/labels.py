"""Weak-supervision data model: quality scores, error labels, manifests.

Each region of an initial segmentation carries a quality score q in
{0..5} (5 = excellent) and an error label l in {-1, 0, 1, 2}:
-1 under-segmentation, +1 over-segmentation, 2 both, 0 no error.
A region is error-free exactly when q = 5.

The manifest is line-delimited JSON (`cases.jsonl`), one case per line
with keys: case_id, image, init_masks, gt_masks (nullable),
labels: [{k, q, l}], annotator, timestamp.  Appending a new record for
an existing case supersedes the old one (last write wins).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyRegionError, GridError, LabelError, ScoreError

VALID_SCORES = (0, 1, 2, 3, 4, 5)
VALID_LABELS = (-1, 0, 1, 2)

# Dice intervals mapping synthetic agreement to scores 5..0.
DICE_BINS = ((0.98, 5), (0.95, 4), (0.90, 3), (0.80, 2), (0.60, 1))


def weight(q: int) -> float:
    """Correction weight (5 - q) / 5; 0 means no correction, 1 full penalty."""
    if q not in VALID_SCORES:
        raise ScoreError(f"quality score must be in 0..5, got {q}")
    return (5 - q) / 5


@dataclass(frozen=True)
class WeakLabelSet:
    """Per-region (q, l) pairs, in region order."""

    scores: tuple[int, ...]
    error_labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.scores) != len(self.error_labels):
            raise LabelError("scores and error labels must have equal length")
        if len(self.scores) < 1:
            raise LabelError("at least one region required")

    @property
    def K(self) -> int:
        return len(self.scores)

    def weights(self) -> tuple[float, ...]:
        return tuple(weight(q) for q in self.scores)


def validate(labels: WeakLabelSet) -> list[str]:
    """All invariant violations; an empty list means the set is consistent."""
    findings = []
    for k, (q, l) in enumerate(zip(labels.scores, labels.error_labels), start=1):
        if q not in VALID_SCORES:
            findings.append(f"region {k}: score {q} outside 0..5")
            continue
        if l not in VALID_LABELS:
            findings.append(f"region {k}: error label {l} outside {{-1,0,1,2}}")
            continue
        if q == 5 and l != 0:
            findings.append(f"region {k}: label must be 0 when q=5, got {l}")
        if q < 5 and l == 0:
            findings.append(f"region {k}: q<5 requires an error label (-1, 1 or 2)")
    return findings


def derive_labels_from_gt(pred_mask, gt_mask, allow_mixed: bool = True) -> tuple[int, int]:
    """Synthetic rater: (q, l) from comparing an initial mask against GT.

    q comes from Dice bins; l from the false-negative / false-positive
    balance with tau = 10% of the larger error mass.  With
    allow_mixed=False a would-be mixed label collapses to the dominant
    error direction.
    """
    pred = np.asarray(pred_mask).astype(bool)
    gt = np.asarray(gt_mask).astype(bool)
    if pred.shape != gt.shape:
        raise GridError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    n_gt = int(gt.sum())
    if n_gt == 0:
        raise EmptyRegionError("ground-truth region is empty")
    n_pred = int(pred.sum())
    inter = int((pred & gt).sum())
    dice = 2 * inter / (n_pred + n_gt)

    q = 0
    for lo, score in DICE_BINS:
        if dice >= lo:
            q = score
            break

    if q == 5:
        return 5, 0
    fn = n_gt - inter
    fp = n_pred - inter
    tau = 0.1 * max(fn, fp, 1)
    if allow_mixed and fn > tau and fp > tau:
        return q, 2
    return q, -1 if fn >= fp else 1


@dataclass(frozen=True)
class CaseRecord:
    """One manifest entry; paths are stored relative to the manifest file."""

    case_id: str
    image: str
    init_masks: str
    gt_masks: str | None
    labels: WeakLabelSet | None
    annotator: str = ""
    timestamp: str = ""

    def labeled(self, K: int | None = None) -> bool:
        if self.labels is None:
            return False
        return K is None or self.labels.K == K

    def to_json(self) -> dict:
        label_objs = None
        if self.labels is not None:
            label_objs = [
                {"k": k + 1, "q": q, "l": l}
                for k, (q, l) in enumerate(zip(self.labels.scores, self.labels.error_labels))
            ]
        return {
            "case_id": self.case_id,
            "image": self.image,
            "init_masks": self.init_masks,
            "gt_masks": self.gt_masks,
            "labels": label_objs,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_json(obj: dict) -> "CaseRecord":
        raw = obj.get("labels")
        labels = None
        if raw:
            by_k = sorted(raw, key=lambda d: d["k"])
            expected = list(range(1, len(by_k) + 1))
            if [d["k"] for d in by_k] != expected:
                raise DataError(f"label region ids must be 1..K, got {[d['k'] for d in raw]}")
            labels = WeakLabelSet(
                scores=tuple(int(d["q"]) for d in by_k),
                error_labels=tuple(int(d["l"]) for d in by_k),
            )
        return CaseRecord(
            case_id=str(obj["case_id"]),
            image=str(obj["image"]),
            init_masks=str(obj["init_masks"]),
            gt_masks=obj.get("gt_masks"),
            labels=labels,
            annotator=str(obj.get("annotator", "")),
            timestamp=str(obj.get("timestamp", "")),
        )


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def append_record(manifest_path, record: CaseRecord) -> None:
    path = Path(manifest_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_json()) + "\n")


def load_manifest(manifest_path) -> list[CaseRecord]:
    """Parse a manifest; later lines supersede earlier ones per case_id."""
    path = Path(manifest_path)
    by_id: dict[str, CaseRecord] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            rec = CaseRecord.from_json(obj)
            if rec.case_id not in by_id:
                order.append(rec.case_id)
            by_id[rec.case_id] = rec
    return [by_id[cid] for cid in order]


def with_labels(record: CaseRecord, labels: WeakLabelSet, annotator: str) -> CaseRecord:
    problems = validate(labels)
    if problems:
        raise LabelError("; ".join(problems))
    return replace(record, labels=labels, annotator=annotator, timestamp=now_iso())


def validate_record(record: CaseRecord, root) -> list[str]:
    """Check that referenced files exist, share one grid, and that the
    label count matches the region count.  Returns findings."""
    from .volume import read_header

    root = Path(root)
    findings = []
    headers = {}
    for name, rel in (("image", record.image), ("init_masks", record.init_masks),
                      ("gt_masks", record.gt_masks)):
        if rel is None:
            continue
        path = root / rel
        if not path.is_file():
            findings.append(f"{record.case_id}: {name} file missing: {rel}")
            continue
        headers[name] = read_header(path)
    grids = {(h.dims, h.spacing) for h in headers.values()}
    if len(grids) > 1:
        findings.append(f"{record.case_id}: referenced files disagree on the grid")
    if "init_masks" in headers and record.labels is not None:
        if record.labels.K != headers["init_masks"].K:
            findings.append(
                f"{record.case_id}: {record.labels.K} labels for "
                f"{headers['init_masks'].K} regions")
    if record.labels is not None:
        findings.extend(f"{record.case_id}: {v}" for v in validate(record.labels))
    return findings

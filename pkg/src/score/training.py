"""Training, refinement inference and evaluation.

The training loader deliberately has no ground-truth accessor: a
TrainSample carries only the image, the initial masks and the weak
labels, so the optimization can never peek at GT even when the files
exist on disk.  Validation cases do load GT, which drives model
selection (mean Dice over the validation split, best step kept).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import intensity_augment, morph_augment, spatial_augment
from .config import TrainConfig
from .errors import CheckpointError, ConfigError, GridError, NumericError
from .labels import WeakLabelSet, load_manifest, validate
from .loss import total_loss
from .metrics import dice, evaluate_case
from .prior import build_prior
from .refiner import (
    RefinerConfig,
    RefinerParams,
    adam_step,
    backward,
    forward,
    init_params,
    load_checkpoint,
    normalize_intensity,
    save_checkpoint,
)
from .volume import RegionMaskSet, Volume3, read_masks, read_volume


@dataclass(frozen=True)
class TrainSample:
    """What a training step is allowed to see.  No GT field exists."""

    case_id: str
    image: Volume3
    init_masks: RegionMaskSet
    labels: WeakLabelSet


class TrainLoader:
    """Loads and caches training samples from a manifest; GT paths in the
    manifest are ignored at load time."""

    def __init__(self, manifest_path):
        self.root = Path(manifest_path).parent
        records = load_manifest(manifest_path)
        if not records:
            raise ConfigError(f"empty training manifest {manifest_path}")
        for rec in records:
            if rec.labels is None:
                raise ConfigError(f"training case {rec.case_id} has no labels")
            problems = validate(rec.labels)
            if problems:
                raise ConfigError(f"training case {rec.case_id}: {'; '.join(problems)}")
        self._records = records
        self._cache: dict[int, TrainSample] = {}

    def __len__(self):
        return len(self._records)

    def __getitem__(self, idx: int) -> TrainSample:
        if idx not in self._cache:
            rec = self._records[idx]
            self._cache[idx] = TrainSample(
                case_id=rec.case_id,
                image=read_volume(self.root / rec.image),
                init_masks=read_masks(self.root / rec.init_masks),
                labels=rec.labels,
            )
        return self._cache[idx]


@dataclass(frozen=True)
class ValCase:
    case_id: str
    image: Volume3
    init_masks: RegionMaskSet
    gt_masks: RegionMaskSet


def load_val_cases(manifest_path) -> list[ValCase]:
    root = Path(manifest_path).parent
    records = load_manifest(manifest_path)
    if not records:
        raise ConfigError(f"empty validation manifest {manifest_path}")
    cases = []
    for rec in records:
        if rec.gt_masks is None:
            raise ConfigError(f"validation case {rec.case_id} carries no reference masks")
        cases.append(ValCase(
            case_id=rec.case_id,
            image=read_volume(root / rec.image),
            init_masks=read_masks(root / rec.init_masks),
            gt_masks=read_masks(root / rec.gt_masks),
        ))
    return cases


@dataclass
class ValSelection:
    best_step: int = -1
    best_score: float = -1.0
    history: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class TrainResult:
    checkpoint: str
    selection: ValSelection
    loss_history: list[float]


def _remap_labels(labels: WeakLabelSet, multiclass: bool) -> WeakLabelSet:
    # single-error-type recipe: mixed labels collapse deterministically to
    # under-segmentation (the synthetic rater's own tie-break direction)
    if multiclass or 2 not in labels.error_labels:
        return labels
    return WeakLabelSet(
        scores=labels.scores,
        error_labels=tuple(-1 if l == 2 else l for l in labels.error_labels),
    )


def _prior_volume(img: Volume3, cfg: TrainConfig) -> np.ndarray:
    if not cfg.switches.use_prior:
        return np.zeros(img.dims)
    return build_prior(img, cfg.prior).prior.data.astype(np.float64)


def _infer(params: RefinerParams, img: Volume3, init: RegionMaskSet, use_prior: bool,
           prior_cfg) -> np.ndarray:
    """Forward pass without augmentation; returns soft per-region maps."""
    if img.dims != init.dims:
        raise GridError(f"image grid {img.dims} != mask grid {init.dims}")
    if init.K != params.cfg.K:
        raise CheckpointError(
            f"checkpoint expects K={params.cfg.K}, case has K={init.K}")
    p = build_prior(img, prior_cfg).prior.data.astype(np.float64) if use_prior \
        else np.zeros(img.dims)
    y, _ = forward(params, normalize_intensity(img.data), init.masks, p)
    return y


def _validate_score(params, val_cases, use_prior, prior_cfg) -> float:
    scores = []
    for case in val_cases:
        y = _infer(params, case.image, case.init_masks, use_prior, prior_cfg)
        for k in range(case.gt_masks.K):
            scores.append(dice(y[k] > 0.5, case.gt_masks.region(k)))
    return float(np.mean(scores))


def train(cfg: TrainConfig) -> TrainResult:
    """Run the full training loop and keep the best-validation checkpoint."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loader = TrainLoader(cfg.train_manifest)
    val_cases = load_val_cases(cfg.val_manifest)

    loss_cfg = replace(cfg.loss, stab_background=cfg.switches.stab_background)
    params = init_params(cfg.refiner, seed=cfg.seed)
    rng_sample = np.random.default_rng((cfg.seed, 101))
    selection = ValSelection()
    best_params = None
    loss_history: list[float] = []

    for step in range(cfg.steps):
        idx = int(rng_sample.integers(len(loader)))
        sample = loader[idx]
        rng = np.random.default_rng((cfg.seed, 202, step))

        img = intensity_augment(sample.image, cfg.augment, rng)
        img, masks_arr, _ = spatial_augment(img, sample.init_masks.masks, None,
                                            cfg.augment, rng)
        scores = list(sample.labels.scores)
        errs = list(sample.labels.error_labels)
        if cfg.switches.morph_augment:
            for k in range(len(scores)):
                if errs[k] != 0 and masks_arr[k].any():
                    out, q_new = morph_augment(masks_arr[k], scores[k], errs[k],
                                               cfg.augment, rng)
                    masks_arr = masks_arr.copy()
                    masks_arr[k] = out.astype(np.uint8)
                    scores[k] = q_new
        labels = _remap_labels(WeakLabelSet(tuple(scores), tuple(errs)),
                               cfg.switches.multiclass_labels)

        prior_arr = _prior_volume(img, cfg)
        y, cache = forward(params, normalize_intensity(img.data), masks_arr, prior_arr)
        rep = total_loss(y, masks_arr, prior_arr, labels, loss_cfg)
        if not np.isfinite(rep.total):
            raise NumericError(
                f"non-finite loss {rep.total} at step {step} on case {sample.case_id}")
        loss_history.append(rep.total)
        grads = backward(params, cache, rep.grad)
        try:
            adam_step(params, grads, cfg.adam)
        except NumericError as exc:
            raise NumericError(f"step {step}, case {sample.case_id}: {exc}") from exc

        if (step + 1) % cfg.val_every == 0 or step + 1 == cfg.steps:
            score = _validate_score(params, val_cases, cfg.switches.use_prior, cfg.prior)
            selection.history.append((step + 1, score))
            if score > selection.best_score:
                selection.best_score = score
                selection.best_step = step + 1
                best_params = params.copy()

    if best_params is None:  # val_every > steps: fall back to the final state
        best_params = params.copy()
        selection.best_step = cfg.steps
        selection.best_score = _validate_score(
            best_params, val_cases, cfg.switches.use_prior, cfg.prior)
        selection.history.append((cfg.steps, selection.best_score))

    ckpt_path = out_dir / "refiner.ckpt"
    extra = {
        "seed": cfg.seed,
        "best_step": selection.best_step,
        "switches": {
            "multiclass_labels": cfg.switches.multiclass_labels,
            "use_prior": cfg.switches.use_prior,
            "morph_augment": cfg.switches.morph_augment,
            "stab_background": cfg.switches.stab_background,
        },
        "prior": {"hist_bins": cfg.prior.hist_bins,
                  "upper_percentile": cfg.prior.upper_percentile},
    }
    save_checkpoint(best_params, ckpt_path, extra=extra)
    with open(out_dir / "selection.json", "w", encoding="utf-8") as fh:
        json.dump({
            "best_step": selection.best_step,
            "best_score": selection.best_score,
            "history": selection.history,
        }, fh, indent=2)

    from .report import training_figures

    training_figures(loss_history, selection.history, out_dir)
    return TrainResult(checkpoint=str(ckpt_path), selection=selection,
                       loss_history=loss_history)


def refine(checkpoint_path, img: Volume3, init: RegionMaskSet) -> RegionMaskSet:
    """Load a checkpoint, build the prior, run the network, threshold."""
    params, extra = load_checkpoint(checkpoint_path)
    from .prior import PriorConfig

    pcfg = PriorConfig(**extra.get("prior", {})) if extra.get("prior") else PriorConfig()
    use_prior = extra.get("switches", {}).get("use_prior", True)
    y = _infer(params, img, init, use_prior, pcfg)
    return RegionMaskSet((y > 0.5).astype(np.uint8), img.spacing)


def evaluate(manifest_path, checkpoint_path, out_dir) -> dict:
    """Refine every GT-bearing case and report initial vs refined metrics."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = Path(manifest_path).parent
    records = load_manifest(manifest_path)
    params, extra = load_checkpoint(checkpoint_path)
    from .prior import PriorConfig

    pcfg = PriorConfig(**extra.get("prior", {})) if extra.get("prior") else PriorConfig()
    use_prior = extra.get("switches", {}).get("use_prior", True)

    initial_rows = []
    refined_rows = []
    skipped = 0
    for rec in records:
        if rec.gt_masks is None:
            skipped += 1
            continue
        img = read_volume(root / rec.image)
        init = read_masks(root / rec.init_masks)
        gt = read_masks(root / rec.gt_masks)
        y = _infer(params, img, init, use_prior, pcfg)
        res_init = evaluate_case(init, gt)
        res_ref = evaluate_case(y, gt)
        for r in res_init.regions:
            initial_rows.append((rec.case_id, r))
        for r in res_ref.regions:
            refined_rows.append((rec.case_id, r))

    from .report import evaluation_report

    summary = evaluation_report(initial_rows, refined_rows, skipped, out_dir)
    return summary

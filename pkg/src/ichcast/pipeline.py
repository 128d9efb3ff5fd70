"""Staged pipeline: seeded, resumable, file-based.

Every stage consumes its predecessor's outputs from the run directory,
writes its own outputs plus an entry in the top-level ``manifest.json``
(stage hash chained from the relevant config subset and the predecessor
hash), and is a no-op when rerun with identical inputs. Results are pure
functions of (config, seed) and independent of the worker count.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import learn
from .config import canonical_json, config_hash
from .evaluate import (
    BootstrapResult,
    SplitPlan,
    bootstrap_cis,
    make_splits,
    pr_metrics,
    roc_metrics,
    timeliness,
)
from .extract import extract_record
from .labels import (
    LabelTrack,
    build_label_track,
    detect_events,
    IchEvent,
    minutes_to_next_event,
    write_label_csv,
)
from .learn import ModelArtifact, SgdConfig, Standardizer, train_logreg
from .records import (
    CohortFilter,
    Record,
    load_record,
    save_record,
    save_truth,
    seed_from,
    validate_segment,
)
from .schema import FeatureSchema, build_schema
from .synth import CohortSpec, SynthConfig, synth_record

STAGE_ORDER = (
    "synth", "validate", "extract", "label", "split",
    "train", "evaluate", "rank", "timeliness", "report",
)

MANIFEST_NAME = "manifest.json"


class DataError(Exception):
    """Missing or stale stage inputs."""


def _stage_predecessors(cfg: dict, name: str) -> tuple[str, ...]:
    table = {
        "synth": (),
        "validate": ("synth",) if cfg["cohort"]["kind"] == "synth" else (),
        "extract": ("validate",),
        "label": ("extract",),
        "split": ("label",),
        "train": ("split",),
        "evaluate": ("train",),
        "rank": ("train",),
        "timeliness": ("evaluate",),
        "report": ("timeliness", "rank"),
    }
    return table[name]


def _stage_relevant_cfg(cfg: dict, name: str) -> dict:
    table = {
        "synth": cfg["cohort"],
        "validate": {"filter": cfg["filter"], "path": cfg["cohort"].get("path")},
        "extract": cfg["extract"],
        "label": cfg["label"],
        "split": cfg["split"],
        "train": cfg["train"],
        "evaluate": cfg["evaluate"],
        "rank": {"top_k": cfg["train"]["top_k"]},
        "timeliness": {"target_precision": cfg["evaluate"]["target_precision"]},
        "report": {},
    }
    return table[name]


def expected_stage_hash(cfg: dict, name: str) -> str:
    """Pure function of the run config: the hash this stage must carry."""
    import hashlib

    payload = canonical_json({
        "stage": name,
        "cfg": _stage_relevant_cfg(cfg, name),
        "seed": cfg["seed"],
        "pred": [expected_stage_hash(cfg, p) for p in _stage_predecessors(cfg, name)],
    })
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class RunContext:
    out: Path
    cfg: dict
    workers: int = 1

    def __post_init__(self):
        self.out = Path(self.out)
        self.out.mkdir(parents=True, exist_ok=True)

    # manifest helpers ----------------------------------------------------
    def _manifest_path(self) -> Path:
        return self.out / MANIFEST_NAME

    def read_manifest(self) -> dict:
        path = self._manifest_path()
        if path.is_file():
            return json.loads(path.read_text())
        return {"config_hash": config_hash(self.cfg), "stages": {}}

    def write_manifest(self, manifest: dict) -> None:
        manifest["config_hash"] = config_hash(self.cfg)
        self._manifest_path().write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )

    def stage_hash(self, name: str) -> str:
        """Expected hash for a stage; also verifies predecessor freshness."""
        manifest = self.read_manifest()
        for pred in _stage_predecessors(self.cfg, name):
            entry = manifest["stages"].get(pred)
            if entry is None:
                raise DataError(
                    f"stage '{name}' requires '{pred}' outputs; run it first"
                )
            if entry["hash"] != expected_stage_hash(self.cfg, pred):
                raise DataError(
                    f"stage '{pred}' outputs are stale (config or seed changed); "
                    f"rerun it before '{name}'"
                )
        return expected_stage_hash(self.cfg, name)

    def is_current(self, name: str, new_hash: str, outputs: list[Path]) -> bool:
        manifest = self.read_manifest()
        entry = manifest["stages"].get(name)
        if entry is None or entry["hash"] != new_hash:
            return False
        return all(Path(self.out / p).exists() for p in entry["outputs"])

    def record_stage(self, name: str, new_hash: str, outputs: list[Path]) -> None:
        manifest = self.read_manifest()
        manifest["stages"][name] = {
            "hash": new_hash,
            "outputs": sorted(str(p.relative_to(self.out)) for p in outputs),
        }
        self.write_manifest(manifest)


# ---------------------------------------------------------------------------
# synth

def _synth_one(args: tuple) -> str:
    cfg_kwargs, out_dir = args
    record, onsets = synth_record(SynthConfig(**cfg_kwargs))
    path = Path(out_dir) / record.segment_id
    save_record(record, path)
    save_truth(onsets, path)
    return record.segment_id


def _synth_configs(cohort_cfg: dict, seed: int) -> list[SynthConfig]:
    spec = CohortSpec(
        n_segments=int(cohort_cfg["n_segments"]),
        duration_hours=float(cohort_cfg["duration_hours"]),
        event_fraction=float(cohort_cfg["event_fraction"]),
        precursor_leads=tuple(cohort_cfg["precursor_leads"]),
        seed=seed_from(seed, "cohort"),
        channels=tuple(cohort_cfg["channels"]),
        onset_range=tuple(cohort_cfg["onset_range"]),
        heart_rate=float(cohort_cfg["heart_rate"]),
    )
    return spec.configs()


def stage_synth(ctx: RunContext) -> list[str]:
    cohort_cfg = ctx.cfg["cohort"]
    if cohort_cfg["kind"] != "synth":
        raise DataError("synth stage requires cohort.kind == 'synth'")
    h = ctx.stage_hash("synth")
    records_dir = ctx.out / "records"
    configs = _synth_configs(cohort_cfg, ctx.cfg["seed"])
    outputs = [records_dir / c.segment_id for c in configs]
    if ctx.is_current("synth", h, outputs):
        return [c.segment_id for c in configs]
    records_dir.mkdir(parents=True, exist_ok=True)
    from dataclasses import asdict

    tasks = [(asdict(c), str(records_dir)) for c in configs]
    _map_tasks(_synth_one, tasks, ctx.workers)
    ctx.record_stage("synth", h, outputs)
    return [c.segment_id for c in configs]


def _map_tasks(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(workers) as pool:
        return pool.map(fn, tasks)


def records_dir_of(ctx: RunContext) -> Path:
    cohort_cfg = ctx.cfg["cohort"]
    if cohort_cfg["kind"] == "disk":
        return Path(cohort_cfg["path"])
    return ctx.out / "records"


def list_segments(records_dir: Path) -> list[str]:
    if not records_dir.is_dir():
        raise DataError(f"records directory not found: {records_dir}")
    return sorted(p.name for p in records_dir.iterdir() if (p / "manifest.json").is_file())


# ---------------------------------------------------------------------------
# validate

def stage_validate(ctx: RunContext) -> list[str]:
    filt_cfg = ctx.cfg["filter"]
    h = ctx.stage_hash("validate")
    out_path = ctx.out / "cohort.json"
    if ctx.is_current("validate", h, [out_path]):
        return json.loads(out_path.read_text())["accepted"]
    records_dir = records_dir_of(ctx)
    segment_ids = list_segments(records_dir)
    filt = CohortFilter(
        min_hours=float(filt_cfg["min_hours"]),
        max_missing_ratio=float(filt_cfg["max_missing_ratio"]),
    )
    enabled = bool(filt_cfg.get("enabled", True))
    accepted, report = [], {}
    for seg in segment_ids:
        record = load_record(records_dir / seg)
        assessment = validate_segment(record, filt)
        ok = assessment.accepted or not enabled
        report[seg] = {
            "accepted": ok,
            "duration_hours": assessment.duration_hours,
            "missing_ratios": assessment.missing_ratios,
            "reasons": list(assessment.reasons),
        }
        if ok:
            accepted.append(seg)
    out_path.write_text(json.dumps(
        {"accepted": accepted, "filter_enabled": enabled, "segments": report},
        indent=2, sort_keys=True,
    ))
    ctx.record_stage("validate", h, [out_path])
    return accepted


def accepted_segments(ctx: RunContext) -> list[str]:
    path = ctx.out / "cohort.json"
    if not path.is_file():
        raise DataError("cohort.json missing; run the validate stage first")
    return json.loads(path.read_text())["accepted"]


# ---------------------------------------------------------------------------
# extract

def schema_from_config(extract_cfg: dict) -> FeatureSchema:
    return build_schema(
        channels=tuple(extract_cfg["channels"]),
        categories=tuple(extract_cfg["categories"]),
        summaries=tuple(extract_cfg["summaries"]),
        max_scale=int(extract_cfg["max_scale"]),
    )


def _extract_one(args: tuple) -> str:
    records_dir, seg, out_dir, extract_cfg = args
    record = load_record(Path(records_dir) / seg)
    schema = schema_from_config(extract_cfg)
    plausibility = {k: tuple(v) for k, v in extract_cfg["plausibility"].items()}
    result = extract_record(record, schema, plausibility=plausibility)
    seg_dir = Path(out_dir) / seg
    seg_dir.mkdir(parents=True, exist_ok=True)
    np.save(seg_dir / "features.npy", result.features)
    np.save(seg_dir / "icp_medians.npy", result.icp_medians)
    if extract_cfg.get("write_csv"):
        _write_feature_csv(seg_dir / "features.csv", result.features, schema)
    return seg


def _write_feature_csv(path: Path, features: np.ndarray, schema: FeatureSchema) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("minute",) + schema.column_names)
        for m, row in enumerate(features):
            writer.writerow(
                [m] + ["nan" if not np.isfinite(v) else repr(float(v)) for v in row]
            )


def stage_extract(ctx: RunContext) -> None:
    extract_cfg = ctx.cfg["extract"]
    h = ctx.stage_hash("extract")
    features_dir = ctx.out / "features"
    segments = accepted_segments(ctx)
    schema = schema_from_config(extract_cfg)
    outputs = [features_dir / "schema.json"]
    outputs += [features_dir / seg / "features.npy" for seg in segments]
    if ctx.is_current("extract", h, outputs):
        return
    features_dir.mkdir(parents=True, exist_ok=True)
    (features_dir / "schema.json").write_text(
        json.dumps(schema.to_dict(), indent=2, sort_keys=True)
    )
    records_dir = records_dir_of(ctx)
    tasks = [(str(records_dir), seg, str(features_dir), extract_cfg) for seg in segments]
    _map_tasks(_extract_one, tasks, ctx.workers)
    ctx.record_stage("extract", h, outputs)


def load_features(ctx: RunContext, seg: str, mmap: bool = True) -> np.ndarray:
    path = ctx.out / "features" / seg / "features.npy"
    if not path.is_file():
        raise DataError(f"features missing for segment {seg}; run extract")
    return np.load(path, mmap_mode="r" if mmap else None)


def load_icp_medians(ctx: RunContext, seg: str) -> np.ndarray:
    return np.load(ctx.out / "features" / seg / "icp_medians.npy")


def load_schema(ctx: RunContext) -> FeatureSchema:
    path = ctx.out / "features" / "schema.json"
    if not path.is_file():
        raise DataError("schema.json missing; run extract")
    data = json.loads(path.read_text())
    schema = build_schema(
        channels=tuple(data["channels"]),
        categories=tuple(data["categories"]),
        summaries=tuple(data["summaries"]),
        max_scale=max(data["scales"]),
    )
    if list(schema.column_names) != data["columns"]:
        raise DataError("stored schema.json does not match this build's catalog")
    return schema


# ---------------------------------------------------------------------------
# label

def stage_label(ctx: RunContext) -> None:
    label_cfg = ctx.cfg["label"]
    h = ctx.stage_hash("label")
    labels_dir = ctx.out / "labels"
    segments = accepted_segments(ctx)
    outputs = [labels_dir / "summary.json"]
    outputs += [labels_dir / f"{seg}.npz" for seg in segments]
    outputs += [labels_dir / f"{seg}.csv" for seg in segments]
    if ctx.is_current("label", h, outputs):
        return
    labels_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for seg in segments:
        medians = load_icp_medians(ctx, seg)
        events = detect_events(
            medians, threshold=float(label_cfg["threshold"]), run=int(label_cfg["run"])
        )
        track = build_label_track(events, len(medians), horizon=int(label_cfg["horizon"]))
        dist = minutes_to_next_event(events, len(medians))
        np.savez(
            labels_dir / f"{seg}.npz",
            classes=track.classes,
            minutes_to_event=dist,
            event_bounds=np.array(
                [(e.start_minute, e.end_minute) for e in events], dtype=np.int64
            ).reshape(-1, 2),
        )
        write_label_csv(track, labels_dir / f"{seg}.csv")
        counts = track.counts()
        summary[seg] = {
            "events": [[e.start_minute, e.end_minute] for e in events],
            **counts,
        }
    (labels_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    ctx.record_stage("label", h, outputs)


def load_labels(ctx: RunContext, seg: str) -> dict:
    path = ctx.out / "labels" / f"{seg}.npz"
    if not path.is_file():
        raise DataError(f"labels missing for segment {seg}; run label")
    data = np.load(path)
    events = [IchEvent(int(a), int(b)) for a, b in data["event_bounds"]]
    return {
        "classes": data["classes"],
        "minutes_to_event": data["minutes_to_event"],
        "events": events,
    }


def label_summary(ctx: RunContext) -> dict:
    path = ctx.out / "labels" / "summary.json"
    if not path.is_file():
        raise DataError("label summary missing; run label")
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# split

def stage_split(ctx: RunContext) -> SplitPlan:
    split_cfg = ctx.cfg["split"]
    h = ctx.stage_hash("split")
    out_path = ctx.out / "splits.json"
    if ctx.is_current("split", h, [out_path]):
        return SplitPlan.from_dict(json.loads(out_path.read_text()))
    summary = label_summary(ctx)
    segments = accepted_segments(ctx)
    plan = make_splits(
        segments,
        pos_counts={s: summary[s]["positive"] for s in segments},
        neg_counts={s: summary[s]["negative"] for s in segments},
        n_splits=int(split_cfg["n_splits"]),
        ratios=tuple(split_cfg["ratios"]),
        tol=float(split_cfg["tolerance"]),
        seed=seed_from(ctx.cfg["seed"], "split"),
        budget=int(split_cfg["budget"]),
    )
    out_path.write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True))
    ctx.record_stage("split", h, [out_path])
    return plan


def load_splits(ctx: RunContext) -> SplitPlan:
    path = ctx.out / "splits.json"
    if not path.is_file():
        raise DataError("splits.json missing; run split")
    return SplitPlan.from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# train

def _gather_rows(
    ctx: RunContext, segments: tuple[str, ...]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[tuple[str, np.ndarray]]]:
    """Stack labeled rows of the given segments.

    Returns (X, y, minutes_to_event, per-segment labeled masks).
    """
    xs, ys, dists, masks = [], [], [], []
    for seg in segments:
        feats = load_features(ctx, seg)
        lab = load_labels(ctx, seg)
        classes = lab["classes"]
        mask = (classes == 0) | (classes == 1)
        xs.append(np.asarray(feats[mask], dtype=np.float64))
        ys.append((classes[mask] == 1).astype(np.int64))
        dists.append(lab["minutes_to_event"][mask])
        masks.append((seg, mask))
    return np.vstack(xs), np.concatenate(ys), np.concatenate(dists), masks


def _bl_matrices(ctx: RunContext, segments: tuple[str, ...], schema: FeatureSchema):
    """BL1 (40 pulse-median columns) and BL2 (3 columns) labeled rows."""
    bl1_cols = _bl1_columns(schema)
    bl1_rows, bl2_rows = [], []
    for seg in segments:
        lab = load_labels(ctx, seg)
        classes = lab["classes"]
        mask = (classes == 0) | (classes == 1)
        if bl1_cols is not None:
            feats = load_features(ctx, seg)
            bl1_rows.append(np.asarray(feats[:, bl1_cols][mask], dtype=np.float64))
        medians = load_icp_medians(ctx, seg)
        bl2 = learn.bl2_features(medians, lab["events"])
        bl2_rows.append(bl2[mask])
    bl1 = np.vstack(bl1_rows) if bl1_rows else None
    return bl1, np.vstack(bl2_rows)


def _bl1_columns(schema: FeatureSchema) -> np.ndarray | None:
    from .pulse import ICP_METRIC_NAMES

    names = schema.column_names
    wanted = [
        f"Med(IcpPulse_{metric}(wICP))@{scale}"
        for metric in ICP_METRIC_NAMES
        for scale in (15, 30)
    ]
    if not all(w in names for w in wanted):
        return None
    index = {n: i for i, n in enumerate(names)}
    return np.array([index[w] for w in wanted], dtype=np.intp)


def _grid_cells(train_cfg: dict) -> list[dict]:
    grid = train_cfg["grid"]
    return [
        {"lam": lam, "epochs": epochs, "lr": lr}
        for lam in grid["lam"]
        for epochs in grid["epochs"]
        for lr in grid["lr"]
    ]


def _fit_with_grid(
    Xs_train, y_train, Xs_val, y_val, cells, batch_size, seed_parts, names
) -> tuple[ModelArtifact, list[dict]]:
    """Grid search by validation AUPRC; ties keep the earlier cell."""
    best = None
    results = []
    for i, cell in enumerate(cells):
        cfg = SgdConfig(
            lam=float(cell["lam"]), epochs=int(cell["epochs"]), lr=float(cell["lr"]),
            batch_size=batch_size, seed=seed_from(*seed_parts, i),
        )
        model = train_logreg(Xs_train, y_train, cfg, feature_names=names)
        val_scores = model.predict_proba(Xs_val)
        auprc = pr_metrics(val_scores, y_val)["auprc"]
        results.append({**cell, "val_auprc": auprc})
        if best is None or auprc > best[0]:
            best = (auprc, model)
    return best[1], results


def _train_one_model(ctx, Xtr, ytr, Xva, yva, names, seed_parts, top_k=None):
    """Standardize, optionally select top-k by Shapley importance, grid-fit."""
    train_cfg = ctx.cfg["train"]
    std = Standardizer.fit(Xtr)
    Xs_tr = std.apply(Xtr)
    Xs_va = std.apply(Xva)
    importance = None
    selected = np.arange(Xtr.shape[1])
    if top_k is not None and Xtr.shape[1] > top_k:
        s1 = train_cfg["stage1"]
        stage1 = train_logreg(
            Xs_tr, ytr,
            SgdConfig(
                lam=float(s1["lam"]), epochs=int(s1["epochs"]), lr=float(s1["lr"]),
                batch_size=int(train_cfg["batch_size"]),
                seed=seed_from(*seed_parts, "stage1"),
            ),
            feature_names=names,
        )
        importance = learn.global_importance(stage1, Xs_va)
        selected = learn.select_top_features(importance, k=top_k)
    sel_names = tuple(names[i] for i in selected)
    sub_std = Standardizer(
        mean=std.mean[selected], std=std.std[selected], constant=std.constant[selected]
    )
    model, grid_results = _fit_with_grid(
        Xs_tr[:, selected], ytr, Xs_va[:, selected], yva,
        _grid_cells(train_cfg), int(train_cfg["batch_size"]), seed_parts, sel_names,
    )
    model.standardizer = sub_std
    return model, selected, importance, grid_results


def stage_train(ctx: RunContext) -> None:
    train_cfg = ctx.cfg["train"]
    h = ctx.stage_hash("train")
    models_dir = ctx.out / "models"
    plan = load_splits(ctx)
    outputs = []
    for k in range(len(plan.splits)):
        outputs += [models_dir / f"split{k:02d}" / "model.json"]
    if ctx.is_current("train", h, outputs):
        return
    schema = load_schema(ctx)
    names = schema.column_names
    all_outputs = []
    for k, split in enumerate(plan.splits):
        split_dir = models_dir / f"split{k:02d}"
        split_dir.mkdir(parents=True, exist_ok=True)
        Xtr, ytr, _, _ = _gather_rows(ctx, split.train)
        Xva, yva, _, _ = _gather_rows(ctx, split.val)
        model, selected, importance, grid_results = _train_one_model(
            ctx, Xtr, ytr, Xva, yva, names,
            seed_parts=(ctx.cfg["seed"], "train", k), top_k=int(train_cfg["top_k"]),
        )
        model.save(split_dir / "model.json")
        if importance is not None:
            np.save(split_dir / "importance.npy", importance)
        (split_dir / "selected.json").write_text(
            json.dumps([names[i] for i in selected], indent=2)
        )
        (split_dir / "grid.json").write_text(json.dumps(grid_results, indent=2))

        if "bl1" in train_cfg["baselines"] or "bl2" in train_cfg["baselines"]:
            bl1_tr, bl2_tr = _bl_matrices(ctx, split.train, schema)
            bl1_va, bl2_va = _bl_matrices(ctx, split.val, schema)
            if "bl1" in train_cfg["baselines"] and bl1_tr is not None:
                bl1_names = tuple(
                    f"BL1_{i}" for i in range(bl1_tr.shape[1])
                )
                bl1_model, _, _, _ = _train_one_model(
                    ctx, bl1_tr, ytr, bl1_va, yva, bl1_names,
                    seed_parts=(ctx.cfg["seed"], "bl1", k),
                )
                bl1_model.save(split_dir / "bl1.json")
            if "bl2" in train_cfg["baselines"]:
                bl2_names = ("BL2_icp_t", "BL2_icp_prev", "BL2_mins_since_event")
                bl2_model, _, _, _ = _train_one_model(
                    ctx, bl2_tr, ytr, bl2_va, yva, bl2_names,
                    seed_parts=(ctx.cfg["seed"], "bl2", k),
                )
                bl2_model.save(split_dir / "bl2.json")
        all_outputs.append(split_dir / "model.json")
    ctx.record_stage("train", h, all_outputs)


def load_model(ctx: RunContext, split_idx: int, name: str = "model") -> ModelArtifact:
    path = ctx.out / "models" / f"split{split_idx:02d}" / f"{name}.json"
    if not path.is_file():
        raise DataError(f"model {name} for split {split_idx} missing; run train")
    return ModelArtifact.from_json(path.read_text())


# ---------------------------------------------------------------------------
# evaluate

_METRIC_FNS = {
    "auprc": lambda s, y: pr_metrics(s, y)["auprc"],
    "prec_at_75_rec": lambda s, y: pr_metrics(s, y)["prec_at_75_rec"],
    "prec_at_90_rec": lambda s, y: pr_metrics(s, y)["prec_at_90_rec"],
    "auroc": lambda s, y: roc_metrics(s, y)["auroc"],
    "spec_at_75_sens": lambda s, y: roc_metrics(s, y)["spec_at_75_sens"],
    "spec_at_90_sens": lambda s, y: roc_metrics(s, y)["spec_at_90_sens"],
}


def _model_test_scores(ctx, split, schema, split_idx, model_name):
    if model_name == "model":
        X, y, dist, _ = _gather_rows(ctx, split.test)
        model = load_model(ctx, split_idx, "model")
        names = schema.column_names
        index = {n: i for i, n in enumerate(names)}
        cols = np.array([index[n] for n in model.feature_names], dtype=np.intp)
        scores = model.predict_proba(model.standardizer.apply(X[:, cols]))
    elif model_name == "bl1":
        cols = _bl1_columns(schema)
        if cols is None:
            return None
        X, y, dist, _ = _gather_rows(ctx, split.test)
        model = load_model(ctx, split_idx, "bl1")
        scores = model.predict_proba(model.standardizer.apply(X[:, cols]))
    elif model_name == "bl2":
        _, bl2 = _bl_matrices(ctx, split.test, schema)
        _, y, dist, _ = _gather_rows(ctx, split.test)
        model = load_model(ctx, split_idx, "bl2")
        scores = model.predict_proba(model.standardizer.apply(bl2))
    else:
        raise ValueError(model_name)
    return scores, y, dist


def stage_evaluate(ctx: RunContext) -> dict:
    eval_cfg = ctx.cfg["evaluate"]
    h = ctx.stage_hash("evaluate")
    eval_dir = ctx.out / "eval"
    out_path = eval_dir / "metrics.json"
    plan = load_splits(ctx)
    score_paths = [
        eval_dir / f"scores_split{k:02d}.npz" for k in range(len(plan.splits))
    ]
    if ctx.is_current("evaluate", h, [out_path] + score_paths):
        return json.loads(out_path.read_text())
    eval_dir.mkdir(parents=True, exist_ok=True)
    schema = load_schema(ctx)
    model_names = ["model"] + [
        b for b in ctx.cfg["train"]["baselines"] if b in ("bl1", "bl2")
    ]
    per_split_rows: dict[str, list] = {m: [] for m in model_names}
    for k, split in enumerate(plan.splits):
        payload = {}
        for m in model_names:
            result = _model_test_scores(ctx, split, schema, k, m)
            if result is None:
                continue
            scores, y, dist = result
            per_split_rows[m].append((scores, y))
            payload[f"{m}_scores"] = scores
            if "labels" not in payload:
                payload["labels"] = y
                payload["minutes_to_event"] = dist
        np.savez(score_paths[k], **payload)

    metrics: dict = {"models": {}, "per_split": {}}
    for m in model_names:
        rows = per_split_rows[m]
        if not rows:
            continue
        entry = {}
        for metric_name, fn in _METRIC_FNS.items():
            per_split_vals = [fn(s, y) for s, y in rows]
            if any(v is None for v in per_split_vals):
                entry[metric_name] = {"point": None, "per_split": per_split_vals}
                continue
            boot = bootstrap_cis(
                rows, fn,
                n_boot=int(eval_cfg["n_boot"]), frac=float(eval_cfg["boot_frac"]),
                seed=seed_from(ctx.cfg["seed"], "boot", m, metric_name),
            )
            entry[metric_name] = {
                **boot.to_dict(), "per_split": per_split_vals,
            }
        metrics["models"][m] = entry
    out_path.write_text(json.dumps(metrics, indent=2, sort_keys=True))
    ctx.record_stage("evaluate", h, [out_path] + score_paths)
    return metrics


# ---------------------------------------------------------------------------
# rank

def stage_rank(ctx: RunContext) -> None:
    h = ctx.stage_hash("rank")
    rank_dir = ctx.out / "rank"
    outputs = [rank_dir / "rankings.csv", rank_dir / "rankings_grouped.csv"]
    if ctx.is_current("rank", h, outputs):
        return
    rank_dir.mkdir(parents=True, exist_ok=True)
    plan = load_splits(ctx)
    schema = load_schema(ctx)
    names = schema.column_names
    top_k = int(ctx.cfg["train"]["top_k"])
    gs, top_sets = [], []
    for k in range(len(plan.splits)):
        path = ctx.out / "models" / f"split{k:02d}" / "importance.npy"
        if not path.is_file():
            raise DataError(f"importance for split {k} missing; run train")
        g = np.load(path)
        gs.append(g)
        top_sets.append(set(learn.select_top_features(g, k=top_k).tolist()))
    mean_rank = learn.aggregate_ranks(gs)
    mean_g = np.mean(np.vstack(gs), axis=0)
    order = np.lexsort((np.arange(len(mean_rank)), mean_rank))
    with (rank_dir / "rankings.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["global_rank", "feature", "mean_rank", "mean_importance"])
        for pos, i in enumerate(order, start=1):
            writer.writerow([pos, names[i], f"{mean_rank[i]:.2f}", repr(float(mean_g[i]))])

    # Table-style grouping: one row per scale-free descriptor, listing the
    # scales that made a split-level top-100, ordered by inclusion count.
    from .schema import parse_column_name

    groups: dict[str, dict] = {}
    for pos, i in enumerate(order, start=1):
        summary, basic, scale = parse_column_name(names[i])
        desc = names[i] if basic is None else f"{summary}({basic})"
        entry = groups.setdefault(desc, {"best_rank": pos, "scales": {}})
        if scale is not None:
            inclusions = sum(1 for s in top_sets if i in s)
            if inclusions:
                entry["scales"][scale] = inclusions
    with (rank_dir / "rankings_grouped.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature_descriptor", "important_scales"])
        for desc, entry in sorted(groups.items(), key=lambda kv: kv[1]["best_rank"]):
            scales = sorted(
                entry["scales"].items(), key=lambda sv: (-sv[1], sv[0])
            )
            writer.writerow([
                entry["best_rank"], desc,
                ",".join(str(s) for s, _ in scales) or "N/A",
            ])
    ctx.record_stage("rank", h, outputs)


# ---------------------------------------------------------------------------
# timeliness

def stage_timeliness(ctx: RunContext) -> dict:
    eval_cfg = ctx.cfg["evaluate"]
    h = ctx.stage_hash("timeliness")
    eval_dir = ctx.out / "eval"
    out_path = eval_dir / "timeliness.json"
    csv_path = eval_dir / "timeliness.csv"
    if ctx.is_current("timeliness", h, [out_path, csv_path]):
        return json.loads(out_path.read_text())
    plan = load_splits(ctx)
    target = float(eval_cfg["target_precision"])
    alarms_per_hour = np.zeros(8)
    pos_per_hour = np.zeros(8)
    per_split = []
    for k in range(len(plan.splits)):
        data = np.load(eval_dir / f"scores_split{k:02d}.npz")
        result = timeliness(
            data["model_scores"], data["labels"], data["minutes_to_event"],
            target_precision=target,
        )
        recalls = result["recall_per_hour"]
        counts = result["positives_per_hour"]
        recalled = np.where(np.isfinite(recalls), recalls, 0.0) * counts
        alarms_per_hour += recalled
        pos_per_hour += counts
        per_split.append({
            "threshold": result["threshold"],
            "recall_per_hour": [None if not np.isfinite(r) else float(r) for r in recalls],
            "positives_per_hour": counts.tolist(),
        })
    with np.errstate(invalid="ignore"):
        pooled = alarms_per_hour / pos_per_hour
    payload = {
        "target_precision": target,
        "pooled_recall_per_hour": [
            None if not np.isfinite(r) else float(r) for r in pooled
        ],
        "pooled_positives_per_hour": pos_per_hour.tolist(),
        "per_split": per_split,
    }
    out_path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hours_before_onset", "recall", "n_positives"])
        for hidx in range(8):
            r = pooled[hidx]
            writer.writerow([
                hidx + 1, "" if not np.isfinite(r) else repr(float(r)),
                int(pos_per_hour[hidx]),
            ])
    ctx.record_stage("timeliness", h, [out_path, csv_path])
    return payload


# ---------------------------------------------------------------------------
# report

def stage_report(ctx: RunContext) -> Path:
    from .report import render_report

    h = ctx.stage_hash("report")
    report_dir = ctx.out / "report"
    out_path = report_dir / "report.json"
    if ctx.is_current("report", h, [out_path]):
        return out_path
    outputs = render_report(ctx)
    ctx.record_stage("report", h, outputs)
    return out_path


STAGE_FNS = {
    "synth": stage_synth,
    "validate": stage_validate,
    "extract": stage_extract,
    "label": stage_label,
    "split": stage_split,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "rank": stage_rank,
    "timeliness": stage_timeliness,
    "report": stage_report,
}


def run_stages(ctx: RunContext, stages: list[str]) -> None:
    for name in stages:
        STAGE_FNS[name](ctx)


def run_all(ctx: RunContext) -> None:
    stages = list(STAGE_ORDER)
    if ctx.cfg["cohort"]["kind"] != "synth":
        stages.remove("synth")
    run_stages(ctx, stages)

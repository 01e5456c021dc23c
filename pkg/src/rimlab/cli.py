"""Command-line pipeline: simulate | segment | features | train |
evaluate | cv | importance | serve.

Every command reads an optional JSON config file (--config or the
RIMLAB_CONFIG env var) whose sections mirror the dataclass fields of
SimConfig / LevelSetParams / BoostParams; explicit CLI flags win over
config values.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import rvol
from .classifier import (
    BoostParams,
    aggregate_importance,
    feature_importance,
    load_model,
    predict_proba,
    save_model,
    train as train_model,
)
from .evaluation import (
    ScoredLesion,
    confusion_metrics,
    crossvalidate,
    f1_threshold,
    roc_pr_curves,
    stratified_folds,
    dice as dice_score,
)
from .features import RIMSET_NAMES, extract_rimset, rimset_csv_header, rimset_csv_row
from .rimseg import LevelSetParams, rimseg
from .simulator import DatasetManifest, SimConfig, generate_dataset, load_patch
from .version import __version__


def _load_config(config_path: str | None) -> dict:
    if config_path is None:
        import os

        config_path = os.environ.get("RIMLAB_CONFIG")
    if not config_path:
        return {}
    try:
        return json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {config_path}: {exc}")


def _merge(cls, section: dict, overrides: dict):
    """Dataclass from defaults <- config section <- explicit CLI flags."""
    known = set(cls.__dataclass_fields__)
    bad = set(section) - known
    if bad:
        raise click.ClickException(f"unknown {cls.__name__} config keys: {sorted(bad)}")
    merged = {**section, **{k: v for k, v in overrides.items() if v is not None}}
    for key in ("dims", "spacing", "noise_sigmas"):
        if key in merged and isinstance(merged[key], list):
            merged[key] = tuple(merged[key])
    return replace(cls(), **merged)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file (default: $RIMLAB_CONFIG).")
@click.pass_context
def main(ctx, config_path):
    """Rim lesion simulation, segmentation, and classification pipeline."""
    ctx.obj = _load_config(config_path)


@main.command()
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--count-rim-plus", type=int, default=None)
@click.option("--count-rim-minus", type=int, default=None)
@click.pass_obj
def simulate(config, out_dir, seed, count_rim_plus, count_rim_minus):
    """Generate a seeded synthetic lesion dataset with a manifest."""
    sim = _merge(SimConfig, config.get("simulator", {}), {
        "seed": seed,
        "n_rim_plus": count_rim_plus,
        "n_rim_minus": count_rim_minus,
    })
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = generate_dataset(sim, out)
    n_plus = sum(1 for e in manifest.entries if e.label == "rim+")
    click.echo(f"wrote {len(manifest.entries)} lesions "
               f"({n_plus} rim+, {len(manifest.entries) - n_plus} rim-) to {out}")


def _levelset_params(config: dict, w_values, extra: dict | None = None) -> LevelSetParams:
    params = _merge(LevelSetParams, config.get("levelset", {}), extra or {})
    params.validate()
    return params


def _segment_entry(manifest, entry, dataset_dir, w, params):
    patch = load_patch(manifest, entry, dataset_dir)
    result = rimseg(patch, w=w, params=params)
    d = (dice_score(result.high_mask, patch.gt_rim_mask)
         if patch.gt_rim_mask is not None else None)
    return patch, result, d


def _result_record(result) -> dict:
    rec = {
        "c1": result.c1, "c2": result.c2,
        "c1_ppb": result.c1_ppb, "c2_ppb": result.c2_ppb,
        "iterations": result.iterations, "converged": result.converged,
        "final_energy": result.final_energy, "degenerate": result.degenerate,
    }
    if result.energy_trace is not None:
        rec["energy_trace"] = list(result.energy_trace)
    return rec


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True,
              help="Dataset directory containing manifest.json.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("-w", "w_values", type=float, multiple=True,
              help="Edge-weight value(s); repeatable. Default: params default.")
@click.option("--max-iters", type=int, default=None)
@click.option("--fidelity-exponent", type=int, default=None)
@click.pass_obj
def segment(config, dataset_dir, out_dir, w_values, max_iters, fidelity_exponent):
    """Segment every manifest lesion; write masks + a Dice table."""
    params = _levelset_params(config, w_values, {
        "max_iters": max_iters, "fidelity_exponent": fidelity_exponent})
    manifest = DatasetManifest.load(Path(dataset_dir) / "manifest.json")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ws = list(w_values) if w_values else [params.w]
    failures = 0
    rows = []
    for entry in manifest.entries:
        for w in ws:
            try:
                patch, result, d = _segment_entry(manifest, entry, dataset_dir, w, params)
            except Exception as exc:  # malformed file, bad mask, ...
                click.echo(f"error: {entry.lesion_id}: {exc}", err=True)
                failures += 1
                continue
            tag = entry.lesion_id if len(ws) == 1 else f"{entry.lesion_id}_w{w:g}"
            rvol.save_mask(out / f"{tag}.high.rvol", result.high_mask)
            rvol.save_mask(out / f"{tag}.low.rvol", result.low_mask)
            (out / f"{tag}.result.json").write_text(json.dumps(_result_record(result)))
            rows.append([entry.lesion_id, f"{w:g}",
                         "" if d is None else repr(d),
                         str(result.iterations), str(result.converged).lower()])
    with open(out / "dice.csv", "w", newline="") as f:
        wcsv = csv.writer(f)
        wcsv.writerow(["lesion_id", "w", "dice", "iterations", "converged"])
        wcsv.writerows(rows)
    scored = [float(r[2]) for r in rows if r[2]]
    if scored:
        click.echo(f"segmented {len(rows)} runs; mean dice {np.mean(scored):.4f}")
    else:
        click.echo(f"segmented {len(rows)} runs")
    if failures:
        raise click.ClickException(f"{failures} lesions failed")


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--seg", "seg_dir", type=click.Path(exists=True), required=True,
              help="Directory of segment outputs (<id>.high/low.rvol).")
@click.option("--out", "out_csv", type=click.Path(), required=True)
@click.option("--allow-partial", is_flag=True, default=False)
@click.pass_obj
def features(config, dataset_dir, seg_dir, out_csv, allow_partial):
    """Extract the 84-measurement vector per lesion into a CSV."""
    from .rimseg import RimSegResult

    manifest = DatasetManifest.load(Path(dataset_dir) / "manifest.json")
    seg = Path(seg_dir)
    missing = []
    rows = []
    for entry in manifest.entries:
        high_path = seg / f"{entry.lesion_id}.high.rvol"
        low_path = seg / f"{entry.lesion_id}.low.rvol"
        if not (high_path.exists() and low_path.exists()):
            missing.append(entry.lesion_id)
            continue
        patch = load_patch(manifest, entry, dataset_dir)
        high = rvol.load_mask(high_path)
        low = rvol.load_mask(low_path)
        result = RimSegResult(
            phi=np.zeros(patch.volume.dims), high_mask=high, low_mask=low,
            c1=0.0, c2=0.0, c1_ppb=0.0, c2_ppb=0.0,
            iterations=0, converged=True, final_energy=0.0)
        vec = extract_rimset(patch, result, entry.lesion_id)
        rows.append(rimset_csv_row(vec))
    with open(out_csv, "w", newline="") as f:
        wcsv = csv.writer(f)
        wcsv.writerow(rimset_csv_header())
        wcsv.writerows(rows)
    click.echo(f"wrote {len(rows)} rows to {out_csv}")
    if missing:
        for lid in missing:
            click.echo(f"missing segmentation: {lid}", err=True)
        if not allow_partial:
            raise click.ClickException(
                f"{len(missing)} lesions lack segmentations (use --allow-partial to skip)")


def read_feature_csv(path):
    """Read a feature CSV -> (ids, labels01, X, feature_names)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:2] != ["lesion_id", "label"]:
            raise click.ClickException(f"{path}: expected lesion_id,label leading columns")
        names = tuple(header[2:])
        ids, labels, rows = [], [], []
        for row in reader:
            ids.append(row[0])
            labels.append(1 if row[1] == "rim+" else 0)
            rows.append([float(v) for v in row[2:]])
    return ids, np.array(labels), np.array(rows, dtype=np.float64), names


def _boost_params(config: dict, overrides: dict) -> BoostParams:
    params = _merge(BoostParams, config.get("boost", {}), overrides)
    params.validate()
    return params


@main.command(name="train")
@click.option("--features", "features_csv", type=click.Path(exists=True), required=True)
@click.option("--out", "model_path", type=click.Path(), required=True)
@click.option("--n-trees", type=int, default=None)
@click.option("--max-depth", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.pass_obj
def train_cmd(config, features_csv, model_path, n_trees, max_depth, learning_rate):
    """Train the boosted-tree rim classifier from a feature CSV."""
    params = _boost_params(config, {
        "n_trees": n_trees, "max_depth": max_depth, "learning_rate": learning_rate})
    ids, y, X, names = read_feature_csv(features_csv)
    model = train_model(X, y, params, names)
    save_model(model, model_path)
    click.echo(f"trained {params.n_trees} trees on {len(ids)} lesions -> {model_path}")


@main.command()
@click.option("--features", "features_csv", type=click.Path(exists=True), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--out", "report_path", type=click.Path(), required=True)
@click.pass_obj
def evaluate(config, features_csv, model_path, report_path):
    """Score a test CSV against a trained model and report metrics."""
    ids, y, X, names = read_feature_csv(features_csv)
    model = load_model(model_path)
    if names != model.feature_names:
        raise click.ClickException(
            "feature CSV columns do not match the model's feature names")
    probs = predict_proba(model, X)
    scored = [ScoredLesion(i, i, int(lab), float(p))
              for i, lab, p in zip(ids, y, probs)]
    curve = roc_pr_curves(scored)
    threshold = f1_threshold(scored)
    metrics = confusion_metrics(scored, {0: threshold})
    report = {
        "n": len(ids),
        "threshold": threshold,
        "accuracy": metrics.accuracy,
        "f1": metrics.f1,
        "sensitivity": metrics.sensitivity,
        "specificity": metrics.specificity,
        "precision": metrics.precision,
        "errors": metrics.fp + metrics.fn,
        "roc_auc": curve.roc_auc,
        "proc_auc": curve.proc_auc,
        "pr_auc": curve.pr_auc,
        "scores": {i: float(p) for i, p in zip(ids, probs)},
    }
    Path(report_path).write_text(json.dumps(report))
    click.echo(f"accuracy {metrics.accuracy:.4f}  f1 {metrics.f1:.4f}  "
               f"errors {metrics.fp + metrics.fn}/{len(ids)}")


@main.command()
@click.option("--features", "features_csv", type=click.Path(exists=True), required=True)
@click.option("--out", "report_path", type=click.Path(), required=True)
@click.option("--folds", "k", type=int, default=5)
@click.option("--seed", type=int, default=0)
@click.option("--subjects", "n_subjects", type=int, default=50,
              help="Pseudo-subject count for fold stratification.")
@click.option("--n-trees", type=int, default=None)
@click.option("--max-depth", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.pass_obj
def cv(config, features_csv, report_path, k, seed, n_subjects,
       n_trees, max_depth, learning_rate):
    """Stratified k-fold cross-validation over a feature CSV."""
    params = _boost_params(config, {
        "n_trees": n_trees, "max_depth": max_depth, "learning_rate": learning_rate})
    ids, y, X, names = read_feature_csv(features_csv)
    # the simulation has no subjects; deal lesions round-robin into
    # pseudo-subjects so the subject-level protocol still applies
    subject_ids = [f"sim{i % n_subjects:03d}" for i in range(len(ids))]
    counts: dict[str, int] = {}
    for sid, lab in zip(subject_ids, y):
        counts[sid] = counts.get(sid, 0) + int(lab)
    fold_of_subject = stratified_folds(counts, k=k, seed=seed)
    report = crossvalidate(X, y, ids, subject_ids, fold_of_subject, params, names)
    Path(report_path).write_text(json.dumps(report.to_json_dict()))
    click.echo(f"pooled accuracy {report.pooled.accuracy:.4f}  "
               f"f1 {report.pooled.f1:.4f}  mean ROC AUC {report.mean_roc_auc:.4f}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--report", "report_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_csv", type=click.Path(), required=True)
@click.pass_obj
def importance(config, model_path, report_path, out_csv):
    """Aggregated measurement importance (F-score), descending."""
    if (model_path is None) == (report_path is None):
        raise click.ClickException("pass exactly one of --model / --report")
    if model_path:
        model = load_model(model_path)
        rows = aggregate_importance(
            [feature_importance(model).astype(float)], model.feature_names)
    else:
        doc = json.loads(Path(report_path).read_text())
        rows = [(r["measurement"], r["fscore"]) for r in doc["importance"]]
    with open(out_csv, "w", newline="") as f:
        wcsv = csv.writer(f)
        wcsv.writerow(["measurement", "fscore"])
        for name, score in rows:
            wcsv.writerow([name, repr(float(score))])
    click.echo(f"wrote {len(rows)} measurement rows to {out_csv}")


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_obj
def serve(config, dataset_dir, host, port):
    """Run the interactive segmentation HTTP service."""
    import uvicorn

    from .service import create_app

    svc = config.get("service", {})
    host = host or svc.get("host", "127.0.0.1")
    port = port or svc.get("port", 8000)
    app = create_app(Path(dataset_dir))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())

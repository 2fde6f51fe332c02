"""Component ablations and lambda-sensitivity sweeps.

Each variant retrains from scratch per seed and reports test metrics;
the emitted CSV has one row per (variant, seed) plus mean/std aggregate
rows per variant.
"""

from __future__ import annotations

import csv
import io
from dataclasses import replace

import numpy as np

from .loop import TrainConfig, TrainResult, evaluate, train

ABLATION_VARIANTS = ("full", "no_caf", "no_cmft", "no_scl")

CSV_COLUMNS = ("variant", "seed", "accuracy", "macro_f1")


class AblationError(ValueError):
    pass


def variant_config(cfg: TrainConfig, variant: str) -> TrainConfig:
    """Derive a training config for one ablation variant: no_caf swaps
    cross-attention fusion for plain concatenation, no_cmft collapses the
    fusion stack to a single prototype attention step, no_scl zeroes the
    contrastive weight."""
    if variant == "full":
        return cfg
    if variant == "no_caf":
        return replace(cfg, model=replace(cfg.model, use_caf=False))
    if variant == "no_cmft":
        return replace(cfg, model=replace(cfg.model, use_cmft=False))
    if variant == "no_scl":
        return replace(cfg, lam=0.0)
    raise AblationError(f"unknown variant {variant!r}; expected one of {ABLATION_VARIANTS}")


def _run_one(cfg: TrainConfig, train_recs, val_recs, eval_recs, base_dir):
    result: TrainResult = train(cfg, train_recs, val_recs, base_dir=base_dir)
    metrics = evaluate(result.params, result.config, result.vocab, eval_recs,
                       base_dir=base_dir)
    return metrics


def run_ablation(cfg: TrainConfig, train_recs, val_recs, eval_recs,
                 variants=ABLATION_VARIANTS, seeds=(0, 1, 2), base_dir=None,
                 progress=None) -> list:
    """Rows of {variant, seed, accuracy, macro_f1}, plus per-variant
    mean/std aggregate rows."""
    if not seeds:
        raise AblationError("need at least one seed")
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise AblationError(f"unknown variant {v!r}; expected one of {ABLATION_VARIANTS}")
    rows = []
    for variant in variants:
        per_seed = []
        for seed in seeds:
            vcfg = replace(variant_config(cfg, variant), seed=int(seed))
            metrics = _run_one(vcfg, train_recs, val_recs, eval_recs, base_dir)
            row = {"variant": variant, "seed": int(seed),
                   "accuracy": metrics.accuracy, "macro_f1": metrics.macro_f1}
            rows.append(row)
            per_seed.append(metrics)
            if progress is not None:
                progress(row)
        accs = [m.accuracy for m in per_seed]
        f1s = [m.macro_f1 for m in per_seed]
        rows.append({"variant": variant, "seed": "mean",
                     "accuracy": float(np.mean(accs)), "macro_f1": float(np.mean(f1s))})
        rows.append({"variant": variant, "seed": "std",
                     "accuracy": float(np.std(accs)), "macro_f1": float(np.std(f1s))})
    return rows


def run_lambda_sweep(cfg: TrainConfig, train_recs, val_recs, eval_recs,
                     lambdas=(0.5, 1.0, 1.5, 2.0), seeds=(0,), base_dir=None,
                     progress=None) -> list:
    """Same row layout as ``run_ablation`` with variant = "lambda=x"."""
    if not seeds:
        raise AblationError("need at least one seed")
    rows = []
    for lam in lambdas:
        per_seed = []
        for seed in seeds:
            vcfg = replace(cfg, lam=float(lam), seed=int(seed))
            metrics = _run_one(vcfg, train_recs, val_recs, eval_recs, base_dir)
            row = {"variant": f"lambda={lam}", "seed": int(seed),
                   "accuracy": metrics.accuracy, "macro_f1": metrics.macro_f1}
            rows.append(row)
            per_seed.append(metrics)
            if progress is not None:
                progress(row)
        accs = [m.accuracy for m in per_seed]
        f1s = [m.macro_f1 for m in per_seed]
        rows.append({"variant": f"lambda={lam}", "seed": "mean",
                     "accuracy": float(np.mean(accs)), "macro_f1": float(np.mean(f1s))})
        rows.append({"variant": f"lambda={lam}", "seed": "std",
                     "accuracy": float(np.std(accs)), "macro_f1": float(np.std(f1s))})
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()

"""LOGO x k-fold evaluation driver and macro / left-out-class metrics.

Each run trains one network on the run's training split, fits every artifact
the requested approaches need on that same split, and scores the run's test
split. Known-class metrics are macro-averaged over the DGA classes present in
training (benign is reported separately); LOC metrics treat NEW_DGA as the
positive label for the left-out family.

Empty denominators score 0 -- chosen for cross-run determinism and noted in
the report footer.
"""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .detectors import (
    NEW_DGA,
    classify_baseline_batch,
    classify_combined_batch,
    classify_family_vector_batch,
    classify_fv_ensemble_batch,
    classify_fv_nearest_batch,
    classify_max_softmax_batch,
    classify_oc_ensemble_batch,
    classify_one_class_batch,
    classify_regex_ed_batch,
    classify_regex_topk_batch,
    excluded_early_taps,
    refit_artifacts,
    select_fv_ensemble_layers,
)
from .net import (
    CharVocab,
    encode_batch,
    extract_features,
    forward_batch,
    net_config_for,
    penultimate_tap,
    tap_registry,
    train_net,
    TrainConfig,
)
from .rng import derive_seed
from .synth import (
    BENIGN_LABEL,
    DatasetConfig,
    FamilySpec,
    LogoRun,
    build_dataset,
    make_logo_runs,
)

UNDEFINED_METRIC_NOTE = "undefined metrics (empty denominators) score 0"


@dataclass(frozen=True)
class MetricRow:
    f1: float
    precision: float
    recall: float
    loc_f1: float
    loc_precision: float
    loc_recall: float
    benign_f1: float


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return f1, precision, recall


def compute_macro_metrics(
    predictions: list[str], truth: list[str], known_classes: list[str]
) -> tuple[float, float, float, float]:
    """Macro F1/precision/recall over known DGA classes, plus benign F1."""
    if len(predictions) != len(truth):
        raise ValueError("prediction/truth length mismatch")
    f1s, ps, rs = [], [], []
    for c in known_classes:
        tp = sum(1 for p, t in zip(predictions, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(predictions, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(predictions, truth) if p != c and t == c)
        f1, precision, recall = _prf(tp, fp, fn)
        f1s.append(f1)
        ps.append(precision)
        rs.append(recall)
    tp = sum(1 for p, t in zip(predictions, truth) if p == BENIGN_LABEL and t == BENIGN_LABEL)
    fp = sum(1 for p, t in zip(predictions, truth) if p == BENIGN_LABEL and t != BENIGN_LABEL)
    fn = sum(1 for p, t in zip(predictions, truth) if p != BENIGN_LABEL and t == BENIGN_LABEL)
    benign_f1, _, _ = _prf(tp, fp, fn)
    if not f1s:
        return 0.0, 0.0, 0.0, benign_f1
    n = len(f1s)
    return sum(f1s) / n, sum(ps) / n, sum(rs) / n, benign_f1


def compute_loc_metrics(
    predictions: list[str], truth: list[str], left_out: str
) -> tuple[float, float, float]:
    """NEW_DGA as the positive label for the left-out family."""
    if left_out not in truth:
        raise ValueError(f"left-out class {left_out!r} absent from truth")
    tp = sum(1 for p, t in zip(predictions, truth) if t == left_out and p == NEW_DGA)
    fp = sum(1 for p, t in zip(predictions, truth) if t != left_out and p == NEW_DGA)
    fn = sum(1 for p, t in zip(predictions, truth) if t == left_out and p != NEW_DGA)
    f1, precision, recall = _prf(tp, fp, fn)
    return f1, precision, recall


def per_layer_report(per_tap_f1: dict[str, float]) -> dict:
    """F1 per tap plus the best tap; equal scores break to the earliest tap."""
    if not per_tap_f1:
        raise ValueError("empty per-layer map")
    taps = list(per_tap_f1)
    best = max(range(len(taps)), key=lambda i: (per_tap_f1[taps[i]], -i))
    return {"scores": dict(per_tap_f1), "best": taps[best]}


# ---------------------------------------------------------------------------
# approach registry

_MSX_RULES = {
    "max-softmax-p5": "P5",
    "max-softmax-p10": "P10",
    "max-softmax-min": "MIN",
    "max-softmax-min95": "MIN95",
    "max-softmax-min90": "MIN90",
}

APPROACHES = (
    ("baseline",)
    + ("regex-ed", "regex-top2", "regex-top3", "regex-top4", "regex-top5")
    + tuple(_MSX_RULES)
    + ("fv-mean", "fv-median", "fv-nearest", "oc-iforest", "oc-lof")
    + ("combined", "ensemble-fv-mean", "ensemble-oc-iforest", "ensemble-oc-lof")
)


def _artifact_keys(approach: str, fv_tap: str, oc_taps: tuple[str, ...]) -> list[str]:
    if approach == "baseline":
        return []
    if approach == "regex-ed" or approach.startswith("regex-top"):
        return ["regexes"]
    if approach in _MSX_RULES:
        return [f"softmax:{_MSX_RULES[approach]}"]
    if approach in ("fv-mean", "fv-nearest"):
        return [f"fv:{fv_tap}:mean"]
    if approach == "fv-median":
        return [f"fv:{fv_tap}:median"]
    if approach == "oc-iforest":
        return [f"oc:{fv_tap}:isolation-forest"]
    if approach == "oc-lof":
        return [f"oc:{fv_tap}:local-outlier-factor"]
    if approach == "combined":
        return ["regexes", f"fv:{fv_tap}:mean"]
    if approach == "ensemble-fv-mean":
        return [f"fv:{t}:mean" for t in oc_taps]
    if approach == "ensemble-oc-iforest":
        return [f"oc:{t}:isolation-forest" for t in oc_taps]
    if approach == "ensemble-oc-lof":
        return [f"oc:{t}:local-outlier-factor" for t in oc_taps]
    raise ValueError(f"unknown approach {approach!r}")


def approach_artifact_keys(approach, net_cfg, fv_tap=None):
    """Artifact keys an approach needs, with taps resolved against a config."""
    fv_tap = fv_tap or penultimate_tap(net_cfg)
    excluded = set(excluded_early_taps(net_cfg))
    oc_taps = tuple(
        t for t in tap_registry(net_cfg) if t not in excluded and t != "logits"
    )
    return _artifact_keys(approach, fv_tap, oc_taps)


@dataclass(frozen=True)
class EvalSettings:
    vocab: CharVocab
    train_cfg: TrainConfig
    approaches: tuple[str, ...]
    net_overrides: dict = field(default_factory=dict)
    fv_tap: str | None = None  # None -> penultimate
    master_seed: int = 0


def evaluate_run(run: LogoRun, settings: EvalSettings) -> list[dict]:
    """Train one bundle for a LOGO run and score every requested approach."""
    try:
        return _evaluate_run(run, settings)
    except Exception as e:
        raise RuntimeError(
            f"run fold={run.fold_index} left_out={run.left_out} failed: {e}"
        ) from e


def _evaluate_run(run: LogoRun, settings: EvalSettings) -> list[dict]:
    train = list(run.train)
    seed = derive_seed(settings.master_seed, f"fold:{run.fold_index}:{run.left_out}")
    train_cfg = replace(settings.train_cfg, rng_seed=seed)
    net_cfg = net_config_for(train, settings.vocab, **settings.net_overrides)
    bundle = train_net(train, settings.vocab, train_cfg, net_cfg)

    fv_tap = settings.fv_tap or penultimate_tap(net_cfg)
    keys: list[str] = []
    for a in settings.approaches:
        for k in approach_artifact_keys(a, net_cfg, fv_tap):
            if k not in keys:
                keys.append(k)
    arts = refit_artifacts(bundle, train, keys, seed=seed)
    bundle.artifacts = arts

    test = list(run.test)
    domains = [s.domain for s in test]
    truth = [s.label for s in test]
    ids = encode_batch(domains, settings.vocab)
    probs = forward_batch(bundle, ids)
    needed_taps = sorted(
        {k.split(":")[1] for k in keys if k.startswith(("fv:", "oc:"))}
    )
    feats = {t: extract_features(bundle, ids, t) for t in needed_taps}

    known = [c for c in bundle.classes if c != BENIGN_LABEL]
    rows = []
    for approach in settings.approaches:
        verdicts = _classify(approach, bundle, arts, probs, feats, domains, fv_tap, train)
        preds = [v.label for v in verdicts]
        f1, precision, recall, benign_f1 = compute_macro_metrics(preds, truth, known)
        loc_f1, loc_p, loc_r = compute_loc_metrics(preds, truth, run.left_out)
        rows.append(
            {
                "fold": run.fold_index,
                "left_out": run.left_out,
                "approach": approach,
                "metrics": asdict(
                    MetricRow(f1, precision, recall, loc_f1, loc_p, loc_r, benign_f1)
                ),
            }
        )
    return rows


def _classify(approach, bundle, arts, probs, feats, domains, fv_tap, train):
    if approach == "baseline":
        return classify_baseline_batch(bundle, probs)
    if approach == "regex-ed":
        return classify_regex_ed_batch(bundle, arts["regexes"], probs, domains)
    if approach.startswith("regex-top"):
        k = int(approach[len("regex-top"):])
        return classify_regex_topk_batch(bundle, arts["regexes"], probs, domains, k)
    if approach in _MSX_RULES:
        return classify_max_softmax_batch(
            bundle, arts[f"softmax:{_MSX_RULES[approach]}"], probs
        )
    if approach == "fv-mean":
        return classify_family_vector_batch(arts[f"fv:{fv_tap}:mean"], feats[fv_tap], probs)
    if approach == "fv-median":
        return classify_family_vector_batch(arts[f"fv:{fv_tap}:median"], feats[fv_tap], probs)
    if approach == "fv-nearest":
        return classify_fv_nearest_batch(arts[f"fv:{fv_tap}:mean"], feats[fv_tap], probs)
    if approach == "oc-iforest":
        return classify_one_class_batch(
            bundle, arts[f"oc:{fv_tap}:isolation-forest"], probs, feats[fv_tap]
        )
    if approach == "oc-lof":
        return classify_one_class_batch(
            bundle, arts[f"oc:{fv_tap}:local-outlier-factor"], probs, feats[fv_tap]
        )
    if approach == "combined":
        return classify_combined_batch(
            bundle, arts["regexes"], arts[f"fv:{fv_tap}:mean"], probs,
            feats[fv_tap], domains,
        )
    registry = tap_registry(bundle.net_cfg)
    if approach == "ensemble-fv-mean":
        models = sorted(
            (arts[k] for k in arts if k.startswith("fv:") and k.endswith(":mean")),
            key=lambda m: registry.index(m.tap),
        )
        # layer selection needs training data; without it, vote over all layers
        selected = _select_members(bundle, models, train) if train else models
        return classify_fv_ensemble_batch(selected, feats, probs)
    if approach in ("ensemble-oc-iforest", "ensemble-oc-lof"):
        kind = "isolation-forest" if approach.endswith("iforest") else "local-outlier-factor"
        models = sorted(
            (arts[k] for k in arts if k.startswith("oc:") and k.endswith(":" + kind)),
            key=lambda m: registry.index(m.tap),
        )
        return classify_oc_ensemble_batch(bundle, models, feats, probs)
    raise ValueError(f"unknown approach {approach!r}")


def classify_with_artifacts(bundle, approach, domains, fv_tap=None):
    """Classify parsed domains with an approach using the bundle's fitted
    artifacts. Shared by the CLI `classify` command and the HTTP service."""
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")
    fv_tap = fv_tap or penultimate_tap(bundle.net_cfg)
    ids = encode_batch(domains, bundle.vocab)
    probs = forward_batch(bundle, ids)
    needed = sorted(
        {k.split(":")[1] for k in bundle.artifacts if k.startswith(("fv:", "oc:"))}
    )
    feats = {t: extract_features(bundle, ids, t) for t in needed}
    return _classify(
        approach, bundle, bundle.artifacts, probs, feats, domains, fv_tap, None
    )


def _select_members(bundle, fv_models, train):
    """Per-layer F1 on the training data drives the FV ensemble selection."""
    train_ids = encode_batch([s.domain for s in train], bundle.vocab)
    truth = [s.label for s in train]
    known = [c for c in bundle.classes if c != BENIGN_LABEL]
    probs = forward_batch(bundle, train_ids)
    per_layer = {}
    by_tap = {}
    for m in sorted(fv_models, key=lambda m: tap_registry(bundle.net_cfg).index(m.tap)):
        f = extract_features(bundle, train_ids, m.tap)
        preds = [v.label for v in classify_family_vector_batch(m, f, probs)]
        per_layer[m.tap] = compute_macro_metrics(preds, truth, known)[0]
        by_tap[m.tap] = m
    cfg = select_fv_ensemble_layers(per_layer)
    return [by_tap[t] for t in cfg.members]


# ---------------------------------------------------------------------------
# report assembly

@dataclass
class EvalReport:
    runs: list[dict]
    averages: dict[str, dict]
    per_family: dict[str, dict[str, list[float]]]
    stats: dict[str, dict]
    note: str = UNDEFINED_METRIC_NOTE

    def to_json(self) -> str:
        return json.dumps(
            {
                "runs": self.runs,
                "averages": self.averages,
                "per_family": self.per_family,
                "stats": self.stats,
                "note": self.note,
            },
            indent=2,
            sort_keys=True,
        )

    def to_text(self) -> str:
        cols = ["F1", "Precision", "Recall", "LOC F1", "LOC Precision", "LOC Recall"]
        keys = ["f1", "precision", "recall", "loc_f1", "loc_precision", "loc_recall"]
        width = max(len(a) for a in self.averages) + 2
        lines = ["Approach".ljust(width) + "".join(c.rjust(15) for c in cols)]
        for approach in sorted(self.averages):
            row = self.averages[approach]
            lines.append(
                approach.ljust(width)
                + "".join(f"{row[k]:15.5f}" for k in keys)
            )
        lines.append(f"# {self.note}")
        return "\n".join(lines)

    def per_family_csv(self, approach: str) -> str:
        lines = ["family,fold,loc_f1"]
        fams = self.per_family[approach]
        for fam in sorted(fams):
            for fold, v in enumerate(fams[fam]):
                lines.append(f"{fam},{fold},{v:.6f}")
        return "\n".join(lines) + "\n"


def assemble_report(run_rows: list[dict]) -> EvalReport:
    run_rows = sorted(
        run_rows, key=lambda r: (r["approach"], r["fold"], r["left_out"])
    )
    by_approach: dict[str, list[dict]] = {}
    for r in run_rows:
        by_approach.setdefault(r["approach"], []).append(r)
    averages = {}
    per_family: dict[str, dict[str, list[float]]] = {}
    stats: dict[str, dict] = {}
    metric_keys = (
        "f1", "precision", "recall",
        "loc_f1", "loc_precision", "loc_recall", "benign_f1",
    )
    for approach, rows in by_approach.items():
        averages[approach] = {
            k: sum(r["metrics"][k] for r in rows) / len(rows) for k in metric_keys
        }
        fams: dict[str, list[float]] = {}
        for r in rows:
            fams.setdefault(r["left_out"], []).append(r["metrics"]["loc_f1"])
        per_family[approach] = fams
        fam_means = [sum(v) / len(v) for v in fams.values()]
        stats[approach] = {
            "average": sum(fam_means) / len(fam_means),
            "median": statistics.median(fam_means),
            "min": min(fam_means),
            "max": max(fam_means),
            "stddev": statistics.pstdev(fam_means),
        }
    return EvalReport(
        runs=run_rows, averages=averages, per_family=per_family, stats=stats
    )


def run_logo_eval(
    catalog: list[FamilySpec],
    ds_cfg: DatasetConfig,
    settings: EvalSettings,
    jobs: int = 1,
    external_benign=None,
) -> EvalReport:
    dataset = build_dataset(catalog, ds_cfg, external_benign)
    runs = make_logo_runs(dataset, ds_cfg)
    if jobs <= 1:
        results = [evaluate_run(run, settings) for run in runs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate_run, runs, [settings] * len(runs)))
    rows = [row for rs in results for row in rs]
    return assemble_report(rows)

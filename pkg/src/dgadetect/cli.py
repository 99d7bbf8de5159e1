"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, bad domains,
bad catalogs), 3 runtime failure.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from .domain import (
    ALPHABET,
    DEFAULT_MAX_LEN,
    CharVocab,
    DomainError,
    extract_contextless,
    parse_domain,
)
from .detectors import NEW_DGA, adapt_add_class, refit_artifacts
from .evaluate import (
    APPROACHES,
    EvalSettings,
    approach_artifact_keys,
    classify_with_artifacts,
    run_logo_eval,
)
from .net import (
    BundleError,
    NetError,
    TrainConfig,
    encode_batch,
    extract_features,
    load_bundle,
    net_config_for,
    penultimate_tap,
    save_bundle,
    train_net,
)
from .cluster import (
    XMeansConfig,
    filter_unique_e2ld,
    refine_clusters,
    standardize,
    xmeans_cluster,
)
from .synth import (
    DatasetConfig,
    LabeledSample,
    SynthError,
    archetype_catalog,
    build_dataset,
    load_catalog,
    load_dataset,
    save_dataset,
    separable_catalog,
)

DATA_ERRORS = (
    DomainError,
    SynthError,
    BundleError,
    NetError,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
    KeyError,
)


@dataclass(frozen=True)
class AppConfig:
    catalog: str | None = None
    dataset: str | None = None
    bundle_dir: str | None = None
    approach: str = "combined"
    host: str = "127.0.0.1"
    port: int = 8053
    seed: int = 0
    jobs: int = 1


def load_config(path: str | None) -> AppConfig:
    if path is None:
        return AppConfig()
    raw = json.loads(Path(path).read_text())
    cfg = AppConfig(**raw)
    for key in ("catalog", "dataset", "bundle_dir"):
        p = getattr(cfg, key)
        if p is not None and not Path(p).exists():
            raise ValueError(f"config path {key}={p!r} does not exist")
    if cfg.approach not in APPROACHES:
        raise ValueError(f"config approach {cfg.approach!r} unknown")
    return cfg


def _resolve_catalog(name_or_path: str, seed: int):
    if name_or_path == "archetype":
        return archetype_catalog(seed)
    if name_or_path == "separable":
        return separable_catalog(seed)
    return load_catalog(name_or_path)


def _resolve_approach(approach: str, threshold_rule: str | None, k: int | None) -> str:
    if approach == "max-softmax" and threshold_rule:
        approach = f"max-softmax-{threshold_rule.lower()}"
    if approach == "regex-top" and k:
        approach = f"regex-top{k}"
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")
    return approach


def _default_vocab() -> CharVocab:
    return CharVocab(ALPHABET, DEFAULT_MAX_LEN)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file with defaults for paths and options.")
@click.pass_context
def cli(ctx, config_path):
    """Context-less DGA detection toolkit."""
    ctx.obj = load_config(config_path)


@cli.command()
@click.option("--catalog", required=True,
              help="Catalog JSON path, or builtin 'archetype' / 'separable'.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--per-class-cap", type=int, default=2000)
@click.option("--test-cap", type=int, default=2000)
@click.option("--folds", type=int, default=5)
@click.option("--benign-count", type=int, default=2000)
@click.pass_obj
def synth(app: AppConfig, catalog, out_path, seed, per_class_cap, test_cap,
          folds, benign_count):
    """Generate a labeled dataset (JSONL) from a family catalog."""
    seed = app.seed if seed is None else seed
    specs = _resolve_catalog(catalog, seed)
    cfg = DatasetConfig(
        per_class_cap=per_class_cap, test_cap=test_cap, folds=folds,
        benign_count=benign_count, rng_seed=seed,
    )
    dataset = build_dataset(specs, cfg)
    save_dataset(dataset, out_path)
    click.echo(f"wrote {len(dataset)} samples to {out_path}")


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--approach", multiple=True, default=("combined",))
@click.option("--tap", default=None, help="Feature tap for FV/one-class models.")
@click.option("--blocks", type=int, default=3)
@click.option("--channels", type=int, default=64)
@click.option("--max-epochs", type=int, default=50)
@click.option("--batch-size", type=int, default=128)
@click.pass_obj
def train(app: AppConfig, dataset_path, out_path, seed, approach, tap,
          blocks, channels, max_epochs, batch_size):
    """Train a network bundle and fit the artifacts the approaches need."""
    seed = app.seed if seed is None else seed
    samples = load_dataset(dataset_path)
    vocab = _default_vocab()
    net_cfg = net_config_for(samples, vocab, blocks=blocks, channels=channels)
    train_cfg = TrainConfig(
        max_epochs=max_epochs, batch_size=batch_size, rng_seed=seed
    )
    bundle = train_net(samples, vocab, train_cfg, net_cfg)
    keys: list[str] = []
    for a in approach:
        for key in approach_artifact_keys(_resolve_approach(a, None, None),
                                          net_cfg, tap):
            if key not in keys:
                keys.append(key)
    bundle.artifacts = refit_artifacts(bundle, samples, keys, seed=seed)
    save_bundle(bundle, out_path)
    click.echo(f"bundle with {len(bundle.classes)} classes saved to {out_path}")


@cli.command("eval-logo")
@click.option("--catalog", default="separable")
@click.option("--approach", multiple=True, default=("baseline", "regex-ed"))
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--per-class-cap", type=int, default=400)
@click.option("--test-cap", type=int, default=400)
@click.option("--folds", type=int, default=5)
@click.option("--benign-count", type=int, default=400)
@click.option("--blocks", type=int, default=2)
@click.option("--channels", type=int, default=32)
@click.option("--max-epochs", type=int, default=10)
@click.option("--tap", default=None)
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-csv", type=click.Path(), default=None,
              help="Per-family LOC F1 CSV for the first approach.")
@click.pass_obj
def eval_logo(app: AppConfig, catalog, approach, seed, jobs, per_class_cap,
              test_cap, folds, benign_count, blocks, channels, max_epochs,
              tap, out_json, out_csv):
    """Run the LOGO x k-fold evaluation and print the metrics table."""
    seed = app.seed if seed is None else seed
    jobs = app.jobs if jobs is None else jobs
    approaches = tuple(_resolve_approach(a, None, None) for a in approach)
    specs = _resolve_catalog(catalog, seed)
    ds_cfg = DatasetConfig(
        per_class_cap=per_class_cap, test_cap=test_cap, folds=folds,
        benign_count=benign_count, rng_seed=seed,
    )
    settings = EvalSettings(
        vocab=_default_vocab(),
        train_cfg=TrainConfig(max_epochs=max_epochs, rng_seed=seed),
        approaches=approaches,
        net_overrides={"blocks": blocks, "channels": channels},
        fv_tap=tap,
        master_seed=seed,
    )
    report = run_logo_eval(specs, ds_cfg, settings, jobs=jobs)
    click.echo(report.to_text())
    if out_json:
        Path(out_json).write_text(report.to_json())
    if out_csv:
        Path(out_csv).write_text(report.per_family_csv(approaches[0]))


def classify_raw(bundle, approach: str, raw_domains: list[str],
                 tap: str | None = None) -> list[dict]:
    """Verdict dicts for raw domain strings; unparseable entries become
    per-item error objects, the rest of the batch is still classified."""
    parsed = []
    errors: dict[int, str] = {}
    for i, raw in enumerate(raw_domains):
        try:
            parsed.append((i, parse_domain(raw)))
        except DomainError as e:
            errors[i] = str(e)
    out: list[dict | None] = [None] * len(raw_domains)
    if parsed:
        verdicts = classify_with_artifacts(
            bundle, approach, [d for _, d in parsed], fv_tap=tap
        )
        for (i, d), v in zip(parsed, verdicts):
            out[i] = {
                "domain": d.full,
                "label": v.label,
                "score": v.score,
                "new_dga": v.label == NEW_DGA,
                "source": v.source,
            }
    for i, msg in errors.items():
        out[i] = {"domain": raw_domains[i], "error": msg}
    return out  # type: ignore[return-value]


@cli.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--approach", default=None)
@click.option("--threshold-rule", default=None,
              type=click.Choice(["P5", "P10", "MIN", "MIN95", "MIN90"],
                                case_sensitive=False))
@click.option("--k", type=int, default=None)
@click.option("--tap", default=None)
@click.option("--input", "input_file", type=click.File("r"), default="-",
              help="Domains, one per line; default stdin.")
@click.pass_obj
def classify(app: AppConfig, bundle_path, approach, threshold_rule, k, tap,
             input_file):
    """Classify domains and print one verdict JSON object per line."""
    approach = _resolve_approach(approach or app.approach, threshold_rule, k)
    bundle = load_bundle(bundle_path)
    raw = [line.strip() for line in input_file if line.strip()]
    for row in classify_raw(bundle, approach, raw, tap=tap):
        click.echo(json.dumps(row, sort_keys=True))


@cli.command("cluster-new")
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--input", "input_file", type=click.File("r"), default="-")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--k-max", type=int, default=30)
@click.option("--min-cluster-size", type=int, default=5)
@click.option("--text", "as_text", is_flag=True, default=False)
@click.pass_obj
def cluster_new(app: AppConfig, bundle_path, input_file, out_path, seed,
                k_max, min_cluster_size, as_text):
    """Group NEW_DGA domains into candidate families."""
    seed = app.seed if seed is None else seed
    bundle = load_bundle(bundle_path)
    raw = [line.strip() for line in input_file if line.strip()]
    samples = [LabeledSample(parse_domain(r), NEW_DGA) for r in raw]
    samples = filter_unique_e2ld(samples)
    if not samples:
        raise ValueError("no samples left after unique-e2LD filtering")
    tap = penultimate_tap(bundle.net_cfg)
    feats = extract_features(
        bundle, encode_batch([s.domain for s in samples], bundle.vocab), tap
    )
    assignment = xmeans_cluster(
        standardize(feats),
        XMeansConfig(k_max=k_max, min_cluster_size=min_cluster_size,
                     rng_seed=seed),
    )
    ctx_feats = [extract_contextless(s.domain) for s in samples]
    report = refine_clusters(assignment, samples, ctx_feats, min_cluster_size)
    rendered = report.to_text() if as_text else report.to_json()
    if out_path:
        Path(out_path).write_text(rendered + "\n")
    else:
        click.echo(rendered)


@cli.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--new-dataset", required=True, type=click.Path(),
              help="JSONL of samples for the new class.")
@click.option("--class-name", required=True)
@click.option("--mode", type=click.Choice(["freeze", "full"]), default="freeze")
@click.option("--old-dataset", required=True, type=click.Path(),
              help="Original training JSONL (replay / full retrain source).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--max-epochs", type=int, default=10)
@click.pass_obj
def adapt(app: AppConfig, bundle_path, new_dataset, class_name, mode,
          old_dataset, out_path, seed, max_epochs):
    """Extend a trained bundle with one new class."""
    seed = app.seed if seed is None else seed
    bundle = load_bundle(bundle_path)
    new_samples = load_dataset(new_dataset)
    old_train = load_dataset(old_dataset)
    train_cfg = TrainConfig(max_epochs=max_epochs, rng_seed=seed)
    new_bundle = adapt_add_class(
        bundle, class_name, new_samples, mode, old_train, train_cfg
    )
    save_bundle(new_bundle, out_path)
    click.echo(f"adapted bundle ({mode}) saved to {out_path}")


@cli.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--approach", default=None)
@click.option("--tap", default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_obj
def serve(app: AppConfig, bundle_path, approach, tap, host, port):
    """Run the HTTP classification service."""
    import uvicorn

    from .service import create_app

    approach = _resolve_approach(approach or app.approach, None, None)
    service = create_app(bundle_path, approach, tap=tap)
    uvicorn.run(service, host=host or app.host, port=port or app.port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="dgadetect")
    except click.exceptions.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except DATA_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except Exception as e:  # noqa: BLE001 - boundary for exit-code mapping
        click.echo(f"failure: {e}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

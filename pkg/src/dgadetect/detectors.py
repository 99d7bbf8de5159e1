"""New-DGA detection approaches over a trained bundle.

Every detector reduces to the plain softmax label whenever its rejection test
passes; NEW_DGA is the only label a detector may add. Thresholded rejections
use strict inequality everywhere, so boundary values are accepted.

Batch entry points take precomputed softmax probabilities (and features where
needed) so the evaluation harness runs each network forward pass once per
run; the single-sample wrappers mirror the batch semantics exactly.
"""

from __future__ import annotations

import copy
import gzip
import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F
from scipy.spatial.distance import cdist

from .domain import DomainName, encode_domain
from .net import (
    NetBundle,
    NetConfig,
    TrainConfig,
    encode_batch,
    extract_features,
    forward_batch,
    init_net,
    net_config_for,
    penultimate_tap,
    tap_dim,
    tap_registry,
    train_net,
)
from .oneclass import IsolationForestModel, LofModel
from .regexes import (
    ClassRegex,
    benign_regex,
    induce_class_regex,
    load_regexes,
    regex_matches,
    save_regexes,
)
from .rng import stream
from .synth import BENIGN_LABEL, LabeledSample

NEW_DGA = "NEW_DGA"

THRESHOLD_RULES = ("P5", "P10", "MIN", "MIN95", "MIN90")
FV_RULES = ("mean", "median")
OC_KINDS = ("isolation-forest", "local-outlier-factor")

OC_CLASS_CAP = 1_000


@dataclass(frozen=True)
class Verdict:
    label: str
    score: float
    source: str


def nearest_rank(values, p: float) -> float:
    """ceil(p*n)-th order statistic (nearest-rank percentile)."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if vals.size == 0:
        raise ValueError("percentile of empty set")
    idx = max(int(math.ceil(p * vals.size)) - 1, 0)
    return float(vals[idx])


def _probs_for(bundle: NetBundle, samples: list[LabeledSample]) -> np.ndarray:
    return forward_batch(bundle, encode_batch([s.domain for s in samples], bundle.vocab))


def _ids_for(bundle: NetBundle, d: DomainName) -> np.ndarray:
    return np.asarray(encode_domain(d, bundle.vocab).ids, dtype=np.int64)[None, :]


# ---------------------------------------------------------------------------
# baseline

def classify_baseline_batch(bundle: NetBundle, probs: np.ndarray) -> list[Verdict]:
    preds = probs.argmax(axis=1)
    return [
        Verdict(bundle.classes[p], float(probs[i, p]), "baseline")
        for i, p in enumerate(preds)
    ]


def classify_baseline(bundle: NetBundle, d: DomainName) -> Verdict:
    probs = forward_batch(bundle, _ids_for(bundle, d))
    return classify_baseline_batch(bundle, probs)[0]


# ---------------------------------------------------------------------------
# regex error detection / top-k correction

def induce_regexes(train: list[LabeledSample]) -> dict[str, ClassRegex]:
    by_label: dict[str, list[DomainName]] = {}
    for s in train:
        by_label.setdefault(s.label, []).append(s.domain)
    out = {}
    for label, domains in by_label.items():
        if label == BENIGN_LABEL:
            out[label] = benign_regex()
        else:
            out[label] = induce_class_regex(domains, label)
    return out


def classify_regex_ed_batch(
    bundle: NetBundle,
    regexes: dict[str, ClassRegex],
    probs: np.ndarray,
    domains: list[DomainName],
) -> list[Verdict]:
    out = []
    for i, d in enumerate(domains):
        p = int(probs[i].argmax())
        label = bundle.classes[p]
        if label == BENIGN_LABEL:
            out.append(Verdict(label, float(probs[i, p]), "regex-ed"))
            continue
        if label not in regexes:
            raise KeyError(f"no regex for predicted class {label!r}")
        if regex_matches(regexes[label], d):
            out.append(Verdict(label, float(probs[i, p]), "regex-ed"))
        else:
            out.append(Verdict(NEW_DGA, 0.0, "regex-ed"))
    return out


def classify_regex_ed(
    bundle: NetBundle, regexes: dict[str, ClassRegex], d: DomainName
) -> Verdict:
    probs = forward_batch(bundle, _ids_for(bundle, d))
    return classify_regex_ed_batch(bundle, regexes, probs, [d])[0]


def classify_regex_topk_batch(
    bundle: NetBundle,
    regexes: dict[str, ClassRegex],
    probs: np.ndarray,
    domains: list[DomainName],
    k: int,
) -> list[Verdict]:
    if k < 2:
        raise ValueError("top-k error correction needs k >= 2")
    source = f"regex-top{k}"
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    out = []
    for i, d in enumerate(domains):
        verdict = Verdict(NEW_DGA, 0.0, source)
        for p in order[i]:
            label = bundle.classes[p]
            r = regexes.get(label)
            if r is None:
                raise KeyError(f"no regex for class {label!r}")
            if regex_matches(r, d):
                verdict = Verdict(label, float(probs[i, p]), source)
                break
        out.append(verdict)
    return out


def classify_regex_topk(
    bundle: NetBundle, regexes: dict[str, ClassRegex], d: DomainName, k: int
) -> Verdict:
    probs = forward_batch(bundle, _ids_for(bundle, d))
    return classify_regex_topk_batch(bundle, regexes, probs, [d], k)[0]


# ---------------------------------------------------------------------------
# max-softmax thresholds

@dataclass(frozen=True)
class SoftmaxThresholds:
    rule: str
    taus: dict[str, float]


def fit_softmax_thresholds(
    bundle: NetBundle,
    train: list[LabeledSample],
    rule: str,
    probs: np.ndarray | None = None,
) -> SoftmaxThresholds:
    if rule not in THRESHOLD_RULES:
        raise ValueError(f"unknown threshold rule {rule!r}")
    if probs is None:
        probs = _probs_for(bundle, train)
    preds = probs.argmax(axis=1)
    scores_by_class: dict[str, list[float]] = {c: [] for c in bundle.classes}
    for i, s in enumerate(train):
        if bundle.classes[preds[i]] == s.label:
            scores_by_class[s.label].append(float(probs[i, preds[i]]))
    taus = {}
    for c, scores in scores_by_class.items():
        if not scores:
            warnings.warn(
                f"class {c!r} has no correctly predicted training samples; tau=0"
            )
            taus[c] = 0.0
            continue
        if rule == "P5":
            taus[c] = nearest_rank(scores, 0.05)
        elif rule == "P10":
            taus[c] = nearest_rank(scores, 0.10)
        elif rule == "MIN":
            taus[c] = min(scores)
        elif rule == "MIN95":
            taus[c] = 0.95 * min(scores)
        else:  # MIN90
            taus[c] = 0.90 * min(scores)
    return SoftmaxThresholds(rule=rule, taus=taus)


def classify_max_softmax_batch(
    bundle: NetBundle, thr: SoftmaxThresholds, probs: np.ndarray
) -> list[Verdict]:
    source = f"max-softmax:{thr.rule}"
    out = []
    preds = probs.argmax(axis=1)
    for i, p in enumerate(preds):
        label = bundle.classes[p]
        s = float(probs[i, p])
        if s < thr.taus[label]:
            out.append(Verdict(NEW_DGA, 0.0, source))
        else:
            out.append(Verdict(label, s, source))
    return out


def classify_max_softmax(
    bundle: NetBundle, thr: SoftmaxThresholds, d: DomainName
) -> Verdict:
    probs = forward_batch(bundle, _ids_for(bundle, d))
    return classify_max_softmax_batch(bundle, thr, probs)[0]


# ---------------------------------------------------------------------------
# family vectors

@dataclass
class FvModel:
    tap: str
    rule: str
    classes: tuple[str, ...]
    centroids: np.ndarray  # (classes, dim)
    radii: np.ndarray  # (classes,)


def fit_family_vectors(
    bundle: NetBundle,
    train: list[LabeledSample],
    tap: str,
    rule: str,
    feats: np.ndarray | None = None,
) -> FvModel:
    if rule not in FV_RULES:
        raise ValueError(f"unknown family-vector rule {rule!r}")
    if feats is None:
        feats = extract_features(
            bundle, encode_batch([s.domain for s in train], bundle.vocab), tap
        )
    # float64 so radii are computed in the same arithmetic that
    # _fv_distances uses at classification time
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.array([s.label for s in train])
    dim = feats.shape[1]
    centroids = np.zeros((len(bundle.classes), dim))
    radii = np.zeros(len(bundle.classes))
    for ci, c in enumerate(bundle.classes):
        members = feats[labels == c]
        if members.shape[0] == 0:
            warnings.warn(f"class {c!r} has no training samples; radius=0")
            continue
        mu = members.mean(axis=0)
        centroids[ci] = mu
        if members.shape[0] < 2:
            warnings.warn(f"class {c!r} has fewer than 2 samples; radius=0")
            continue
        dists = np.linalg.norm(members - mu, axis=1)
        radii[ci] = nearest_rank(dists, 0.95 if rule == "mean" else 0.50)
    return FvModel(tap=tap, rule=rule, classes=bundle.classes,
                   centroids=centroids, radii=radii)


def _fv_distances(fv: FvModel, feats: np.ndarray) -> np.ndarray:
    return cdist(np.asarray(feats, dtype=np.float64), fv.centroids)


def classify_family_vector_batch(
    fv: FvModel, feats: np.ndarray, probs: np.ndarray | None = None
) -> list[Verdict]:
    source = f"fv:{fv.rule}"
    D = _fv_distances(fv, feats)
    out = []
    for i in range(D.shape[0]):
        within = D[i] <= fv.radii
        if not within.any():
            out.append(Verdict(NEW_DGA, 0.0, source))
            continue
        masked = np.where(within, D[i], np.inf)
        ci = int(masked.argmin())  # argmin tie-breaks by class order
        label = fv.classes[ci]
        score = float(probs[i, ci]) if probs is not None else 1.0
        out.append(Verdict(label, score, source))
    return out


def classify_family_vector(fv: FvModel, bundle: NetBundle, d: DomainName) -> Verdict:
    ids = _ids_for(bundle, d)
    feats = extract_features(bundle, ids, fv.tap)
    probs = forward_batch(bundle, ids)
    return classify_family_vector_batch(fv, feats, probs)[0]


def classify_fv_nearest_batch(
    fv: FvModel, feats: np.ndarray, probs: np.ndarray | None = None
) -> list[Verdict]:
    """Nearest-centroid classification, radii ignored; never rejects."""
    D = _fv_distances(fv, feats)
    out = []
    for i in range(D.shape[0]):
        ci = int(D[i].argmin())
        score = float(probs[i, ci]) if probs is not None else 1.0
        out.append(Verdict(fv.classes[ci], score, "fv-nearest"))
    return out


def classify_fv_nearest(fv: FvModel, bundle: NetBundle, d: DomainName) -> Verdict:
    ids = _ids_for(bundle, d)
    feats = extract_features(bundle, ids, fv.tap)
    probs = forward_batch(bundle, ids)
    return classify_fv_nearest_batch(fv, feats, probs)[0]


# ---------------------------------------------------------------------------
# one-class models

@dataclass
class OneClassModel:
    tap: str
    kind: str
    model: object
    theta: float


def excluded_early_taps(cfg: NetConfig) -> tuple[str, ...]:
    """Taps up to and including the early-block cutoff, scaled from the
    reference depth (5 of 11 blocks), never used by one-class models."""
    cutoff_block = max(1, cfg.blocks * 5 // 11)
    excluded = []
    for t in tap_registry(cfg):
        if t == "embed":
            excluded.append(t)
        elif t.startswith("block"):
            block = int(t.split("/", 1)[0][len("block"):])
            if block <= cutoff_block:
                excluded.append(t)
    return tuple(excluded)


def _cap_per_class(
    train: list[LabeledSample], cap: int, seed: int
) -> list[int]:
    by_label: dict[str, list[int]] = {}
    for i, s in enumerate(train):
        by_label.setdefault(s.label, []).append(i)
    keep = []
    for label in sorted(by_label):
        idx = by_label[label]
        if len(idx) > cap:
            rng = stream(seed, f"occap:{label}")
            rng.shuffle(idx)
            idx = sorted(idx[:cap])
        keep.extend(idx)
    return sorted(keep)


def fit_one_class(
    bundle: NetBundle,
    train: list[LabeledSample],
    tap: str,
    kind: str,
    seed: int = 0,
    feats: np.ndarray | None = None,
) -> OneClassModel:
    if kind not in OC_KINDS:
        raise ValueError(f"unknown one-class kind {kind!r}")
    if tap in excluded_early_taps(bundle.net_cfg):
        raise ValueError(f"tap {tap!r} is excluded for one-class models")
    if not train:
        raise ValueError("empty training set")
    keep = _cap_per_class(train, OC_CLASS_CAP, seed)
    if feats is None:
        feats = extract_features(
            bundle,
            encode_batch([train[i].domain for i in keep], bundle.vocab),
            tap,
        )
    else:
        feats = feats[keep]
    if kind == "isolation-forest":
        model = IsolationForestModel().fit(feats, seed)
    else:
        model = LofModel(k=20).fit(feats)
    theta = nearest_rank(model.score(feats), 0.95)
    return OneClassModel(tap=tap, kind=kind, model=model, theta=theta)


def classify_one_class_batch(
    bundle: NetBundle, oc: OneClassModel, probs: np.ndarray, feats: np.ndarray
) -> list[Verdict]:
    source = f"oc:{oc.kind}"
    scores = oc.model.score(feats)
    preds = probs.argmax(axis=1)
    out = []
    for i, p in enumerate(preds):
        if scores[i] > oc.theta:
            out.append(Verdict(NEW_DGA, 0.0, source))
        else:
            out.append(Verdict(bundle.classes[p], float(probs[i, p]), source))
    return out


def classify_one_class(bundle: NetBundle, oc: OneClassModel, d: DomainName) -> Verdict:
    ids = _ids_for(bundle, d)
    feats = extract_features(bundle, ids, oc.tap)
    probs = forward_batch(bundle, ids)
    return classify_one_class_batch(bundle, oc, probs, feats)[0]


# ---------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple[str, ...]  # tap ids, registry order
    margin: float = 0.05


def select_fv_ensemble_layers(per_layer_f1: dict[str, float]) -> EnsembleConfig:
    """Best layer plus contiguous neighbors while F1 stays within the margin.
    The mapping must be ordered by tap registry position."""
    if not per_layer_f1:
        raise ValueError("empty per-layer F1 map")
    taps = list(per_layer_f1)
    scores = [per_layer_f1[t] for t in taps]
    best = int(np.argmax(scores))
    floor = scores[best] - 0.05
    lo = best
    while lo - 1 >= 0 and scores[lo - 1] >= floor:
        lo -= 1
    hi = best
    while hi + 1 < len(taps) and scores[hi + 1] >= floor:
        hi += 1
    return EnsembleConfig(members=tuple(taps[lo : hi + 1]))


def ensemble_vote(votes: list[Verdict]) -> Verdict:
    """Plurality label; ties broken by summed prediction confidence."""
    if not votes:
        raise ValueError("empty vote set")
    counts: dict[str, int] = {}
    sums: dict[str, float] = {}
    first_seen: dict[str, int] = {}
    for i, v in enumerate(votes):
        counts[v.label] = counts.get(v.label, 0) + 1
        sums[v.label] = sums.get(v.label, 0.0) + v.score
        first_seen.setdefault(v.label, i)
    winner = max(
        counts,
        key=lambda lab: (counts[lab], sums[lab], -first_seen[lab]),
    )
    score = max(v.score for v in votes if v.label == winner)
    return Verdict(winner, score, "ensemble")


def classify_fv_ensemble_batch(
    models: list[FvModel], feats_by_tap: dict[str, np.ndarray], probs: np.ndarray
) -> list[Verdict]:
    member_verdicts = [
        classify_family_vector_batch(m, feats_by_tap[m.tap], probs) for m in models
    ]
    return [
        ensemble_vote([mv[i] for mv in member_verdicts])
        for i in range(len(member_verdicts[0]))
    ]


def classify_oc_ensemble_batch(
    bundle: NetBundle,
    models: list[OneClassModel],
    feats_by_tap: dict[str, np.ndarray],
    probs: np.ndarray,
) -> list[Verdict]:
    member_verdicts = [
        classify_one_class_batch(bundle, m, probs, feats_by_tap[m.tap]) for m in models
    ]
    return [
        ensemble_vote([mv[i] for mv in member_verdicts])
        for i in range(len(member_verdicts[0]))
    ]


# ---------------------------------------------------------------------------
# combined classifier (softmax -> regex, then FV-nearest -> regex)

def classify_combined_batch(
    bundle: NetBundle,
    regexes: dict[str, ClassRegex],
    fv: FvModel,
    probs: np.ndarray,
    feats: np.ndarray,
    domains: list[DomainName],
) -> list[Verdict]:
    D = _fv_distances(fv, feats)
    out = []
    for i, d in enumerate(domains):
        p = int(probs[i].argmax())
        label = bundle.classes[p]
        if regex_matches(regexes[label], d):
            out.append(Verdict(label, float(probs[i, p]), "combined"))
            continue
        ci = int(D[i].argmin())
        fv_label = fv.classes[ci]
        if regex_matches(regexes[fv_label], d):
            out.append(Verdict(fv_label, float(probs[i, ci]), "combined"))
        else:
            out.append(Verdict(NEW_DGA, 0.0, "combined"))
    return out


def classify_combined(
    bundle: NetBundle,
    regexes: dict[str, ClassRegex],
    fv: FvModel,
    d: DomainName,
) -> Verdict:
    ids = _ids_for(bundle, d)
    probs = forward_batch(bundle, ids)
    feats = extract_features(bundle, ids, fv.tap)
    return classify_combined_batch(bundle, regexes, fv, probs, feats, [d])[0]


# ---------------------------------------------------------------------------
# class-incremental adaptation

ADAPT_MIN_SAMPLES = 100
REPLAY_PER_CLASS = 200


def adapt_add_class(
    bundle: NetBundle,
    new_class: str,
    new_samples: list[LabeledSample],
    mode: str,
    old_train: list[LabeledSample],
    train_cfg: TrainConfig,
    min_samples: int = ADAPT_MIN_SAMPLES,
    replay_per_class: int = REPLAY_PER_CLASS,
) -> NetBundle:
    """Extend a trained bundle with one new class.

    freeze mode: append one output row, train only the dense layer on the new
    samples plus a per-class replay reservoir, then refit only the new class's
    artifacts. full mode: retrain from scratch on the extended dataset and
    refit every artifact.
    """
    if mode not in ("freeze", "full"):
        raise ValueError(f"unknown adapt mode {mode!r}")
    if new_class in bundle.classes:
        raise ValueError(f"class {new_class!r} already present")
    if len(new_samples) < min_samples:
        raise ValueError(
            f"need at least {min_samples} samples for the new class"
        )
    new_samples = [replace(s, label=new_class) for s in new_samples]

    if mode == "full":
        full_train = list(old_train) + new_samples
        cfg = bundle.net_cfg
        new_cfg = net_config_for(
            full_train,
            bundle.vocab,
            embed_dim=cfg.embed_dim,
            blocks=cfg.blocks,
            channels=cfg.channels,
            kernel=cfg.kernel,
            pool=cfg.pool,
        )
        new_bundle = train_net(full_train, bundle.vocab, train_cfg, new_cfg)
        new_bundle.artifacts = refit_artifacts(
            new_bundle, full_train, list(bundle.artifacts), seed=train_cfg.rng_seed
        )
        return new_bundle

    # freeze mode
    cfg = bundle.net_cfg
    new_cfg = NetConfig(
        classes=cfg.classes + (new_class,),
        embed_dim=cfg.embed_dim,
        blocks=cfg.blocks,
        channels=cfg.channels,
        kernel=cfg.kernel,
        pool=cfg.pool,
        max_len=cfg.max_len,
        vocab_size=cfg.vocab_size,
    )
    from .net import ResidualCharNet

    model = ResidualCharNet(new_cfg)
    old_state = bundle.model.state_dict()
    new_state = model.state_dict()
    rng = stream(train_cfg.rng_seed, "adapt:dense-row")
    with torch.no_grad():
        for name, tensor in new_state.items():
            if name == "dense.weight":
                fan_in = tensor.shape[1]
                bound = 1.0 / math.sqrt(fan_in)
                row = np.fromiter(
                    ((rng.uniform() * 2.0 - 1.0) * bound for _ in range(fan_in)),
                    dtype=np.float64,
                    count=fan_in,
                ).astype(np.float32)
                tensor[: len(cfg.classes)] = old_state[name]
                tensor[-1] = torch.from_numpy(row)
            elif name == "dense.bias":
                tensor[: len(cfg.classes)] = old_state[name]
                tensor[-1] = 0.0
            else:
                tensor.copy_(old_state[name])
    model.load_state_dict(new_state)
    for name, p in model.named_parameters():
        p.requires_grad = name.startswith("dense")

    replay: list[LabeledSample] = []
    by_label: dict[str, list[LabeledSample]] = {}
    for s in old_train:
        by_label.setdefault(s.label, []).append(s)
    for label in sorted(by_label):
        pool = list(by_label[label])
        r = stream(train_cfg.rng_seed, f"adapt:replay:{label}")
        r.shuffle(pool)
        replay.extend(pool[:replay_per_class])
    train = replay + new_samples

    torch.set_num_threads(1)
    class_idx = {c: i for i, c in enumerate(new_cfg.classes)}
    ids = encode_batch([s.domain for s in train], bundle.vocab)
    y = np.array([class_idx[s.label] for s in train], dtype=np.int64)
    rng2 = stream(train_cfg.rng_seed, "adapt:train")
    order = list(range(len(train)))
    rng2.shuffle(order)
    n_val = max(1, int(round(train_cfg.val_fraction * len(train))))
    val_idx, tr_idx = np.array(order[:n_val]), order[n_val:]
    opt = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad],
        lr=train_cfg.step_size,
        betas=(0.9, 0.999),
        eps=1e-8,
    )
    from .net import EarlyStopper

    stopper = EarlyStopper(train_cfg.patience)
    best_state = copy.deepcopy(model.state_dict())
    x_val = torch.from_numpy(ids[val_idx])
    y_val = torch.from_numpy(y[val_idx])
    for _epoch in range(train_cfg.max_epochs):
        rng2.shuffle(tr_idx)
        model.train()
        for i in range(0, len(tr_idx), train_cfg.batch_size):
            batch = np.array(tr_idx[i : i + train_cfg.batch_size])
            opt.zero_grad()
            loss = F.cross_entropy(
                model(torch.from_numpy(ids[batch])), torch.from_numpy(y[batch])
            )
            loss.backward()
            opt.step()
        model.eval()
        with torch.no_grad():
            val_loss = float(F.cross_entropy(model(x_val), y_val))
        if stopper.update(val_loss):
            best_state = copy.deepcopy(model.state_dict())
        if stopper.should_stop:
            break
    model.load_state_dict(best_state)
    model.eval()
    new_bundle = NetBundle(net_cfg=new_cfg, vocab=bundle.vocab, model=model)

    # refit only the new class's slice of each fitted artifact
    arts = dict(bundle.artifacts)
    if "regexes" in arts:
        regexes = dict(arts["regexes"])
        regexes[new_class] = induce_class_regex(
            [s.domain for s in new_samples], new_class
        )
        arts["regexes"] = regexes
    new_probs = _probs_for(new_bundle, new_samples)
    for key in list(arts):
        if key.startswith("softmax:"):
            thr: SoftmaxThresholds = arts[key]
            sub = fit_softmax_thresholds(new_bundle, new_samples, thr.rule, new_probs)
            taus = dict(thr.taus)
            taus[new_class] = sub.taus[new_class]
            arts[key] = SoftmaxThresholds(rule=thr.rule, taus=taus)
        elif key.startswith("fv:"):
            fv: FvModel = arts[key]
            feats = extract_features(
                new_bundle,
                encode_batch([s.domain for s in new_samples], bundle.vocab),
                fv.tap,
            )
            mu = feats.mean(axis=0)
            dists = np.linalg.norm(feats - mu, axis=1)
            rho = nearest_rank(dists, 0.95 if fv.rule == "mean" else 0.50)
            arts[key] = FvModel(
                tap=fv.tap,
                rule=fv.rule,
                classes=new_cfg.classes,
                centroids=np.vstack([fv.centroids, mu]),
                radii=np.append(fv.radii, rho),
            )
    new_bundle.artifacts = arts
    return new_bundle


def refit_artifacts(
    bundle: NetBundle, train: list[LabeledSample], keys: list[str], seed: int = 0
) -> dict:
    """Fit the named artifact keys from scratch on a training set."""
    arts: dict = {}
    probs = None
    feats_cache: dict[str, np.ndarray] = {}

    def probs_lazy():
        nonlocal probs
        if probs is None:
            probs = _probs_for(bundle, train)
        return probs

    def feats_lazy(tap):
        if tap not in feats_cache:
            feats_cache[tap] = extract_features(
                bundle, encode_batch([s.domain for s in train], bundle.vocab), tap
            )
        return feats_cache[tap]

    for key in keys:
        if key == "regexes":
            arts[key] = induce_regexes(train)
        elif key.startswith("softmax:"):
            rule = key.split(":", 1)[1]
            arts[key] = fit_softmax_thresholds(bundle, train, rule, probs_lazy())
        elif key.startswith("fv:"):
            _, tap, rule = key.split(":")
            arts[key] = fit_family_vectors(bundle, train, tap, rule, feats_lazy(tap))
        elif key.startswith("oc:"):
            _, tap, kind = key.split(":")
            arts[key] = fit_one_class(
                bundle, train, tap, kind, seed=seed, feats=feats_lazy(tap)
            )
        else:
            raise ValueError(f"unknown artifact key {key!r}")
    return arts


# ---------------------------------------------------------------------------
# artifact serialization (beside the net bundle)

def _tapfile(tap: str) -> str:
    return tap.replace("/", "-")


def save_artifacts(artifacts: dict, path) -> None:
    from pathlib import Path

    path = Path(path)
    softmax = {}
    index = []
    for key, art in artifacts.items():
        if key == "regexes":
            save_regexes(art, path / "regexes.json")
            index.append({"key": key, "file": "regexes.json"})
        elif key.startswith("softmax:"):
            softmax[art.rule] = art.taus
            index.append({"key": key, "file": "softmax_thresholds.json"})
        elif key.startswith("fv:"):
            fname = f"fv_{_tapfile(art.tap)}_{art.rule}.bin"
            blob = (
                art.centroids.astype("<f4").tobytes()
                + art.radii.astype("<f4").tobytes()
            )
            (path / fname).write_bytes(blob)
            index.append(
                {
                    "key": key,
                    "file": fname,
                    "tap": art.tap,
                    "rule": art.rule,
                    "classes": list(art.classes),
                }
            )
        elif key.startswith("oc:"):
            fname = f"oc_{_tapfile(art.tap)}_{art.kind}.bin"
            payload = {"tap": art.tap, "kind": art.kind, "theta": art.theta}
            m = art.model
            if art.kind == "isolation-forest":
                payload["trees"] = m.trees
                payload["n_trees"] = m.n_trees
                payload["subsample"] = m.subsample
                payload["sample_size"] = m.sample_size
            else:
                payload["k"] = m.k
                payload["reference"] = m.reference.tolist()
                payload["k_dist"] = m.k_dist.tolist()
                payload["lrd_ref"] = m.lrd_ref.tolist()
                payload["train_scores"] = m.train_scores.tolist()
            (path / fname).write_bytes(
                gzip.compress(json.dumps(payload).encode("utf-8"))
            )
            index.append({"key": key, "file": fname})
        else:
            raise ValueError(f"cannot serialize artifact {key!r}")
    if softmax:
        with open(path / "softmax_thresholds.json", "w", encoding="utf-8") as fh:
            json.dump(softmax, fh, indent=2, sort_keys=True)
            fh.write("\n")
    with open(path / "artifacts.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_artifacts(path, net_cfg: NetConfig) -> dict:
    from pathlib import Path

    path = Path(path)
    index_file = path / "artifacts.json"
    if not index_file.exists():
        return {}
    with open(index_file, encoding="utf-8") as fh:
        index = json.load(fh)
    arts: dict = {}
    softmax_cache = None
    for entry in index:
        key = entry["key"]
        if key == "regexes":
            arts[key] = load_regexes(path / entry["file"])
        elif key.startswith("softmax:"):
            if softmax_cache is None:
                with open(path / entry["file"], encoding="utf-8") as fh:
                    softmax_cache = json.load(fh)
            rule = key.split(":", 1)[1]
            arts[key] = SoftmaxThresholds(rule=rule, taus=softmax_cache[rule])
        elif key.startswith("fv:"):
            classes = tuple(entry["classes"])
            tap = entry["tap"]
            dim = tap_dim(net_cfg, tap)
            raw = np.frombuffer((path / entry["file"]).read_bytes(), dtype="<f4")
            k = len(classes)
            centroids = raw[: k * dim].reshape(k, dim).astype(np.float64)
            radii = raw[k * dim : k * dim + k].astype(np.float64)
            arts[key] = FvModel(
                tap=tap, rule=entry["rule"], classes=classes,
                centroids=centroids, radii=radii,
            )
        elif key.startswith("oc:"):
            payload = json.loads(
                gzip.decompress((path / entry["file"]).read_bytes()).decode("utf-8")
            )
            if payload["kind"] == "isolation-forest":
                model = IsolationForestModel(
                    n_trees=payload["n_trees"],
                    subsample=payload["subsample"],
                    trees=payload["trees"],
                    sample_size=payload["sample_size"],
                )
            else:
                model = LofModel(
                    k=payload["k"],
                    reference=np.array(payload["reference"]),
                    k_dist=np.array(payload["k_dist"]),
                    lrd_ref=np.array(payload["lrd_ref"]),
                    train_scores=np.array(payload["train_scores"]),
                )
            arts[key] = OneClassModel(
                tap=payload["tap"], kind=payload["kind"],
                model=model, theta=payload["theta"],
            )
    return arts

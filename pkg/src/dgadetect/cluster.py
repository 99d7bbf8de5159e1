"""Splitting NEW_DGA verdicts into candidate families.

Pipeline: drop samples without a unique (sld, suffix) pair, cluster
penultimate-layer features with X-Means (BIC-guided 2-means splits), then
refine clusters with context-less feature signatures. Everything is a pure
batch computation, deterministic under the configured seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .domain import ContextlessFeatures, DomainName
from .rng import SplitMix64, derive_seed
from .synth import LabeledSample


@dataclass(frozen=True)
class XMeansConfig:
    k_max: int = 30
    min_cluster_size: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")


def filter_unique_e2ld(samples: list[LabeledSample]) -> list[LabeledSample]:
    """Keep only samples whose (sld, suffix) pair occurs exactly once."""
    counts: dict[tuple[str, str], int] = {}
    for s in samples:
        key = (s.domain.sld, s.domain.suffix)
        counts[key] = counts.get(key, 0) + 1
    return [s for s in samples if counts[(s.domain.sld, s.domain.suffix)] == 1]


def _kmeans(X: np.ndarray, k: int, rng: SplitMix64, iters: int = 100):
    n = X.shape[0]
    centers = X[rng.sample_indices(n, k)].copy()
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(iters):
        D = cdist(X, centers)
        new_labels = D.argmin(axis=1)
        for ci in range(k):
            if not (new_labels == ci).any():
                # re-seed an empty cluster with the point farthest from its center
                far = int(D[np.arange(n), new_labels].argmax())
                centers[ci] = X[far]
                new_labels[far] = ci
        if (new_labels == labels).all():
            labels = new_labels
            break
        labels = new_labels
        for ci in range(k):
            centers[ci] = X[labels == ci].mean(axis=0)
    return centers, labels


def model_bic(X: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    """BIC under identical spherical per-cluster variance; higher is better.
    Free parameters: k * (dim + 1)."""
    n, d = X.shape
    k = centers.shape[0]
    sq = ((X - centers[labels]) ** 2).sum()
    variance = max(sq / (d * max(n - k, 1)), 1e-12)
    ll = (
        sum(
            n_i * math.log(n_i)
            for n_i in (int((labels == ci).sum()) for ci in range(k))
            if n_i > 0
        )
        - n * math.log(n)
        - n * d / 2.0 * math.log(2.0 * math.pi * variance)
        - d * (n - k) / 2.0
    )
    params = k * (d + 1)
    return ll - params / 2.0 * math.log(n)


def xmeans_cluster(features: np.ndarray, cfg: XMeansConfig) -> np.ndarray:
    """Cluster assignment in [0, k); k chosen by recursive 2-means splits
    accepted when the children's BIC exceeds the parent's."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("features must be a non-empty 2-d array")
    n = X.shape[0]
    assignment = np.zeros(n, dtype=np.intp)
    n_clusters = 1
    queue = [0]
    next_split_id = 0
    while queue and n_clusters < cfg.k_max:
        cid = queue.pop(0)
        members = np.nonzero(assignment == cid)[0]
        if members.size < 2:
            continue
        sub = X[members]
        if np.allclose(sub, sub[0]):
            continue
        rng = SplitMix64(derive_seed(cfg.rng_seed, f"xmeans:split:{next_split_id}"))
        next_split_id += 1
        centers2, labels2 = _kmeans(sub, 2, rng)
        if len(set(labels2.tolist())) < 2:
            continue
        parent_center = sub.mean(axis=0)[None, :]
        bic_parent = model_bic(sub, parent_center, np.zeros(sub.shape[0], dtype=np.intp))
        bic_children = model_bic(sub, centers2, labels2)
        if bic_children > bic_parent:
            new_id = n_clusters
            n_clusters += 1
            assignment[members[labels2 == 1]] = new_id
            queue.append(cid)
            queue.append(new_id)
    return assignment


def standardize(features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


# ---------------------------------------------------------------------------
# context-less refinement

# character categories for the refinement signature; the per-character mask
# is too fine (random slds rarely repeat an exact character subset)
_CATEGORIES = (
    ("alpha", set("abcdefghijklmnopqrstuvwxyz")),
    ("digit", set("0123456789")),
    ("hyphen", {"-"}),
    ("underscore", {"_"}),
    ("dot", {"."}),
)


def _signature(f: ContextlessFeatures, d: DomainName) -> tuple:
    present = set(d.full)
    cat_mask = 0
    for i, (_, chars) in enumerate(_CATEGORIES):
        if present & chars:
            cat_mask |= 1 << i
    return (
        f.suffix,
        cat_mask,
        f.length // 2,
        int(f.entropy_bits / 0.5),
        min(f.english_words, 2),
    )


@dataclass
class ClusterReport:
    clusters: list[dict] = field(default_factory=list)
    unclustered: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"clusters": self.clusters, "unclustered": self.unclustered},
            indent=2,
            sort_keys=True,
        )

    def to_text(self) -> str:
        lines = []
        for c in self.clusters:
            lines.append(
                f"Cluster {c['id']}  ({len(c['members'])} members, "
                f"suffixes={','.join(c['suffixes'])})"
            )
            for ex in c["exemplars"]:
                lines.append(f"    {ex}")
        lines.append(f"unclustered: {len(self.unclustered)}")
        return "\n".join(lines)


def refine_clusters(
    assignment: np.ndarray,
    samples: list[LabeledSample],
    features: list[ContextlessFeatures],
    min_cluster_size: int = 5,
) -> ClusterReport:
    """Split X-Means clusters by categorical signature, merge identical
    signatures across parents, and push tiny sub-clusters to unclustered."""
    if len(samples) != len(features) or len(samples) != len(assignment):
        raise ValueError("assignment, samples, and features must align")
    groups: dict[tuple, list[int]] = {}
    for i, s in enumerate(samples):
        sig = _signature(features[i], s.domain)
        groups.setdefault(sig, []).append(i)

    report = ClusterReport()
    cid = 0
    for sig in sorted(groups):
        members = groups[sig]
        if len(members) < min_cluster_size:
            report.unclustered.extend(samples[i].domain.full for i in members)
            continue
        fulls = [samples[i].domain.full for i in members]
        lengths = [features[i].length for i in members]
        entropies = [features[i].entropy_bits for i in members]
        words = [features[i].english_words for i in members]
        sig_union = 0
        for i in members:
            sig_union |= features[i].charset_sig
        report.clusters.append(
            {
                "id": cid,
                "members": fulls,
                "suffixes": sorted({features[i].suffix for i in members}),
                "length_range": [min(lengths), max(lengths)],
                "charset_sig": sig_union,
                "entropy_range": [min(entropies), max(entropies)],
                "word_count_range": [min(words), max(words)],
                "exemplars": fulls[:10],
            }
        )
        cid += 1
    return report

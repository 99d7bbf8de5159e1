"""One-class anomaly models over early-layer features.

Both models are implemented directly from their defining formulas so scores
can be checked against brute-force evaluation and stay reproducible across
runs (all randomness comes from seeded splitmix streams).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .rng import SplitMix64, stream

EULER_GAMMA = 0.5772156649015329
_EPS = 1e-12


def average_path_length(n: int) -> float:
    """c(n) = 2*H(n-1) - 2*(n-1)/n with H(i) = ln(i) + Euler's gamma."""
    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


# an isolation tree is a nested dict:
#   internal: {"f": feature, "s": split, "l": left, "r": right}
#   external: {"n": size}


def build_isolation_tree(X: np.ndarray, rng: SplitMix64, height_limit: int, depth: int = 0) -> dict:
    n = X.shape[0]
    if depth >= height_limit or n <= 1:
        return {"n": n}
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    usable = np.nonzero(hi > lo)[0]
    if usable.size == 0:
        return {"n": n}
    f = int(usable[rng.randrange(usable.size)])
    split = lo[f] + rng.uniform() * (hi[f] - lo[f])
    mask = X[:, f] < split
    if not mask.any() or mask.all():
        return {"n": n}
    return {
        "f": f,
        "s": float(split),
        "l": build_isolation_tree(X[mask], rng, height_limit, depth + 1),
        "r": build_isolation_tree(X[~mask], rng, height_limit, depth + 1),
    }


def path_length(tree: dict, x: np.ndarray) -> float:
    depth = 0
    node = tree
    while "f" in node:
        node = node["l"] if x[node["f"]] < node["s"] else node["r"]
        depth += 1
    return depth + average_path_length(node["n"])


@dataclass
class IsolationForestModel:
    n_trees: int = 100
    subsample: int = 256
    trees: list = field(default_factory=list)
    sample_size: int = 0

    def fit(self, X: np.ndarray, seed: int) -> "IsolationForestModel":
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if n == 0:
            raise ValueError("empty training set")
        psi = min(self.subsample, n)
        height_limit = math.ceil(math.log2(max(psi, 2)))
        self.sample_size = psi
        self.trees = []
        for t in range(self.n_trees):
            rng = stream(seed, f"iforest:tree:{t}")
            idx = rng.sample_indices(n, psi)
            self.trees.append(build_isolation_tree(X[idx], rng, height_limit))
        return self

    def score(self, X: np.ndarray) -> np.ndarray:
        """Anomaly score s(x) = 2^(-E[h(x)] / c(psi)); higher is more anomalous."""
        X = np.asarray(X, dtype=np.float64)
        denom = average_path_length(self.sample_size)
        if denom <= 0.0:
            denom = _EPS
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            mean_depth = sum(path_length(t, x) for t in self.trees) / len(self.trees)
            out[i] = 2.0 ** (-mean_depth / denom)
        return out


@dataclass
class LofModel:
    k: int = 20
    reference: np.ndarray | None = None
    k_dist: np.ndarray | None = None
    lrd_ref: np.ndarray | None = None
    train_scores: np.ndarray | None = None

    def fit(self, X: np.ndarray) -> "LofModel":
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if n < self.k + 1:
            raise ValueError(f"LOF needs at least k+1 = {self.k + 1} training points")
        D = cdist(X, X)
        np.fill_diagonal(D, np.inf)
        nn = np.argsort(D, axis=1, kind="stable")[:, : self.k]
        rows = np.arange(n)[:, None]
        nn_dist = D[rows, nn]
        k_dist = nn_dist[:, -1]
        reach = np.maximum(k_dist[nn], nn_dist)
        lrd = 1.0 / np.maximum(reach.mean(axis=1), _EPS)
        lof = lrd[nn].mean(axis=1) / lrd
        self.reference = X
        self.k_dist = k_dist
        self.lrd_ref = lrd
        self.train_scores = lof
        return self

    def score(self, Q: np.ndarray) -> np.ndarray:
        """LOF of query points relative to the fitted reference set."""
        Q = np.asarray(Q, dtype=np.float64)
        D = cdist(Q, self.reference)
        nn = np.argsort(D, axis=1, kind="stable")[:, : self.k]
        rows = np.arange(Q.shape[0])[:, None]
        nn_dist = D[rows, nn]
        reach = np.maximum(self.k_dist[nn], nn_dist)
        lrd_q = 1.0 / np.maximum(reach.mean(axis=1), _EPS)
        return self.lrd_ref[nn].mean(axis=1) / lrd_q

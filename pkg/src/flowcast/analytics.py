"""Exploratory analytics: histograms, k-means, outlier flags and exact t-SNE."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    median: float

    def log_counts(self) -> np.ndarray:
        out = np.zeros(len(self.counts))
        np.log10(self.counts, out=out, where=self.counts > 0)
        return out


def histogram(values: Sequence[float], bins: int = 50) -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("histogram of empty input")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=bins)
    return Histogram(edges, counts, float(np.median(values)))


# --- k-means ----------------------------------------------------------------

@dataclass
class KMeansResult:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0


def sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _inertia(X, C, labels) -> float:
    diff = X - C[labels]
    return float((diff * diff).sum())


def kmeans(data: np.ndarray, k: int, iters: int = 100, seed: int = 0) -> KMeansResult:
    """Lloyd iterations from ``k`` distinct random samples.

    ``history`` holds the inertia after every assignment step. An empty
    cluster is moved onto the point farthest from its current center.
    """
    X = np.asarray(data, dtype=np.float64)
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in 1..{n}")
    rng = np.random.default_rng(seed)
    C = X[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, iters + 1):
        new = np.argmin(sq_distances(X, C), axis=1)
        history.append(_inertia(X, C, new))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        C[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            dist = ((X - C[labels]) ** 2).sum(1)
            taken: set[int] = set()
            for c in np.flatnonzero(~nonempty):
                order = np.argsort(-dist, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                C[c] = X[far]
                dist[far] = 0.0
    final = np.argmin(sq_distances(X, C), axis=1)
    inertia = _inertia(X, C, final)
    if not np.array_equal(final, labels):
        history.append(inertia)
    return KMeansResult(C, final, inertia, history, it)


OUTLIER_MODES = ("avg", "median", "avg+std", "median+std")


def detect_outliers(result: KMeansResult, data: np.ndarray, mode: str = "avg+std") -> np.ndarray:
    """Flag members farther (strictly) from their center than the cluster threshold."""
    if mode not in OUTLIER_MODES:
        raise ValueError(f"mode must be one of {OUTLIER_MODES}")
    X = np.asarray(data, dtype=np.float64)
    dist = np.sqrt(((X - result.centers[result.assignments]) ** 2).sum(1))
    flags = np.zeros(len(X), dtype=bool)
    for c in np.unique(result.assignments):
        member = result.assignments == c
        d = dist[member]
        base = d.mean() if mode.startswith("avg") else np.median(d)
        if mode.endswith("+std"):
            base = base + d.std()
        flags[member] = d > base
    return flags


# --- t-SNE ------------------------------------------------------------------

MAX_TSNE_SAMPLES = 2000


@dataclass
class Embedding2D:
    coords: np.ndarray
    tags: list[str] | None = None
    kl_history: list[tuple[int, float]] = field(default_factory=list)

    @property
    def kl_initial(self) -> float:
        return self.kl_history[0][1]

    @property
    def kl_final(self) -> float:
        return self.kl_history[-1][1]


def _conditional_row(d: np.ndarray, beta: float):
    p = np.exp(-(d - d.min()) * beta)
    s = p.sum()
    p /= s
    # entropy in nats of the normalized row
    h = np.log(s) + beta * (p * (d - d.min())).sum()
    return p, h


def conditional_p(sqdist: np.ndarray, perplexity: float, tol: float = 1e-5,
                  max_steps: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic P with per-row bandwidths found by bisection on entropy."""
    n = len(sqdist)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    entropies = np.zeros(n)
    for i in range(n):
        d = np.delete(sqdist[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        scale = np.mean(d)
        if scale > 0:
            beta = 1.0 / scale
        for _ in range(max_steps):
            p, h = _conditional_row(d, beta)
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        P[i, np.arange(n) != i] = p
        entropies[i] = h
    return P, entropies


def _kl(P, Q) -> float:
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / Q[mask])).sum())


def tsne(data: np.ndarray, perplexity: float = 50.0, learning_rate: float = 200.0,
         iterations: int = 500, seed: int = 0, exaggeration: float = 12.0,
         exaggeration_iters: int = 100, momentum_switch: int = 250,
         max_samples: int = MAX_TSNE_SAMPLES, kl_every: int = 50) -> Embedding2D:
    X = np.asarray(data, dtype=np.float64)
    n = len(X)
    if n > max_samples:
        raise ValueError(f"exact t-SNE is capped at {max_samples} samples (got {n})")
    if not 0 < perplexity < n / 3:
        raise ValueError(f"perplexity {perplexity} infeasible for {n} samples (needs < N/3)")
    Pc, _ = conditional_p(sq_distances(X, X), perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []

    def q_matrix(Y):
        num = 1.0 / (1.0 + sq_distances(Y, Y))
        np.fill_diagonal(num, 0.0)
        return num, np.maximum(num / num.sum(), 1e-12)

    num, Q = q_matrix(Y)
    history.append((0, _kl(P, Q)))
    for it in range(1, iterations + 1):
        Pe = P * exaggeration if it <= exaggeration_iters else P
        W = (Pe - Q) * num
        grad = 4.0 * (np.diag(W.sum(1)) - W) @ Y
        momentum = 0.5 if it <= momentum_switch else 0.8
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        num, Q = q_matrix(Y)
        if it % kl_every == 0 or it == iterations:
            history.append((it, _kl(P, Q)))
    return Embedding2D(Y, None, history)


# --- tags -------------------------------------------------------------------

TAG_KINDS = ("protocol", "locality", "communication_type", "cluster", "outlier",
             "application", "true_label", "predicted_label")
APPLICATION_PORTS = {53: "DNS", 80: "HTTP(S)", 443: "HTTP(S)"}
PROTOCOL_NAMES = {6: "TCP", 17: "UDP"}


def application_tag(dst_port: int, src_port: int | None = None) -> str:
    if dst_port in APPLICATION_PORTS:
        return APPLICATION_PORTS[dst_port]
    if src_port is not None and src_port in APPLICATION_PORTS:
        return APPLICATION_PORTS[src_port]
    return "other"


def tag_overlay(entries: Sequence, embedding: Embedding2D, tag_kind: str,
                values: Sequence | None = None) -> Embedding2D:
    """Attach one categorical tag per sample.

    ``cluster``, ``outlier``, ``true_label`` and ``predicted_label`` take the
    per-sample ``values``; the other kinds are read from the entries.
    """
    n = len(embedding.coords)
    if len(entries) != n:
        raise ValueError(f"{len(entries)} entries for {n} embedded samples")
    if tag_kind not in TAG_KINDS:
        raise ValueError(f"unknown tag kind {tag_kind!r}")
    if tag_kind == "protocol":
        tags = [PROTOCOL_NAMES.get(e.protocol, "other") for e in entries]
    elif tag_kind == "locality":
        tags = [e.src.locality for e in entries]
    elif tag_kind == "communication_type":
        tags = [e.communication_type for e in entries]
    elif tag_kind == "application":
        tags = [application_tag(e.dst_port, e.src_port) for e in entries]
    else:
        if values is None or len(values) != n:
            raise ValueError(f"tag kind {tag_kind!r} needs {n} values")
        if tag_kind == "outlier":
            tags = ["outlier" if v else "kept" for v in values]
        elif tag_kind == "cluster":
            tags = [f"k{int(v)}" for v in values]
        else:
            tags = [f"c{int(v)}" for v in values]
    return Embedding2D(embedding.coords, tags, embedding.kl_history)

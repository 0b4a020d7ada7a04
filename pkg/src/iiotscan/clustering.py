"""Subject-name template clustering and per-parameter entropy comparison."""
from __future__ import annotations

import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .assessor.certs import CertificateRecord

NGRAM_RANGE = (1, 3)
TOP_K = 500
MIN_SIMILARITY = 0.5
EPS = 0.8
MIN_POINTS = 3
NOISE = -1
_ROW_BLOCK = 256


def char_ngrams(text: str, lo: int = NGRAM_RANGE[0], hi: int = NGRAM_RANGE[1]) -> Counter:
    grams: Counter = Counter()
    for n in range(lo, hi + 1):
        for i in range(len(text) - n + 1):
            grams[text[i:i + n]] += 1
    return grams


@dataclass
class Vectors:
    """Row-normalized TF-IDF matrix plus its vocabulary."""

    matrix: sparse.csr_matrix
    vocabulary: dict[str, int]
    idf: np.ndarray

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def row(self, i: int) -> dict[str, float]:
        inv = {v: k for k, v in self.vocabulary.items()}
        r = self.matrix.getrow(i)
        return {inv[j]: float(w) for j, w in zip(r.indices, r.data)}


def vectorize(subjects: Sequence[str]) -> Vectors:
    """TF = raw count, IDF = ln(N/df) + 1, rows scaled to unit L2 norm."""
    counts = [char_ngrams(s) for s in subjects]
    vocab: dict[str, int] = {}
    for c in counts:
        for term in sorted(c):
            vocab.setdefault(term, len(vocab))
    n = len(subjects)
    df = np.zeros(len(vocab))
    rows, cols, vals = [], [], []
    for i, c in enumerate(counts):
        for term, tf in c.items():
            j = vocab[term]
            df[j] += 1
            rows.append(i)
            cols.append(j)
            vals.append(float(tf))
    idf = np.log(n / df) + 1.0 if n else df
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n, len(vocab)))
    m = m @ sparse.diags(idf) if len(vocab) else m
    m = sparse.csr_matrix(m)
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    m = sparse.csr_matrix(sparse.diags(1.0 / norms) @ m)
    return Vectors(m, vocab, idf)


def similarity_graph(vectors: Vectors, top_k: int = TOP_K, min_similarity: float = MIN_SIMILARITY,
                     symmetric: bool = True) -> sparse.csr_matrix:
    """Cosine neighbours per row: the top_k most similar others at or above min_similarity.

    Rows are truncated first, then the graph is made symmetric by union.
    Ties are broken by ascending index.  The diagonal is left empty.
    """
    x = vectors.matrix
    n = x.shape[0]
    rows, cols, vals = [], [], []
    for start in range(0, n, _ROW_BLOCK):
        block = (x[start:start + _ROW_BLOCK] @ x.T).toarray()
        for off, sims in enumerate(block):
            i = start + off
            sims[i] = -1.0
            cand = np.flatnonzero(sims >= min_similarity)
            if len(cand) > top_k:
                order = np.lexsort((cand, -sims[cand]))
                cand = np.sort(cand[order[:top_k]])
            rows.extend([i] * len(cand))
            cols.extend(cand.tolist())
            vals.extend(np.clip(sims[cand], 0.0, 1.0).tolist())
    g = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    if symmetric:
        g = g.maximum(g.T).tocsr()
    g.sort_indices()
    return g


def dbscan(graph: sparse.csr_matrix, eps: float = EPS, min_points: int = MIN_POINTS) -> list[int]:
    """Labels per point (NOISE for noise); points are visited in index order.

    A point's neighbourhood is itself plus every graph neighbour whose
    cosine distance is at most eps.
    """
    n = graph.shape[0]
    neigh = []
    for i in range(n):
        lo, hi = graph.indptr[i], graph.indptr[i + 1]
        idx, sims = graph.indices[lo:hi], graph.data[lo:hi]
        neigh.append([i] + [int(j) for j, s in zip(idx, sims) if 1.0 - s <= eps and j != i])
    labels = [None] * n
    cluster = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        if len(neigh[i]) < min_points:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque(sorted(neigh[i]))
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
            if labels[j] is not None:
                continue
            labels[j] = cluster
            if len(neigh[j]) >= min_points:
                queue.extend(sorted(neigh[j]))
        cluster += 1
    return labels


# --- entropy ---------------------------------------------------------------------------

def shannon(values: Sequence) -> float:
    """Entropy in bits of the empirical distribution."""
    n = len(values)
    if n == 0:
        return 0.0
    h = 0.0
    for c in Counter(values).values():
        p = c / n
        h -= p * math.log2(p)
    return h


def normalized_entropy(values: Sequence) -> float:
    n = len(values)
    if n <= 1:
        return 0.0
    h = shannon(values)
    return 0.0 if h == 0 else min(1.0, h / math.log2(n))


PARAMETERS: dict[str, Callable[[CertificateRecord], object]] = {
    "key": lambda c: f"{c.key_type}-{c.key_bits}",
    "signature_algorithm": lambda c: c.sig_algorithm or c.sig_hash,
    "lifetime_days": lambda c: round(c.lifetime.total_seconds() / 86400),
    "not_before_date": lambda c: c.not_before.date().isoformat(),
    "key_usage": lambda c: ",".join(c.key_usage),
    "issuer": lambda c: c.issuer,
}


@dataclass
class ParameterEntropy:
    global_entropy: float
    normalized_global_entropy: float
    weighted_cluster_entropy: float

    @property
    def template_influence(self) -> bool:
        return self.weighted_cluster_entropy < self.normalized_global_entropy

    def to_json(self) -> dict:
        return {"global_entropy": self.global_entropy, "normalized_global_entropy": self.normalized_global_entropy,
                "weighted_cluster_entropy": self.weighted_cluster_entropy,
                "template_influence": self.template_influence}


def weighted_cluster_entropy(groups: Sequence[Sequence]) -> float:
    total = sum(len(g) for g in groups)
    if total == 0:
        return 0.0
    return sum(len(g) / total * normalized_entropy(g) for g in groups)


def entropy_analysis(values: dict[str, Sequence], labels: Sequence[int]) -> dict[str, ParameterEntropy]:
    """Per parameter: corpus entropy against the size-weighted mean cluster entropy.

    ``values`` maps a parameter name to one value per corpus element;
    elements labelled NOISE only contribute to the corpus figure.
    """
    out = {}
    for name, vals in values.items():
        if len(vals) != len(labels):
            raise ValueError(f"{name}: {len(vals)} values for {len(labels)} labels")
        groups: dict[int, list] = defaultdict(list)
        for v, lab in zip(vals, labels):
            if lab != NOISE:
                groups[lab].append(v)
        out[name] = ParameterEntropy(shannon(vals), normalized_entropy(vals),
                                     weighted_cluster_entropy(list(groups.values())))
    return out


def certificate_parameters(certs: Sequence[CertificateRecord]) -> dict[str, list]:
    return {name: [fn(c) for c in certs] for name, fn in PARAMETERS.items()}


# --- report ---------------------------------------------------------------------------

@dataclass
class ClusterReport:
    clusters: list[list[str]] = field(default_factory=list)
    noise: list[str] = field(default_factory=list)
    per_parameter: dict[str, ParameterEntropy] = field(default_factory=dict)
    labels: list[int] = field(default_factory=list)

    metadata = {
        "vectorizer": "character n-grams (1,3) of the raw subject string",
        "tf": "raw count", "idf": "ln(N/df)+1", "normalization": "l2",
        "top_k": TOP_K, "min_similarity": MIN_SIMILARITY, "eps": EPS, "min_points": MIN_POINTS,
        "neighbour_truncation": "per row, then symmetrized by union",
        "cluster_entropy_normalization": "log2(cluster size)",
        "manual_review_required": True,
    }

    def to_json(self) -> dict:
        return {"clusters": self.clusters, "noise": self.noise,
                "per_parameter": {k: v.to_json() for k, v in self.per_parameter.items()},
                "metadata": dict(self.metadata)}


def cluster_certificates(certs: Sequence[CertificateRecord]) -> ClusterReport:
    """Cluster distinct certificates by subject and compute the entropy table."""
    seen: dict[str, CertificateRecord] = {}
    for c in certs:
        seen.setdefault(c.fingerprint, c)
    corpus = list(seen.values())
    if not corpus:
        return ClusterReport()
    labels = settle_labels(dbscan(similarity_graph(vectorize([c.subject for c in corpus]))))
    clusters: dict[int, list[str]] = defaultdict(list)
    noise = []
    for c, lab in zip(corpus, labels):
        (noise if lab == NOISE else clusters[lab]).append(c.fingerprint)
    return ClusterReport([clusters[k] for k in sorted(clusters)], noise,
                         entropy_analysis(certificate_parameters(corpus), labels), labels)


def settle_labels(labels: Sequence[int], min_size: int = MIN_POINTS) -> list[int]:
    """Demote clusters left smaller than min_size to noise and renumber the rest.

    DBSCAN can leave such a cluster when the border points of its only core
    point were already claimed by an earlier cluster.
    """
    sizes = Counter(lab for lab in labels if lab != NOISE)
    keep = sorted(lab for lab, n in sizes.items() if n >= min_size)
    renumber = {lab: i for i, lab in enumerate(keep)}
    return [renumber.get(lab, NOISE) for lab in labels]

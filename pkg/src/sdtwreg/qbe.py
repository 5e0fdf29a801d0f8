"""Query-by-example scoring with whole-sequence DTW, and a simplified MTWV.

``TWV(theta) = 1 - mean_q [P_miss(q, theta) + beta * P_fa(q, theta)]`` where a
pair is a detection when its score is ``>= theta``.  The mean runs over
queries with at least one relevant document; a query with no irrelevant
documents has ``P_fa = 0``.  MTWV is the maximum over thresholds drawn from
the observed scores plus ``+inf`` (nothing detected, TWV = 0).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EmbeddingSequence, as_frames, make_rng, write_sequence
from .perturb import (
    PerturbConfig,
    SyntheticCorpusSpec,
    class_prototypes,
    feature_transform,
    load_manifest_sequences,
    synth_item,
    write_manifest,
)
from .softdtw import hard_dtw
from .trainer import EncoderParams, encode_all


class NoPositives(ValueError):
    pass


@dataclass
class QbeTask:
    queries: list  # [(id, EmbeddingSequence)]
    docs: list
    relevance: set  # {(query_id, doc_id)}

    def __post_init__(self):
        qids = [q for q, _ in self.queries]
        dids = [d for d, _ in self.docs]
        if len(set(qids)) != len(qids) or len(set(dids)) != len(dids):
            raise ValueError("query and doc ids must be unique")
        self.relevance = {(str(q), str(d)) for q, d in self.relevance}
        known_q, known_d = set(map(str, qids)), set(map(str, dids))
        for q, d in self.relevance:
            if q not in known_q or d not in known_d:
                raise ValueError(f"relevance pair ({q}, {d}) references an unknown id")


@dataclass
class QbeReport:
    scores: dict  # {(query_id, doc_id): score}
    mtwv: float
    best_threshold: float
    top1: float
    beta: float = 1.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "mtwv": self.mtwv,
            "best_threshold": self.best_threshold if math.isfinite(self.best_threshold) else "inf",
            "top1": self.top1,
            "beta": self.beta,
            "scores": [[q, d, s] for (q, d), s in sorted(self.scores.items())],
            **self.extra,
        }


def qbe_score(query, doc) -> float:
    """Negative DTW cost per path step; 0 is a perfect match."""
    value, path = hard_dtw(query, doc)
    return -value / len(path)


def mtwv(task: QbeTask, scores: dict, beta: float = 1.0) -> tuple[float, float]:
    """Maximum term-weighted value and the lowest threshold achieving it."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if not task.relevance:
        raise NoPositives("task has no relevant query/doc pairs")
    qids = [str(q) for q, _ in task.queries]
    dids = [str(d) for d, _ in task.docs]
    per_query = []
    for q in qids:
        pos = np.array([scores[(q, d)] for d in dids if (q, d) in task.relevance])
        neg = np.array([scores[(q, d)] for d in dids if (q, d) not in task.relevance])
        if pos.size:
            per_query.append((np.sort(pos), np.sort(neg)))
    thresholds = sorted(set(float(s) for s in scores.values())) + [math.inf]
    best, best_theta = -math.inf, math.inf
    for theta in thresholds:
        loss = 0.0
        for pos, neg in per_query:
            # count of scores >= theta via the sorted arrays
            p_miss = np.searchsorted(pos, theta, side="left") / pos.size
            p_fa = (neg.size - np.searchsorted(neg, theta, side="left")) / neg.size if neg.size else 0.0
            loss += p_miss + beta * p_fa
        twv = 1.0 - loss / len(per_query)
        if twv > best:
            best, best_theta = twv, theta
    return float(best), best_theta


def score_all(queries: Sequence[np.ndarray], docs: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([[qbe_score(q, d) for d in docs] for q in queries])


def qbe_eval(encoder: EncoderParams | None, task: QbeTask, beta: float = 1.0) -> QbeReport:
    """Encode every sequence, score all pairs, report MTWV and top-1 accuracy.

    ``encoder=None`` scores the raw frames.  Top-1 counts a query as correct
    when its best-scoring document (first on ties) is relevant.
    """
    q_enc = encode_all(encoder, [s for _, s in task.queries])
    d_enc = encode_all(encoder, [s for _, s in task.docs])
    S = score_all(q_enc, d_enc)
    qids = [str(q) for q, _ in task.queries]
    dids = [str(d) for d, _ in task.docs]
    scores = {(q, d): float(S[a, b]) for a, q in enumerate(qids) for b, d in enumerate(dids)}
    value, theta = mtwv(task, scores, beta)
    hits = [(q, dids[int(np.argmax(S[a]))]) in task.relevance for a, q in enumerate(qids)]
    return QbeReport(scores, value, theta, float(np.mean(hits)), beta)


# --------------------------------------------------------------------------
# synthetic tasks and task files


def content_segments(classes) -> list[tuple[int, int]]:
    """Run-length encode a per-frame class sequence into ``(class, length)``."""
    return [(int(k), len(list(g))) for k, g in itertools.groupby(classes)]


def resynthesize(classes, spec: SyntheticCorpusSpec, protos: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A fresh realization of the same content: same class order, newly drawn
    segment durations and frame jitter."""
    out = []
    for k, _ in content_segments(classes):
        out += [k] * int(rng.integers(spec.segment_range[0], spec.segment_range[1] + 1))
    return protos[out] + spec.jitter_std * rng.standard_normal((len(out), spec.dim))


def make_qbe_task(
    spec: SyntheticCorpusSpec = SyntheticCorpusSpec(),
    n_docs: int = 50,
    n_queries: int = 50,
    pert: PerturbConfig = PerturbConfig(),
    seed: int = 0,
) -> QbeTask:
    """Synthetic QbE task over the corpus class prototypes.

    Docs are fresh corpus items from a seed stream disjoint from the
    training items.  Query k re-utters the content of doc ``k mod n_docs``
    (see :func:`resynthesize`) and then gets the nuisance feature transform
    of ``pert``; that doc is its only relevant document.
    """
    protos = class_prototypes(spec)
    docs, doc_classes = [], []
    for i in range(n_docs):
        frames, classes = synth_item(spec, i, protos, stream=2)
        docs.append((f"doc{i:04d}", EmbeddingSequence(frames.astype(np.float32).astype(np.float64))))
        doc_classes.append(classes)
    queries, relevance = [], set()
    for k in range(n_queries):
        rng = make_rng(seed, 3, k)
        frames = resynthesize(doc_classes[k % n_docs], spec, protos, rng)
        q = feature_transform(frames, pert.transform_strength, int(rng.integers(2**63)), pert.noise_std)
        qid = f"query{k:04d}"
        queries.append((qid, EmbeddingSequence(q.frames.astype(np.float32).astype(np.float64))))
        relevance.add((qid, docs[k % n_docs][0]))
    return QbeTask(queries, docs, relevance)


def write_task(task: QbeTask, out_dir) -> Path:
    """Write queries/docs as eseq + manifests and ``task.json``; returns its path."""
    out = Path(out_dir)
    for kind, items in (("queries", task.queries), ("docs", task.docs)):
        sub = out / kind
        sub.mkdir(parents=True, exist_ok=True)
        entries = []
        for ident, seq in items:
            write_sequence(seq, sub / f"{ident}.eseq")
            entries.append({"id": ident, "path": f"{ident}.eseq", "t": len(as_frames(seq))})
        write_manifest(entries, sub / "manifest.jsonl")
    path = out / "task.json"
    doc = {
        "queries": "queries/manifest.jsonl",
        "docs": "docs/manifest.jsonl",
        "positives": sorted([q, d] for q, d in task.relevance),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_task(path) -> QbeTask:
    path = Path(path)
    doc = json.loads(path.read_text())
    try:
        qm, dm, pos = doc["queries"], doc["docs"], doc["positives"]
    except KeyError as exc:
        raise ValueError(f"task file missing key {exc}") from None
    q_entries, q_seqs = load_manifest_sequences(path.parent / qm)
    d_entries, d_seqs = load_manifest_sequences(path.parent / dm)
    return QbeTask(
        [(e["id"], s) for e, s in zip(q_entries, q_seqs)],
        [(e["id"], s) for e, s in zip(d_entries, d_seqs)],
        {(q, d) for q, d in pos},
    )

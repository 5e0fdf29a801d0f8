"""Synthetic correspondence pairs and a seeded synthetic corpus.

Feature-level stand-ins for waveform augmentation: time resampling plays
the role of speed perturbation and a random plane rotation (plus noise)
plays the role of a pitch shift.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import EmbeddingSequence, as_frames, make_rng, read_sequence, write_sequence


class DegenerateLength(ValueError):
    pass


@dataclass(frozen=True)
class PerturbConfig:
    speed_factors: tuple = (0.9, 1.0, 1.1)
    transform_strength: float = 0.1
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        factors = tuple(sorted(float(f) for f in self.speed_factors))
        if not factors or any(not (f > 0 and math.isfinite(f)) for f in factors):
            raise ValueError(f"speed factors must be finite and > 0, got {self.speed_factors}")
        object.__setattr__(self, "speed_factors", factors)
        for name in ("transform_strength", "noise_std"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_items: int = 200
    len_range: tuple = (20, 60)
    dim: int = 16
    n_content_classes: int = 12
    seed: int = 0
    segment_range: tuple = (2, 6)
    jitter_std: float = 0.15

    def __post_init__(self):
        t_min, t_max = self.len_range
        if t_min < 2 or t_max < t_min:
            raise ValueError(f"len_range must satisfy 2 <= T_min <= T_max, got {self.len_range}")
        if self.n_items < 1 or self.dim < 1 or self.n_content_classes < 1:
            raise ValueError("n_items, dim and n_content_classes must be >= 1")
        s_min, s_max = self.segment_range
        if s_min < 1 or s_max < s_min:
            raise ValueError(f"bad segment_range {self.segment_range}")


def resampled_length(t: int, factor: float) -> int:
    # round half up, not banker's rounding
    return int(math.floor(t / factor + 0.5))


def resample_positions(t: int, factor: float) -> np.ndarray:
    """Source positions (fractional frame indices) sampled by ``time_resample``."""
    if t < 2:
        raise DegenerateLength(f"time_resample needs T >= 2, got {t}")
    if not factor > 0:
        raise ValueError(f"factor must be > 0, got {factor}")
    new_t = resampled_length(t, factor)
    if new_t < 2:
        raise DegenerateLength(f"factor {factor} maps T={t} to {new_t} frames")
    return np.linspace(0.0, t - 1, new_t)


def time_resample(x, factor: float) -> EmbeddingSequence:
    """Linear interpolation along time to ``round(T / factor)`` frames.

    Output frames sit at evenly spaced positions from the first to the last
    source frame, so both endpoints are kept exactly.
    """
    X = as_frames(x)
    pos = resample_positions(X.shape[0], factor)
    lo = np.minimum(np.floor(pos).astype(np.intp), X.shape[0] - 2)
    w = (pos - lo)[:, None]
    return EmbeddingSequence((1.0 - w) * X[lo] + w * X[lo + 1])


def resample_labels(labels, factor: float) -> list[int]:
    """Frame labels carried through ``time_resample`` (nearest source frame)."""
    pos = resample_positions(len(labels), factor)
    idx = np.floor(pos + 0.5).astype(np.intp)
    return [int(labels[i]) for i in idx]


def rotation_matrix(dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by ``angle`` inside a random 2-plane of R^dim."""
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(dim)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    c, s = math.cos(angle), math.sin(angle)
    return (
        np.eye(dim)
        + (c - 1.0) * (np.outer(u, u) + np.outer(v, v))
        + s * (np.outer(v, u) - np.outer(u, v))
    )


def feature_transform(x, strength: float, seed: int, noise_std: float = 0.0) -> EmbeddingSequence:
    """Apply one random global rotation to every frame, then add noise.

    For one-dimensional frames the rotation degenerates to scaling by
    ``1 + strength``.
    """
    X = as_frames(x)
    rng = make_rng(seed)
    d = X.shape[1]
    if d >= 2:
        out = X @ rotation_matrix(d, strength, rng).T
    else:
        out = X * (1.0 + strength)
    if noise_std > 0:
        out = out + noise_std * rng.standard_normal(out.shape)
    return EmbeddingSequence(out)


def perturb_sequence(x, cfg: PerturbConfig) -> tuple[EmbeddingSequence, float]:
    """The perturbed copy of ``x`` and the speed factor that was drawn."""
    rng = make_rng(cfg.seed)
    factor = cfg.speed_factors[int(rng.integers(len(cfg.speed_factors)))]
    sub_seed = int(rng.integers(2**63))
    xp = feature_transform(time_resample(x, factor), cfg.transform_strength, sub_seed, cfg.noise_std)
    return xp, factor


def make_pair(x, cfg: PerturbConfig) -> tuple[EmbeddingSequence, EmbeddingSequence]:
    """``(x, perturbed x)``: speed perturbation first, then the feature transform."""
    seq = x if isinstance(x, EmbeddingSequence) else EmbeddingSequence(x)
    xp, _ = perturb_sequence(seq, cfg)
    return seq, xp


# --------------------------------------------------------------------------
# corpus


def class_prototypes(spec: SyntheticCorpusSpec) -> np.ndarray:
    """Unit-scale prototype vector per latent content class."""
    rng = make_rng(spec.seed, 0)
    protos = rng.standard_normal((spec.n_content_classes, spec.dim))
    return protos / np.sqrt(spec.dim)


def synth_item(spec: SyntheticCorpusSpec, index: int, protos: np.ndarray | None = None, stream: int = 1):
    """One corpus item: ``(frames, classes)``, seeded by ``(spec.seed, stream, index)``.

    A random walk over the classes (no immediate repeats) in
    piecewise-constant segments, each frame jittered with Gaussian noise.
    """
    if protos is None:
        protos = class_prototypes(spec)
    rng = make_rng(spec.seed, stream, index)
    t = int(rng.integers(spec.len_range[0], spec.len_range[1] + 1))
    classes: list[int] = []
    prev = -1
    while len(classes) < t:
        k = int(rng.integers(spec.n_content_classes))
        if spec.n_content_classes > 1:
            while k == prev:
                k = int(rng.integers(spec.n_content_classes))
        seg = int(rng.integers(spec.segment_range[0], spec.segment_range[1] + 1))
        classes.extend([k] * seg)
        prev = k
    classes = classes[:t]
    frames = protos[classes] + spec.jitter_std * rng.standard_normal((t, spec.dim))
    return frames, classes


def generate_corpus(spec: SyntheticCorpusSpec, out_dir) -> list[dict]:
    """Write ``n_items`` eseq files plus ``manifest.jsonl`` to ``out_dir``.

    Returns the manifest entries.  Paths in the manifest are relative to
    the manifest file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    protos = class_prototypes(spec)
    entries = []
    width = max(4, len(str(spec.n_items - 1)))
    for i in range(spec.n_items):
        frames, classes = synth_item(spec, i, protos)
        name = f"item{i:0{width}d}.eseq"
        write_sequence(frames, out / name)
        entries.append({"id": f"item{i:0{width}d}", "path": name, "t": len(classes), "classes": classes})
    write_manifest(entries, out / "manifest.jsonl")
    return entries


def synth_corpus(spec: SyntheticCorpusSpec) -> list[EmbeddingSequence]:
    """The corpus of ``generate_corpus`` in memory, float32-rounded like the files."""
    protos = class_prototypes(spec)
    return [
        EmbeddingSequence(synth_item(spec, i, protos)[0].astype(np.float32).astype(np.float64))
        for i in range(spec.n_items)
    ]


def write_manifest(entries, path) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_manifest_sequences(path) -> tuple[list[dict], list[EmbeddingSequence]]:
    path = Path(path)
    entries = read_manifest(path)
    seqs = [read_sequence(path.parent / e["path"]) for e in entries]
    return entries, seqs


def with_seed(cfg: PerturbConfig, seed: int) -> PerturbConfig:
    return replace(cfg, seed=int(seed))

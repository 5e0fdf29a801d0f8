"""Desk-scale correspondence training.

A two-layer encoder (tanh hidden layer, then a linear projection with row
L2-normalization) is trained with AdamW on pairs ``(z, perturbed z)`` to
minimize the combined alignment + regularization loss.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cidm import CidmConfig
from .core import EmbeddingSequence, as_frames, derive_seed, make_rng, self_distance_matrix
from .loss import laser_loss
from .perturb import PerturbConfig, load_manifest_sequences, perturb_sequence, with_seed
from .softdtw import SoftDtwConfig

log = logging.getLogger(__name__)

PARAM_NAMES = ("w_feat", "b_feat", "w_proj", "b_proj")

CHECKPOINT_MAGIC = b"LASR"
CHECKPOINT_VERSION = 1


class NonFiniteLoss(FloatingPointError):
    def __init__(self, record: dict):
        super().__init__(f"non-finite loss at update {record['update']}: {record}")
        self.record = record


@dataclass(frozen=True)
class EncoderParams:
    w_feat: np.ndarray  # (D_in, H)
    b_feat: np.ndarray  # (H,)
    w_proj: np.ndarray  # (H, D_proj)
    b_proj: np.ndarray  # (D_proj,)

    def __post_init__(self):
        d_in, h = self.w_feat.shape
        if self.b_feat.shape != (h,) or self.w_proj.shape[0] != h or self.b_proj.shape != (self.w_proj.shape[1],):
            raise ValueError("inconsistent encoder parameter shapes")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.w_feat.shape[0], self.w_feat.shape[1], self.w_proj.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays().values())


def init_encoder(d_in: int, hidden: int, d_proj: int, seed: int) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
    rng = make_rng(seed)
    a1, a2 = 1.0 / math.sqrt(d_in), 1.0 / math.sqrt(hidden)
    return EncoderParams(
        w_feat=rng.uniform(-a1, a1, (d_in, hidden)),
        b_feat=rng.uniform(-a1, a1, hidden),
        w_proj=rng.uniform(-a2, a2, (hidden, d_proj)),
        b_proj=rng.uniform(-a2, a2, d_proj),
    )


def _forward(params: EncoderParams, Z: np.ndarray):
    H = np.tanh(Z @ params.w_feat + params.b_feat)
    P = H @ params.w_proj + params.b_proj
    norms = np.sqrt(np.einsum("ij,ij->i", P, P))
    X = P / norms[:, None]
    return X, (H, norms)


def _backward(params: EncoderParams, Z: np.ndarray, X: np.ndarray, cache, gX: np.ndarray) -> dict:
    H, norms = cache
    # d/dP of P/|P|: project out the radial component
    gP = (gX - X * np.einsum("ij,ij->i", X, gX)[:, None]) / norms[:, None]
    gH = gP @ params.w_proj.T
    gA = gH * (1.0 - H * H)
    return {
        "w_feat": Z.T @ gA,
        "b_feat": gA.sum(axis=0),
        "w_proj": H.T @ gP,
        "b_proj": gP.sum(axis=0),
    }


def encoder_forward(params: EncoderParams, z) -> EmbeddingSequence:
    Z = as_frames(z)
    if Z.shape[1] != params.dims[0]:
        raise ValueError(f"dimension mismatch: encoder expects {params.dims[0]}, got {Z.shape[1]}")
    X, _ = _forward(params, Z)
    return EmbeddingSequence(X, normalized=True)


def encode_all(params: EncoderParams | None, seqs: Sequence) -> list[np.ndarray]:
    """Encode many sequences with one batched forward pass (None = identity)."""
    mats = [as_frames(s) for s in seqs]
    if params is None:
        return mats
    if any(m.shape[1] != params.dims[0] for m in mats):
        raise ValueError(f"dimension mismatch: encoder expects {params.dims[0]}")
    X, _ = _forward(params, np.concatenate(mats))
    return np.split(X, np.cumsum([m.shape[0] for m in mats])[:-1])


def loss_and_param_grads(params: EncoderParams, pairs, sdtw_cfg: SoftDtwConfig, cidm_cfg: CidmConfig):
    """Batch-mean loss through the encoder and its parameter gradients.

    Returns ``(means, grads, encoded)`` where ``means`` holds the averaged
    loss terms and ``encoded`` the projected originals (for diagnostics).
    """
    mats = []
    for z, zp in pairs:
        mats.append(as_frames(z))
        mats.append(as_frames(zp))
    lengths = [m.shape[0] for m in mats]
    Z = np.concatenate(mats)
    X, cache = _forward(params, Z)
    xs = np.split(X, np.cumsum(lengths)[:-1])
    k = len(pairs)
    grads_x = []
    sums = dict.fromkeys(("align_term", "reg_x", "reg_xp", "total"), 0.0)
    for p in range(k):
        br = laser_loss(xs[2 * p], xs[2 * p + 1], sdtw_cfg, cidm_cfg)
        for key in sums:
            sums[key] += getattr(br, key)
        grads_x.append(br.grad_x / k)
        grads_x.append(br.grad_xp / k)
    means = {key: v / k for key, v in sums.items()}
    grads = _backward(params, Z, X, cache, np.concatenate(grads_x))
    return means, grads, xs[0::2]


# --------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class OptimState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def zeros(cls, params: EncoderParams, **hyper) -> "OptimState":
        arrs = params.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrs.items()},
            v={k: np.zeros_like(a) for k, a in arrs.items()},
            **hyper,
        )


def adamw_step(params: EncoderParams, grads: dict, state: OptimState, lr_now: float):
    """One AdamW update; returns ``(new_params, new_state)``.

    Weight decay is decoupled and uses the pre-update parameters:
    ``p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)``.
    """
    if lr_now < 0:
        raise ValueError("learning rate must be >= 0")
    b1, b2 = state.betas
    t = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.arrays().items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {k}: grad {g.shape} vs param {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p[k] = p - lr_now * state.weight_decay * p - lr_now * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k], new_v[k] = m, v
    return EncoderParams(**new_p), replace(state, m=new_m, v=new_v, step=t)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    total_updates: int = 3600
    warmup_updates: int = 1000
    batch_size: int = 8
    peak_lr: float = 1e-3
    seed: int = 0
    ablation: str = "with_reg"
    hidden: int = 32
    d_proj: int = 8
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.total_updates < 1:
            raise ValueError("total_updates must be >= 1")
        if not 0 <= self.warmup_updates <= self.total_updates:
            raise ValueError("need 0 <= warmup_updates <= total_updates")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.ablation not in ("with_reg", "without_reg"):
            raise ValueError(f"ablation must be with_reg or without_reg, got {self.ablation!r}")
        if self.peak_lr < 0:
            raise ValueError("peak_lr must be >= 0")


# learning-rate setting reported for ~95M-parameter pre-trained encoders
LARGE_MODEL_PEAK_LR = 2.0e-5


def lr_schedule(update: int, cfg: TrainConfig) -> float:
    """Linear warmup from 0 to ``peak_lr`` over ``warmup_updates``, then flat."""
    if update < 1:
        raise ValueError("updates are counted from 1")
    if cfg.warmup_updates and update < cfg.warmup_updates:
        return cfg.peak_lr * update / cfg.warmup_updates
    return cfg.peak_lr


def collapse_index(xs: Sequence) -> float:
    """Mean over sequences of the mean squared distance between distinct frames.

    Zero exactly when every sequence is constant; small values mean the
    embeddings have clustered together.
    """
    if len(xs) == 0:
        raise ValueError("collapse_index needs at least one sequence")
    total = 0.0
    for s in xs:
        X = as_frames(s)
        t = X.shape[0]
        if t < 2:
            raise ValueError(f"too-short sequence: collapse_index needs T >= 2, got {t}")
        total += float(self_distance_matrix(X).sum()) / (t * (t - 1))
    return total / len(xs)


def train(
    corpus,
    cfg: TrainConfig = TrainConfig(),
    pert: PerturbConfig = PerturbConfig(),
    sdtw_cfg: SoftDtwConfig = SoftDtwConfig(),
    cidm_cfg: CidmConfig = CidmConfig(),
    params: EncoderParams | None = None,
    on_record: Callable[[dict], None] | None = None,
) -> tuple[EncoderParams, list[dict]]:
    """Run the training loop; returns final parameters and one record per update.

    ``corpus`` is a manifest path or a list of sequences.  Everything random
    is derived from ``cfg.seed``: encoder init, batch draws and per-pair
    perturbation seeds (``pert.seed`` is overridden per pair).  With
    ``cfg.ablation == "without_reg"`` the regularizer weight is zero.
    """
    seqs = load_manifest_sequences(corpus)[1] if isinstance(corpus, (str, Path)) else list(corpus)
    if not seqs:
        raise ValueError("empty corpus")
    seqs = [as_frames(s) for s in seqs]
    d_in = seqs[0].shape[1]
    if params is None:
        params = init_encoder(d_in, cfg.hidden, cfg.d_proj, derive_seed(cfg.seed, 0))
    if cfg.ablation == "without_reg":
        cidm_cfg = replace(cidm_cfg, alpha=0.0)
    state = OptimState.zeros(
        params, lr=cfg.peak_lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay
    )
    rng = make_rng(cfg.seed, 1)
    n = len(seqs)
    records = []
    for update in range(1, cfg.total_updates + 1):
        idx = rng.choice(n, size=cfg.batch_size, replace=cfg.batch_size > n)
        pair_seeds = rng.integers(0, 2**63, size=cfg.batch_size)
        pairs = []
        for i, s in zip(idx, pair_seeds):
            zp, _ = perturb_sequence(seqs[i], with_seed(pert, int(s)))
            pairs.append((seqs[i], zp.frames))
        means, grads, encoded = loss_and_param_grads(params, pairs, sdtw_cfg, cidm_cfg)
        grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        lr = lr_schedule(update, cfg)
        record = {"update": update, "lr": lr, **means, "collapse_index": collapse_index(encoded), "grad_norm": grad_norm}
        if not (math.isfinite(means["total"]) and math.isfinite(grad_norm)):
            raise NonFiniteLoss(record)
        params, state = adamw_step(params, grads, state, lr)
        records.append(record)
        if on_record is not None:
            on_record(record)
        if update % 500 == 0:
            log.info("update %d  total %.5f  collapse %.4f", update, means["total"], record["collapse_index"])
    return params, records


# --------------------------------------------------------------------------
# files


def save_checkpoint(params: EncoderParams, path) -> None:
    """``LASR`` magic, u32 version, u32 D_in/H/D_proj, then float64 LE arrays."""
    d_in, h, d_proj = params.dims
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, d_in, h, d_proj))
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_checkpoint(path) -> EncoderParams:
    data = Path(path).read_bytes()
    if len(data) < 20:
        raise ValueError("malformed checkpoint: truncated header")
    magic, version, d_in, h, d_proj = struct.unpack_from("<4sIIII", data)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"malformed checkpoint: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    shapes = {"w_feat": (d_in, h), "b_feat": (h,), "w_proj": (h, d_proj), "b_proj": (d_proj,)}
    expected = 20 + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(data) != expected:
        raise ValueError(f"malformed checkpoint: expected {expected} bytes, got {len(data)}")
    off = 20
    arrs = {}
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name]))
        arrs[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shapes[name]).astype(np.float64)
        off += 8 * size
    return EncoderParams(**arrs)


def write_metrics(records: Sequence[dict], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]

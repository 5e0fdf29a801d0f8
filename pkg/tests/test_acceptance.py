"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py).  Criteria 5-7 share one set of
training runs, which take a few minutes on a single core.
"""

import math
import time

import numpy as np
import pytest

from sdtwreg.ablation import ARMS, run_ablation
from sdtwreg.cidm import CidmConfig, cidm_general, cidm_sigma1
from sdtwreg.core import read_sequence, self_distance_matrix, write_sequence
from sdtwreg.gradcheck import check_pair_gradient, kink_frames, max_relative_error, numeric_grad
from sdtwreg.loss import laser_loss
from sdtwreg.softdtw import (
    SoftDtwConfig,
    delannoy,
    hard_dtw,
    sdtw_divergence,
    sdtw_forward,
    sdtw_oracle,
    soft_dtw,
    softmin3,
)
from sdtwreg.trainer import (
    PARAM_NAMES,
    EncoderParams,
    encode_all,
    init_encoder,
    load_checkpoint,
    loss_and_param_grads,
    save_checkpoint,
)

RESULTS = {}
SEEDS = (0, 1, 2)


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def _grad_fd(fn, a, b, exclude_a=None, exclude_b=None):
    return check_pair_gradient(fn, a, b, 1e-4, 1e-4, exclude_a, exclude_b).max_rel_error


# --- 1 ----------------------------------------------------------------------


def test_1_oracle_equivalence():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        gamma = float(rng.choice([0.05, 0.1, 1.0]))
        x, y = rng.standard_normal((m, 3)), rng.standard_normal((n, 3))
        dp = sdtw_forward(x, y, SoftDtwConfig(gamma=gamma))[0]
        ref = sdtw_oracle(x, y, gamma)
        worst = max(worst, abs(dp - ref) / max(abs(ref), 1e-300))
    dt = time.perf_counter() - t0
    assert record(1, worst <= 1e-9 and dt < 10, f"max rel err {worst:.2e}, {dt:.2f}s")


# --- 2 ----------------------------------------------------------------------


def test_2_gradient_correctness():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    errs = {}

    raw = SoftDtwConfig(gamma=0.1, use_divergence=False)
    div = SoftDtwConfig(gamma=0.1)

    def pairs(n=20):
        for _ in range(n):
            d = int(rng.integers(1, 5))
            yield rng.standard_normal((rng.integers(1, 7), d)) * 0.5, rng.standard_normal((rng.integers(1, 7), d)) * 0.5

    def sd(cfg):
        return lambda a, b: (lambda r: (r.value, r.grad_x, r.grad_xp))(soft_dtw(a, b, cfg))

    errs["a raw soft-DTW"] = max(_grad_fd(sd(raw), a, b) for a, b in pairs())
    errs["b divergence"] = max(
        _grad_fd(lambda a, b: (lambda r: (r.value, r.grad_x, r.grad_xp))(sdtw_divergence(a, b, div)), a, b)
        for a, b in pairs()
    )
    for sigma in (1, 3):
        cfg = CidmConfig(sigma=sigma, margin=1.1)
        worst, n = 0.0, 0
        while n < 20:
            x = rng.standard_normal((rng.integers(2, 10), rng.integers(1, 4))) * 0.6
            keep = ~np.repeat(kink_frames(x, cfg.margin, 1e-3)[:, None], x.shape[1], 1)
            if not keep.any():
                continue
            g = cidm_general(x, cfg).grad
            num = numeric_grad(lambda v: cidm_general(v, cfg).value, x, 1e-4)
            worst = max(worst, max_relative_error(g, num, keep)[0])
            n += 1
        errs[f"c cidm sigma={sigma}"] = worst
    cc = CidmConfig(sigma=1, margin=1.1, alpha=0.4)
    eq4 = lambda a, b: (lambda r: (r.total, r.grad_x, r.grad_xp))(laser_loss(a, b, div, cc))
    errs["d full loss"] = max(
        _grad_fd(eq4, a, b, kink_frames(a, 1.1, 1e-3), kink_frames(b, 1.1, 1e-3)) for a, b in pairs()
    )

    worst, n = 0.0, 0
    while n < 20:
        params = init_encoder(4, 5, 3, seed=int(rng.integers(1 << 30)))
        batch = [(rng.standard_normal((rng.integers(1, 6), 4)), rng.standard_normal((rng.integers(1, 6), 4)))]
        if any(np.any(np.abs(self_distance_matrix(e) - 1.1) < 1e-3) for e in encode_all(params, batch[0])):
            continue
        _, grads, _ = loss_and_param_grads(params, batch, div, cc)
        ana, num = [], []
        for name in PARAM_NAMES:
            def f(w, name=name):
                arrs = params.arrays()
                arrs[name] = w
                return loss_and_param_grads(EncoderParams(**arrs), batch, div, cc)[0]["total"]
            num.append(numeric_grad(f, getattr(params, name), 1e-4).ravel())
            ana.append(grads[name].ravel())
        worst = max(worst, max_relative_error(np.concatenate(ana), np.concatenate(num))[0])
        n += 1
    errs["e through encoder"] = worst

    dt = time.perf_counter() - t0
    ok = all(v <= (1e-3 if k.startswith("e") else 1e-4) for k, v in errs.items()) and dt < 60
    detail = ", ".join(f"({k}) {v:.1e}" for k, v in errs.items())
    assert record(2, ok, f"{detail}; {dt:.1f}s")


# --- 3 ----------------------------------------------------------------------


def test_3_limits_and_identities():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    div_worst = max(
        abs(sdtw_divergence(x, x).value)
        for x in (rng.standard_normal((rng.integers(1, 30), rng.integers(1, 6))) for _ in range(100))
    )
    bounds_ok = True
    for a, b, c, g in zip(*(rng.uniform(-100, 100, 10_000) for _ in range(3)), rng.uniform(1e-3, 10, 10_000)):
        s, m = softmin3(a, b, c, g), min(a, b, c)
        slack = 1e-12 * max(1.0, abs(m))
        bounds_ok &= (m - g * math.log(3) - slack <= s <= m + slack)
    limit_ok = True
    for _ in range(50):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        x, y = rng.standard_normal((m, 2)), rng.standard_normal((n, 2))
        gap = abs(sdtw_forward(x, y, SoftDtwConfig(gamma=1e-3))[0] - hard_dtw(x, y)[0])
        limit_ok &= gap <= 1e-3 * math.log(delannoy(m, n)) + 1e-12
    dt = time.perf_counter() - t0
    ok = div_worst <= 1e-9 and bounds_ok and limit_ok and dt < 10
    assert record(3, ok, f"max |div(X,X)| {div_worst:.1e}, softmin bounds {bounds_ok}, "
                         f"gamma limit {limit_ok}, {dt:.2f}s")


# --- 4 ----------------------------------------------------------------------


def test_4_general_vs_sigma1():
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    cases = [
        (np.array([[0.3, 0.4], [0.3, 0.4]]), 1.0),
        (np.array([[0.0], [1.0]]), 1.0),
        (np.array([[0.0], [2.0]]), 1.0),
    ]
    cases += [(rng.standard_normal((rng.integers(1, 30), rng.integers(1, 6))) * 0.5, float(rng.uniform(0.5, 2)))
              for _ in range(100)]
    worst = 0.0
    for x, lam in cases:
        cfg = CidmConfig(sigma=1, margin=lam)
        a, b = cidm_general(x, cfg), cidm_sigma1(x, cfg)
        worst = max(worst, abs(a.value - b.value) / max(1.0, abs(b.value)),
                    float(np.max(np.abs(a.grad - b.grad))) / max(1.0, float(np.max(np.abs(b.grad)))))
    hand = [cidm_sigma1(x, CidmConfig(margin=lam)).value for x, lam in cases[:3]]
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and hand == [4.0, 0.0, 0.0] and dt < 5
    assert record(4, ok, f"max rel diff {worst:.1e}, hand examples {hand}, {dt:.2f}s")


# --- 5, 6, 7 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def ablation(tmp_path_factory):
    out = tmp_path_factory.mktemp("ablation")
    t0 = time.perf_counter()
    summary = run_ablation(SEEDS, out_dir=out)
    return summary, out, time.perf_counter() - t0


@pytest.mark.slow
def test_5_collapse_ablation(ablation):
    summary, _, dt = ablation
    by = {(r["arm"], r["seed"]): r for r in summary["runs"]}
    with_ci = [by["with_reg", s]["collapse_index"] for s in SEEDS]
    without_ci = [by["without_reg", s]["collapse_index"] for s in SEEDS]
    ratio_ok = max(without_ci) <= min(with_ci) / 5
    mtwv_ok = all(by["with_reg", s]["mtwv"] > by["without_reg", s]["mtwv"] for s in SEEDS)
    mtwvs = ", ".join(f"s{s} {by['with_reg', s]['mtwv']:.3f}>{by['without_reg', s]['mtwv']:.3f}" for s in SEEDS)
    ok = ratio_ok and mtwv_ok and dt < 300
    assert record(5, ok, f"collapse with {min(with_ci):.3g}..{max(with_ci):.3g} vs without "
                         f"{min(without_ci):.2g}..{max(without_ci):.2g}; mtwv {mtwvs}; {dt:.0f}s")


@pytest.mark.slow
def test_6_determinism(ablation, tmp_path):
    _, first, _ = ablation
    run_ablation(SEEDS, out_dir=tmp_path)
    names = [f"{a}_seed{s}.{ext}" for a in ARMS for s in SEEDS for ext in ("jsonl", "lasr")]
    same = [(first / n).read_bytes() == (tmp_path / n).read_bytes() for n in names]
    assert record(6, all(same), f"{sum(same)}/{len(same)} metrics/checkpoint files byte-identical")


@pytest.mark.slow
def test_7_training_sanity(ablation):
    summary, _, _ = ablation
    runs = [r for r in summary["runs"] if r["arm"] == "with_reg"]
    ok = all(r["last_decile_loss"] < r["first_decile_loss"] for r in runs)
    detail = ", ".join(f"s{r['seed']} {r['first_decile_loss']:.3g}->{r['last_decile_loss']:.3g}" for r in runs)
    assert record(7, ok, f"first vs last 10% mean loss: {detail}")


# --- 8 ----------------------------------------------------------------------


@pytest.mark.slow
def test_8_round_trips(ablation, tmp_path):
    _, out, _ = ablation
    rng = np.random.default_rng(808)
    seq_ok = 0
    for k in range(100):
        x = rng.standard_normal((rng.integers(1, 50), rng.integers(1, 20))).astype(np.float32).astype(np.float64)
        write_sequence(x, tmp_path / f"s{k}.eseq")
        seq_ok += read_sequence(tmp_path / f"s{k}.eseq").frames.tobytes() == x.tobytes()
    ck_ok = 0
    for path in sorted(out.glob("*.lasr")):
        p = load_checkpoint(path)
        save_checkpoint(p, tmp_path / "again.lasr")
        q = load_checkpoint(tmp_path / "again.lasr")
        ck_ok += all(getattr(p, n).tobytes() == getattr(q, n).tobytes() for n in PARAM_NAMES) and \
            (tmp_path / "again.lasr").read_bytes() == path.read_bytes()
    n_ck = len(list(out.glob("*.lasr")))
    ok = seq_ok == 100 and ck_ok == n_ck == 6
    assert record(8, ok, f"{seq_ok}/100 eseq round-trips, {ck_ok}/{n_ck} checkpoints bit-identical")

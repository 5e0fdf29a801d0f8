"""Command-line entry point.

Machine-readable results go to stdout as JSON; progress and warnings go to
stderr.  Exit codes: 0 success, 1 a check failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .cidm import CidmConfig
from .core import SequenceFormatError, read_sequence, write_sequence
from .gradcheck import check_pair_gradient, kink_frames
from .loss import PRESETS, laser_loss
from .perturb import (
    PerturbConfig,
    SyntheticCorpusSpec,
    generate_corpus,
    load_manifest_sequences,
    perturb_sequence,
    write_manifest,
    with_seed,
)
from .softdtw import SoftDtwConfig, hard_dtw, sdtw_divergence, soft_dtw

log = logging.getLogger("sdtwreg")


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# shared flag groups


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="gamma/alpha/lambda/sigma preset; explicit flags override it")
    p.add_argument("--gamma", type=float, default=None, help="soft-DTW smoothing (default 0.1)")
    p.add_argument("--alpha", type=float, default=None, help="regularizer weight (default 0.4)")
    p.add_argument("--lambda", dest="margin", type=float, default=None, help="hinge margin (default 1.1)")
    p.add_argument("--sigma", type=int, default=None, help="temporal window (default 1)")
    p.add_argument("--raw-sdtw", action="store_true", help="raw soft-DTW instead of the divergence")
    p.add_argument("--cell-normalize", action="store_true", help="divide the alignment term by m*n")
    p.add_argument("--metric", choices=sorted(kernels.METRICS), default="sqeuclidean")


def _loss_configs(args) -> tuple[SoftDtwConfig, CidmConfig]:
    vals = dict(PRESETS[args.preset or "hubert"])
    for key in ("gamma", "alpha", "margin", "sigma"):
        if getattr(args, key) is not None:
            vals[key] = getattr(args, key)
    sd = SoftDtwConfig(
        gamma=vals["gamma"],
        use_divergence=not args.raw_sdtw,
        metric=args.metric,
        cell_normalize=args.cell_normalize,
    )
    return sd, CidmConfig(sigma=vals["sigma"], margin=vals["margin"], alpha=vals["alpha"])


def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    d = SyntheticCorpusSpec()
    p.add_argument("--n-items", type=int, default=d.n_items)
    p.add_argument("--t-min", type=int, default=d.len_range[0])
    p.add_argument("--t-max", type=int, default=d.len_range[1])
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--classes", type=int, default=d.n_content_classes)
    p.add_argument("--corpus-seed", type=int, default=d.seed)


def _corpus_spec(args) -> SyntheticCorpusSpec:
    return SyntheticCorpusSpec(
        n_items=args.n_items,
        len_range=(args.t_min, args.t_max),
        dim=args.dim,
        n_content_classes=args.classes,
        seed=args.corpus_seed,
    )


def _add_perturb_flags(p: argparse.ArgumentParser) -> None:
    d = PerturbConfig()
    p.add_argument("--speed-factors", type=float, nargs="+", default=list(d.speed_factors))
    p.add_argument("--strength", type=float, default=d.transform_strength, help="rotation angle (radians)")
    p.add_argument("--noise", type=float, default=d.noise_std)


def _perturb_cfg(args, seed: int = 0) -> PerturbConfig:
    return PerturbConfig(tuple(args.speed_factors), args.strength, args.noise, seed)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    from .trainer import TrainConfig

    d = TrainConfig()
    p.add_argument("--updates", type=int, default=d.total_updates)
    p.add_argument("--warmup", type=int, default=d.warmup_updates)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.peak_lr, help="peak learning rate")
    p.add_argument("--large-model-lr", action="store_true", help="use the 2e-5 large-model learning rate")
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--proj", type=int, default=d.d_proj)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)


def _train_cfg(args, seed: int, ablation: str):
    from .trainer import LARGE_MODEL_PEAK_LR, TrainConfig

    return TrainConfig(
        total_updates=args.updates,
        warmup_updates=min(args.warmup, args.updates),
        batch_size=args.batch_size,
        peak_lr=LARGE_MODEL_PEAK_LR if args.large_model_lr else args.lr,
        seed=seed,
        ablation=ablation,
        hidden=args.hidden,
        d_proj=args.proj,
        weight_decay=args.weight_decay,
    )


# --------------------------------------------------------------------------
# subcommands


def cmd_loss(args) -> int:
    a, b = read_sequence(args.a), read_sequence(args.b)
    sd, cc = _loss_configs(args)
    _emit(laser_loss(a, b, sd, cc).as_dict())
    return 0


def cmd_grad_check(args) -> int:
    a, b = read_sequence(args.a), read_sequence(args.b)
    if max(a.T, b.T) > 10:
        log.warning("grad-check is meant for T <= 10; got %d and %d", a.T, b.T)
    sd, cc = _loss_configs(args)

    def fn(x, y):
        br = laser_loss(x, y, sd, cc)
        return br.total, br.grad_x, br.grad_xp

    ex_a = ex_b = None
    if cc.alpha > 0:
        ex_a = kink_frames(a, cc.margin, args.kink_margin)
        ex_b = kink_frames(b, cc.margin, args.kink_margin)
        for name, ex in (("a", ex_a), ("b", ex_b)):
            if ex.any():
                log.warning("warning: frames %s of %s have a pair distance within %g of lambda; excluded",
                            np.flatnonzero(ex).tolist(), name, args.kink_margin)
    rep = check_pair_gradient(fn, a.frames, b.frames, args.eps, args.tol, ex_a, ex_b)
    _emit({**rep.as_dict(), "eps": args.eps, "tol": args.tol})
    if not rep.passed:
        log.error("gradient check failed: max relative error %.3g > tol %.3g at %s",
                  rep.max_rel_error, args.tol, rep.worst)
        return 1
    return 0


def cmd_dtw(args) -> int:
    a, b = read_sequence(args.a), read_sequence(args.b)
    value, path = hard_dtw(a, b)
    cfg = SoftDtwConfig(gamma=args.gamma)
    _emit({
        "dtw": value,
        "path": [list(p) for p in path],
        "soft_dtw": soft_dtw(a, b, cfg).value,
        "divergence": sdtw_divergence(a, b, cfg).value,
        "gamma": args.gamma,
    })
    return 0


def cmd_gen_corpus(args) -> int:
    entries = generate_corpus(_corpus_spec(args), args.out)
    _emit({"manifest": str(Path(args.out) / "manifest.jsonl"), "n_items": len(entries)})
    return 0


def cmd_gen_pairs(args) -> int:
    entries, seqs = load_manifest_sequences(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = _perturb_cfg(args)
    from .core import derive_seed

    pairs = []
    for k, (e, s) in enumerate(zip(entries, seqs)):
        xp, factor = perturb_sequence(s, with_seed(base, derive_seed(args.seed, k)))
        name = f"{e['id']}_p.eseq"
        write_sequence(xp, out / name)
        src = str((Path(args.manifest).parent / e["path"]).resolve())
        pairs.append({"id": e["id"], "a": src, "b": name, "factor": factor, "t": s.T, "t_p": xp.T})
    write_manifest(pairs, out / "pairs.jsonl")
    _emit({"pairs": str(out / "pairs.jsonl"), "n_pairs": len(pairs)})
    return 0


def cmd_gen_qbe(args) -> int:
    from .qbe import make_qbe_task, write_task

    task = make_qbe_task(_corpus_spec(args), args.n_docs, args.n_queries, _perturb_cfg(args), args.seed)
    path = write_task(task, args.out)
    _emit({"task": str(path), "n_queries": len(task.queries), "n_docs": len(task.docs)})
    return 0


def cmd_train(args) -> int:
    from .perturb import synth_corpus
    from .trainer import save_checkpoint, train, write_metrics

    if args.manifest:
        corpus = load_manifest_sequences(args.manifest)[1]
    else:
        corpus = synth_corpus(_corpus_spec(args))
    sd, cc = _loss_configs(args)
    cfg = _train_cfg(args, args.seed, args.ablation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, records = train(corpus, cfg, _perturb_cfg(args), sd, cc)
    save_checkpoint(params, out / "checkpoint.lasr")
    write_metrics(records, out / "metrics.jsonl")
    _emit({
        "checkpoint": str(out / "checkpoint.lasr"),
        "metrics": str(out / "metrics.jsonl"),
        "updates": len(records),
        "final": records[-1],
    })
    return 0


def cmd_eval_collapse(args) -> int:
    from .trainer import collapse_index, encode_all, init_encoder, load_checkpoint

    seqs = load_manifest_sequences(args.manifest)[1]
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
    elif args.identity:
        params = None
    else:
        params = init_encoder(seqs[0].D, args.hidden, args.proj, args.seed)
    _emit({"collapse_index": collapse_index(encode_all(params, seqs)), "n_sequences": len(seqs)})
    return 0


def cmd_qbe(args) -> int:
    from .qbe import qbe_eval, read_task
    from .trainer import load_checkpoint

    task = read_task(args.task)
    params = load_checkpoint(args.checkpoint) if args.checkpoint else None
    report = qbe_eval(params, task, args.beta)
    doc = report.to_json()
    if not args.with_scores:
        doc.pop("scores")
    _emit(doc)
    return 0


def cmd_ablation(args) -> int:
    from .ablation import run_ablation

    sd, cc = _loss_configs(args)
    summary = run_ablation(
        args.seeds,
        out_dir=args.out,
        workers=args.threads,
        ratio=args.ratio,
        corpus_spec=_corpus_spec(args),
        train_cfg=_train_cfg(args, 0, "with_reg"),
        pert=_perturb_cfg(args),
        sdtw_cfg=sd,
        cidm_cfg=cc,
    )
    _emit(summary)
    return 0 if summary["passed"] else 1


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdtwreg", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, help="cap on worker processes")
    parser.add_argument("--config", type=Path, help="JSON file of flag values (keys = flag dests)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loss", help="print the loss breakdown for two sequences")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    _add_loss_flags(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("grad-check", help="compare analytic and finite-difference gradients")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--kink-margin", type=float, default=1e-3,
                   help="exclude frames with a pair distance this close to lambda")
    _add_loss_flags(p)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("dtw", help="hard DTW path plus soft-DTW values")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--gamma", type=float, default=0.1)
    p.set_defaults(func=cmd_dtw)

    p = sub.add_parser("gen-corpus", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    _add_corpus_flags(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("gen-pairs", help="write perturbed copies of a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_perturb_flags(p)
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("gen-qbe", help="write a synthetic QbE task")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-docs", type=int, default=50)
    p.add_argument("--n-queries", type=int, default=50)
    _add_corpus_flags(p)
    _add_perturb_flags(p)
    p.set_defaults(func=cmd_gen_qbe)

    p = sub.add_parser("train", help="train the encoder; writes checkpoint + JSONL metrics")
    p.add_argument("--manifest", help="corpus manifest (default: in-memory synthetic corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablation", choices=["with_reg", "without_reg"], default="with_reg")
    _add_train_flags(p)
    _add_loss_flags(p)
    _add_corpus_flags(p)
    _add_perturb_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-collapse", help="collapse index of encoded sequences")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--identity", action="store_true", help="score raw frames")
    p.add_argument("--seed", type=int, default=0, help="init seed when no checkpoint is given")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--proj", type=int, default=8)
    p.set_defaults(func=cmd_eval_collapse)

    p = sub.add_parser("qbe", help="QbE evaluation of a task file")
    p.add_argument("--task", required=True)
    p.add_argument("--checkpoint", help="encoder checkpoint (default: raw frames)")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--with-scores", action="store_true")
    p.set_defaults(func=cmd_qbe)

    p = sub.add_parser("ablation", help="both training arms over several seeds, plus QbE")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out", help="directory for per-run metrics and checkpoints")
    p.add_argument("--ratio", type=float, default=5.0)
    _add_train_flags(p)
    _add_loss_flags(p)
    _add_corpus_flags(p)
    _add_perturb_flags(p)
    p.set_defaults(func=cmd_ablation)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        overlay = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(overlay, dict):
        raise UsageError("config file must hold a JSON object")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions} | {a.dest for a in parser._actions}
    unknown = sorted(set(overlay) - known - {"help"})
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")
    # config values act as defaults; flags given on the command line win
    subparser.set_defaults(**{k: v for k, v in overlay.items() if k in {a.dest for a in subparser._actions}})
    parser.set_defaults(**{k: v for k, v in overlay.items() if k in {a.dest for a in parser._actions}})
    return parser.parse_args(argv)


def _setup_logging(verbose: bool) -> None:
    # a handler on the package logger, so embedding apps keep their root config
    pkg = logging.getLogger("sdtwreg")
    for h in list(pkg.handlers):
        pkg.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    pkg.addHandler(handler)
    pkg.setLevel(logging.INFO if verbose else logging.WARNING)
    pkg.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"sdtwreg: error: {exc}", file=sys.stderr)
        return 2
    _setup_logging(args.verbose)
    if args.threads < 1:
        print("sdtwreg: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (SequenceFormatError, ValueError, OSError, KeyError) as exc:
        print(f"sdtwreg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

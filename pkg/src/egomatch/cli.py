"""Command-line entry point.

Subcommands cover the full pipeline: synthetic data generation,
training, evaluation, per-frame matching, baselines, the gradient
checker, and the wearable-observer (temporal-only) protocol.

Exit codes: 0 success, 1 usage error, 2 data/validation error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_range(text):
    """A:B (half-open frame range) or None."""
    if text is None:
        return None
    try:
        a, b = text.split(":")
        return range(int(a), int(b))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected A:B frame range, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="egomatch",
                description="Match first-person camera wearers to people "
                            "in third-person video.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--agents", type=int, default=3)
    sp.add_argument("--wearers", type=int, default=2)
    sp.add_argument("--frames", type=int, default=700)
    sp.add_argument("--out", required=True, help="output dataset directory")

    tp = sub.add_parser("train", help="train an embedding network")
    tp.add_argument("--data", required=True, help="dataset directory")
    tp.add_argument("--arch", choices=("spatial", "temporal", "two-stream"),
                    default="two-stream")
    tp.add_argument("--share", choices=("full", "semi", "none"), default="semi")
    tp.add_argument("--loss", choices=("contrastive", "triplet"),
                    default="triplet")
    tp.add_argument("--margin", type=float, default=1.0)
    tp.add_argument("--lr", type=float, default=1e-5)
    tp.add_argument("--momentum", type=float, default=0.9)
    tp.add_argument("--wd", type=float, default=0.0005)
    tp.add_argument("--iters", type=int, default=2000)
    tp.add_argument("--batch", type=int, default=16)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--neg-sample", choices=("all", "random"), default="all")
    tp.add_argument("--ego", action="append", default=None, metavar="CAM",
                    help="ego camera(s) to train on (default: all)")
    tp.add_argument("--observer", default=None, metavar="CAM",
                    help="use this wearable camera as the third-person view "
                         "(temporal arch only)")
    tp.add_argument("--frame-range", type=_parse_range, default=None,
                    metavar="A:B", help="train frames, half-open")
    tp.add_argument("--out", required=True, help="checkpoint path")
    tp.add_argument("--trace", default=None, help="loss trace CSV path")

    ep = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ep.add_argument("--data", required=True)
    ep.add_argument("--model", required=True)
    ep.add_argument("--ego", action="append", default=None, metavar="CAM")
    ep.add_argument("--frame-range", type=_parse_range, default=None,
                    metavar="A:B")
    ep.add_argument("--report", default=None, help="JSON report path")
    ep.add_argument("--pr", default=None, help="PR curve CSV path")
    ep.add_argument("--scores", default=None, help="per-pair scores CSV path")

    mp = sub.add_parser("match", help="predict the wearer for one frame")
    mp.add_argument("--data", required=True)
    mp.add_argument("--model", required=True)
    mp.add_argument("--frame", type=int, required=True)
    mp.add_argument("--ego", required=True, metavar="CAM")

    bp = sub.add_parser("baseline", help="run a hand-crafted-feature baseline")
    bp.add_argument("--data", required=True)
    bp.add_argument("--method", required=True,
                    choices=("flowmag", "hoof", "odom-hoof", "vel-mag",
                             "hoof-embed", "mag-embed"))
    bp.add_argument("--ego", action="append", default=None, metavar="CAM")
    bp.add_argument("--train-range", type=_parse_range, default=None,
                    metavar="A:B")
    bp.add_argument("--test-range", type=_parse_range, default=None,
                    metavar="A:B")
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--report", default=None, help="JSON report path")

    gp = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gp.add_argument("--instances", type=int, default=100,
                    help="random instances per op")
    gp.add_argument("--seed", type=int, default=0)

    op = sub.add_parser("temporal-match",
                        help="temporal-only protocol with a wearable observer")
    op.add_argument("--data", required=True)
    op.add_argument("--observer", required=True, metavar="CAM")
    op.add_argument("--model", required=True)
    op.add_argument("--frame-range", type=_parse_range, default=None,
                    metavar="A:B")
    op.add_argument("--report", default=None, help="JSON report path")
    return p


def _cmd_synth(args) -> int:
    from .synthworld import WorldConfig, generate, export
    cfg = WorldConfig(seed=args.seed, agents=args.agents,
                      wearers=args.wearers, frames=args.frames)
    cfg.validate()
    export(generate(cfg), args.out)
    print(f"wrote {cfg.frames}-frame dataset ({cfg.agents} agents, "
          f"{cfg.wearers} wearers) to {args.out}")
    return EXIT_OK


def _load_dataset(path):
    from .dataset import VideoDataset
    return VideoDataset(path)


def _train_samples(ds, args):
    from .evaluation import observer_samples
    from .trainer import samples_from_dataset
    if args.observer is not None:
        if args.arch != "temporal":
            raise ValueError("--observer requires --arch temporal")
        cams = args.ego or [c.id for c in ds.ego_cameras if c.id != args.observer]
        samples = []
        for cam in cams:
            samples += observer_samples(ds, cam, args.observer, args.frame_range)
        return samples
    cams = args.ego or [c.id for c in ds.ego_cameras]
    samples = []
    for cam in cams:
        samples += samples_from_dataset(ds, cam, args.frame_range,
                                        with_flow=args.arch != "spatial")
    return samples


def _cmd_train(args) -> int:
    from .networks import default_spec
    from .trainer import TrainConfig, train
    ds = _load_dataset(args.data)
    cfg = TrainConfig(lr=args.lr, momentum=args.momentum,
                      weight_decay=args.wd, iterations=args.iters,
                      batch_size=args.batch, margin=args.margin,
                      seed=args.seed, loss=args.loss,
                      neg_sample=args.neg_sample)
    cfg.validate()
    spec = default_spec(args.arch, args.share)
    samples = _train_samples(ds, args)
    _, trace = train(samples, spec, cfg, checkpoint_path=args.out,
                     trace_path=args.trace)
    print(f"trained {args.arch}/{args.share}/{args.loss} for "
          f"{cfg.iterations} iterations in {trace.wall_clock:.1f}s; "
          f"final loss {trace.losses[-1]:.6g}; checkpoint {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    import json
    from .evaluation import (evaluate_pairs, score_dataset, write_pr_csv,
                             write_report, write_scores_csv)
    from .networks import load_checkpoint
    ds = _load_dataset(args.data)
    net = load_checkpoint(args.model)
    cams = args.ego or [c.id for c in ds.ego_cameras]
    pairs, visible = [], set()
    for cam in cams:
        p, v = score_dataset(ds, net, cam, args.frame_range)
        pairs += p
        visible |= v
    report = evaluate_pairs(pairs, visible)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    if args.report:
        write_report(report, args.report)
    if args.pr:
        write_pr_csv(report, args.pr)
    if args.scores:
        write_scores_csv(pairs, args.scores)
    return EXIT_OK


def _cmd_match(args) -> int:
    from .evaluation import score_samples
    from .networks import load_checkpoint
    from .trainer import samples_from_dataset
    ds = _load_dataset(args.data)
    net = load_checkpoint(args.model)
    samples = samples_from_dataset(ds, args.ego, [args.frame])
    if not samples:
        raise ValueError(f"frame {args.frame} has no usable sample "
                         "(flow history requires frame >= 4)")
    pairs, _ = score_samples(samples, net)
    best = min(pairs, key=lambda p: (-p.score, p.person))
    print(best.person)
    return EXIT_OK


def _cmd_baseline(args) -> int:
    import json
    from .evaluation import baseline_eval, evaluate_pairs, write_report
    ds = _load_dataset(args.data)
    cams = args.ego or [c.id for c in ds.ego_cameras]
    n = ds.frames
    train_range = args.train_range or range(0, (5 * n) // 7)
    test_range = args.test_range or range((5 * n) // 7, n)
    reports = {}
    for cam in cams:
        rep = baseline_eval(ds, args.method, cam, train_range, test_range,
                            seed=args.seed)
        reports[cam] = rep
    out = {cam: rep.to_json() for cam, rep in reports.items()}
    print(json.dumps(out, indent=2, sort_keys=True))
    if args.report:
        with open(args.report, "w") as f:
            json.dump(out, f, indent=2, sort_keys=True)
            f.write("\n")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .verify import run_gradcheck_suite
    worst, table = run_gradcheck_suite(instances=args.instances, seed=args.seed)
    for name, err in table:
        print(f"{name:16s} max rel err {err:.3e}")
    print(f"overall max rel err {worst:.3e}")
    if worst > 1e-5:
        print("FAIL: exceeds 1e-5", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _cmd_temporal_match(args) -> int:
    import json
    from .evaluation import temporal_only_eval, write_report
    from .networks import load_checkpoint
    ds = _load_dataset(args.data)
    net = load_checkpoint(args.model)
    report = temporal_only_eval(ds, net, args.observer, args.frame_range)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    if args.report:
        write_report(report, args.report)
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "match": _cmd_match,
    "baseline": _cmd_baseline,
    "gradcheck": _cmd_gradcheck,
    "temporal-match": _cmd_temporal_match,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as e:
        print(f"egomatch {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

    specchan replica|decode|sweep|trajectory|fcheck|spectrum
             --config PATH [--seed S] [--out DIR] [--trials T] [--full-scale]

`decode` runs the Monte-Carlo decoding sweep of the config; `sweep` runs the
same sweep as the full BER-vs-SNR experiment (identical row schema). The
SPECCHAN_THREADS environment variable bounds the worker pool.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    ExperimentConfig,
    run_decode_sweep,
    run_fcheck,
    run_replica_sweep,
    run_spectrum_report,
    run_trajectory,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specchan",
                                description="Replica predictions and message-passing "
                                            "decoding for rotationally invariant channels")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("replica", "decode", "sweep", "trajectory", "fcheck", "spectrum"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--trials", type=int, default=None, help="override trial count")
        sp.add_argument("--full-scale", action="store_true",
                        help="use the config's full_scale K/trials")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    cfg = ExperimentConfig.from_file(args.config, overrides)
    if args.full_scale:
        cfg = cfg.apply_full_scale()

    if args.command == "replica":
        _, csv_path, sidecar = run_replica_sweep(cfg, args.out)
        print(f"wrote {csv_path} and {sidecar}")
        return 0
    if args.command in ("decode", "sweep"):
        _, csv_path, sidecar = run_decode_sweep(cfg, args.out)
        print(f"wrote {csv_path} and {sidecar}")
        return 0
    if args.command == "trajectory":
        summary, csv_path, sidecar = run_trajectory(cfg, args.out)
        for beta, stats in summary.items():
            print(f"beta={beta}: on {stats['src_on.final_ber_mean']:.5f} "
                  f"off {stats['no_src.final_ber_mean']:.5f} "
                  f"(joint se {stats['joint_stderr']:.5f})")
        print(f"wrote {csv_path} and {sidecar}")
        return 0
    if args.command == "fcheck":
        ok, _ = run_fcheck(cfg, args.out)
        return 0 if ok else 1
    if args.command == "spectrum":
        run_spectrum_report(cfg, args.out)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry points.

    gibbsdesign run --config cfg.toml --seeds 0..9 [--out-dir DIR]
    gibbsdesign eig-surface --config cfg.toml [--out FILE] [--seed S]
    gibbsdesign replay --config cfg.toml --dataset data.csv [--out-dir DIR]
    gibbsdesign metrics --run-dir DIR

Run output is one directory per seed (steps.csv, summary.json) plus an
aggregate.json; wall-clock timings land in timing.txt, kept out of the
deterministic files.  The replay dataset is a CSV whose first column is the
step index, last column the outcome, and middle columns the design.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .config import load_config
from .distributions import Rng
from .harness import (
    aggregate,
    format_float,
    replay_inference,
    run_sequential,
    save_aggregate,
    save_run,
    save_surface,
)


def parse_seeds(text: str) -> list[int]:
    """'3' -> [3]; '0..9' -> [0, ..., 9] inclusive; '1,4,7' -> [1, 4, 7]."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range '{text}'")
        return list(range(lo, hi + 1))
    if "," in text:
        return [int(t) for t in text.split(",")]
    return [int(text)]


def _resolve_out_dir(cfg, override):
    out = override or cfg.out_dir
    if out is None:
        raise SystemExit("no output directory: set run.out_dir or pass --out-dir")
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seeds = parse_seeds(args.seeds) if args.seeds is not None else [cfg.seed]
    out_dir = _resolve_out_dir(cfg, args.out_dir)
    records = []
    timings = []
    for seed in seeds:
        t0 = time.perf_counter()
        rec = run_sequential(cfg, seed)
        timings.append((seed, time.perf_counter() - t0))
        save_run(rec, os.path.join(out_dir, f"seed_{seed}"))
        records.append(rec)
        rep = rec.report
        print(
            f"seed {seed}: rmse {rep.rmse:.4f}  mmd {rep.mmd:.4f}  nll {rep.nll:.4f}"
        )
    agg = aggregate(records)
    save_aggregate(agg, out_dir)
    with open(os.path.join(out_dir, "timing.txt"), "w") as fh:
        for seed, dt in timings:
            fh.write(f"seed_{seed} {dt:.3f}s\n")
    m = agg["metrics"]
    print(
        f"{len(records)} run(s): rmse {m['rmse']['mean']:.4f} (se {m['rmse']['se']:.4f})  "
        f"mmd {m['mmd']['mean']:.4f} (se {m['mmd']['se']:.4f})  "
        f"nll {m['nll']['mean']:.4f} (se {m['nll']['se']:.4f})"
    )
    return 0


def cmd_eig_surface(args) -> int:
    cfg = load_config(args.config)
    from .harness import export_surface

    seed = args.seed if args.seed is not None else cfg.seed
    designs, ests = export_surface(cfg, Rng(seed))
    out = args.out
    if out is None:
        out_dir = _resolve_out_dir(cfg, None)
        os.makedirs(out_dir, exist_ok=True)
        out = os.path.join(out_dir, "eig_surface.csv")
    save_surface(designs, ests, out)
    best = int(np.argmax([e.value for e in ests]))
    print(
        f"wrote {designs.shape[0]} designs to {out}; "
        f"max eig {format_float(ests[best].value)} at design "
        f"({', '.join(format_float(v) for v in designs[best])})"
    )
    return 0


def _load_dataset(path: str):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise SystemExit(f"dataset {path} has no data rows")
    header = rows[0]
    if len(header) < 3:
        raise SystemExit("dataset needs step, design, outcome columns")
    # saved steps.csv files carry diagnostic columns after the outcome, so
    # pick columns by name when the header allows it
    design_cols = [i for i, name in enumerate(header) if name.startswith("design_")]
    if design_cols and "outcome" in header:
        y_col = header.index("outcome")
    else:
        design_cols, y_col = list(range(1, len(header) - 1)), len(header) - 1
    designs, ys = [], []
    for row in rows[1:]:
        designs.append([float(row[i]) for i in design_cols])
        ys.append(float(row[y_col]))
    return np.array(designs), np.array(ys)


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    designs, ys = _load_dataset(args.dataset)
    rec = replay_inference(cfg, designs, ys, args.seed if args.seed is not None else cfg.seed)
    out_dir = args.out_dir or cfg.out_dir
    if out_dir is not None:
        save_run(rec, os.path.join(out_dir, f"replay_seed_{rec.seed}"))
    rep = rec.report
    final = rec.steps[-1]
    print(
        f"replayed {len(rec.steps)} observations: "
        f"posterior mean ({', '.join(format_float(v) for v in final.post_mean)})"
    )
    print(f"rmse {rep.rmse:.4f}  mmd {rep.mmd:.4f}  nll {rep.nll:.4f}")
    return 0


def cmd_metrics(args) -> int:
    run_dir = args.run_dir
    summaries = []
    for name in sorted(os.listdir(run_dir)):
        path = os.path.join(run_dir, name, "summary.json")
        if os.path.isfile(path):
            with open(path) as fh:
                summaries.append(json.load(fh))
    if not summaries:
        raise SystemExit(f"no summary.json files under {run_dir}")
    print(f"{'seed':>6}  {'rmse':>10}  {'mmd':>10}  {'nll':>10}")
    for s in summaries:
        m = s["metrics"]
        print(f"{s['seed']:>6}  {m['rmse']:>10.4f}  {m['mmd']:>10.4f}  {m['nll']:>10.4f}")
    for key in ("rmse", "mmd", "nll"):
        vals = np.array([s["metrics"][key] for s in summaries])
        se = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        print(f"{key}: mean {vals.mean():.4f}  se {se:.4f}  (n={len(vals)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gibbsdesign",
        description="Sequential experimental design with Gibbs posteriors",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run sequential experiments over seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--seeds", help="N, N..M (inclusive), or comma list")
    run.add_argument("--out-dir")
    run.set_defaults(fn=cmd_run)

    surf = sub.add_parser("eig-surface", help="evaluate the EIG on a design grid")
    surf.add_argument("--config", required=True)
    surf.add_argument("--out")
    surf.add_argument("--seed", type=int)
    surf.set_defaults(fn=cmd_eig_surface)

    rep = sub.add_parser("replay", help="refit on a fixed design/outcome dataset")
    rep.add_argument("--config", required=True)
    rep.add_argument("--dataset", required=True)
    rep.add_argument("--out-dir")
    rep.add_argument("--seed", type=int)
    rep.set_defaults(fn=cmd_replay)

    met = sub.add_parser("metrics", help="summarise saved runs")
    met.add_argument("--run-dir", required=True)
    met.set_defaults(fn=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

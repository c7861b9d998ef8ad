"""Toy-scale sweep of the fixed weight alpha (or beta in dB for SNR weighting).

    python scripts/alpha_sweep.py --out runs/sweep --alphas 0.05,0.35,0.65,0.95
    python scripts/alpha_sweep.py --out runs/beta --betas 0,10,20,30

Writes ``sweep.csv`` (coefficient, value, metric, score, optimal) under ``--out``.
"""
import argparse
from pathlib import Path

from rtse.cli import cmd_sweep
from rtse.experiments import ToySetup


def floats(text):
    return [float(v) for v in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/sweep")
    group = ap.add_mutually_exclusive_group()
    group.add_argument("--alphas", type=floats, default=[0.05, 0.35, 0.65, 0.95])
    group.add_argument("--betas", type=floats)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--hidden", type=int, default=32)
    args = ap.parse_args()
    setup = ToySetup()
    cfg = setup.run_config(Path(args.out), hidden=args.hidden, steps=args.steps, seq_len_seconds=2.0,
                           batch_seconds=8.0)
    coef, values = ("beta_db", args.betas) if args.betas else ("alpha", args.alphas)
    rows = cmd_sweep(cfg, coef, values, setup.eval_triplets(), args.out, setup.train_dataset())
    print(f"{'metric':<20}" + "".join(f"{v:>10g}" for v in values))
    for metric in dict.fromkeys(r["metric"] for r in rows):
        sel = [r for r in rows if r["metric"] == metric]
        print(f"{metric:<20}" + "".join(f"{r['score']:>9.4f}{'*' if r['optimal'] else ' '}" for r in sel))


if __name__ == "__main__":
    main()

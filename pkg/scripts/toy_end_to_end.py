"""Train the hidden=64 toy model and print the evaluation table.

    python scripts/toy_end_to_end.py --out runs/toy [--steps 1200]
"""
import argparse
from pathlib import Path

from rtse.experiments import ToySetup, toy_end_to_end


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--steps", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    overrides = {} if args.steps is None else {"steps": args.steps}
    setup = ToySetup(seed=args.seed)
    report, seconds = toy_end_to_end(setup, Path(args.out), **overrides)
    print(f"training took {seconds:.0f} s")
    print(report.summary_text(), end="")
    print(f"model SI-SDR improvement: {report.mean('model', 'delta_si_sdr'):+.2f} dB")


if __name__ == "__main__":
    main()

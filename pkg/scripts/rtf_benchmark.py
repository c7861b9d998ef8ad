"""Streaming real-time factor across hidden sizes and chunk sizes (single thread)."""
import argparse

from threadpoolctl import threadpool_limits

from rtse.experiments import realtime_factor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, default=10.0)
    ap.add_argument("--hidden", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--chunks", type=int, nargs="+", default=[128, 1024, 16000])
    args = ap.parse_args()
    with threadpool_limits(1):
        print(f"{'hidden':>7}{'chunk':>8}{'rtf':>8}")
        for h in args.hidden:
            for c in args.chunks:
                print(f"{h:>7}{c:>8}{realtime_factor(h, args.seconds, c):>8.3f}")


if __name__ == "__main__":
    main()

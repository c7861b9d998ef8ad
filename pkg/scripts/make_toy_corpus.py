"""Write the synthetic toy corpus as WAV files plus a manifest usable by ``rtse mix``/``rtse train``."""
import argparse

from rtse.toy import write_toy_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--speech", type=int, default=8)
    ap.add_argument("--noise", type=int, default=4)
    ap.add_argument("--seconds", type=float, default=8.0)
    args = ap.parse_args()
    print(write_toy_corpus(args.out_dir, args.seed, args.speech, args.noise, args.seconds))


if __name__ == "__main__":
    main()

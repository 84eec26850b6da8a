"""Freeze a block-0 model and score it on later blocks, with and without a planted shift."""
import argparse

from flowcast.experiments import drift_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--blocks", type=int, default=8)
    ap.add_argument("--block-size", type=int, default=5000)
    ap.add_argument("--shift-block", type=int, default=2)
    ap.add_argument("--ramp", type=int, default=4, help="blocks over which the shift ramps in")
    ap.add_argument("--magnitude", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    kw = dict(n_blocks=args.blocks, block_size=args.block_size, seed=args.seed)
    drift = drift_experiment(shift_block=args.shift_block, magnitude=args.magnitude,
                             ramp_blocks=args.ramp, **kw)
    still = drift_experiment(shift_block=None, **kw)
    print("block  drifted  stationary")
    for (b, a), (_, s) in zip(drift.probes, still.probes):
        print(f"{b:5d}  {a:7.4f}  {s:10.4f}")


if __name__ == "__main__":
    main()

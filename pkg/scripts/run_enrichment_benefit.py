"""Best ALL vs best FIVE_TUPLE accuracy on a locality-dependent rule."""
import argparse
import logging

from flowcast.experiments import enrichment_benefit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--blocks", type=int, default=3)
    ap.add_argument("--block-size", type=int, default=10_000)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    res = enrichment_benefit(tuple(args.seeds), args.blocks, args.block_size, epochs=args.epochs)
    for layout, accs in res.best.items():
        print(f"{layout:<11} " + " ".join(f"{a:.4f}" for a in accs) + f"  mean {res.mean(layout):.4f}")
    print(f"gap {res.gap:+.4f}")


if __name__ == "__main__":
    main()

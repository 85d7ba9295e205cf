"""Classify a sweep of planted triples and tabulate the outcome per case."""

import argparse
from collections import Counter

from goldie.corpus import planted_triples
from goldie.gge import classify_tetrachotomy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--per-case", type=int, default=10)
    args = ap.parse_args()

    confusion = Counter()
    worst = {"derivative": 0.0, "validation": 0.0}
    for seed in range(args.seeds):
        for pt in planted_triples(seed=seed, n_per_case=args.per_case):
            c = classify_tetrachotomy(pt.triple, pt.u, strict=False)
            confusion[pt.case, c.case] += 1
            worst["derivative"] = max(worst["derivative"], abs(c.rho_u - pt.rho_u),
                                      abs(c.gamma_u - pt.gamma_u))
            worst["validation"] = max(worst["validation"], c.validation_residual)
    cases = ("i", "ii", "iii", "iv")
    print("planted \\ found " + " ".join(f"{c:>5}" for c in cases))
    for a in cases:
        print(f"{a:>15} " + " ".join(f"{confusion[a, b]:5d}" for b in cases))
    print(f"max derivative error {worst['derivative']:.2e}, "
          f"max closed-form residual {worst['validation']:.2e}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Print the exact cycle-partition law for a model and size, optionally beside the Ewens formula."""
import argparse
import math
from collections import Counter

from stickperm.factor_models import Beta, parse_model
from stickperm.partition_samplers import exact_partition_law


def ewens(theta, key):
    n = sum(key)
    c = Counter(key)
    rising = math.prod(theta + i for i in range(n))
    return math.factorial(n) * theta ** len(key) / rising / math.prod(r ** k * math.factorial(k) for r, k in c.items())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="beta:2,1")
    ap.add_argument("--n", type=int, default=6)
    args = ap.parse_args()
    model = parse_model(args.model)
    law = exact_partition_law(model, args.n).as_floats()
    is_ewens = isinstance(model, Beta) and model.b == 1
    for key in sorted(law, reverse=True):
        line = f"{'+'.join(map(str, key)):>20}  {law[key]:.12f}"
        if is_ewens:
            line += f"  ewens {ewens(model.a, key):.12f}"
        print(line)
    print(f"{len(law)} partitions, total {sum(law.values()):.15f}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""End-to-end block pipeline: search for box parameters meeting a crossing
probability target, run the oriented-route construction over several route
lengths, and fit linear growth of the median completion time.

Example:
    python3 scripts/block_pipeline.py --lam 4.0 --epsilon 0.2 \
        --ns 2 4 6 --samples 60 --out /tmp/block_pipeline.json
"""

import argparse
import json

from cpsim.environment import DistributionSpec, ModelParams
from cpsim.renorm import (find_block_params, linear_growth_fit,
                          renorm_samples, successful_times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lam", type=float, default=4.0)
    ap.add_argument("--mu", choices=("point-mass", "uniform", "bernoulli"),
                    default="point-mass")
    ap.add_argument("--epsilon", type=float, default=0.2)
    ap.add_argument("--search-budget", type=int, default=4000)
    ap.add_argument("--ns", type=int, nargs="+", default=[2, 4, 6])
    ap.add_argument("--samples", type=int, default=60)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    if args.mu == "point-mass":
        mu = DistributionSpec(kind="point-mass", c=1.0)
    elif args.mu == "uniform":
        mu = DistributionSpec(kind="uniform", a=0.5, b=1.5)
    else:
        mu = DistributionSpec(kind="bernoulli", p=0.75, scale=1.0)
    params = ModelParams(lam=args.lam, horizon=1.0)

    search = find_block_params(args.epsilon, mu, params, args.search_budget,
                               master_seed=args.seed, workers=args.workers)
    print("search ok:", search.ok, " replicas used:", search.replicas_used)
    for kind in ("S", "L"):
        box = getattr(search, kind)
        if box is not None:
            print(f"  {kind}: {box.a}x{box.b} r={box.r} tau={box.tau}")
    if not search.ok:
        print("no admissible pair inside the budget; stopping")
        return

    boxes = {"S": search.S, "L": search.L}
    results = renorm_samples(args.ns, args.epsilon, boxes, mu, params,
                             args.samples, master_seed=args.seed + 1,
                             workers=args.workers)
    for n in args.ns:
        times = successful_times(results[n])
        rate = len(times) / len(results[n])
        print(f"n={n}: {len(times)}/{len(results[n])} complete "
              f"({rate:.0%})", end="")
        if times:
            med = sorted(times)[len(times) // 2]
            print(f", median T ~ {med:.1f}")
        else:
            print()

    fit = linear_growth_fit(results)
    print(f"fit: W = {fit.w_hat:.3f}, R^2 = {fit.r_squared:.4f}")
    for s in fit.scales:
        print(f"  n={s.n}: median {s.median:.1f}  ratio {s.ratio:.3f}  "
              f"band-inside {s.inside_fraction:.2f}")

    if args.out:
        payload = {
            "search": {"ok": search.ok,
                       "S": search.S.to_dict() if search.S else None,
                       "L": search.L.to_dict() if search.L else None,
                       "replicas_used": search.replicas_used},
            "fit": {"w_hat": fit.w_hat, "r_squared": fit.r_squared,
                    "scales": [{"n": s.n, "count": s.count,
                                "median": s.median, "ratio": s.ratio,
                                "inside_fraction": s.inside_fraction}
                               for s in fit.scales]},
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        print("wrote", args.out)


if __name__ == "__main__":
    main()

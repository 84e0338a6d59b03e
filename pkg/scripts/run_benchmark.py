"""Run the distillation ablation on the synthetic benchmark and write JSON + a table.

    python scripts/run_benchmark.py --out results/benchmark.json
    python scripts/run_benchmark.py --gamma-sweep 0.05 0.3 0.8 --seeds 0
"""

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

from s2pd import experiments as ex


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", type=Path, default=Path("results/benchmark.json"))
    ap.add_argument("--gamma-sweep", type=float, nargs="+", help="diagnostic: one teacher, several gammas")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    logging.getLogger("s2pd.distill").setLevel(logging.WARNING)
    cfg = replace(ex.BenchmarkConfig(), seeds=tuple(args.seeds))
    args.out.parent.mkdir(parents=True, exist_ok=True)

    if args.gamma_sweep:
        rows = {s: ex.gamma_sweep(s, args.gamma_sweep, cfg) for s in args.seeds}
        for s, r in rows.items():
            print(s, "  ".join(f"{k} {v:.3f}" for k, v in r.items()))
        args.out.write_text(json.dumps(rows, indent=2, sort_keys=True))
        return

    summary = ex.run_benchmark(cfg)
    print(summary.table())
    args.out.write_text(summary.to_json())


if __name__ == "__main__":
    main()

"""Latency and size of the paper-sized teacher and student checkpoints (batch 1).

    python scripts/run_deploy_bench.py --out results/deploy.json
"""

import argparse
import json
import tempfile
from pathlib import Path

from s2pd import bench
from s2pd import checkpoint as ckpt
from s2pd import student as sm
from s2pd import teacher as tc


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--out", type=Path, default=Path("results/deploy.json"))
    args = ap.parse_args()
    reports = {}
    with tempfile.TemporaryDirectory() as tmp:
        for name, model in (("teacher", tc.TeacherModel(tc.TeacherConfig())),
                            ("student", sm.StudentModel(sm.StudentConfig()))):
            path = Path(tmp) / f"{name}.ckpt"
            ckpt.save(model, path)
            reports[name] = bench.bench_latency(path, iters=args.iters).to_dict()
            print(name, reports[name])
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(reports, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()

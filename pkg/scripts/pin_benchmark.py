"""Run the kicked Burgers benchmark and write its entropy-production fixture.

Usage: python scripts/pin_benchmark.py [output.json]
"""
import json
import platform
import sys
import time
from pathlib import Path

import numba
import numpy as np

from gclab.chain import estimate_ep, simulate
from gclab.cli import initial_state, transition_model
from gclab.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main(out=None):
    cfg = load_config(ROOT / "configs" / "burgers.conf")
    tm = transition_model(cfg)
    t0 = time.perf_counter()
    traj = simulate(tm, initial_state(cfg, tm), cfg.run.k, cfg.run.seed, cfg.run.thin)
    est = estimate_ep(traj, cfg.run.burn_in, cfg.run.block)
    elapsed = time.perf_counter() - t0
    record = {
        "config": "configs/burgers.conf",
        "resolved": cfg.model_dump(mode="json"),
        "k": cfg.run.k,
        "seed": cfg.run.seed,
        **est.to_dict(),
        "final_norm_L2": float(traj.norms_l2[-1]),
        "flux_sum": float(np.sum(traj.flux_increments)),
        "runtime_s": round(elapsed, 1),
        "generated": time.strftime("%Y-%m-%d"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "machine": platform.machine(),
    }
    path = Path(out) if out else ROOT / "tests" / "fixtures" / "benchmark_ep.json"
    path.write_text(json.dumps(record, indent=2) + "\n")
    print(json.dumps({k: record[k] for k in ("ep_mean", "ep_stderr", "ci95", "runtime_s")}))


if __name__ == "__main__":
    main(*sys.argv[1:])

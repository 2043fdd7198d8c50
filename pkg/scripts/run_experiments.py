"""Run the four presets back to back and print a short digest of each summary.

    python3 scripts/run_experiments.py --out results --jobs 4
    python3 scripts/run_experiments.py --only exp2 exp3 --runs 3 --horizon 5000
"""

import argparse
import math
import time
from pathlib import Path

from coopftrl.experiments import loglog_slope, preset, read_summary, run_experiment, with_overrides


def digest(name, rows):
    if name == "exp2":
        rs = [int(r["r"]) for r in rows]
        R = [float(r["mean_final_regret"]) for r in rows]
        return f"slope of ln R_T vs ln r: {loglog_slope(rs, R):.3f}"
    if name == "exp3":
        out = []
        for alg in ("cftrl", "dftrl"):
            vals = [(int(r["d"]), float(r["mean_final_regret"]) / math.sqrt(int(r["d"])))
                    for r in rows if r["algorithm"] == alg]
            out.append(f"{alg} R_T/sqrt(d): " + " ".join(f"{d}:{v:.1f}" for d, v in vals))
        return "\n".join(out)
    lines = []
    for r in rows:
        key = f"K={r['K']} N={r['N']}"
        lines.append(f"{key:>12} {r['algorithm']:>12} {float(r['mean_final_regret']):10.2f}"
                     f" +- {float(r['std_final_regret']):.2f}")
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", nargs="*", default=["exp1", "exp2", "exp3", "exp4"])
    ap.add_argument("--out", default="results")
    ap.add_argument("--runs", type=int)
    ap.add_argument("--horizon", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    for name in args.only:
        cfg = with_overrides(preset(name), out_dir=args.out, runs=args.runs, T=args.horizon,
                             seed=args.seed)
        start = time.perf_counter()
        run_experiment(cfg, jobs=args.jobs)
        rows = read_summary(Path(cfg.out_dir) / name / "summary.csv")
        print(f"== {name} ({time.perf_counter() - start:.0f}s)")
        print(digest(name, rows))


if __name__ == "__main__":
    main()

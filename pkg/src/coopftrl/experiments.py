"""Experiment configs, the four presets, multi-run orchestration and CSV output."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .graphs import (
    GraphError,
    build_erdos_renyi,
    build_regular,
    build_star,
    independence_number,
    select_centers,
)
from .policies import ALGORITHMS, PolicyOptions
from .simulator import ConfigError, RunConfig, TableEnvironment, run

OUT_ENV = "COOPFTRL_OUT"
GRAPH_TYPES = ("regular", "star", "erdos_renyi")
SWEEPS = ("K", "N", "r", "d")
PLOT_MODES = ("raw", "d_normalized", "loglog")


def default_out_dir():
    return os.environ.get(OUT_ENV, "results")


def _as_list(x):
    if x is None:
        return None
    return [int(v) for v in (x if isinstance(x, (list, tuple)) else [x])]


@dataclass
class GraphSpec:
    type: str
    N: list[int]
    r: list[int] | None = None
    seed: int = 0

    def __post_init__(self):
        self.N = _as_list(self.N)
        self.r = _as_list(self.r)


@dataclass
class ExperimentConfig:
    name: str
    K: list[int]
    graph: GraphSpec
    d: list[int]
    T: int
    algorithms: list[str]
    runs: int = 10
    seed: int = 0
    out_dir: str = field(default_factory=default_out_dir)
    regret_mode: str = "pseudo"
    sweep: str = "K"
    cftrl_rate: str = "neighborhood"
    stability_clamp: bool = False
    points: int = 200
    loss_file: str | None = None

    def __post_init__(self):
        if isinstance(self.graph, dict):
            self.graph = GraphSpec(**self.graph)
        self.K = _as_list(self.K)
        self.d = _as_list(self.d)
        self.algorithms = list(self.algorithms)

    def validate(self):
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}")
        if not self.K or min(self.K) < 2:
            raise ConfigError("every K must be >= 2")
        if not self.d or min(self.d) < 1:
            raise ConfigError("every delay must be >= 1")
        if self.T < 1:
            raise ConfigError("horizon T must be >= 1")
        if self.runs < 1:
            raise ConfigError("need at least one run")
        if self.points < 1:
            raise ConfigError("points must be >= 1")
        if self.regret_mode not in ("pseudo", "empirical"):
            raise ConfigError(f"unknown regret mode {self.regret_mode!r}")
        if self.loss_file and self.regret_mode != "empirical":
            raise ConfigError("a loss file needs regret_mode 'empirical'")
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {SWEEPS}")
        if self.cftrl_rate not in ("neighborhood", "mass"):
            raise ConfigError(f"unknown cftrl_rate {self.cftrl_rate!r}")
        g = self.graph
        if g.type not in GRAPH_TYPES:
            raise ConfigError(f"graph type must be one of {GRAPH_TYPES}")
        if not g.N:
            raise ConfigError("graph needs N")
        if g.type == "regular":
            if not g.r:
                raise ConfigError("regular graph needs r")
            for n, r in itertools.product(g.N, g.r):
                if not 2 <= r < n or (n * r) % 2:
                    raise ConfigError(f"no {r}-regular graph on {n} nodes")
        elif min(g.N) < 2:
            raise ConfigError(f"{g.type} graph needs N >= 2")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def options(self):
        return PolicyOptions(self.cftrl_rate, self.stability_clamp)


def load_config(path, base=None):
    """Read a JSON config; with ``base`` its fields override the base config."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if base is not None:
        merged = base.to_dict()
        if "graph" in data:
            merged["graph"] = {**merged["graph"], **data.pop("graph")}
        merged.update(data)
        data = merged
    return ExperimentConfig.from_dict(data)


# --- presets -------------------------------------------------------------------------


def preset(name):
    if name == "exp1":
        return ExperimentConfig(
            "exp1", [20, 30, 40], GraphSpec("regular", [3], [2]), [1], 50_000,
            ["cftrl", "dftrl", "exp3coop", "center_exp3"], sweep="K",
        )
    if name == "exp2":
        return ExperimentConfig(
            "exp2", [10], GraphSpec("regular", [6], [2, 3, 4, 5]), [1], 20_000, ["cftrl"],
            sweep="r",
        )
    if name == "exp3":
        return ExperimentConfig(
            "exp3", [3], GraphSpec("star", [20]), [1, 2, 4, 8, 16], 20_000, ["cftrl", "dftrl"],
            sweep="d",
        )
    if name == "exp4":
        return ExperimentConfig(
            "exp4", [10, 50], GraphSpec("erdos_renyi", [10, 20, 40, 80]), [1], 1000,
            ["cftrl", "center_exp3"], sweep="N",
        )
    raise ConfigError(f"unknown preset {name!r}; choose exp1, exp2, exp3 or exp4")


# --- instances -------------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    K: int
    N: int
    r: int | None
    d: int

    @property
    def label(self):
        r = f"_r{self.r}" if self.r is not None else ""
        return f"K{self.K}_N{self.N}{r}_d{self.d}"


def instances(cfg):
    rs = cfg.graph.r if cfg.graph.type == "regular" else [None]
    return [Instance(K, N, r, d) for K, N, r, d in itertools.product(cfg.K, cfg.graph.N, rs, cfg.d)]


def build_graph(spec, inst):
    try:
        if spec.type == "regular":
            return build_regular(inst.N, inst.r, spec.seed, inst.d)
        if spec.type == "star":
            return build_star(inst.N, inst.d)
        return build_erdos_renyi(inst.N, spec.seed, inst.d)
    except GraphError as exc:
        raise ConfigError(str(exc)) from None


def record_rounds(T, points):
    step = max(1, math.ceil(T / points))
    ts = list(range(step, T + 1, step))
    if not ts or ts[-1] != T:
        ts.append(T)
    return ts


def _one_run(task):
    cfg, inst, algorithm, run_index = task
    graph = build_graph(cfg.graph, inst)
    table = TableEnvironment.from_csv(cfg.loss_file).table if cfg.loss_file else None
    rc = RunConfig(
        graph, inst.K, cfg.T, algorithm, seed=cfg.seed + run_index,
        regret_mode=cfg.regret_mode, options=cfg.options(), loss_table=table,
    )
    result = run(rc)
    ts = record_rounds(cfg.T, cfg.points)
    idx = np.array(ts) - 1
    return [
        (run_index, t, v, algorithm, float(result.regret[v, i]))
        for i, t in zip(idx, ts)
        for v in range(graph.n_agents)
    ]


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


TIMESERIES_HEADER = ["run", "t", "agent", "algorithm", "cum_regret"]
SUMMARY_HEADER = [
    "algorithm", "K", "N", "graph", "r", "d", "T", "mean_final_regret", "std_final_regret", "runs",
]


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    Path(path).write_text(buf.getvalue())


def final_regrets(rows, T):
    """Per-run final average regret from time-series rows, keyed by
    ``(algorithm, run)``; agents are averaged with an exactly rounded sum."""
    acc = {}
    for run_index, t, agent, algorithm, value in rows:
        if int(t) == T:
            acc.setdefault((algorithm, int(run_index)), []).append(float(value))
    return {k: math.fsum(v) / len(v) for k, v in acc.items()}


def summarize(values):
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in values) / (n - 1)) if n > 1 else 0.0
    return mean, std


def run_experiment(cfg, jobs=1):
    """Run every (instance, algorithm, run) and write CSVs plus metadata.

    Returns the summary rows. Output goes to ``<out_dir>/<name>/``.
    """
    cfg.validate()
    out = Path(cfg.out_dir) / cfg.name
    (out / "runs").mkdir(parents=True, exist_ok=True)
    insts = instances(cfg)
    tasks = [
        (cfg, inst, alg, k) for inst in insts for alg in cfg.algorithms for k in range(cfg.runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        results = [_one_run(t) for t in tasks]

    summary = []
    meta_instances = []
    pos = 0
    for inst in insts:
        rows = []
        for _ in range(len(cfg.algorithms) * cfg.runs):
            rows.extend(results[pos])
            pos += 1
        write_csv(out / "runs" / f"{inst.label}.csv", TIMESERIES_HEADER, rows)
        finals = final_regrets(rows, cfg.T)
        for alg in cfg.algorithms:
            mean, std = summarize([finals[(alg, k)] for k in range(cfg.runs)])
            summary.append([
                alg, inst.K, inst.N, cfg.graph.type, "" if inst.r is None else inst.r, inst.d,
                cfg.T, mean, std, cfg.runs,
            ])
        graph = build_graph(cfg.graph, inst)
        alpha, exact = independence_number(graph, return_exact=True)
        meta_instances.append({
            "label": inst.label,
            "edges": graph.edges(),
            "graph_meta": graph.meta,
            "alpha": alpha,
            "alpha_exact": exact,
            "centers": select_centers(graph, inst.K).to_dict(),
        })

    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    echo = cfg.to_dict()
    # the output location is not part of the experiment
    echo.pop("out_dir")
    meta = {
        "config": echo,
        "code_version": __version__,
        "run_seeds": [cfg.seed + k for k in range(cfg.runs)],
        "instances": meta_instances,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for mode in PLOT_MODES:
        if mode == "d_normalized" and cfg.sweep != "d":
            continue
        write_csv(out / f"plot_{mode}.csv", *emit_plot_data(summary, mode, cfg.sweep))
    return summary


def read_summary(path):
    with open(path, newline="") as fh:
        return [row for row in csv.DictReader(fh)]


def emit_plot_data(summary, mode, sweep="d"):
    """Turn summary rows into ``(header, rows)`` for plotting.

    ``raw``: final regret against the sweep variable. ``d_normalized``: regret
    divided by sqrt(d) against d. ``loglog``: natural logs of both.
    Rows are grouped by a ``series`` label holding the non-swept parameters.
    """
    if mode not in PLOT_MODES:
        raise ValueError(f"unknown plot mode {mode!r}")
    if mode == "d_normalized":
        sweep = "d"
    ycol = {"raw": "R_T", "d_normalized": "R_T_over_sqrt_d", "loglog": "ln_R_T"}[mode]
    xcol = f"ln_{sweep}" if mode == "loglog" else sweep
    header = ["algorithm", "series", xcol, ycol]
    rows = []
    for row in summary:
        rec = dict(zip(SUMMARY_HEADER, row)) if not isinstance(row, dict) else row
        x = float(rec[sweep])
        y = float(rec["mean_final_regret"])
        series = ",".join(f"{k}={rec[k]}" for k in ("K", "N", "r", "d") if k != sweep and rec[k] != "")
        if mode == "d_normalized":
            y = y / math.sqrt(x)
        elif mode == "loglog":
            x, y = math.log(x), math.log(y)
        rows.append([rec["algorithm"], series, x if mode == "loglog" else int(x), y])
    return header, rows


def loglog_slope(xs, ys):
    """Least-squares slope of ``ln y`` against ``ln x``."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})

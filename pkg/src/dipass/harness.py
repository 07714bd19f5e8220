"""Scenario generation and Monte-Carlo experiments written as CSV tables."""

from __future__ import annotations

import datetime as _dt
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from dipass.channel import composite_gain_sq, pa_to_user
from dipass.core import ConfigError, Orientation, SystemConfig, Vec3, waveguide_entrances
from dipass.pipeline import run_pipeline
from dipass.single_pa import optimal_orientation, solve_placement

KINDS = ("single-pa-sweep", "placement-heatmap", "sumrate-vs-N", "served-users", "gain-profile")

COLUMNS: dict[str, tuple[str, ...]] = {
    "single-pa-sweep": ("row_type", "x_user", "y_user", "y_pa", "gain_sq", "gain_db"),
    "placement-heatmap": (
        "row_type", "wg_atten_db", "los_coeff", "height", "x_user", "y_user",
        "y_star", "gamma_star", "gain_sq", "boundary_hit", "condition",
    ),
    "sumrate-vs-N": ("row_type", "N", "L", "M", "method", "trial", "seed", "sum_rate", "served"),
    "served-users": ("row_type", "N", "L", "M", "method", "trial", "seed", "sum_rate", "served"),
    "gain-profile": ("row_type", "a", "b", "theta", "y_floor", "gain_sq", "gain_db"),
}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "single-pa-sweep": {"y_user": [2.0, 5.0, 8.0], "x_user": [5.0], "samples": [201]},
    "placement-heatmap": {
        "x_user": [float(v) for v in np.linspace(0.0, 10.0, 11)],
        "y_user": [float(v) for v in np.linspace(0.0, 10.0, 11)],
    },
    "sumrate-vs-N": {"N": [1, 2, 4, 8], "L": [1], "M": [5]},
    "served-users": {"N": [1, 2, 4, 8, 10, 12], "L": [1], "M": [10]},
    "gain-profile": {"cross_section": ["10x6"], "theta": [3 * math.pi / 4, 7 * math.pi / 8, math.pi], "samples": [201]},
}

OPTIONAL_GRIDS: dict[str, tuple[str, ...]] = {
    "placement-heatmap": ("wg_atten_db", "los_coeff", "height"),
}


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    users: tuple[Vec3, ...]
    seed: Any


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def generate_scenario(cfg: SystemConfig, seed) -> Scenario:
    """Place ``cfg.num_users`` users uniformly on the floor."""
    rng = _generator(seed)
    dx, dy, _ = cfg.region
    xy = rng.uniform(0.0, 1.0, size=(cfg.num_users, 2)) * np.array([dx, dy])
    users = tuple(Vec3(float(x), float(y), 0.0) for x, y in xy)
    return Scenario(cfg, users, seed)


def trial_seeds(seed: int, trials: int) -> list[np.random.SeedSequence]:
    """Independent child seeds, one per trial, identical for serial and parallel runs."""
    return np.random.SeedSequence(int(seed)).spawn(trials)


# ---------------------------------------------------------------------------
# specs and tables
# ---------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    kind: str
    config: SystemConfig = field(default_factory=SystemConfig)
    grids: dict[str, list] = field(default_factory=dict)
    trials: int = 100
    beamformer: str = "wmmse"
    seed: int = 0
    out: str | Path | None = None
    timestamp_header: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if isinstance(self.trials, bool) or int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.beamformer not in ("zf", "wmmse"):
            raise ConfigError(f"beamformer must be 'zf' or 'wmmse', got {self.beamformer!r}")
        if int(self.seed) < 0:
            raise ConfigError("seed must be unsigned")
        merged = {k: list(v) for k, v in DEFAULT_GRIDS[self.kind].items()}
        allowed = set(merged) | set(OPTIONAL_GRIDS.get(self.kind, ()))
        unknown = sorted(set(self.grids) - allowed)
        if unknown:
            raise ConfigError(f"{self.kind} has no grid {', '.join(unknown)}; valid: {', '.join(sorted(allowed))}")
        for key, values in self.grids.items():
            merged[key] = list(values)
        for key, values in merged.items():
            if len(values) == 0:
                raise ConfigError(f"grid {key!r} is empty")
        self.grids = merged

    def grid(self, key: str, default=None) -> list:
        return self.grids.get(key, default)


@dataclass
class ResultTable:
    kind: str
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def select(self, row_type: str) -> list[dict]:
        return [r for r in self.rows if r["row_type"] == row_type]


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def write_csv(table: ResultTable, path, timestamp_header: bool = True) -> None:
    path = Path(path)
    lines = []
    if timestamp_header:
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        lines.append(f"# generated: {stamp}")
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(format_value(row.get(c)) for c in table.columns))
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def _single_pa_sweep(spec: ExperimentSpec) -> list[dict]:
    cfg = spec.config.replace(num_waveguides=1, num_pas_per_wg=1, num_users=1)
    wg_x = waveguide_entrances(cfg)[0].x
    dz = cfg.region[2]
    samples = int(spec.grid("samples")[0])
    rows = []
    for x_user, y_user in itertools.product(spec.grid("x_user"), spec.grid("y_user")):
        user = Vec3(float(x_user), float(y_user), 0.0)
        for y in np.linspace(0.0, min(user.y, cfg.region[1]), samples):
            pa = Vec3(wg_x, float(y), dz)
            g = composite_gain_sq(user, pa, optimal_orientation(user, pa), cfg)
            rows.append({"row_type": "sample", "x_user": user.x, "y_user": user.y, "y_pa": float(y),
                         "gain_sq": g, "gain_db": _db(g)})
        sol = solve_placement(user, wg_x, cfg)
        rows.append({"row_type": "optimum", "x_user": user.x, "y_user": user.y, "y_pa": sol.y_star,
                     "gain_sq": sol.gain_sq, "gain_db": _db(sol.gain_sq)})
    return rows


def _placement_heatmap(spec: ExperimentSpec) -> list[dict]:
    base = spec.config.replace(num_waveguides=1, num_pas_per_wg=1, num_users=1)
    rows = []
    for atten, los, height in itertools.product(
        spec.grid("wg_atten_db", [base.wg_atten_db]),
        spec.grid("los_coeff", [base.los_coeff]),
        spec.grid("height", [base.region[2]]),
    ):
        cfg = base.replace(wg_atten_db=float(atten), los_coeff=float(los),
                           region=(base.region[0], base.region[1], float(height)))
        wg_x = waveguide_entrances(cfg)[0].x
        for x_user, y_user in itertools.product(spec.grid("x_user"), spec.grid("y_user")):
            sol = solve_placement((float(x_user), float(y_user), 0.0), wg_x, cfg)
            rows.append({
                "row_type": "point", "wg_atten_db": cfg.wg_atten_db, "los_coeff": cfg.los_coeff,
                "height": cfg.region[2], "x_user": float(x_user), "y_user": float(y_user),
                "y_star": sol.y_star, "gamma_star": sol.gamma_star, "gain_sq": sol.gain_sq,
                "boundary_hit": sol.boundary_hit, "condition": sol.diagnostics["condition"],
            })
    return rows


def _gain_profile(spec: ExperimentSpec) -> list[dict]:
    base = spec.config.replace(num_waveguides=1, num_pas_per_wg=1, num_users=1)
    samples = int(spec.grid("samples")[0])
    rows = []
    for cs, theta in itertools.product(spec.grid("cross_section"), spec.grid("theta")):
        a, b = _parse_cross_section(cs)
        cfg = base.replace(cross_section=(a, b))
        pa = Vec3(waveguide_entrances(cfg)[0].x, 2.0, cfg.region[2])
        orient = Orientation(float(theta), math.pi / 2)
        for y in np.linspace(0.0, cfg.region[1], samples):
            h = pa_to_user((pa.x, float(y), 0.0), pa, orient, cfg)
            g = abs(h) ** 2
            rows.append({"row_type": "sample", "a": a, "b": b, "theta": float(theta), "y_floor": float(y),
                         "gain_sq": g, "gain_db": _db(g)})
    return rows


def _parse_cross_section(value) -> tuple[float, float]:
    if isinstance(value, (tuple, list)):
        a, b = value
        return float(a), float(b)
    try:
        a, b = str(value).lower().split("x")
        return float(a), float(b)
    except ValueError as exc:
        raise ConfigError(f"cross_section grid values look like '10x6', got {value!r}") from exc


def _trial_task(args) -> dict:
    cfg, seed_seq, beamformer = args
    scenario = generate_scenario(cfg, seed_seq)
    result = run_pipeline(scenario.users, cfg, beamformer)
    return {"sum_rate": result.report.sum_rate, "served": result.report.served}


def _seed_label(seq: np.random.SeedSequence) -> str:
    return f"{seq.entropy}:{'-'.join(map(str, seq.spawn_key))}"


def _multi_pa(spec: ExperimentSpec) -> list[dict]:
    seeds = trial_seeds(spec.seed, int(spec.trials))
    points = list(itertools.product(spec.grid("N"), spec.grid("L"), spec.grid("M")))
    tasks = []
    for N, L, M in points:
        cfg = spec.config.replace(num_waveguides=int(N), num_pas_per_wg=int(L), num_users=int(M))
        tasks.extend((cfg, s, spec.beamformer) for s in seeds)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.workers))))
    else:
        outcomes = [_trial_task(t) for t in tasks]
    rows = []
    it = iter(outcomes)
    for N, L, M in points:
        trial_rows = []
        for t, s in enumerate(seeds):
            out = next(it)
            trial_rows.append({"row_type": "trial", "N": int(N), "L": int(L), "M": int(M),
                               "method": spec.beamformer, "trial": t, "seed": _seed_label(s),
                               "sum_rate": out["sum_rate"], "served": out["served"]})
        rows.extend(trial_rows)
        rows.extend(aggregate_rows(trial_rows))
    return rows


def aggregate_rows(trial_rows: Sequence[dict]) -> list[dict]:
    """Mean and standard-error rows over a block of trial rows."""
    first = trial_rows[0]
    keys = {k: first[k] for k in ("N", "L", "M", "method")}
    rates = np.array([r["sum_rate"] for r in trial_rows], dtype=float)
    served = np.array([r["served"] for r in trial_rows], dtype=float)
    n = len(trial_rows)

    def stderr(x):
        return float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan

    blank = {"trial": None, "seed": None}
    return [
        {"row_type": "mean", **keys, **blank, "sum_rate": float(rates.mean()), "served": float(served.mean())},
        {"row_type": "stderr", **keys, **blank, "sum_rate": stderr(rates), "served": stderr(served)},
    ]


_RUNNERS = {
    "single-pa-sweep": _single_pa_sweep,
    "placement-heatmap": _placement_heatmap,
    "sumrate-vs-N": _multi_pa,
    "served-users": _multi_pa,
    "gain-profile": _gain_profile,
}


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Run ``spec`` and, when ``spec.out`` is set, write the CSV there."""
    table = ResultTable(spec.kind, COLUMNS[spec.kind], _RUNNERS[spec.kind](spec))
    if spec.out is not None:
        write_csv(table, spec.out, spec.timestamp_header)
    return table


def parse_grid(text: str) -> tuple[str, list]:
    """Parse ``key=v1,v2,...`` into a grid entry; numbers become int or float."""
    if "=" not in text:
        raise ConfigError(f"grid override must look like key=v1,v2; got {text!r}")
    key, _, raw = text.partition("=")
    values: list = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(int(item))
        except ValueError:
            try:
                values.append(float(item))
            except ValueError:
                values.append(item)
    if not values:
        raise ConfigError(f"grid {key!r} is empty")
    return key.strip(), values

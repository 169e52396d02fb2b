"""Scenario runner: config in, solved portfolio and normalised metrics out.

A scenario is one JSON document::

    {
      "seed": 1,
      "portfolio": {"simulate": {"n": 1000}},          # or {"path": "book.csv"}
      "delta_bounds": [-0.2, 0.2],
      "model": {"kind": "step", "mode": "piecewise_constant"},
      "problem": {"objective": "volume", "count_bounds": [0.45, 0.50]},
      "solver": {"name": "ga", "config": {"max_generations": 500}},
      "output_dir": "out"
    }

Ratios in the report are percentages of the same quantity at ``delta = 0``.
All output files are deterministic functions of the config and seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .conversion import (
    CLAMPED_LINEAR,
    ConversionModel,
    LinearParams,
    LogisticParams,
    StepParams,
    probabilities,
)
from .exceptions import ConfigError, PriceOptError
from .ga import GaConfig, run_ga
from .market import DeltaDomain, Portfolio, load_portfolio, save_portfolio
from .objectives import VOLUME, PenaltyConfig, ProblemSpec
from .oracle import OracleConfig, exhaustive_search
from .results import SolverResult
from .simulator import RNG_NAME, SimConfig, simulate_portfolio
from .sqp import SqpConfig, multistart_sqp, run_sqp

ZERO_THRESHOLD = 1e-12
SOLVERS = ("ga", "sqp", "oracle")
REPORT_FILES = ("portfolio.csv", "delta.csv", "positions.csv", "delta_distribution.csv",
                "report.json")


def derive_seeds(seed: int) -> tuple[int, int]:
    """Independent ``(portfolio, solver)`` seeds from one scenario seed."""
    state = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint32)
    return int(state[0]), int(state[1])


def _only_keys(block: dict, allowed, where: str):
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _dataclass_from(cls, block: Optional[dict], where: str, **fixed):
    block = dict(block or {})
    fields = set(cls.__dataclass_fields__)
    _only_keys(block, fields - set(fixed), where)
    try:
        return cls(**block, **fixed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ScenarioConfig:
    """Parsed scenario; see the module docstring for the JSON layout."""

    portfolio: dict
    model: dict
    problem: dict
    solver: dict = field(default_factory=lambda: {"name": "ga"})
    seed: int = 0
    delta_bounds: Optional[tuple[float, float]] = None
    output_dir: Optional[str] = None
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if set(self.portfolio) not in ({"path"}, {"simulate"}):
            raise ConfigError("portfolio needs exactly one of 'path' or 'simulate'")
        if "simulate" in self.portfolio and "seed" in (self.portfolio["simulate"] or {}):
            raise ConfigError("portfolio.simulate: the seed comes from the top-level 'seed'")
        name = self.solver.get("name")
        if name not in SOLVERS:
            raise ConfigError(f"solver.name must be one of {SOLVERS}, got {name!r}")
        _only_keys(self.solver, {"name", "config", "penalty", "multistart"}, "solver")
        if "seed" in (self.solver.get("config") or {}):
            raise ConfigError("solver.config: the seed comes from the top-level 'seed'")
        if self.model.get("kind") == "step" and name == "sqp":
            raise ConfigError("the step model has no derivative; use the ga or oracle solver")
        if self.delta_bounds is not None:
            lo, hi = (float(v) for v in self.delta_bounds)
            self.delta_bounds = (lo, hi)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ScenarioConfig":
        _only_keys(data, {"portfolio", "model", "problem", "solver", "seed", "delta_bounds",
                          "output_dir"}, "scenario")
        for key in ("portfolio", "model", "problem"):
            if key not in data:
                raise ConfigError(f"scenario: missing '{key}'")
        return cls(base_dir=Path(base_dir), **data)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        data = {k: v for k, v in asdict(self).items() if k != "base_dir"}
        data["seed"] = seed
        return ScenarioConfig(base_dir=self.base_dir, **data)

    @property
    def seeds(self) -> tuple[int, int]:
        return derive_seeds(self.seed)

    # Builders ---------------------------------------------------------------

    def sim_config(self) -> SimConfig:
        block = dict(self.portfolio.get("simulate") or {})
        if self.delta_bounds is not None:
            block.setdefault("delta_lower", self.delta_bounds[0])
            block.setdefault("delta_upper", self.delta_bounds[1])
        return _dataclass_from(SimConfig, block, "portfolio.simulate", seed=self.seeds[0])

    def build_portfolio(self) -> tuple[Portfolio, Optional[dict]]:
        """The portfolio and, when simulated, its premium statistics."""
        if "path" in self.portfolio:
            path = Path(self.portfolio["path"])
            if not path.is_absolute():
                path = self.base_dir / path
            return load_portfolio(path, default_bounds=self.delta_bounds), None
        return simulate_portfolio(self.sim_config())

    def build_model(self, portfolio: Portfolio) -> ConversionModel:
        block = dict(self.model)
        kind = block.pop("kind", None)
        params_csv = block.pop("params_csv", None)
        if params_csv is not None:
            block.update(_read_params(self._resolve(params_csv), portfolio))
        if kind == "step":
            return _dataclass_from(StepParams, block, "model")
        if kind == "linear":
            _only_keys(block, {"alpha", "beta"}, "model")
            return _dataclass_from(LinearParams, _arrays(block), "model")
        if kind == "logistic":
            anchor_block = block.pop("anchor", None) or {"mode": CLAMPED_LINEAR}
            anchor = _dataclass_from(StepParams, anchor_block, "model.anchor")
            _only_keys(block, {"elasticity", "base_rate"}, "model")
            return _dataclass_from(LogisticParams, _arrays(block), "model", anchor=anchor)
        raise ConfigError(f"model.kind must be step, linear or logistic, got {kind!r}")

    def build_spec(self, portfolio: Portfolio, model: ConversionModel) -> ProblemSpec:
        block = dict(self.problem)
        objective = block.pop("objective", VOLUME)
        domain = _domain(block.pop("delta_domain", None))
        bound_keys = [k for k in ("count_bounds", "volume_bounds", "volume_growth",
                                  "volume_competitors") if k in block]
        _only_keys(block, bound_keys, "problem")
        if len(bound_keys) != 1:
            raise ConfigError("problem needs exactly one bound setting, got "
                              f"{bound_keys or 'none'}")
        key = bound_keys[0]
        value = block[key]
        if key == "count_bounds":
            return _spec(objective, count_bounds=tuple(value), delta_domain=domain)
        if key == "volume_bounds":
            return _spec(objective, volume_bounds=tuple(value), delta_domain=domain)
        if key == "volume_growth":
            base = baseline_metrics(portfolio, model)["volume"]
            lo, hi = (float(v) for v in value)
            return _spec(objective, volume_bounds=(base * (1 + lo), base * (1 + hi)),
                         delta_domain=domain)
        columns = [int(c) for c in value]
        totals = sorted(competitor_volume(portfolio, model, c) for c in columns)
        if len(totals) != 2:
            raise ConfigError("problem.volume_competitors takes two competitor columns")
        return _spec(objective, volume_bounds=(totals[0], totals[1]), delta_domain=domain)

    def _resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path


def _spec(objective, **kwargs) -> ProblemSpec:
    try:
        return ProblemSpec(objective, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc


def _domain(block) -> DeltaDomain:
    if block is None:
        return DeltaDomain.continuous()
    kind = block.get("kind", "continuous")
    try:
        if kind == "continuous":
            _only_keys(block, {"kind"}, "problem.delta_domain")
            return DeltaDomain.continuous()
        if kind == "discrete":
            _only_keys(block, {"kind", "values"}, "problem.delta_domain")
            return DeltaDomain.discrete(block["values"])
        if kind == "grid":
            _only_keys(block, {"kind", "low", "high", "step"}, "problem.delta_domain")
            return DeltaDomain.grid(block["low"], block["high"], block["step"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"problem.delta_domain: {exc}") from exc
    raise ConfigError(f"problem.delta_domain.kind must be continuous, discrete or grid, got {kind!r}")


def _arrays(block: dict) -> dict:
    return {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in block.items()}


def _read_params(path: Path, portfolio: Portfolio) -> dict:
    """Per-customer model parameters from a CSV keyed by ``customer_id``."""
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no rows")
    by_id = {int(row["customer_id"]): row for row in rows}
    missing = [cid for cid in portfolio.customer_ids if cid not in by_id]
    if missing:
        raise ConfigError(f"{path}: no parameters for customers {missing[:5]}")
    names = [c for c in rows[0] if c != "customer_id"]
    return {name: [float(by_id[cid][name]) for cid in portfolio.customer_ids] for name in names}


# Metrics ----------------------------------------------------------------------

def baseline_metrics(portfolio: Portfolio, model: ConversionModel, delta=None) -> dict:
    """Expected volume, count and EPN at ``delta`` (zero by default)."""
    delta = np.zeros(portfolio.n) if delta is None else np.asarray(delta, dtype=float)
    probs = probabilities(model, portfolio, delta)
    volume = float(np.sum(portfolio.base * (1.0 + delta) * probs))
    count = float(np.sum(probs))
    return {"volume": volume, "count": count, "epn": count / portfolio.n}


def competitor_volume(portfolio: Portfolio, model: ConversionModel, column: int) -> float:
    """Expected volume if every customer were quoted competitor ``column``'s premium
    (columns count from 1, as in the portfolio CSV)."""
    if not 1 <= column <= portfolio.k:
        raise ConfigError(f"competitor column must lie in [1, {portfolio.k}], got {column}")
    premium = portfolio.competitors[:, column - 1]
    delta = premium / portfolio.base - 1.0
    probs = probabilities(model, portfolio, delta)
    return float(np.sum(premium * probs))


POSITIONS = ("cheapest", "in_between", "most_expensive")


def _positions(portfolio: Portfolio, premiums) -> np.ndarray:
    ranks = portfolio.ranks(premiums)
    return np.where(ranks == 1, 0, np.where(ranks == portfolio.k + 1, 2, 1))


def premium_position_histogram(portfolio: Portfolio, delta_vec) -> list[dict]:
    """Share of customers where the company is cheapest, most expensive or in
    between, before (``delta = 0``) and after the premium change."""
    before = _positions(portfolio, portfolio.base)
    after = _positions(portfolio, portfolio.base * (1.0 + np.asarray(delta_vec, dtype=float)))
    rows = []
    for code, name in enumerate(POSITIONS):
        nb, na = int(np.sum(before == code)), int(np.sum(after == code))
        rows.append({"position": name, "count_before": nb, "share_before": 100.0 * nb / portfolio.n,
                     "count_after": na, "share_after": 100.0 * na / portfolio.n})
    return rows


def delta_distribution(delta_vec, domain: DeltaDomain, bins: int = 8,
                       value_range: Optional[tuple[float, float]] = None) -> list[dict]:
    """Histogram of premium changes in percent of customers.

    Discrete domains get one row per grid value in grid order; continuous ones
    get ``bins`` equal-width bins over ``value_range`` (data range by default).
    """
    delta = np.asarray(delta_vec, dtype=float)
    n = delta.size
    if domain.is_discrete:
        values = np.asarray(domain.values)
        nearest = np.argmin(np.abs(delta[:, None] - values[None, :]), axis=1)
        counts = np.bincount(nearest, minlength=values.size)
        return [{"low": float(v), "high": float(v), "count": int(c), "share": 100.0 * c / n}
                for v, c in zip(values, counts)]
    if value_range is None:
        value_range = (float(delta.min()), float(delta.max()))
    if value_range[0] == value_range[1]:
        return [{"low": value_range[0], "high": value_range[1], "count": n, "share": 100.0}]
    counts, edges = np.histogram(delta, bins=bins, range=value_range)
    return [{"low": float(lo), "high": float(hi), "count": int(c), "share": 100.0 * c / n}
            for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


@dataclass
class ScenarioReport:
    """Normalised results of one scenario; percentages are relative to ``delta = 0``."""

    status: str
    solver: str
    objective: str
    n: int
    feasible: bool
    volume_ratio: Optional[float]
    count_ratio: Optional[float]
    mean_delta: Optional[float]
    mean_increase: Optional[float]
    mean_decrease: Optional[float]
    n_increases: Optional[int]
    n_decreases: Optional[int]
    n_zero: Optional[int]
    residuals: Optional[tuple[float, float]]
    bounds: tuple[float, float]
    baseline: dict
    optimised: Optional[dict]
    diagnostics: dict
    seeds: dict
    error: Optional[str] = None

    @property
    def infeasible(self) -> bool:
        return not self.feasible

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def summarize(portfolio: Portfolio, model: ConversionModel, spec: ProblemSpec,
              result: SolverResult, seeds: dict) -> ScenarioReport:
    base = baseline_metrics(portfolio, model)
    opt = baseline_metrics(portfolio, model, result.delta)
    delta = result.delta
    up = delta > ZERO_THRESHOLD
    down = delta < -ZERO_THRESHOLD
    return ScenarioReport(
        status=result.status,
        solver=result.solver,
        objective=spec.objective,
        n=portfolio.n,
        feasible=result.feasible,
        volume_ratio=100.0 * (opt["volume"] / base["volume"]),
        count_ratio=100.0 * (opt["count"] / base["count"]),
        mean_delta=100.0 * float(np.mean(delta)),
        mean_increase=100.0 * float(np.mean(delta[up])) if up.any() else 0.0,
        mean_decrease=100.0 * float(np.mean(delta[down])) if down.any() else 0.0,
        n_increases=int(up.sum()),
        n_decreases=int(down.sum()),
        n_zero=int(portfolio.n - up.sum() - down.sum()),
        residuals=result.residuals,
        bounds=spec.bounds,
        baseline=base,
        optimised=opt,
        diagnostics=_diagnostics(result),
        seeds=seeds,
    )


def _diagnostics(result: SolverResult) -> dict:
    info = {k: v for k, v in result.info.items() if k != "penalty_r"}
    if "penalty_r" in result.info:
        info["final_penalty_r"] = result.info["penalty_r"][-1]
    return {"iterations": result.iterations, "kkt_residual": result.kkt_residual,
            "best_fitness": result.best_fitness, "relaxed": result.relaxed, "info": info}


def to_jsonable(value: Any):
    """Plain JSON types; numpy scalars and arrays converted, non-finite floats to null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


# Running ----------------------------------------------------------------------

def solve(config: ScenarioConfig, spec: ProblemSpec, portfolio: Portfolio,
          model: ConversionModel, solver: Optional[str] = None) -> SolverResult:
    name = solver or config.solver["name"]
    block = config.solver.get("config") or {}
    solver_seed = config.seeds[1]
    if name == "ga":
        ga_config = _dataclass_from(GaConfig, block, "solver.config", seed=solver_seed)
        penalty = _dataclass_from(PenaltyConfig, config.solver.get("penalty"), "solver.penalty")
        return run_ga(spec, portfolio, model, ga_config, penalty)
    if name == "sqp":
        sqp_config = _dataclass_from(SqpConfig, block, "solver.config", seed=solver_seed)
        if config.solver.get("multistart", True):
            return multistart_sqp(spec, portfolio, model, sqp_config)
        return run_sqp(spec, portfolio, model, sqp_config)
    oracle_block = block if config.solver["name"] == "oracle" else {}
    return exhaustive_search(spec, portfolio, model,
                             _dataclass_from(OracleConfig, oracle_block, "solver.config"))


def run_scenario(config: ScenarioConfig, solver: Optional[str] = None,
                 output_dir=None) -> ScenarioReport:
    """Build, solve, summarise and (when an output directory is set) write files.

    A solver error still yields a report: status ``failed``, the message in
    ``error`` and the baseline metrics filled in.
    """
    portfolio, _ = config.build_portfolio()
    model = config.build_model(portfolio)
    spec = config.build_spec(portfolio, model)
    seeds = {"scenario": config.seed, "portfolio": config.seeds[0], "solver": config.seeds[1],
             "rng": RNG_NAME}
    result = None
    try:
        result = solve(config, spec, portfolio, model, solver)
        report = summarize(portfolio, model, spec, result, seeds)
    except (PriceOptError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        report = ScenarioReport(
            status="failed", solver=solver or config.solver["name"], objective=spec.objective,
            n=portfolio.n, feasible=False, volume_ratio=None, count_ratio=None,
            mean_delta=None, mean_increase=None, mean_decrease=None, n_increases=None,
            n_decreases=None, n_zero=None, residuals=None, bounds=spec.bounds,
            baseline=baseline_metrics(portfolio, model), optimised=None, diagnostics={},
            seeds=seeds, error=f"{type(exc).__name__}: {exc}")
    out = output_dir if output_dir is not None else config.output_dir
    if out is not None:
        write_outputs(Path(out), portfolio, model, spec, result, report)
    return report


def write_outputs(out: Path, portfolio: Portfolio, model: ConversionModel, spec: ProblemSpec,
                  result: Optional[SolverResult], report: ScenarioReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_portfolio(portfolio, out / "portfolio.csv")
    _write_json(out / "report.json", report.to_dict())
    if result is None:
        return
    delta = result.delta
    before = probabilities(model, portfolio, np.zeros(portfolio.n))
    after = probabilities(model, portfolio, delta)
    _write_rows(out / "delta.csv", [
        {"customer_id": cid, "delta": d, "premium_before": p, "premium_after": p * (1 + d),
         "prob_before": b, "prob_after": a}
        for cid, d, p, b, a in zip(portfolio.customer_ids, delta, portfolio.base, before, after)])
    _write_rows(out / "positions.csv", premium_position_histogram(portfolio, delta))
    value_range = (float(np.min(portfolio.lower)), float(np.max(portfolio.upper)))
    _write_rows(out / "delta_distribution.csv",
                delta_distribution(delta, spec.delta_domain, value_range=value_range))
    if result.trace:
        result.write_trace(out / "trace.csv")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(rows[0]))
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row.values()])


def load_report(directory) -> dict:
    path = Path(directory) / "report.json"
    if not path.exists():
        raise ConfigError(f"{path} not found")
    return json.loads(path.read_text())


def format_report(report: dict) -> str:
    """Plain-text table in the layout of the scenario tables."""
    def pct(key):
        value = report.get(key)
        return "n/a" if value is None else f"{value:.2f}"

    lines = [
        f"solver={report['solver']} objective={report['objective']} status={report['status']} "
        f"feasible={report['feasible']} n={report['n']}",
        f"Aggregate expected premium volume (%)   {pct('volume_ratio')}",
        f"Expected number of new customers (%)    {pct('count_ratio')}",
        f"Average premium change (%)              {pct('mean_delta')}",
        f"Average increase (%)                    {pct('mean_increase')}",
        f"Average decrease (%)                    {pct('mean_decrease')}",
        f"Number of increases                     {report.get('n_increases')}",
        f"Number of decreases                     {report.get('n_decreases')}",
        f"Number unchanged                        {report.get('n_zero')}",
    ]
    if report.get("error"):
        lines.append(f"error: {report['error']}")
    return "\n".join(lines)

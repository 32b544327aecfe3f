"""TOML run configurations.

A config has five required tables, [problem], [delay], [step], [batch], and
[run], plus an optional [output] table and a top-level schema_version. Every
key is checked: unknown keys, missing required keys, wrong types, and invalid
values are rejected with the offending key named. CLI flags override the
seed, output directory, algorithm, and admissibility override per invocation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .delays import (
    BoundedDelay,
    DelayModel,
    GrowingUniformDelay,
    PoissonDelay,
    SeriesBoundedDelay,
    SystemDelay,
)
from .engine import ALGORITHMS, RunConfig
from .problems import MatrixCompletionProblem, MvnMleProblem, Problem, QuadraticProblem
from .schedules import (
    BatchSchedule,
    ConstantStep,
    FixedBatch,
    IncreasingBatch,
    InvKStep,
    InvSqrtKLogStep,
    StepSchedule,
)

__all__ = ["ConfigError", "RunSpec", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


_NUMBER = (int, float)


def _type_ok(value, types) -> bool:
    if not isinstance(types, tuple):
        types = (types,)
    if isinstance(value, bool) and bool not in types:
        return False
    if isinstance(value, int) and float in types and int not in types:
        return True  # TOML integers promote where floats are expected
    return isinstance(value, types)


def _check_table(table: dict, name: str, allowed: dict, required: set[str]) -> None:
    if not isinstance(table, dict):
        raise ConfigError(f"{name} must be a table")
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {name}.{key}")
    for key in required:
        if key not in table:
            raise ConfigError(f"missing required key {name}.{key}")
    for key, value in table.items():
        if not _type_ok(value, allowed[key]):
            raise ConfigError(f"{name}.{key} has the wrong type")


def _number_list(value, name: str) -> list[float]:
    if not isinstance(value, list) or not value or not all(
        _type_ok(v, _NUMBER) for v in value
    ):
        raise ConfigError(f"{name} must be a non-empty list of numbers")
    return [float(v) for v in value]


def _int_list(value, name: str) -> list[int]:
    if not isinstance(value, list) or not value or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"{name} must be a non-empty list of integers")
    return list(value)


def _build(section: str, ctor, /, **kwargs):
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _parse_problem(table: dict) -> Problem:
    _check_table(
        table,
        "problem",
        {
            "kind": str,
            "dim": int,
            "hessian_diag": list,
            "noise_std": _NUMBER,
            "size": int,
            "rank": int,
            "seed": int,
            "covariance": list,
            "mean": list,
            "n_samples": int,
        },
        {"kind"},
    )
    kind = table["kind"]
    if kind == "quadratic":
        extra = set(table) - {"kind", "dim", "hessian_diag", "noise_std"}
        if extra:
            raise ConfigError(f"problem.{sorted(extra)[0]} does not apply to quadratic")
        if ("dim" in table) == ("hessian_diag" in table):
            raise ConfigError("problem needs exactly one of problem.dim or problem.hessian_diag")
        if "hessian_diag" in table:
            diag = _number_list(table["hessian_diag"], "problem.hessian_diag")
        else:
            diag = [1.0] * table["dim"]
        return _build(
            "problem",
            QuadraticProblem,
            hessian=np.diag(diag),
            noise_std=float(table.get("noise_std", 0.1)),
        )
    if kind == "matrix_completion":
        extra = set(table) - {"kind", "size", "rank", "noise_std", "seed"}
        if extra:
            raise ConfigError(
                f"problem.{sorted(extra)[0]} does not apply to matrix_completion"
            )
        if "size" not in table:
            raise ConfigError("missing required key problem.size")
        return _build(
            "problem",
            MatrixCompletionProblem,
            size=table["size"],
            rank=table.get("rank", 1),
            noise_std=float(table.get("noise_std", 1.0)),
            seed=table.get("seed", 0),
        )
    if kind == "mvn_mle":
        extra = set(table) - {"kind", "covariance", "mean", "n_samples", "seed"}
        if extra:
            raise ConfigError(f"problem.{sorted(extra)[0]} does not apply to mvn_mle")
        if "covariance" not in table:
            raise ConfigError("missing required key problem.covariance")
        cov = table["covariance"]
        if not isinstance(cov, list) or not all(isinstance(r, list) for r in cov):
            raise ConfigError("problem.covariance must be a list of rows")
        rows = [_number_list(r, "problem.covariance") for r in cov]
        mean = None
        if "mean" in table:
            mean = np.array(_number_list(table["mean"], "problem.mean"))
        return _build(
            "problem",
            MvnMleProblem,
            covariance_true=np.array(rows),
            mean=mean,
            n_samples=table.get("n_samples", 1000),
            seed=table.get("seed", 0),
        )
    raise ConfigError("problem.kind must be one of quadratic, matrix_completion, mvn_mle")


def _parse_delay(table: dict) -> DelayModel:
    _check_table(
        table,
        "delay",
        {
            "kind": str,
            "max_delay": int,
            "pmf": list,
            "rate": _NUMBER,
            "weights": list,
            "family": str,
            "params": list,
            "workers": int,
            "redraw_rates": bool,
        },
        {"kind"},
    )
    kind = table["kind"]
    allowed_by_kind = {
        "bounded": {"kind", "max_delay", "pmf"},
        "poisson": {"kind", "rate"},
        "growing_uniform": {"kind"},
        "series": {"kind", "weights", "family", "params"},
        "system": {"kind", "workers", "redraw_rates"},
    }
    if kind not in allowed_by_kind:
        raise ConfigError(
            "delay.kind must be one of bounded, poisson, growing_uniform, series, system"
        )
    extra = set(table) - allowed_by_kind[kind]
    if extra:
        raise ConfigError(f"delay.{sorted(extra)[0]} does not apply to {kind}")
    if kind == "bounded":
        if "max_delay" not in table:
            raise ConfigError("missing required key delay.max_delay")
        pmf = None
        if "pmf" in table:
            pmf = tuple(_number_list(table["pmf"], "delay.pmf"))
        return _build("delay", BoundedDelay, max_delay=table["max_delay"], pmf=pmf)
    if kind == "poisson":
        if "rate" not in table:
            raise ConfigError("missing required key delay.rate")
        return _build("delay", PoissonDelay, rate=float(table["rate"]))
    if kind == "growing_uniform":
        return GrowingUniformDelay()
    if kind == "series":
        weights = None
        if "weights" in table:
            weights = tuple(_number_list(table["weights"], "delay.weights"))
        family = table.get("family")
        params = tuple(_number_list(table["params"], "delay.params")) if "params" in table else ()
        return _build(
            "delay", SeriesBoundedDelay, weights=weights, family=family, params=params
        )
    if "workers" not in table:
        raise ConfigError("missing required key delay.workers")
    return _build(
        "delay",
        SystemDelay,
        workers=table["workers"],
        redraw_rates=table.get("redraw_rates", False),
    )


def _parse_step(table: dict) -> StepSchedule:
    _check_table(
        table,
        "step",
        {"kind": str, "base": _NUMBER, "decay_every": int, "cap": _NUMBER},
        {"kind", "base"},
    )
    kind = table["kind"]
    cap = float(table["cap"]) if "cap" in table else None
    if kind == "constant":
        if "decay_every" in table:
            raise ConfigError("step.decay_every does not apply to constant")
        return _build("step", ConstantStep, base=float(table["base"]), cap=cap)
    if kind == "inv_k":
        return _build(
            "step",
            InvKStep,
            base=float(table["base"]),
            decay_every=table.get("decay_every", 1),
            cap=cap,
        )
    if kind == "inv_sqrt_k_log":
        return _build(
            "step",
            InvSqrtKLogStep,
            base=float(table["base"]),
            decay_every=table.get("decay_every", 1),
            cap=cap,
        )
    raise ConfigError("step.kind must be one of constant, inv_k, inv_sqrt_k_log")


def _parse_batch(table: dict) -> BatchSchedule:
    _check_table(
        table,
        "batch",
        {
            "kind": str,
            "size": int,
            "exponent": _NUMBER,
            "growth": _NUMBER,
            "grow_every": int,
            "explicit": list,
        },
        {"kind", "size"},
    )
    kind = table["kind"]
    if kind == "fixed":
        extra = set(table) - {"kind", "size"}
        if extra:
            raise ConfigError(f"batch.{sorted(extra)[0]} does not apply to fixed")
        return _build("batch", FixedBatch, size=table["size"])
    if kind == "increasing":
        explicit = None
        if "explicit" in table:
            explicit = tuple(_int_list(table["explicit"], "batch.explicit"))
        return _build(
            "batch",
            IncreasingBatch,
            size=table["size"],
            exponent=float(table.get("exponent", 2.0)),
            growth=float(table.get("growth", 1.0)),
            grow_every=table.get("grow_every", 1),
            explicit=explicit,
        )
    raise ConfigError("batch.kind must be one of fixed, increasing")


@dataclass(frozen=True)
class RunSpec:
    """A parsed config: everything needed to run, minus the per-run seed."""

    problem: Problem
    delay: DelayModel
    step: StepSchedule
    batch: BatchSchedule
    algorithm: str
    iterations: int
    seeds: tuple[int, ...]
    history_capacity: int
    allow_inadmissible: bool
    average_gradients: bool
    record_lyapunov: bool
    lyapunov_horizon: int
    out_dir: str | None

    def run_config(
        self,
        seed: int,
        algorithm: str | None = None,
        allow_inadmissible: bool | None = None,
    ) -> RunConfig:
        return RunConfig(
            problem=self.problem,
            delay=self.delay,
            step=self.step,
            batch=self.batch,
            algorithm=algorithm or self.algorithm,
            iterations=self.iterations,
            seed=seed,
            history_capacity=self.history_capacity,
            allow_inadmissible=(
                self.allow_inadmissible
                if allow_inadmissible is None
                else allow_inadmissible
            ),
            average_gradients=self.average_gradients,
            record_lyapunov=self.record_lyapunov,
            lyapunov_horizon=self.lyapunov_horizon,
        )


def parse_config(raw: dict) -> RunSpec:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    known = {"schema_version", "problem", "delay", "step", "batch", "run", "output"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key {key}")
    version = raw.get("schema_version", 1)
    if version != 1:
        raise ConfigError("schema_version must be 1")
    for section in ("problem", "delay", "step", "batch", "run"):
        if section not in raw:
            raise ConfigError(f"missing required table [{section}]")

    problem = _parse_problem(raw["problem"])
    delay = _parse_delay(raw["delay"])
    step = _parse_step(raw["step"])
    batch = _parse_batch(raw["batch"])

    run = raw["run"]
    _check_table(
        run,
        "run",
        {
            "algorithm": str,
            "iterations": int,
            "seeds": list,
            "history_capacity": int,
            "allow_inadmissible": bool,
            "average_gradients": bool,
            "record_lyapunov": bool,
            "lyapunov_horizon": int,
        },
        {"algorithm", "iterations", "seeds"},
    )
    if run["algorithm"] not in ALGORITHMS:
        raise ConfigError(f"run.algorithm must be one of {', '.join(ALGORITHMS)}")
    if run["iterations"] < 1:
        raise ConfigError("run.iterations must be a positive integer")
    seeds = tuple(_int_list(run["seeds"], "run.seeds"))
    if run["algorithm"] == "async_i" and not isinstance(batch, IncreasingBatch):
        raise ConfigError("run.algorithm async_i requires batch.kind increasing")
    if run["algorithm"] != "async_i" and isinstance(batch, IncreasingBatch):
        raise ConfigError("batch.kind increasing requires run.algorithm async_i")

    out_dir = None
    if "output" in raw:
        _check_table(raw["output"], "output", {"dir": str}, set())
        out_dir = raw["output"].get("dir")

    return RunSpec(
        problem=problem,
        delay=delay,
        step=step,
        batch=batch,
        algorithm=run["algorithm"],
        iterations=run["iterations"],
        seeds=seeds,
        history_capacity=run.get("history_capacity", 4096),
        allow_inadmissible=run.get("allow_inadmissible", False),
        average_gradients=run.get("average_gradients", False),
        record_lyapunov=run.get("record_lyapunov", False),
        lyapunov_horizon=run.get("lyapunov_horizon", 512),
        out_dir=out_dir,
    )


def load_config(path: str | Path) -> RunSpec:
    """Parse a TOML config file. Unreadable paths raise OSError unchanged."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(raw)

"""Command-line front end.

    rebalance sample   --config run.json [--section.key value ...]
    rebalance grid     --config grid.json [--section.key value ...]
    rebalance diagnose --samples samples.csv [--reference ref.txt] [--squared]
    rebalance selftest [--full]

Exit codes: 0 success, 1 self-test failure, 2 invalid input, 3 numerical
failure during a run.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from .errors import DomainError, FormatError, NumericalError
from .mjp_core import BalancingFunction, RngStream
from .samplers import GRADIENT_FREE, SAMPLERS, BJSConfig, Budget, FFFConfig, HMCConfig, run_sampler
from .targets import make_target

logger = logging.getLogger("rebalance")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

RUN_DEFAULTS = {
    "sampler": {"name": None, "epsilon": None, "L": None, "lambda_refresh": None, "balancing": None},
    "target": {"name": None, "dim": None, "data_path": None, "reference_path": None},
    "run": {
        "seed": 0,
        "budget_grad_evals": None,
        "budget_jumps": None,
        "discretization_stride": None,
        "n_samples": None,
        "initial_q": None,
        "squared_marginals": False,
    },
    "output": {"dir": None, "write_samples": False},
}

GRID_COLUMNS = [
    "run_id", "sampler", "target", "epsilon", "L", "lambda_refresh", "balancing", "seed", "n_jumps",
    "grad_evals", "flip_count", "bounce_count", "refresh_count", "jump_count", "wall_time_s", "min_ess",
    "ess_per_kgrad", "max_w2", "flip_proportion", "status", "message",
]

_LEAPFROG = ("fff", "rhmc", "hmc")
_METROPOLIS_ONLY = ("rhmc", "rgw")

DEFAULT_N_SAMPLES = 10_000


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# configuration


def _merge(defaults: dict, given: dict, prefix="") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(path, "unknown field")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(path, "expected an object")
            out[key] = _merge(defaults[key], value, path + ".")
        else:
            out[key] = value
    return out


def set_path(cfg: dict, path: str, value) -> None:
    """Set a dotted path; a dict value replaces the whole subtree."""
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(path, "no such section")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(path, "unknown field")
    node[keys[-1]] = copy.deepcopy(value)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens) -> list:
    pairs = []
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(tok, "overrides take the form --section.key value")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            try:
                raw = next(it)
            except StopIteration:
                raise ConfigError(key, "missing value") from None
        pairs.append((key, _parse_value(raw)))
    return pairs


def _number(cfg, section, key, positive=True, integer=False, required=True):
    v = cfg[section][key]
    path = f"{section}.{key}"
    if v is None:
        if required:
            raise ConfigError(path, "is required")
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, "must be an integer")
    if positive and not v > 0:
        raise ConfigError(path, "must be positive")
    return int(v) if integer else float(v)


def normalize_run_config(raw: dict) -> dict:
    """Fill defaults and validate a run configuration; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected an object")
    cfg = _merge(RUN_DEFAULTS, raw)
    s, t, r = cfg["sampler"], cfg["target"], cfg["run"]

    name = s["name"]
    if name not in SAMPLERS:
        raise ConfigError("sampler.name", f"must be one of {', '.join(SAMPLERS)}")
    _number(cfg, "sampler", "epsilon")
    if name in _LEAPFROG:
        s["L"] = 1 if s["L"] is None else _number(cfg, "sampler", "L", integer=True)
    elif s["L"] is not None:
        raise ConfigError("sampler.L", f"not applicable to {name}")
    if name == "hmc":
        for key in ("lambda_refresh", "balancing"):
            if s[key] is not None:
                raise ConfigError(f"sampler.{key}", "not applicable to hmc")
    else:
        s["lambda_refresh"] = 1.0 if s["lambda_refresh"] is None else _number(cfg, "sampler", "lambda_refresh")
        if name in _METROPOLIS_ONLY:
            if s["balancing"] not in (None, "metropolis"):
                raise ConfigError("sampler.balancing", f"{name} always uses metropolis")
            s["balancing"] = "metropolis"
        else:
            bal = "sqrt" if s["balancing"] is None else s["balancing"]
            try:
                s["balancing"] = BalancingFunction.parse(bal).value
            except ValueError:
                raise ConfigError("sampler.balancing", "must be metropolis, barker or sqrt") from None

    tname = t["name"]
    if tname not in ("gaussian", "banana", "logistic"):
        raise ConfigError("target.name", "must be gaussian, banana or logistic")
    if tname == "gaussian":
        t["dim"] = 2 if t["dim"] is None else _number(cfg, "target", "dim", integer=True)
    elif t["dim"] is not None:
        raise ConfigError("target.dim", f"not applicable to {tname}")
    if tname == "logistic":
        if not t["data_path"]:
            raise ConfigError("target.data_path", "required for the logistic target")
    elif t["data_path"] is not None:
        raise ConfigError("target.data_path", f"not applicable to {tname}")

    seed = r["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("run.seed", "must be an unsigned 64-bit integer")
    grads = _number(cfg, "run", "budget_grad_evals", positive=False, integer=True, required=False)
    jumps = _number(cfg, "run", "budget_jumps", positive=False, integer=True, required=False)
    if (grads is None) == (jumps is None):
        raise ConfigError("run.budget_grad_evals", "set exactly one of budget_grad_evals and budget_jumps")
    for key, v in (("budget_grad_evals", grads), ("budget_jumps", jumps)):
        if v is not None and v < 0:
            raise ConfigError(f"run.{key}", "must be nonnegative")
    if name in GRADIENT_FREE and grads is not None:
        raise ConfigError("run.budget_grad_evals", f"{name} is gradient-free; use budget_jumps")
    stride = _number(cfg, "run", "discretization_stride", required=False)
    ns = _number(cfg, "run", "n_samples", integer=True, required=False)
    if stride is not None and ns is not None:
        raise ConfigError("run.n_samples", "set discretization_stride or n_samples, not both")
    if stride is None and ns is None and name != "hmc":
        r["n_samples"] = DEFAULT_N_SAMPLES
    q0 = r["initial_q"]
    if q0 is not None and (not isinstance(q0, list) or not all(isinstance(v, (int, float)) for v in q0)):
        raise ConfigError("run.initial_q", "must be a list of numbers")
    if not isinstance(r["squared_marginals"], bool):
        raise ConfigError("run.squared_marginals", "must be true or false")
    if not isinstance(cfg["output"]["write_samples"], bool):
        raise ConfigError("output.write_samples", "must be true or false")
    return cfg


def sampler_config(cfg: dict):
    s = cfg["sampler"]
    if s["name"] in ("fff", "rhmc"):
        return FFFConfig(s["epsilon"], s["L"], s["lambda_refresh"], s["balancing"])
    if s["name"] == "hmc":
        return HMCConfig(s["epsilon"], s["L"])
    return BJSConfig(s["epsilon"], s["lambda_refresh"], s["balancing"], s["name"])


def execute(cfg: dict, stream_index: int = 0):
    """Run a validated configuration; returns ``(RunResult, RunMetrics)``."""
    s, t, r = cfg["sampler"], cfg["target"], cfg["run"]
    try:
        target = make_target(t["name"], t["dim"], t["data_path"])
    except OSError as exc:
        raise ConfigError("target.data_path", str(exc)) from None
    reference = None
    if t["reference_path"]:
        try:
            reference = diagnostics.read_samples(t["reference_path"])
        except OSError as exc:
            raise ConfigError("target.reference_path", str(exc)) from None
        if reference.shape[1] != target.dim:
            raise ConfigError("target.reference_path", f"reference has dimension {reference.shape[1]}, target {target.dim}")
    q0 = r["initial_q"]
    if q0 is not None and len(q0) != target.dim:
        raise ConfigError("run.initial_q", f"expected {target.dim} values")
    budget = Budget(r["budget_grad_evals"], r["budget_jumps"])
    rng = RngStream(r["seed"], stream_index)
    start = time.perf_counter()
    result = run_sampler(s["name"], sampler_config(cfg), target, rng, budget,
                         discretization_stride=r["discretization_stride"] if s["name"] != "hmc" else None,
                         n_samples=r["n_samples"] if s["name"] != "hmc" else None,
                         initial_q=q0, store_records=False)
    wall = time.perf_counter() - start
    if result.samples.shape[0] >= 10:
        metrics = diagnostics.compute_metrics(result.samples, result.counters, reference,
                                              squared=r["squared_marginals"], wall_time_s=wall)
    else:
        c = result.counters
        metrics = diagnostics.RunMetrics(None, None, None, c.flip_proportion, c.as_dict(), c.grad_evals, wall,
                                         [float(v) for v in result.samples.mean(axis=0)] if len(result.samples) else [],
                                         int(result.samples.shape[0]))
    return result, metrics


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None


# --------------------------------------------------------------------------
# commands


def cmd_sample(raw_config: dict, overrides=()) -> int:
    cfg = copy.deepcopy(raw_config)
    cfg = _merge(RUN_DEFAULTS, cfg)
    for path, value in overrides:
        set_path(cfg, path, value)
    cfg = normalize_run_config(cfg)
    out_dir = cfg["output"]["dir"]
    if not out_dir:
        raise ConfigError("output.dir", "is required")
    result, metrics = execute(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg["output"]["write_samples"]:
        diagnostics.write_samples(out / "samples.csv", result.samples)
    logger.info("wrote %s", out / "metrics.json")
    return EXIT_OK


def mix_seed(master: int, cell: int, replicate: int) -> int:
    """64-bit replicate seed: SplitMix64 applied to master, then xor-chained
    with the cell and replicate indices."""
    return _splitmix64(_splitmix64(_splitmix64(master) ^ cell) ^ replicate)


_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def expand_grid(grid: dict):
    """Yield ``(run_id, cell_config, seed)`` for every cell and replicate."""
    base = _merge(RUN_DEFAULTS, grid.get("base", {}))
    axes = grid.get("axes", {})
    if not isinstance(axes, dict):
        raise ConfigError("axes", "expected an object mapping paths to value lists")
    for path, values in axes.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axes.{path}", "expected a nonempty list")
    reps = grid.get("replicates", 1)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError("replicates", "must be a positive integer")
    master = base["run"]["seed"]
    if isinstance(master, bool) or not isinstance(master, int) or not 0 <= master < 2**64:
        raise ConfigError("base.run.seed", "must be an unsigned 64-bit integer")
    paths = list(axes)
    for c, combo in enumerate(itertools.product(*(axes[p] for p in paths))):
        cell = copy.deepcopy(base)
        for path, value in zip(paths, combo):
            set_path(cell, path, value)
        for r in range(reps):
            cfg = copy.deepcopy(cell)
            cfg["run"]["seed"] = mix_seed(master, c, r)
            yield f"c{c:05d}-r{r:03d}", cfg


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _grid_job(job):
    run_id, raw = job
    row = {k: "" for k in GRID_COLUMNS}
    row["run_id"] = run_id
    s, t = raw.get("sampler", {}), raw.get("target", {})
    row.update(sampler=s.get("name"), target=t.get("name"), epsilon=s.get("epsilon"), L=s.get("L"),
               lambda_refresh=s.get("lambda_refresh"), balancing=s.get("balancing"), seed=raw["run"]["seed"])
    try:
        cfg = normalize_run_config(raw)
        s = cfg["sampler"]
        row.update(L=s["L"], lambda_refresh=s["lambda_refresh"], balancing=s["balancing"])
        result, m = execute(cfg)
        c = result.counters
        row.update(n_jumps=c.n_events, grad_evals=c.grad_evals, flip_count=c.flips, bounce_count=c.bounces,
                   refresh_count=c.refreshes, jump_count=c.jumps, wall_time_s=m.wall_time_s,
                   min_ess=m.min_marginal_ess, ess_per_kgrad=m.ess_per_kilo_grad, max_w2=m.max_marginal_w2,
                   flip_proportion=m.flip_proportion, status="ok")
    except (ConfigError, NumericalError, FormatError, DomainError, ValueError, ArithmeticError, RuntimeError) as exc:
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
    return {k: _fmt(v) for k, v in row.items()}


def run_grid(grid: dict, parallelism: int = 1) -> list:
    jobs = list(expand_grid(grid))
    if parallelism <= 1:
        rows = [_grid_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_grid_job, jobs, chunksize=1))
    rows.sort(key=lambda r: r["run_id"])
    return rows


def write_grid_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GRID_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_grid(grid: dict, overrides=()) -> int:
    grid = copy.deepcopy(grid)
    unknown = set(grid) - {"base", "axes", "replicates", "parallelism", "output"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    grid["base"] = _merge(RUN_DEFAULTS, grid.get("base", {}))
    for path, value in overrides:
        head = path.split(".", 1)[0]
        if head in ("parallelism", "replicates", "output"):
            grid[head] = value
        elif head == "base":
            set_path(grid["base"], path.split(".", 1)[1], value)
        else:
            set_path(grid["base"], path, value)
    par = grid.get("parallelism", 1)
    if isinstance(par, bool) or not isinstance(par, int) or par < 1:
        raise ConfigError("parallelism", "must be a positive integer")
    out = grid.get("output") or os.path.join(grid["base"]["output"]["dir"] or ".", "grid.csv")
    rows = run_grid(grid, par)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_grid_csv(out, rows)
    n_err = sum(r["status"] == "error" for r in rows)
    logger.info("wrote %d rows to %s (%d errors)", len(rows), out, n_err)
    return EXIT_OK


def cmd_diagnose(samples_path, reference_path=None, squared=False, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    samples = diagnostics.read_samples(samples_path)
    reference = diagnostics.read_samples(reference_path) if reference_path else None
    if reference is not None and reference.shape[1] != samples.shape[1]:
        raise ConfigError("--reference", f"dimension {reference.shape[1]} does not match samples ({samples.shape[1]})")
    from .samplers import Counters

    m = diagnostics.compute_metrics(samples, Counters(), reference, squared=squared)
    out = {
        "min_marginal_ess": m.min_marginal_ess,
        "marginal_ess": m.marginal_ess,
        "max_marginal_w2": m.max_marginal_w2,
        "marginal_w2": m.marginal_w2,
        "per_dim_means": m.per_dim_means,
        "n_samples": m.n_samples,
    }
    json.dump(out, stream, indent=2, sort_keys=True)
    stream.write("\n")
    return EXIT_OK


def cmd_selftest(level: str = "quick", stream=None) -> int:
    from .selftest import run_selftest

    return run_selftest(level, stream=sys.stdout if stream is None else stream)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rebalance", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sample", help="run one sampler configuration")
    p.add_argument("--config", required=True)
    p = sub.add_parser("grid", help="run a hyperparameter grid with replicates")
    p.add_argument("--config", required=True)
    p = sub.add_parser("diagnose", help="recompute ESS / W2 from stored samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--reference")
    p.add_argument("--squared", action="store_true", help="include squared marginals in the ESS minimum")
    p = sub.add_parser("selftest", help="run built-in invariant checks")
    p.add_argument("--full", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("sample", "grid"):
            overrides = parse_overrides(extra)
            raw = _load_json(args.config)
            if args.command == "sample":
                return cmd_sample(raw, overrides)
            return cmd_grid(raw, overrides)
        if extra:
            parser.error(f"unrecognized arguments: {' '.join(extra)}")
        if args.command == "diagnose":
            return cmd_diagnose(args.samples, args.reference, args.squared)
        return cmd_selftest("full" if args.full else "quick")
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FormatError as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

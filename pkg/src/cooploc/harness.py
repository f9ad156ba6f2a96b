"""Monte-Carlo experiment runner: seeded realizations, all algorithms, persistence.

For realization m, independent PRNG streams are derived by hashing
(master_seed, m, stream tag), so the scenario draw never depends on
which algorithms run, and every algorithm within a realization sees the
identical scenario and (where applicable) the identical random initial
stack. Outputs under the run directory:

    manifest.json     full config, PRNG identification, failure flags
    scenarios/*.json  one scenario per realization
    runs/*.json       one run record per (realization, algorithm)
    cdf.csv           error CDF per algorithm on a shared grid
    residual.csv      averaged residual per algorithm per iteration
"""

import dataclasses
import datetime
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import RunRecord
from .network import DeploymentConfig, ErrorModel, Scenario, generate_scenario
from .solvers import (
    NumericalFailureError,
    SolverConfig,
    solve_pocs,
    solve_ppb,
    solve_ppm,
)

ALGORITHMS = ("ppm", "pocs", "ppb")
CONFIG_FORMAT = "cooploc-config-v1"

STREAM_TAGS = {"scenario": 0, "init": 1}
PRNG_INFO = {
    "bit_generator": "PCG64",
    "seeding": "numpy SeedSequence with entropy [master_seed, realization_index, stream_tag]",
    "stream_tags": STREAM_TAGS,
}


class ConfigError(ValueError):
    """A config document is malformed; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    error: ErrorModel = field(default_factory=ErrorModel)
    solver: SolverConfig = field(default_factory=SolverConfig)
    solver_overrides: dict = field(default_factory=dict)
    algorithms: tuple[str, ...] = ALGORITHMS
    n_realizations: int = 100
    master_seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if not self.algorithms:
            raise ValueError("algorithms must be nonempty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        for a in self.solver_overrides:
            if a not in ALGORITHMS:
                raise ValueError(f"solver_overrides key {a!r} is not an algorithm")

    def solver_for(self, algorithm: str) -> SolverConfig:
        return self.solver_overrides.get(algorithm, self.solver)


def stream_rng(master_seed: int, m: int, tag: str) -> np.random.Generator:
    """Independent generator for (realization m, purpose tag)."""
    seq = np.random.SeedSequence([master_seed, m, STREAM_TAGS[tag]])
    return np.random.Generator(np.random.PCG64(seq))


# ---------------------------------------------------------------------------
# Config documents


_REQUIRED = object()


def _pick(section: dict, section_name: str, key: str, kinds, default=_REQUIRED):
    if key not in section or (section[key] is None and default is not _REQUIRED):
        if default is _REQUIRED:
            raise ConfigError(f"{section_name}.{key}: missing required field")
        return default
    value = section[key]
    if kinds is not None and not isinstance(value, kinds):
        raise ConfigError(
            f"{section_name}.{key}: expected {getattr(kinds, '__name__', kinds)}, "
            f"got {type(value).__name__}"
        )
    return value


def _reject_unknown(section: dict, section_name: str, known: set):
    for key in section:
        if key not in known:
            raise ConfigError(f"{section_name}.{key}: unknown field")


def _deployment_from_dict(doc: dict) -> DeploymentConfig:
    _reject_unknown(
        doc,
        "deployment",
        {"field_size", "n_targets", "comm_range", "seed", "reference_layout", "target_layout"},
    )
    kwargs = {
        "field_size": float(_pick(doc, "deployment", "field_size", (int, float), 100.0)),
        "n_targets": _pick(doc, "deployment", "n_targets", int, 20),
        "comm_range": float(_pick(doc, "deployment", "comm_range", (int, float), 40.0)),
        "seed": _pick(doc, "deployment", "seed", int, 0),
        "reference_layout": _pick(doc, "deployment", "reference_layout", list, None),
        "target_layout": _pick(doc, "deployment", "target_layout", list, None),
    }
    try:
        return DeploymentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"deployment: {exc}") from exc


def _error_from_dict(doc: dict) -> ErrorModel:
    _reject_unknown(doc, "error", {"sigma", "p_nlos", "nlos_max", "mode"})
    kwargs = {
        "sigma": float(_pick(doc, "error", "sigma", (int, float), 1.0)),
        "p_nlos": float(_pick(doc, "error", "p_nlos", (int, float), 0.0)),
        "nlos_max": float(_pick(doc, "error", "nlos_max", (int, float), 0.0)),
        "mode": _pick(doc, "error", "mode", str, "los"),
    }
    try:
        return ErrorModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"error: {exc}") from exc


def _solver_from_dict(doc: dict, section_name: str, base: SolverConfig | None = None) -> SolverConfig:
    _reject_unknown(doc, section_name, {"max_iterations", "stop_tol", "initializer", "diagnostics"})
    defaults = base or SolverConfig()
    kwargs = {
        "max_iterations": _pick(doc, section_name, "max_iterations", int, defaults.max_iterations),
        "stop_tol": float(_pick(doc, section_name, "stop_tol", (int, float), defaults.stop_tol)),
        "initializer": _pick(doc, section_name, "initializer", str, defaults.initializer),
        "diagnostics": _pick(doc, section_name, "diagnostics", bool, defaults.diagnostics),
    }
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section_name}: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    _reject_unknown(
        doc,
        "config",
        {
            "deployment",
            "error",
            "solver",
            "solver_overrides",
            "algorithms",
            "n_realizations",
            "master_seed",
            "output_dir",
        },
    )
    for name in ("deployment", "error", "solver", "solver_overrides"):
        if name in doc and not isinstance(doc[name], dict):
            raise ConfigError(f"{name}: expected an object")
    solver = _solver_from_dict(doc.get("solver", {}), "solver")
    overrides = {}
    for alg, sub in doc.get("solver_overrides", {}).items():
        if not isinstance(sub, dict):
            raise ConfigError(f"solver_overrides.{alg}: expected an object")
        overrides[alg] = _solver_from_dict(sub, f"solver_overrides.{alg}", base=solver)
    algorithms = _pick(doc, "config", "algorithms", list, list(ALGORITHMS))
    try:
        return ExperimentConfig(
            deployment=_deployment_from_dict(doc.get("deployment", {})),
            error=_error_from_dict(doc.get("error", {})),
            solver=solver,
            solver_overrides=overrides,
            algorithms=tuple(algorithms),
            n_realizations=_pick(doc, "config", "n_realizations", int, 100),
            master_seed=_pick(doc, "config", "master_seed", int, 0),
            output_dir=_pick(doc, "config", "output_dir", str, None),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    dep = dataclasses.asdict(cfg.deployment)
    for key in ("reference_layout", "target_layout"):
        if dep[key] is not None:
            dep[key] = [list(map(float, row)) for row in dep[key]]
    return {
        "deployment": dep,
        "error": dataclasses.asdict(cfg.error),
        "solver": dataclasses.asdict(cfg.solver),
        "solver_overrides": {a: dataclasses.asdict(s) for a, s in cfg.solver_overrides.items()},
        "algorithms": list(cfg.algorithms),
        "n_realizations": cfg.n_realizations,
        "master_seed": cfg.master_seed,
        "output_dir": cfg.output_dir,
    }


# ---------------------------------------------------------------------------
# Running


def run_realization(cfg: ExperimentConfig, m: int):
    """Generate realization m and run every selected algorithm on it.

    Returns (scenario, records, failures): records maps algorithm name
    to a RunRecord; failures maps algorithm name to an error message.
    """
    scenario = generate_scenario(cfg.deployment, cfg.error, stream_rng(cfg.master_seed, m, "scenario"))
    seed_key = (cfg.master_seed, m, STREAM_TAGS["scenario"])

    x0 = None
    if any(cfg.solver_for(a).initializer == "random" for a in cfg.algorithms if a != "ppb"):
        rng_init = stream_rng(cfg.master_seed, m, "init")
        lo = scenario.references.min(axis=0)
        hi = scenario.references.max(axis=0)
        x0 = rng_init.uniform(lo, hi, size=(scenario.n_targets, scenario.dimension))

    records, failures = {}, {}
    for alg in cfg.algorithms:
        solver_cfg = cfg.solver_for(alg)
        try:
            if alg == "ppm":
                est, trace = solve_ppm(scenario, solver_cfg, x0=x0 if solver_cfg.initializer == "random" else None)
            elif alg == "pocs":
                est, trace = solve_pocs(scenario, solver_cfg, x0=x0 if solver_cfg.initializer == "random" else None)
            else:
                est, trace = solve_ppb(scenario, solver_cfg)
        except NumericalFailureError as exc:
            failures[alg] = str(exc)
            continue
        records[alg] = RunRecord(
            realization=m,
            scenario_seed=seed_key,
            algorithm=alg,
            estimates=est,
            errors=analysis.errors_from_estimates(est, scenario.targets_true),
            trace=trace,
        )
    return scenario, records, failures


def _realization_job(payload):
    cfg, m = payload
    return m, run_realization(cfg, m)


def _aggregate_and_write(out: Path, ordered_algorithms, records_by_alg) -> dict:
    """Write cdf.csv and residual.csv; returns the file map for the manifest."""
    written = {}
    pooled = [r.errors for a in ordered_algorithms for r in records_by_alg.get(a, [])]
    if pooled:
        grid = analysis.default_grid(np.concatenate(pooled))
        cdf_curves, res_curves = {}, {}
        for a in ordered_algorithms:
            recs = records_by_alg.get(a, [])
            if not recs:
                continue
            cdf_curves[a] = analysis.empirical_cdf(analysis.position_errors(recs), grid)
            res_curves[a] = analysis.average_residual([r.trace for r in recs], recs[0].n_targets)
        analysis.write_cdf_csv(out / "cdf.csv", grid, cdf_curves)
        analysis.write_residual_csv(out / "residual.csv", res_curves)
        written = {"cdf": "cdf.csv", "residual": "residual.csv"}
    return written


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Run the full experiment and persist all outputs under cfg.output_dir.

    ``threads`` > 1 runs realizations in parallel processes (0 = one per
    CPU); outputs are identical whatever the setting, since every
    realization derives its own PRNG streams. Returns the manifest.
    """
    if cfg.output_dir is None:
        raise ConfigError("output_dir: required to run an experiment (set it or pass --out)")
    out = Path(cfg.output_dir)
    manifest = {
        "config_format": CONFIG_FORMAT,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config_to_dict(cfg),
        "prng": PRNG_INFO,
        "failures": [],
        "aborted": False,
        "outputs": {},
    }
    try:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        (out / "scenarios").mkdir(parents=True, exist_ok=True)

        jobs = [(cfg, m) for m in range(1, cfg.n_realizations + 1)]
        if threads == 1:
            results = [_realization_job(j) for j in jobs]
        else:
            workers = threads if threads > 0 else (os.cpu_count() or 1)
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_realization_job, jobs))
        results.sort(key=lambda item: item[0])

        records_by_alg = {a: [] for a in cfg.algorithms}
        run_files, scenario_files = [], []
        for m, (scenario, records, failures) in results:
            scenario_path = out / "scenarios" / f"m{m:05d}.json"
            scenario.save(scenario_path)
            scenario_files.append(str(scenario_path.relative_to(out)))
            for alg in cfg.algorithms:
                if alg in failures:
                    manifest["failures"].append({"m": m, "algorithm": alg, "error": failures[alg]})
                    continue
                record = records[alg]
                record_path = out / "runs" / f"m{m:05d}_{alg}.json"
                record.save(record_path)
                run_files.append(str(record_path.relative_to(out)))
                records_by_alg[alg].append(record)

        manifest["outputs"] = _aggregate_and_write(out, cfg.algorithms, records_by_alg)
        manifest["outputs"]["runs"] = run_files
        manifest["outputs"]["scenarios"] = scenario_files
    except OSError:
        manifest["aborted"] = True
        try:
            (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
        except OSError:
            pass
        raise
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def plot_data(run_dir, out_dir=None) -> dict:
    """Re-emit cdf.csv and residual.csv from the stored run records."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        ordered = list(json.loads(manifest_path.read_text())["config"]["algorithms"])
    else:
        ordered = list(ALGORITHMS)
    records_by_alg = {}
    for path in sorted((run_dir / "runs").glob("m*.json")):
        record = RunRecord.load(path)
        records_by_alg.setdefault(record.algorithm, []).append(record)
    for recs in records_by_alg.values():
        recs.sort(key=lambda r: r.realization)
        if len({r.n_targets for r in recs}) > 1:
            raise ValueError("run records disagree on the number of targets")
    ordered = [a for a in ordered if a in records_by_alg] + sorted(
        a for a in records_by_alg if a not in ordered
    )
    return _aggregate_and_write(out, ordered, records_by_alg)

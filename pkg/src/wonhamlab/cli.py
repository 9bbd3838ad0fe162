"""Configuration-driven experiment runner.

One TOML config describes the model, the initial laws, and the numeric
parameters; a subcommand picks the experiment. Every run writes CSV
artifacts plus a manifest.json (config echo, seed, version, wall time,
and the error category when a run fails). With the seed fixed the CSV
artifacts are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .counterexample import (build_cyclic_model, cycle_table_rows,
                             exact_jump_filter, instability_demo)
from .csvio import write_csv
from .filtering import run_filter, run_smoother
from .markov import (GeneratorError, GeneratorMatrix, NotIrreducibleError,
                     decompose_classes, sample_path, validate_generator)
from .observation import (ObservationModel, noiseless_indicator_observation,
                          synthesize_observations)
from .seeding import check_seed, trial_rng
from .stability import (NotAbsolutelyContinuousError, bound_geo, bound_mu_row,
                        class_centroids, classify_class, check_identifiability,
                        lyapunov_estimate, prefactors)

SCHEMA_VERSION = 1
KINDS = ("filter-run", "stability", "bounds", "identify", "classify",
         "counterexample", "smoother-check")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


class ConfigInvalid(ValueError):
    """Raised with the offending field named in the message."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description (defaults filled in)."""

    kind: str
    Q: GeneratorMatrix | None
    model: ObservationModel | None
    nu: np.ndarray
    beta: np.ndarray
    T: float
    dt: float
    trials: int
    seed: int
    r_grid: tuple[float, ...]
    n_blocks: int
    n_intervals: int
    min_blocks: int
    out: str

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "model": None if self.Q is None else {
                "rates": self.Q.entries.tolist(),
                "labels": None if self.Q.labels is None else list(self.Q.labels),
                "h": self.model.h.tolist(),
                "sigma": self.model.sigma,
            },
            "init": {"nu": self.nu.tolist(), "beta": self.beta.tolist()},
            "run": {
                "T": self.T, "dt": self.dt, "trials": self.trials,
                "seed": self.seed, "r_grid": list(self.r_grid),
                "n_blocks": self.n_blocks, "n_intervals": self.n_intervals,
                "min_blocks": self.min_blocks, "out": self.out,
            },
        }


def _reject_unknown(table: dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigInvalid(f"unknown key {where}{unknown[0]}")


def _number(table: dict, key: str, where: str, default, *, minimum=None,
            strict: bool = False, integer: bool = False):
    if key not in table:
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(f"{where}{key} must be a number")
    if integer:
        if not isinstance(v, int):
            raise ConfigInvalid(f"{where}{key} must be an integer")
        v = int(v)
    else:
        v = float(v)
    if minimum is not None and (v < minimum or (strict and v == minimum)):
        rel = ">" if strict else ">="
        raise ConfigInvalid(f"{where}{key} must be {rel} {minimum}")
    return v


def _vector(value, key: str):
    if not isinstance(value, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        raise ConfigInvalid(f"{key} must be an array of numbers")
    return np.asarray(value, dtype=float)


def _distribution(table: dict, key: str, n: int, default):
    if key not in table:
        return default
    p = _vector(table[key], f"init.{key}")
    if p.shape[0] != n:
        raise ConfigInvalid(f"init.{key} has length {p.shape[0]}, expected {n}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ConfigInvalid(f"init.{key} is not a probability vector")
    return p


def _parse_model(table: dict):
    _reject_unknown(table, ("rates", "h", "sigma", "labels"), "model.")
    if "rates" not in table:
        raise ConfigInvalid("model.rates is required")
    rows = table["rates"]
    if not isinstance(rows, list) or not rows:
        raise ConfigInvalid("model.rates must be an array of rows")
    entries = [list(_vector(row, "model.rates")) for row in rows]
    labels = None
    if "labels" in table:
        labels = table["labels"]
        if (not isinstance(labels, list)
                or not all(isinstance(s, str) for s in labels)):
            raise ConfigInvalid("model.labels must be an array of strings")
    try:
        Q = validate_generator(entries, labels=labels)
    except (GeneratorError, ValueError) as exc:
        raise ConfigInvalid(f"model.rates: {exc}") from exc
    if "h" not in table:
        raise ConfigInvalid("model.h is required")
    h = _vector(table["h"], "model.h")
    if h.shape[0] != Q.n:
        raise ConfigInvalid(f"model.h has length {h.shape[0]}, expected {Q.n}")
    sigma = _number(table, "sigma", "model.", 1.0, minimum=0.0, strict=True)
    try:
        model = ObservationModel(h=h, sigma=sigma)
    except ValueError as exc:
        raise ConfigInvalid(f"model: {exc}") from exc
    return Q, model


def validate_config(raw: str, kind: str) -> ExperimentConfig:
    """Parse and validate a TOML config for one experiment kind.

    Unknown keys are rejected; defaults: sigma = 1, dt = 1e-3,
    trials = 100, seed = 0, T = 10, nu = beta = uniform. The model table
    is required except for the counterexample kind, which always runs
    the fixed 4-state cycle.
    """
    try:
        data = tomllib.loads(raw)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"TOML parse error: {exc}") from exc
    _reject_unknown(data, ("model", "init", "run"), "")
    for name in ("model", "init", "run"):
        if name in data and not isinstance(data[name], dict):
            raise ConfigInvalid(f"{name} must be a table")

    if kind == "counterexample":
        cyc = build_cyclic_model()
        if "model" in data:
            Q_cfg, _ = _parse_model(data["model"])
            if Q_cfg.n != 4 or not np.allclose(Q_cfg.entries, cyc.Q.entries,
                                               atol=0.0):
                raise ConfigInvalid(
                    "model.rates: the counterexample runs the fixed 4-state cycle")
        Q, model = cyc.Q, ObservationModel(h=np.asarray(cyc.h, dtype=float),
                                           sigma=1.0)
        n = 4
    else:
        if "model" not in data:
            raise ConfigInvalid("model table is required")
        Q, model = _parse_model(data["model"])
        n = Q.n

    init = data.get("init", {})
    _reject_unknown(init, ("nu", "beta"), "init.")
    uniform = np.full(n, 1.0 / n)
    nu = _distribution(init, "nu", n, uniform)
    beta = _distribution(init, "beta", n, uniform)

    run = data.get("run", {})
    _reject_unknown(run, ("kind", "T", "dt", "trials", "seed", "r_grid",
                          "n_blocks", "n_intervals", "min_blocks", "out"),
                    "run.")
    if "kind" in run:
        if run["kind"] not in KINDS:
            raise ConfigInvalid(f"run.kind must be one of {', '.join(KINDS)}")
        if run["kind"] != kind:
            raise ConfigInvalid(
                f"run.kind is {run['kind']!r} but the {kind} command was invoked")
    T = _number(run, "T", "run.", 10.0, minimum=0.0, strict=True)
    dt = _number(run, "dt", "run.", 1e-3, minimum=0.0, strict=True)
    trials = _number(run, "trials", "run.", 100, minimum=1, integer=True)
    seed = _number(run, "seed", "run.", 0, integer=True)
    try:
        check_seed(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"run.seed: {exc}") from exc
    r_grid = run.get("r_grid", [1.0, 2.0])
    r_grid = tuple(float(r) for r in _vector(r_grid, "run.r_grid"))
    if any(r <= 0 for r in r_grid):
        raise ConfigInvalid("run.r_grid entries must be > 0")
    n_blocks = _number(run, "n_blocks", "run.", 50, minimum=1, integer=True)
    n_intervals = _number(run, "n_intervals", "run.", 12, minimum=1,
                          integer=True)
    min_blocks = _number(run, "min_blocks", "run.", 50, minimum=1,
                         integer=True)
    out = run.get("out", "out")
    if not isinstance(out, str):
        raise ConfigInvalid("run.out must be a string")
    return ExperimentConfig(kind=kind, Q=Q, model=model, nu=nu, beta=beta,
                            T=T, dt=dt, trials=trials, seed=seed,
                            r_grid=r_grid, n_blocks=n_blocks,
                            n_intervals=n_intervals, min_blocks=min_blocks,
                            out=out)


# ---------------------------------------------------------------------------
# experiment dispatchers; each returns (artifact names, summary lines)
# ---------------------------------------------------------------------------

def _write_text(outdir: Path, name: str, text: str) -> None:
    (outdir / name).write_text(text, encoding="utf-8", newline="\n")


def _run_filter_run(cfg: ExperimentConfig, outdir: Path):
    rng = trial_rng(cfg.seed, 0)
    path = sample_path(cfg.Q, cfg.nu, cfg.T, rng)
    obs = synthesize_observations(path, cfg.model, cfg.dt, rng)
    traj = run_filter(cfg.nu, obs, cfg.Q, cfg.model)
    traj.to_csv(outdir / "filter.csv")
    obs.to_csv(outdir / "observations.csv")
    final = ", ".join(repr(float(v)) for v in traj.final)
    lines = [f"steps = {obs.n_steps}", f"final law = [{final}]",
             f"jumps in path = {path.n_jumps}"]
    _write_text(outdir, "report.txt", "\n".join(lines) + "\n")
    return ["filter.csv", "observations.csv", "report.txt"], lines[:2]


def _run_stability(cfg: ExperimentConfig, outdir: Path):
    est = lyapunov_estimate(cfg.Q, cfg.model, cfg.nu, cfg.beta, cfg.T,
                            cfg.dt, cfg.trials, cfg.seed)
    write_csv(outdir / "slopes.csv", ["index", "slope"],
              ((i, s) for i, s in enumerate(est.slopes)))
    lines = [
        f"exponent = {est.exponent!r}",
        f"stderr = {est.stderr!r}",
        f"trials used = {est.trials_used} of {est.trials}",
        f"horizon = {est.T!r}, dt = {est.dt!r}",
        f"degenerate = {est.degenerate}",
    ]
    _write_text(outdir, "report.txt", "\n".join(lines) + "\n")
    return ["slopes.csv", "report.txt"], lines[:2]


def _run_bounds(cfg: ExperimentConfig, outdir: Path):
    try:
        b_row = bound_mu_row(cfg.Q)
    except NotIrreducibleError:
        b_row = float("nan")
    b_geo = bound_geo(cfg.Q)
    try:
        pf_a, pf_b = prefactors(cfg.nu, cfg.beta)
    except NotAbsolutelyContinuousError:
        pf_a, pf_b = float("inf"), float("inf")
    rows = [("bound_mu_row", b_row), ("bound_geo", b_geo),
            ("prefactor_a", pf_a), ("prefactor_b", pf_b)]
    write_csv(outdir / "bounds.csv", ["field", "value"], rows)
    lines = [f"{name} = {value!r}" for name, value in rows]
    _write_text(outdir, "report.txt", "\n".join(lines) + "\n")
    return ["bounds.csv", "report.txt"], lines


def _run_identify(cfg: ExperimentConfig, outdir: Path):
    decomp = decompose_classes(cfg.Q)
    report = check_identifiability(decomp, cfg.model)
    report.to_csv(outdir / "identifiability.csv")
    _write_text(outdir, "report.txt", report.to_text())
    lines = [f"classes = {decomp.n_classes}",
             f"satisfied = {report.satisfied}"]
    return ["identifiability.csv", "report.txt"], lines


def _run_classify(cfg: ExperimentConfig, outdir: Path):
    decomp = decompose_classes(cfg.Q)
    centroids = class_centroids(decomp, cfg.model, cfg.r_grid)
    state_class = np.empty(cfg.Q.n, dtype=np.int64)
    for c, members in enumerate(decomp.classes):
        state_class[members] = c
    header = ["trial", "true_class", "decided_class", "correct", "mean_stat"] \
        + [f"z_{s}" for s in range(len(cfg.r_grid))]
    rows = []
    hits = 0
    for i in range(cfg.trials):
        rng = trial_rng(cfg.seed, i)
        path = sample_path(cfg.Q, cfg.nu, cfg.T, rng)
        obs = synthesize_observations(path, cfg.model, cfg.dt, rng)
        res = classify_class(obs, decomp, cfg.model, cfg.r_grid,
                             min_blocks=cfg.min_blocks, centroids=centroids)
        true_c = int(state_class[path.states[0]])
        ok = res.class_index == true_c
        hits += ok
        rows.append((i, true_c, res.class_index, ok, *res.stats))
    write_csv(outdir / "classify.csv", header, rows)
    lines = [f"accuracy = {hits}/{cfg.trials}",
             f"classes = {decomp.n_classes}"]
    _write_text(outdir, "report.txt", "\n".join(lines) + "\n")
    return ["classify.csv", "report.txt"], lines


def _run_counterexample(cfg: ExperimentConfig, outdir: Path):
    cyc = build_cyclic_model()
    # table path drawn after the demo trials so the streams never collide
    rng = trial_rng(cfg.seed, cfg.trials)
    horizon = 4.0 * cfg.n_intervals
    path = sample_path(cyc.Q, cfg.nu, horizon, rng)
    jump_obs = noiseless_indicator_observation(path, cyc.indicator_states)
    traj = exact_jump_filter(cfg.nu, jump_obs)
    rows = list(cycle_table_rows(cfg.nu, traj, cfg.n_intervals))
    write_csv(outdir / "cycle_table.csv",
              ["interval", "y", "pi1", "pi2", "expected_pi1", "expected_pi2",
               "match"], rows)
    report = instability_demo(cfg.nu, cfg.beta, cfg.T, cfg.trials, cfg.seed)
    report.to_csv(outdir / "instability.csv")
    n_match = sum(1 for r in rows if r[6])
    lines = [
        f"table rows matching the closed-form cycle = {n_match}/{len(rows)}",
        f"expected gap = {report.margin!r}",
        f"persistent = {report.persistent}",
    ]
    _write_text(outdir, "report.txt", "\n".join(lines) + "\n")
    return ["cycle_table.csv", "instability.csv", "report.txt"], lines


def _run_smoother_check(cfg: ExperimentConfig, outdir: Path):
    rng = trial_rng(cfg.seed, 0)
    path = sample_path(cfg.Q, cfg.nu, cfg.T, rng)
    obs = synthesize_observations(path, cfg.model, cfg.dt, rng)
    run = run_smoother(obs, cfg.Q, cfg.model, cfg.nu)
    run.to_csv(outdir / "smoother.csv")
    deltas = run.deltas
    b_geo = bound_geo(cfg.Q)
    times = np.arange(deltas.shape[0]) * cfg.dt
    excess = float((deltas - np.exp(b_geo * times)).max())
    lines = [
        f"final delta = {float(deltas[-1])!r}",
        f"max excess over exp(bound_geo t) = {excess!r}",
        f"floor fraction = {float(run.floor_fraction)!r}",
        f"floor dominated = {run.floor_dominated}",
    ]
    _write_text(outdir, "report.txt", "\n".join(lines) + "\n")
    return ["smoother.csv", "report.txt"], lines[:2]


_DISPATCH = {
    "filter-run": _run_filter_run,
    "stability": _run_stability,
    "bounds": _run_bounds,
    "identify": _run_identify,
    "classify": _run_classify,
    "counterexample": _run_counterexample,
    "smoother-check": _run_smoother_check,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wonhamlab",
        description="Filter stability experiments from a TOML config.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None,
                       help="output directory (overrides run.out)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker hint recorded in the manifest; the "
                            "computation is vectorized in-process")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the summary lines on stdout")
    return parser


def _write_manifest(outdir: Path, payload: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=True)
    (outdir / "manifest.json").write_text(text + "\n", encoding="utf-8",
                                          newline="\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.monotonic()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "kind": args.kind,
        "threads": args.threads,
        "status": "error",
        "error_category": None,
        "error_message": None,
        "config": None,
        "seed": None,
        "artifacts": [],
    }
    outdir = Path(args.out) if args.out is not None else Path("out")

    def finish(code: int) -> int:
        manifest["wall_time_s"] = time.monotonic() - started
        _write_manifest(outdir, manifest)
        if not args.quiet and manifest["status"] == "error":
            print(f"error [{manifest['error_category']}]: "
                  f"{manifest['error_message']}", file=sys.stderr)
        return code

    try:
        raw = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        manifest["error_category"] = "ConfigInvalid"
        manifest["error_message"] = f"cannot read config: {exc}"
        return finish(EXIT_CONFIG)
    try:
        cfg = validate_config(raw, args.kind)
        if args.seed is not None:
            check_seed(args.seed)
            cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    except (ConfigInvalid, TypeError, ValueError) as exc:
        manifest["error_category"] = "ConfigInvalid"
        manifest["error_message"] = str(exc)
        return finish(EXIT_CONFIG)

    if args.out is None:
        outdir = Path(cfg.out)
    manifest["config"] = cfg.echo()
    manifest["seed"] = cfg.seed
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        artifacts, lines = _DISPATCH[cfg.kind](cfg, outdir)
    except Exception as exc:  # noqa: BLE001 - category goes to the manifest
        manifest["error_category"] = type(exc).__name__
        manifest["error_message"] = str(exc)
        return finish(EXIT_FAILED)
    manifest["status"] = "ok"
    manifest["artifacts"] = artifacts
    code = finish(EXIT_OK)
    if not args.quiet:
        for line in lines:
            print(line)
        print(f"artifacts in {outdir}: {', '.join(artifacts)}")
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line front end.

One executable, five modes:

* ``simulate``       trajectory checkpoint table plus exponent histograms
* ``exact-density``  level-density and joint-density-slice tables
* ``gue-source``     eigenvalue samples of the matched source ensemble
* ``validate``       reduced-scale cross-module checks with pass/fail lines
* ``phase-diagram``  grid of largest-exponent estimates and stability labels

Configuration comes from flags, or from a JSON file whose keys mirror the
flag names (underscores for dashes); flags override the file.  The seed is
mandatory so no run ever depends on the wall clock.  Exit codes: 0 success,
1 runtime or validation failure, 2 configuration error.

Outputs are plain tables (CSV by default, JSON on request) written into the
output directory with fixed names and fixed column orders, and are
bit-identical for identical configurations on one platform.  Failures of
individual trajectories or grid cells become rows or companion files, not
aborts.  Execution is serial; the per-trajectory seeding would allow any
degree of parallelism without changing the output bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import exact, flow, spectral
from .errors import ConfigError, IsoflowError, ParameterError
from .streams import substream
from .validation import run_validation

MODES = ("simulate", "exact-density", "gue-source", "validate", "phase-diagram")
FORMATS = ("csv", "json")
SCHEMES = ("ito", "stratonovich")

_GUE_STREAM_TAG = 201

_DEFAULTS = {
    "mode": None,
    "n": 2,
    "beta": 2,
    "sigma": None,
    "tau": 0.0,
    "mu": 0.0,
    "t_final": 1.0,
    "steps": 400,
    "trajectories": 100,
    "checkpoints": None,
    "scheme": "ito",
    "qr_period": None,
    "seed": None,
    "out": "isoflow_out",
    "format": "csv",
    "tau_min": -0.9,
    "tau_max": 0.9,
    "mu_min": 0.0,
    "mu_max": 1.0,
    "grid": 21,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run configuration; every field validated."""

    mode: str
    dim: int
    beta: int
    sigma: float
    tau: float
    mu: float
    t_final: float
    n_steps: int
    n_trajectories: int
    checkpoints: Optional[tuple[float, ...]]
    scheme: str
    qr_period: Optional[int]
    seed: int
    out: Path
    fmt: str
    tau_range: tuple[float, float]
    mu_range: tuple[float, float]
    resolution: int

    def flow_params(self) -> flow.FlowParams:
        return flow.FlowParams.of(self.dim, self.beta, self.tau, self.sigma, self.mu)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isoflow",
        description="Simulate isotropic multiplicative matrix flows and "
                    "evaluate their exact spectral laws.",
    )
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--n", type=int, help="matrix dimension")
    parser.add_argument("--beta", type=int, choices=(1, 2),
                        help="1 real ensemble, 2 complex ensemble")
    parser.add_argument("--sigma", type=float,
                        help="noise amplitude (default 1.0; phase-diagram "
                             "defaults to sqrt(1/n))")
    parser.add_argument("--tau", type=float, help="symmetry parameter in [-1, 1]")
    parser.add_argument("--mu", type=float, help="deterministic contraction rate")
    parser.add_argument("--t-final", type=float, help="total integration time")
    parser.add_argument("--steps", type=int, help="number of time steps")
    parser.add_argument("--trajectories", type=int,
                        help="trajectory count (or sample count for gue-source)")
    parser.add_argument("--checkpoints", type=str,
                        help="comma-separated output times in (0, t-final]")
    parser.add_argument("--scheme", choices=SCHEMES)
    parser.add_argument("--qr-period", type=int,
                        help="steps between renormalizations (default: automatic)")
    parser.add_argument("--seed", type=int, help="master seed (required)")
    parser.add_argument("--out", type=str, help="output directory")
    parser.add_argument("--format", choices=FORMATS, dest="format")
    parser.add_argument("--config", type=str, help="JSON file mirroring the flags")
    parser.add_argument("--tau-min", type=float, help="phase-diagram grid bound")
    parser.add_argument("--tau-max", type=float, help="phase-diagram grid bound")
    parser.add_argument("--mu-min", type=float, help="phase-diagram grid bound")
    parser.add_argument("--mu-max", type=float, help="phase-diagram grid bound")
    parser.add_argument("--grid", type=int, help="phase-diagram grid points per axis")
    return parser


def _load_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = sorted(set(data) - set(_DEFAULTS))
    if unknown:
        raise ConfigError(f"config: unknown keys {', '.join(unknown)}")
    return data


def _parse_checkpoints(raw, t_final: float) -> Optional[tuple[float, ...]]:
    if raw is None:
        return None
    if isinstance(raw, str):
        parts = [p for p in raw.split(",") if p.strip()]
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"checkpoints: {exc}") from exc
    elif isinstance(raw, (list, tuple)):
        values = [float(v) for v in raw]
    else:
        raise ConfigError("checkpoints: expected a comma list or JSON array")
    if not values:
        return None
    if any(not (0.0 < v <= t_final) for v in values):
        raise ConfigError("checkpoints: every time must lie in (0, t-final]")
    return tuple(sorted(set(values)))


def _positive(name: str, value, minimum=1) -> int:
    try:
        out = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected an integer") from exc
    if out < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}")
    return out


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge flags over the optional config file and validate every field."""
    file_values = _load_file(args.config) if args.config else {}

    def pick(key: str):
        flag = getattr(args, key, None)
        if flag is not None:
            return flag
        if key in file_values:
            return file_values[key]
        return _DEFAULTS[key]

    mode = pick("mode")
    if mode not in MODES:
        raise ConfigError(f"mode: required, one of {', '.join(MODES)}")
    seed = pick("seed")
    if seed is None:
        raise ConfigError("seed: required (runs never seed from the wall clock)")
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed: expected an integer") from exc
    if seed < 0:
        raise ConfigError("seed: must be non-negative")

    beta = pick("beta")
    if beta not in (1, 2):
        raise ConfigError("beta: must be 1 or 2")
    dim = _positive("n", pick("n"))
    try:
        t_final = float(pick("t_final"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("t-final: expected a number") from exc
    if not t_final > 0:
        raise ConfigError("t-final: must be positive")
    n_steps = _positive("steps", pick("steps"))
    n_trajectories = _positive("trajectories", pick("trajectories"))
    scheme = pick("scheme")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme: must be one of {', '.join(SCHEMES)}")
    fmt = pick("format")
    if fmt not in FORMATS:
        raise ConfigError(f"format: must be one of {', '.join(FORMATS)}")
    qr_period = pick("qr_period")
    if qr_period is not None:
        qr_period = _positive("qr-period", qr_period)

    sigma = pick("sigma")
    if sigma is None:
        sigma = float(np.sqrt(1.0 / dim)) if mode == "phase-diagram" else 1.0
    tau = pick("tau")
    mu = pick("mu")
    try:
        params = flow.FlowParams.of(dim, beta, float(tau), float(sigma), float(mu))
    except (ParameterError, TypeError, ValueError) as exc:
        raise ConfigError(f"n/beta/tau/sigma/mu: {exc}") from exc

    checkpoints = _parse_checkpoints(pick("checkpoints"), t_final)

    resolution = _positive("grid", pick("grid"), minimum=2)
    try:
        tau_range = (float(pick("tau_min")), float(pick("tau_max")))
        mu_range = (float(pick("mu_min")), float(pick("mu_max")))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"tau-min/tau-max/mu-min/mu-max: {exc}") from exc
    if not (-1.0 < tau_range[0] <= tau_range[1] < 1.0):
        raise ConfigError("tau-min/tau-max: grid must lie inside (-1, 1)")
    if not mu_range[0] <= mu_range[1]:
        raise ConfigError("mu-min/mu-max: need mu-min <= mu-max")

    if mode in ("exact-density", "gue-source"):
        if beta != 2:
            raise ConfigError(f"beta: {mode} mode needs the complex ensemble (beta=2)")
        if not params.kappa > 0:
            raise ConfigError(f"sigma/tau: {mode} mode needs sigma > 0 and tau > -1")

    return ExperimentConfig(
        mode=mode, dim=dim, beta=beta, sigma=float(sigma), tau=float(tau),
        mu=float(mu), t_final=t_final, n_steps=n_steps,
        n_trajectories=n_trajectories, checkpoints=checkpoints, scheme=scheme,
        qr_period=qr_period, seed=seed, out=Path(pick("out")), fmt=fmt,
        tau_range=tau_range, mu_range=mu_range, resolution=resolution,
    )


def _cell_text(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_artifact(directory: Path, name: str, columns: Sequence[str],
                    rows: Sequence[Sequence], fmt: str) -> Path:
    if fmt == "csv":
        path = directory / f"{name}.csv"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell_text(v) for v in row])
    else:
        path = directory / f"{name}.json"
        payload = {"columns": list(columns),
                   "rows": [[_plain(v) for v in row] for row in rows]}
        with path.open("w") as handle:
            json.dump(payload, handle, separators=(",", ":"))
            handle.write("\n")
    return path


def _plain(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return str(value)


def _mode_simulate(cfg: ExperimentConfig) -> list[tuple[str, list[str], list]]:
    result = flow.run_ensemble(
        cfg.flow_params(), cfg.t_final, cfg.n_steps, cfg.n_trajectories,
        scheme=cfg.scheme, qr_period=cfg.qr_period, seed=cfg.seed,
        checkpoints=cfg.checkpoints,
    )
    rows = []
    n_check, n_traj, width = result.exponents.shape
    for m in range(n_traj):
        if result.failed[m]:
            continue
        tid = int(result.trajectory_ids[m])
        for c in range(n_check):
            t = float(result.times[c])
            for k in range(width):
                rows.append((tid, t, k + 1, float(result.exponents[c, m, k])))

    hist_rows = []
    final = result.exponents[-1, ~result.failed, :]
    if final.shape[0] > 0:
        for k in range(width):
            counts, edges = np.histogram(final[:, k], bins=30)
            total = counts.sum()
            for b in range(counts.size):
                w = edges[b + 1] - edges[b]
                density = counts[b] / (total * w) if total > 0 and w > 0 else 0.0
                hist_rows.append((k + 1, float(edges[b]), float(edges[b + 1]),
                                  int(counts[b]), float(density)))

    fail_rows = []
    for m in np.flatnonzero(result.failed):
        tid = int(result.trajectory_ids[m])
        message = next((s for s in result.messages
                        if s.startswith(f"trajectory {tid} ")), "failed")
        fail_rows.append((tid, message))

    return [
        ("trajectories", ["trajectory_id", "t", "k", "lambda"], rows),
        ("histogram", ["k", "bin_left", "bin_right", "count", "density"], hist_rows),
        ("failures", ["trajectory_id", "message"], fail_rows),
    ]


def _mode_exact_density(cfg: ExperimentConfig) -> list[tuple[str, list[str], list]]:
    model = exact.ExactModel.from_flow(cfg.flow_params(), cfg.t_final)
    lo, hi = model.support_box(pad=6.0)
    grid = np.linspace(lo, hi, 201)

    kernel = exact.build_kernel(model)
    dens = exact.level_density(grid, kernel)
    density_rows = [(float(x), float(r)) for x, r in zip(grid, dens)]

    pins = model.means
    points = np.tile(pins, (grid.size, 1))
    points[:, -1] = grid
    logs = exact.jpdf_log_batch(points, model)
    slice_rows = [(float(x), float(np.exp(v))) for x, v in zip(grid, logs)]

    return [
        ("level_density", ["x", "rho"], density_rows),
        ("jpdf_slice", ["x", "rho"], slice_rows),
    ]


def _mode_gue_source(cfg: ExperimentConfig) -> list[tuple[str, list[str], list]]:
    rng = substream(cfg.seed, _GUE_STREAM_TAG)
    samples = exact.sample_gue_external_source(
        cfg.flow_params(), cfg.t_final, rng, count=cfg.n_trajectories)
    rows = []
    for sid in range(samples.shape[0]):
        for k in range(samples.shape[1]):
            rows.append((sid, k + 1, float(samples[sid, k])))
    return [("samples", ["sample_id", "k", "lambda"], rows)]


def _mode_validate(cfg: ExperimentConfig) -> tuple[list, bool]:
    report = run_validation(cfg.flow_params(), cfg.t_final, cfg.seed)
    rows = [(r.name, "pass" if r.passed else "fail", r.measured, r.tolerance,
             r.detail) for r in report]
    for r in report:
        print(f"{'pass' if r.passed else 'FAIL'}  {r.name}: "
              f"measured {r.measured:.3e} vs tolerance {r.tolerance:.3e}")
    ok = all(r.passed for r in report)
    artifacts = [("report", ["check", "passed", "measured", "tolerance", "detail"],
                  rows)]
    return artifacts, ok


def _mode_phase_diagram(cfg: ExperimentConfig) -> list[tuple[str, list[str], list]]:
    taus = np.linspace(cfg.tau_range[0], cfg.tau_range[1], cfg.resolution)
    mus = np.linspace(cfg.mu_range[0], cfg.mu_range[1], cfg.resolution)
    rows = []
    cell = 0
    for tau in taus:
        for mu in mus:
            label = spectral.classify(spectral.PhasePoint(float(tau), float(mu)))
            base_id = cell * cfg.n_trajectories
            cell += 1
            try:
                params = flow.FlowParams.of(cfg.dim, cfg.beta, float(tau),
                                            cfg.sigma, float(mu))
                result = flow.run_ensemble(
                    params, cfg.t_final, cfg.n_steps, cfg.n_trajectories,
                    scheme=cfg.scheme, qr_period=cfg.qr_period, seed=cfg.seed,
                    top_only=True, base_trajectory_id=base_id)
            except IsoflowError as exc:
                rows.append((float(tau), float(mu), float("nan"), float("nan"),
                             label, f"failed: {exc}"))
                continue
            tops = result.exponents[-1, ~result.failed, 0] / cfg.t_final
            n_fail = int(result.failed.sum())
            if tops.size == 0:
                rows.append((float(tau), float(mu), float("nan"), float("nan"),
                             label, "failed: all trajectories degenerate"))
                continue
            mean = float(tops.mean())
            stderr = (float(tops.std(ddof=1) / np.sqrt(tops.size))
                      if tops.size > 1 else float("nan"))
            status = "ok" if n_fail == 0 else f"partial: {n_fail} trajectories failed"
            rows.append((float(tau), float(mu), mean, stderr, label, status))
    columns = ["tau", "mu", "lambda_max_mean", "lambda_max_stderr", "class",
               "status"]
    return [("phase_diagram", columns, rows)]


def run(cfg: ExperimentConfig) -> int:
    """Execute one configured experiment; returns the process exit code."""
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create {cfg.out}: {exc}") from exc

    ok = True
    if cfg.mode == "simulate":
        artifacts = _mode_simulate(cfg)
    elif cfg.mode == "exact-density":
        artifacts = _mode_exact_density(cfg)
    elif cfg.mode == "gue-source":
        artifacts = _mode_gue_source(cfg)
    elif cfg.mode == "validate":
        artifacts, ok = _mode_validate(cfg)
    else:
        artifacts = _mode_phase_diagram(cfg)

    for name, columns, rows in artifacts:
        path = _write_artifact(cfg.out, name, columns, rows, cfg.fmt)
        print(f"wrote {path}")
    return 0 if ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IsoflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

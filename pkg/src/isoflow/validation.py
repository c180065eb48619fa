"""Reduced-scale cross-module consistency checks.

Each check exercises one contract at a size that finishes in well under a
second, so the whole suite runs in a few seconds from the command line.
The full-scale versions of the same checks live in the test suite; this
module exists so a user can smoke-test an installation (or a parameter
regime) without pytest.

Checks that need the closed-form density run on a complex-ensemble copy of
the requested parameters, because the determinantal solution only exists
there; the substitution is recorded in the check detail.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import stats

from . import ensemble, exact, flow, quadrature, spectral
from .errors import IsoflowError
from .streams import substream

# Fixed substream tags, one per stochastic check, so adding a check never
# shifts the draws of another.
_TAG_COVARIANCE = 101
_TAG_ITO = 102
_TAG_QR = 103
_TAG_DRIFT = 104
_TAG_REPRO = 105
_TAG_GUE = 106
_TAG_MC = 107


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one named check: measured value against its tolerance."""

    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


def _result(name: str, measured: float, tolerance: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(measured <= tolerance), float(measured),
                       float(tolerance), detail)


def _covariance_check(params: flow.FlowParams, seed: int) -> CheckResult:
    ens = params.ensemble
    dim = min(ens.dim, 6)
    small = replace(ens, dim=dim)
    rng = substream(seed, _TAG_COVARIANCE)
    mats = ensemble.sample_batch(small, 20_000, rng)
    worst = 0.0
    pairs = [(0, 0, 0, 0), (0, 1, 0, 1), (0, 1, 1, 0), (0, 0, 1, 1)]
    if dim > 2:
        pairs.append((0, 1, 1, 2))
    for (i, j, k, l) in pairs:
        for conj in (False, True):
            est = ensemble.estimate_covariance(mats, i, j, k, l, conjugate_first=conj)
            exactv = ensemble.covariance(small, i, j, k, l, conjugate_first=conj)
            stderr = max(est.stderr, 1e-12)
            worst = max(worst, abs(est.value - exactv) / stderr)
    return _result("covariance_closed_form", worst, 4.0,
                   f"max deviation {worst:.2f} stderr over {2 * len(pairs)} components, dim {dim}")


def _ito_check(params: flow.FlowParams, seed: int) -> CheckResult:
    ens = params.ensemble
    dim = min(ens.dim, 6)
    small = replace(ens, dim=dim)
    rng = substream(seed, _TAG_ITO)
    mats = ensemble.sample_batch(small, 20_000, rng)
    sq = 0.5 * params.sigma ** 2 * np.einsum("mik,mkj->mij", mats, mats).real
    target = flow.ito_correction(replace(params, ensemble=small))
    diag = sq[:, np.arange(dim), np.arange(dim)].reshape(-1)
    off = sq[:, 0, 1]
    dev_diag = abs(diag.mean() - target) / max(diag.std(ddof=1) / np.sqrt(diag.size), 1e-12)
    dev_off = abs(off.mean()) / max(off.std(ddof=1) / np.sqrt(off.size), 1e-12)
    worst = max(dev_diag, dev_off)
    return _result("ito_correction_mc", worst, 4.0,
                   f"diagonal {dev_diag:.2f} stderr, off-diagonal {dev_off:.2f} stderr")


def _qr_direct_check(params: flow.FlowParams, t_final: float, seed: int) -> CheckResult:
    dim = min(params.dim, 4)
    small = replace(params, ensemble=replace(params.ensemble, dim=dim))
    kappa = max(small.kappa, 1e-6)
    t = min(t_final, 2.0 / kappa)
    worst = 0.0
    for tid in range(10):
        spectra = flow.run_trajectory(small, t, 200, seed=seed * 1000 + _TAG_QR,
                                      trajectory_id=tid)
        state = flow.initial_state(small)
        cursor = flow.NoiseCursor(small.ensemble,
                                  flow.trajectory_stream(seed * 1000 + _TAG_QR, tid))
        state = flow.evolve(state, small, t / 200, 200, "ito", cursor,
                            qr_period=10 ** 9)
        direct = flow.exponents_direct(state)
        worst = max(worst, float(np.max(np.abs(spectra[-1].values - direct.values))))
    return _result("qr_vs_direct", worst, 1e-9,
                   f"max spectrum gap {worst:.2e} over 10 trajectories, dim {dim}, t {t:g}")


def _sigma_zero_check(params: flow.FlowParams, t_final: float, seed: int) -> CheckResult:
    frozen = replace(params, sigma=0.0)
    spectra = flow.run_trajectory(frozen, t_final, 50, seed=seed, trajectory_id=0)
    worst = float(np.max(np.abs(spectra[-1].values + params.mu * t_final)))
    return _result("sigma_zero_exact", worst, 0.0,
                   f"max |lambda_k + mu t| = {worst:.1e} (exact zero required)")


def _drift_check(params: flow.FlowParams, t_final: float, seed: int) -> CheckResult:
    shift = 0.3
    base = flow.run_trajectory(params, t_final, 100, seed=seed * 1000 + _TAG_DRIFT)
    moved = flow.run_trajectory(replace(params, mu=params.mu + shift), t_final, 100,
                                seed=seed * 1000 + _TAG_DRIFT)
    worst = float(np.max(np.abs(
        (base[-1].values - moved[-1].values) - shift * t_final)))
    return _result("drift_equivariance", worst, 1e-12,
                   f"spectrum shift off by {worst:.1e} for mu offset {shift}")


def _reproducibility_check(params: flow.FlowParams, t_final: float, seed: int) -> CheckResult:
    runs = [flow.run_ensemble(params, t_final, 50, 8,
                              seed=seed * 1000 + _TAG_REPRO).exponents
            for _ in range(2)]
    mismatches = int(np.sum(runs[0] != runs[1]))
    return _result("reproducibility_bits", float(mismatches), 0.0,
                   f"{mismatches} differing values between identical runs")


def _exact_params(params: flow.FlowParams) -> tuple[flow.FlowParams, str]:
    """Closest parameter set admitting the determinantal solution."""
    note = ""
    tau = params.ensemble.tau
    if params.ensemble.beta != 2:
        note = "substituted beta=2; "
    if not params.sigma * (1.0 + tau) > 0:
        tau = 0.5
        note += "substituted tau=0.5 (needs kappa > 0); "
        out = flow.FlowParams.of(params.dim, 2, tau, max(params.sigma, 1.0), params.mu)
        return out, note
    out = flow.FlowParams.of(params.dim, 2, tau, params.sigma, params.mu)
    return out, note


def _normalization_check(params: flow.FlowParams, t_final: float) -> CheckResult:
    base, note = _exact_params(params)
    dim = min(base.dim, 2)
    model = exact.ExactModel.from_flow(
        replace(base, ensemble=replace(base.ensemble, dim=dim)), t_final)
    lo, hi = model.support_box()
    mass = quadrature.integrate_tensor(
        lambda pts: np.exp(exact.jpdf_log_batch(pts, model)),
        [(lo, hi)] * dim, 64)
    miss = abs(mass - 1.0)
    return _result("jpdf_normalization", miss, 1e-6,
                   f"{note}dim {dim}: quadrature mass {mass:.12f}")


def _fp_check(params: flow.FlowParams, t_final: float) -> CheckResult:
    base, note = _exact_params(params)
    base = replace(base, ensemble=replace(base.ensemble, dim=2))
    model = exact.ExactModel.from_flow(base, t_final)

    def density(lam: np.ndarray, t: float) -> float:
        shifted = replace(model, t=t)
        return exact.jpdf(np.sort(lam), shifted)

    pts = model.means + np.array([[-0.4, 0.3], [0.2, 1.1], [-1.0, -0.2],
                                  [0.6, 1.4], [-0.3, 0.9]])
    worst = 0.0
    for p in pts:
        r_h, r_half = spectral.fp_residual_pair(density, np.sort(p), t_final,
                                                base, h=2e-3)
        if abs(r_half) > 1e-14:
            worst = max(worst, abs(abs(r_h / r_half) - 4.0))
    return _result("fp_richardson", worst, 2.0,
                   f"{note}worst |ratio - 4| = {worst:.2f} over {len(pts)} points")


def _kernel_checks(params: flow.FlowParams, t_final: float) -> list[CheckResult]:
    base, note = _exact_params(params)
    dim = min(base.dim, 3)
    model = exact.ExactModel.from_flow(
        replace(base, ensemble=replace(base.ensemble, dim=dim)), t_final)
    kernel = exact.build_kernel(model)
    lo, hi = model.support_box()
    nodes, weights = quadrature.gauss_legendre(200, lo, hi)
    trace = float(np.sum(weights * kernel.trace_density(nodes)))
    trace_miss = abs(trace - dim)
    x = model.means[0] + 0.37
    y = model.means[-1] - 0.21
    folded = float(np.sum(weights * kernel.evaluate(x, nodes) * kernel.evaluate(nodes, y)))
    direct = float(kernel.evaluate(x, y))
    repro_miss = abs(folded - direct) / max(abs(direct), 1.0)
    return [
        _result("kernel_trace", trace_miss, 1e-8,
                f"{note}dim {dim}: integrated trace {trace:.12f}"),
        _result("kernel_reproducing", repro_miss, 1e-6,
                f"{note}K*K vs K relative gap {repro_miss:.2e}"),
    ]


def _gue_check(params: flow.FlowParams, t_final: float, seed: int) -> CheckResult:
    base, note = _exact_params(params)
    small = replace(base, ensemble=replace(base.ensemble, dim=2))
    model = exact.ExactModel.from_flow(small, t_final)
    rng = substream(seed, _TAG_GUE)
    samples = exact.sample_gue_external_source(small, t_final, rng, count=2000)
    res = stats.kstest(samples[:, -1], lambda x: exact.max_cdf(model, x))
    return _result("gue_vs_exact_ks", res.statistic, 0.05,
                   f"{note}KS {res.statistic:.4f}, p {res.pvalue:.3f} on 2000 samples")


def _mc_check(params: flow.FlowParams, t_final: float, seed: int) -> CheckResult:
    base, note = _exact_params(params)
    small = replace(base, ensemble=replace(base.ensemble, dim=2))
    model = exact.ExactModel.from_flow(small, t_final)
    steps = max(200, int(40 * small.kappa * t_final * 100))
    result = flow.run_ensemble(small, t_final, steps, 400,
                               seed=seed * 1000 + _TAG_MC, top_only=True)
    tops = result.exponents[-1, ~result.failed, 0]
    res = stats.kstest(tops, lambda x: exact.max_cdf(model, x))
    return _result("mc_vs_exact_ks", res.statistic, 0.08,
                   f"{note}KS {res.statistic:.4f}, p {res.pvalue:.3f} on "
                   f"{tops.size} trajectories, {steps} steps")


def _square_law_check(params: flow.FlowParams) -> CheckResult:
    # At sigma^2 = 1/dim the rates need no further scaling.
    dim = 100
    tau = params.ensemble.tau
    if tau <= -1.0 + 1e-12:
        tau = 0.0
    scaled = flow.FlowParams.of(dim, params.ensemble.beta, tau,
                                np.sqrt(1.0 / dim), params.mu)
    rates = np.sort(spectral.lyapunov_infinite(scaled).values)
    lo, hi = spectral.square_law_support(tau, params.mu)
    grid = np.concatenate([rates - 1e-12, rates + 1e-12])
    empirical = np.searchsorted(rates, grid, side="right") / dim
    uniform = np.clip((grid - lo) / (hi - lo), 0.0, 1.0)
    sup = float(np.max(np.abs(empirical - uniform)))
    return _result("square_law_sup", sup, 2.0 / dim,
                   f"sup |empirical - uniform| = {sup:.4f} at dim {dim}")


def _classify_check(params: flow.FlowParams) -> CheckResult:
    bad = 0
    for tau in np.linspace(-0.9, 0.9, 7):
        for mu in np.linspace(0.0, 1.0, 7):
            point = spectral.PhasePoint(tau, mu)
            label = spectral.classify(point)
            want = "stable" if point.margin > 0 else (
                "critical" if point.margin == 0 else "unstable")
            bad += label != want
    return _result("classify_consistency", float(bad), 0.0,
                   f"{bad} grid points mislabelled against the margin sign")


def run_validation(params: flow.FlowParams, t_final: float, seed: int) -> list[CheckResult]:
    """Run every reduced-scale check and return the full report.

    A check that raises is reported as failed with the error text in its
    detail field rather than aborting the suite.
    """
    plan: list[tuple[str, Callable[[], list[CheckResult]]]] = [
        ("covariance_closed_form", lambda: [_covariance_check(params, seed)]),
        ("ito_correction_mc", lambda: [_ito_check(params, seed)]),
        ("qr_vs_direct", lambda: [_qr_direct_check(params, t_final, seed)]),
        ("sigma_zero_exact", lambda: [_sigma_zero_check(params, t_final, seed)]),
        ("drift_equivariance", lambda: [_drift_check(params, t_final, seed)]),
        ("reproducibility_bits", lambda: [_reproducibility_check(params, t_final, seed)]),
        ("jpdf_normalization", lambda: [_normalization_check(params, t_final)]),
        ("fp_richardson", lambda: [_fp_check(params, t_final)]),
        ("kernel", lambda: _kernel_checks(params, t_final)),
        ("gue_vs_exact_ks", lambda: [_gue_check(params, t_final, seed)]),
        ("mc_vs_exact_ks", lambda: [_mc_check(params, t_final, seed)]),
        ("square_law_sup", lambda: [_square_law_check(params)]),
        ("classify_consistency", lambda: [_classify_check(params)]),
    ]
    report: list[CheckResult] = []
    for name, check in plan:
        try:
            report.extend(check())
        except IsoflowError as exc:
            report.append(CheckResult(name, False, float("nan"), float("nan"),
                                      f"error: {exc}"))
    return report

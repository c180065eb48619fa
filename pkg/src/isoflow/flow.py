"""Multiplicative matrix flow driven by elliptic Gaussian noise.

The flow matrix is built as an ordered product of per-step factors

    ito:          exp((-mu + c) dt) * (1 + sigma sqrt(dt) X)
    stratonovich: exp(-mu dt) * (1 + s X + s^2 X^2 / 2),   s = sigma sqrt(dt)

with a fresh elliptic matrix X each step.  The deterministic scalar is never
multiplied into the matrices: the product of the noise factors is accumulated
in the scale-factored form ``W @ Q @ diag(exp(ell)) @ B`` and the scalar
enters only as ``drift_rate * t`` added to every log singular value at
extraction time.  Two consequences are load-bearing for the tests: with
sigma = 0 the exponents are exactly ``-mu * t``, and changing ``mu`` with a
fixed noise stream shifts every exponent by exactly ``-mu * t``.

The Ito correction constant c is fixed by the ensemble covariances:
c = sigma^2 (1 + tau N) / 2 for real matrices and c = sigma^2 tau N / 2 for
complex ones.  The stratonovich factor is the Heun predictor-corrector
update of the noise part with the drift factored out exactly; both schemes
have the same weak order.

Each trajectory consumes standard normals from its own substream in fixed
blocks of 64 steps, so batched and one-at-a-time execution see bit-identical
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import linalg
from .ensemble import EnsembleParams, matrices_from_normals, normal_block_shape
from .errors import (
    DegenerateTrajectoryError,
    FlowOverflowError,
    ParameterError,
)
from .streams import trajectory_stream

# Steps drawn per generator call; part of the reproducibility contract.
NOISE_BLOCK = 64

_SCHEMES = ("ito", "stratonovich")


@dataclass(frozen=True)
class FlowParams:
    """Model parameters of the matrix flow.

    ``sigma`` is the noise coupling (sigma = 0 degenerates to the
    deterministic contraction exp(-mu t), which is allowed and used as an
    oracle), ``mu`` the uniform drift.  The diffusion constant
    kappa = (1 + tau) sigma^2 / 2 vanishes only for tau = -1 or sigma = 0.
    """

    ensemble: EnsembleParams
    sigma: float
    mu: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ParameterError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        if not np.isfinite(self.mu):
            raise ParameterError(f"mu must be finite, got {self.mu!r}")

    @classmethod
    def of(cls, dim: int, beta: int, tau: float, sigma: float, mu: float) -> "FlowParams":
        return cls(EnsembleParams(dim=dim, beta=beta, tau=tau), sigma=sigma, mu=mu)

    @property
    def kappa(self) -> float:
        return (1.0 + self.ensemble.tau) * self.sigma**2 / 2.0

    @property
    def dim(self) -> int:
        return self.ensemble.dim


def ito_correction(params: FlowParams) -> float:
    """Scalar c with (sigma^2 / 2) E[X @ X] = c * Id.

    Contracting the covariance tensor over the inner index gives
    sum_k E[X_ik X_kj] = (1 + tau N) delta_ij for real matrices and
    tau N delta_ij for complex ones.
    """
    n = params.ensemble.dim
    tau = params.ensemble.tau
    if params.ensemble.beta == 1:
        return 0.5 * params.sigma**2 * (1.0 + tau * n)
    return 0.5 * params.sigma**2 * (tau * n)


def drift_rate(params: FlowParams, scheme: str) -> float:
    """Deterministic log-scale rate factored out of the ordered product."""
    if scheme == "ito":
        return -params.mu + ito_correction(params)
    if scheme == "stratonovich":
        return -params.mu
    raise ParameterError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class EvolutionState:
    """Flow matrix at one instant, in scale-factored form.

    The represented matrix is

        exp(drift_rate * time) * raw_matrix @ q_factor @ diag(exp(log_r_diag)) @ r_unit

    where ``raw_matrix`` holds the noise factors accumulated since the last
    QR renormalization (None when none are pending).  ``time`` is
    ``steps * dt`` so deterministic identities hold to the last bit.
    ``scheme`` is pinned by the first step taken; mixing schemes within one
    trajectory has no defined drift rate and is rejected.
    """

    dim: int
    complex_field: bool
    steps: int
    dt: float
    q_factor: np.ndarray
    log_r_diag: np.ndarray
    r_unit: np.ndarray
    raw_matrix: Optional[np.ndarray] = None
    steps_since_renorm: int = 0
    scheme: Optional[str] = None
    drift_rate: float = 0.0

    @property
    def time(self) -> float:
        return self.steps * self.dt

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(complex) if self.complex_field else np.dtype(float)


def initial_state(params: FlowParams) -> EvolutionState:
    """Identity state at t = 0."""
    n = params.ensemble.dim
    eye = np.eye(n, dtype=complex if params.ensemble.complex_field else float)
    return EvolutionState(
        dim=n,
        complex_field=params.ensemble.complex_field,
        steps=0,
        dt=0.0,
        q_factor=eye.copy(),
        log_r_diag=np.zeros(n),
        r_unit=eye.copy(),
        raw_matrix=None,
    )


def _noise_factor(params: FlowParams, dt: float, x: np.ndarray, scheme: str) -> np.ndarray:
    n = params.ensemble.dim
    s = params.sigma * np.sqrt(dt)
    eye = np.eye(n, dtype=x.dtype)
    if scheme == "ito":
        return eye + s * x
    sx = s * x
    return eye + sx + 0.5 * (sx @ sx)


def _check_step_args(state: EvolutionState, params: FlowParams, dt: float, scheme: str) -> None:
    if dt <= 0 or not np.isfinite(dt):
        raise ParameterError(f"dt must be positive and finite, got {dt!r}")
    if params.ensemble.dim != state.dim:
        raise ParameterError("params dimension does not match state")
    if state.steps > 0 and dt != state.dt:
        raise ParameterError("dt must stay constant within a trajectory")
    if state.scheme is not None and state.scheme != scheme:
        raise ParameterError(
            f"trajectory already uses scheme {state.scheme!r}; cannot switch to {scheme!r}"
        )


def _apply_factor(state: EvolutionState, params: FlowParams, dt: float,
                  factor: np.ndarray, scheme: str) -> EvolutionState:
    if not np.all(np.isfinite(factor.view(float) if factor.dtype.kind == "c" else factor)):
        raise FlowOverflowError(
            "non-finite entries in step factor; rerun with a smaller dt or qr_period"
        )
    with np.errstate(over="ignore", invalid="ignore"):
        pending = factor if state.raw_matrix is None else factor @ state.raw_matrix
    if not np.all(np.isfinite(pending.view(float) if pending.dtype.kind == "c" else pending)):
        raise FlowOverflowError(
            "accumulated product overflowed; rerun with a smaller qr_period"
        )
    return replace(
        state,
        steps=state.steps + 1,
        dt=dt,
        raw_matrix=pending,
        steps_since_renorm=state.steps_since_renorm + 1,
        scheme=scheme,
        drift_rate=drift_rate(params, scheme),
    )


def step_ito(state: EvolutionState, params: FlowParams, dt: float,
             rng: Optional[np.random.Generator] = None,
             increment: Optional[np.ndarray] = None) -> EvolutionState:
    """One Euler step of the Ito form.

    The step factor is exp((-mu + c) dt) (1 + sigma sqrt(dt) X); the scalar
    part is tracked analytically (see module docstring).  ``increment``
    overrides the sampled X so two schemes can be driven by identical noise.
    """
    _check_step_args(state, params, dt, "ito")
    x = _draw_increment(params, rng) if increment is None else increment
    return _apply_factor(state, params, dt, _noise_factor(params, dt, x, "ito"), "ito")


def step_stratonovich(state: EvolutionState, params: FlowParams, dt: float,
                      rng: Optional[np.random.Generator] = None,
                      increment: Optional[np.ndarray] = None) -> EvolutionState:
    """One Heun predictor-corrector step of the Stratonovich form.

    Averaging the increment over predictor and corrected point gives the
    noise factor 1 + sX + (sX)^2/2 with the drift factored out exactly; no
    explicit Ito correction appears.
    """
    _check_step_args(state, params, dt, "stratonovich")
    x = _draw_increment(params, rng) if increment is None else increment
    factor = _noise_factor(params, dt, x, "stratonovich")
    return _apply_factor(state, params, dt, factor, "stratonovich")


def _draw_increment(params: FlowParams, rng: Optional[np.random.Generator]) -> np.ndarray:
    if rng is None:
        raise ParameterError("either rng or increment must be provided")
    block = rng.standard_normal(normal_block_shape(params.ensemble, 1))
    return matrices_from_normals(block, params.ensemble)[0]


def renormalize_qr(state: EvolutionState) -> EvolutionState:
    """Fold the pending raw product into the (Q, ell, B) factors.

    Mathematically exact: with W @ Q = Q' R and R = diag(d) R_hat, the state
    becomes Q' with ell += log d and B <- (scale-conjugated R_hat) @ B.  The
    conjugation exp(ell_k - ell_j) only ever shrinks upper-triangular
    entries once the scales have ordered themselves, so B stays bounded.
    """
    if state.raw_matrix is None:
        return state
    a = state.raw_matrix @ state.q_factor
    q, r = linalg.qr_positive(a)
    d = np.diagonal(r, axis1=-2, axis2=-1).real
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise DegenerateTrajectoryError(
            "rank-deficient triangular factor during renormalization"
        )
    old = state.log_r_diag
    unit = r / d[..., :, None]
    # Only the upper triangle is kept; masking first avoids spurious
    # overflow from the huge lower-triangle exponents.
    ratio = np.exp(np.triu(old[..., None, :] - old[..., :, None]))
    b_new = np.triu(unit * ratio) @ state.r_unit
    ell = old + np.log(d)
    return replace(
        state,
        q_factor=q,
        log_r_diag=ell,
        r_unit=b_new,
        raw_matrix=None,
        steps_since_renorm=0,
    )


@dataclass(frozen=True)
class ExponentSpectrum:
    """Finite-time exponents: half the log strain eigenvalues, ascending."""

    time: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any(np.diff(v) < 0):
            raise ParameterError("exponents must be a 1-d ascending array")
        object.__setattr__(self, "values", v)


def exponents(state: EvolutionState, method: str = "auto") -> ExponentSpectrum:
    """Sorted finite-time exponents of the represented matrix.

    ``method`` is "auto" (exact extraction up to dimension 8, log R-diagonal
    beyond), "exact" (error above dimension 8) or "benettin".  The benettin
    values carry an O(1) error bounded by log cond(B), which stays modest
    but does not meet the exact-path tolerances; dimensions above 8 in this
    package only ever need the top exponent, which ``top_exponent`` gives
    exactly at any size.
    """
    st = renormalize_qr(state)
    shift = st.drift_rate * st.time
    if method == "auto":
        method = "exact" if st.dim <= linalg.EXACT_DIM_MAX else "benettin"
    if method == "exact":
        vals = linalg.log_singular_values(st.log_r_diag, st.r_unit)
    elif method == "benettin":
        vals = np.sort(st.log_r_diag)
    else:
        raise ParameterError(f"unknown method {method!r}")
    vals = vals + shift
    if not np.all(np.isfinite(vals)):
        raise FlowOverflowError("non-finite exponents")
    return ExponentSpectrum(time=st.time, values=vals)


def top_exponent(state: EvolutionState) -> float:
    """Largest exponent, exact at any dimension."""
    st = renormalize_qr(state)
    val = float(linalg.top_log_singular_value(st.log_r_diag, st.r_unit))
    return val + st.drift_rate * st.time


def evolution_matrix(state: EvolutionState) -> np.ndarray:
    """Dense flow matrix including the drift scalar.

    Only usable while exp(drift_rate * t + max ell) is representable; meant
    for short runs and oracle comparisons.
    """
    core = state.q_factor @ (np.exp(state.log_r_diag)[:, None] * state.r_unit)
    if state.raw_matrix is not None:
        core = state.raw_matrix @ core
    out = np.exp(state.drift_rate * state.time) * core
    if not np.all(np.isfinite(out.view(float) if out.dtype.kind == "c" else out)):
        raise FlowOverflowError("dense matrix not representable; use the factored form")
    return out


def exponents_direct(state: EvolutionState) -> ExponentSpectrum:
    """Exponents from dense eigenvalues of the strain matrix.

    The unfactored route: forms S = Pi^dagger Pi and takes half the log of
    its eigenvalues.  Valid while the dense matrix is representable and the
    condition number stays well inside 1/eps; used as the short-run oracle.
    """
    pi = evolution_matrix(state)
    strain = np.conj(pi.T) @ pi
    eig = np.linalg.eigvalsh(strain)
    if np.any(eig <= 0) or not np.all(np.isfinite(eig)):
        raise FlowOverflowError("strain eigenvalues out of range for the dense route")
    return ExponentSpectrum(time=state.time, values=0.5 * np.log(eig))


class NoiseCursor:
    """Block-buffered increment source for one trajectory.

    Draws standard normals in fixed blocks of NOISE_BLOCK steps from its own
    generator, making the noise seen by a trajectory a pure function of
    (seed, trajectory_id, step index) regardless of how execution is
    batched or resumed.
    """

    def __init__(self, params: EnsembleParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self._block: Optional[np.ndarray] = None
        self._used = 0

    def next_matrix(self) -> np.ndarray:
        if self._block is None or self._used >= NOISE_BLOCK:
            raw = self.rng.standard_normal(normal_block_shape(self.params, NOISE_BLOCK))
            self._block = matrices_from_normals(raw, self.params)
            self._used = 0
        out = self._block[self._used]
        self._used += 1
        return out


def auto_qr_period(params: FlowParams, dt: float) -> int:
    """Renormalization cadence: every step once kappa dt N exceeds 0.01.

    Below that growth rate the cadence stretches proportionally, capped at
    one noise block.
    """
    rate = params.kappa * dt * params.ensemble.dim
    if rate <= 0:
        return NOISE_BLOCK
    return int(max(1, min(NOISE_BLOCK, 0.01 / rate)))


def evolve(state: EvolutionState, params: FlowParams, dt: float, n_steps: int,
           scheme: str, cursor: NoiseCursor, qr_period: Optional[int] = None) -> EvolutionState:
    """Advance ``n_steps`` steps, renormalizing every ``qr_period`` steps.

    Consumes increments from ``cursor``; evolving in several calls with one
    cursor reproduces a single call bit-for-bit (the cocycle property of the
    discrete product).
    """
    if scheme not in _SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if n_steps < 0:
        raise ParameterError("n_steps must be >= 0")
    period = auto_qr_period(params, dt) if qr_period is None else int(qr_period)
    if period < 1:
        raise ParameterError("qr_period must be >= 1")
    step = step_ito if scheme == "ito" else step_stratonovich
    try:
        for _ in range(n_steps):
            state = step(state, params, dt, increment=cursor.next_matrix())
            if state.steps_since_renorm >= period:
                state = renormalize_qr(state)
    except (FlowOverflowError, DegenerateTrajectoryError) as exc:
        raise type(exc)(f"step {state.steps + 1}: {exc}") from exc
    return state


def run_trajectory(params: FlowParams, t_final: float, n_steps: int,
                   scheme: str = "ito", qr_period: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None,
                   seed: Optional[int] = None, trajectory_id: int = 0,
                   checkpoints: Optional[Sequence[float]] = None) -> list[ExponentSpectrum]:
    """Simulate one trajectory and return spectra at checkpoint times.

    The generator is either passed directly or derived from
    (seed, trajectory_id); checkpoint times are rounded to the step grid.
    Errors are re-raised with the trajectory id and step index attached.
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    if t_final <= 0:
        raise ParameterError("t_final must be positive")
    if rng is None:
        if seed is None:
            raise ParameterError("provide rng or seed")
        rng = trajectory_stream(seed, trajectory_id)
    dt = t_final / n_steps
    indices = _checkpoint_indices(checkpoints, t_final, n_steps)
    cursor = NoiseCursor(params.ensemble, rng)
    state = initial_state(params)
    out = []
    done = 0
    try:
        for idx in indices:
            state = evolve(state, params, dt, idx - done, scheme, cursor, qr_period)
            done = idx
            state = renormalize_qr(state)
            out.append(exponents(state))
    except Exception as exc:
        raise type(exc)(f"trajectory {trajectory_id} failed: {exc}") from exc
    return out


def _checkpoint_indices(checkpoints: Optional[Sequence[float]], t_final: float,
                        n_steps: int) -> list[int]:
    if checkpoints is None:
        return [n_steps]
    dt = t_final / n_steps
    idx = sorted({int(round(c / dt)) for c in checkpoints})
    if any(i < 1 or i > n_steps for i in idx):
        raise ParameterError("checkpoints must fall in (0, t_final]")
    return idx


@dataclass(frozen=True)
class EnsembleResult:
    """Exponents of a trajectory batch at each checkpoint.

    ``exponents[c, m]`` is the ascending spectrum of trajectory
    ``trajectory_ids[m]`` at ``times[c]`` (a single column when only the top
    exponent was requested).  Rows of failed trajectories are NaN and
    flagged in ``failed``.
    """

    times: np.ndarray
    exponents: np.ndarray
    trajectory_ids: np.ndarray
    failed: np.ndarray
    messages: tuple = field(default=())


def run_ensemble(params: FlowParams, t_final: float, n_steps: int, n_trajectories: int,
                 scheme: str = "ito", qr_period: Optional[int] = None,
                 seed: Optional[int] = None, checkpoints: Optional[Sequence[float]] = None,
                 top_only: bool = False, base_trajectory_id: int = 0) -> EnsembleResult:
    """Simulate a batch of independent trajectories.

    Trajectory m uses the substream (seed, base_trajectory_id + m); all
    matrix work is vectorized across the batch but the per-trajectory noise
    is bit-identical to ``run_trajectory`` with the same ids.  Trajectories
    whose state degenerates are masked out and reported, not raised.
    """
    if seed is None:
        raise ParameterError("run_ensemble requires a seed")
    if n_steps < 1 or n_trajectories < 1:
        raise ParameterError("n_steps and n_trajectories must be >= 1")
    if t_final <= 0:
        raise ParameterError("t_final must be positive")
    if scheme not in _SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    ens = params.ensemble
    n = ens.dim
    m = n_trajectories
    dt = t_final / n_steps
    period = auto_qr_period(params, dt) if qr_period is None else int(qr_period)
    if period < 1:
        raise ParameterError("qr_period must be >= 1")
    indices = _checkpoint_indices(checkpoints, t_final, n_steps)
    rate = drift_rate(params, scheme)
    s = params.sigma * np.sqrt(dt)

    dtype = complex if ens.complex_field else float
    eye = np.broadcast_to(np.eye(n, dtype=dtype), (m, n, n))
    q = eye.copy()
    ell = np.zeros((m, n))
    b_unit = eye.copy()
    pending: Optional[np.ndarray] = None
    since = 0
    failed = np.zeros(m, dtype=bool)
    messages: list[str] = []
    streams = [trajectory_stream(seed, base_trajectory_id + i) for i in range(m)]

    times = np.empty(len(indices))
    width = 1 if top_only else n
    values = np.empty((len(indices), m, width))

    def _mark_failures(bad: np.ndarray, step_idx: int, reason: str) -> None:
        fresh = bad & ~failed
        if np.any(fresh):
            for i in np.flatnonzero(fresh):
                messages.append(
                    f"trajectory {base_trajectory_id + int(i)} failed at step {step_idx}: {reason}"
                )
            failed[fresh] = True
        if pending is not None:
            pending[bad] = np.eye(n, dtype=dtype)
        q[bad] = np.eye(n, dtype=dtype)
        ell[bad] = 0.0
        b_unit[bad] = np.eye(n, dtype=dtype)

    def _renormalize(step_idx: int) -> None:
        nonlocal q, ell, b_unit, pending, since
        with np.errstate(over="ignore", invalid="ignore"):
            a = pending @ q
        view = a.view(float) if a.dtype.kind == "c" else a
        bad = ~np.isfinite(view).all(axis=(-2, -1))
        if np.any(bad):
            _mark_failures(bad, step_idx, "overflow in accumulated product")
            a = pending @ q
        qn, r = linalg.qr_positive(a)
        d = np.diagonal(r, axis1=-2, axis2=-1).real
        bad = (d <= 0) | ~np.isfinite(d)
        if np.any(bad.any(axis=-1)):
            _mark_failures(bad.any(axis=-1), step_idx, "rank-deficient renormalization")
            qn, r = linalg.qr_positive(pending @ q)
            d = np.diagonal(r, axis1=-2, axis2=-1).real
        unit = r / d[..., :, None]
        ratio = np.exp(np.triu(ell[..., None, :] - ell[..., :, None]))
        b_unit = np.triu(unit * ratio) @ b_unit
        ell = ell + np.log(d)
        q = qn
        pending = None
        since = 0

    step_count = 0
    check_iter = iter(indices)
    next_check = next(check_iter)
    out_row = 0
    while step_count < n_steps:
        blocks = np.stack(
            [g.standard_normal(normal_block_shape(ens, NOISE_BLOCK)) for g in streams]
        )
        take = min(NOISE_BLOCK, n_steps - step_count)
        for j in range(take):
            x = matrices_from_normals(blocks[:, j], ens)
            if scheme == "ito":
                factor = eye + s * x
            else:
                sx = s * x
                factor = eye + sx + 0.5 * (sx @ sx)
            with np.errstate(over="ignore", invalid="ignore"):
                pending = factor if pending is None else factor @ pending
            since += 1
            step_count += 1
            if since >= period:
                _renormalize(step_count)
            while next_check is not None and step_count == next_check:
                if since > 0:
                    _renormalize(step_count)
                t_here = step_count * dt
                shift = rate * t_here
                if top_only:
                    vals = linalg.top_log_singular_value(ell, b_unit)[:, None] + shift
                elif n <= linalg.EXACT_DIM_MAX:
                    vals = linalg.log_singular_values(ell, b_unit) + shift
                else:
                    vals = np.sort(ell, axis=-1) + shift
                vals[failed] = np.nan
                times[out_row] = t_here
                values[out_row] = vals
                out_row += 1
                next_check = next(check_iter, None)
    ids = np.arange(base_trajectory_id, base_trajectory_id + m)
    return EnsembleResult(times=times, exponents=values, trajectory_ids=ids,
                          failed=failed, messages=tuple(messages))

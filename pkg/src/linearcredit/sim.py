"""Monte Carlo simulation of LHC factor dynamics and default times.

The default scheme advances the drift exactly, ``v <- e^{A dt} v``, and adds
a two-point diffusion increment ``+-sigma_i sqrt(x_i (y - x_i) dt)``.  When
the symmetric move would leave ``[0, y]`` the increment is replaced by a
two-point law with the same mean (zero) and variance whose support stays
inside the interval.  Conditional means are therefore propagated without
discretisation bias and paths never leave ``E``.  Plain Euler drift and
Gaussian increments with full truncation are available through
:class:`PathConfig`.

Default times are first crossings ``tau = inf{t: S_t <= U}`` of the survival
process through independent thresholds ``U = S_0 V`` with ``V`` uniform, so
all estimates are conditional on survival up to time zero.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla

from . import _kernels as K
from ._validation import check_finite_array, check_scalar, check_square, check_vector
from .exceptions import CapacityError, ConstraintError, DomainError, InvalidInputError
from .model import LhccParams, LhcParams, State, lhcc_to_lhc, validate_lhc

__all__ = [
    "PathConfig",
    "PathEnsemble",
    "JumpSpec",
    "ClockSpec",
    "McContract",
    "set_threads",
    "simulate_paths",
    "simulate_jump_paths",
    "simulate_time_changed",
    "sample_defaults",
    "clock_drift",
    "negcor_example",
    "NegCorResult",
    "mc_price",
    "mean_se",
]

#: Refuse to store full paths beyond this many bytes.
MAX_PATH_BYTES = 1 << 30


def set_threads(n: int | None = None) -> int:
    """Bound the number of simulation threads.

    ``None`` reads ``LINEARCREDIT_THREADS`` and otherwise uses every core.
    Results do not depend on the thread count.
    """
    import numba

    if n is None:
        env = os.environ.get("LINEARCREDIT_THREADS")
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@dataclass(frozen=True)
class PathConfig:
    """Simulation settings.

    Attributes
    ----------
    dt : float
        Time step in years; rounded so that it divides ``horizon``.
    horizon : float
    n_paths : int
    seed : int
    scheme : {"exact", "euler"}
        Drift update ``e^{A dt}`` or ``I + A dt``.
    increments : {"two_point", "gaussian"}
    clamp : bool
        Project post-step factors into ``[0, y]``.
    record_times : tuple of float
        Times at which full states are kept (rounded to the grid).
    antithetic : bool
        Pair paths ``2k`` and ``2k + 1`` with mirrored noise and thresholds.
    store_paths : bool
        Keep every step of every path (memory guarded).
    """

    dt: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 10_000
    seed: int = 0
    scheme: str = "exact"
    increments: str = "two_point"
    clamp: bool = True
    record_times: tuple = ()
    antithetic: bool = False
    store_paths: bool = False

    def __post_init__(self):
        check_scalar(self.dt, "dt", lo=0.0)
        check_scalar(self.horizon, "horizon", lo=0.0)
        if self.dt <= 0:
            raise InvalidInputError("dt must be positive")
        if int(self.n_paths) < 1:
            raise InvalidInputError("n_paths must be at least 1")
        if self.scheme not in ("exact", "euler"):
            raise InvalidInputError(f"unknown scheme {self.scheme!r}")
        if self.increments not in ("two_point", "gaussian"):
            raise InvalidInputError(f"unknown increments {self.increments!r}")
        if self.antithetic and int(self.n_paths) % 2:
            raise InvalidInputError("antithetic sampling needs an even path count")
        object.__setattr__(self, "record_times", tuple(float(t) for t in self.record_times))
        for t in self.record_times:
            if t < 0 or t > self.horizon + 1e-12:
                raise InvalidInputError(f"record time {t} outside [0, horizon]")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt))) if self.horizon > 0 else 0

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps if self.n_steps else self.dt


@dataclass(frozen=True)
class JumpSpec:
    """Common compound-Poisson jumps hitting every block.

    At a jump of size ``z`` the survival coordinate moves by
    ``-z (c y + delta^T x)`` and factor ``i`` by ``-z nu_i x_i``.  Sizes are
    drawn from ``size_sampler(rng, n)``; the default is Beta(``size_a``, ``size_b``).

    Attributes
    ----------
    c : float
    delta, nu : ndarray, shape (m,)
    rate : float
        Jump intensity per year.
    size_a, size_b : float
        Beta law parameters for jump sizes on (0, 1].
    size_mean : float, optional
        Mean jump size; required when ``size_sampler`` is given.
    """

    c: float
    delta: np.ndarray
    nu: np.ndarray
    rate: float
    size_a: float = 2.0
    size_b: float = 5.0
    size_sampler: Callable | None = field(default=None, compare=False, repr=False)
    size_mean: float | None = None

    def __post_init__(self):
        c = check_scalar(self.c, "c", lo=0.0)
        delta = check_vector(self.delta, "delta")
        nu = check_vector(self.nu, "nu", delta.shape[0])
        check_scalar(self.rate, "rate", lo=0.0)
        if np.any(delta < 0) or np.any(nu < 0):
            raise ConstraintError("delta and nu must be non-negative")
        tot = c + delta.sum()
        if not tot < 1.0:
            raise ConstraintError(f"c + sum(delta) = {tot} must be below 1")
        if np.any(nu < tot - 1e-15) or np.any(nu > 1.0):
            raise ConstraintError("need c + sum(delta) <= nu_i <= 1")
        if self.size_sampler is not None and self.size_mean is None:
            raise InvalidInputError("size_mean is required with a custom size sampler")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "nu", nu)

    @property
    def mean_size(self) -> float:
        if self.size_mean is not None:
            return float(self.size_mean)
        return self.size_a / (self.size_a + self.size_b)

    def sample_sizes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size_sampler is not None:
            z = np.asarray(self.size_sampler(rng, n), dtype=float)
        else:
            z = rng.beta(self.size_a, self.size_b, size=n)
        if np.any(z <= 0) or np.any(z > 1):
            raise DomainError("jump sizes must lie in (0, 1]")
        return z

    def compensated_drift(self, p: LhcParams) -> np.ndarray:
        """Drift matrix of the conditional mean under jumps.

        ``[[-c, -gamma^T - delta^T E Z], [b, beta - diag(nu) E Z]]``.
        """
        ez = self.rate * self.mean_size
        m = p.m
        A = np.zeros((m + 1, m + 1))
        A[0, 0] = -self.c
        A[0, 1:] = -p.gamma - self.delta * ez
        A[1:, 0] = p.b
        A[1:, 1:] = p.beta - np.diag(self.nu) * ez
        return A


@dataclass(frozen=True)
class ClockSpec:
    """Gamma subordinator with Lévy density ``gamma_Z z^{-1} e^{-lambda_Z z}`` and drift ``b_Z``."""

    gamma_Z: float
    lambda_Z: float
    b_Z: float = 0.0
    kind: str = "gamma"

    def __post_init__(self):
        if self.kind != "gamma":
            raise InvalidInputError("only the gamma clock is supported")
        if check_scalar(self.gamma_Z, "gamma_Z") <= 0 or check_scalar(self.lambda_Z, "lambda_Z") <= 0:
            raise InvalidInputError("gamma_Z and lambda_Z must be positive")
        check_scalar(self.b_Z, "b_Z", lo=0.0)

    def levy_density(self, z):
        return self.gamma_Z * np.exp(-self.lambda_Z * z) / z


@dataclass(frozen=True)
class PathEnsemble:
    """Output of a simulation run.

    Attributes
    ----------
    grid : ndarray
        Simulation time grid.
    times : ndarray
        Recorded times; ``states[:, k]`` holds the stacked state at ``times[k]``.
    states : ndarray, shape (n_paths, len(times), d + m)
    default_times : ndarray, shape (n_paths, n_firms)
        ``inf`` when no default occurred before the horizon.
    default_states : ndarray, shape (n_paths, n_firms, d + m)
        Interpolated state at default (left limit for jump-induced defaults).
    paths : ndarray or None
        Full paths ``(n_paths, n_steps + 1, d + m)`` when requested.
    n_blocks : int
    block_of : ndarray
        Block index of each factor.
    firm_weights : ndarray, shape (n_firms, n_blocks)
    adjusted_fraction : float
        Share of factor increments modified at the boundary.
    """

    grid: np.ndarray
    times: np.ndarray
    states: np.ndarray
    default_times: np.ndarray
    default_states: np.ndarray
    paths: np.ndarray | None
    n_blocks: int
    block_of: np.ndarray
    firm_weights: np.ndarray
    adjusted_fraction: float
    config: PathConfig
    s0: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def state_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise InvalidInputError(f"time {t} was not recorded")
        return self.states[:, k, :]

    def survival_at(self, t: float, firm: int = 0) -> np.ndarray:
        return self.state_at(t)[:, : self.n_blocks] @ self.firm_weights[firm]


def _stack_blocks(blocks, states):
    if isinstance(blocks, (LhcParams, LhccParams)):
        blocks = [blocks]
    if isinstance(states, State) or (np.ndim(states) == 1 and not isinstance(states, (list, tuple))):
        states = [states]
    blocks = [lhcc_to_lhc(b, check=False) if isinstance(b, LhccParams) else b for b in blocks]
    if len(blocks) != len(states):
        raise InvalidInputError("one state per block is required")
    d = len(blocks)
    ms = [b.m for b in blocks]
    D = d + sum(ms)
    A = np.zeros((D, D))
    sig = np.concatenate([b.sigma for b in blocks])
    blk = np.concatenate([[j] * b.m for j, b in enumerate(blocks)]).astype(np.int64)
    v0 = np.zeros(D)
    off = d
    for j, (b, s) in enumerate(zip(blocks, states)):
        if not validate_lhc(b, tol=1e-12).valid:
            raise ConstraintError(f"block {j} violates the inward-drift conditions")
        s = s if isinstance(s, State) else State.from_vector(s)
        if s.m != b.m:
            raise InvalidInputError(f"state of block {j} has wrong dimension")
        sl = slice(off, off + b.m)
        A[j, sl] = -b.gamma
        A[sl, j] = b.b
        A[sl, sl] = b.beta
        v0[j] = s.y
        v0[sl] = s.x
        off += b.m
    return blocks, A, sig, blk, v0, d


def _firm_matrix(firm_weights, d):
    if firm_weights is None:
        return np.zeros((0, d))
    W = check_finite_array(firm_weights, "firm_weights")
    W = W.reshape(-1, d)
    if np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1.0) > 1e-12):
        raise InvalidInputError("firm weights must be non-negative and sum to one")
    return W


def _run(A, sig, blk, v0, d, cfg: PathConfig, W, jumps=None, cont_A=None):
    n = int(cfg.n_paths)
    nst = cfg.n_steps
    dt = cfg.step
    D = v0.shape[0]
    Ad = A if cont_A is None else cont_A
    M = sla.expm(Ad * dt) if cfg.scheme == "exact" else np.eye(D) + Ad * dt
    grid = np.linspace(0.0, cfg.horizon, nst + 1)
    rec = sorted(set(int(round(t / dt)) for t in cfg.record_times) | {nst})
    rec_steps = np.asarray(rec, dtype=np.int64)
    F = W.shape[0]
    out_rec = np.empty((n, rec_steps.size, D))
    out_tau = np.empty((n, F))
    out_vtau = np.full((n, F, D), np.nan)
    if cfg.store_paths:
        need = n * (nst + 1) * D * 8
        if need > MAX_PATH_BYTES:
            raise CapacityError(f"storing full paths needs {need / 2**30:.1f} GiB")
        out_path = np.empty((n, nst + 1, D))
    else:
        out_path = np.empty((0, 0, D))
    if jumps is None:
        jp = np.zeros(n + 1, dtype=np.int64)
        js = np.zeros(0, dtype=np.int64)
        jz = np.zeros(0)
        jc = np.zeros(d)
        jdel = np.zeros(D - d)
        jnu = np.zeros(D - d)
    else:
        jp, js, jz, jc, jdel, jnu = jumps
    n_blocks = (n + K.LANES - 1) // K.LANES
    stats = np.zeros((n_blocks, 2), dtype=np.int64)
    K.lhc_kernel(
        np.uint64(cfg.seed % (1 << 63)), n, nst, dt, M, blk, sig.astype(float), d, v0,
        cfg.increments == "gaussian", bool(cfg.antithetic), bool(cfg.clamp),
        rec_steps, out_rec, W, out_tau, out_vtau, jp, js, jz, jc, jdel, jnu,
        bool(cfg.store_paths), out_path, stats,
    )
    tot = stats[:, 1].sum()
    frac = float(stats[:, 0].sum() / tot) if tot else 0.0
    return PathEnsemble(
        grid=grid,
        times=rec_steps * dt,
        states=out_rec,
        default_times=out_tau,
        default_states=out_vtau,
        paths=out_path if cfg.store_paths else None,
        n_blocks=d,
        block_of=blk,
        firm_weights=W,
        adjusted_fraction=frac,
        config=cfg,
        s0=v0,
    )


def simulate_paths(p, s0, cfg: PathConfig, firm_weights=None) -> PathEnsemble:
    """Simulate one or several independent LHC blocks.

    Parameters
    ----------
    p : LhcParams, LhccParams or sequence of them
        Blocks; a single model is one block.
    s0 : State or sequence of State
        Initial state per block.
    cfg : PathConfig
    firm_weights : array_like, shape (n_firms, n_blocks), optional
        Survival weights ``a_i``; firm ``i`` has ``S^i = a_i^T Y``.  Default
        times are sampled for every row.

    Returns
    -------
    PathEnsemble
    """
    blocks, A, sig, blk, v0, d = _stack_blocks(p, s0)
    W = _firm_matrix(firm_weights, d)
    return _run(A, sig, blk, v0, d, cfg, W)


def simulate_jump_paths(p, jump: JumpSpec, s0, cfg: PathConfig, firm_weights=None) -> PathEnsemble:
    """Simulate LHC blocks hit by a common compound-Poisson jump process.

    Between jumps the drift is the compensated one, so the conditional mean
    follows ``jump.compensated_drift``.  Jumps are placed at the end of the
    step containing them.  The ``-c y`` drift term acts even without
    jumps, so with ``rate = 0`` and ``c = 0`` the output equals
    :func:`simulate_paths` path by path.
    """
    blocks, A, sig, blk, v0, d = _stack_blocks(p, s0)
    m_tot = v0.shape[0] - d
    if jump.delta.shape[0] != m_tot:
        raise InvalidInputError("jump delta/nu must cover every factor")
    W = _firm_matrix(firm_weights, d)
    n = int(cfg.n_paths)
    nst = cfg.n_steps
    dt = cfg.step
    ez = jump.rate * jump.mean_size
    # continuous part: compensated drift plus (c y + delta^T x, nu x) E[Z_1]
    cont = A.copy()
    for j in range(d):
        cont[j, j] += -jump.c + jump.c * ez
        idx = np.flatnonzero(blk == j) + d
        cont[j, idx] += -jump.delta[idx - d] * ez + jump.delta[idx - d] * ez
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x4A554D50]))
    counts = rng.poisson(jump.rate * cfg.horizon, size=n)
    tot = int(counts.sum())
    times = rng.uniform(0.0, cfg.horizon, size=tot)
    sizes = jump.sample_sizes(rng, tot) if tot else np.zeros(0)
    owner = np.repeat(np.arange(n), counts)
    steps = np.minimum((times / dt).astype(np.int64), nst - 1)
    order = np.lexsort((steps, owner))
    jp = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    jc = np.full(d, jump.c)
    jumps = (jp, steps[order], sizes[order], jc, jump.delta.astype(float), jump.nu.astype(float))
    return _run(A, sig, blk, v0, d, cfg, W, jumps=jumps, cont_A=cont)


def sample_defaults(ens: PathEnsemble, weights, rng: np.random.Generator) -> np.ndarray:
    """Default times from stored paths and fresh thresholds.

    Parameters
    ----------
    ens : PathEnsemble
        Must have been produced with ``store_paths=True``.
    weights : array_like, shape (n_firms, n_blocks)
    rng : numpy.random.Generator

    Returns
    -------
    ndarray, shape (n_paths, n_firms)
        First crossing times with log-linear interpolation inside the step;
        ``inf`` if the survival level stays above the threshold.
    """
    if ens.paths is None:
        raise InvalidInputError("sample_defaults needs stored paths (store_paths=True)")
    W = _firm_matrix(weights, ens.n_blocks)
    S = ens.paths[:, :, : ens.n_blocks] @ W.T  # (n, steps+1, F)
    n, T1, F = S.shape
    U = S[:, 0, :] * rng.uniform(size=(n, F))
    below = S <= U[:, None, :]
    hit = below.any(axis=1)
    k = np.argmax(below, axis=1)  # first index with S <= U
    tau = np.full((n, F), np.inf)
    grid = ens.grid
    ii, ff = np.nonzero(hit)
    kk = k[ii, ff]
    kk = np.maximum(kk, 1)
    so = S[ii, kk - 1, ff]
    sn = S[ii, kk, ff]
    u = U[ii, ff]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where((so > sn) & (sn > 0), np.log(so / u) / np.log(so / sn), 1.0)
    frac = np.clip(frac, 0.0, 1.0)
    tau[ii, ff] = grid[kk - 1] + frac * (grid[kk] - grid[kk - 1])
    return tau


def simulate_time_changed(p, clock: ClockSpec, s0, cfg: PathConfig, dt_inner: float = 1e-3) -> np.ndarray:
    """Terminal states of the LHC process run on a Gamma business clock.

    Calendar steps of length ``cfg.dt`` advance business time by
    ``b_Z dt + Gamma(gamma_Z dt, 1/lambda_Z)``; each increment is integrated
    with Euler sub-steps of at most ``dt_inner``.

    Returns
    -------
    ndarray, shape (n_paths, 1 + m)
    """
    blocks, A, sig, blk, v0, d = _stack_blocks(p, s0)
    n = int(cfg.n_paths)
    nst = cfg.n_steps
    dt = cfg.step
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x434C4F43]))
    dz = clock.b_Z * dt + rng.gamma(clock.gamma_Z * dt, 1.0 / clock.lambda_Z, size=(n, nst))
    out = np.empty((n, v0.shape[0]))
    K.clock_kernel(np.uint64(cfg.seed % (1 << 63)), n, nst, A, blk, sig.astype(float), d, v0, dz, float(dt_inner), out)
    return out


def clock_drift(A, clock: ClockSpec, method: str = "closed", tol: float = 1e-12) -> np.ndarray:
    """Drift matrix of the subordinated process.

    ``b_Z A + int_0^inf (e^{A z} - I) nu(dz)``; for the Gamma clock the
    integral equals ``-gamma_Z log(I - A / lambda_Z)``.

    Parameters
    ----------
    A : array_like, shape (k, k)
        Eigenvalues must have non-positive real parts.
    method : {"closed", "quadrature"}
    """
    A = check_square(A)
    ev = np.linalg.eigvals(A)
    if np.max(ev.real) > 1e-12:
        raise DomainError("clock drift needs a spectrum in the closed left half-plane")
    k = A.shape[0]
    if method == "closed":
        L = sla.logm(np.eye(k) - A / clock.lambda_Z)
        return clock.b_Z * A - clock.gamma_Z * np.real(L)
    if method != "quadrature":
        raise InvalidInputError(f"unknown method {method!r}")
    I = np.eye(k)

    def integrand(z):
        if z < 1e-6:
            # series of (e^{Az} - I)/z near zero
            return clock.gamma_Z * np.exp(-clock.lambda_Z * z) * (A + 0.5 * z * (A @ A) + z * z / 6.0 * (A @ A @ A))
        return clock.levy_density(z) * (sla.expm(A * z) - I)

    val, _ = si.quad_vec(integrand, 0.0, np.inf, epsabs=tol, epsrel=tol, limit=400)
    return clock.b_Z * A + val


# -------------------------------------------------------------------- Example with negative intensity correlation

@dataclass(frozen=True)
class NegCorResult:
    """Realised covariation of two intensities driven by one factor."""

    covariation: float
    std_error: float
    upper95: float
    max_intensity: float
    max_abs_x_excess: float
    theoretical: float


def negcor_example(epsilon: float, kappa: float, sigma: float, cfg: PathConfig, x0: float = 0.0) -> NegCorResult:
    """Two firms whose intensities move in opposite directions.

    ``dY_1 = eps/2 (-Y_1 - X) dt``, ``dY_2 = eps/2 (-Y_2 + X) dt`` and
    ``dX = -kappa X dt + sigma sqrt((e^{-eps t} - X)(e^{-eps t} + X)) dW``,
    so ``lambda_1 = eps/2 (1 + X/Y_1)`` and ``lambda_2 = eps/2 (1 - X/Y_2)``.

    Returns the mean over paths of the realised covariation
    ``sum d lambda_1 d lambda_2`` up to the horizon, with its standard error
    and a one-sided 95% upper bound.  The ``Y`` recursion is integrated
    exactly over each step with ``X`` frozen, and ``X`` is kept within
    ``min(e^{-eps t}, Y_1, Y_2)`` so that both intensities stay in ``[0, eps]``.
    """
    epsilon = check_scalar(epsilon, "epsilon")
    kappa = check_scalar(kappa, "kappa")
    if not (kappa > epsilon > 0):
        raise InvalidInputError("need kappa > epsilon > 0")
    sigma = check_scalar(sigma, "sigma", lo=0.0)
    if abs(x0) > 1:
        raise DomainError("x0 must lie in [-1, 1]")
    n = int(cfg.n_paths)
    nst = cfg.n_steps
    dt = cfg.step
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x4E454743]))
    y1 = np.ones(n)
    y2 = np.ones(n)
    x = np.full(n, float(x0))
    lam1 = 0.5 * epsilon * (1 + x / y1)
    lam2 = 0.5 * epsilon * (1 - x / y2)
    cov = np.zeros(n)
    theo = np.zeros(n)
    lam_max = max(lam1.max(), lam2.max())
    excess = 0.0
    decay = np.exp(-0.5 * epsilon * dt)
    for k in range(nst):
        t = k * dt
        bound = np.exp(-epsilon * t)
        var = np.maximum((bound - x) * (bound + x), 0.0)
        theo += -(epsilon**2 / 4) * sigma**2 * var / (y1 * y2) * dt
        dw = rng.standard_normal(n) * np.sqrt(dt)
        y1 = decay * y1 - x * (1 - decay)
        y2 = decay * y2 + x * (1 - decay)
        xn = x - kappa * x * dt + sigma * np.sqrt(var) * dw
        bnext = np.minimum(np.minimum(np.exp(-epsilon * (t + dt)), y1), y2)
        xn = np.clip(xn, -bnext, bnext)
        excess = max(excess, float(np.max(np.abs(xn) - np.exp(-epsilon * (t + dt)))))
        x = xn
        l1 = 0.5 * epsilon * (1 + x / y1)
        l2 = 0.5 * epsilon * (1 - x / y2)
        cov += (l1 - lam1) * (l2 - lam2)
        lam1, lam2 = l1, l2
        lam_max = max(lam_max, l1.max(), l2.max())
    est, se = mean_se(cov)
    return NegCorResult(
        covariation=est,
        std_error=se,
        upper95=est + 1.6448536269514722 * se,
        max_intensity=float(lam_max),
        max_abs_x_excess=excess,
        theoretical=float(theo.mean()),
    )


# -------------------------------------------------------------------- pricing oracle

def mean_se(x, antithetic: bool = False) -> tuple[float, float]:
    """Sample mean and standard error (pairs averaged first when antithetic)."""
    x = np.asarray(x, dtype=float)
    if antithetic:
        x = 0.5 * (x[0::2] + x[1::2])
    n = x.shape[0]
    if n < 2:
        return float(x.mean()), float("nan")
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n))


@dataclass(frozen=True)
class McContract:
    """Description of a payoff for :func:`mc_price`.

    Supported ``kind`` values: ``bond_z``, ``bond_m``, ``bond_d``, ``c_d``,
    ``c_dstar``, ``cds_prot``, ``cds_prem``, ``cds_spread``, ``cds_option``,
    ``cdis_option``, ``tranche_prot``, ``tranche_prem``, ``ucva``.

    Valuation is at time 0.  ``tM`` is the maturity, ``t0`` the start of
    protection (or option expiry), ``strike`` a decimal spread.  Option
    payoffs need ``legs`` (per firm ``(psi_prot, psi_prem)`` pairs valued at
    ``t0``).  ``exposure`` is a callable ``(tau, state) -> value`` for UCVA.
    Tranches use ``n_a``, ``n_d`` in units of defaults.
    """

    kind: str
    tM: float
    t0: float = 0.0
    r: float = 0.0
    recovery: float = 0.0
    frequency: int = 4
    strike: float = 0.0
    firm: int = 0
    legs: tuple | None = None
    exposure: Callable | None = None
    n_a: int = 0
    n_d: int = 0


_KINDS = {
    "bond_z", "bond_m", "bond_d", "c_d", "c_dstar", "cds_prot", "cds_prem", "cds_spread",
    "cds_option", "cdis_option", "tranche_prot", "tranche_prem", "ucva",
}


def _cds_pathwise(tau, t0, dates, r, delta):
    hit = (tau > t0) & (tau <= dates[-1])
    prot = np.where(hit, (1 - delta) * np.exp(-r * np.where(hit, tau, 0.0)), 0.0)
    prem = np.zeros_like(tau)
    prev = t0
    for tj in dates:
        prem += np.where(tau > tj, (tj - prev) * np.exp(-r * tj), 0.0)
        inside = (tau > prev) & (tau <= tj)
        prem += np.where(inside, (tau - prev) * np.exp(-r * np.where(inside, tau, 0.0)), 0.0)
        prev = tj
    return prot, prem


def mc_price(contract: McContract, ens: PathEnsemble, defaults: np.ndarray | None = None) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of a contract at time 0.

    Parameters
    ----------
    contract : McContract
    ens : PathEnsemble
    defaults : ndarray, optional
        Default times ``(n_paths, n_firms)``; defaults to those sampled
        during simulation.

    Returns
    -------
    estimate, standard_error : float
    """
    from .pricing import TenorGrid

    c = contract
    if c.kind not in _KINDS:
        raise InvalidInputError(f"unsupported contract {c.kind!r}")
    tau_all = ens.default_times if defaults is None else np.asarray(defaults, dtype=float)
    anti = ens.config.antithetic
    if tau_all.shape[1] == 0:
        raise InvalidInputError("the ensemble carries no default times")
    if c.tM > ens.config.horizon + 1e-12:
        raise InvalidInputError("contract maturity beyond the simulated horizon")
    tau = tau_all[:, c.firm]
    r, delta, T = c.r, c.recovery, c.tM
    if c.kind == "bond_z":
        return mean_se(np.exp(-r * T) * (tau > T), anti)
    if c.kind == "bond_m":
        return mean_se(np.exp(-r * T) * ((1 - delta) * (tau > T) + delta), anti)
    if c.kind == "bond_d":
        pay = np.where(tau > T, np.exp(-r * T), delta * np.exp(-r * np.minimum(tau, T)))
        return mean_se(pay, anti)
    if c.kind in ("c_d", "c_dstar"):
        hit = (tau > c.t0) & (tau <= T)
        tt = np.where(hit, tau, 0.0)
        w = tt if c.kind == "c_dstar" else 1.0
        return mean_se(np.where(hit, w * np.exp(-r * tt), 0.0), anti)
    if c.kind in ("cds_prot", "cds_prem", "cds_spread"):
        dates = TenorGrid.regular(c.t0, T, c.frequency).dates
        prot, prem = _cds_pathwise(tau, c.t0, dates, r, delta)
        if c.kind == "cds_prot":
            return mean_se(prot, anti)
        if c.kind == "cds_prem":
            return mean_se(prem, anti)
        if anti:
            prot = 0.5 * (prot[0::2] + prot[1::2])
            prem = 0.5 * (prem[0::2] + prem[1::2])
        mp, mq = prot.mean(), prem.mean()
        s = mp / mq
        resid = (prot - s * prem) / mq
        return float(s), float(np.std(resid, ddof=1) / np.sqrt(resid.shape[0]))
    if c.kind == "cds_option":
        psi_prot, psi_prem = c.legs[0]
        v = ens.state_at(c.t0)
        surv = v[:, : ens.n_blocks] @ ens.firm_weights[c.firm]
        val = (v @ (np.asarray(psi_prot) - c.strike * np.asarray(psi_prem))) / surv
        pay = np.exp(-r * c.t0) * np.where(tau > c.t0, np.maximum(val, 0.0), 0.0)
        return mean_se(pay, anti)
    if c.kind == "cdis_option":
        v = ens.state_at(c.t0)
        N = tau_all.shape[1]
        tot = np.zeros(v.shape[0])
        for i in range(N):
            psi_prot, psi_prem = c.legs[i]
            surv = v[:, : ens.n_blocks] @ ens.firm_weights[i]
            val = (v @ (np.asarray(psi_prot) - c.strike * np.asarray(psi_prem))) / surv
            tot += np.where(tau_all[:, i] > c.t0, val, 1.0 - delta)
        pay = np.exp(-r * c.t0) * np.maximum(tot / N, 0.0)
        return mean_se(pay, anti)
    if c.kind in ("tranche_prot", "tranche_prem"):
        N = tau_all.shape[1]
        lgd = (1 - delta) / N
        Ka, Kd = c.n_a * lgd, c.n_d * lgd
        srt = np.sort(tau_all, axis=1)

        def tranche_loss(k):
            return np.clip(k * lgd - Ka, 0.0, Kd - Ka)

        if c.kind == "tranche_prot":
            pay = np.zeros(srt.shape[0])
            for k in range(1, N + 1):
                tk = srt[:, k - 1]
                inside = (tk > c.t0) & (tk <= T)
                jump = tranche_loss(k) - tranche_loss(k - 1)
                pay += np.where(inside, jump * np.exp(-r * np.where(inside, tk, 0.0)), 0.0)
            return mean_se(pay, anti)
        dates = TenorGrid.regular(c.t0, T, c.frequency).all_dates
        pay = np.zeros(srt.shape[0])
        for j in range(1, dates.shape[0]):
            lo, hi = dates[j - 1], dates[j]
            # integral over (lo, hi] of the outstanding notional Kd - Ka - T_u
            integ = np.zeros(srt.shape[0])
            prev = np.full(srt.shape[0], lo)
            for k in range(0, N + 1):
                nxt = np.clip(srt[:, k], lo, hi) if k < N else np.full(srt.shape[0], hi)
                integ += (Kd - Ka - tranche_loss(k)) * (nxt - prev)
                prev = np.maximum(prev, nxt)
            pay += np.exp(-r * hi) * integ
        return mean_se(pay, anti)
    if c.kind == "ucva":
        hit = (tau > c.t0) & (tau <= T)
        vt = ens.default_states[:, c.firm, :]
        tt = np.where(hit, tau, 0.0)
        vals = np.zeros(tau.shape[0])
        idx = np.flatnonzero(hit)
        if idx.size:
            vals[idx] = np.exp(-r * tt[idx]) * np.asarray(c.exposure(tt[idx], vt[idx]), dtype=float)
        return mean_se(vals, anti)
    raise InvalidInputError(f"unsupported contract {c.kind!r}")  # pragma: no cover

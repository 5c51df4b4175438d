"""Factor filtering and parameter calibration from CDS spread panels.

Under a cascade model the par spread of a spot-start CDS depends on the
state only through ``z = X / Y``, and the zero-value condition
``psi_cds^T (1, z) = 0`` is affine in ``z``.  At each date the filter
solves a box-constrained linear least-squares problem in ``z`` whose
residuals approximate spread errors; parameters are then chosen by
Nelder-Mead on the aggregate spread RMSE with a quadratic penalty on the
cascade constraint.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date as _date

import numpy as np
import scipy.linalg as sla
from numba import njit
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

from ._validation import check_finite_array, check_recovery, check_scalar, check_vector
from .exceptions import CalibrationError, InvalidInputError
from .model import LhccParams, LhcParams, lhcc_to_lhc
from .pricing import TenorGrid, cds_legs

__all__ = [
    "QuotePanel",
    "FilterOutput",
    "CalibResult",
    "RmseTable",
    "box_lsq",
    "tenor_legs",
    "filter_date",
    "filter_panel",
    "model_spreads",
    "calibrate",
    "rescale_factors",
    "rmse_report",
    "synthetic_panel",
    "LHCCCalibrator",
    "DAYS_PER_YEAR",
    "PENALTY",
]

DAYS_PER_YEAR = 365.25
#: Penalty weight on squared constraint violations, in bp^2.
PENALTY = 1e6
BP = 1e-4


# ---------------------------------------------------------------- data

@dataclass(frozen=True)
class QuotePanel:
    """CDS par spreads of one firm on a set of dates.

    Attributes
    ----------
    dates : tuple of str
        ISO-8601 dates in ascending order.
    tenors : ndarray, shape (K,)
        Distinct positive maturities in years.
    spreads : ndarray, shape (n_dates, K)
        Spreads in basis points; ``nan`` marks a missing quote.
    firm : str
    recovery : float
    r : float
    """

    dates: tuple
    tenors: np.ndarray
    spreads: np.ndarray
    firm: str = ""
    recovery: float = 0.4
    r: float = 0.0

    def __post_init__(self):
        dates = tuple(str(d) for d in self.dates)
        parsed = [_date.fromisoformat(d) for d in dates]
        if any(b <= a for a, b in zip(parsed, parsed[1:])):
            raise InvalidInputError("dates must be strictly ascending")
        ten = check_vector(self.tenors, "tenors")
        if np.any(ten <= 0) or np.unique(ten).shape[0] != ten.shape[0]:
            raise InvalidInputError("tenors must be positive and distinct")
        S = np.asarray(self.spreads, dtype=float)
        if S.shape != (len(dates), ten.shape[0]):
            raise InvalidInputError(f"spreads must have shape {(len(dates), ten.shape[0])}")
        if np.any(np.isinf(S)) or np.any(S[~np.isnan(S)] < 0):
            raise InvalidInputError("spreads must be finite and non-negative")
        order = np.argsort(ten)
        ten, S = ten[order], S[:, order]
        ten.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tenors", ten)
        object.__setattr__(self, "spreads", S)
        object.__setattr__(self, "recovery", check_recovery(self.recovery))
        object.__setattr__(self, "r", check_scalar(self.r, "r"))

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    def year_fractions(self) -> np.ndarray:
        """Date gaps in years (365.25-day convention); the first entry is 0."""
        days = np.array([_date.fromisoformat(d).toordinal() for d in self.dates], dtype=float)
        return np.concatenate([[0.0], np.diff(days) / DAYS_PER_YEAR])

    @classmethod
    def from_csv(cls, path_or_buffer, firm: str = "", recovery: float = 0.4, r: float = 0.0) -> "QuotePanel":
        """Read ``date,tenor_years,spread_bp`` rows (header required)."""
        if hasattr(path_or_buffer, "read"):
            rows = list(csv.DictReader(path_or_buffer))
        else:
            with open(path_or_buffer, newline="") as fh:
                rows = list(csv.DictReader(fh))
        need = {"date", "tenor_years", "spread_bp"}
        if not rows or not need <= set(rows[0]):
            raise InvalidInputError("quote CSV needs the header date,tenor_years,spread_bp")
        dates = sorted({row["date"].strip() for row in rows})
        tenors = sorted({float(row["tenor_years"]) for row in rows})
        di = {d: i for i, d in enumerate(dates)}
        ti = {t: k for k, t in enumerate(tenors)}
        S = np.full((len(dates), len(tenors)), np.nan)
        for row in rows:
            i, k = di[row["date"].strip()], ti[float(row["tenor_years"])]
            if not np.isnan(S[i, k]):
                raise InvalidInputError(f"duplicate quote on {row['date']} at {row['tenor_years']}y")
            S[i, k] = float(row["spread_bp"])
        return cls(tuple(dates), np.asarray(tenors), S, firm, recovery, r)

    def to_csv(self, path_or_buffer=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "tenor_years", "spread_bp"])
        for i, d in enumerate(self.dates):
            for k, t in enumerate(self.tenors):
                if not np.isnan(self.spreads[i, k]):
                    w.writerow([d, repr(float(t)), repr(float(self.spreads[i, k]))])
        text = buf.getvalue()
        if path_or_buffer is not None:
            if hasattr(path_or_buffer, "write"):
                path_or_buffer.write(text)
            else:
                with open(path_or_buffer, "w", newline="") as fh:
                    fh.write(text)
        return text


# ---------------------------------------------------------------- box least squares

@njit(cache=True)
def _box_lsq_kernel(B, c, z0, tol):
    """Primal active-set solver of ``min 0.5 |B z - c|^2`` on ``[0, 1]^m``.

    Returns the solution and a status flag (0 converged, 1 iteration cap).
    """
    m = B.shape[1]
    H = B.T @ B
    g = B.T @ c
    z = np.empty(m)
    state = np.zeros(m, dtype=np.int64)  # 0 free, -1 at 0, +1 at 1
    for i in range(m):
        zi = z0[i]
        if zi <= 0.0:
            z[i] = 0.0
            state[i] = -1
        elif zi >= 1.0:
            z[i] = 1.0
            state[i] = 1
        else:
            z[i] = zi
    scale = 1.0
    for i in range(m):
        scale = max(scale, abs(H[i, i]))
    for _ in range(50 * (m + 1)):
        grad = H @ z - g
        nf = 0
        for i in range(m):
            if state[i] == 0:
                nf += 1
        if nf > 0:
            F = np.empty(nf, dtype=np.int64)
            q = 0
            for i in range(m):
                if state[i] == 0:
                    F[q] = i
                    q += 1
            HF = np.empty((nf, nf))
            gF = np.empty(nf)
            for a in range(nf):
                gF[a] = -grad[F[a]]
                for b in range(nf):
                    HF[a, b] = H[F[a], F[b]]
            d = np.linalg.lstsq(HF, gF, -1.0)[0]
            alpha = 1.0
            block = -1
            for a in range(nf):
                i = F[a]
                if d[a] > 0.0:
                    s = (1.0 - z[i]) / d[a]
                elif d[a] < 0.0:
                    s = -z[i] / d[a]
                else:
                    continue
                if s < alpha:
                    alpha = s
                    block = i
            for a in range(nf):
                z[F[a]] += alpha * d[a]
            if block >= 0:
                if d[np.searchsorted(F, block)] > 0.0:
                    z[block] = 1.0
                    state[block] = 1
                else:
                    z[block] = 0.0
                    state[block] = -1
                continue
        grad = H @ z - g
        worst = -tol * scale
        idx = -1
        for i in range(m):
            if state[i] == -1:
                mult = grad[i]
            elif state[i] == 1:
                mult = -grad[i]
            else:
                continue
            if mult < worst:
                worst = mult
                idx = i
        if idx < 0:
            return z, 0
        state[idx] = 0
    return z, 1


def box_lsq(B, c, z0=None, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``min 0.5 |B z - c|^2`` subject to ``0 <= z <= 1``.

    Parameters
    ----------
    B : array_like, shape (K, m)
    c : array_like, shape (K,)
    z0 : array_like, optional
        Starting point (clipped into the box).

    Returns
    -------
    z : ndarray
    multipliers : ndarray
        KKT multipliers of the active bounds (zero for free coordinates);
        all are non-negative at a solution.
    """
    B = check_finite_array(B, "B", ndim=2)
    c = check_vector(c, "c", B.shape[0])
    m = B.shape[1]
    z0 = np.full(m, 0.5) if z0 is None else np.asarray(z0, dtype=float)
    z, status = _box_lsq_kernel(B, c, z0, tol)
    grad = B.T @ (B @ z - c)
    mult = np.where(z <= 0.0, grad, np.where(z >= 1.0, -grad, 0.0))
    return z, mult


# ---------------------------------------------------------------- legs by tenor

def _cascade(params) -> LhcParams:
    if isinstance(params, LhccParams):
        return lhcc_to_lhc(params, check=False)
    if isinstance(params, LhcParams):
        return params
    raise InvalidInputError("expected LHCC or LHC parameters")


def tenor_legs(params, tenors, r: float, delta: float, frequency: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Spot-start CDS leg vectors ``psi_prot`` and ``psi_prem`` for each tenor.

    When every tenor is a whole number of coupon periods the dates share
    one grid ``j / frequency`` and the exponentials are powers of a single
    augmented block exponential.

    Returns
    -------
    prot, prem : ndarray, shape (K, m + 1)
    """
    p = _cascade(params)
    lin = p.to_linear()
    tenors = np.asarray(tenors, dtype=float)
    M = np.rint(tenors * frequency).astype(int)
    if not np.allclose(M / frequency, tenors, atol=1e-12) or np.any(M < 1):
        prot, prem = [], []
        for T in tenors:
            legs = cds_legs(p, 0.0, TenorGrid.regular(0.0, T, frequency), r, delta)
            prot.append(legs.psi_prot)
            prem.append(legs.psi_prem)
        return np.asarray(prot), np.asarray(prem)
    A = lin.drift_matrix(r)
    k = A.shape[0]
    h = 1.0 / frequency
    aug = np.zeros((3 * k, 3 * k))
    aug[:k, :k] = A
    aug[:k, k : 2 * k] = np.eye(k)
    aug[k : 2 * k, 2 * k :] = np.eye(k)
    step = sla.expm(aug * h)
    q = lin.default_row()
    arow = np.concatenate([lin.a, np.zeros(lin.m)])
    Mmax = int(M.max())
    pz = np.zeros((Mmax + 1, k))
    pd = np.zeros((Mmax + 1, k))
    pds = np.zeros((Mmax + 1, k))
    pz[0] = arow
    cur = np.eye(3 * k)
    for j in range(1, Mmax + 1):
        cur = cur @ step
        E = cur[:k, :k]
        F1 = cur[:k, k : 2 * k]
        F2 = cur[:k, 2 * k :]
        pz[j] = arow @ E
        pd[j] = q @ F1
        pds[j] = q @ (j * h * F1 - F2)
    cz = np.cumsum(pz, axis=0)
    cd = np.cumsum(pd, axis=0)
    prot = (1.0 - delta) * pd[M]
    # sum_{j=1}^{M} h pz_j + pds_M - t_{M-1} pd_M + sum_{j=1}^{M-1} h pd_j
    prem = h * (cz[M] - cz[0]) + pds[M] - ((M - 1) * h)[:, None] * pd[M] + h * (cd[M - 1] - cd[0])
    return prot, prem


def model_spreads(prot: np.ndarray, prem: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Par spreads in bp for normalised factors ``Z`` (rows) and leg vectors per tenor."""
    Z = np.atleast_2d(Z)
    V = np.hstack([np.ones((Z.shape[0], 1)), Z])
    return (V @ prot.T) / (V @ prem.T) / BP


# ---------------------------------------------------------------- filtering

@dataclass(frozen=True)
class FilterOutput:
    """Filtered factors on every panel date.

    Attributes
    ----------
    z : ndarray, shape (n_dates, m)
        Normalised factors ``X / Y`` in ``[0, 1]``.
    y : ndarray, shape (n_dates,)
        Survival level from ``Y_i = Y_{i-1} - gamma^T X_{i-1} dt``, ``Y_0 = 1``.
    x : ndarray, shape (n_dates, m)
    residual : ndarray, shape (n_dates,)
        Weighted least-squares objective at the solution.
    skipped : ndarray of bool
        Dates without quotes; their factors repeat the previous date.
    """

    z: np.ndarray
    y: np.ndarray
    x: np.ndarray
    residual: np.ndarray
    skipped: np.ndarray

    def to_csv(self, dates, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.z.shape[1]
        w.writerow(["date", "y"] + [f"x{i + 1}" for i in range(m)])
        for d, y, x in zip(dates, self.y, self.x):
            w.writerow([d, repr(float(y))] + [repr(float(v)) for v in x])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@njit(cache=True)
def _filter_kernel(prot, prem, S, z_init, gamma, dts, tol):
    D, K = S.shape
    m = prot.shape[1] - 1
    Z = np.empty((D, m))
    Y = np.empty(D)
    X = np.empty((D, m))
    res = np.zeros(D)
    skipped = np.zeros(D, dtype=np.bool_)
    zp = z_init.copy()
    y = 1.0
    for i in range(D):
        if i > 0:
            acc = 0.0
            for j in range(m):
                acc += gamma[j] * X[i - 1, j]
            y = y - acc * dts[i]
        n_obs = 0
        for k in range(K):
            if not np.isnan(S[i, k]):
                n_obs += 1
        if n_obs == 0:
            skipped[i] = True
            Z[i] = zp
        else:
            B = np.empty((n_obs, m))
            c = np.empty(n_obs)
            q = 0
            for k in range(K):
                s = S[i, k]
                if np.isnan(s):
                    continue
                w = prem[k, 0]
                for j in range(m):
                    w += prem[k, 1 + j] * zp[j]
                c[q] = -(prot[k, 0] - s * prem[k, 0]) / w
                for j in range(m):
                    B[q, j] = (prot[k, 1 + j] - s * prem[k, 1 + j]) / w
                q += 1
            z, _ = _box_lsq_kernel(B, c, zp, tol)
            r = B @ z - c
            res[i] = 0.5 * (r @ r)
            Z[i] = z
            zp = z
        Y[i] = y
        for j in range(m):
            X[i, j] = y * Z[i, j]
    return Z, Y, X, res, skipped


def _z_start(prot, prem, S, m, tol):
    """Two-pass start for the first quoted date: weights first at ``z = 1/2``, then at the solution."""
    row = np.flatnonzero(~np.all(np.isnan(S), axis=1))
    if row.size == 0:
        return np.full(m, 0.5)
    z = np.full(m, 0.5)
    for _ in range(2):
        Z, *_ = _filter_kernel(prot, prem, S[row[:1]], z, np.zeros(m), np.zeros(1), tol)
        z = Z[0].copy()
    return z


def filter_date(params, tenors, spreads_bp, z_prev, r: float = 0.0, delta: float = 0.4, frequency: int = 4):
    """Filter ``z`` on one date from spreads quoted at ``tenors``.

    Returns
    -------
    z : ndarray
    residual : float
        Weighted objective ``0.5 sum_k (psi_cds^T (1, z) / psi_prem^T (1, z_prev))^2``.
    """
    p = _cascade(params)
    S = np.asarray(spreads_bp, dtype=float).reshape(1, -1) * BP
    if np.all(np.isnan(S)):
        raise InvalidInputError("no quotes on this date")
    z_prev = check_vector(z_prev, "z_prev", p.m)
    if np.any(z_prev < 0) or np.any(z_prev > 1):
        raise InvalidInputError("z_prev must lie in [0, 1]")
    prot, prem = tenor_legs(p, tenors, r, delta, frequency)
    Z, _, _, res, _ = _filter_kernel(prot, prem, S, z_prev, np.zeros(p.m), np.zeros(1), 1e-12)
    return Z[0], float(res[0])


def filter_panel(params, panel: QuotePanel, frequency: int = 4, z_init=None, legs=None) -> FilterOutput:
    """Run the date-by-date filter and the survival recursion over a panel."""
    p = _cascade(params)
    prot, prem = legs if legs is not None else tenor_legs(p, panel.tenors, panel.r, panel.recovery, frequency)
    S = panel.spreads * BP
    z0 = _z_start(prot, prem, S, p.m, 1e-12) if z_init is None else check_vector(z_init, "z_init", p.m)
    Z, Y, X, res, skipped = _filter_kernel(prot, prem, S, z0, p.gamma.astype(float), panel.year_fractions(), 1e-12)
    return FilterOutput(Z, Y, X, res, skipped)


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class RmseTable:
    """Error statistics in bp (model minus market) by maturity and overall."""

    tenors: np.ndarray
    rmse: np.ndarray
    median: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    overall: dict

    def to_csv(self, label: str = "", path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["model", "statistic", "all"] + [f"{t:g}y" for t in self.tenors]
        w.writerow(head)
        for name, key, arr in (
            ("RMSE", "rmse", self.rmse),
            ("Median", "median", self.median),
            ("Min", "min", self.minimum),
            ("Max", "max", self.maximum),
        ):
            w.writerow([label, name, f"{self.overall[key]:.2f}"] + [f"{v:.2f}" for v in arr])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def as_dict(self) -> dict:
        return {
            "tenors": [float(t) for t in self.tenors],
            "rmse_bp": [float(v) for v in self.rmse],
            "median_bp": [float(v) for v in self.median],
            "min_bp": [float(v) for v in self.minimum],
            "max_bp": [float(v) for v in self.maximum],
            "overall": {k: float(v) for k, v in self.overall.items()},
        }


def _stats(err: np.ndarray) -> tuple:
    if err.size == 0:
        return (np.nan,) * 4
    return (float(np.sqrt(np.mean(err**2))), float(np.median(err)), float(err.min()), float(err.max()))


def rmse_report(output: FilterOutput, panel: QuotePanel, params, frequency: int = 4) -> RmseTable:
    """Model minus market spread errors in bp by maturity and over all quotes."""
    prot, prem = tenor_legs(params, panel.tenors, panel.r, panel.recovery, frequency)
    E = model_spreads(prot, prem, output.z) - panel.spreads
    cols = [_stats(E[:, k][~np.isnan(E[:, k])]) for k in range(E.shape[1])]
    allv = _stats(E[~np.isnan(E)])
    arr = np.asarray(cols).T if cols else np.zeros((4, 0))
    return RmseTable(
        panel.tenors.copy(), arr[0], arr[1], arr[2], arr[3],
        {"rmse": allv[0], "median": allv[1], "min": allv[2], "max": allv[3]},
    )


# ---------------------------------------------------------------- calibration

def rescale_factors(params: LhccParams, c) -> LhccParams:
    """Cascade parameters for the factors ``diag(c) X``.

    The rescaled model produces identical spreads once the filtered
    factors are multiplied by ``c`` (provided they stay in ``[0, 1]``).
    """
    c = check_vector(c, "c", params.m)
    if np.any(c <= 0):
        raise InvalidInputError("scales must be positive")
    theta = params.theta * c / np.append(c[1:], 1.0)
    return LhccParams(params.gamma1 / c[0], params.kappa, theta, params.sigma)


@dataclass(frozen=True)
class CalibResult:
    """Outcome of :func:`calibrate`."""

    params: LhccParams
    rmse_bp: float
    table: RmseTable
    filtered: FilterOutput
    objective: float
    n_evaluations: int
    starts: tuple = field(default=(), repr=False)

    def as_dict(self) -> dict:
        p = self.params
        return {
            "params": {
                "gamma1": float(p.gamma1),
                "kappa": [float(v) for v in p.kappa],
                "theta": [float(v) for v in p.theta],
                "sigma": [float(v) for v in p.sigma],
            },
            "binding": [bool(b) for b in p.binding(1e-9)],
            "gap": [float(g) for g in p.gap()],
            "rmse_bp": float(self.rmse_bp),
            "objective": float(self.objective),
            "n_evaluations": int(self.n_evaluations),
            "table": self.table.as_dict(),
        }


class _Objective:
    """RMSE^2 in bp^2 plus the penalty, as a function of unconstrained coordinates.

    Coordinates are ``log gamma1`` (unless fixed) and ``log kappa``.  Under
    ``normalization="binding"`` the ratios are tied to the bound,
    ``theta = 1 - gamma1/kappa``; under ``"free"`` raw ratios ``rho`` follow
    with ``theta = (1 - gamma1/kappa)^+ clip(rho, 0, 1)``.  Leaving the
    admissible set is penalised.
    """

    def __init__(self, panel: QuotePanel, m: int, gamma1_fixed, sigma, frequency, normalization="binding"):
        self.panel = panel
        self.m = m
        self.g1 = gamma1_fixed
        self.sigma = np.asarray(sigma, dtype=float)
        self.frequency = frequency
        self.free = normalization == "free"
        self.S = panel.spreads * BP
        self.mask = ~np.isnan(panel.spreads)
        self.dts = panel.year_fractions()
        self.n_eval = 0

    def unpack(self, u):
        u = np.asarray(u, dtype=float)
        if self.g1 is None:
            g1, u = float(np.exp(u[0])), u[1:]
        else:
            g1 = float(self.g1)
        kappa = np.exp(u[: self.m])
        room = np.maximum(1.0 - g1 / kappa, 0.0)
        viol = np.sum(np.maximum(g1 / kappa - 1.0, 0.0) ** 2)
        if self.free:
            rho = u[self.m :]
            theta = room * np.clip(rho, 0.0, 1.0)
            viol += np.sum(np.maximum(rho - 1.0, 0.0) ** 2 + np.maximum(-rho, 0.0) ** 2)
        else:
            theta = room
        return LhccParams(g1, kappa, theta, self.sigma), viol

    def pack(self, p: LhccParams):
        u = [np.log(p.kappa)]
        if self.free:
            room = 1.0 - p.gamma1 / p.kappa
            u.append(np.where(room > 0, p.theta / np.where(room > 0, room, 1.0), 0.0))
        if self.g1 is None:
            u.insert(0, [np.log(p.gamma1)])
        return np.concatenate(u)

    def rmse(self, p: LhccParams) -> float:
        lhc = lhcc_to_lhc(p, check=False)
        prot, prem = tenor_legs(lhc, self.panel.tenors, self.panel.r, self.panel.recovery, self.frequency)
        z0 = _z_start(prot, prem, self.S, self.m, 1e-12)
        Z, *_ = _filter_kernel(prot, prem, self.S, z0, lhc.gamma.astype(float), self.dts, 1e-12)
        E = model_spreads(prot, prem, Z) - self.panel.spreads
        e = E[self.mask]
        val = float(np.sqrt(np.mean(e**2)))
        return val if np.isfinite(val) else 1e6

    def __call__(self, u) -> float:
        self.n_eval += 1
        try:
            p, viol = self.unpack(u)
        except InvalidInputError:
            return 1e12
        return self.rmse(p) ** 2 + PENALTY * viol


def calibrate(
    panel: QuotePanel,
    m: int,
    gamma1: float | None = None,
    n_starts: int = 16,
    seed: int = 0,
    sigma=None,
    frequency: int = 4,
    maxiter: int = 4000,
    x0: LhccParams | None = None,
    normalization: str = "binding",
) -> CalibResult:
    """Fit cascade parameters to a quote panel.

    Parameters
    ----------
    panel : QuotePanel
    m : int
        Number of factors.
    gamma1 : float, optional
        Fixed intensity loading; fitted when ``None``.
    n_starts : int
        Randomised Nelder-Mead starts; the best run is polished by a restart.
    seed : int
    sigma : array_like, optional
        Volatilities carried into the result (spreads do not depend on them).
    x0 : LhccParams, optional
        Extra deterministic start.
    normalization : {"binding", "free"}
        Spreads are unchanged when the factors are rescaled,
        ``X -> diag(c) X`` with ``gamma1 -> gamma1/c_1``,
        ``theta_i -> theta_i c_i / c_{i+1}`` and ``theta_m -> c_m theta_m``, so
        a panel pins down only ``m + 1`` combinations.  ``"binding"`` picks
        the representative on which every cascade constraint binds;
        ``"free"`` searches all ``2m + 1`` coordinates and returns whichever
        member of the flat set the search stops at.

    Returns
    -------
    CalibResult
    """
    if panel.n_dates == 0 or np.all(np.isnan(panel.spreads)):
        raise InvalidInputError("the panel has no quotes")
    m = int(m)
    if m < 1:
        raise InvalidInputError("m must be positive")
    if normalization not in ("binding", "free"):
        raise InvalidInputError("normalization must be 'binding' or 'free'")
    sigma = np.full(m, 0.5) if sigma is None else check_vector(sigma, "sigma", m)
    obj = _Objective(panel, m, gamma1, sigma, frequency, normalization)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x43414C42]))
    starts = []
    if x0 is not None:
        starts.append(obj.pack(x0))
    for _ in range(int(n_starts)):
        g1 = float(np.exp(rng.uniform(np.log(0.02), np.log(0.5)))) if gamma1 is None else float(gamma1)
        kappa = g1 * np.exp(rng.uniform(np.log(1.2), np.log(8.0), size=m))
        u = [np.log(kappa)]
        if obj.free:
            u.append(rng.uniform(0.3, 1.0, size=m))
        if gamma1 is None:
            u.insert(0, [np.log(g1)])
        starts.append(np.concatenate(u))
    opts = {"xatol": 1e-8, "fatol": 1e-10, "maxiter": maxiter, "maxfev": maxiter, "adaptive": False}
    runs = []
    for i, u0 in enumerate(starts):
        res = minimize(obj, u0, method="Nelder-Mead", options=opts)
        runs.append((float(res.fun), i, res.x))
    runs.sort(key=lambda t: (t[0], t[1]))
    best_f, _, best_u = runs[0]
    # polish: restart from the best vertex until no further improvement
    for _ in range(3):
        res = minimize(obj, best_u, method="Nelder-Mead", options=opts)
        if res.fun < best_f - 1e-14:
            best_f, best_u = float(res.fun), res.x
        else:
            break
    params, viol = obj.unpack(best_u)
    if viol > 1e-10 or not np.isfinite(best_f):
        raise CalibrationError("no start produced an admissible parameter set")
    filt = filter_panel(params, panel, frequency)
    table = rmse_report(filt, panel, params, frequency)
    return CalibResult(params, table.overall["rmse"], table, filt, best_f, obj.n_eval, tuple(r[0] for r in runs))


# ---------------------------------------------------------------- synthetic data

def synthetic_panel(
    params: LhccParams,
    n_dates: int = 520,
    tenors=(1, 2, 3, 4, 5, 7, 10),
    start: str = "2005-01-07",
    z0=None,
    r: float = 0.0252,
    recovery: float = 0.4,
    noise_bp: float = 0.0,
    seed: int = 0,
    frequency: int = 4,
    firm: str = "synthetic",
) -> tuple[QuotePanel, np.ndarray]:
    """Weekly spreads generated by the model from a simulated factor path.

    Returns
    -------
    panel : QuotePanel
    states : ndarray, shape (n_dates, 1 + m)
        Simulated ``(Y, X)`` on the panel dates; the spreads depend on
        them through ``X / Y`` only.
    """
    from .model import State
    from .sim import PathConfig, simulate_paths

    lhc = lhcc_to_lhc(params, check=False)
    m = params.m
    d0 = _date.fromisoformat(start)
    dates = tuple((_date.fromordinal(d0.toordinal() + 7 * i)).isoformat() for i in range(n_dates))
    dt_w = 7.0 / DAYS_PER_YEAR
    z0 = np.full(m, 0.1) if z0 is None else check_vector(z0, "z0", m)
    times = tuple(dt_w * i for i in range(n_dates))
    sub = 7
    cfg = PathConfig(
        dt=dt_w / sub, horizon=dt_w * max(n_dates - 1, 1), n_paths=1, seed=seed,
        record_times=times, store_paths=False,
    )
    ens = simulate_paths(lhc, State(1.0, z0), cfg)
    V = ens.states[0]
    idx = [int(np.argmin(np.abs(ens.times - t))) for t in times]
    V = V[idx]
    Z = np.clip(V[:, 1:] / V[:, :1], 0.0, 1.0)
    prot, prem = tenor_legs(lhc, tenors, r, recovery, frequency)
    S = model_spreads(prot, prem, Z)
    if noise_bp > 0:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x4E4F4953]))
        S = np.maximum(S + noise_bp * rng.standard_normal(S.shape), 0.0)
    return QuotePanel(dates, np.asarray(tenors, dtype=float), S, firm, recovery, r), V


# ---------------------------------------------------------------- estimator

class LHCCCalibrator(BaseEstimator):
    """Scikit-learn style wrapper around :func:`calibrate`.

    ``X`` is a :class:`QuotePanel`.  :meth:`fit` estimates the parameters,
    :meth:`transform` returns filtered factors ``z``, :meth:`predict` the
    model spreads in bp, and :meth:`score` the negative RMSE in bp.
    """

    def __init__(
        self, m: int = 2, gamma1=None, n_starts: int = 16, seed: int = 0, sigma=None, frequency: int = 4,
        normalization: str = "binding",
    ):
        self.m = m
        self.normalization = normalization
        self.gamma1 = gamma1
        self.n_starts = n_starts
        self.seed = seed
        self.sigma = sigma
        self.frequency = frequency

    @staticmethod
    def _panel(X) -> QuotePanel:
        if not isinstance(X, QuotePanel):
            raise InvalidInputError("X must be a QuotePanel")
        return X

    def fit(self, X, y=None):
        panel = self._panel(X)
        self.result_ = calibrate(
            panel, self.m, self.gamma1, self.n_starts, self.seed, self.sigma, self.frequency,
            normalization=self.normalization,
        )
        self.params_ = self.result_.params
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit before using the estimator")

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return filter_panel(self.params_, self._panel(X), self.frequency).z

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        panel = self._panel(X)
        prot, prem = tenor_legs(self.params_, panel.tenors, panel.r, panel.recovery, self.frequency)
        return model_spreads(prot, prem, self.transform(panel))

    def score(self, X, y=None) -> float:
        self._check_fitted()
        panel = self._panel(X)
        out = filter_panel(self.params_, panel, self.frequency)
        return -rmse_report(out, panel, self.params_, self.frequency).overall["rmse"]

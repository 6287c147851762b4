"""Durbin-Watson serial correlation test on the residuals of an excited loop.

Pipeline: residuals -> (D_hat, rho_bar, sigma2_hat, tau2_hat) -> chi-square(1)
statistic. ``T`` standardises (D_hat - 2)^2 by the plug-in variance tau2_hat;
``T_simple`` uses the null-hypothesis variance (sigma2_hat + nu2) / nu2.

The array functions broadcast over leading axes, so a whole batch of
replications can be tested at once with :func:`evaluate_batch`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from arxdw.asymptotics import tau2_formula

SIGMA2_FLOOR = 1e-8

Statistic = Literal["T", "T_simple"]

REPORT_FIELDS = (
    "d_hat",
    "rho_bar",
    "sigma2_hat",
    "tau2_hat",
    "t_n",
    "t_simple",
    "p_value",
    "reject",
    "valid",
)


class InvalidResult(ArithmeticError):
    """A statistic is undefined for the given residuals."""


def residuals(
    x: ArrayLike, u: ArrayLike, theta_hat: ArrayLike, history: ArrayLike | None = None
) -> NDArray[np.float64]:
    """Residuals eps_hat_0..eps_hat_n of an evaluation window.

    eps_hat_0 = X_0 and eps_hat_k = X_k - U_{k-1} - theta_hat^T (X_{k-1}, ..., X_{k-p}).
    Outputs before the window start come from ``history`` when given,
    otherwise they are taken as zero.

    Parameters
    ----------
    x : array_like, shape (..., n+1)
        Outputs X_0..X_n.
    u : array_like, shape (..., n)
        Controls U_0..U_{n-1}.
    theta_hat : array_like, shape (..., p)
        A single estimate used for every k.
    history : array_like, shape (..., m), optional
        Outputs preceding X_0 in time order (..., X_{-2}, X_{-1}); only the
        last p - 1 are used.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    n = x.shape[-1] - 1
    if n < 1:
        raise ValueError("need at least two outputs (n >= 1)")
    if u.shape[-1] != n:
        raise ValueError(f"expected {n} controls for {n + 1} outputs, got {u.shape[-1]}")
    p = theta_hat.shape[-1]
    lead = p - 1
    padded = np.zeros(x.shape[:-1] + (lead + n + 1,))
    padded[..., lead:] = x
    if history is not None and lead > 0:
        h = np.asarray(history, dtype=float)[..., -lead:]
        padded[..., lead - h.shape[-1] : lead] = h
    eps = x.copy()
    eps[..., 1:] -= u
    for j in range(1, p + 1):
        # X_{k-j} for k = 1..n
        eps[..., 1:] -= theta_hat[..., j - 1 : j] * padded[..., lead + 1 - j : lead + n + 1 - j]
    return eps


def _dw_parts(eps: NDArray[np.float64]):
    num = np.sum(np.diff(eps, axis=-1) ** 2, axis=-1)
    den = np.sum(eps**2, axis=-1)
    return num, den


def _rho_parts(eps: NDArray[np.float64]):
    num = np.sum(eps[..., 1:] * eps[..., :-1], axis=-1)
    den = np.sum(eps[..., :-1] ** 2, axis=-1)
    return num, den


def dw_statistic(eps: ArrayLike):
    """Durbin-Watson ratio sum (e_k - e_{k-1})^2 / sum e_k^2."""
    num, den = _dw_parts(np.asarray(eps, dtype=float))
    if np.any(den <= 0):
        raise InvalidResult("Durbin-Watson statistic undefined for all-zero residuals")
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def rho_bar(eps: ArrayLike):
    """Least squares lag-one regression coefficient of the residuals."""
    num, den = _rho_parts(np.asarray(eps, dtype=float))
    if np.any(den <= 0):
        raise InvalidResult("rho_bar undefined: lagged residuals are all zero")
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def _sigma2_raw(x: ArrayLike, nu2: float):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 1:
        raise ValueError("need at least one output")
    return np.mean(x**2, axis=-1) - nu2


def sigma2_hat(x: ArrayLike, nu2: float):
    """Innovation variance estimate mean(X_k^2) - nu2 over X_1..X_n.

    Non-positive values are clamped to ``SIGMA2_FLOOR``; :func:`run_test`
    reports such windows as degenerate.
    """
    raw = _sigma2_raw(x, nu2)
    out = np.where(raw > 0, raw, SIGMA2_FLOOR)
    return float(out) if np.ndim(out) == 0 else out


def tau2_hat(rho_bar: ArrayLike, sigma2_hat: ArrayLike, nu2: float, p: int):
    """Plug-in variance: the tau^2 polynomial at (rho_bar, sigma2_hat).

    Returns NaN where |rho_bar| >= 1. Non-positive results are returned
    as computed; callers treat them as degenerate.
    """
    r = np.asarray(rho_bar, dtype=float)
    s = np.asarray(sigma2_hat, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(np.abs(r) < 1, tau2_formula(r, s, nu2, p), np.nan)
    return float(out) if np.ndim(out) == 0 else out


def test_statistics(d_hat, tau2_hat, sigma2_hat, nu2: float, n: int, tn2_squared: bool = False):
    """Return (T_n, T_simple).

    T_n = n (D - 2)^2 / (4 tau2_hat) and
    T_simple = m nu2 (D - 2)^2 / (4 (sigma2_hat + nu2)) with m = n, or
    m = n^2 when ``tn2_squared`` is set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    dev2 = (np.asarray(d_hat, dtype=float) - 2.0) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t_n = n * dev2 / (4.0 * np.asarray(tau2_hat, dtype=float))
    scale = float(n) ** 2 if tn2_squared else float(n)
    t_simple = scale * nu2 * dev2 / (4.0 * (np.asarray(sigma2_hat, dtype=float) + nu2))
    if np.ndim(t_n) == 0 and np.ndim(t_simple) == 0:
        return float(t_n), float(t_simple)
    return t_n, t_simple


# keep pytest from collecting the function above as a test
test_statistics.__test__ = False  # type: ignore[attr-defined]


_STD_NORMAL = NormalDist()


def chi2_quantile_1df(alpha: float) -> float:
    """Upper alpha critical value of chi-square(1): the squared z_{1 - alpha/2}."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    z = _STD_NORMAL.inv_cdf(1.0 - alpha / 2.0)
    return z * z


def _chi2_sf_scalar(t: float) -> float:
    if t < 0:
        raise ValueError(f"chi-square statistic must be nonnegative, got {t}")
    return math.erfc(math.sqrt(t / 2.0))


_chi2_sf_vec = np.vectorize(_chi2_sf_scalar, otypes=[float])


def chi2_sf_1df(t):
    """Survival function of chi-square(1): erfc(sqrt(t / 2))."""
    if np.ndim(t) == 0:
        return _chi2_sf_scalar(float(t))
    return _chi2_sf_vec(t)


def chi2_cdf_1df(t):
    t = np.asarray(t, dtype=float)
    out = np.vectorize(lambda s: math.erf(math.sqrt(s / 2.0)) if s > 0 else 0.0, otypes=[float])(t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TestReport:
    """Outcome of one serial correlation test.

    ``reject`` is ``None`` when ``valid`` is false; ``reason`` then says why.
    """

    __test__ = False

    d_hat: float
    rho_bar: float
    sigma2_hat: float
    tau2_hat: float
    t_n: float
    t_simple: float
    p_value: float
    reject: bool | None
    valid: bool
    reason: str = ""
    statistic: Statistic = "T"

    def csv_row(self) -> list[str]:
        def fmt(v: float) -> str:
            return repr(float(v))

        reject = "" if self.reject is None else str(int(self.reject))
        return [
            fmt(self.d_hat),
            fmt(self.rho_bar),
            fmt(self.sigma2_hat),
            fmt(self.tau2_hat),
            fmt(self.t_n),
            fmt(self.t_simple),
            fmt(self.p_value),
            reject,
            str(int(self.valid)),
        ]


@dataclass
class BatchEvaluation:
    """Per-replication test quantities from :func:`evaluate_batch`."""

    d_hat: NDArray[np.float64]
    rho_bar: NDArray[np.float64]
    sigma2_hat: NDArray[np.float64]
    tau2_hat: NDArray[np.float64]
    t_n: NDArray[np.float64]
    t_simple: NDArray[np.float64]
    valid: NDArray[np.bool_]
    reason: NDArray[np.object_]

    def statistic(self, which: Statistic) -> NDArray[np.float64]:
        if which == "T":
            return self.t_n
        if which == "T_simple":
            return self.t_simple
        raise ValueError(f"unknown statistic {which!r}")

    def rejections(self, which: Statistic, alpha: float) -> NDArray[np.bool_]:
        """Reject flags; meaningful only where ``valid``."""
        return self.valid & (self.statistic(which) > chi2_quantile_1df(alpha))


def evaluate_batch(
    x: ArrayLike,
    u: ArrayLike,
    theta_hat: ArrayLike,
    nu2: float,
    tn2_squared: bool = False,
    history: ArrayLike | None = None,
) -> BatchEvaluation:
    """Test quantities for a stack of evaluation windows.

    Degenerate windows (zero residuals, clamped sigma2_hat, |rho_bar| >= 1,
    non-positive tau2_hat) are marked invalid instead of raising.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    theta_hat = np.atleast_2d(np.asarray(theta_hat, dtype=float))
    p = theta_hat.shape[-1]
    n = x.shape[-1] - 1
    eps = residuals(x, u, theta_hat, history)

    with np.errstate(divide="ignore", invalid="ignore"):
        dn, dd = _dw_parts(eps)
        d_hat = dn / dd
        rn, rd = _rho_parts(eps)
        rb = rn / rd
    s2_raw = _sigma2_raw(x[..., 1:], nu2)
    s2 = np.where(s2_raw > 0, s2_raw, SIGMA2_FLOOR)
    t2 = np.asarray(tau2_hat(rb, s2, nu2, p), dtype=float).reshape(rb.shape)
    t_n, t_simple = test_statistics(d_hat, t2, s2, nu2, n, tn2_squared)
    t_n = np.asarray(t_n, dtype=float).reshape(rb.shape)
    t_simple = np.asarray(t_simple, dtype=float).reshape(rb.shape)

    reason = np.full(rb.shape, "", dtype=object)
    checks = [
        (dd <= 0, "zero residuals"),
        (rd <= 0, "zero lagged residuals"),
        (s2_raw <= 0, "degenerate sigma2_hat"),
        (~(np.abs(rb) < 1), "|rho_bar| >= 1"),
        (~(t2 > 0), "non-positive tau2_hat"),
    ]
    for mask, why in reversed(checks):
        reason[mask] = why
    valid = reason == ""
    return BatchEvaluation(d_hat, rb, s2, t2, t_n, t_simple, valid.astype(bool), reason)


def run_test(
    x: ArrayLike,
    u: ArrayLike,
    theta_hat: ArrayLike,
    nu2: float,
    p: int | None = None,
    alpha: float = 0.05,
    statistic: Statistic = "T",
    tn2_squared: bool = False,
    history: ArrayLike | None = None,
) -> TestReport:
    """Run the bilateral test on one evaluation window X_0..X_n, U_0..U_{n-1}.

    ``history`` holds outputs preceding the window (see :func:`residuals`).

    H0 (rho = 0) is rejected when the chosen statistic exceeds the
    (1 - alpha) quantile of chi-square(1).
    """
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if p is not None and theta_hat.shape != (p,):
        raise ValueError(f"theta_hat must have length p={p}, got shape {theta_hat.shape}")
    if statistic not in ("T", "T_simple"):
        raise ValueError(f"unknown statistic {statistic!r}")
    a_alpha = chi2_quantile_1df(alpha)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim != 1 or u.ndim != 1:
        raise ValueError("run_test expects one window; use evaluate_batch for stacks")
    ev = evaluate_batch(x, u, theta_hat, nu2, tn2_squared, history)
    valid = bool(ev.valid[0])
    stat = float(ev.statistic(statistic)[0])
    if valid:
        p_value = chi2_sf_1df(stat)
        reject: bool | None = stat > a_alpha
    else:
        p_value, reject = float("nan"), None
    return TestReport(
        d_hat=float(ev.d_hat[0]),
        rho_bar=float(ev.rho_bar[0]),
        sigma2_hat=float(ev.sigma2_hat[0]),
        tau2_hat=float(ev.tau2_hat[0]),
        t_n=float(ev.t_n[0]),
        t_simple=float(ev.t_simple[0]),
        p_value=p_value,
        reject=reject,
        valid=valid,
        reason=str(ev.reason[0]),
        statistic=statistic,
    )

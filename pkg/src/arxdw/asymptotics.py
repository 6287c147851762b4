"""Closed-form limits: the information-matrix limit Lambda and the variance tau^2.

``tau2_formula`` is shared by :func:`tau2_theoretical` and by the plug-in
estimator in :mod:`arxdw.dwtest`; both evaluate the same polynomial, only
at different arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from arxdw.model import SystemSpec


@dataclass(frozen=True)
class LimitMatrix:
    """Almost-sure limit of S_n / n, assembled as [[L, K^T], [K, H]]."""

    l_scale: float
    k_vec: NDArray[np.float64]
    h: float

    @property
    def p(self) -> int:
        return len(self.k_vec) - 1

    @property
    def l_block(self) -> NDArray[np.float64]:
        return self.l_scale * np.eye(self.p + 1)

    @property
    def lambda_(self) -> NDArray[np.float64]:
        d = self.p + 2
        lam = np.empty((d, d))
        lam[:-1, :-1] = self.l_block
        lam[-1, :-1] = self.k_vec
        lam[:-1, -1] = self.k_vec
        lam[-1, -1] = self.h
        return lam


def lambda_matrix(spec: SystemSpec) -> LimitMatrix:
    """Limit of S_n / n for the excited closed loop."""
    if not abs(spec.rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {spec.rho}")
    theta, rho, s2, v2 = spec.theta_array, spec.rho, spec.sigma2, spec.nu2
    p = spec.p
    powers = rho ** np.arange(1, p + 1)
    k = np.empty(p + 1)
    k[0] = v2
    k[1:] = -(s2 + v2) * theta - s2 * powers
    h = (
        v2
        + s2 * np.sum((theta + powers) ** 2)
        + v2 * np.sum(theta**2)
        + s2 * rho ** (2 * (p + 1)) / (1 - rho**2)
    )
    return LimitMatrix(s2 + v2, k, float(h))


def schur_det(lm: LimitMatrix, spec: SystemSpec | None = None) -> tuple[float, float]:
    """Schur complement of L in Lambda and det(Lambda).

    With ``spec`` the closed forms in (sigma2, nu2, rho) are used; otherwise
    the Schur complement is H - |K|^2 / l. Either way det = S * l^(p+1).
    """
    l = lm.l_scale
    if spec is None:
        schur = lm.h - float(lm.k_vec @ lm.k_vec) / l
    else:
        s2, v2, rho, p = spec.sigma2, spec.nu2, spec.rho, spec.p
        schur = s2 * (v2 + s2 * rho ** (2 * (p + 1))) / ((1 - rho**2) * (s2 + v2))
    return schur, schur * l ** (lm.p + 1)


def tau2_formula(rho, sigma2, nu2, p: int):
    """The tau^2 polynomial in (rho, sigma2, nu2) for order p.

    Accepts arrays; no range checks.
    """
    r2p = rho ** (2 * p)
    r2p2 = rho ** (2 * (p + 1))
    r4p2 = rho ** (2 * (2 * p + 1))
    g = nu2 + sigma2 * r2p2
    first = (sigma2 - nu2) - (p + 1) * sigma2 * r2p + (p - 1) * sigma2 * r2p2
    second = sigma2 * g * (4 - (4 * p + 3) * r2p + 4 * p * r2p2 - r4p2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1 - rho**2) / ((sigma2 + nu2) * g) * (first**2 + second)


def tau2_theoretical(rho: float, sigma2: float, nu2: float, p: int) -> float:
    """Asymptotic variance of sqrt(n) (rho_bar_n - rho).

    Returns ``inf`` when the denominator vanishes (no excitation at rho = 0).
    """
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    g = nu2 + sigma2 * rho ** (2 * (p + 1))
    if g == 0 or sigma2 + nu2 == 0:
        return float("inf")
    return float(tau2_formula(rho, sigma2, nu2, p))


def dw_limit(rho: float) -> float:
    """Almost-sure limit 2 (1 - rho) of the Durbin-Watson statistic."""
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    return 2.0 * (1.0 - rho)

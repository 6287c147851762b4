"""True-system description and plant/noise recursions for ARX(p,1) with AR(1) noise.

The plant is

    X[n+1] = sum_k theta_k X[n-k+1] + U[n] + eps[n+1]
    eps[n+1] = rho * eps[n] + V[n+1]

Substituting the noise recursion gives an ARX(p+1, 2) model driven by the
white innovation V, whose parameter (the "lifted" parameter) has length p+2
and ends with -rho.

All step functions broadcast over a leading replication axis so the Monte
Carlo driver can advance many independent loops at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class SystemSpec:
    """Parameters of the true ARX(p,1) system and of the excitation.

    Attributes
    ----------
    theta : tuple of float
        Autoregressive coefficients theta_1..theta_p.
    rho : float
        Serial correlation of the driven noise, |rho| < 1.
    sigma2 : float
        Innovation variance of V.
    nu2 : float
        Variance of the persistent excitation xi.
    """

    theta: tuple[float, ...]
    rho: float = 0.0
    sigma2: float = 1.0
    nu2: float = 4.0

    def __post_init__(self) -> None:
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        object.__setattr__(self, "theta", theta)
        if len(theta) < 1:
            raise ValueError("theta must have at least one coefficient (p >= 1)")
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got rho={self.rho}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.nu2 > 0:
            raise ValueError(f"nu2 must be positive, got {self.nu2}")

    @property
    def p(self) -> int:
        return len(self.theta)

    @property
    def theta_array(self) -> NDArray[np.float64]:
        return np.asarray(self.theta, dtype=float)


@dataclass
class LoopState:
    """Rolling state of the closed loop at time n.

    ``x_window`` holds (X[n], X[n-1], ..., X[n-p]); entries before time 0 are
    the initial values (zero by default). With a leading replication axis the
    shapes are (B, p+1) and (B,).
    """

    x_window: NDArray[np.float64]
    u_prev: NDArray[np.float64] | float = 0.0
    eps: NDArray[np.float64] | float = 0.0
    step: int = 0

    @classmethod
    def initial(
        cls,
        p: int,
        x0: float = 0.0,
        eps0: float = 0.0,
        u_init: float = 0.0,
        batch: int | None = None,
    ) -> LoopState:
        shape = (p + 1,) if batch is None else (batch, p + 1)
        x_window = np.zeros(shape)
        x_window[..., 0] = x0
        if batch is None:
            return cls(x_window, float(u_init), float(eps0), 0)
        return cls(x_window, np.full(batch, float(u_init)), np.full(batch, float(eps0)), 0)

    def regressor(self) -> NDArray[np.float64]:
        """Lifted regression vector Phi_n = (X[n], ..., X[n-p], U[n-1])."""
        u = np.asarray(self.u_prev, dtype=float)[..., None]
        return np.concatenate([self.x_window, u], axis=-1)

    def advance(self, x_next: ArrayLike, u: ArrayLike, eps_next: ArrayLike) -> None:
        """Shift the output window and record the control just applied."""
        self.x_window = np.concatenate(
            [np.asarray(x_next, dtype=float)[..., None], self.x_window[..., :-1]], axis=-1
        )
        self.u_prev = u
        self.eps = eps_next
        self.step += 1


@dataclass(frozen=True)
class LiftedParameter:
    """Parameter of the ARX(p+1, 2) rewriting; last entry is -rho."""

    vartheta: NDArray[np.float64] = field(repr=True)

    @property
    def p(self) -> int:
        return self.vartheta.shape[-1] - 2


def noise_step(eps_prev: ArrayLike, rho: float, v: ArrayLike) -> NDArray[np.float64] | float:
    """Advance the AR(1) noise: rho * eps_prev + v."""
    return rho * eps_prev + v


def plant_step(state: LoopState, spec: SystemSpec, u: ArrayLike, eps_next: ArrayLike):
    """Next plant output from the current window; the caller shifts the window."""
    p = spec.p
    return state.x_window[..., :p] @ spec.theta_array + u + eps_next


def lift_parameter(spec: SystemSpec) -> LiftedParameter:
    """Map (theta, rho) to vartheta = (theta; 0; 0) - rho * (-1; theta; 1)."""
    theta = spec.theta_array
    base = np.concatenate([theta, [0.0, 0.0]])
    shift = np.concatenate([[-1.0], theta, [1.0]])
    vartheta = base - spec.rho * shift
    # keep the last coordinate exactly -rho
    vartheta[-1] = -spec.rho
    return LiftedParameter(vartheta)


def delta_matrix(rho: float, p: int) -> NDArray[np.float64]:
    """(p+1) x (p+2) matrix mapping vartheta to (theta; rho) for a given rho.

    Row i < p holds rho**(i-j) in columns j <= i and rho**i in the last
    column; the final row selects -vartheta[-1].
    """
    delta = np.zeros((p + 1, p + 2))
    powers = rho ** np.arange(p)
    for i in range(p):
        delta[i, : i + 1] = powers[i::-1]
        delta[i, -1] = powers[i]
    delta[p, -1] = -1.0
    return delta


def recover_theta_rho(vartheta: LiftedParameter | ArrayLike, p: int) -> tuple[NDArray[np.float64], float]:
    """Invert :func:`lift_parameter`: rho from the last entry, theta via the delta matrix."""
    v = vartheta.vartheta if isinstance(vartheta, LiftedParameter) else np.asarray(vartheta, dtype=float)
    if v.shape != (p + 2,):
        raise ValueError(f"vartheta must have length p+2={p + 2}, got shape {v.shape}")
    rho = -float(v[-1])
    theta = delta_matrix(rho, p)[:p] @ v
    return theta, rho

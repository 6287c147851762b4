"""Recursive least squares on the lifted ARX(p+1, 2) model.

The information matrix is S_n = I + sum_{k<=n} Phi_k Phi_k^T. Its inverse is
carried directly and refreshed by a Sherman-Morrison rank-one update, so each
step costs O((p+2)^2). Everything broadcasts over a leading replication axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from arxdw.model import delta_matrix


@dataclass
class RlsState:
    """Current least squares estimate and inverse information matrix.

    Attributes
    ----------
    vartheta_hat : ndarray, shape (d,) or (B, d)
        Estimate of the lifted parameter, d = p + 2.
    p_matrix : ndarray, shape (d, d) or (B, d, d)
        P_n = S_n^{-1}.
    step : int
        Number of updates folded in.
    """

    vartheta_hat: NDArray[np.float64]
    p_matrix: NDArray[np.float64]
    step: int = 0

    @classmethod
    def initial(cls, p: int, vartheta0: ArrayLike | None = None, batch: int | None = None) -> RlsState:
        d = p + 2
        lead = () if batch is None else (batch,)
        if vartheta0 is None:
            v = np.zeros(lead + (d,))
        else:
            v = np.broadcast_to(np.asarray(vartheta0, dtype=float), lead + (d,)).copy()
        P = np.broadcast_to(np.eye(d), lead + (d, d)).copy()
        return cls(v, P, 0)

    @property
    def dim(self) -> int:
        return self.vartheta_hat.shape[-1]

    def information_matrix(self) -> NDArray[np.float64]:
        """S_n, by explicit inversion of P_n (diagnostics only)."""
        return np.linalg.inv(self.p_matrix)


def rls_update(state: RlsState, phi: ArrayLike, x_next: ArrayLike, u: ArrayLike) -> RlsState:
    """Fold one observation into the estimate.

    S_n = S_{n-1} + phi phi^T is applied to P by Sherman-Morrison, then
    vartheta_{n+1} = vartheta_n + P_n phi (x_next - u - vartheta_n^T phi).
    Returns a new state; the input is left untouched.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != state.vartheta_hat.shape:
        raise ValueError(
            f"regressor shape {phi.shape} does not match estimate shape {state.vartheta_hat.shape}"
        )
    P = state.p_matrix
    Pphi = np.einsum("...ij,...j->...i", P, phi)
    denom = 1.0 + np.einsum("...i,...i->...", phi, Pphi)
    P_new = P - np.einsum("...i,...j->...ij", Pphi, Pphi) / denom[..., None, None]
    P_new = 0.5 * (P_new + np.swapaxes(P_new, -1, -2))

    innovation = np.asarray(x_next, dtype=float) - u - np.einsum("...i,...i->...", state.vartheta_hat, phi)
    # P_n phi == P_{n-1} phi / (1 + phi^T P_{n-1} phi)
    gain = Pphi / denom[..., None]
    vartheta_new = state.vartheta_hat + gain * innovation[..., None]
    return RlsState(vartheta_new, P_new, state.step + 1)


def rho_hat(state: RlsState | ArrayLike) -> NDArray[np.float64] | float:
    """Serial correlation estimate: minus the last lifted coordinate."""
    v = state.vartheta_hat if isinstance(state, RlsState) else np.asarray(state, dtype=float)
    out = -v[..., -1]
    return float(out) if out.ndim == 0 else out


def delta_hat(rho_hat: float, p: int) -> NDArray[np.float64]:
    """Delta matrix evaluated at an estimated rho (any real value allowed)."""
    return delta_matrix(float(rho_hat), p)


def theta_hat(state: RlsState | ArrayLike, p: int) -> NDArray[np.float64]:
    """Estimate of theta: first p rows of delta_hat(rho_hat) applied to vartheta_hat."""
    v = state.vartheta_hat if isinstance(state, RlsState) else np.asarray(state, dtype=float)
    if v.shape[-1] != p + 2:
        raise ValueError(f"expected lifted dimension {p + 2}, got {v.shape[-1]}")
    r = -v[..., -1]
    # vectorised over a leading axis: row i = sum_{j<=i} r^(i-j) v_j + r^i v_last
    out = np.empty(v.shape[:-1] + (p,))
    acc = np.zeros(v.shape[:-1])
    for i in range(p):
        acc = acc * r + v[..., i]
        out[..., i] = acc
    powers = r[..., None] ** np.arange(p)
    return out + powers * v[..., -1:]

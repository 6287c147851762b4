"""Excited certainty-equivalence tracking control and the closed-loop driver.

At every step n the loop forms Phi_n, applies

    U[n] = x[n+1] - vartheta_hat_n^T Phi_n + xi[n+1],

advances the noise and plant, and folds (Phi_n, X[n+1], U[n]) into the
recursive least squares estimate. Estimation and control run from step 0;
the first ``burn_in`` steps are only excluded from the test statistics.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TextIO, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from arxdw.estimator import RlsState, rls_update
from arxdw.model import LoopState, SystemSpec, noise_step, plant_step

OVERFLOW_LIMIT = 1e12

Reference = Callable[[int], float]
Sampler = Callable[[np.random.Generator, tuple[int, ...]], NDArray[np.float64]]
Distribution = Union[str, Sampler]


class SimulationOverflow(FloatingPointError):
    """Raised when a closed-loop output leaves the finite range."""

    def __init__(self, step: int, replication: int | None = None, value: float = float("nan")):
        self.step = step
        self.replication = replication
        where = f"step {step}" if replication is None else f"step {step} (replication {replication})"
        super().__init__(f"closed loop diverged at {where}: |X| = {abs(value):.3g}")


# unit-variance, zero-mean samplers
_SAMPLERS: dict[str, Sampler] = {
    "gaussian": lambda rng, size: rng.standard_normal(size),
    "uniform": lambda rng, size: rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size),
    "rademacher": lambda rng, size: rng.choice(np.array([-1.0, 1.0]), size),
    "laplace": lambda rng, size: rng.laplace(0.0, np.sqrt(0.5), size),
}


def _sampler(dist: Distribution) -> Sampler:
    if callable(dist):
        return dist
    try:
        return _SAMPLERS[dist]
    except KeyError:
        raise ValueError(f"unknown distribution {dist!r}; choose from {sorted(_SAMPLERS)}") from None


@dataclass(frozen=True)
class NoiseConfig:
    """Random streams for the innovation V and the excitation xi.

    Distributions are given as a name from ``gaussian``, ``uniform``,
    ``rademacher``, ``laplace`` or as a callable ``(rng, size)`` returning
    zero-mean unit-variance draws; they are scaled to sigma2 and nu2.
    """

    seed_v: int | np.random.SeedSequence
    seed_xi: int | np.random.SeedSequence
    v_dist: Distribution = "gaussian"
    xi_dist: Distribution = "gaussian"

    @classmethod
    def from_seed(cls, seed: int | np.random.SeedSequence, **kwargs) -> NoiseConfig:
        """Split one master seed into independent V and xi sub-streams."""
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        seed_v, seed_xi = ss.spawn(2)
        return cls(seed_v, seed_xi, **kwargs)

    def draw(self, spec: SystemSpec, steps: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """V[1..steps] and xi[1..steps]."""
        rng_v = np.random.default_rng(self.seed_v)
        rng_xi = np.random.default_rng(self.seed_xi)
        v = np.sqrt(spec.sigma2) * _sampler(self.v_dist)(rng_v, (steps,))
        xi = np.sqrt(spec.nu2) * _sampler(self.xi_dist)(rng_xi, (steps,))
        return np.asarray(v, dtype=float), np.asarray(xi, dtype=float)


def reference_zero() -> Reference:
    return lambda n: 0.0


def reference_constant(c: float) -> Reference:
    c = float(c)
    return lambda n: c


def reference_bounded(seq: Sequence[float]) -> Reference:
    """Reference yielding x[n+1] = seq[n].

    The sequence should be bounded with sum of squares o(n); this is not
    checked. Indexing past the end raises IndexError.
    """
    values = [float(s) for s in seq]
    return lambda n: values[n]


def control_step(vartheta_hat: ArrayLike, phi: ArrayLike, x_ref_next: ArrayLike, xi_next: ArrayLike):
    """Excited tracking control x_ref - vartheta_hat^T phi + xi."""
    vartheta_hat = np.asarray(vartheta_hat, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if vartheta_hat.shape[-1] != phi.shape[-1]:
        raise ValueError(f"estimate length {vartheta_hat.shape[-1]} != regressor length {phi.shape[-1]}")
    out = x_ref_next - np.einsum("...i,...i->...", vartheta_hat, phi) + xi_next
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class SimulationTrace:
    """Time-indexed record of one closed-loop run.

    ``x_out`` is X[0..N], ``u`` is U[0..N-1], ``x_ref`` and ``xi`` are
    x[1..N] and xi[1..N] with N = burn_in + n.
    """

    x_out: NDArray[np.float64]
    u: NDArray[np.float64]
    x_ref: NDArray[np.float64]
    xi: NDArray[np.float64]
    burn_in: int
    spec: SystemSpec
    v: NDArray[np.float64] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if len(self.x_out) != len(self.u) + 1:
            raise ValueError("x_out must be one longer than u")

    @property
    def steps(self) -> int:
        return len(self.u)

    @property
    def n(self) -> int:
        """Length of the evaluation window."""
        return self.steps - self.burn_in

    def window(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Outputs X_0..X_n and controls U_0..U_{n-1} of the evaluation window."""
        return self.x_out[self.burn_in :], self.u[self.burn_in :]

    def write_csv(self, fh: TextIO) -> None:
        """Columns k, X, U, x_ref, xi, burn_in; undefined cells left empty."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "X", "U", "x_ref", "xi", "burn_in"])
        N = self.steps
        for k in range(N + 1):
            w.writerow(
                [
                    k,
                    repr(float(self.x_out[k])),
                    repr(float(self.u[k])) if k < N else "",
                    repr(float(self.x_ref[k - 1])) if k > 0 else "",
                    repr(float(self.xi[k - 1])) if k > 0 else "",
                    int(k < self.burn_in),
                ]
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass
class LoopResult:
    """Raw arrays from :func:`simulate_arrays` (leading replication axis)."""

    x_out: NDArray[np.float64]
    u: NDArray[np.float64]
    rls: RlsState
    checkpoints: dict[int, RlsState]
    information: NDArray[np.float64] | None = None


def simulate_arrays(
    spec: SystemSpec,
    v: NDArray[np.float64],
    xi: NDArray[np.float64],
    x_ref: NDArray[np.float64] | None = None,
    *,
    x0: float = 0.0,
    eps0: float = 0.0,
    u_init: float = 0.0,
    vartheta0: ArrayLike | None = None,
    checkpoints: Sequence[int] = (),
    track_information: bool = False,
) -> LoopResult:
    """Run B closed loops in lockstep from pre-drawn noise.

    Parameters
    ----------
    v, xi : ndarray, shape (B, N)
        Innovations V[1..N] and excitations xi[1..N] per replication.
    x_ref : ndarray, shape (N,) or (B, N), optional
        Reference values x[1..N]; zero when omitted.
    checkpoints : sequence of int
        Step counts at which to keep a copy of the estimator state.
    track_information : bool
        Also accumulate S_n = I + sum Phi Phi^T explicitly (for checks).
    """
    v = np.atleast_2d(v)
    xi = np.atleast_2d(xi)
    B, N = v.shape
    if xi.shape != (B, N):
        raise ValueError(f"xi shape {xi.shape} != v shape {v.shape}")
    ref = np.zeros((B, N)) if x_ref is None else np.broadcast_to(np.asarray(x_ref, dtype=float), (B, N))
    p = spec.p
    d = p + 2

    loop = LoopState.initial(p, x0=x0, eps0=eps0, u_init=u_init, batch=B)
    rls = RlsState.initial(p, vartheta0, batch=B)
    info = np.broadcast_to(np.eye(d), (B, d, d)).copy() if track_information else None
    wanted = set(checkpoints)
    saved: dict[int, RlsState] = {}

    x_out = np.empty((B, N + 1))
    u_out = np.empty((B, N))
    x_out[:, 0] = x0
    for n in range(N):
        if n in wanted:
            saved[n] = RlsState(rls.vartheta_hat.copy(), rls.p_matrix.copy(), rls.step)
        phi = loop.regressor()
        u = control_step(rls.vartheta_hat, phi, ref[:, n], xi[:, n])
        eps_next = noise_step(loop.eps, spec.rho, v[:, n])
        x_next = plant_step(loop, spec, u, eps_next)
        bad = ~(np.abs(x_next) <= OVERFLOW_LIMIT)
        if bad.any():
            r = int(np.flatnonzero(bad)[0])
            raise SimulationOverflow(n + 1, r if B > 1 else None, float(x_next[r]))
        rls = rls_update(rls, phi, x_next, u)
        if info is not None:
            info += phi[:, :, None] * phi[:, None, :]
        loop.advance(x_next, u, eps_next)
        x_out[:, n + 1] = x_next
        u_out[:, n] = u
    if N in wanted:
        saved[N] = RlsState(rls.vartheta_hat.copy(), rls.p_matrix.copy(), rls.step)
    return LoopResult(x_out, u_out, rls, saved, info)


def run_closed_loop(
    spec: SystemSpec,
    noise: NoiseConfig,
    x_ref: Reference | None = None,
    burn_in: int = 100,
    n: int = 500,
    **kwargs,
) -> tuple[SimulationTrace, RlsState]:
    """Simulate ``burn_in + n`` steps of one excited adaptive tracking loop.

    Extra keyword arguments go to :func:`simulate_arrays`. Returns the full
    trace and the final estimator state.
    """
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    steps = burn_in + n
    v, xi = noise.draw(spec, steps)
    ref_fn = x_ref or reference_zero()
    ref = np.array([ref_fn(k) for k in range(steps)], dtype=float)
    res = simulate_arrays(spec, v[None, :], xi[None, :], ref, **kwargs)
    rls = RlsState(res.rls.vartheta_hat[0], res.rls.p_matrix[0], res.rls.step)
    trace = SimulationTrace(res.x_out[0], res.u[0], ref, xi, burn_in, spec, v=v)
    return trace, rls

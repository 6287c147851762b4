"""Replicated closed-loop experiments: empirical level/power tables and KS diagnostics.

Replication ``r`` of cell ``(i, j)`` (i-th rho, j-th n) is seeded from
``SeedSequence(master_seed, spawn_key=(i, j, r))`` and then split into V and
xi sub-streams, so results do not depend on batching or worker count.
Replications inside a cell are simulated in lockstep as numpy batches.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from arxdw.asymptotics import dw_limit, tau2_theoretical
from arxdw.controller import NoiseConfig, SimulationOverflow, simulate_arrays
from arxdw.dwtest import BatchEvaluation, chi2_cdf_1df, evaluate_batch
from arxdw.estimator import theta_hat
from arxdw.model import SystemSpec

StatisticChoice = Literal["T", "T_simple", "both"]

# upper bound on B * (burn_in + n) floats per noise array inside one batch
_BATCH_BUDGET = 2_000_000

CSV_FIELDS = ("rho", "n", "statistic", "rejections", "invalid", "replications", "rate", "ci_halfwidth")
STAT_LABELS = {"T": "T_n", "T_simple": "T_simple"}


class CellError(RuntimeError):
    """A replication inside a grid cell failed."""

    def __init__(self, rho: float, n: int, replication: int, cause: Exception):
        self.rho, self.n, self.replication = rho, n, replication
        super().__init__(f"cell (rho={rho}, n={n}), replication {replication}: {cause}")


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SystemSpec
    rho_grid: tuple[float, ...] = (0.0,)
    n_grid: tuple[int, ...] = (500,)
    replications: int = 1000
    burn_in: int = 100
    alpha: float = 0.05
    statistic: StatisticChoice = "both"
    master_seed: int = 0
    tn2_squared: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if any(n < 10 for n in self.n_grid):
            raise ValueError("every n in n_grid must be >= 10")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.statistic not in ("T", "T_simple", "both"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        for r in self.rho_grid:
            if not abs(r) < 1:
                raise ValueError(f"|rho| must be < 1, got {r}")

    @property
    def statistics(self) -> tuple[str, ...]:
        return ("T", "T_simple") if self.statistic == "both" else (self.statistic,)


@dataclass(frozen=True)
class Cell:
    rejections: int
    invalid: int
    replications: int

    @property
    def valid(self) -> int:
        return self.replications - self.invalid

    @property
    def rate(self) -> float:
        return self.rejections / self.valid if self.valid else float("nan")

    @property
    def ci_halfwidth(self) -> float:
        if not self.valid:
            return float("nan")
        r = self.rate
        return 1.96 * math.sqrt(r * (1 - r) / self.valid)


@dataclass
class RateTable:
    """Rejection counts keyed by (rho, n, statistic)."""

    cells: dict[tuple[float, int, str], Cell] = field(default_factory=dict)
    title: str = ""

    def __getitem__(self, key: tuple[float, int, str]) -> Cell:
        return self.cells[key]

    def rate(self, rho: float, n: int, statistic: str = "T") -> float:
        return self.cells[(float(rho), int(n), statistic)].rate

    @property
    def rhos(self) -> list[float]:
        return sorted({k[0] for k in self.cells})

    @property
    def ns(self) -> list[int]:
        return sorted({k[1] for k in self.cells})

    @property
    def statistics(self) -> list[str]:
        order = {"T": 0, "T_simple": 1}
        return sorted({k[2] for k in self.cells}, key=lambda s: order.get(s, 2))


def replication_noise(seed: int, cell: tuple[int, int], r: int) -> NoiseConfig:
    ss = np.random.SeedSequence(seed, spawn_key=(cell[0], cell[1], r))
    return NoiseConfig.from_seed(ss)


def simulate_cell(
    spec: SystemSpec,
    n: int,
    replications: int,
    burn_in: int = 100,
    seed: int = 0,
    cell: tuple[int, int] = (0, 0),
    tn2_squared: bool = False,
) -> BatchEvaluation:
    """Run ``replications`` independent loops of ``burn_in + n`` steps and test each window."""
    steps = burn_in + n
    chunk = max(1, min(replications, _BATCH_BUDGET // steps))
    parts: list[BatchEvaluation] = []
    for start in range(0, replications, chunk):
        idx = range(start, min(start + chunk, replications))
        draws = [replication_noise(seed, cell, r).draw(spec, steps) for r in idx]
        v = np.stack([d[0] for d in draws])
        xi = np.stack([d[1] for d in draws])
        try:
            res = simulate_arrays(spec, v, xi)
        except SimulationOverflow as exc:
            rep = start + (exc.replication or 0)
            raise CellError(spec.rho, n, rep, exc) from exc
        th = theta_hat(res.rls, spec.p)
        parts.append(
            evaluate_batch(
                res.x_out[:, burn_in:],
                res.u[:, burn_in:],
                th,
                spec.nu2,
                tn2_squared,
                history=res.x_out[:, :burn_in] if burn_in else None,
            )
        )
    if len(parts) == 1:
        return parts[0]
    return BatchEvaluation(
        **{name: np.concatenate([getattr(p, name) for p in parts]) for name in BatchEvaluation.__dataclass_fields__}
    )


def run_grid(config: ExperimentConfig, threads: int = 1) -> RateTable:
    """Empirical rejection rates over the (rho, n) grid."""
    jobs = [(i, j, rho, n) for i, rho in enumerate(config.rho_grid) for j, n in enumerate(config.n_grid)]

    def one(job):
        i, j, rho, n = job
        spec = replace(config.spec, rho=rho)
        ev = simulate_cell(spec, n, config.replications, config.burn_in, config.master_seed, (i, j), config.tn2_squared)
        invalid = int(np.count_nonzero(~ev.valid))
        return {
            (rho, n, s): Cell(int(np.count_nonzero(ev.rejections(s, config.alpha))), invalid, config.replications)
            for s in config.statistics
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(job) for job in jobs]
    table = RateTable()
    for res in results:
        table.cells.update(res)
    return table


def _reference_cdf(reference: str):
    if reference == "chi2_1df":
        return chi2_cdf_1df
    if reference == "std_normal":
        nd = NormalDist()
        return np.vectorize(nd.cdf, otypes=[float])
    raise ValueError(f"unknown reference {reference!r}")


def ks_distance(samples: ArrayLike, reference: Literal["chi2_1df", "std_normal"]) -> float:
    """Kolmogorov-Smirnov sup distance between the sample ECDF and a reference CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = len(x)
    if m < 30:
        raise ValueError(f"need at least 30 samples, got {m}")
    cdf = _reference_cdf(reference)(x)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def normality_diagnostics(
    spec: SystemSpec,
    n: int = 2000,
    replications: int = 1000,
    burn_in: int = 100,
    seed: int = 0,
) -> dict[str, float]:
    """KS distances of the standardised statistics from their limit laws.

    ``T_n`` is compared with chi-square(1) (meaningful under rho = 0); the
    standardised sqrt(n)(rho_bar - rho)/tau and sqrt(n)(D - 2(1-rho))/(2 tau)
    with N(0, 1).
    """
    ev = simulate_cell(spec, n, replications, burn_in, seed)
    ok = ev.valid
    tau = math.sqrt(tau2_theoretical(spec.rho, spec.sigma2, spec.nu2, spec.p))
    z_rho = np.sqrt(n) * (ev.rho_bar[ok] - spec.rho) / tau
    z_dw = np.sqrt(n) * (ev.d_hat[ok] - dw_limit(spec.rho)) / (2 * tau)
    return {
        "ks_T_chi2": ks_distance(ev.t_n[ok], "chi2_1df"),
        "ks_T_simple_chi2": ks_distance(ev.t_simple[ok], "chi2_1df"),
        "ks_rho_bar_normal": ks_distance(z_rho, "std_normal"),
        "ks_dw_normal": ks_distance(z_dw, "std_normal"),
        "var_rho_bar_over_tau2": float(np.var(z_rho)),
        "invalid": float(np.count_nonzero(~ok)),
        "replications": float(replications),
    }


def _pct(rate: float) -> str:
    return "nan" if math.isnan(rate) else f"{100 * rate:.1f}%"


def render_table(table: RateTable, fmt: Literal["csv", "markdown"] = "markdown") -> str:
    """Text rendering: long-form CSV, or a markdown grid with n across columns."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for rho in table.rhos:
            for stat in table.statistics:
                for n in table.ns:
                    c = table.cells.get((rho, n, stat))
                    if c is None:
                        continue
                    w.writerow([repr(rho), n, stat, c.rejections, c.invalid, c.replications, repr(c.rate), repr(c.ci_halfwidth)])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")
    ns = table.ns
    lines = []
    if table.title:
        lines += [f"**{table.title}**", ""]
    lines.append("| " + " | ".join(["rho", "statistic", *(f"n={n}" for n in ns)]) + " |")
    lines.append("|---|---|" + "---|" * len(ns))
    for rho in table.rhos:
        for stat in table.statistics:
            row = [_pct(table.cells[(rho, n, stat)].rate) if (rho, n, stat) in table.cells else "" for n in ns]
            lines.append("| " + " | ".join([f"{rho:g}", STAT_LABELS.get(stat, stat), *row]) + " |")
    return "\n".join(lines) + "\n"

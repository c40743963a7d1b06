"""Reproduction harness: parameter sweeps pairing the analytic model with
simulator measurements, dataset assembly for the standard figures, and the
fit statistics used to judge the model (deviation bounds, ratio linearity,
Poissonness of control traffic).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .analytic import MULTI_HOP, SINGLE_HOP, ModelParams, p_co, timings_from_bytes
from .bandwidth import SigmaSweep, derive_timings, optimize_sigma
from .errors import DomainError, NoConvergenceError, UnstableError
from .sim.engine import IDEAL, NONCOOP, REAL, Simulator
from .sim.metrics import SimMetrics, measure_ratios
from .sim.topology import generate_topology

__all__ = [
    "Sweep",
    "FigureDataset",
    "FitReport",
    "KsReport",
    "FIGURE_IDS",
    "reproduce",
    "analytic_pco",
    "run_replications",
    "linear_fit",
    "linearity_report",
    "control_send_gaps",
    "poissonness_check",
    "write_dataset_csv",
]

# six channels of equal rate: one control + five data
DATA_CHANNELS = 5
DATA_RATE = 1e6
CTRL_BYTES = 34.0

_SCALES = {
    "desk": {"packets": 20_000, "replications": 5},
    "paper": {"packets": 100_000, "replications": 15},
}


@dataclass(frozen=True)
class Sweep:
    """One swept parameter against a fixed scenario."""

    varying: str  # lambda | n | L | sigma | m
    grid: tuple
    fixed: dict
    replications: int
    seeds: tuple

    def __post_init__(self):
        if self.varying not in ("lambda", "n", "L", "sigma", "m"):
            raise DomainError(f"cannot sweep {self.varying!r}")
        if not self.grid:
            raise DomainError("empty sweep grid")
        if list(self.grid) != sorted(self.grid):
            raise DomainError("sweep grid must be sorted")
        if self.replications < 1 or len(self.seeds) != self.replications:
            raise DomainError("need one seed per replication")


@dataclass
class FigureDataset:
    """Per-figure columns keyed by the swept grid; None marks gaps."""

    figure_id: str
    x_name: str
    x_values: tuple
    columns: dict
    meta: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def column(self, name):
        return self.columns[name]


@dataclass(frozen=True)
class FitReport:
    slope: float
    intercept: float
    r_squared: Optional[float]
    n_points: int
    flagged: bool = False


@dataclass(frozen=True)
class KsReport:
    statistic: float
    p_value: float
    n_gaps: int
    mean_gap: float


def derive_seed(root: int, *path: int) -> int:
    """Stable per-task seed from a root seed and an index path."""
    return int(np.random.SeedSequence([root, *path]).generate_state(1)[0])


def analytic_pco(
    n: float, lam: float, data_bytes: float, hop_mode: str
) -> Optional[float]:
    """p_co from the model at the standard six-channel timing, or None."""
    t_d, b = timings_from_bytes(data_bytes, CTRL_BYTES, DATA_RATE)
    try:
        params = ModelParams(n=n, lam=lam, T_d=t_d, b=b, hop_mode=hop_mode)
        return p_co(params).p_co
    except (UnstableError, NoConvergenceError, DomainError):
        return None


def _sim_task(args) -> SimMetrics:
    (hop_mode, n, lam, data_bytes, mode, packets, seed) = args
    topo = generate_topology(n, seed=seed, mode=hop_mode)
    sim = Simulator(
        topo,
        lam,
        data_bytes,
        ctrl_bytes=CTRL_BYTES,
        data_channels=DATA_CHANNELS,
        data_rate=DATA_RATE,
        mode=mode,
        stop_after_packets=packets,
        seed=seed,
    )
    return sim.run()


def run_replications(
    hop_mode: str,
    n: float,
    lam: float,
    data_bytes: float,
    mode: str,
    packets: int,
    seeds: Sequence[int],
    workers: Optional[int] = None,
) -> list:
    """Run one scenario once per seed, fanned out over processes."""
    tasks = [
        (hop_mode, n, lam, data_bytes, mode, packets, seed) for seed in seeds
    ]
    if workers is not None and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sim_task, tasks))
    return [_sim_task(t) for t in tasks]


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = sum(vals) / len(vals)
    if len(vals) == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return mean, math.sqrt(var)


def _pco_hat_stats(runs):
    created = sum(m.mcc_created for m in runs)
    if created == 0:
        return None, None
    pooled = sum(m.mcc_with_coop for m in runs) / created
    _, std = _mean_or_none([m.p_co_hat for m in runs])
    return pooled, std


# ---------------------------------------------------------------------------
# figure registry
# ---------------------------------------------------------------------------

FIGURE_IDS = (
    "fig5a",
    "fig5b",
    "fig5c",
    "fig5d",
    "fig6a",
    "fig6b",
    "fig6sg",
    "fig7",
    "fig8",
    "fig9a",
    "fig9b",
    "fig10a",
    "fig10b",
)


def reproduce(
    figure_id: str,
    scale: str = "desk",
    seed: int = 2024,
    workers: Optional[int] = None,
    packets: Optional[int] = None,
    replications: Optional[int] = None,
) -> FigureDataset:
    """Regenerate the dataset behind one figure.

    Desk scale trades packet count and replication count for runtime;
    paper scale restores the original ones.  Explicit packets/replications
    override the scale preset (used by the test suite).  Identical
    (figure_id, scale, seed) inputs regenerate identical datasets.
    """
    if figure_id not in FIGURE_IDS:
        raise DomainError(f"unknown figure id {figure_id!r}; know {FIGURE_IDS}")
    if scale not in _SCALES:
        raise DomainError(f"scale must be desk or paper, got {scale!r}")
    preset = _SCALES[scale]
    packets = preset["packets"] if packets is None else packets
    reps = preset["replications"] if replications is None else replications
    meta = {
        "figure_id": figure_id,
        "scale": scale,
        "seed": seed,
        "packets": packets,
        "replications": reps,
        "data_channels": DATA_CHANNELS,
        "data_rate": DATA_RATE,
        "control_bytes": CTRL_BYTES,
    }

    if figure_id in ("fig5a", "fig5b"):
        hop, sizes = SINGLE_HOP, (1000.0, 2000.0)
        if figure_id == "fig5a":
            grid, x_name, fixed = (2.0, 4.0, 6.0, 8.0, 10.0), "lambda", {"n": 8}
        else:
            grid, x_name, fixed = (5.0, 7.0, 9.0, 11.0, 13.0), "n", {"lambda": 10.0}
        return _verification_figure(
            figure_id, hop, grid, x_name, fixed, sizes, NONCOOP,
            packets, reps, seed, workers, meta,
        )

    if figure_id in ("fig5c", "fig5d"):
        hop, sizes = MULTI_HOP, (1000.0,)
        if figure_id == "fig5c":
            grid, x_name, fixed = (6.0, 8.0, 10.0, 12.0, 14.0), "lambda", {"n": 10.0}
        else:
            grid, x_name, fixed = (6.0, 8.0, 10.0, 12.0, 14.0), "n", {"lambda": 10.0}
        return _verification_figure(
            figure_id, hop, grid, x_name, fixed, sizes, NONCOOP,
            packets, reps, seed, workers, meta,
        )

    if figure_id in ("fig9a", "fig9b"):
        hop, sizes = MULTI_HOP, (1000.0,)
        if figure_id == "fig9a":
            grid, x_name, fixed = (6.0, 8.0, 10.0, 12.0, 14.0), "lambda", {"n": 10.0}
        else:
            grid, x_name, fixed = (6.0, 8.0, 10.0, 12.0, 14.0), "n", {"lambda": 10.0}
        return _verification_figure(
            figure_id, hop, grid, x_name, fixed, sizes, REAL,
            packets, reps, seed, workers, meta,
        )

    if figure_id in ("fig6a", "fig6b", "fig6sg"):
        if figure_id == "fig6a":
            hop, grid, x_name, fixed = MULTI_HOP, (6.0, 8.0, 10.0, 12.0, 14.0), "lambda", {"n": 10.0}
        elif figure_id == "fig6b":
            hop, grid, x_name, fixed = MULTI_HOP, (6.0, 8.0, 10.0, 12.0, 14.0), "n", {"lambda": 10.0}
        else:
            # high-contention range so the collision-ratio estimator has
            # enough events per point; stability needs lam*T_d < 3 - 2*sqrt(2)
            hop, grid, x_name, fixed = SINGLE_HOP, (8.0, 11.0, 14.0, 17.0, 20.0), "lambda", {"n": 8}
        return _ratio_figure(
            figure_id, hop, grid, x_name, fixed, 1000.0,
            packets, reps, seed, workers, meta,
        )

    if figure_id == "fig7":
        return _throughput_figure(packets, reps, seed, workers, meta)

    if figure_id == "fig8":
        return _sigma_curves_figure(meta)

    return _sigma_star_figure(figure_id, meta)


def _verification_figure(
    figure_id, hop, grid, x_name, fixed, sizes, mode,
    packets, reps, seed, workers, meta,
):
    columns = {}
    max_rel_gap = 0.0
    for size_i, data_bytes in enumerate(sizes):
        tag = f"_L{int(data_bytes)}" if len(sizes) > 1 else ""
        ana_col, sim_col, std_col = [], [], []
        for pt, x in enumerate(grid):
            n = fixed.get("n", x)
            lam = fixed.get("lambda", x)
            if x_name == "n":
                n = x
            else:
                lam = x
            ana = analytic_pco(n, lam, data_bytes, hop)
            seeds = [derive_seed(seed, size_i, pt, r) for r in range(reps)]
            runs = run_replications(
                hop, n, lam, data_bytes, mode, packets, seeds, workers
            )
            sim_mean, sim_std = _pco_hat_stats(runs)
            ana_col.append(ana)
            sim_col.append(sim_mean)
            std_col.append(sim_std)
            if ana is not None and sim_mean is not None and ana > 0:
                max_rel_gap = max(max_rel_gap, abs(sim_mean - ana) / ana)
        columns[f"pco_analytic{tag}"] = tuple(ana_col)
        columns[f"pco_sim{tag}"] = tuple(sim_col)
        columns[f"pco_sim_std{tag}"] = tuple(std_col)
    summary = {"max_rel_gap": max_rel_gap, "mode": mode}
    return FigureDataset(figure_id, x_name, tuple(grid), columns, meta, summary)


def _ratio_figure(
    figure_id, hop, grid, x_name, fixed, data_bytes,
    packets, reps, seed, workers, meta,
):
    cols = {
        "pco_analytic": [],
        "pco_sim_ideal": [],
        "eta_xi": [],
        "eta_delta": [],
    }
    for pt, x in enumerate(grid):
        n = x if x_name == "n" else fixed["n"]
        lam = x if x_name == "lambda" else fixed["lambda"]
        seeds = [derive_seed(seed, 0, pt, r) for r in range(reps)]
        base = run_replications(hop, n, lam, data_bytes, NONCOOP, packets, seeds, workers)
        coop = run_replications(hop, n, lam, data_bytes, IDEAL, packets, seeds, workers)
        ratios = [measure_ratios(b, c) for b, c in zip(base, coop)]
        cols["pco_analytic"].append(analytic_pco(n, lam, data_bytes, hop))
        cols["pco_sim_ideal"].append(_pco_hat_stats(coop)[0])
        cols["eta_xi"].append(_mean_or_none([r.eta_xi for r in ratios])[0])
        cols["eta_delta"].append(_mean_or_none([r.eta_delta for r in ratios])[0])
    columns = {k: tuple(v) for k, v in cols.items()}
    return FigureDataset(figure_id, x_name, tuple(grid), columns, meta, {})


def _throughput_figure(packets, reps, seed, workers, meta):
    grid = (6.0, 8.0, 10.0, 12.0)
    lam = 25.0  # beyond the stable region: saturated operation
    data_bytes = 1000.0
    cols = {"pco_sim_ideal": [], "eta_s": [], "saturated_frac": []}
    for pt, n in enumerate(grid):
        seeds = [derive_seed(seed, 0, pt, r) for r in range(reps)]
        base = run_replications(MULTI_HOP, n, lam, data_bytes, NONCOOP, packets, seeds, workers)
        coop = run_replications(MULTI_HOP, n, lam, data_bytes, IDEAL, packets, seeds, workers)
        ratios = [measure_ratios(b, c) for b, c in zip(base, coop)]
        cols["pco_sim_ideal"].append(_pco_hat_stats(coop)[0])
        cols["eta_s"].append(_mean_or_none([r.eta_s for r in ratios])[0])
        sat = [m.saturated for m in base + coop]
        cols["saturated_frac"].append(sum(sat) / len(sat))
    columns = {k: tuple(v) for k, v in cols.items()}
    return FigureDataset("fig7", "n", grid, columns, meta, {"lambda": lam})


def _sigma_curves_figure(meta):
    sweep = SigmaSweep(0.2, 3.0, 0.05)
    grid = tuple(sweep.grid())
    columns = {}
    summary = {}
    for m in (1, 3, 5, 7, 9, 11):
        res = optimize_sigma(
            40e6, m, 2000.0, 34.0, n=6.0, lam=20.0, sweep=sweep, refine=False
        )
        columns[f"pco_m{m}"] = tuple(v for _, v in res.curve)
        summary[f"sigma_star_m{m}"] = res.sigma_star
    meta = dict(meta, W=40e6, L=2000, lc=34, n=6, **{"lambda": 20})
    return FigureDataset("fig8", "sigma", grid, columns, meta, summary)


def _sigma_star_figure(figure_id, meta):
    m_grid = tuple(range(1, 26))
    data_bytes, lc, W = 1000.0, 34.0, 40e6
    sweep = SigmaSweep(0.2, 8.0, 0.05)  # small packets push sigma* past 3
    if figure_id == "fig10a":
        scenarios = [(4.0, 10.0), (6.0, 10.0), (8.0, 10.0)]
        tags = [f"sigma_star_n{int(n)}" for n, _ in scenarios]
    else:
        scenarios = [(6.0, 5.0), (6.0, 10.0), (6.0, 20.0)]
        tags = [f"sigma_star_lam{int(l)}" for _, l in scenarios]
    columns = {}
    for (n, lam), tag in zip(scenarios, tags):
        col = []
        for m in m_grid:
            try:
                res = optimize_sigma(W, m, data_bytes, lc, n=n, lam=lam, sweep=sweep)
                col.append(res.sigma_star)
            except UnstableError:
                col.append(None)
        columns[tag] = tuple(col)
    meta = dict(meta, W=W, L=data_bytes, lc=lc)
    return FigureDataset(figure_id, "m", m_grid, columns, meta, {})


# ---------------------------------------------------------------------------
# fit statistics
# ---------------------------------------------------------------------------

def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> FitReport:
    """Least-squares line through (xs, ys) with R^2.

    A constant y-series has no meaningful R^2: slope 0, R^2 None, flagged.
    """
    pairs = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
    if len(pairs) < 3:
        raise DomainError(f"need at least 3 points, got {len(pairs)}")
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return FitReport(0.0, float(y.mean()), None, len(pairs), flagged=True)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    return FitReport(float(slope), float(intercept), r2, len(pairs))


def linearity_report(dataset: FigureDataset, eta_column: str, pco_column: str = "pco_sim_ideal") -> FitReport:
    """Fit a performance ratio against cooperation availability."""
    if eta_column not in dataset.columns or pco_column not in dataset.columns:
        raise DomainError(
            f"dataset {dataset.figure_id} lacks {eta_column!r} or {pco_column!r}"
        )
    return linear_fit(dataset.columns[pco_column], dataset.columns[eta_column])


def control_send_gaps(trace) -> list:
    """Per-node gaps between control sends with no channel switch between.

    Expects engine trace records (time, node, kind, channel, detail) in
    time order.
    """
    last = {}
    gaps = []
    for time, node, kind, channel, _detail in trace:
        if kind == "ChannelSwitch":
            last[node] = None
        elif kind in ("TxStart", "CoopMessage") and channel == 0:
            prev = last.get(node)
            if prev is not None:
                gaps.append(time - prev)
            last[node] = time
    return gaps


def poissonness_check(gaps: Sequence[float], min_gaps: int = 50) -> KsReport:
    """Kolmogorov-Smirnov distance of gaps against a matched exponential."""
    gaps = [g for g in gaps if g > 0]
    if len(gaps) < min_gaps:
        raise DomainError(
            f"need at least {min_gaps} inter-send gaps, got {len(gaps)}"
        )
    mean = sum(gaps) / len(gaps)
    stat, p_value = stats.kstest(gaps, "expon", args=(0.0, mean))
    return KsReport(
        statistic=float(stat), p_value=float(p_value), n_gaps=len(gaps), mean_gap=mean
    )


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_dataset_csv(dataset: FigureDataset, path) -> None:
    """Comma-separated dataset with '#' header comments carrying the config."""
    names = list(dataset.columns)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(dataset.meta):
            fh.write(f"# {key} = {dataset.meta[key]}\n")
        for key in sorted(dataset.summary):
            fh.write(f"# summary.{key} = {dataset.summary[key]}\n")
        fh.write(",".join([dataset.x_name] + names) + "\n")
        for i, x in enumerate(dataset.x_values):
            row = [repr(x)]
            for name in names:
                v = dataset.columns[name][i]
                row.append("" if v is None else repr(v))
            fh.write(",".join(row) + "\n")

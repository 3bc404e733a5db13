"""Experiment driver: seeded Monte Carlo orchestration, baselines, CSV emission.

Each experiment family draws channel instances from per-trial RNG
substreams, runs the full solve/purify pipeline, and emits one CSV with
per-trial (or per-iteration) rows followed by mean and standard-error
aggregate rows.  Re-running with the same seed reproduces the CSV byte for
byte; wall-clock columns are zeroed unless timing is explicitly requested.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    ChannelSet,
    DerivedConstants,
    NoNullingDimensionsError,
    RelaySolution,
    derive_constants,
    generate_channels,
    to_physical,
)
from .eh import EhConfig, InfeasibleEHError, eh_margin, inexact_mm_solve_eh, make_eh_config, rank_reduce_eh
from .purify import decompose_rank_two, rank_reduce, stationarity_residual
from .rates import harvested_power, relay_power, sum_secrecy_rate
from .signal_sim import (
    FrameConfig,
    empirical_eve_stats,
    empirical_harvested_power,
    empirical_relay_power,
    empirical_sinr,
    eve_residuals,
    simulate_frames,
)
from .solver import IteratePoint, SolveTrace, SolverOptions, inexact_mm_solve, project_feasible

EXPERIMENTS = (
    "convergence",
    "sweep_source_power",
    "sweep_relay_antennas",
    "eh_region",
    "eh_an_ratio",
    "validate_signal_model",
)

COLUMNS = [
    "experiment", "variant", "param", "seed", "trial", "row_kind", "k",
    "phi", "surrogate", "gm_norm",
    "secrecy_rate_nats", "secrecy_rate_bits", "secrecy_rate_clipped_nats",
    "relay_power", "harvested_power", "an_ratio", "rank_ratio", "stat_residual",
    "status", "eh_resamples", "metric", "analytic", "empirical", "stderr",
    "wall_ms",
]


def db2lin(db: float) -> float:
    """dB (or dBm) to linear units; applied exactly once at config ingestion."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved experiment configuration (all values in linear units)."""

    experiment: str
    trials: int = 100
    seed: int = 1
    n_tx: int = 6
    m_rx: int = 3
    p_source: float = 10.0
    p_relay: float = 10.0
    sigma2: float = 1.0
    kappa: tuple[float, ...] = (0.1,)
    duplex: str = "fd"
    an_enabled: bool = True
    var_legit: float = 1.0
    var_eve: float = 1.0
    var_direct: float = 1.0
    var_self: float = 1.0
    source_power_db_list: tuple[float, ...] = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    n_tx_list: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    tau: float = 0.1
    epsilon_list: tuple[float, ...] = ()
    eh_resample_cap: int = 50
    num_blocks: int = 100_000
    solver: dict = field(default_factory=dict)
    out: str | None = None
    threads: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.duplex not in ("fd", "hd", "both"):
            raise ValueError("duplex must be 'fd', 'hd' or 'both'")


_EH_DEFAULTS = dict(
    sigma2=db2lin(-50.0),  # -50 dBm noise
    var_eve=db2lin(-10.0),
    var_direct=db2lin(-10.0),
    var_legit=db2lin(-20.0),
    var_self=db2lin(-20.0),
)
_EH_EPSILON_DBM = (-20.0, -15.0, -10.0, -8.0, -6.0, -4.0, -2.0)


def spec_from_config(experiment: str, config: dict | None = None, **overrides) -> ExperimentSpec:
    """Build an ExperimentSpec from a JSON-style config dict plus overrides.

    dB/dBm suffixed fields are converted to linear units here and nowhere
    else.  EH experiments default to the power-transfer setting (-50 dBm
    noise, Eve-side channels at -10 dB, others at -20 dB, tau = 0.1).
    """
    cfg = dict(config or {})
    kw: dict = {"experiment": experiment}
    if experiment.startswith("eh"):
        kw.update(_EH_DEFAULTS)
        kw["epsilon_list"] = tuple(db2lin(d) for d in _EH_EPSILON_DBM)

    for key in ("trials", "seed", "duplex", "an_enabled", "num_blocks", "out",
                "threads", "timing", "tau", "eh_resample_cap", "solver"):
        if key in cfg:
            kw[key] = cfg[key]
    dims = cfg.get("dims", {})
    kw.setdefault("n_tx", dims.get("n_tx", 6))
    kw.setdefault("m_rx", dims.get("m_rx", 3))
    if "source_power_db" in cfg:
        kw["p_source"] = db2lin(cfg["source_power_db"])
    if "relay_power_db" in cfg:
        kw["p_relay"] = db2lin(cfg["relay_power_db"])
    if "noise_db" in cfg:
        kw["sigma2"] = db2lin(cfg["noise_db"])
    if "noise_dbm" in cfg:
        kw["sigma2"] = db2lin(cfg["noise_dbm"])
    if "kappa" in cfg:
        k = cfg["kappa"]
        kw["kappa"] = tuple(k) if isinstance(k, (list, tuple)) else (float(k),)
    var = cfg.get("channel_variances", {})
    for group in ("legit", "eve", "direct", "self"):
        if f"{group}_db" in var:
            val = var[f"{group}_db"]
            kw[f"var_{group}"] = 0.0 if val is None else db2lin(val)
    sweep = cfg.get("sweep", {})
    if "source_power_db_list" in sweep:
        kw["source_power_db_list"] = tuple(float(x) for x in sweep["source_power_db_list"])
    if "n_tx_list" in sweep:
        kw["n_tx_list"] = tuple(int(x) for x in sweep["n_tx_list"])
    eh = cfg.get("eh", {})
    if "tau" in eh:
        kw["tau"] = float(eh["tau"])
    if "epsilon_list" in eh:
        kw["epsilon_list"] = tuple(float(x) for x in eh["epsilon_list"])
    elif "epsilon_dbm_list" in eh:
        kw["epsilon_list"] = tuple(db2lin(x) for x in eh["epsilon_dbm_list"])

    kw.update({k: v for k, v in overrides.items() if v is not None})
    kw["kappa"] = tuple(kw.get("kappa", (0.1,)))
    return ExperimentSpec(**kw)


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def solver_options(spec: ExperimentSpec, p_relay: float | None = None, seed: int = 0) -> SolverOptions:
    kw = dict(
        P_R=p_relay if p_relay is not None else spec.p_relay,
        inner_budget=5,
        outer_tol=1e-3,
        stationarity_tol=1e-5,
        max_outer=2000,
        seed=seed,
        an_enabled=spec.an_enabled,
    )
    kw.update(spec.solver)
    if kw.get("inner_budget") not in ("exact", "variable"):
        kw["inner_budget"] = int(kw["inner_budget"])
    return SolverOptions(**kw)


def _draw_channels(spec: ExperimentSpec, salt: tuple[int, ...], *, p_source=None, n_tx=None, kappa=None):
    return generate_channels(
        (spec.seed, *salt),
        n_tx if n_tx is not None else spec.n_tx,
        spec.m_rx,
        p_a=p_source if p_source is not None else spec.p_source,
        p_b=p_source if p_source is not None else spec.p_source,
        sigma2_a=spec.sigma2, sigma2_b=spec.sigma2,
        sigma2_e=spec.sigma2, sigma2_r=spec.sigma2,
        kappa_a=kappa if kappa is not None else spec.kappa[0],
        kappa_b=kappa if kappa is not None else spec.kappa[0],
        var_legit=spec.var_legit, var_eve=spec.var_eve,
        var_direct=spec.var_direct, var_self=spec.var_self,
    )


@dataclass(frozen=True)
class TrialResult:
    """Solution and headline metrics of one solved instance."""

    sol: RelaySolution
    point: IteratePoint
    trace: SolveTrace
    rate_nats: float
    relay_power: float
    harvested: float
    an_ratio: float
    rank_ratio: float
    stat_residual: float


def an_power_ratio(sol: RelaySolution, dc: DerivedConstants) -> float:
    """Share of the relay budget spent on artificial noise, in [0, 1]."""
    an = float(np.real(np.trace(sol.Q0)))
    total = relay_power(sol, dc)
    return an / total if total > 0 else 0.0


def solve_pipeline(
    ch: ChannelSet,
    dc: DerivedConstants,
    opts: SolverOptions,
    ehc: EhConfig | None = None,
    init: IteratePoint | None = None,
) -> TrialResult:
    """Solve, purify to rank two, and evaluate all reported metrics."""
    if ehc is None:
        point, trace = inexact_mm_solve(init, dc, opts)
        reduced = rank_reduce(point, dc)
    else:
        point, trace = inexact_mm_solve_eh(init, dc, opts, ehc)
        reduced = rank_reduce_eh(point, dc, ehc)
    W = decompose_rank_two(reduced.Wl)
    sol = to_physical(W, reduced.Q, dc)
    lam = np.sort(np.linalg.eigvalsh(reduced.Wl))[::-1]
    rank_ratio = float(lam[2] / lam[0]) if lam.size >= 3 and lam[0] > 0 else 0.0
    tau = ehc.tau if ehc is not None else 0.1
    return TrialResult(
        sol=sol,
        point=reduced,
        trace=trace,
        rate_nats=sum_secrecy_rate(sol, ch, dc),
        relay_power=relay_power(sol, dc),
        harvested=harvested_power(sol, ch, dc, tau),
        an_ratio=an_power_ratio(sol, dc),
        rank_ratio=rank_ratio,
        stat_residual=stationarity_residual(W, reduced.Q, dc, opts.P_R, ehc),
    )


def half_duplex_solve(
    ch: ChannelSet, dc: DerivedConstants, opts: SolverOptions
) -> tuple[RelaySolution, float]:
    """Half-duplex baseline: kappa = 0, no nulling constraint, all rates halved."""
    if dc.duplex != "hd":
        dc = derive_constants(ch, duplex="hd")
    res = solve_pipeline(ch, dc, opts)
    return res.sol, res.rate_nats


def _metric_row(spec: ExperimentSpec, **kw) -> dict:
    row = {"experiment": spec.experiment, "seed": spec.seed, "status": "ok", "row_kind": "trial"}
    row.update(kw)
    return row


def _result_row(spec: ExperimentSpec, res: TrialResult, **kw) -> dict:
    row = dict(
        phi=res.trace.final_phi,
        secrecy_rate_nats=res.rate_nats,
        secrecy_rate_bits=res.rate_nats / math.log(2.0),
        secrecy_rate_clipped_nats=max(res.rate_nats, 0.0),
        relay_power=res.relay_power,
        harvested_power=res.harvested,
        an_ratio=res.an_ratio,
        rank_ratio=res.rank_ratio,
        stat_residual=res.stat_residual,
        wall_ms=sum(res.trace.wall_s) * 1000.0 if spec.timing else 0.0,
    )
    row.update(kw)
    return _metric_row(spec, **row)


def _zero_rate_row(spec: ExperimentSpec, ch: ChannelSet, **kw) -> dict:
    """Row for instances where nulling consumes every transmit dimension."""
    rate = -math.log1p(
        (ch.p_a * abs(ch.h_ae) ** 2 + ch.p_b * abs(ch.h_be) ** 2) / ch.sigma2_e
    )
    return _metric_row(
        spec,
        status="no_nulling",
        secrecy_rate_nats=rate,
        secrecy_rate_bits=rate / math.log(2.0),
        secrecy_rate_clipped_nats=0.0,
        relay_power=0.0, harvested_power=0.0, an_ratio=0.0,
        rank_ratio=0.0, stat_residual=0.0, phi=rate, wall_ms=0.0,
        **kw,
    )


# ---------------------------------------------------------------------------
# per-trial workers (module level so the process pool can pickle them)

def _trial_convergence(spec: ExperimentSpec, trial: int) -> list[dict]:
    ch = _draw_channels(spec, (0, trial))
    dc = derive_constants(ch, duplex="fd" if spec.duplex == "both" else spec.duplex)
    rows = []
    budgets = [("exact", "exact"), ("L=1", 1), ("L=3", 3), ("L=5", 5), ("L=var", "variable")]
    for label, budget in budgets:
        opts = replace(solver_options(spec, seed=trial), inner_budget=budget)
        t0 = time.perf_counter()
        res = solve_pipeline(ch, dc, opts)
        wall_total = (time.perf_counter() - t0) * 1000.0 if spec.timing else 0.0
        tr = res.trace
        for k in range(tr.iterations):
            rows.append(_metric_row(
                spec, variant=label, trial=trial, row_kind="iter", k=k,
                phi=tr.phi[k], surrogate=tr.surrogate[k], gm_norm=tr.gm_norm[k],
                wall_ms=tr.wall_s[k] * 1000.0 if spec.timing else 0.0,
            ))
        rows.append(_result_row(spec, res, variant=label, trial=trial, k=tr.iterations,
                                wall_ms=wall_total))
    return rows


def _trial_sweep_power(spec: ExperimentSpec, trial: int) -> list[dict]:
    rows = []
    duplexes = ("fd", "hd") if spec.duplex == "both" else (spec.duplex,)
    for kappa in spec.kappa:
        for ip, p_db in enumerate(spec.source_power_db_list):
            p_lin = db2lin(p_db)
            ch = _draw_channels(spec, (ip, trial), p_source=p_lin, kappa=kappa)
            for duplex in duplexes:
                variant = f"{duplex}:kappa={kappa:g}"
                dc = derive_constants(ch, duplex=duplex)
                opts = solver_options(spec, seed=trial)
                res = solve_pipeline(ch, dc, opts)
                rows.append(_result_row(spec, res, variant=variant, param=p_db, trial=trial))
    return rows


def _trial_sweep_antennas(spec: ExperimentSpec, trial: int) -> list[dict]:
    rows = []
    duplexes = ("fd", "hd") if spec.duplex == "both" else (spec.duplex,)
    for n_tx in spec.n_tx_list:
        ch = _draw_channels(spec, (n_tx, trial), n_tx=n_tx)
        for duplex in duplexes:
            variant = f"{duplex}:kappa={spec.kappa[0]:g}"
            if duplex == "fd":
                try:
                    dc = derive_constants(ch, duplex="fd")
                except NoNullingDimensionsError:
                    rows.append(_zero_rate_row(spec, ch, variant=variant, param=n_tx, trial=trial))
                    continue
            else:
                dc = derive_constants(ch, duplex="hd")
            res = solve_pipeline(ch, dc, solver_options(spec, seed=trial))
            rows.append(_result_row(spec, res, variant=variant, param=n_tx, trial=trial))
    return rows


def _trial_eh(spec: ExperimentSpec, trial: int) -> list[dict]:
    rows = []
    eps_desc = sorted(spec.epsilon_list, reverse=True)
    for kappa in spec.kappa:
        variant = f"fd:kappa={kappa:g}"
        ch = dc = None
        resamples = 0
        for attempt in range(spec.eh_resample_cap + 1):
            cand = _draw_channels(spec, (attempt, trial), kappa=kappa)
            cand_dc = derive_constants(cand)
            ehc_max = make_eh_config(spec.tau, max(eps_desc), cand_dc)
            if eh_margin(ehc_max, cand_dc, spec.p_relay) >= 0:
                ch, dc, resamples = cand, cand_dc, attempt
                break
        if ch is None:
            for eps in eps_desc:
                rows.append(_metric_row(spec, variant=variant, param=eps, trial=trial,
                                        status="infeasible", eh_resamples=spec.eh_resample_cap))
            continue
        # solve from the most stringent requirement down, warm-starting each
        # level from the previous limit point (feasible by set inclusion, so
        # the converged rate is nonincreasing in epsilon by monotone ascent)
        init = None
        by_eps = {}
        for eps in eps_desc:
            ehc = make_eh_config(spec.tau, eps, dc)
            res = solve_pipeline(ch, dc, solver_options(spec, seed=trial), ehc=ehc, init=init)
            init = res.point
            by_eps[eps] = res
        for eps in spec.epsilon_list:
            rows.append(_result_row(spec, by_eps[eps], variant=variant, param=eps,
                                    trial=trial, eh_resamples=resamples))
    return rows


def _trial_validate(spec: ExperimentSpec, trial: int) -> list[dict]:
    from .rates import eve_noise_cov, sinr_legitimate
    from .signal_sim import batch_mean_se

    ch = _draw_channels(spec, (0, trial))
    dc = derive_constants(ch)
    rng = np.random.default_rng((spec.seed, 1, trial))
    n = dc.dim
    G1 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    G2 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    pt = project_feasible(G1 @ G1.conj().T, G2 @ G2.conj().T, spec.p_relay)
    W = decompose_rank_two(rank_reduce(pt, dc).Wl)
    sol = to_physical(W, rank_reduce(pt, dc).Q, dc)

    streams = simulate_frames(sol, ch, dc, FrameConfig(num_blocks=spec.num_blocks, seed=trial))
    em = eve_noise_cov(sol, ch, dc)
    resid = eve_residuals(streams, sol, ch, dc)

    checks = []
    for i, name in ((0, "psi11"), (1, "psi22")):
        mean, se = batch_mean_se(np.abs(resid[:, i]) ** 2)
        checks.append((name, float(em.Psi[i, i]), mean, se))
    off_re, se_re = batch_mean_se(np.real(resid[:, 0] * np.conj(resid[:, 1])))
    off_im, se_im = batch_mean_se(np.imag(resid[:, 0] * np.conj(resid[:, 1])))
    checks.append(("psi12_abs", 0.0, math.hypot(off_re, off_im), math.hypot(se_re, se_im)))
    for node in ("A", "B"):
        hat, se = empirical_sinr(streams, node)
        checks.append((f"sinr_{node.lower()}", sinr_legitimate(sol, dc, node), hat, se))
    hat, se = empirical_relay_power(streams)
    checks.append(("relay_power", relay_power(sol, dc), hat, se))
    hat, se = empirical_harvested_power(streams, spec.tau)
    checks.append(("harvested_power", harvested_power(sol, ch, dc, spec.tau), hat, se))

    rows = []
    for name, analytic, empirical, se in checks:
        ok = abs(empirical - analytic) <= 3.0 * se
        rows.append(_metric_row(
            spec, variant="signal_model", trial=trial, metric=name,
            analytic=analytic, empirical=empirical, stderr=se,
            status="ok" if ok else "outside_3se",
        ))
    return rows


_WORKERS = {
    "convergence": _trial_convergence,
    "sweep_source_power": _trial_sweep_power,
    "sweep_relay_antennas": _trial_sweep_antennas,
    "eh_region": _trial_eh,
    "eh_an_ratio": _trial_eh,
    "validate_signal_model": _trial_validate,
}


def _run_one(args: tuple) -> list[dict]:
    spec, trial = args
    return _WORKERS[spec.experiment](spec, trial)


_AGG_METRICS = (
    "phi", "secrecy_rate_nats", "secrecy_rate_bits", "secrecy_rate_clipped_nats",
    "relay_power", "harvested_power", "an_ratio", "stat_residual",
)


def _aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row.get("row_kind") != "trial" or row.get("status") != "ok":
            continue
        groups.setdefault((row.get("experiment"), row.get("variant"), row.get("param")), []).append(row)
    out = []
    for (exp, variant, param), members in groups.items():
        for kind, reducer in (("mean", np.mean), ("se", lambda v: np.std(v, ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0)):
            agg = {"experiment": exp, "variant": variant, "param": param,
                   "row_kind": kind, "status": "ok", "trial": len(members)}
            for metric in _AGG_METRICS:
                vals = [r[metric] for r in members if metric in r]
                if vals:
                    agg[metric] = float(reducer(np.array(vals, dtype=float)))
            out.append(agg)
    return out


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else str(row.get(c, "")) for c in COLUMNS])


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run all trials of one experiment; returns the rows and writes the CSV."""
    tasks = [(spec, trial) for trial in range(spec.trials)]
    if spec.threads > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            per_trial = list(pool.map(_run_one, tasks))
    else:
        per_trial = [_run_one(t) for t in tasks]
    rows = [row for trial_rows in per_trial for row in trial_rows]
    rows.extend(_aggregate(rows))
    if spec.out:
        write_csv(rows, spec.out)
    return rows

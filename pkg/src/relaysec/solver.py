"""SDR-lifted inexact minorization-maximization engine.

The outer loop anchors a concave surrogate of the lifted secrecy-rate
objective at the current iterate and improves it with a limited number of
projected-gradient steps; the projection onto the trace-budgeted PSD pair
cone is an exact water-filling.  Ascent is monotone and each outer
iteration makes at least sigma * alpha^{k,0} * ||gradient mapping||^2 of
surrogate progress, which is what guarantees convergence to a stationary
point for any inner budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import DerivedConstants
from .rates import (
    _f_value_q,
    _fv_from_quads,
    _g1_value,
    _g2_numerator_q,
    _grad_from_weights,
    _grad_weights_q,
    _phi_from_quads,
    _quads,
    lifted_objective,
)


class LineSearchError(RuntimeError):
    """Armijo backtracking exhausted its cap (indicates a gradient/surrogate bug)."""


@dataclass(frozen=True)
class IteratePoint:
    """Lifted variable pair: Hermitian PSD matrices of side N - r."""

    Wl: np.ndarray
    Q: np.ndarray

    def trace_sum(self) -> float:
        return float(np.real(np.trace(self.Wl)) + np.real(np.trace(self.Q)))


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of the MM loop.

    ``inner_budget`` is the number of projected-gradient steps per MM
    subproblem: an integer for a fixed budget, ``"variable"`` for a
    uniform draw from [1, l_max] each outer iteration, or ``"exact"`` to
    iterate each subproblem to ``inner_tol`` gradient-mapping accuracy.
    """

    P_R: float
    inner_budget: int | str = 5
    l_max: int = 5
    stepsize_rule: str = "armijo"
    grid_size: int = 20
    sigma: float = 0.3
    beta: float = 0.5
    step: float = 1.0
    outer_tol: float = 1e-3
    stationarity_tol: float = 1e-5
    inner_tol: float = 1e-8
    inner_cap: int = 2000
    max_outer: int = 500
    armijo_cap: int = 50
    seed: int = 0
    an_enabled: bool = True
    target_phi: float | None = None

    def __post_init__(self):
        if self.P_R <= 0:
            raise ValueError("P_R must be positive")
        if not (0.0 < self.sigma < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("sigma and beta must lie in (0, 1)")
        if self.step <= 0:
            raise ValueError("initial step must be positive")
        if min(self.outer_tol, self.stationarity_tol, self.inner_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if isinstance(self.inner_budget, str):
            if self.inner_budget not in ("variable", "exact"):
                raise ValueError("inner_budget must be an int, 'variable' or 'exact'")
        elif self.inner_budget < 1:
            raise ValueError("inner_budget must be >= 1")
        if self.stepsize_rule not in ("armijo", "limited"):
            raise ValueError("stepsize_rule must be 'armijo' or 'limited'")


@dataclass
class SolveTrace:
    """Per-outer-iteration record of one MM run."""

    phi_init: float
    phi: list[float] = field(default_factory=list)
    surrogate: list[float] = field(default_factory=list)
    phi_anchor: list[float] = field(default_factory=list)
    gm_norm: list[float] = field(default_factory=list)
    zeta: list[float] = field(default_factory=list)
    alpha0: list[float] = field(default_factory=list)
    inner_used: list[int] = field(default_factory=list)
    wall_s: list[float] = field(default_factory=list)
    reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.phi)

    @property
    def final_phi(self) -> float:
        return self.phi[-1] if self.phi else self.phi_init


class _Anchor:
    """Cached anchor-point quantities of the surrogate (all quads-based)."""

    def __init__(self, point: IteratePoint, dc: DerivedConstants):
        self.dc = dc
        self.q = _quads(point.Wl, point.Q, dc)
        fv = _fv_from_quads(self.q, dc)
        self.g1_raw = _g1_value(fv, dc)
        self.beta = fv.beta
        self.b1 = dc.sigma_tilde2_a + fv.beta[0]
        self.b2 = dc.sigma_tilde2_b + fv.beta[1]
        self.num = _g2_numerator_q(self.q, dc)
        if min(self.b1, self.b2, self.num) <= 0:
            raise ValueError("anchor has nonpositive log argument")
        self.log_num = float(np.log(self.num))
        self.phi = dc.rate_scale * (_f_value_q(self.q, dc) - self.g1_raw - self.log_num)

    def surrogate_q(self, q: np.ndarray) -> float:
        dc = self.dc
        k_sr = dc.sigma_tilde2_r / dc.zeta
        beta1 = k_sr * q[0] + q[3]
        beta2 = k_sr * q[1] + q[4]
        g1_lin = self.g1_raw + (beta1 - self.beta[0]) / self.b1 + (beta2 - self.beta[1]) / self.b2
        g2_lin = self.log_num - 1.0 + _g2_numerator_q(q, dc) / self.num
        return dc.rate_scale * (_f_value_q(q, dc) - g1_lin - g2_lin)

    def gradient_q(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _grad_from_weights(_grad_weights_q(q, self.q, self.dc), self.dc)


def surrogate_value(x: IteratePoint, anchor: IteratePoint, dc: DerivedConstants) -> float:
    """Concave minorant of phi anchored at ``anchor``, evaluated at ``x``.

    Tight at the anchor and a lower bound on phi everywhere on the
    feasible set.
    """
    return _Anchor(anchor, dc).surrogate_q(_quads(x.Wl, x.Q, dc))


def surrogate_gradient(
    x: IteratePoint, anchor: IteratePoint, dc: DerivedConstants
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the anchored surrogate at ``x`` (Hermitian pair).

    Raises ValueError when a log argument is nonpositive.
    """
    return _Anchor(anchor, dc).gradient_q(_quads(x.Wl, x.Q, dc))


def _hermitize(A: np.ndarray) -> np.ndarray:
    return (A + A.conj().T) / 2.0


def _waterfill_level(eta: np.ndarray, budget: float) -> float:
    """Level nu >= 0 with sum([eta - nu]^+) = budget, assuming sum([eta]^+) > budget."""
    srt = np.sort(eta)[::-1]
    cand = (np.cumsum(srt) - budget) / np.arange(1, srt.size + 1)
    valid = np.nonzero(srt - cand > 0)[0]
    m = valid[-1] + 1 if valid.size else 1
    return max(float(cand[m - 1]), 0.0)


def _project_with_level(
    M_W: np.ndarray, M_Q: np.ndarray, budget: float
) -> tuple[np.ndarray, np.ndarray, float]:
    eta_w, F_w = np.linalg.eigh(_hermitize(M_W))
    eta_q, F_q = np.linalg.eigh(_hermitize(M_Q))
    clipped = np.maximum(eta_w, 0.0).sum() + np.maximum(eta_q, 0.0).sum()
    if clipped <= budget:
        nu = 0.0
    else:
        nu = _waterfill_level(np.concatenate([eta_w, eta_q]), budget)
    lam_w = np.maximum(eta_w - nu, 0.0)
    lam_q = np.maximum(eta_q - nu, 0.0)
    Wl = _hermitize((F_w * lam_w) @ F_w.conj().T)
    Q = _hermitize((F_q * lam_q) @ F_q.conj().T)
    return Wl, Q, nu


def project_feasible(M_W: np.ndarray, M_Q: np.ndarray, P_R: float) -> IteratePoint:
    """Euclidean projection onto {W, Q >= 0, Tr(W) + Tr(Q) <= P_R}.

    Water-filling: eigendecompose both blocks, subtract a common level
    nu* >= 0 and clip at zero, with nu* = 0 whenever plain clipping
    already meets the trace budget.
    """
    Wl, Q, _ = _project_with_level(np.atleast_2d(M_W), np.atleast_2d(M_Q), P_R)
    return IteratePoint(Wl=Wl, Q=Q)


def _plain_projector(P_R: float, an_enabled: bool = True):
    if an_enabled:
        return lambda MW, MQ: project_feasible(MW, MQ, P_R)

    def no_an(MW, MQ):
        pt = project_feasible(MW, np.zeros_like(MQ), P_R)
        return IteratePoint(Wl=pt.Wl, Q=np.zeros_like(MQ))

    return no_an


def _pair_norm(D_W: np.ndarray, D_Q: np.ndarray) -> float:
    return float(np.sqrt(np.linalg.norm(D_W) ** 2 + np.linalg.norm(D_Q) ** 2))


def _mapping(x: IteratePoint, anchor: _Anchor, projector) -> tuple[np.ndarray, np.ndarray, float]:
    G_W, G_Q = anchor.gradient_q(_quads(x.Wl, x.Q, anchor.dc))
    proj = projector(x.Wl + G_W, x.Q + G_Q)
    D_W = proj.Wl - x.Wl
    D_Q = proj.Q - x.Q
    return D_W, D_Q, _pair_norm(D_W, D_Q)


def gradient_mapping(
    x: IteratePoint, anchor: IteratePoint, dc: DerivedConstants, P_R: float
) -> tuple[tuple[np.ndarray, np.ndarray], float]:
    """P(x + grad surrogate(x; anchor)) - x and its Frobenius norm over the pair."""
    D_W, D_Q, norm = _mapping(x, _Anchor(anchor, dc), _plain_projector(P_R))
    return (D_W, D_Q), norm


def _step_candidates(x: IteratePoint, D_W, D_Q, alpha: float) -> IteratePoint:
    return IteratePoint(Wl=x.Wl + alpha * D_W, Q=x.Q + alpha * D_Q)


def _armijo(
    x: IteratePoint,
    anchor: _Anchor,
    direction: tuple[np.ndarray, np.ndarray],
    opts: SolverOptions,
) -> tuple[float, IteratePoint, float, float]:
    """One line-search step along the gradient mapping; returns (alpha, x_next, value_next, value_base)."""
    D_W, D_Q = direction
    dc = anchor.dc
    qx = _quads(x.Wl, x.Q, dc)
    base = anchor.surrogate_q(qx)
    dnorm = _pair_norm(D_W, D_Q)
    if dnorm == 0.0:
        return 0.0, x, base, base

    G_W, G_Q = anchor.gradient_q(qx)
    inner = float(np.real(np.vdot(G_W, D_W)) + np.real(np.vdot(G_Q, D_Q)))
    grad_norm = _pair_norm(G_W, G_Q)
    # steps stay in [0, 1]: x + alpha * mapping is a convex combination of
    # feasible points, so feasibility is preserved without reprojection
    s_eff = min(1.0, opts.step / (1.0 + grad_norm))
    # functionals are affine, so candidates cost scalar work only
    qd = _quads(D_W, D_Q, dc)

    if opts.stepsize_rule == "limited":
        alphas = s_eff * np.arange(1, opts.grid_size + 1) / opts.grid_size
        best_alpha, best_val = None, base
        for a in alphas:
            val = anchor.surrogate_q(qx + a * qd)
            if val > best_val:
                best_alpha, best_val = a, val
        if best_alpha is not None:
            return float(best_alpha), _step_candidates(x, D_W, D_Q, best_alpha), best_val, base
        # fall through to backtracking when the whole grid overshoots

    noise_floor = 1e-14 * max(1.0, abs(base))
    alpha = s_eff
    for _ in range(opts.armijo_cap + 1):
        val = anchor.surrogate_q(qx + alpha * qd)
        if val - base >= opts.sigma * alpha * inner:
            return alpha, _step_candidates(x, D_W, D_Q, alpha), val, base
        if opts.sigma * alpha * inner < noise_floor:
            # required progress is below what float evaluation can certify
            return 0.0, x, base, base
        alpha *= opts.beta
    raise LineSearchError(
        f"no sufficient increase after {opts.armijo_cap} halvings (|dir|={dnorm:.3e})"
    )


def armijo_step(
    x: IteratePoint,
    anchor: IteratePoint,
    direction: tuple[np.ndarray, np.ndarray],
    dc: DerivedConstants,
    opts: SolverOptions,
) -> tuple[float, IteratePoint]:
    """Backtracking step along ``direction`` (the gradient mapping at ``x``)."""
    alpha, x_next, _, _ = _armijo(x, _Anchor(anchor, dc), direction, opts)
    return alpha, x_next


def default_init(dc: DerivedConstants, P_R: float) -> IteratePoint:
    """Scaled-identity starting point Wl = Q = P_R / (2 (N - r)) I."""
    n = dc.dim
    c = P_R / (2.0 * n)
    return IteratePoint(Wl=c * np.eye(n, dtype=complex), Q=c * np.eye(n, dtype=complex))


def check_feasible(
    x: IteratePoint,
    P_R: float,
    psd_tol: float = 1e-10,
    trace_tol: float = 1e-8,
) -> None:
    """Raise ValueError unless x is PSD within tolerance and inside the trace budget."""
    for name, mat in (("Wl", x.Wl), ("Q", x.Q)):
        lam = np.linalg.eigvalsh(_hermitize(mat))
        bound = psd_tol * max(1.0, float(lam[-1]) if lam.size else 1.0)
        if lam.size and lam[0] < -bound:
            raise ValueError(f"{name} is not PSD (min eigenvalue {lam[0]:.3e})")
    if x.trace_sum() > P_R + trace_tol:
        raise ValueError(f"trace budget violated: {x.trace_sum():.12g} > {P_R}")


def _resolve_budget(
    opts: SolverOptions, rng: np.random.Generator, gm_anchor: float
) -> tuple[int, float]:
    """(max inner steps, inner gradient-mapping stop) for one outer iteration.

    Exact mode solves each subproblem two orders of magnitude more
    accurately than the current outer mapping (floored at ``inner_tol``),
    which reproduces exact-MM behavior without over-polishing early
    subproblems.
    """
    if opts.inner_budget == "exact":
        return opts.inner_cap, max(opts.inner_tol, 1e-2 * gm_anchor)
    if opts.inner_budget == "variable":
        return int(rng.integers(1, opts.l_max + 1)), 0.0
    return int(opts.inner_budget), 0.0


def _mm_loop(
    init: IteratePoint,
    dc: DerivedConstants,
    opts: SolverOptions,
    projector,
) -> tuple[IteratePoint, SolveTrace]:
    x = init
    phi = lifted_objective(x.Wl, x.Q, dc)
    trace = SolveTrace(phi_init=phi)
    rng = np.random.default_rng(opts.seed)
    prev_surr = None
    trace.reason = "max_outer"

    for k in range(opts.max_outer):
        t0 = time.perf_counter()
        anchor = _Anchor(x, dc)
        D_W, D_Q, gm = _mapping(x, anchor, projector)
        if gm < opts.stationarity_tol:
            trace.reason = "stationary"
            break

        budget, inner_stop = _resolve_budget(opts, rng, gm)
        exact_mode = opts.inner_budget == "exact"
        y = x
        alpha0 = 0.0
        inner_used = 0
        moved = False
        window_val = None
        for l in range(budget):
            if l > 0:
                D_W, D_Q, gm_l = _mapping(y, anchor, projector)
                if gm_l <= max(inner_stop, 1e-15):
                    break
            alpha, y, val, base = _armijo(y, anchor, (D_W, D_Q), opts)
            inner_used += 1
            if l == 0:
                alpha0 = alpha
                window_val = base
            if alpha == 0.0:
                break
            moved = True
            if exact_mode and l % 25 == 24:
                # value-stagnation guard: the subproblem is solved to float
                # resolution once a whole window moves the surrogate by < 1e-12
                if val - window_val < 1e-12 * max(1.0, abs(val)):
                    break
                window_val = val
        if not moved:
            trace.reason = "stalled"
            break

        surr = anchor.surrogate_q(_quads(y.Wl, y.Q, dc))
        phi_new = lifted_objective(y.Wl, y.Q, dc)

        trace.phi.append(phi_new)
        trace.surrogate.append(surr)
        trace.phi_anchor.append(phi)
        trace.gm_norm.append(gm)
        trace.zeta.append(opts.sigma * alpha0)
        trace.alpha0.append(alpha0)
        trace.inner_used.append(inner_used)
        trace.wall_s.append(time.perf_counter() - t0)

        x, phi = y, phi_new

        if opts.target_phi is not None and phi >= opts.target_phi - 1e-4 * abs(opts.target_phi):
            trace.reason = "target"
            break
        if prev_surr is not None and abs(surr - prev_surr) < opts.outer_tol * abs(prev_surr):
            trace.reason = "surrogate"
            break
        prev_surr = surr

    return x, trace


def inexact_mm_solve(
    init: IteratePoint | None,
    dc: DerivedConstants,
    opts: SolverOptions,
) -> tuple[IteratePoint, SolveTrace]:
    """Run the MM loop from ``init`` (default: scaled identity) to a stationary point.

    Stops on small relative surrogate improvement, on a gradient-mapping
    norm below ``stationarity_tol``, or at ``max_outer``.  The returned
    trace records the per-iteration sufficient-progress certificate.
    """
    if init is None:
        init = default_init(dc, opts.P_R)
    check_feasible(init, opts.P_R)
    return _mm_loop(init, dc, opts, _plain_projector(opts.P_R, opts.an_enabled))

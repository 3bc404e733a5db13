"""Secrecy-rate maximization with an energy-harvesting eavesdropper.

Adds a minimum harvested-power constraint tau * h_re^H (zeta W0 W0^H + Q0)
h_re + tau * theta1 >= epsilon to the design.  In the lifted domain the
constraint is the halfspace tau * ve^H (Wl + Q) ve >= epsilon_tilde, and
the constrained projection is solved by dual ascent: bisection on the
multiplier of that halfspace, with each inner problem a plain
water-filling projection on rank-one-shifted inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import DerivedConstants
from .purify import ConstraintBundle, _reduce_core
from .rates import functionals
from .solver import (
    IteratePoint,
    SolveTrace,
    SolverOptions,
    _mm_loop,
    check_feasible,
    default_init,
    project_feasible,
)


class InfeasibleEHError(ValueError):
    """The harvested-power requirement exceeds what the power budget can deliver."""


@dataclass(frozen=True)
class EhConfig:
    """Energy-harvesting parameters: efficiency tau, requirement epsilon, and
    the reduced requirement epsilon_tilde = epsilon - tau * theta1."""

    tau: float
    epsilon: float
    epsilon_tilde: float

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def make_eh_config(tau: float, epsilon: float, dc: DerivedConstants) -> EhConfig:
    """Build an EhConfig for one instance (folds the direct-link harvest into epsilon_tilde)."""
    return EhConfig(tau=tau, epsilon=epsilon, epsilon_tilde=epsilon - tau * dc.theta1)


def eh_margin(ehc: EhConfig, dc: DerivedConstants, P_R: float) -> float:
    """Feasibility margin tau * P_R * ||ve||^2 - epsilon_tilde (negative = infeasible)."""
    return ehc.tau * P_R * float(np.linalg.norm(dc.ve) ** 2) - ehc.epsilon_tilde


def _harvest_lifted(x: IteratePoint, ehc: EhConfig, dc: DerivedConstants) -> float:
    ve = dc.ve
    return ehc.tau * float(np.real(ve.conj() @ (x.Wl + x.Q) @ ve))


def project_feasible_eh(
    M_W: np.ndarray,
    M_Q: np.ndarray,
    P_R: float,
    ehc: EhConfig,
    dc: DerivedConstants,
) -> IteratePoint:
    """Projection onto the trace-budgeted PSD pair cone intersected with the
    harvested-power halfspace.

    Bisection on the multiplier lambda >= 0: each inner problem is the plain
    projection of inputs shifted by lambda * tau * ve ve^H, whose constraint
    value is nondecreasing in lambda; terminates on the complementarity
    condition.
    """
    if eh_margin(ehc, dc, P_R) < 0:
        raise InfeasibleEHError(
            f"requirement epsilon_tilde={ehc.epsilon_tilde:.6g} exceeds "
            f"tau*P_R*||ve||^2={ehc.epsilon_tilde + eh_margin(ehc, dc, P_R):.6g}"
        )
    M_W = np.atleast_2d(M_W)
    M_Q = np.atleast_2d(M_Q)
    base = project_feasible(M_W, M_Q, P_R)
    slack_tol = 1e-9 * max(1.0, abs(ehc.epsilon_tilde))
    if ehc.epsilon_tilde <= 0 or _harvest_lifted(base, ehc, dc) >= ehc.epsilon_tilde - slack_tol:
        return base

    rider = ehc.tau * np.outer(dc.ve, dc.ve.conj())

    def inner(lam: float) -> tuple[IteratePoint, float]:
        pt = project_feasible(M_W + lam * rider, M_Q + lam * rider, P_R)
        return pt, _harvest_lifted(pt, ehc, dc) - ehc.epsilon_tilde

    lo, hi = 0.0, 1.0
    pt_hi, g_hi = inner(hi)
    doublings = 0
    while g_hi < 0 and doublings < 60:
        lo, hi = hi, 2.0 * hi
        pt_hi, g_hi = inner(hi)
        doublings += 1

    best_pt = pt_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pt, g = inner(mid)
        if g >= -slack_tol:
            best_pt, hi = pt, mid
            if abs(mid * g) <= slack_tol:
                break
        else:
            lo = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return best_pt


def _eh_projector(P_R: float, ehc: EhConfig, dc: DerivedConstants):
    return lambda MW, MQ: project_feasible_eh(MW, MQ, P_R, ehc, dc)


def check_feasible_eh(x: IteratePoint, P_R: float, ehc: EhConfig, dc: DerivedConstants) -> None:
    check_feasible(x, P_R)
    if _harvest_lifted(x, ehc, dc) < ehc.epsilon_tilde - 1e-8 * max(1.0, abs(ehc.epsilon_tilde)):
        raise ValueError("init violates the harvested-power constraint")


def inexact_mm_solve_eh(
    init: IteratePoint | None,
    dc: DerivedConstants,
    opts: SolverOptions,
    ehc: EhConfig,
) -> tuple[IteratePoint, SolveTrace]:
    """MM loop of the EH-constrained problem; identical to the plain solve with
    the projection swapped, so monotone ascent and sufficient progress carry over."""
    if eh_margin(ehc, dc, P_R=opts.P_R) < 0:
        raise InfeasibleEHError("instance cannot meet the harvested-power requirement")
    if init is None:
        init = project_feasible_eh(
            default_init(dc, opts.P_R).Wl, default_init(dc, opts.P_R).Q, opts.P_R, ehc, dc
        )
    check_feasible_eh(init, opts.P_R, ehc, dc)
    return _mm_loop(init, dc, opts, _eh_projector(opts.P_R, ehc, dc))


def rank_reduce_eh(anchor: IteratePoint, dc: DerivedConstants, ehc: EhConfig) -> IteratePoint:
    """Rank reduction preserving the eight plain functionals plus the harvested power.

    The harvested-power level is linear in (Wl, Q), so it is exactly
    preserved along every null-direction step; a guard in the core loop
    keeps reducing (relaxing the trace to a never-increasing step) until
    rank(Wl) <= 2.
    """
    bundle = ConstraintBundle.from_anchor(anchor, dc, eh_vector=dc.ve, eh_tau=ehc.tau)
    return _reduce_core(anchor, bundle)

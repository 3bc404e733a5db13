"""Rank-two extraction from an MM limit point and stationarity certification.

The reduction keeps the eight linear functionals that pin the objective
(two alpha levels, two beta levels, two psi levels, the Eve-direction
trace on Wl, and the total trace) constant while stepping along null
directions of the constraint system to the PSD boundary, so the purified
point attains exactly the same objective with rank(Wl) <= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel import DerivedConstants
from .rates import functionals, lifted_gradient
from .solver import IteratePoint, _hermitize, _pair_norm

_RANGE_TOL = 1e-12


class RankExceededError(RuntimeError):
    """decompose_rank_two was called on a matrix of numerical rank > 2."""


@dataclass(frozen=True)
class ConstraintBundle:
    """Linear functionals on the block pair (Wl, Q), as coefficient pairs plus targets."""

    names: tuple[str, ...]
    coeff_w: tuple[np.ndarray, ...]
    coeff_q: tuple[np.ndarray, ...]
    targets: np.ndarray

    @classmethod
    def from_anchor(
        cls,
        anchor: IteratePoint,
        dc: DerivedConstants,
        eh_vector: np.ndarray | None = None,
        eh_tau: float = 1.0,
    ) -> "ConstraintBundle":
        """Levels of all objective-pinning functionals at ``anchor``.

        ``eh_vector`` appends the harvested-power functional (EH variant,
        nine functionals instead of eight).
        """
        n = dc.dim
        k_sr = dc.sigma_tilde2_r / dc.zeta
        eye = np.eye(n, dtype=complex)
        zero = np.zeros((n, n), dtype=complex)
        names = ["alpha1", "alpha2", "beta1", "beta2", "psi1", "psi2", "w_energy", "trace"]
        coeff_w = [
            (k_sr + dc.p_tilde_b / dc.zeta) * dc.ra_mat,
            (k_sr + dc.p_tilde_a / dc.zeta) * dc.rb_mat,
            k_sr * dc.ra_mat,
            k_sr * dc.rb_mat,
            k_sr * dc.re_mat,
            dc.re_mat,
            dc.re_mat,
            eye,
        ]
        coeff_q = [dc.ra_mat, dc.rb_mat, dc.ra_mat, dc.rb_mat, dc.re_mat, dc.re_mat, zero, eye]
        if eh_vector is not None:
            names.append("harvest")
            rider = eh_tau * np.outer(eh_vector, eh_vector.conj())
            coeff_w.append(rider)
            coeff_q.append(rider)
        bundle = cls(
            names=tuple(names),
            coeff_w=tuple(coeff_w),
            coeff_q=tuple(coeff_q),
            targets=np.zeros(len(names)),
        )
        object.__setattr__(bundle, "targets", bundle.evaluate(anchor))
        return bundle

    def evaluate(self, x: IteratePoint) -> np.ndarray:
        vals = [
            float(np.real(np.trace(x.Wl @ aw)) + np.real(np.trace(x.Q @ aq)))
            for aw, aq in zip(self.coeff_w, self.coeff_q)
        ]
        return np.array(vals)

    def residual(self, x: IteratePoint) -> float:
        scale = max(1.0, float(np.abs(self.targets).max()))
        return float(np.abs(self.evaluate(x) - self.targets).max()) / scale


def decompose_rank_two(Wl: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Factor a numerically rank-<=2 PSD matrix as W W^H with W of width 2."""
    Wl = _hermitize(np.atleast_2d(Wl))
    lam, U = np.linalg.eigh(Wl)
    lam = np.maximum(lam[::-1], 0.0)
    U = U[:, ::-1]
    n = Wl.shape[0]
    if n >= 3 and lam[0] > 0 and lam[2] > tol * lam[0]:
        raise RankExceededError(
            f"numerical rank > 2 (lam3/lam1 = {lam[2] / lam[0]:.3e}); run rank_reduce first"
        )
    W = np.zeros((n, 2), dtype=complex)
    W[:, 0] = np.sqrt(lam[0]) * U[:, 0]
    if n >= 2:
        W[:, 1] = np.sqrt(lam[1]) * U[:, 1]
    return W


def _range_decomp(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(U, lam) with A = U diag(lam) U^H restricted to the numerical range."""
    lam, U = np.linalg.eigh(_hermitize(A))
    if lam.size == 0 or lam[-1] <= 0:
        return U[:, :0], lam[:0]
    keep = lam > _RANGE_TOL * lam[-1]
    return U[:, keep], lam[keep]


def _herm_basis_row(A_red: np.ndarray) -> np.ndarray:
    """Real row of <D, A_red> over the Hermitian parametrization [diag; re_ij; im_ij]."""
    r = A_red.shape[0]
    iu = np.triu_indices(r, k=1)
    return np.concatenate(
        [np.real(np.diag(A_red)), 2.0 * np.real(A_red[iu]), 2.0 * np.imag(A_red[iu])]
    )


def _unvec_herm(vec: np.ndarray, r: int) -> np.ndarray:
    D = np.zeros((r, r), dtype=complex)
    D[np.diag_indices(r)] = vec[:r]
    iu = np.triu_indices(r, k=1)
    k = iu[0].size
    off = vec[r : r + k] + 1j * vec[r + k : r + 2 * k]
    D[iu] = off
    D[(iu[1], iu[0])] = off.conj()
    return D


def _null_direction(rows: np.ndarray) -> np.ndarray | None:
    _, s, vh = np.linalg.svd(rows, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
    if rank >= rows.shape[1]:
        return None
    return vh[rank:].conj().T[:, 0].real


def _reduce_core(anchor: IteratePoint, bundle: ConstraintBundle) -> IteratePoint:
    U_W, lam_W = _range_decomp(anchor.Wl)
    U_Q, lam_Q = _range_decomp(anchor.Q)
    n = anchor.Wl.shape[0]
    drop_trace = False

    for _ in range(2 * n + 2):
        r_w, r_q = lam_W.size, lam_Q.size
        if r_w <= 2:
            break
        idx = [i for i, name in enumerate(bundle.names) if not (drop_trace and name == "trace")]
        rows = []
        for i in idx:
            row_w = _herm_basis_row(U_W.conj().T @ bundle.coeff_w[i] @ U_W) if r_w else np.zeros(0)
            row_q = _herm_basis_row(U_Q.conj().T @ bundle.coeff_q[i] @ U_Q) if r_q else np.zeros(0)
            rows.append(np.concatenate([row_w, row_q]))
        vec = _null_direction(np.array(rows))
        if vec is None:
            if drop_trace:
                raise RuntimeError("rank reduction stalled: no null direction available")
            drop_trace = True
            continue

        D_W = _unvec_herm(vec[: r_w * r_w], r_w)
        D_Q = _unvec_herm(vec[r_w * r_w :], r_q) if r_q else np.zeros((0, 0), dtype=complex)

        # generalized spectrum of the step direction against the current blocks
        deltas = []
        for lam, D in ((lam_W, D_W), (lam_Q, D_Q)):
            if lam.size:
                S = np.diag(1.0 / np.sqrt(lam))
                deltas.append(np.linalg.eigvalsh(_hermitize(S @ D @ S)))
        deltas = np.concatenate(deltas)
        if drop_trace:
            # pick the boundary step whose trace change is nonpositive
            dtrace = float(np.real(np.trace(D_W)) + np.real(np.trace(D_Q)))
            neg, pos = deltas.min(), deltas.max()
            if dtrace > 0:
                D_W, D_Q, dtrace = -D_W, -D_Q, -dtrace
                neg, pos = -pos, -neg
            t = -1.0 / neg if neg < -1e-14 else -1.0 / pos
        else:
            dstar = deltas[np.argmax(np.abs(deltas))]
            if abs(dstar) < 1e-14:
                raise RuntimeError("degenerate null direction in rank reduction")
            t = -1.0 / dstar

        def step(U, lam, D):
            if lam.size == 0:
                return U, lam
            mu, S = np.linalg.eigh(_hermitize(np.diag(lam) + t * D))
            keep = mu > _RANGE_TOL * max(mu[-1], 1e-300)
            return U @ S[:, keep], mu[keep]

        U_W, lam_W = step(U_W, lam_W, D_W)
        U_Q, lam_Q = step(U_Q, lam_Q, D_Q)

    Wl = _hermitize((U_W * lam_W) @ U_W.conj().T) if lam_W.size else np.zeros((n, n), dtype=complex)
    Q = _hermitize((U_Q * lam_Q) @ U_Q.conj().T) if lam_Q.size else np.zeros((n, n), dtype=complex)
    out = IteratePoint(Wl=Wl, Q=Q)
    if bundle.residual(out) > 1e-8:
        raise RuntimeError(f"rank reduction drifted: functional residual {bundle.residual(out):.3e}")
    return out


def rank_reduce(anchor: IteratePoint, dc: DerivedConstants) -> IteratePoint:
    """Reduce rank(Wl) to <= 2 while preserving all eight objective functionals.

    Both phi and the anchored surrogate are exactly preserved because every
    quantity entering them is pinned; anchors already of rank <= 2 are
    returned unchanged.
    """
    return _reduce_core(anchor, ConstraintBundle.from_anchor(anchor, dc))


def _project_physical(
    M_W: np.ndarray, M_Q: np.ndarray, P_R: float
) -> tuple[np.ndarray, np.ndarray]:
    """Projection onto {Tr(W W^H) + Tr(Q) <= P_R, Q >= 0} in the beamformer domain.

    The W block shrinks uniformly by 1/(1+nu) and the Q block by an
    eigenvalue shift-and-clip, with the common multiplier nu solving the
    trace complementarity.
    """
    q_eta, F = np.linalg.eigh(_hermitize(M_Q))
    w_energy = float(np.linalg.norm(M_W) ** 2)

    def budget_used(nu: float) -> float:
        return w_energy / (1.0 + nu) ** 2 + np.maximum(q_eta - nu / 2.0, 0.0).sum()

    if budget_used(0.0) <= P_R:
        nu = 0.0
    else:
        hi = max(np.sqrt(w_energy / P_R) - 1.0, 0.0) + 2.0 * max(float(q_eta[-1]), 0.0) + 1.0
        nu = brentq(lambda v: budget_used(v) - P_R, 0.0, hi, xtol=1e-14, rtol=1e-15)
    W = M_W / (1.0 + nu)
    Q = _hermitize((F * np.maximum(q_eta - nu / 2.0, 0.0)) @ F.conj().T)
    return W, Q


def stationarity_residual(
    W: np.ndarray,
    Q: np.ndarray,
    dc: DerivedConstants,
    P_R: float,
    ehc=None,
) -> float:
    """Gradient-mapping norm of phi at the physical-domain pair (W, Q).

    Zero exactly at KKT points of the rank-two design problem.  With an
    :class:`~relaysec.eh.EhConfig` the certificate is evaluated over the
    harvested-power-constrained set (in the lifted domain, where that set
    is convex and the projection is available in closed form).
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    Q = _hermitize(np.atleast_2d(np.asarray(Q, dtype=complex)))
    trace_sum = float(np.real(np.trace(W @ W.conj().T)) + np.real(np.trace(Q)))
    if trace_sum > P_R * (1.0 + 1e-8):
        raise ValueError(f"infeasible input: trace {trace_sum:.12g} exceeds budget {P_R}")
    lam = np.linalg.eigvalsh(Q)
    if lam.size and lam[0] < -1e-8 * max(1.0, float(lam[-1])):
        raise ValueError("infeasible input: Q is not PSD")

    Wl = W @ W.conj().T
    G_W, G_Q = lifted_gradient(Wl, Q, dc)

    if ehc is not None:
        from .eh import project_feasible_eh

        fv = functionals(Wl, Q, dc)
        # lifted harvested functional: tau * ve^H (Wl + Q) ve = tau * (psi2 - sigma_E^2)
        harvest = ehc.tau * (fv.psi[1] - dc.sigma2_e)
        if harvest < ehc.epsilon_tilde - 1e-8 * max(1.0, abs(ehc.epsilon_tilde)):
            raise ValueError("infeasible input: harvested power below requirement")
        proj = project_feasible_eh(Wl + G_W, Q + G_Q, P_R, ehc, dc)
        return _pair_norm(proj.Wl - Wl, proj.Q - Q)

    grad_W = 2.0 * (G_W @ W)
    PW, PQ = _project_physical(W + grad_W, Q + G_Q, P_R)
    return _pair_norm(PW - W, PQ - Q)

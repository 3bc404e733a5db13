"""Closed-form SINR, rate, power and lifted-objective functionals.

Everything here is a pure function of a :class:`~relaysec.channel.RelaySolution`
or of the lifted pair (Wl, Q) together with :class:`DerivedConstants`.
Rates are in nats.  In half-duplex mode all rates carry a factor 1/2 and
Eve's rate switches to the interference-free direct-link model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, DerivedConstants, RelaySolution


@dataclass(frozen=True)
class EveModel:
    """Eve's equivalent 2x2 MIMO model: channel H_E, noise covariance Psi, symbol powers P."""

    H_E: np.ndarray
    Psi: np.ndarray
    P: np.ndarray

    @property
    def psi11(self) -> float:
        return float(self.Psi[0, 0])

    @property
    def psi22(self) -> float:
        return float(self.Psi[1, 1])


@dataclass(frozen=True)
class FunctionalValues:
    """The seven scalar functionals of the lifted problem at one point."""

    alpha: np.ndarray  # (2,)
    beta: np.ndarray  # (2,)
    psi: np.ndarray  # (2,)
    w_energy: float  # Tr(Wl V0^H h_re h_re^H V0)


def _quad(v: np.ndarray, A: np.ndarray) -> float:
    """Real quadratic form v^H A v for Hermitian A."""
    return float(np.real(v.conj() @ A @ v))


def _check_hermitian(A: np.ndarray, name: str) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    scale = max(np.linalg.norm(A), 1.0)
    if np.linalg.norm(A - A.conj().T) > 1e-8 * scale:
        raise ValueError(f"{name} must be Hermitian")
    return A


def _quads(Wl: np.ndarray, Q: np.ndarray, dc: DerivedConstants) -> np.ndarray:
    """Six real quadratic forms [va^H Wl va, vb^H Wl vb, ve^H Wl ve, same for Q].

    Every lifted functional is affine in these, which makes line-search
    candidates evaluable with scalar arithmetic.
    """
    V = dc.vmat
    qw = np.real(np.einsum("ij,ij->i", V.conj() @ np.atleast_2d(Wl), V))
    qq = np.real(np.einsum("ij,ij->i", V.conj() @ np.atleast_2d(Q), V))
    return np.concatenate([qw, qq])


def _fv_from_quads(q: np.ndarray, dc: DerivedConstants) -> FunctionalValues:
    k_sr = dc.sigma_tilde2_r / dc.zeta
    beta1 = k_sr * q[0] + q[3]
    beta2 = k_sr * q[1] + q[4]
    alpha1 = beta1 + dc.p_tilde_b / dc.zeta * q[0]
    alpha2 = beta2 + dc.p_tilde_a / dc.zeta * q[1]
    psi1 = k_sr * q[2] + q[5] + dc.sigma2_e + dc.theta1
    psi2 = q[2] + q[5] + dc.sigma2_e
    return FunctionalValues(
        alpha=np.array([alpha1, alpha2]),
        beta=np.array([beta1, beta2]),
        psi=np.array([psi1, psi2]),
        w_energy=q[2],
    )


def functionals(Wl: np.ndarray, Q: np.ndarray, dc: DerivedConstants) -> FunctionalValues:
    """Evaluate alpha_i, beta_i, psi_i and the Eve-direction energy of (Wl, Q)."""
    return _fv_from_quads(_quads(Wl, Q, dc), dc)


def _quads_from_values(fv: FunctionalValues, dc: DerivedConstants) -> np.ndarray:
    k_sr = dc.sigma_tilde2_r / dc.zeta
    qa_w = (fv.alpha[0] - fv.beta[0]) * dc.zeta / dc.p_tilde_b if dc.p_tilde_b > 0 else 0.0
    qb_w = (fv.alpha[1] - fv.beta[1]) * dc.zeta / dc.p_tilde_a if dc.p_tilde_a > 0 else 0.0
    qe_w = fv.w_energy
    qe_q = fv.psi[1] - dc.sigma2_e - qe_w
    return np.array([
        qa_w, qb_w, qe_w,
        fv.beta[0] - k_sr * qa_w, fv.beta[1] - k_sr * qb_w, qe_q,
    ])


def _hd_coeffs(dc: DerivedConstants) -> tuple[float, float, float, float, float, float]:
    """(kn_w, kn_q, kn_0, kd_w, kd_q, kd_0) of the half-duplex Eve-rate ratio."""
    s2e, st2r = dc.sigma2_e, dc.sigma_tilde2_r
    kn_w = (s2e * st2r + dc.theta1 * st2r + s2e * (dc.p_tilde_a + dc.p_tilde_b)
            + dc.theta2) / dc.zeta
    return kn_w, dc.theta1 + s2e, s2e**2 + s2e * dc.theta1, s2e * st2r / dc.zeta, s2e, s2e**2


def _g2_numerator_q(q: np.ndarray, dc: DerivedConstants) -> float:
    if dc.duplex == "hd":
        kn_w, kn_q, kn_0, _, _, _ = _hd_coeffs(dc)
        return kn_w * q[2] + kn_q * q[5] + kn_0
    psi1 = dc.sigma_tilde2_r / dc.zeta * q[2] + q[5] + dc.sigma2_e + dc.theta1
    psi2 = q[2] + q[5] + dc.sigma2_e
    return psi2**2 + dc.theta1 * (psi1 + psi2) + dc.theta2 / dc.zeta * q[2]


def _g2_numerator(fv: FunctionalValues, dc: DerivedConstants) -> float:
    """Argument of the eavesdropper-rate log in the lifted domain."""
    return _g2_numerator_q(_quads_from_values(fv, dc), dc)


def _f_value_q(q: np.ndarray, dc: DerivedConstants) -> float:
    fv = _fv_from_quads(q, dc)
    out = np.log(dc.sigma_tilde2_a + fv.alpha[0]) + np.log(dc.sigma_tilde2_b + fv.alpha[1])
    if dc.duplex == "hd":
        _, _, _, kd_w, kd_q, kd_0 = _hd_coeffs(dc)
        out += np.log(kd_w * q[2] + kd_q * q[5] + kd_0)
    else:
        out += np.log(fv.psi[0]) + np.log(fv.psi[1])
    return float(out)


def _g1_value(fv: FunctionalValues, dc: DerivedConstants) -> float:
    c1, c2 = dc.sigma_tilde2_a, dc.sigma_tilde2_b
    return float(np.log(c1 + fv.beta[0]) + np.log(c2 + fv.beta[1]))


def _phi_from_quads(q: np.ndarray, dc: DerivedConstants) -> float:
    fv = _fv_from_quads(q, dc)
    val = _f_value_q(q, dc) - _g1_value(fv, dc) - np.log(_g2_numerator_q(q, dc))
    return dc.rate_scale * float(val)


def lifted_objective(Wl: np.ndarray, Q: np.ndarray, dc: DerivedConstants) -> float:
    """Lifted sum secrecy rate phi(Wl, Q) = f - g1 - g2.

    For rank(Wl) <= 2 this equals :func:`sum_secrecy_rate` of the
    corresponding physical solution.
    """
    Wl = _check_hermitian(Wl, "Wl")
    Q = _check_hermitian(Q, "Q")
    return _phi_from_quads(_quads(Wl, Q, dc), dc)


def _grad_weights_q(q: np.ndarray, anchor_q: np.ndarray, dc: DerivedConstants) -> np.ndarray:
    """Rank-one weights [wa, wb, we, qa, qb, qe] of the surrogate gradient.

    The gradient of the anchored surrogate is
    scale * sum_i weights[i] * v_i v_i^H per block; with ``anchor_q is q``
    these are the weights of the exact phi gradient (partial
    linearization).  Raises ValueError on a nonpositive log argument.
    """
    fv = _fv_from_quads(q, dc)
    afv = _fv_from_quads(anchor_q, dc)
    c1, c2 = dc.sigma_tilde2_a, dc.sigma_tilde2_b
    k_sr = dc.sigma_tilde2_r / dc.zeta

    a1, a2 = c1 + fv.alpha[0], c2 + fv.alpha[1]
    b1, b2 = c1 + afv.beta[0], c2 + afv.beta[1]
    num_anchor = _g2_numerator_q(anchor_q, dc)
    if min(a1, a2, b1, b2, num_anchor) <= 0:
        raise ValueError("nonpositive log argument in surrogate gradient")

    # f-part minus the (constant) linearized g1-part
    wa = (k_sr + dc.p_tilde_b / dc.zeta) / a1 - k_sr / b1
    wb = (k_sr + dc.p_tilde_a / dc.zeta) / a2 - k_sr / b2
    qa = 1.0 / a1 - 1.0 / b1
    qb = 1.0 / a2 - 1.0 / b2

    if dc.duplex == "hd":
        kn_w, kn_q, _, kd_w, kd_q, kd_0 = _hd_coeffs(dc)
        den = kd_w * q[2] + kd_q * q[5] + kd_0
        if den <= 0:
            raise ValueError("nonpositive log argument in surrogate gradient")
        we = kd_w / den - kn_w / num_anchor
        qe = kd_q / den - kn_q / num_anchor
    else:
        psi1, psi2 = fv.psi
        if min(psi1, psi2) <= 0:
            raise ValueError("nonpositive log argument in surrogate gradient")
        dnum_w = 2.0 * psi2 + dc.theta1 * (k_sr + 1.0) + dc.theta2 / dc.zeta
        dnum_q = 2.0 * psi2 + 2.0 * dc.theta1
        we = k_sr / psi1 + 1.0 / psi2 - dnum_w / num_anchor
        qe = 1.0 / psi1 + 1.0 / psi2 - dnum_q / num_anchor
    return dc.rate_scale * np.array([wa, wb, we, qa, qb, qe])


def _grad_from_weights(weights: np.ndarray, dc: DerivedConstants) -> tuple[np.ndarray, np.ndarray]:
    V = dc.vmat
    G_W = (V * weights[:3, None]).T @ V.conj()  # sum_i w_i v_i v_i^H
    G_Q = (V * weights[3:, None]).T @ V.conj()
    return G_W, G_Q


def gradient_from_values(
    fv: FunctionalValues, anchor: FunctionalValues, dc: DerivedConstants
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the surrogate at a point with functionals ``fv``, anchored at ``anchor``.

    With ``anchor is fv`` this is the exact gradient of phi (the surrogate
    is a partial linearization, so the two coincide at the anchor).  Every
    gradient is a weighted sum of the fixed rank-one matrices
    va va^H, vb vb^H, ve ve^H.
    """
    q = _quads_from_values(fv, dc)
    aq = q if anchor is fv else _quads_from_values(anchor, dc)
    return _grad_from_weights(_grad_weights_q(q, aq, dc), dc)


def lifted_gradient(Wl: np.ndarray, Q: np.ndarray, dc: DerivedConstants) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of phi with respect to the Hermitian pair (Wl, Q)."""
    q = _quads(np.atleast_2d(Wl), np.atleast_2d(Q), dc)
    return _grad_from_weights(_grad_weights_q(q, q, dc), dc)


def sinr_legitimate(sol: RelaySolution, dc: DerivedConstants, node: str) -> float:
    """Post-Alamouti-combining SINR at node 'A' or 'B'."""
    if node == "A":
        h, p_fwd, sig2 = dc.h_ra, dc.p_tilde_b, dc.sigma_tilde2_a
    elif node == "B":
        h, p_fwd, sig2 = dc.h_rb, dc.p_tilde_a, dc.sigma_tilde2_b
    else:
        raise ValueError(f"node must be 'A' or 'B', got {node!r}")
    hw2 = float(np.linalg.norm(h.conj() @ sol.W0) ** 2)
    hqh = _quad(h, sol.Q0)
    return p_fwd * hw2 / (dc.sigma_tilde2_r * hw2 + hqh + sig2)


def legitimate_rate(sol: RelaySolution, dc: DerivedConstants, node: str) -> float:
    """log(1 + SINR) in nats, halved in half-duplex mode."""
    return dc.rate_scale * float(np.log1p(sinr_legitimate(sol, dc, node)))


def eve_noise_cov(sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants) -> EveModel:
    """Eve's equivalent MIMO channel and the interference-plus-noise covariance."""
    w = ch.h_re.conj() @ sol.W0
    hw = float(np.linalg.norm(w))
    hqh = _quad(ch.h_re, sol.Q0)
    H_E = np.array(
        [[hw * dc.f_tilde_ar, hw * dc.f_tilde_br], [ch.h_ae, ch.h_be]], dtype=complex
    )
    psi11 = dc.sigma_tilde2_r * hw**2 + hqh + ch.sigma2_e
    if dc.duplex == "hd":
        psi22 = ch.sigma2_e
    else:
        psi11 += dc.theta1
        psi22 = hqh + ch.sigma2_e + dc.zeta * hw**2
    return EveModel(
        H_E=H_E,
        Psi=np.diag([psi11, psi22]).astype(float),
        P=np.diag([ch.p_a, ch.p_b]).astype(float),
    )


def eve_sum_rate(sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants) -> float:
    """Eve's multiple-access sum rate in nats.

    Computed both as log|I + H_E P H_E^H Psi^{-1}| and in the scalar closed
    form; the two must agree to 1e-9 (internal consistency assertion).
    """
    em = eve_noise_cov(sol, ch, dc)
    mat = np.eye(2) + em.H_E @ em.P @ em.H_E.conj().T @ np.linalg.inv(em.Psi)
    det_form = float(np.log(np.real(np.linalg.det(mat))))

    hw2 = float(np.linalg.norm(ch.h_re.conj() @ sol.W0) ** 2)
    hqh = _quad(ch.h_re, sol.Q0)
    if dc.duplex == "hd":
        s2e, st2r = ch.sigma2_e, dc.sigma_tilde2_r
        num = ((s2e * st2r + dc.theta1 * st2r + s2e * (dc.p_tilde_a + dc.p_tilde_b)
                + dc.theta2) * hw2 + (dc.theta1 + s2e) * hqh + s2e**2 + s2e * dc.theta1)
        den = s2e * st2r * hw2 + s2e * hqh + s2e**2
        scalar_form = float(np.log(num) - np.log(den))
    else:
        p11, p22 = em.psi11, em.psi22
        num = p22**2 + dc.theta1 * (p11 + p22) + dc.theta2 * hw2
        scalar_form = float(np.log(num / (p11 * p22)))

    if abs(det_form - scalar_form) > 1e-9 * max(1.0, abs(scalar_form)):
        raise AssertionError(
            f"Eve-rate forms disagree: determinant {det_form} vs scalar {scalar_form}"
        )
    return dc.rate_scale * scalar_form


def sum_secrecy_rate(sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants) -> float:
    """R_A + R_B - R_E, unclipped (may be negative)."""
    return (
        legitimate_rate(sol, dc, "A")
        + legitimate_rate(sol, dc, "B")
        - eve_sum_rate(sol, ch, dc)
    )


def relay_power(sol: RelaySolution, dc: DerivedConstants) -> float:
    """Total relay transmit power zeta Tr(W0 W0^H) + Tr(Q0)."""
    return float(
        dc.zeta * np.real(np.trace(sol.W0 @ sol.W0.conj().T)) + np.real(np.trace(sol.Q0))
    )


def harvested_power(sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants, tau: float) -> float:
    """Wireless power transferred to Eve: tau (h_re^H (zeta W0 W0^H + Q0) h_re + theta1)."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    hw2 = float(np.linalg.norm(ch.h_re.conj() @ sol.W0) ** 2)
    hqh = _quad(ch.h_re, sol.Q0)
    return tau * (dc.zeta * hw2 + hqh + dc.theta1)

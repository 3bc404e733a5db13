"""Network instances and the derived constants the optimizer consumes.

A :class:`ChannelSet` holds all physical channels and radio parameters of
one two-way relay network instance (Alice, Bob, an N-transmit/M-receive
full-duplex relay, and an eavesdropper Eve).  :func:`derive_constants`
turns it into the effective scalars and the self-interference nulling
basis used by every downstream module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class ConfigError(ValueError):
    """Invalid dimensions or radio parameters."""


class NoNullingDimensionsError(ValueError):
    """The self-interference channel leaves no transmit dimensions (N - r = 0)."""


@dataclass(frozen=True)
class ChannelSet:
    """All channels, powers, noise variances and residual-SI factors of one instance."""

    h_ar: np.ndarray  # Alice -> relay, length M
    h_br: np.ndarray  # Bob -> relay, length M
    H_rr: np.ndarray  # relay self-interference channel, M x N
    h_ra: np.ndarray  # relay -> Alice, length N
    h_rb: np.ndarray  # relay -> Bob, length N
    h_re: np.ndarray  # relay -> Eve, length N
    h_ae: complex  # Alice -> Eve direct link
    h_be: complex  # Bob -> Eve direct link
    h_aa: complex  # Alice self-interference
    h_bb: complex  # Bob self-interference
    p_a: float
    p_b: float
    sigma2_a: float
    sigma2_b: float
    sigma2_e: float
    sigma2_r: float
    kappa_a: float
    kappa_b: float

    def __post_init__(self):
        m = self.h_ar.shape[0]
        n = self.H_rr.shape[1]
        if m < 1 or n < 1:
            raise ConfigError(f"need M >= 1 and N >= 1, got M={m}, N={n}")
        if self.h_br.shape != (m,) or self.H_rr.shape != (m, n):
            raise ConfigError("inconsistent relay-side dimensions")
        for name in ("h_ra", "h_rb", "h_re"):
            if getattr(self, name).shape != (n,):
                raise ConfigError(f"{name} must have length N={n}")
        if min(self.p_a, self.p_b) < 0:
            raise ConfigError("transmit powers must be nonnegative")
        if min(self.sigma2_a, self.sigma2_b, self.sigma2_e, self.sigma2_r) <= 0:
            raise ConfigError("noise variances must be positive")
        for k in (self.kappa_a, self.kappa_b):
            if not 0.0 <= k <= 1.0:
                raise ConfigError("kappa must lie in [0, 1]")

    @property
    def n_tx(self) -> int:
        return self.H_rr.shape[1]

    @property
    def m_rx(self) -> int:
        return self.H_rr.shape[0]


@dataclass(frozen=True)
class DerivedConstants:
    """MMSE receivers, nulling basis and effective scalars of one instance.

    ``c1``/``c2`` of the lifted objective are ``sigma_tilde2_a``/``sigma_tilde2_b``.
    ``va/vb/ve`` are the channels projected onto the nulling basis; in
    half-duplex mode ``V0`` is the identity and ``rate_scale`` is 1/2.
    """

    f_a: np.ndarray
    f_b: np.ndarray
    V0: np.ndarray
    r: int
    zeta: float
    theta1: float
    theta2: float
    p_tilde_a: float
    p_tilde_b: float
    sigma_tilde2_r: float
    sigma_tilde2_a: float
    sigma_tilde2_b: float
    f_tilde_ar: complex
    f_tilde_br: complex
    # carried along so rate evaluations need no separate ChannelSet
    h_ra: np.ndarray
    h_rb: np.ndarray
    h_re: np.ndarray
    sigma2_e: float
    p_a: float
    p_b: float
    duplex: str = "fd"
    # channels projected onto the nulling basis, and their outer products
    va: np.ndarray = field(default=None, repr=False)
    vb: np.ndarray = field(default=None, repr=False)
    ve: np.ndarray = field(default=None, repr=False)
    vmat: np.ndarray = field(default=None, repr=False)
    ra_mat: np.ndarray = field(default=None, repr=False)
    rb_mat: np.ndarray = field(default=None, repr=False)
    re_mat: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        """Side length N - r of the lifted variables."""
        return self.V0.shape[1]

    @property
    def rate_scale(self) -> float:
        return 0.5 if self.duplex == "hd" else 1.0


@dataclass(frozen=True)
class RelaySolution:
    """Physical-domain beamformer W0 (N x 2) and AN covariance Q0 (N x N)."""

    W0: np.ndarray
    Q0: np.ndarray


def generate_channels(
    seed: int,
    n_tx: int,
    m_rx: int,
    *,
    p_a: float,
    p_b: float,
    sigma2_a: float,
    sigma2_b: float,
    sigma2_e: float,
    sigma2_r: float,
    kappa_a: float,
    kappa_b: float,
    var_legit: float = 1.0,
    var_eve: float = 1.0,
    var_direct: float = 1.0,
    var_self: float = 1.0,
) -> ChannelSet:
    """Draw one i.i.d. circularly-symmetric complex Gaussian network instance.

    ``var_legit`` covers the four relay/legitimate links, ``var_eve`` the
    relay->Eve link, ``var_direct`` the two source->Eve links (may be 0,
    which zeroes them exactly) and ``var_self`` the self-interference
    channels.  Deterministic for a fixed seed.
    """
    if n_tx < 1 or m_rx < 1:
        raise ConfigError(f"need N >= 1 and M >= 1, got N={n_tx}, M={m_rx}")
    for name, v in (("var_legit", var_legit), ("var_eve", var_eve), ("var_self", var_self)):
        if v <= 0:
            raise ConfigError(f"{name} must be positive")
    if var_direct < 0:
        raise ConfigError("var_direct must be nonnegative")

    rng = np.random.default_rng(seed)

    def cn(shape, var):
        if var == 0.0:
            return np.zeros(shape, dtype=complex)
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return np.sqrt(var / 2.0) * x

    # draw order is part of the determinism contract
    h_ar = cn(m_rx, var_legit)
    h_br = cn(m_rx, var_legit)
    H_rr = cn((m_rx, n_tx), var_self)
    h_ra = cn(n_tx, var_legit)
    h_rb = cn(n_tx, var_legit)
    h_re = cn(n_tx, var_eve)
    h_ae = complex(cn((), var_direct))
    h_be = complex(cn((), var_direct))
    h_aa = complex(cn((), var_self))
    h_bb = complex(cn((), var_self))

    return ChannelSet(
        h_ar=h_ar, h_br=h_br, H_rr=H_rr, h_ra=h_ra, h_rb=h_rb, h_re=h_re,
        h_ae=h_ae, h_be=h_be, h_aa=h_aa, h_bb=h_bb,
        p_a=p_a, p_b=p_b,
        sigma2_a=sigma2_a, sigma2_b=sigma2_b, sigma2_e=sigma2_e, sigma2_r=sigma2_r,
        kappa_a=kappa_a, kappa_b=kappa_b,
    )


def nullspace_basis(H_rr: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, int]:
    """Orthonormal basis V0 of the right null space of H_rr and its rank r.

    r counts singular values above ``tol`` times the largest one; V0 holds
    the right singular vectors of the remaining N - r directions.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    m, n = H_rr.shape
    _, s, vh = np.linalg.svd(H_rr, full_matrices=True)
    if s.size and s[0] > 0:
        r = int(np.sum(s > tol * s[0]))
    else:
        r = 0
    if n - r == 0:
        raise NoNullingDimensionsError(
            f"H_rr has rank {r} = N: no transmit dimensions left for nulling"
        )
    V0 = vh[r:, :].conj().T
    return V0, r


def mmse_receivers(ch: ChannelSet) -> tuple[np.ndarray, np.ndarray]:
    """MMSE receive filters for both source signals, from one Cholesky solve."""
    m = ch.m_rx
    cov = ch.sigma2_r * np.eye(m, dtype=complex)
    cov += ch.p_a * np.outer(ch.h_ar, ch.h_ar.conj())
    cov += ch.p_b * np.outer(ch.h_br, ch.h_br.conj())
    factor = cho_factor(cov)
    f_a = cho_solve(factor, ch.h_ar)
    f_b = cho_solve(factor, ch.h_br)
    return f_a, f_b


def derive_constants(ch: ChannelSet, duplex: str = "fd") -> DerivedConstants:
    """Compute every effective scalar and the nulling basis for one instance.

    ``duplex="hd"`` models the half-duplex baseline: no self-interference
    (kappa treated as 0), no nulling constraint (V0 = I), and all rates
    downstream carry a factor 1/2.
    """
    if duplex not in ("fd", "hd"):
        raise ConfigError(f"duplex must be 'fd' or 'hd', got {duplex!r}")

    f_a, f_b = mmse_receivers(ch)
    fsum = f_a + f_b
    f_tilde_ar = complex(fsum.conj() @ ch.h_ar)
    f_tilde_br = complex(fsum.conj() @ ch.h_br)
    p_tilde_a = ch.p_a * abs(f_tilde_ar) ** 2
    p_tilde_b = ch.p_b * abs(f_tilde_br) ** 2
    sigma_tilde2_r = ch.sigma2_r * float(np.linalg.norm(fsum) ** 2)
    zeta = p_tilde_a + p_tilde_b + sigma_tilde2_r

    kappa_a = 0.0 if duplex == "hd" else ch.kappa_a
    kappa_b = 0.0 if duplex == "hd" else ch.kappa_b
    sigma_tilde2_a = ch.sigma2_a + kappa_a * ch.p_a * abs(ch.h_aa) ** 2
    sigma_tilde2_b = ch.sigma2_b + kappa_b * ch.p_b * abs(ch.h_bb) ** 2

    theta1 = ch.p_a * abs(ch.h_ae) ** 2 + ch.p_b * abs(ch.h_be) ** 2
    # cross term carries the symbol powers so the scalar Eve rate matches the
    # determinant form log|I + H_E P H_E^H Psi^{-1}| exactly
    theta2 = (p_tilde_a + p_tilde_b) * theta1 - abs(
        ch.p_a * np.conj(f_tilde_ar) * ch.h_ae + ch.p_b * np.conj(f_tilde_br) * ch.h_be
    ) ** 2

    if duplex == "hd":
        V0, r = np.eye(ch.n_tx, dtype=complex), 0
    else:
        V0, r = nullspace_basis(ch.H_rr)

    va = V0.conj().T @ ch.h_ra
    vb = V0.conj().T @ ch.h_rb
    ve = V0.conj().T @ ch.h_re

    return DerivedConstants(
        f_a=f_a, f_b=f_b, V0=V0, r=r, zeta=zeta, theta1=theta1, theta2=theta2,
        p_tilde_a=p_tilde_a, p_tilde_b=p_tilde_b,
        sigma_tilde2_r=sigma_tilde2_r,
        sigma_tilde2_a=sigma_tilde2_a, sigma_tilde2_b=sigma_tilde2_b,
        f_tilde_ar=f_tilde_ar, f_tilde_br=f_tilde_br,
        h_ra=ch.h_ra, h_rb=ch.h_rb, h_re=ch.h_re,
        sigma2_e=ch.sigma2_e, p_a=ch.p_a, p_b=ch.p_b, duplex=duplex,
        va=va, vb=vb, ve=ve,
        vmat=np.stack([va, vb, ve]),
        ra_mat=np.outer(va, va.conj()),
        rb_mat=np.outer(vb, vb.conj()),
        re_mat=np.outer(ve, ve.conj()),
    )


def to_physical(W: np.ndarray, Q: np.ndarray, dc: DerivedConstants) -> RelaySolution:
    """Map a reduced-domain pair (W, Q) to the physical beamformer and AN covariance.

    W0 = zeta^(-1/2) V0 W and Q0 = V0 Q V0^H, so the reduced trace budget
    Tr(W W^H) + Tr(Q) equals the physical relay power exactly.
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    W0 = dc.V0 @ W / np.sqrt(dc.zeta)
    Q0 = dc.V0 @ Q @ dc.V0.conj().T
    return RelaySolution(W0=W0, Q0=(Q0 + Q0.conj().T) / 2.0)

"""Symbol-level Monte Carlo simulator of the two-way relay link.

Simulates the full transmit/relay/receive chain per Alamouti block: MMSE
soft estimates at the relay, AF Alamouti forwarding behind the beamformer
with superimposed artificial noise, residual self-interference at the
nodes, and the eavesdropper's stacked two-sample reception (the combined
current-block sample plus the first element of the previous arrival).
Used as an empirical oracle for the analytic SINRs, Eve's
interference-plus-noise covariance and the power expressions.

Content block n is transmitted by the relay one block after reception, so
edge blocks of the stream are discarded and every emitted sample has its
cross-block interference terms populated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, DerivedConstants, RelaySolution
from .rates import eve_noise_cov


@dataclass(frozen=True)
class FrameConfig:
    """Monte Carlo run length and seeding."""

    num_blocks: int
    seed: int = 0
    include_direct_links: bool = True

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")


@dataclass(frozen=True)
class SimulatedStreams:
    """Post-processing sample streams of one simulated run.

    ``y_*`` are the per-block receiver samples, ``ref_*`` the symbols they
    should resolve, and ``coef_*`` the analytic desired-signal coefficient.
    """

    y_alice: np.ndarray
    ref_alice: np.ndarray
    coef_alice: complex
    y_bob: np.ndarray
    ref_bob: np.ndarray
    coef_bob: complex
    y_eve: np.ndarray
    ref_eve: np.ndarray
    relay_power_samples: np.ndarray
    harvest_samples: np.ndarray
    p_a: float
    p_b: float

    @property
    def num_blocks(self) -> int:
        return self.y_eve.shape[0]


def alamouti_encode(s: np.ndarray) -> np.ndarray:
    """2x2 orthogonal space-time block [[s1, s2*], [s2, -s1*]]."""
    s1, s2 = s
    return np.array([[s1, np.conj(s2)], [s2, -np.conj(s1)]], dtype=complex)


def _cn(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_frames(
    sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants, fc: FrameConfig
) -> SimulatedStreams:
    """Run ``fc.num_blocks`` Alamouti blocks through the full signal chain."""
    nb_total = fc.num_blocks + 2
    T = 2 * (nb_total + 1)
    rng = np.random.default_rng(fc.seed)

    s_a = _cn(rng, T, ch.p_a)
    s_b = _cn(rng, T, ch.p_b)
    n_r = _cn(rng, (T, ch.m_rx), ch.sigma2_r)
    n_e = _cn(rng, T, ch.sigma2_e)
    n_a = _cn(rng, T, ch.sigma2_a)
    n_b = _cn(rng, T, ch.sigma2_b)

    # artificial noise z(t) with covariance Q0, drawn through a PSD factor
    lam, U = np.linalg.eigh((sol.Q0 + sol.Q0.conj().T) / 2.0)
    keep = lam > 1e-14 * max(float(lam[-1]), 1.0)
    B = U[:, keep] * np.sqrt(lam[keep])
    z = _cn(rng, (T, int(keep.sum())), 1.0) @ B.T if keep.any() else np.zeros((T, ch.n_tx), complex)

    fsum = dc.f_a + dc.f_b
    u = dc.f_tilde_ar * s_a + dc.f_tilde_br * s_b + n_r @ fsum.conj()

    direct = 1.0 if fc.include_direct_links else 0.0
    d = direct * (ch.h_ae * s_a + ch.h_be * s_b)

    n = np.arange(1, nb_total - 1)  # emitted content blocks
    t1, t2 = 2 * n, 2 * n + 1  # content times of block n
    a1_t, a2_t = 2 * n + 2, 2 * n + 3  # arrival times of block n

    hz_e = z @ ch.h_re.conj()
    hz_a = z @ ch.h_ra.conj()
    hz_b = z @ ch.h_rb.conj()

    def combined_legit(h_row, hz, node_si, node_noise, cancel_coef, cancel_sym, kappa):
        """Alamouti-combined pair at a legitimate node for every emitted block."""
        g1, g2 = h_row
        u_c = u - cancel_coef * cancel_sym  # exact AF-induced SI cancellation
        i1 = hz[t1] + np.sqrt(kappa) * node_si[a1_t] + node_noise[a1_t]
        i2 = hz[t2] + np.sqrt(kappa) * node_si[a2_t] + node_noise[a2_t]
        y1 = g1 * u_c[t1] + g2 * u_c[t2] + i1
        y2 = g1 * np.conj(u_c[t2]) - g2 * np.conj(u_c[t1]) + i2
        norm = np.sqrt(abs(g1) ** 2 + abs(g2) ** 2)
        if norm == 0.0:
            return np.stack([y1, y2], axis=1)
        c1 = (np.conj(g1) * y1 - g2 * np.conj(y2)) / norm
        c2 = (np.conj(g2) * y1 + g1 * np.conj(y2)) / norm
        return np.stack([c1, c2], axis=1)

    a_row = ch.h_ra.conj() @ sol.W0
    b_row = ch.h_rb.conj() @ sol.W0
    y_alice = combined_legit(a_row, hz_a, ch.h_aa * s_a, n_a, dc.f_tilde_ar, s_a, ch.kappa_a)
    y_bob = combined_legit(b_row, hz_b, ch.h_bb * s_b, n_b, dc.f_tilde_br, s_b, ch.kappa_b)

    # Eve: Alamouti-combined current arrival plus first element of the previous one
    w1, w2 = ch.h_re.conj() @ sol.W0
    wn = np.sqrt(abs(w1) ** 2 + abs(w2) ** 2)
    if wn > 0:
        ye1 = wn * u[t1] + (
            w1 * (hz_e[t1] + n_e[a1_t] + d[a1_t])
            - np.conj(w2) * np.conj(hz_e[t2] + n_e[a2_t] + d[a2_t])
        ) / wn
    else:
        ye1 = np.zeros_like(u[t1])
    ye2 = d[t1] + hz_e[t1 - 2] + n_e[t1] + w1 * u[t1 - 2] + np.conj(w2) * u[t2 - 2]
    y_eve = np.stack([ye1, ye2], axis=1)

    # per-block relay transmit power and per-slot RF power at Eve
    x1 = (sol.W0 @ np.stack([u[t1], u[t2]])).T + z[t1]
    x2 = (sol.W0 @ np.stack([np.conj(u[t2]), -np.conj(u[t1])])).T + z[t2]
    relay_power_samples = 0.5 * (
        np.sum(np.abs(x1) ** 2, axis=1) + np.sum(np.abs(x2) ** 2, axis=1)
    )
    rf1 = x1 @ ch.h_re.conj() + d[a1_t]
    rf2 = x2 @ ch.h_re.conj() + d[a2_t]
    harvest_samples = np.concatenate([np.abs(rf1) ** 2, np.abs(rf2) ** 2])

    norm_a = float(np.linalg.norm(a_row))
    norm_b = float(np.linalg.norm(b_row))
    return SimulatedStreams(
        y_alice=y_alice,
        ref_alice=np.stack([s_b[t1], s_b[t2]], axis=1),
        coef_alice=complex(norm_a * dc.f_tilde_br),
        y_bob=y_bob,
        ref_bob=np.stack([s_a[t1], s_a[t2]], axis=1),
        coef_bob=complex(norm_b * dc.f_tilde_ar),
        y_eve=y_eve,
        ref_eve=np.stack([s_a[t1], s_b[t1]], axis=1),
        relay_power_samples=relay_power_samples,
        harvest_samples=harvest_samples,
        p_a=ch.p_a,
        p_b=ch.p_b,
    )


def batch_mean_se(samples: np.ndarray, num_batches: int = 200) -> tuple[float, float]:
    """Mean and standard error of a (possibly autocorrelated) real sample stream.

    The standard error comes from batch means, which stays honest for the
    short-lag correlation the cross-block interference terms introduce.
    """
    samples = np.real(np.asarray(samples))
    num_batches = min(num_batches, samples.size)
    usable = (samples.size // num_batches) * num_batches
    batches = samples[:usable].reshape(num_batches, -1).mean(axis=1)
    se = float(np.std(batches, ddof=1) / np.sqrt(num_batches)) if num_batches > 1 else np.inf
    return float(samples.mean()), se


def eve_residuals(
    streams: SimulatedStreams, sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants
) -> np.ndarray:
    """Interference-plus-noise residual of Eve's stacked pair (analytic H_E removed)."""
    em = eve_noise_cov(sol, ch, dc)
    return streams.y_eve - streams.ref_eve @ em.H_E.T


def empirical_eve_stats(
    streams: SimulatedStreams, sol: RelaySolution, ch: ChannelSet, dc: DerivedConstants
) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance of Eve's residual and the cross-correlation channel estimate."""
    if streams.num_blocks < 1000:
        warnings.warn(
            f"only {streams.num_blocks} blocks; covariance estimates will be noisy",
            stacklevel=2,
        )
    r = eve_residuals(streams, sol, ch, dc)
    psi_hat = (r.conj().T @ r) / streams.num_blocks
    powers = np.array([streams.p_a, streams.p_b])
    he_hat = (streams.y_eve.conj().T @ streams.ref_eve).conj() / streams.num_blocks / powers
    return psi_hat, he_hat


def empirical_sinr(streams: SimulatedStreams, node: str, slot: int | None = None) -> tuple[float, float]:
    """Empirical post-combining SINR at node 'A' or 'B' with its standard error."""
    if node == "A":
        y, ref, coef = streams.y_alice, streams.ref_alice, streams.coef_alice
    elif node == "B":
        y, ref, coef = streams.y_bob, streams.ref_bob, streams.coef_bob
    else:
        raise ValueError(f"node must be 'A' or 'B', got {node!r}")
    if slot is not None:
        y, ref = y[:, slot], ref[:, slot]
    sig = np.abs(coef) ** 2 * np.abs(ref.ravel()) ** 2
    noise = np.abs(y.ravel() - coef * ref.ravel()) ** 2
    s_mean, s_se = batch_mean_se(sig)
    v_mean, v_se = batch_mean_se(noise)
    sinr = s_mean / v_mean
    se = sinr * np.sqrt((s_se / s_mean) ** 2 + (v_se / v_mean) ** 2)
    return float(sinr), float(se)


def empirical_relay_power(streams: SimulatedStreams) -> tuple[float, float]:
    """Mean relay transmit power per channel use, with standard error."""
    return batch_mean_se(streams.relay_power_samples)


def empirical_harvested_power(streams: SimulatedStreams, tau: float) -> tuple[float, float]:
    """Mean harvested power at Eve for transfer efficiency tau, with standard error."""
    mean, se = batch_mean_se(streams.harvest_samples)
    return tau * mean, tau * se

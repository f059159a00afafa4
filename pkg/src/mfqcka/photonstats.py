"""Photon-number-resolved statistics of the coincidence process.

This module is the infinite-decoy oracle: it decomposes the expected
signal coincidences into contributions by total emitted photon number,
which yields the exact phase error rate that the finite decoy-state
bounds are tested against.

The per-port yield treats the relay input splitter plus fiber plus
detector as a single per-photon survival probability ``eta_t``, then
interferes the surviving photons on the port splitter and applies
threshold detectors with dark counts.  Cross-port correlations (one
user's photons reaching both neighbouring ports) are dropped, following
the first-order treatment that is tight in high-loss regimes; results
below roughly 10 km of fiber are approximation-limited.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .matching import _count_matrix, sifted_coincidences
from .model import ChannelParams, EstimationError, SecurityParams, SourceConfig
from .channel import total_efficiency

__all__ = [
    "threshold_click_prob",
    "pair_yield",
    "signal_coincidences_nphoton",
    "phase_error_exact",
]


def threshold_click_prob(f: int, g: int, p_d: float) -> float:
    """Probability that exactly one detector clicks after interfering f and g photons.

    Photon bunching on the balanced splitter sends all f+g photons out of
    one side with probability (f+g)! / (2^(f+g) f! g!) per side; dark
    counts fill in the vacuum case.
    """
    if f < 0 or g < 0:
        raise ValueError("photon numbers must be nonnegative")
    n = f + g
    if n == 0:
        return 2.0 * p_d * (1.0 - p_d)
    return 2.0 * (1.0 - p_d) * math.comb(n, f) / float(2**n)


def pair_yield(l: int, r: int, eta_t: float, p_d: float) -> float:
    """Successful-click probability when the two users emit l and r photons.

    Binomial survival through the lossy arms followed by the interference
    click probability of the survivors.
    """
    if l < 0 or r < 0:
        raise ValueError("photon numbers must be nonnegative")
    total = 0.0
    for f in range(l + 1):
        wf = math.comb(l, f) * eta_t**f * (1.0 - eta_t) ** (l - f)
        for g in range(r + 1):
            wg = math.comb(r, g) * eta_t**g * (1.0 - eta_t) ** (r - g)
            total += wf * wg * threshold_click_prob(f, g, p_d)
    return total


@lru_cache(maxsize=32)
def _port_weight_sequence(eta_t: float, p_d: float, n_max: int) -> tuple[float, ...]:
    """w[m] = sum_l Y(l, m-l) / (l! (m-l)!), the per-port photon-number weight."""
    seq = []
    for m in range(n_max + 1):
        acc = 0.0
        for l in range(m + 1):
            acc += pair_yield(l, m - l, eta_t, p_d) / (
                float(math.factorial(l)) * float(math.factorial(m - l))
            )
        seq.append(acc)
    return tuple(seq)


@lru_cache(maxsize=32)
def _composition_sums(
    config: SourceConfig, channel: ChannelParams, data_size: float, n_max: int
) -> tuple[float, ...]:
    """(N-1)-fold convolution of the per-port factor (4 N_bins / M^2) w[m]."""
    eta_t = total_efficiency(channel)
    scale = 4.0 * data_size / config.phase_slices**2
    g = scale * np.asarray(_port_weight_sequence(eta_t, channel.dark_count_rate, n_max))
    conv = g.copy()
    for _ in range(config.num_ports - 1):
        conv = np.convolve(conv, g)
    return tuple(conv[: n_max + 1])


def signal_coincidences_nphoton(
    n: int, config: SourceConfig, channel: ChannelParams, sec: SecurityParams, n_max: int = 20
) -> float:
    """Expected signal coincidences fed by exactly n emitted photons in total.

    Sums over all ways of distributing the n photons across the N-1
    matched port pairs, each pair weighted by its Poissonian emission
    probability and first-order click yield, then rescales by the same
    matcher ratio as the sifted-count formula.
    """
    if n < 0:
        raise ValueError("photon number must be nonnegative")
    n_max = max(n_max, n)
    counts = _count_matrix(config, channel, sec.data_size)
    totals = [math.fsum(row) for row in counts]
    if any(t <= 0.0 for t in totals):
        return 0.0
    n_min = min(totals)
    mu = config.signal_intensity
    p_mu = config.send_probabilities[0]
    ports = config.num_ports
    prefactor = (
        config.phase_slices
        * n_min
        * math.exp(-2.0 * ports * mu)
        * mu**n
        * p_mu ** (2 * ports)
        / (2.0 * math.prod(totals))
    )
    comp = _composition_sums(config, channel, sec.data_size, n_max)
    return prefactor * comp[n]


def phase_error_exact(
    config: SourceConfig, channel: ChannelParams, sec: SecurityParams, n_max: int = 20
) -> float:
    """Exact phase error rate from the photon-number decomposition.

    Complements the partial sum of the "good parity" contributions (even
    total photon number for odd N, odd for even N), so truncating the sum
    at n_max can only increase the returned value and the upper-bound
    property survives truncation.
    """
    if n_max < config.num_users:
        raise ValueError("n_max must be at least the number of users")
    s_mu = sifted_coincidences(config.signal_intensity, config, channel, sec)
    if s_mu <= 0.0:
        raise EstimationError("no sifted signal coincidences; phase error undefined")
    good_parity = 1 if config.num_users % 2 == 0 else 0
    acc = 0.0
    for n in range(good_parity, n_max + 1, 2):
        acc += signal_coincidences_nphoton(n, config, channel, sec, n_max=n_max)
    phi = 1.0 - acc / s_mu
    return min(max(phi, 0.0), 1.0)

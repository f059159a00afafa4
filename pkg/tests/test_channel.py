"""Detection-layer formulas: trivial limits, quadrature and sampling oracles."""

import math

import numpy as np
import pytest

from mfqcka.channel import (
    adjacent_bit_error,
    arm_transmittance,
    gain_fixed_phase,
    gain_phase_averaged,
    marginal_error,
    port_gain,
    total_efficiency,
)
from mfqcka.model import DegenerateChannelError
from conftest import make_channel

ETA_T_50KM = 0.06101838790975287  # 0.385 * 10^-0.8


def sample_click_counts(k_a, k_b, dtheta, eta_t, p_d, trials, seed):
    """Independent detection sampler: Poissonian no-click per detector."""
    rng = np.random.default_rng(seed)
    mean = 0.5 * eta_t * (k_a + k_b)
    beat = eta_t * math.sqrt(k_a * k_b) * math.cos(dtheta)
    p_left = 1.0 - (1.0 - p_d) * math.exp(-(mean + beat))
    p_right = 1.0 - (1.0 - p_d) * math.exp(-(mean - beat))
    singles = wrong = 0
    for start in range(0, trials, 10**7):
        n = min(10**7, trials - start)
        left = rng.random(n) < p_left
        right = rng.random(n) < p_right
        single = left ^ right
        singles += int(single.sum())
        wrong += int((single & right).sum())
    return singles, wrong


class TestEfficiency:
    def test_zero_distance(self):
        assert total_efficiency(make_channel(0.0)) == pytest.approx(0.385, rel=1e-14)

    def test_100km(self):
        assert total_efficiency(make_channel(100.0)) == pytest.approx(
            0.009670762761311881, rel=1e-12
        )

    def test_250km(self):
        # 0.385 * 10^-4; direct evaluation of the formula
        assert total_efficiency(make_channel(250.0)) == pytest.approx(3.85e-5, rel=1e-12)

    def test_arm_transmittance(self):
        assert arm_transmittance(make_channel(100.0)) == pytest.approx(10**-1.6, rel=1e-14)


class TestGains:
    def test_no_light_no_darks(self):
        assert gain_fixed_phase(0.1, 0.1, 0.3, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("dtheta", [0.0, 1.0, math.pi])
    def test_vacuum_pair_reduces_to_dark_counts(self, dtheta):
        p_d = 3.03e-9
        expected = 2 * p_d * (1 - p_d)
        assert gain_fixed_phase(0.0, 0.0, dtheta, 0.2, p_d) == pytest.approx(expected, rel=1e-9)
        assert gain_phase_averaged(0.0, 0.0, 0.2, p_d) == pytest.approx(expected, rel=1e-9)

    def test_phase_average_zero_efficiency(self):
        p_d = 1e-3
        assert gain_phase_averaged(0.3, 0.2, 0.0, p_d) == pytest.approx(
            2 * p_d * (1 - p_d), rel=1e-12
        )

    def test_one_sided_vacuum_branch(self):
        eta_t, p_d, k = 0.05, 1e-6, 0.3
        y = (1 - p_d) * math.exp(-0.5 * eta_t * k)
        assert gain_phase_averaged(k, 0.0, eta_t, p_d) == pytest.approx(
            2 * y - 2 * y * y, rel=1e-12
        )

    @pytest.mark.parametrize("k_a,k_b", [(0.1, 0.1), (0.4, 0.05), (1.0, 0.3)])
    def test_quadrature_oracle(self, k_a, k_b):
        # midpoint rule over 10^4 uniform phase samples; periodic smooth
        # integrand, so the rule converges far below the 1e-10 tolerance
        eta_t, p_d = ETA_T_50KM, 3.03e-9
        grid = (np.arange(10**4) + 0.5) * (2 * math.pi / 10**4)
        mean = math.fsum(gain_fixed_phase(k_a, k_b, t, eta_t, p_d) for t in grid) / 10**4
        assert gain_phase_averaged(k_a, k_b, eta_t, p_d) == pytest.approx(mean, abs=1e-10)

    def test_monte_carlo_oracle_matched_signal(self):
        eta_t, p_d = 9.672e-3, 3.03e-9  # 100 km arm
        trials = 10**8
        q = gain_fixed_phase(0.1, 0.1, 0.0, eta_t, p_d)
        singles, _ = sample_click_counts(0.1, 0.1, 0.0, eta_t, p_d, trials, seed=101)
        z = (singles - trials * q) / math.sqrt(trials * q * (1 - q))
        assert abs(z) <= 5.0

    def test_bracket_nonnegative_and_bounded(self):
        for k_a in (0.0, 0.05, 0.5, 1.0):
            for k_b in (0.0, 0.1, 1.0):
                for distance in (0.0, 100.0, 400.0):
                    eta_t = total_efficiency(make_channel(distance))
                    for dtheta in (0.0, 0.7, math.pi):
                        q = gain_fixed_phase(k_a, k_b, dtheta, eta_t, 3.03e-9)
                        assert 0.0 <= q <= 1.0
                    assert 0.0 <= gain_phase_averaged(k_a, k_b, eta_t, 3.03e-9) <= 1.0

    def test_monotone_in_distance_without_darks(self):
        values = [
            gain_phase_averaged(0.2, 0.1, total_efficiency(make_channel(d)), 0.0)
            for d in np.linspace(0.0, 400.0, 21)
        ]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_port_gain_bundle(self):
        pg = port_gain(0.1, 0.2, 0.05, 1e-6)
        assert pg.phase_averaged == pytest.approx(gain_phase_averaged(0.1, 0.2, 0.05, 1e-6))
        assert pg.fixed_phase(0.4) == pytest.approx(gain_fixed_phase(0.1, 0.2, 0.4, 0.05, 1e-6))
        assert 0.0 < pg.vacuum_yield <= 1.0


class TestAdjacentError:
    def test_noiseless_is_exact_zero(self):
        assert adjacent_bit_error(0.1, 0.05, 0.0) == 0.0

    def test_dark_count_dominated_limit(self):
        assert adjacent_bit_error(0.1, 1e-12, 1e-4) == pytest.approx(0.5, rel=1e-6)

    def test_range_on_physical_grid(self):
        for mu in (1e-3, 0.05, 0.3, 1.0):
            for d in (0.0, 50.0, 200.0, 400.0):
                e = adjacent_bit_error(mu, total_efficiency(make_channel(d)), 3.03e-9)
                assert 0.0 <= e <= 0.5

    def test_degenerate_denominator_raises(self):
        with pytest.raises(DegenerateChannelError):
            adjacent_bit_error(1e-300, 0.0, 0.0)

    def test_requires_positive_intensity(self):
        with pytest.raises(ValueError):
            adjacent_bit_error(0.0, 0.1, 1e-9)

    def test_monte_carlo_oracle_wrong_detector(self):
        # inflate the dark counts so the wrong-detector count is testable
        eta_t, p_d, mu = total_efficiency(make_channel(200.0)), 1e-3, 0.1
        e_expected = adjacent_bit_error(mu, eta_t, p_d)
        q = gain_fixed_phase(mu, mu, 0.0, eta_t, p_d)
        trials = 10**8
        singles, wrong = sample_click_counts(mu, mu, 0.0, eta_t, p_d, trials, seed=7)
        z_q = (singles - trials * q) / math.sqrt(trials * q * (1 - q))
        z_e = (wrong - singles * e_expected) / math.sqrt(
            singles * e_expected * (1 - e_expected)
        )
        assert abs(z_q) <= 5.0
        assert abs(z_e) <= 5.0

    def test_paper_point_wrong_detector_within_5_sigma(self):
        # realistic dark counts at 200 km: the expected wrong-click count
        # over 10^8 trials is below one, so the 5-sigma Poisson envelope
        # amounts to seeing at most a handful of events
        eta_t, p_d, mu = total_efficiency(make_channel(200.0)), 3.03e-9, 0.1
        e_expected = adjacent_bit_error(mu, eta_t, p_d)
        q = gain_fixed_phase(mu, mu, 0.0, eta_t, p_d)
        trials = 10**8
        singles, wrong = sample_click_counts(mu, mu, 0.0, eta_t, p_d, trials, seed=11)
        expected_wrong = trials * q * e_expected
        assert wrong <= expected_wrong + 5.0 * math.sqrt(expected_wrong) + 5.0


class TestMarginalError:
    def test_identity_at_two_users(self):
        assert marginal_error(0.037, 2) == pytest.approx(0.037, rel=1e-14)

    def test_zero_error_propagates(self):
        for j in range(2, 9):
            assert marginal_error(0.0, j) == 0.0

    def test_three_user_value(self):
        assert marginal_error(0.01, 3) == pytest.approx(0.0198, rel=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            marginal_error(0.1, 1)
        with pytest.raises(ValueError):
            marginal_error(1.5, 3)

    def test_exhaustive_parity_enumeration(self):
        # odd-parity mass of j-1 independent Bernoulli flips, enumerated
        for j in range(2, 9):
            links = j - 1
            for e in (0.0, 0.01, 0.2, 0.5):
                mass = 0.0
                for pattern in range(2**links):
                    flips = bin(pattern).count("1")
                    if flips % 2 == 1:
                        mass += e**flips * (1 - e) ** (links - flips)
                assert marginal_error(e, j) == pytest.approx(mass, abs=1e-14)

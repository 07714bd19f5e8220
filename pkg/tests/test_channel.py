import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from dipass.channel import (
    ChannelSet,
    assemble_channels,
    beam_field,
    beam_params,
    boresight_phase,
    composite_gain_sq,
    coupling_lengths,
    divergence_angles,
    half_power_footprint,
    link_coefficient,
    optimal_gain_entry,
    pa_to_user,
    waveguide_selector,
    wg_to_pa,
)
from dipass.core import DegenerateGeometryError, LocalCoords, Orientation, PAState, SystemConfig
from dipass.single_pa import optimal_orientation, solve_placement

CFG = SystemConfig()
LAM = CFG.wavelength
N_REF, V = 1.5, 1.1
A_CS, B_CS = 10.0, 6.0
W1, W2 = V * A_CS * LAM, V * B_CS * LAM


def closed_form_gain(y_pa, dist, cfg, L=1):
    """|H|^2 at boresight written out from the model's factors."""
    n, v = cfg.refractive_index, cfg.beam_correction
    a, b = cfg.cross_section
    return (
        math.exp(-cfg.wg_atten_nat * y_pa)
        * cfg.los_coeff ** (2 * dist)
        * n**2 * v**2 * a * b * cfg.wavelength**2
        / (2 * dist**2)
        / L
    )


class TestCoupling:
    def test_single_and_pair(self):
        assert coupling_lengths(1, 100.0).lengths == pytest.approx((math.pi / 200,))
        assert coupling_lengths(2, 100.0).lengths == pytest.approx((math.pi / 400, math.pi / 200))

    def test_four_second(self):
        plan = coupling_lengths(4, 100.0)
        assert plan.lengths[1] * 100.0 == pytest.approx(0.6154797087, abs=1e-10)

    @pytest.mark.parametrize("L", range(1, 17))
    def test_telescoping_product(self, L):
        kappa = 37.0
        plan = coupling_lengths(L, kappa)
        remaining = 1.0
        for ell, tau in enumerate(plan.lengths):
            share = remaining * math.sin(kappa * tau)
            assert share == pytest.approx(math.sqrt(1 / L), abs=1e-12)
            remaining *= math.sqrt(1 - math.sin(kappa * tau) ** 2)
        assert np.allclose(plan.efficiencies(), math.sqrt(1 / L), atol=1e-12)
        assert all(a < b for a, b in zip(plan.lengths, plan.lengths[1:]))

    def test_equal_power_without_loss(self):
        # every PA radiates the same share and together they empty the waveguide
        for L in (1, 3, 8):
            plan = coupling_lengths(L, 50.0)
            shares = plan.efficiencies() ** 2
            assert np.allclose(shares, 1 / L) and shares.sum() == pytest.approx(1.0)


class TestWaveguide:
    def test_entrance(self):
        assert wg_to_pa(0.0, 1, 0.3, 1e-3) == pytest.approx(1 + 0j)
        h = wg_to_pa(0.0, 4, 0.3, 1e-3)
        assert abs(h) == pytest.approx(0.5) and np.angle(h) == pytest.approx(0.0)

    def test_attenuation(self):
        h = wg_to_pa(2.0, 1, 0.299336, CFG.lambda_g)
        assert abs(h) == pytest.approx(0.7413103, abs=1e-7)
        # 2 m at 1.3 dB/m loses 2.6 dB of power
        assert -20 * math.log10(abs(wg_to_pa(2.0, 1, CFG.wg_atten_nat, CFG.lambda_g))) == pytest.approx(2.6)

    def test_phase(self):
        lg = 2e-3
        h = wg_to_pa(0.25 * lg, 1, 0.0, lg)
        assert np.angle(h) == pytest.approx(-math.pi / 2)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            wg_to_pa(-1e-3, 1, 0.1, 1e-3)

    def test_vectorized(self):
        ys = np.array([0.0, 1.0, 2.0])
        assert np.allclose(np.abs(wg_to_pa(ys, 2, 0.2, 1e-3)), np.sqrt(0.5) * np.exp(-0.1 * ys))


class TestBeam:
    def test_params(self):
        p = beam_params(3.0, CFG)
        assert p.w1 == pytest.approx(W1) and p.w2 == pytest.approx(W2)
        assert p.W1 == pytest.approx(LAM * 3 / (math.pi * N_REF * W1))
        assert p.B**2 == pytest.approx(2 / (math.pi * W1 * W2))
        assert p.R1 == p.R2 == 3.0
        assert p.gouy2 == pytest.approx(math.atan(LAM * 3 / (math.pi * N_REF * W2)))

    def test_boresight_power(self):
        value = abs(beam_field(LocalCoords(0, 3.0, 0), CFG)) ** 2
        assert value == pytest.approx(2 * math.pi * N_REF**2 * W1 * W2 / (LAM**2 * 9), rel=1e-12)

    @pytest.mark.parametrize("y", [0.5, 1.0, 3.0, 10.0])
    def test_unit_power(self, y):
        p = beam_params(y, CFG)
        x = np.linspace(-8 * p.W1, 8 * p.W1, 801)
        z = np.linspace(-8 * p.W2, 8 * p.W2, 801)
        X, Z = np.meshgrid(x, z, indexing="ij")
        power = np.abs(beam_field((X, np.full_like(X, y), Z), CFG)) ** 2
        assert trapezoid(trapezoid(power, z, axis=1), x) == pytest.approx(1.0, abs=1e-6)

    def test_gaussian_rolloff(self):
        on = abs(beam_field(LocalCoords(0, 3.0, 0), CFG)) ** 2
        off = abs(beam_field(LocalCoords(0.5, 3.0, 0), CFG)) ** 2
        expected = math.exp(-2 * (math.pi * N_REF * V) ** 2 * (A_CS * 0.5) ** 2 / 9)
        assert off / on == pytest.approx(expected, rel=1e-10)

    @given(st.floats(-5, 0), st.floats(-1, 1), st.floats(-1, 1))
    def test_no_back_radiation(self, y, x, z):
        assert beam_field(LocalCoords(x, y, z), CFG) == 0

    def test_divergence(self):
        tx, tz = (math.degrees(t) for t in divergence_angles(CFG))
        assert tx == pytest.approx(1.1051849, abs=1e-6)
        assert tz == pytest.approx(1.8415689, abs=1e-6)

    def test_footprint(self):
        fp = half_power_footprint(3.0, CFG)
        # half power where 2 x^2 / W^2 = ln 2
        p = beam_params(3.0, CFG)
        assert fp.width_x == pytest.approx(2 * p.W1 * math.sqrt(math.log(2) / 2))
        assert abs(beam_field(LocalCoords(fp.width_x / 2, 3.0, 0), CFG)) ** 2 == pytest.approx(
            0.5 * abs(beam_field(LocalCoords(0, 3.0, 0), CFG)) ** 2
        )
        assert fp.diameter == pytest.approx(0.0879710, abs=1e-6)


class TestPaToUser:
    def test_lossless_boresight(self):
        cfg = CFG.replace(los_coeff=1.0)
        pa, user = (0, 0, 3.0), (0, 0, 0.0)
        h = pa_to_user(user, pa, Orientation(math.pi, math.pi / 2), cfg)
        assert abs(h) == pytest.approx(N_REF * math.sqrt(W1 * W2 / 2) / 3, rel=1e-12)
        h_half = pa_to_user(user, pa, Orientation(math.pi, math.pi / 2), CFG)
        assert abs(h_half) == pytest.approx(abs(h) * 0.125, rel=1e-12)

    def test_behind(self):
        # boresight pointing along +y, user at -y
        h = pa_to_user((0, -2, 2.9), (0, 0, 3.0), Orientation(math.pi / 2, math.pi / 2), CFG)
        assert h == 0

    def test_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            pa_to_user((0, 0, 3), (0, 0, 3), Orientation(math.pi, 0), CFG)


class TestComposite:
    def test_boresight_closed_form(self):
        user, pa = (5.0, 6.0, 0.0), (5.0, 6.0, 3.0)
        for L in (1, 3):
            g = composite_gain_sq(user, pa, optimal_orientation(user, pa), CFG, L)
            assert g == pytest.approx(closed_form_gain(6.0, 3.0, CFG, L), rel=1e-10)

    def test_closed_form_oblique(self):
        user, pa = (3.0, 7.0, 0.0), (5.0, 4.5, 3.0)
        d = math.dist(user, pa)
        g = composite_gain_sq(user, pa, optimal_orientation(user, pa), CFG)
        assert g == pytest.approx(closed_form_gain(4.5, d, CFG), rel=1e-10)

    def test_no_attenuation(self):
        cfg = CFG.replace(wg_atten_db=0.0, los_coeff=1.0)
        g = composite_gain_sq((5, 0, 0), (5, 0, 3), Orientation(math.pi, math.pi / 2), cfg)
        assert g == pytest.approx(N_REF**2 * V**2 * A_CS * B_CS * LAM**2 / 18, rel=1e-12)

    def test_link_coefficient_factors(self):
        user, pa = (3.0, 7.0, 0.0), (5.0, 4.5, 3.0)
        o = optimal_orientation(user, pa)
        h = link_coefficient(user, pa, o, CFG)
        assert h == pytest.approx(wg_to_pa(4.5, 1, CFG.wg_atten_nat, CFG.lambda_g) * pa_to_user(user, pa, o, CFG))
        assert abs(h) ** 2 == pytest.approx(composite_gain_sq(user, pa, o, CFG), rel=1e-12)


class TestGainEntry:
    def test_consistency_with_composite(self):
        cfg = CFG.replace(num_pas_per_wg=2)
        user = (2.0, 8.0, 0.0)
        sol = solve_placement(user, 5.0, cfg)
        entry = optimal_gain_entry(0, 1, cfg, sol)
        g = composite_gain_sq(user, sol.pa, sol.orientation, cfg)
        assert entry.magnitude**2 == pytest.approx(g, rel=1e-10)
        h = link_coefficient(user, sol.pa, sol.orientation, cfg)
        assert abs(np.angle(entry.value / h)) < 1e-6
        assert -math.pi < entry.phase <= math.pi
        assert (entry.waveguide, entry.order) == (0, 1)

    def test_lossless_waveguide(self):
        cfg = CFG.replace(wg_atten_db=0.0, num_pas_per_wg=4)
        user = (1.0, 7.0, 0.0)
        sol = solve_placement(user, 5.0, cfg)
        assert sol.y_star == pytest.approx(7.0)
        A = 16 + 9
        expected = math.sqrt(1 / 4) * 0.5 ** math.sqrt(A) * LAM * N_REF * V * math.sqrt(2 * A_CS * B_CS) / (2 * math.sqrt(A))
        assert optimal_gain_entry(0, 0, cfg, sol).magnitude == pytest.approx(expected, rel=1e-12)

    def test_far_user(self):
        cfg = CFG.replace(region=(1000.0, 10.0, 3.0))
        sol = solve_placement((0.0, 5.0, 0.0), 500.0, cfg)
        assert optimal_gain_entry(0, 0, cfg, sol).magnitude < 1e-100

    def test_phase_matches_boresight_phase(self):
        d = 3.7
        assert boresight_phase(0.0, d, CFG) == pytest.approx(
            -2 * math.pi / LAM * N_REF * d + 0.5 * sum(math.atan(LAM * d / (math.pi * N_REF * w)) for w in (W1, W2))
        )


class TestAssemble:
    def test_selector(self):
        lam = waveguide_selector(2, 2)
        assert lam.tolist() == [[1, 0], [1, 0], [0, 1], [0, 1]]

    def test_single_link(self):
        cfg = SystemConfig()
        user = (4.0, 6.0, 0.0)
        pa = (5.0, 5.0, 3.0)
        o = optimal_orientation(user, pa)
        cs = assemble_channels([PAState(0, 0, 5.0, o)], [user], cfg)
        assert cs.H.shape == (1, 1)
        assert abs(cs.H[0, 0]) ** 2 == pytest.approx(composite_gain_sq(user, pa, o, cfg), rel=1e-12)

    def test_triple_product(self):
        cfg = SystemConfig(num_waveguides=2, num_pas_per_wg=2, num_users=2)
        users = [(2.0, 6.0, 0.0), (8.0, 3.0, 0.0)]
        ys = {(0, 0): 2.0, (0, 1): 5.5, (1, 0): 1.0, (1, 1): 2.5}
        states = []
        for (n, ell), y in ys.items():
            pos = ((2 * n + 1) / 4 * 10, y, 3.0)
            states.append(PAState(n, ell, y, optimal_orientation(users[(n + ell) % 2], pos)))
        cs = assemble_channels(states[::-1], users, cfg)
        for m, u in enumerate(users):
            for n in range(2):
                total = 0j
                for st_ in states:
                    if st_.waveguide == n:
                        pos = st_.position(cfg)
                        total += wg_to_pa(st_.y, 2, cfg.wg_atten_nat, cfg.lambda_g) * pa_to_user(u, pos, st_.orientation, cfg)
                assert cs.H[m, n] == pytest.approx(total, rel=1e-12)
        assert np.allclose(cs.H, cs.h_pu @ cs.h_wp @ cs.lambda_mask)
        assert np.all(np.abs(np.diag(cs.h_wp)) <= math.sqrt(0.5) + 1e-15)

    def test_json_roundtrip(self):
        cfg = SystemConfig(num_waveguides=2, num_users=1)
        user = (3.0, 3.0, 0.0)
        states = [PAState(n, 0, 2.0, optimal_orientation(user, (2.5 + 5 * n, 2.0, 3.0))) for n in range(2)]
        cs = assemble_channels(states, [user], cfg)
        back = ChannelSet.from_dict(json.loads(cs.to_json()))
        assert np.allclose(back.H, cs.H) and np.allclose(back.h_wp, cs.h_wp)
        assert np.array_equal(back.lambda_mask, cs.lambda_mask)

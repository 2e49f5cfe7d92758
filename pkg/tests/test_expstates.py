import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_unit, seeds
from twopath.expstates import (
    BombKind,
    Frame,
    IdlerBasis,
    PointerModel,
    Slits,
    bomb_exploded,
    bomb_ready,
    change_frame,
    detector_layout,
    environment_layout,
    idler_states,
    overlap_estimate,
    particle_layout,
    particle_state,
    pointer_states,
    screen_ket,
)
from twopath.qcore import Ket, SubsystemLayout, inner, tensor

S = 1 / math.sqrt(2)


class TestParticle:
    def test_left_in_screen_frame(self):
        np.testing.assert_allclose(particle_state(Slits.ONLY_LEFT, Frame.SCREEN_AB).amps, [S, -S], atol=1e-15)

    def test_right_in_screen_frame(self):
        np.testing.assert_allclose(particle_state(Slits.ONLY_RIGHT, Frame.SCREEN_AB).amps, [S, S], atol=1e-15)

    def test_both_slits_land_on_a(self):
        psi = particle_state(Slits.BOTH, Frame.SCREEN_AB)
        np.testing.assert_allclose(psi.amps, [1, 0], atol=1e-15)

    def test_path_frame_default(self):
        psi = particle_state(Slits.BOTH)
        assert psi.layout.subsystems[0].labels == ("L", "R")
        np.testing.assert_allclose(psi.amps, [S, S], atol=1e-15)

    def test_frame_labels(self):
        assert Frame.PATH_LR.labels == ("L", "R")
        assert Frame.SCREEN_AB.labels == ("A", "B")

    def test_change_frame_roundtrip_on_screen_point(self):
        back = change_frame(change_frame(screen_ket("B"), Frame.PATH_LR), Frame.SCREEN_AB)
        assert back.allclose(screen_ket("B"))

    @given(seeds)
    def test_change_frame_is_unitary_on_composites(self, seed):
        rng = np.random.default_rng(seed)
        lay = SubsystemLayout.single("idler", ("I1", "I2", "I3")).concat(particle_layout(Frame.PATH_LR))
        psi = Ket(lay, random_unit(rng, lay.dim))
        out = change_frame(psi, Frame.SCREEN_AB)
        assert out.layout.names == ("idler", "particle")
        assert abs(out.norm() - 1) <= 1e-12
        assert change_frame(out, Frame.PATH_LR).allclose(psi, atol=1e-12)

    @given(seeds)
    def test_change_frame_commutes_with_density(self, seed):
        rng = np.random.default_rng(seed)
        lay = particle_layout(Frame.PATH_LR).concat(environment_layout(3))
        psi = Ket(lay, random_unit(rng, lay.dim))
        via_ket = change_frame(psi, Frame.SCREEN_AB).density().matrix
        via_rho = change_frame(psi.density(), Frame.SCREEN_AB).matrix
        assert np.max(np.abs(via_ket - via_rho)) <= 1e-12


class TestPointer:
    @pytest.mark.parametrize("eps", [0.0, 0.2, 0.5, 0.99])
    def test_overlap_and_norms(self, eps):
        d0, dl, dr = pointer_states(PointerModel(eps))
        assert inner(dl, dr) == pytest.approx(eps, abs=1e-15)
        assert inner(d0, dl) == 0 and inner(d0, dr) == 0
        for d in (d0, dl, dr):
            assert d.norm() == pytest.approx(1, abs=1e-15)

    def test_layout(self):
        assert detector_layout().dim == 3

    @pytest.mark.parametrize("eps", [-0.1, 1.0, 1.5, math.nan])
    def test_rejects_bad_overlap(self, eps):
        with pytest.raises(ValueError):
            PointerModel(eps)


class TestOverlapEstimate:
    def test_avogadro(self):
        est = overlap_estimate(0.99, 6.022e23)
        assert -2.7e21 <= est.log10_overlap <= -2.6e21
        assert est.log10_decades == pytest.approx(21.42, abs=0.01)

    def test_small_case(self):
        assert overlap_estimate(0.5, 10).log10_overlap == pytest.approx(-3.0103, abs=1e-4)

    def test_matches_direct_product(self):
        assert overlap_estimate(0.9, 7).log10_overlap == pytest.approx(math.log10(0.9**7), abs=1e-12)

    def test_exact_overlap(self):
        est = overlap_estimate(1.0, 100)
        assert est.log10_overlap == 0 and est.log10_decades == -math.inf

    @pytest.mark.parametrize("lam,n", [(0.0, 10), (1.1, 10), (0.5, 0.5), (0.5, math.inf), (math.nan, 3)])
    def test_rejects(self, lam, n):
        with pytest.raises(ValueError):
            overlap_estimate(lam, n)


class TestBombAndIdler:
    def test_bomb_states(self):
        assert inner(bomb_ready(), bomb_exploded()) == 0
        assert BombKind("dud") is BombKind.DUD

    @pytest.mark.parametrize("basis", list(IdlerBasis))
    def test_idler_bases_orthonormal(self, basis):
        vecs = [k for _, k in idler_states(basis)]
        gram = np.array([[inner(a, b) for b in vecs] for a in vecs])
        np.testing.assert_allclose(gram, np.eye(2), atol=1e-15)

    def test_plus_minus_convention(self):
        states = dict(idler_states(IdlerBasis.PLUS_MINUS))
        np.testing.assert_allclose(states["I+"].amps, [S, S], atol=1e-15)
        np.testing.assert_allclose(states["I-"].amps, [-S, S], atol=1e-15)

    @given(st.integers(1, 6))
    def test_environment_layout(self, d):
        lay = environment_layout(d)
        assert lay.dim == d and lay.names == ("environment",)

    def test_idler_product_with_screen(self):
        lay = SubsystemLayout.single("idler", ("I_L", "I_R"))
        assert tensor(screen_ket("A"), Ket.basis(lay, "I_R")).layout.dim == 4

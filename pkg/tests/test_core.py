import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polybeam.core import (ArrayGeometry, DesignGrid, Direction, DomainError, PolynomialOrderSpec,
                           map_D_to_phi, map_phi_to_D, head_geometry, pld_steering_matrix)


def kron_oracle(D, N, P):
    return np.kron(np.eye(N), np.array([[D**p for p in range(P + 1)]]))


class TestMapping:
    @pytest.mark.parametrize("phi, D", [(90, 0.0), (0, -1.0), (135, 0.5), (180, 1.0)])
    def test_values(self, phi, D):
        assert map_phi_to_D(phi) == pytest.approx(D, abs=1e-15)

    @pytest.mark.parametrize("phi", [-0.1, 180.5, 270])
    def test_out_of_range(self, phi):
        with pytest.raises(DomainError):
            map_phi_to_D(phi)

    @given(st.floats(0, 180))
    def test_round_trip(self, phi):
        assert abs(map_D_to_phi(map_phi_to_D(phi)) - phi) <= 1e-12


class TestPldSteeringMatrix:
    def test_d0(self):
        np.testing.assert_array_equal(pld_steering_matrix(0.0, 2, 1), [[1, 0, 0, 0], [0, 0, 1, 0]])

    def test_minus_one(self):
        np.testing.assert_array_equal(pld_steering_matrix(-1.0, 1, 2), [[1, -1, 1]])

    def test_half_matches_kron(self):
        np.testing.assert_allclose(pld_steering_matrix(0.5, 2, 2), kron_oracle(0.5, 2, 2), atol=0)

    @settings(max_examples=50)
    @given(st.floats(-1, 1), st.integers(1, 6), st.integers(0, 5))
    def test_kron_property(self, D, N, P):
        np.testing.assert_allclose(pld_steering_matrix(D, N, P), kron_oracle(D, N, P), rtol=1e-14, atol=1e-300)

    def test_polynomial_per_channel(self, rng):
        N, P = 4, 3
        w = rng.standard_normal(N * (P + 1)) + 1j * rng.standard_normal(N * (P + 1))
        D = 0.37
        direct = [sum(D**p * w[n * (P + 1) + p] for p in range(P + 1)) for n in range(N)]
        np.testing.assert_allclose(pld_steering_matrix(D, N, P) @ w, direct, rtol=1e-13)

    def test_warns_outside(self):
        with pytest.warns(UserWarning):
            pld_steering_matrix(1.5, 2, 1)


class TestTypes:
    def test_direction_normalizes(self):
        assert Direction(370.0, 90).phi == pytest.approx(10.0)
        with pytest.raises(DomainError):
            Direction(0.0, 190.0)

    def test_unit_vector(self):
        np.testing.assert_allclose(Direction(0, 90).unit_vector(), [1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(Direction(90, 90).unit_vector(), [0, 1, 0], atol=1e-15)
        np.testing.assert_allclose(Direction(0, 0).unit_vector(), [0, 0, 1], atol=1e-15)

    def test_geometry_validation(self):
        with pytest.raises(DomainError):
            ArrayGeometry(np.zeros((1, 3)))
        with pytest.raises(DomainError):
            ArrayGeometry(np.array([[0, 0, 0], [np.nan, 0, 0]]))
        with pytest.raises(DomainError):
            ArrayGeometry(np.array([[0.06, 0, 0], [0, 0.05, 0]]), head_radius=0.06)

    def test_head_geometry(self):
        g = head_geometry()
        assert g.num_mics == 5
        np.testing.assert_allclose(np.linalg.norm(g.mics, axis=1), 0.06, atol=1e-12)
        phis = [d.phi for d in g.mic_directions()]
        np.testing.assert_allclose(phis, [40, 65, 90, 115, 140], atol=1e-9)

    def test_geometry_dict_round_trip(self):
        g = head_geometry()
        h = ArrayGeometry.from_dict(g.to_dict())
        np.testing.assert_array_equal(g.mics, h.mics)
        assert h.head_radius == g.head_radius

    def test_grid(self):
        grid = DesignGrid.uniform()
        assert grid.Q == 129 and grid.M == 37
        assert grid.index_of(Direction(135, 56.4)) == 27
        with pytest.raises(LookupError):
            grid.index_of(Direction(137, 56.4))
        with pytest.raises(DomainError):
            DesignGrid(np.array([100.0, 9000.0]), 16000.0, grid.look_grid)
        with pytest.raises(DomainError):
            DesignGrid(np.array([200.0, 100.0]), 16000.0, grid.look_grid)

    def test_order_spec(self):
        plds = tuple(Direction(p, 56.4) for p in (0, 90, 180))
        assert PolynomialOrderSpec(2, plds).I == 3
        with pytest.warns(UserWarning):
            PolynomialOrderSpec(4, plds)
        with pytest.raises(DomainError):
            PolynomialOrderSpec(1, (Direction(0, 56.4), Direction(0, 56.4)))
        with pytest.raises(DomainError):
            PolynomialOrderSpec(1, (Direction(0, 56.4), Direction(200, 56.4)))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            PolynomialOrderSpec(2, plds)

"""Tests for the biorthogonal eigenstructure and projection machinery.

The root system and its conjugate family admit closed-form inner products,
so most oracles here are hand-computed integrals frozen into the tests.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsource.spectral import (
    DatumKind,
    Family,
    Field2D,
    InsufficientData,
    MissingCoefficient,
    ModeIndex,
    SpectralCoefficients,
    biorthogonality_matrix,
    decay_report,
    eigen,
    enumerate_modes,
    eval_W,
    eval_Z,
    field_mean,
    mode_mean,
    project,
    synthesize,
)


class TestModeIndex:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModeIndex(Family.Zero, 1, 0)  # Zero family fixes n = 0
        with pytest.raises(ValueError):
            ModeIndex(Family.Odd, 0, 2)  # paired families need n >= 1
        with pytest.raises(ValueError):
            ModeIndex(Family.Even, 1, -1)

    def test_enumeration_covers_box(self):
        modes = enumerate_modes(2, 3)
        zero = [i for i in modes if i.family is Family.Zero]
        assert len(zero) == 4  # k = 0..3
        assert len(modes) == 4 + 2 * 2 * 4  # plus Odd/Even for n = 1, 2

    def test_eigenvalues_closed_form(self):
        assert eigen(ModeIndex(Family.Zero, 0, 0)).sigma_nk == 0.0
        assert eigen(ModeIndex(Family.Zero, 0, 2)).sigma_nk == pytest.approx(
            (2 * math.pi) ** 4
        )
        got = eigen(ModeIndex(Family.Odd, 1, 1)).sigma_nk
        assert got == pytest.approx((2 * math.pi) ** 4 + math.pi**4)
        # Odd and Even share the eigenvalue at equal index
        assert got == eigen(ModeIndex(Family.Even, 1, 1)).sigma_nk


class TestBasisFunctions:
    def test_root_functions_at_sample_points(self):
        x = np.array([0.0, 0.25, 0.5])
        y = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(eval_Z(ModeIndex(Family.Zero, 0, 0), x, y), 1.0)
        np.testing.assert_allclose(
            eval_Z(ModeIndex(Family.Odd, 1, 0), x, y), np.cos(2 * math.pi * x)
        )
        np.testing.assert_allclose(
            eval_Z(ModeIndex(Family.Even, 1, 0), x, y),
            x * np.sin(2 * math.pi * x),
            atol=1e-15,
        )

    def test_nonlocal_value_coupling(self):
        # every root function takes equal values at x = 0 and x = 1
        y = np.linspace(0.0, 1.0, 7)
        for index in enumerate_modes(3, 3):
            left = eval_Z(index, np.zeros_like(y), y)
            right = eval_Z(index, np.ones_like(y), y)
            np.testing.assert_allclose(left, right, atol=1e-12)

    def test_conjugate_functions_at_sample_points(self):
        x = np.array([0.0, 0.25, 1.0])
        y = np.zeros_like(x)
        np.testing.assert_allclose(
            eval_W(ModeIndex(Family.Zero, 0, 0), x, y), 2.0 * (1.0 - x)
        )
        np.testing.assert_allclose(
            eval_W(ModeIndex(Family.Even, 2, 0), x, y),
            4.0 * np.sin(4 * math.pi * x),
            atol=1e-14,
        )

    def test_mode_means_closed_form(self):
        assert mode_mean(ModeIndex(Family.Zero, 0, 0)) == 1.0
        assert mode_mean(ModeIndex(Family.Zero, 0, 3)) == 0.0
        assert mode_mean(ModeIndex(Family.Odd, 2, 0)) == 0.0
        # integral of x sin(2 n pi x) over [0,1] is -1/(2 n pi)
        for n in (1, 2, 5):
            assert mode_mean(ModeIndex(Family.Even, n, 0)) == pytest.approx(
                -1.0 / (2 * n * math.pi)
            )
        assert mode_mean(ModeIndex(Family.Even, 1, 2)) == 0.0


class TestBiorthogonality:
    def test_gram_identity_small_box(self):
        G = biorthogonality_matrix(3, 3)
        np.testing.assert_allclose(G, np.eye(G.shape[0]), atol=1e-11)

    def test_projection_recovers_synthesis_coefficients(self):
        # build a field from known coefficients, project it back
        targets = {
            ModeIndex(Family.Zero, 0, 1): 0.7,
            ModeIndex(Family.Odd, 1, 2): -1.3,
            ModeIndex(Family.Even, 2, 0): 0.4,
        }

        def fn(x, y):
            out = np.zeros(np.broadcast_arrays(np.asarray(x), np.asarray(y))[0].shape)
            for idx, c in targets.items():
                out = out + c * eval_Z(idx, x, y)
            return out

        field = Field2D.analytic(fn, "combo")
        for idx, c in targets.items():
            assert project(field, idx) == pytest.approx(c, abs=1e-11)
        # a mode absent from the combination projects to zero
        assert project(field, ModeIndex(Family.Odd, 2, 1)) == pytest.approx(
            0.0, abs=1e-11
        )


class TestField2D:
    def test_constant_and_mean(self):
        f = Field2D.constant(2.5)
        assert field_mean(f) == pytest.approx(2.5, rel=1e-12)

    def test_tabulated_matches_analytic(self):
        xs = np.linspace(0.0, 1.0, 201)
        ys = np.linspace(0.0, 1.0, 201)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        tab = Field2D.tabulated(xs, ys, np.cos(2 * math.pi * X) * np.cos(math.pi * Y))
        x = np.array([0.31, 0.62])
        y = np.array([0.17, 0.83])
        want = np.cos(2 * math.pi * x) * np.cos(math.pi * y)
        np.testing.assert_allclose(tab(x, y), want, atol=5e-6)

    def test_csv_round_trip(self, tmp_path):
        xs = np.linspace(0.0, 1.0, 33)
        ys = np.linspace(0.0, 1.0, 33)
        path = tmp_path / "field.csv"
        with open(path, "w") as fh:
            fh.write("x,y,value\n")
            for x in xs:
                for y in ys:
                    fh.write(f"{x},{y},{x * y}\n")
        f = Field2D.from_csv(path)
        assert f(0.5, 0.5) == pytest.approx(0.25, abs=1e-12)


class TestSpectralCoefficients:
    def test_missing_coefficient_raises(self):
        coeffs = SpectralCoefficients(2, 2)
        with pytest.raises(MissingCoefficient):
            coeffs[ModeIndex(Family.Zero, 0, 1)]

    def test_out_of_box_rejected(self):
        coeffs = SpectralCoefficients(2, 2)
        with pytest.raises(ValueError):
            coeffs[ModeIndex(Family.Odd, 3, 0)] = 1.0

    def test_project_field_round_trips_through_synthesize(self):
        field = Field2D.analytic(
            lambda x, y: np.cos(2 * math.pi * np.asarray(x))
            * np.ones_like(np.asarray(y)),
            "single mode",
        )
        coeffs = SpectralCoefficients.project_field(field, 3, 3)
        x = np.linspace(0.0, 1.0, 9)
        y = np.full_like(x, 0.4)
        pts = np.stack([x, y], axis=-1)
        got = synthesize(coeffs, pts).values
        np.testing.assert_allclose(got, np.cos(2 * math.pi * x), atol=1e-10)

    @given(c=st.floats(-10.0, 10.0))
    @settings(max_examples=10, deadline=None)
    def test_projection_is_linear_in_field(self, c):
        base = Field2D.analytic(
            lambda x, y: np.asarray(x) * np.sin(2 * math.pi * np.asarray(x))
            * np.ones_like(np.asarray(y)),
            "assoc",
        )
        scaled = Field2D.analytic(lambda x, y: c * base(x, y), "scaled")
        idx = ModeIndex(Family.Even, 1, 0)
        assert project(scaled, idx) == pytest.approx(
            c * project(base, idx), rel=1e-10, abs=1e-12
        )


class TestDecayReport:
    def test_smooth_initial_field_flagged_ok(self):
        field = Field2D.analytic(
            lambda x, y: (1.0 + np.cos(2 * math.pi * np.asarray(x)))
            * np.exp(np.cos(math.pi * np.asarray(y))),
            "smooth",
        )
        coeffs = SpectralCoefficients.project_field(field, 10, 10)
        rep = decay_report(coeffs, DatumKind.InitialPhi)
        assert rep.k_exponent <= -2.0
        assert rep.k_ok

    def test_insufficient_shells_raise(self):
        field = Field2D.constant(1.0)
        coeffs = SpectralCoefficients.project_field(field, 2, 2)
        with pytest.raises(InsufficientData):
            decay_report(coeffs, DatumKind.InitialPhi)

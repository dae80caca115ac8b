import numpy as np
import pytest

from snnadv.errors import ConfigError
from snnadv.numerics import max_rel_err
from snnadv.surrogate import (KINDS, PIECEWISE_EXP, PIECEWISE_LINEAR, RECTANGULAR,
                              SurrogateSpec, antiderivative, canonical_kind, heaviside,
                              kink_distance, surrogate_grad)

GRID = np.linspace(-4.0, 6.0, 10_001)  # dense potential grid around theta=1

NON_PLATEAU = ("sigmoid", "erfc", "arctan", "fast_sigmoid", "piecewise_exp")


def spec_for(kind):
    return SurrogateSpec(kind=kind)


class TestHeaviside:
    def test_boundary_inclusive(self):
        out = heaviside(np.array([0.5, 1.0, 1.5]), 1.0)
        assert np.array_equal(out, [0.0, 1.0, 1.0])

    def test_at_threshold_everywhere(self):
        assert np.array_equal(heaviside(np.full(4, 2.5), 2.5), np.ones(4))

    def test_binary_and_monotone_over_grid(self):
        out = heaviside(GRID, 1.0)
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert np.all(np.diff(out) >= 0.0)


class TestKernelValues:
    def test_sigmoid_peak(self):
        assert surrogate_grad(spec_for("sigmoid"), np.array([1.0]))[0] == pytest.approx(0.25)

    def test_arctan_peak(self):
        assert surrogate_grad(spec_for("arctan"), np.array([1.0]))[0] == pytest.approx(1.0)

    def test_erfc_peak(self):
        spec = SurrogateSpec(kind="erfc", sigma=1.0)
        assert surrogate_grad(spec, np.array([1.0]))[0] == pytest.approx(1 / np.sqrt(2 * np.pi))

    def test_rectangular_window_and_unit_integral(self):
        spec = SurrogateSpec(kind="rectangular", alpha=1.0)
        vals = surrogate_grad(spec, GRID)
        inside = np.abs(GRID - 1.0) < 0.5
        assert np.all(vals[inside] == 1.0)
        assert np.all(vals[~inside] == 0.0)
        # quadrature oracle: the window integrates to one over the potential axis
        assert np.trapezoid(vals, GRID) == pytest.approx(1.0, abs=2e-3)

    def test_aliases(self):
        assert canonical_kind("PWL") == PIECEWISE_LINEAR
        assert canonical_kind("actfun") == RECTANGULAR
        assert canonical_kind("pwe") == PIECEWISE_EXP
        with pytest.raises(ConfigError):
            canonical_kind("bogus")

    def test_hyperparameters_positive(self):
        with pytest.raises(ConfigError):
            SurrogateSpec(kind="erfc", sigma=0.0)
        with pytest.raises(ConfigError):
            SurrogateSpec(threshold=-1.0)


class TestKernelProperties:
    @pytest.mark.parametrize("kind", KINDS)
    def test_non_negative(self, kind):
        assert np.all(surrogate_grad(spec_for(kind), GRID) >= 0.0)

    @pytest.mark.parametrize("kind", KINDS)
    def test_peak_at_threshold(self, kind):
        vals = surrogate_grad(spec_for(kind), GRID)
        peak = vals.max()
        at_theta = surrogate_grad(spec_for(kind), np.array([1.0]))[0]
        # theta belongs to the argmax set (plateau kernels have a set, not a point)
        assert at_theta == pytest.approx(peak, rel=1e-9)

    @pytest.mark.parametrize("kind", KINDS)
    def test_symmetry_about_threshold(self, kind):
        d = np.linspace(0.0, 4.0, 2001)
        hi = surrogate_grad(spec_for(kind), 1.0 + d)
        lo = surrogate_grad(spec_for(kind), 1.0 - d)
        assert np.allclose(hi, lo, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", NON_PLATEAU)
    def test_monotone_decay_away_from_threshold(self, kind):
        d = np.linspace(0.0, 4.0, 2001)
        vals = surrogate_grad(spec_for(kind), 1.0 + d)
        assert np.all(np.diff(vals) <= 1e-15)

    @pytest.mark.parametrize("kind", KINDS)
    def test_finite_everywhere(self, kind):
        assert np.all(np.isfinite(surrogate_grad(spec_for(kind), GRID)))


class TestAntiderivative:
    @pytest.mark.parametrize("kind", KINDS)
    def test_derivative_recovers_kernel(self, kind):
        spec = spec_for(kind)
        h = 1e-6
        v = np.linspace(-2.0, 4.0, 501)
        # keep clear of kinks where the two-sided difference straddles a corner
        v = v[kink_distance(spec, v) > 10 * h]
        fd = (antiderivative(spec, v + h) - antiderivative(spec, v - h)) / (2 * h)
        assert max_rel_err(fd, surrogate_grad(spec, v)) <= 1e-4

    def test_literal_pwe_has_no_antiderivative(self):
        spec = SurrogateSpec(kind="piecewise_exp", pwe_literal=True)
        with pytest.raises(ConfigError):
            antiderivative(spec, np.array([1.0]))


class TestVariantForms:
    def test_pwe_default_decays_literal_grows(self):
        dec = SurrogateSpec(kind="piecewise_exp")
        lit = SurrogateSpec(kind="piecewise_exp", pwe_literal=True)
        far, near = np.array([3.0]), np.array([1.0])
        assert surrogate_grad(dec, far)[0] < surrogate_grad(dec, near)[0]
        assert surrogate_grad(lit, far)[0] > surrogate_grad(lit, near)[0]

    def test_fast_sigmoid_forms(self):
        printed = SurrogateSpec(kind="fast_sigmoid")
        conv = SurrogateSpec(kind="fast_sigmoid", fs_conventional=True)
        v = np.array([2.0])
        assert surrogate_grad(printed, v)[0] == pytest.approx(1.0 / (1.0 + 4.0))
        assert surrogate_grad(conv, v)[0] == pytest.approx(1.0 / 4.0)

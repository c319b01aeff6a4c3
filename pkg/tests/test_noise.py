import numpy as np
import pytest

from levy_nls.grid import GridSpec
from levy_nls.noise import (
    AmplitudeMeasure,
    AtomicMeasure,
    CompoundPoissonPath,
    InfiniteActivityError,
    MarkFunction,
    NoiseCoefficients,
    TruncationSpec,
    check_hypotheses,
    compensator_fields,
    filter_path,
    gaussian_bump,
    levy_constants,
    make_coefficients,
    restrict,
    sample_path,
    stable_like_density,
    total_rate,
    uniform_density,
)

GRID = GridSpec(1, 128, 8.0)


def constant_mark(c, grid=GRID):
    return MarkFunction.from_values(grid, np.full(grid.shape, c))


class TestMarkFunction:
    def test_cached_norms(self):
        z = gaussian_bump(GRID, amplitude=0.5, center=1.0, width=1.0)
        assert z.sup_norm == pytest.approx(0.5, abs=1e-12)
        x = GRID.axis_coords()
        vals = 0.5 * np.exp(-((x - 1.0) ** 2) / 2)
        assert z.weighted_sup == pytest.approx(np.max(np.abs(x) * vals), abs=1e-12)
        # |d/dx| of the bump peaks at 0.5 e^{-1/2}
        assert z.grad_sup_norm == pytest.approx(0.5 * np.exp(-0.5), abs=1e-6)

    def test_scaling(self):
        z = gaussian_bump(GRID, amplitude=1.0)
        w = z.scaled(0.25)
        assert w.sup_norm == pytest.approx(0.25 * z.sup_norm)
        assert w.w1_inf_norm == pytest.approx(0.25 * z.w1_inf_norm)

    def test_rejects_nan(self):
        vals = np.zeros(GRID.shape)
        vals[0] = np.inf
        with pytest.raises(ValueError):
            MarkFunction.from_values(GRID, vals)


class TestRestrict:
    def test_atomic_filter(self):
        big = gaussian_bump(GRID, amplitude=0.5)
        small = gaussian_bump(GRID, amplitude=0.05)
        model = AtomicMeasure(((1.0, big), (2.0, small)))
        cut = restrict(model, TruncationSpec(0.1))
        assert len(cut.atoms) == 1
        assert cut.atoms[0][0] == 1.0 and cut.atoms[0][1] is big

    def test_identity_at_zero(self):
        model = AtomicMeasure(((1.0, gaussian_bump(GRID)),))
        assert restrict(model, TruncationSpec(0.0)) is model

    def test_amplitude_uniform_cut(self):
        base = gaussian_bump(GRID, amplitude=1.0)
        model = AmplitudeMeasure(base, uniform_density, 0.0, 1.0)
        cut = restrict(model, TruncationSpec(0.25))
        assert cut.a_min == pytest.approx(0.25)
        assert total_rate(cut) == pytest.approx(0.75, abs=1e-10)

    def test_rate_monotone_in_eps(self):
        model = AtomicMeasure(
            tuple((1.0, gaussian_bump(GRID, amplitude=a)) for a in (0.1, 0.3, 0.6))
        )
        rates = [
            total_rate(restrict(model, TruncationSpec(e)))
            for e in (0.0, 0.05, 0.2, 0.4, 1.0)
        ]
        assert rates[0] == total_rate(model)
        assert all(a >= b for a, b in zip(rates, rates[1:]))


class TestTotalRate:
    def test_atomic(self):
        model = AtomicMeasure(
            ((1.0, gaussian_bump(GRID)), (2.0, gaussian_bump(GRID, amplitude=0.5)))
        )
        assert total_rate(model) == 3.0
        assert total_rate(AtomicMeasure(())) == 0.0

    def test_uniform_density(self):
        model = AmplitudeMeasure(gaussian_bump(GRID), uniform_density, 0.0, 1.0)
        assert total_rate(model) == pytest.approx(1.0, abs=1e-10)

    def test_infinite_activity_demands_restriction(self):
        model = AmplitudeMeasure(gaussian_bump(GRID), stable_like_density, 0.0, 1.0)
        with pytest.raises(InfiniteActivityError):
            total_rate(model)
        # after a positive cut the rate is finite and analytic: 2 (a^{-1/2} - 1)
        cut = restrict(model, TruncationSpec(0.25))
        assert total_rate(cut) == pytest.approx(2.0 * (0.25**-0.5 - 1.0), rel=1e-8)


class TestSamplePath:
    def test_zero_rate_gives_empty_path(self):
        path = sample_path(AtomicMeasure(()), 1.0, 123)
        assert path.count == 0

    def test_deterministic(self):
        model = AtomicMeasure(
            ((1.0, gaussian_bump(GRID)), (2.0, gaussian_bump(GRID, amplitude=0.5)))
        )
        a = sample_path(model, 2.0, 77)
        b = sample_path(model, 2.0, 77)
        assert np.array_equal(a.times, b.times)
        assert all(x is y for x, y in zip(a.marks, b.marks))

    def test_poisson_count_statistics(self):
        # rho T = 4; over 10000 seeds the sample mean is within 3 sqrt(4/10000)
        model = AtomicMeasure(((2.0, gaussian_bump(GRID)),))
        counts = [sample_path(model, 2.0, s).count for s in range(10000)]
        assert abs(np.mean(counts) - 4.0) <= 3.0 * np.sqrt(4.0 / 10000)

    def test_amplitude_marks_within_interval(self):
        base = gaussian_bump(GRID, amplitude=1.0)
        model = AmplitudeMeasure(base, uniform_density, 0.2, 0.9)
        path = sample_path(model, 50.0, 5)
        assert path.count > 0
        for m in path.marks:
            assert 0.2 - 1e-9 <= m.sup_norm <= 0.9 + 1e-9

    def test_invalid_path_construction(self):
        z = gaussian_bump(GRID)
        with pytest.raises(ValueError):
            CompoundPoissonPath(1.0, np.array([0.5, 0.4]), (z, z), 0)
        with pytest.raises(ValueError):
            CompoundPoissonPath(1.0, np.array([0.5]), (), 0)


def test_coupled_filter_is_subset():
    base = gaussian_bump(GRID, amplitude=1.0)
    model = AmplitudeMeasure(base, stable_like_density, 0.05, 1.0)
    path = sample_path(model, 5.0, 11)
    coarse = filter_path(path, 0.4)
    fine = filter_path(path, 0.1)
    assert set(coarse.times) <= set(fine.times)
    assert coarse.count <= fine.count
    for t in coarse.times:
        i, j = list(fine.times).index(t), list(coarse.times).index(t)
        assert fine.marks[i] is coarse.marks[j]


class TestCompensatorFields:
    def test_single_atom(self):
        z = gaussian_bump(GRID, amplitude=0.5)
        co = make_coefficients("sine-mean")
        z_nu, h_drift = compensator_fields(AtomicMeasure(((2.0, z),)), co, GRID)
        assert np.allclose(z_nu.values, 2.0 * np.sin(z.values))

    def test_zero_coefficients(self):
        z = gaussian_bump(GRID)
        co = make_coefficients("zero")
        z_nu, h_drift = compensator_fields(AtomicMeasure(((1.0, z),)), co, GRID)
        assert np.all(z_nu.values == 0) and np.all(h_drift.values == 0)

    def test_two_atom_linearity(self):
        z1 = gaussian_bump(GRID, amplitude=0.5, center=-1.0)
        z2 = gaussian_bump(GRID, amplitude=0.3, center=2.0)
        co = make_coefficients("linear", c1=1.0, c2=1.0)
        z_nu, _ = compensator_fields(AtomicMeasure(((1.5, z1), (0.5, z2))), co, GRID)
        expected = 1.5 * z1.values + 0.5 * z2.values
        assert np.max(np.abs(z_nu.values - expected)) < 1e-14

    def test_amplitude_quadrature_matches_analytic(self):
        # g linear => z_nu(x) = z_base(x) int a rho(a) da = z_base(x) / 2 (uniform on [0,1])
        base = gaussian_bump(GRID)
        model = AmplitudeMeasure(base, uniform_density, 0.0, 1.0)
        co = make_coefficients("linear", c1=1.0, c2=0.0)
        z_nu, _ = compensator_fields(model, co, GRID)
        assert np.max(np.abs(z_nu.values - 0.5 * base.values)) < 1e-10

    def test_grid_mismatch(self):
        other = GridSpec(1, 64, 8.0)
        model = AtomicMeasure(((1.0, gaussian_bump(GRID)),))
        with pytest.raises(ValueError):
            compensator_fields(model, make_coefficients("zero"), other)


class TestLevyConstants:
    def test_single_atom(self):
        a = 0.3
        z = constant_mark(a)
        c0, c1, c2, c3 = levy_constants(AtomicMeasure(((1.0, z),)))
        assert c0 == pytest.approx(a**2)
        assert c3 == pytest.approx(a**4)

    def test_empty_model(self):
        assert levy_constants(AtomicMeasure(())) == (0.0, 0.0, 0.0, 0.0)

    def test_two_atoms(self):
        m = AtomicMeasure(((1.0, constant_mark(0.5)), (2.0, constant_mark(0.1))))
        c0, _, _, _ = levy_constants(m)
        assert c0 == pytest.approx(0.27, abs=1e-14)

    def test_additivity_under_concatenation(self):
        m1 = AtomicMeasure(((1.0, gaussian_bump(GRID, 0.5)),))
        m2 = AtomicMeasure(((2.0, gaussian_bump(GRID, 0.2, center=1.0)),))
        joined = AtomicMeasure(m1.atoms + m2.atoms)
        for a, b, c in zip(levy_constants(m1), levy_constants(m2), levy_constants(joined)):
            assert a + b == pytest.approx(c, abs=1e-12)


class TestCoefficients:
    def test_g_and_h_vanish_at_zero(self):
        with pytest.raises(ValueError):
            NoiseCoefficients(g=lambda x: np.asarray(x) + 1.0, h=lambda x: np.asarray(x) * 0)

    def test_unknown_family(self):
        with pytest.raises(KeyError):
            make_coefficients("no-such-family")

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    def test_phase_rotation_satisfies_both_hypotheses(self, theta):
        co = make_coefficients("phase-rotation", theta=theta)
        report = check_hypotheses(co)
        assert report.pathwise_mass_ok and report.mean_mass_ok

    def test_sine_mean_classification(self):
        report = check_hypotheses(make_coefficients("sine-mean"))
        assert not report.pathwise_mass_ok
        assert report.mean_mass_ok

    def test_linear_classification(self):
        report = check_hypotheses(make_coefficients("linear", c1=1.0, c2=1.0))
        assert not report.pathwise_mass_ok
        assert not report.mean_mass_ok
        # 2 Im h + |g|^2 = xi^2: worst offender at the edge of the range
        assert report.worst["mean_mass"]["violation"] == pytest.approx(4.0, abs=1e-9)

    def test_zero_coefficients_pass_everything(self):
        report = check_hypotheses(make_coefficients("zero"))
        assert report.growth_ok and report.pathwise_mass_ok and report.mean_mass_ok

    def test_growth_within_declared_constants(self):
        for name in ("phase-rotation", "sine-mean", "linear"):
            assert check_hypotheses(make_coefficients(name)).growth_ok

    def test_finite_difference_derivative_fallback(self):
        co = NoiseCoefficients(
            g=lambda x: np.sin(np.asarray(x)) + 0j,
            h=lambda x: np.asarray(x) + 0j,
        )
        xi = np.linspace(-1, 1, 11)
        assert np.max(np.abs(co.dg(xi) - np.cos(xi))) < 1e-8

import json

import numpy as np
import pytest

from levy_nls.dynamics import SolverConfig, solve_truncated
from levy_nls.grid import GridSpec, gaussian_field
from levy_nls.montecarlo import (
    EnsembleConfig,
    dt_study,
    run_ensemble,
    truncation_study,
)
from levy_nls.noise import AtomicMeasure, TruncationSpec, gaussian_bump, make_coefficients
from levy_nls.observables import mass

GRID = GridSpec(1, 128, 16.0)


def three_atom_model(grid=GRID):
    return AtomicMeasure(
        (
            (0.8, gaussian_bump(grid, amplitude=0.5, center=-3.0, width=1.5)),
            (1.2, gaussian_bump(grid, amplitude=0.8, center=0.0, width=1.0)),
            (0.5, gaussian_bump(grid, amplitude=0.3, center=4.0, width=2.0)),
        )
    )


def make_config(num_paths=2, **kw):
    solver = kw.pop(
        "solver",
        SolverConfig(lam=1.0, alpha=3.0, horizon=0.5, dt=2e-3, record_stride=50),
    )
    defaults = dict(
        num_paths=num_paths,
        root_seed=11,
        solver=solver,
        model=three_atom_model(),
        coeffs=make_coefficients("phase-rotation", theta=1.0),
        initial=gaussian_field(GRID),
    )
    defaults.update(kw)
    return EnsembleConfig(**defaults)


class TestEnsembleConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            make_config(num_paths=0)
        with pytest.raises(ValueError):
            make_config(eps_levels=(0.1, 0.2))
        with pytest.raises(ValueError):
            make_config(dt_levels=(1e-3, 1e-3))

    def test_path_seeds_distinct(self):
        cfg = make_config()
        assert cfg.path_seed(0) != cfg.path_seed(1)


class TestRunEnsemble:
    def test_single_path_matches_direct_solve(self):
        cfg = make_config(num_paths=1)
        summary = run_ensemble(cfg)
        rec = solve_truncated(
            cfg.initial, cfg.model, cfg.coeffs, cfg.solver.truncation,
            cfg.path_seed(0), cfg.solver,
        )
        assert summary.num_paths == 1
        assert np.array_equal(summary.mean_mass, rec.series.mass)
        assert summary.terminal_mass[0] == mass(rec.terminal)
        assert summary.jump_count_mean == rec.path.count

    def test_free_flow_has_zero_variance(self):
        cfg = make_config(
            num_paths=3,
            model=AtomicMeasure(()),
            coeffs=make_coefficients("zero"),
        )
        summary = run_ensemble(cfg)
        assert np.max(summary.var_mass) < 1e-12
        assert summary.jump_count_mean == 0.0

    def test_bit_identical_reproducibility(self):
        cfg = make_config(num_paths=3)
        a, b = run_ensemble(cfg), run_ensemble(cfg)
        assert np.array_equal(a.mean_mass, b.mean_mass)
        assert np.array_equal(a.terminal_mass, b.terminal_mass)
        assert a.to_json() == b.to_json()

    def test_pathwise_mass_conservation_shows_in_mean(self):
        cfg = make_config(num_paths=4)
        summary = run_ensemble(cfg)
        m0 = mass(cfg.initial)
        assert np.max(np.abs(summary.mean_mass - m0)) / m0 < 1e-10
        assert not summary.partial

    def test_json_summary_is_valid(self):
        summary = run_ensemble(make_config(num_paths=2))
        payload = json.loads(summary.to_json())
        assert payload["num_paths"] == 2
        assert len(payload["mean_mass"]) == len(payload["times"])


class TestTruncationStudy:
    def test_needs_three_levels(self):
        with pytest.raises(ValueError):
            truncation_study(make_config(eps_levels=(0.4, 0.1)))

    def test_all_atoms_above_coarsest_gives_zero_diffs(self):
        # every mark survives every level, so the coupled paths agree exactly
        cfg = make_config(num_paths=2, eps_levels=(0.2, 0.1, 0.05))
        report = truncation_study(cfg)
        assert report.kind == "truncation"
        assert max(report.diffs) == 0.0

    def test_levels_that_drop_atoms_give_decreasing_diffs(self):
        cfg = make_config(num_paths=8, eps_levels=(0.6, 0.4, 0.2))
        report = truncation_study(cfg)
        assert len(report.diffs) == 2
        assert report.diffs[0] > 0
        assert report.passed == bool(report.diffs[0] > report.diffs[1])


class TestDtStudy:
    def test_needs_three_levels(self):
        with pytest.raises(ValueError):
            dt_study(make_config(dt_levels=(2e-3, 1e-3)))

    def test_free_flow_is_exact_at_every_dt(self):
        cfg = make_config(
            num_paths=1,
            model=AtomicMeasure(()),
            coeffs=make_coefficients("zero"),
            solver=SolverConfig(
                lam=0.0, alpha=3.0, horizon=0.5, dt=4e-3,
                record_stride=25, allow_any_lambda=True,
            ),
            dt_levels=(4e-3, 2e-3, 1e-3),
        )
        report = dt_study(cfg)
        assert report.passed
        assert max(report.diffs) <= 1e-11
        assert report.orders == []

    def test_second_order_on_driven_paths(self):
        cfg = make_config(
            num_paths=2,
            solver=SolverConfig(lam=1.0, alpha=3.0, horizon=0.25, dt=4e-3, record_stride=25),
            dt_levels=(4e-3, 2e-3, 1e-3),
        )
        report = dt_study(cfg)
        assert len(report.orders) == 1
        assert 1.6 <= report.orders[0] <= 2.4
        assert report.passed

    def test_report_json(self):
        cfg = make_config(
            num_paths=1,
            solver=SolverConfig(lam=1.0, alpha=3.0, horizon=0.25, dt=4e-3, record_stride=25),
            dt_levels=(4e-3, 2e-3, 1e-3),
        )
        payload = json.loads(dt_study(cfg).to_json())
        assert payload["kind"] == "dt"
        assert len(payload["levels"]) == 3


def test_parallel_matches_serial():
    serial = run_ensemble(make_config(num_paths=4, n_jobs=1))
    parallel = run_ensemble(make_config(num_paths=4, n_jobs=2))
    assert np.array_equal(serial.mean_mass, parallel.mean_mass)
    assert np.array_equal(serial.terminal_mass, parallel.terminal_mass)

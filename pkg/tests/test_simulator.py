import math
import os
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from cbdi.mechanisms.jumps import FiniteAtoms, StableTail
from cbdi.mechanisms.mechanism import make_mechanism, power_mechanism
from cbdi.simulator import (
    AT_INFINITY,
    AT_ZERO,
    DROP,
    InitialValues,
    NoiseBundle,
    SimConfig,
    Truncations,
    batch_dual_killed,
    batch_truncated,
    coupled_compare,
    estimate_laplace,
    hitting_statistics,
    laplace_values,
    mean_and_error,
    run_batch,
    simulate_minimal,
    simulate_truncated,
)

ZERO = power_mechanism([])


def deterministic(psi, psi_hat, dt):
    return simulate_minimal(psi, psi_hat, 1.0, SimConfig(dt=dt, horizon=1.0, n_paths=1)).final


class TestDeterministicFlows:
    def test_linear_decay(self):
        assert deterministic(power_mechanism([(1, 1)]), ZERO, 1e-3) == pytest.approx(math.exp(-1.0), rel=1e-3)

    def test_linear_growth(self):
        assert deterministic(power_mechanism([(-1, 1)]), ZERO, 1e-3) == pytest.approx(math.e, rel=1e-3)

    def test_quadratic_competition(self):
        # x' = -x^2 from 1 gives 1 / (1 + t)
        assert deterministic(ZERO, power_mechanism([(1, 2)]), 1e-3) == pytest.approx(0.5, rel=1e-3)

    def test_error_is_first_order(self):
        psi = power_mechanism([(1, 1)])
        coarse = abs(deterministic(psi, ZERO, 2e-3) - math.exp(-1.0))
        fine = abs(deterministic(psi, ZERO, 1e-3) - math.exp(-1.0))
        assert 1.6 < coarse / fine < 2.4


class TestPathStructure:
    def test_no_downward_jumps_without_competition(self):
        psi = make_mechanism(FiniteAtoms((2.0,), (1.0,)))
        batch = run_batch(psi, ZERO, 1.0, SimConfig(dt=1e-2, horizon=2.0, n_paths=100, seed=1))
        assert batch.jump_counts.sum() > 0
        assert np.diff(batch.values, axis=1).min() >= 0.0

    def test_cemeteries_are_absorbing(self):
        psi = power_mechanism([(1, 1.5), (-3, 0)])
        batch = run_batch(psi, ZERO, 1.0, SimConfig(dt=1e-2, horizon=2.0, n_paths=200, seed=3))
        for row in batch.values:
            for mask in (np.isinf(row), row == 0.0):
                if mask.any():
                    assert mask[np.argmax(mask):].all()
        assert np.isinf(batch.values[:, -1]).any() and (batch.values[:, -1] == 0.0).any()

    def test_flags_and_causes(self):
        batch = run_batch(power_mechanism([(1, 1.5), (-3, 0)]), ZERO, 1.0,
                          SimConfig(dt=1e-2, horizon=2.0, n_paths=200, seed=3))
        for i in range(20):
            path = batch.path(i)
            if math.isinf(path.final):
                assert path.flags[-1] == AT_INFINITY and path.cause == "killing"
            elif path.final == 0.0:
                assert path.flags[-1] == AT_ZERO and path.cause == "extinction"

    def test_zero_start_stays_at_zero(self):
        assert estimate_laplace(power_mechanism([(1, 2)]), ZERO, 0.0, 1.0, 0.5, SimConfig(n_paths=50)) == (1.0, 0.0)


class TestLaplaceValues:
    def test_boundary_conventions(self):
        states = np.array([0.0, 1.0, math.inf])
        assert laplace_values(states, 0.0).tolist() == [1.0, 1.0, 0.0]
        assert laplace_values(states, math.inf).tolist() == [1.0, 0.0, 0.0]
        assert laplace_values(states, 2.0).tolist() == pytest.approx([1.0, math.exp(-2.0), 0.0])

    def test_mean_and_error(self):
        mean, error = mean_and_error([0.0, 1.0, 0.0, 1.0])
        assert mean == 0.5 and error == pytest.approx(math.sqrt(1.0 / 3.0 / 4.0))
        assert math.isnan(mean_and_error([])[0])


class TestDeterminism:
    def test_same_seed_same_paths(self):
        cfg = SimConfig(dt=1e-2, n_paths=50, seed=7)
        psi = power_mechanism([(1, 1.5)])
        assert np.array_equal(run_batch(psi, ZERO, 1.0, cfg).values, run_batch(psi, ZERO, 1.0, cfg).values)

    def test_path_noise_does_not_depend_on_batch_size(self):
        psi = power_mechanism([(1, 1.5), (-1, 0.5)])
        cfg = SimConfig(dt=1e-2, n_paths=40, seed=11)
        full = run_batch(psi, ZERO, 1.0, cfg).values
        tail = run_batch(psi, ZERO, 1.0, replace(cfg, n_paths=20), NoiseBundle(11, path_offset=20)).values
        assert np.array_equal(full[20:], tail)

    def test_thread_count_does_not_change_results(self):
        script = (
            "import hashlib\n"
            "from cbdi.simulator import SimConfig, run_batch, configure_threads\n"
            "from cbdi.mechanisms.mechanism import power_mechanism\n"
            "configure_threads()\n"
            "b = run_batch(power_mechanism([(1, 1.5), (-1, 0.5)]), power_mechanism([(1, 2)]), 1.0,"
            " SimConfig(dt=1e-2, n_paths=400, seed=5))\n"
            "print(hashlib.sha256(b.values.tobytes()).hexdigest())\n"
        )
        digests = set()
        for threads in ("1", "3"):
            env = dict(os.environ, CBDI_THREADS=threads)
            env.pop("NUMBA_NUM_THREADS", None)
            out = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True)
            digests.add(out.stdout.strip())
        assert len(digests) == 1


class TestVariants:
    def test_truncation_above_support_is_minimal(self):
        psi = make_mechanism(FiniteAtoms((0.5, 2.0), (1.0, 0.5)), a=0.3, gamma=0.2)
        cfg = SimConfig(dt=1e-2, n_paths=30, seed=2)
        minimal = run_batch(psi, ZERO, 1.0, cfg).values
        truncated = batch_truncated(psi, ZERO, 3.0, 1.0, cfg).values
        assert np.array_equal(minimal, truncated)

    def test_truncated_killing_becomes_a_jump(self):
        psi = power_mechanism([(1, 2), (-5, 0)])
        path = simulate_truncated(psi, ZERO, 4.0, 0.5, SimConfig(dt=1e-2, horizon=3.0, seed=4))
        assert np.all(np.isfinite(path.values))

    def test_truncation_level_below_one_rejected(self):
        with pytest.raises(ValueError):
            simulate_truncated(power_mechanism([(1, 2)]), ZERO, 0.5, 1.0, SimConfig())

    def test_dual_kill_time_is_exponential(self):
        # Y stays at y0, so the kill time is Exp(1) / (lambda_n y0)
        lam, y0 = 2.0, 0.5
        batch = batch_dual_killed(ZERO, ZERO, lam, y0, SimConfig(dt=1e-2, horizon=3.0, n_paths=4000, seed=5))
        killed_by_one = np.isinf(batch.at_time(1.0)).mean()
        expected = 1.0 - math.exp(-lam * y0)
        assert abs(killed_by_one - expected) < 4.0 * math.sqrt(expected * (1 - expected) / 4000) + 0.01
        assert set(batch.causes.tolist()) <= {0, 4}


class TestCouplings:
    def test_identical_inputs_give_identical_paths(self):
        psi = power_mechanism([(1, 1.5), (-1, 0.5)])
        report = coupled_compare(InitialValues(psi, power_mechanism([(1, 2)]), 1.0, 1.0),
                                 SimConfig(dt=1e-2, n_paths=50, seed=9))
        assert report.identical and report.violations == 0

    def test_initial_values_stay_ordered(self):
        psi = power_mechanism([(1, 1.5), (-1, 0.5)])
        report = coupled_compare(InitialValues(psi, power_mechanism([(1, 2)]), 0.5, 1.5),
                                 SimConfig(dt=1e-2, n_paths=100, seed=9))
        assert report.violations == 0 and not report.identical

    def test_truncations_stay_ordered(self):
        psi = make_mechanism(StableTail(1.0, 0.6), lam=0.3)
        report = coupled_compare(Truncations(psi, power_mechanism([(1, 2)]), 2.0, 8.0, 1.0),
                                 SimConfig(dt=1e-2, n_paths=100, seed=10))
        assert report.violations == 0


class TestHitting:
    def test_feller_exit_probability(self):
        psi = power_mechanism([(1, 2)])
        stats = hitting_statistics(psi, ZERO, 1.0, (0.0, 2.0), SimConfig(dt=1e-3, horizon=20.0, n_paths=2000, seed=6))
        assert stats.exit_oracle == pytest.approx(0.5)
        fraction, error = stats.lower_first
        assert abs(fraction - 0.5) < 4 * error + 0.01

    def test_drop_mode_runs(self):
        psi = make_mechanism(StableTail(1.0, 1.5), gamma=-2.0)
        cfg = SimConfig(dt=1e-2, n_paths=20, seed=1, small_jump_mode=DROP)
        assert run_batch(psi, ZERO, 1.0, cfg).values.shape == (20, 101)

import numpy as np
import pytest

from obil.adapter import AdapterConfig
from obil.data import LabeledDataset
from obil.simulate import (GaussianProblem, PriorTrajectory, RegretLedger,
                           ResampleInfeasible, StreamScenario,
                           make_resampled_testset, oracle_decision,
                           oracle_threshold, run_regret_experiment,
                           sample_step)


def unit_problem():
    return GaussianProblem(mu0=np.array([-1.0]), mu1=np.array([1.0]), sigma2=1.0)


class TestGaussianProblem:
    def test_log_lr_is_two_x(self):
        prob = unit_problem()
        for x in (-2.0, 0.0, 0.7, 3.5):
            assert prob.log_lr(np.array([x])) == pytest.approx(2.0 * x)

    def test_log_lr_batched(self):
        prob = unit_problem()
        xs = np.array([[-1.0], [0.5]])
        np.testing.assert_allclose(prob.log_lr(xs), [-2.0, 1.0])

    def test_posterior_balanced_origin(self):
        assert unit_problem().posterior(np.array([0.0]), 0.5) == pytest.approx(0.5)

    def test_posterior_formula(self):
        # q = e^2 at x = 1 with p1 = 0.2
        q = np.exp(2.0)
        want = q * 0.2 / (q * 0.2 + 0.8)
        assert unit_problem().posterior(np.array([1.0]), 0.2) == pytest.approx(want)

    def test_sample_means(self):
        prob = unit_problem()
        rng = np.random.default_rng(0)
        y = np.array([0] * 5000 + [1] * 5000)
        x = prob.sample(y, rng)
        assert abs(x[:5000].mean() + 1.0) < 0.05
        assert abs(x[5000:].mean() - 1.0) < 0.05

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            GaussianProblem(mu0=np.zeros(2), mu1=np.zeros(3))
        with pytest.raises(ValueError):
            GaussianProblem(sigma2=0.0)

    def test_sample_dataset_prior(self):
        ds = unit_problem().sample_dataset(20000, 0.1, np.random.default_rng(1))
        assert abs(ds.labels.mean() - 0.1) < 0.01


class TestPriorTrajectory:
    def test_constant(self):
        traj = PriorTrajectory(kind="constant", p_before=0.07)
        assert traj.p1_at(0) == 0.07
        assert traj.p1_at(10_000) == 0.07

    def test_abrupt_jump_and_decay(self):
        traj = PriorTrajectory(kind="abrupt", p_before=0.03, p_after=0.12,
                               t_switch=500, decay_steps=1000)
        assert traj.p1_at(499) == pytest.approx(0.03)
        assert traj.p1_at(500) == pytest.approx(0.12)
        assert traj.p1_at(1000) == pytest.approx(0.075)
        assert traj.p1_at(1500) == pytest.approx(0.03)
        assert traj.p1_at(5000) == pytest.approx(0.03)

    def test_abrupt_without_decay_holds(self):
        traj = PriorTrajectory(kind="abrupt", p_before=0.03, p_after=0.12,
                               t_switch=500, decay_steps=0)
        assert traj.p1_at(499) == pytest.approx(0.03)
        assert traj.p1_at(10_000) == pytest.approx(0.12)

    def test_linear_drift_cap(self):
        traj = PriorTrajectory(kind="linear_drift", p_start=0.2, slope=1e-3,
                               p_cap=0.8)
        assert traj.p1_at(100) == pytest.approx(0.3)
        assert traj.p1_at(600) == pytest.approx(0.8)
        assert traj.p1_at(5000) == pytest.approx(0.8)

    def test_negative_drift_floor(self):
        traj = PriorTrajectory(kind="linear_drift", p_start=0.3, slope=-1e-3,
                               p_cap=0.1)
        assert traj.p1_at(100) == pytest.approx(0.2)
        assert traj.p1_at(1000) == pytest.approx(0.1)

    def test_global_floor(self):
        traj = PriorTrajectory(kind="constant", p_before=0.0)
        assert traj.p1_at(0) == pytest.approx(0.005)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PriorTrajectory(kind="sinusoid").p1_at(0)


class TestSampleStep:
    def test_label_frequency_matches_prior(self):
        scenario = StreamScenario(unit_problem(),
                                  PriorTrajectory(kind="constant", p_before=0.25),
                                  horizon=1)
        rng = np.random.default_rng(8)
        draws = [sample_step(scenario, 0, rng)[1] for _ in range(5000)]
        assert abs(np.mean(draws) - 0.25) < 0.02

    def test_reports_true_prior(self):
        traj = PriorTrajectory(kind="abrupt", p_before=0.1, p_after=0.4,
                               t_switch=3, decay_steps=0)
        scenario = StreamScenario(unit_problem(), traj, horizon=10)
        rng = np.random.default_rng(0)
        assert sample_step(scenario, 2, rng)[2] == pytest.approx(0.1)
        assert sample_step(scenario, 3, rng)[2] == pytest.approx(0.4)

    def test_horizon_validation(self):
        with pytest.raises(ValueError):
            StreamScenario(unit_problem(), PriorTrajectory(), horizon=0)


class TestOracle:
    def test_threshold(self):
        assert oracle_threshold(1.0, 0.5) == pytest.approx(1.0)
        assert oracle_threshold(2.0, 0.2) == pytest.approx(8.0)

    def test_decision_examples(self):
        assert oracle_decision(np.log(1.5), 1.0, 0.5) == 1
        assert oracle_decision(np.log(0.5), 1.0, 0.5) == 0
        assert oracle_decision(0.0, 1.0, 0.5) == 0  # tie goes to 0

    def test_rejects_degenerate_prior(self):
        with pytest.raises(ValueError):
            oracle_decision(0.0, 1.0, 0.0)

    def test_minimizes_expected_cost(self):
        # the threshold qc (1 - p1) / p1 is the Bayes rule for the cost
        # structure with unit miss cost and false-alarm cost qc, so on random
        # instances the oracle action never has higher expected cost than the
        # alternative under that structure
        rng = np.random.default_rng(13)
        prob = unit_problem()
        for _ in range(50):
            qc = float(rng.uniform(0.2, 5.0))
            p1 = float(rng.uniform(0.05, 0.95))
            x = np.array([rng.normal(0, 2)])
            pred = oracle_decision(float(prob.log_lr(x)), qc, p1)
            post = float(prob.posterior(x, p1))
            cost = {0: post, 1: qc * (1.0 - post)}
            assert cost[pred] <= min(cost.values()) + 1e-12


class TestRunRegretExperiment:
    def scenario(self, horizon=300, seed=0):
        traj = PriorTrajectory(kind="constant", p_before=0.3)
        return StreamScenario(unit_problem(), traj, horizon=horizon, seed=seed)

    def test_ledger_shapes(self):
        ledger, trace = run_regret_experiment(self.scenario(), AdapterConfig(),
                                              np.random.default_rng(0))
        assert len(trace) == 300
        for arr in (ledger.alg_loss, ledger.oracle_loss, ledger.cum_regret):
            assert arr.shape == (300,)
        assert list(ledger.t[:3]) == [1, 2, 3]

    def test_expected_regret_nonnegative_and_monotone(self):
        # the oracle minimizes per-step expected cost, so cumulative expected
        # regret never decreases, for every seed
        for seed in range(20):
            ledger, _ = run_regret_experiment(
                self.scenario(horizon=150), AdapterConfig(initial_p1=0.5),
                np.random.default_rng(seed))
            increments = np.diff(np.concatenate([[0.0], ledger.cum_regret]))
            assert np.all(increments >= -1e-12)

    def test_realized_losses_are_cost_values(self):
        cfg = AdapterConfig(qc=3.0)
        ledger, _ = run_regret_experiment(self.scenario(horizon=200), cfg,
                                          np.random.default_rng(2))
        assert set(np.unique(ledger.alg_loss)) <= {0.0, 1.0, 3.0}
        assert set(np.unique(ledger.oracle_loss)) <= {0.0, 1.0, 3.0}

    def test_oracle_tracking_adapter_agrees_with_oracle(self):
        # an adapter pinned at the true prior with no updates reproduces the
        # oracle decisions exactly, so regret is identically zero
        cfg = AdapterConfig(initial_p1=0.3, gamma=0.999999, delta_max=1e-12,
                            alpha=1e-12)
        ledger, _ = run_regret_experiment(self.scenario(horizon=200), cfg,
                                          np.random.default_rng(3))
        np.testing.assert_allclose(ledger.cum_regret, 0.0, atol=1e-12)

    def test_custom_log_lr_source(self):
        # an inverted ratio source makes the algorithm strictly worse
        scenario = self.scenario(horizon=400)
        bad = lambda x: -float(scenario.problem.log_lr(x))
        ledger, _ = run_regret_experiment(scenario, AdapterConfig(initial_p1=0.3),
                                          np.random.default_rng(4), log_lr_source=bad)
        assert ledger.cum_regret[-1] > 1.0

    def test_deterministic_given_rng_seed(self):
        a, _ = run_regret_experiment(self.scenario(), AdapterConfig(),
                                     np.random.default_rng(7))
        b, _ = run_regret_experiment(self.scenario(), AdapterConfig(),
                                     np.random.default_rng(7))
        np.testing.assert_array_equal(a.cum_regret, b.cum_regret)

    def test_rows_iteration(self):
        ledger = RegretLedger(np.array([1]), np.array([1.0]), np.array([0.0]),
                              np.array([0.6]), np.array([0.4]), np.array([0.2]))
        assert list(ledger.rows()) == [(1, 1.0, 0.0, 0.2)]


class TestMakeResampledTestset:
    def make(self, n0=400, n1=100, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 1, (n0 + n1, 1))
        y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
        return LabeledDataset(x, y)

    def test_increase_imbalance(self):
        out, used_replacement = make_resampled_testset(self.make(), 4.0)
        assert out.n_negative == 400 and out.n_positive == 25
        assert not used_replacement

    def test_decrease_imbalance(self):
        out, used_replacement = make_resampled_testset(self.make(), 0.25)
        assert out.n_negative == 100 and out.n_positive == 100
        assert not used_replacement

    def test_identity_multiplier(self):
        out, _ = make_resampled_testset(self.make(), 1.0)
        assert out.n_negative == 400 and out.n_positive == 100

    def test_rows_come_from_original(self):
        ds = self.make(40, 10)
        out, _ = make_resampled_testset(ds, 2.0, seed=5)
        original = {(float(f[0]), int(l)) for f, l in zip(ds.features, ds.labels)}
        for f, l in zip(out.features, out.labels):
            assert (float(f[0]), int(l)) in original

    def test_determinism(self):
        ds = self.make()
        a, _ = make_resampled_testset(ds, 4.0, seed=9)
        b, _ = make_resampled_testset(ds, 4.0, seed=9)
        np.testing.assert_array_equal(a.features, b.features)

    def test_infeasible(self):
        with pytest.raises(ResampleInfeasible):
            make_resampled_testset(self.make(), 0.0)
        with pytest.raises(ResampleInfeasible):
            make_resampled_testset(self.make(n0=4, n1=2), 1000.0)

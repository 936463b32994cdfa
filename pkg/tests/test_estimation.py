"""M-step updates, constrained MLE oracle checks, and the EM driver."""

import numpy as np
import pytest

from geohmm.estimation import (LearnConfig, constrained_two_normal_mle,
                               em_learn, project_headings, solve_positions,
                               update_observations, update_relations_additive,
                               update_relations_antisym, update_transitions)
from geohmm.inference import Posteriors, forward_backward
from geohmm.model import (ConstraintLevel, CoordinateMode, ExperienceSequence,
                          GeoHmm, RelationMatrix, check_consistency,
                          embed_relations)
from geohmm.circstats import wrap_angle
from geohmm.simgen import LoopSpec, make_loop_model, sample_sequence
from geohmm.initialization import init_model, random_model
from geohmm.pipeline import default_bucket_config
from oracles import random_geohmm, random_experience


def posteriors_from_xi(xi):
    """Posteriors consistent with a hand-crafted xi tensor."""
    xi = np.asarray(xi, dtype=float)
    T1, n, _ = xi.shape
    gamma = np.zeros((T1 + 1, n))
    gamma[:-1] = xi.sum(axis=2)
    gamma[-1] = xi[-1].sum(axis=0)
    return Posteriors(gamma=gamma, xi=xi)


def experience_from_readings(readings, n_dims=1):
    readings = np.asarray(readings, dtype=float).reshape(-1, 3)
    T = len(readings) + 1
    return ExperienceSequence(observations=np.zeros((T, n_dims), dtype=int),
                              readings=readings)


class TestUpdateTransitions:
    def test_uniform_xi_gives_uniform_rows(self):
        xi = np.full((6, 2, 2), 0.25)
        post = posteriors_from_xi(xi)
        A = update_transitions(post, np.eye(2))
        np.testing.assert_allclose(A, 0.5)

    def test_deterministic_transition(self):
        xi = np.zeros((5, 2, 2))
        xi[:, 0, 1] = 1.0
        post = posteriors_from_xi(xi)
        A = update_transitions(post, np.full((2, 2), 0.5))
        assert A[0, 1] == 1.0
        # row 1 had no weight: keeps the previous row
        np.testing.assert_allclose(A[1], [0.5, 0.5])

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        xi = rng.uniform(size=(9, 4, 4))
        xi /= xi.sum(axis=(1, 2), keepdims=True)
        A = update_transitions(posteriors_from_xi(xi), np.eye(4))
        np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)


class TestUpdateObservations:
    def test_concentrated_gamma_constant_symbol(self):
        gamma = np.zeros((4, 2))
        gamma[:, 1] = 1.0
        post = Posteriors(gamma=gamma, xi=np.zeros((3, 2, 2)))
        e = ExperienceSequence(observations=np.full((4, 1), 2, dtype=int),
                               readings=np.zeros((3, 3)))
        B = update_observations(post, e, (np.full((3, 2), 1 / 3),))
        assert B[0][2, 1] == 1.0
        np.testing.assert_allclose(B[0][:, 0], 1 / 3)   # no weight: kept

    def test_uniform_gamma_counts_symbols(self):
        gamma = np.full((4, 2), 0.5)
        post = Posteriors(gamma=gamma, xi=np.zeros((3, 2, 2)))
        obs = np.array([[0], [1], [0], [1]])
        e = ExperienceSequence(observations=obs, readings=np.zeros((3, 3)))
        B = update_observations(post, e, (np.full((2, 2), 0.5),))
        np.testing.assert_allclose(B[0], 0.5)

    def test_columns_sum_to_one(self):
        rng = np.random.default_rng(1)
        gamma = rng.dirichlet(np.ones(3), size=8)
        post = Posteriors(gamma=gamma, xi=np.zeros((7, 3, 3)))
        obs = rng.integers(0, 4, size=(8, 2))
        e = ExperienceSequence(observations=obs, readings=np.zeros((7, 3)))
        B = update_observations(post, e, (np.full((4, 3), 0.25),) * 2)
        for b in B:
            np.testing.assert_allclose(b.sum(axis=0), 1.0, atol=1e-12)


class TestConstrainedTwoNormalMle:
    def grid_oracle(self, P, Q, lo, hi):
        """Profile-likelihood grid search over mu, refined around the peak;
        the per-mu optimal variances have the textbook closed forms,
        independent of the cubic-root route under test."""
        P, Q = np.asarray(P, float), np.asarray(Q, float)

        def best_on(mus):
            sp2 = ((P[:, None] - mus) ** 2).mean(axis=0)
            sq2 = ((Q[:, None] + mus) ** 2).mean(axis=0)
            ll = -0.5 * (len(P) * np.log(sp2) + len(Q) * np.log(sq2))
            return mus[np.argmax(ll)]

        center = best_on(np.linspace(lo, hi, 20001))
        step = (hi - lo) / 20000
        for _ in range(3):
            center = best_on(np.linspace(center - 2 * step,
                                         center + 2 * step, 2001))
            step = 4 * step / 2000
        return center

    def test_singleton_consistent_pair_is_degenerate(self):
        with pytest.raises(ValueError):
            constrained_two_normal_mle([1.3], [-1.3])

    def test_exactly_consistent_constants_floor(self):
        mu, vp, vq = constrained_two_normal_mle([1, 1, 1, 1], [-1, -1])
        assert mu == 1.0
        assert vp == pytest.approx(1e-6) and vq == pytest.approx(1e-6)

    def test_conflicting_constants_rejected(self):
        with pytest.raises(ValueError):
            constrained_two_normal_mle([1.0, 1.0], [-2.0, -2.0])

    def test_frozen_example_matches_grid(self):
        P, Q = [0.9, 1.1], [-2.0, -1.8]
        mu, vp, vq = constrained_two_normal_mle(P, Q)
        want = self.grid_oracle(P, Q, 0.5, 2.5)
        assert mu == pytest.approx(want, abs=1e-4)
        assert vp == pytest.approx(np.mean((np.array(P) - mu) ** 2), rel=1e-9)
        assert vq == pytest.approx(np.mean((np.array(Q) + mu) ** 2), rel=1e-9)

    def test_twenty_random_pairs_match_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            center = rng.uniform(-3, 3)
            P = rng.normal(center, rng.uniform(0.3, 2.0),
                           size=rng.integers(2, 8))
            Q = rng.normal(-center + rng.uniform(-0.5, 0.5),
                           rng.uniform(0.3, 2.0), size=rng.integers(2, 8))
            mu, _, _ = constrained_two_normal_mle(P, Q)
            lo = min(P.min(), -Q.max()) - 3.0
            hi = max(P.max(), -Q.min()) + 3.0
            want = self.grid_oracle(P, Q, lo, hi)
            assert mu == pytest.approx(want, abs=1e-4)


class TestLagBehindFixedPoint:
    def test_converges_to_constrained_mle(self):
        rng = np.random.default_rng(13)
        P = rng.normal(1.0, 0.4, size=6)
        Q = rng.normal(-1.2, 0.9, size=4)
        xi = np.zeros((10, 2, 2))
        readings = np.zeros((10, 3))
        for t, p in enumerate(P):
            xi[t, 0, 1] = 1.0
            readings[t, 0] = p
        for t, q in enumerate(Q):
            xi[len(P) + t, 1, 0] = 1.0
            readings[len(P) + t, 0] = q
        post = posteriors_from_xi(xi)
        e = experience_from_readings(readings)

        R = RelationMatrix.zero(2, var=4.0, kappa=1.0)
        for _ in range(300):
            R = update_relations_antisym(post, e, R, CoordinateMode.GLOBAL)
        mu, vp, vq = constrained_two_normal_mle(P, Q)
        assert R.mu_x[0, 1] == pytest.approx(mu, abs=1e-6)
        assert R.mu_x[1, 0] == pytest.approx(-mu, abs=1e-6)
        assert R.var_x[0, 1] == pytest.approx(vp, abs=1e-6)
        assert R.var_x[1, 0] == pytest.approx(vq, abs=1e-6)

    def test_mutual_equations_hold_at_fixed_point(self):
        rng = np.random.default_rng(17)
        P = rng.normal(0.8, 0.5, size=5)
        Q = rng.normal(-0.6, 0.7, size=5)
        xi = np.zeros((10, 2, 2))
        readings = np.zeros((10, 3))
        for t, p in enumerate(P):
            xi[t, 0, 1] = 1.0
            readings[t, 0] = p
        for t, q in enumerate(Q):
            xi[5 + t, 1, 0] = 1.0
            readings[5 + t, 0] = q
        post = posteriors_from_xi(xi)
        e = experience_from_readings(readings)
        R = RelationMatrix.zero(2, var=1.0, kappa=1.0)
        for _ in range(300):
            R = update_relations_antisym(post, e, R, CoordinateMode.GLOBAL)
        mu, vp, vq = R.mu_x[0, 1], R.var_x[0, 1], R.var_x[1, 0]
        # simultaneous (non-lagged) stationarity of the mean equation
        want_mu = ((P.sum() / vp) - (Q.sum() / vq)) / (len(P) / vp
                                                       + len(Q) / vq)
        assert mu == pytest.approx(want_mu, abs=1e-6)


class TestUpdateRelationsAntisym:
    def test_equal_variance_symmetric_weights(self):
        fw = [2.0, 2.4]
        bw = [-1.8, -2.2]
        xi = np.zeros((4, 2, 2))
        readings = np.zeros((4, 3))
        xi[0, 0, 1], xi[1, 0, 1] = 1.0, 1.0
        readings[0, 0], readings[1, 0] = fw
        xi[2, 1, 0], xi[3, 1, 0] = 1.0, 1.0
        readings[2, 0], readings[3, 0] = bw
        R_old = RelationMatrix.zero(2, var=2.5, kappa=1.0)
        R = update_relations_antisym(posteriors_from_xi(xi),
                                     experience_from_readings(readings),
                                     R_old, CoordinateMode.GLOBAL)
        want = (np.mean(fw) - np.mean(bw)) / 2.0
        assert R.mu_x[0, 1] == pytest.approx(want, rel=1e-12)
        assert R.mu_x[1, 0] == pytest.approx(-want, rel=1e-12)

    def test_no_reverse_transitions_reduces_to_weighted_stats(self):
        rng = np.random.default_rng(3)
        vals = rng.normal(1.5, 0.3, size=6)
        weights = rng.uniform(0.2, 1.0, size=6)
        xi = np.zeros((6, 2, 2))
        readings = np.zeros((6, 3))
        xi[:, 0, 1] = weights
        readings[:, 0] = vals
        R = update_relations_antisym(posteriors_from_xi(xi),
                                     experience_from_readings(readings),
                                     RelationMatrix.zero(2, var=1.0),
                                     CoordinateMode.GLOBAL)
        want_mu = np.average(vals, weights=weights)
        want_var = np.average((vals - want_mu) ** 2, weights=weights)
        assert R.mu_x[0, 1] == pytest.approx(want_mu, rel=1e-12)
        assert R.var_x[0, 1] == pytest.approx(want_var, rel=1e-12)
        # dataless reverse direction keeps its previous variance
        assert R.var_x[1, 0] == 1.0

    def test_zero_weight_pairs_keep_old_values(self):
        xi = np.zeros((2, 3, 3))
        xi[:, 0, 1] = 1.0
        readings = np.array([[1.0, 0, 0], [1.2, 0, 0]])
        R_old = RelationMatrix.zero(3, var=1.0)
        R_old.mu_x[1, 2], R_old.mu_x[2, 1] = 7.0, -7.0
        R = update_relations_antisym(posteriors_from_xi(xi),
                                     experience_from_readings(readings),
                                     R_old, CoordinateMode.GLOBAL)
        assert R.mu_x[1, 2] == 7.0 and R.mu_x[2, 1] == -7.0

    @pytest.mark.parametrize("mode", [CoordinateMode.GLOBAL,
                                      CoordinateMode.RELATIVE])
    def test_postcondition_antisymmetric(self, mode):
        rng = np.random.default_rng(23)
        model = random_geohmm(4, rng, mode=mode, consistent=True)
        e = random_experience(model, 30, rng)
        trellis = forward_backward(model, e)
        from geohmm.inference import posteriors as post_fn
        post = post_fn(trellis, model, e)
        R = update_relations_antisym(post, e, model.relations, mode)
        check_model = GeoHmm(n_states=4, obs_dims=model.obs_dims, A=model.A,
                             B=model.B, start_state=model.start_state,
                             relations=R, mode=mode)
        report = check_consistency(check_model,
                                   ConstraintLevel.ANTISYMMETRIC, 1e-9)
        assert report.consistent, report.summary()


class TestSolvePositions:
    def test_single_edge(self):
        x = solve_positions([(0, 1, 5.0, 2.0)], 2)
        np.testing.assert_allclose(x, [0.0, 5.0])

    def test_three_edge_normal_equations(self):
        targets = [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (0, 2, 3.0, 1.0)]
        x = solve_positions(targets, 3)
        np.testing.assert_allclose(x, [0.0, 4 / 3, 8 / 3], atol=1e-12)

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(5)
        targets = [(i, j, rng.normal(), rng.uniform(0.5, 2.0))
                   for i in range(4) for j in range(4) if i != j]
        x1 = solve_positions(targets, 4)
        scaled = [(i, j, v, 17.0 * w) for i, j, v, w in targets]
        x2 = solve_positions(scaled, 4)
        np.testing.assert_allclose(x1, x2, atol=1e-9)

    def test_consistent_chain_zero_residual(self):
        targets = [(0, 1, 2.0, 1.0), (1, 2, 3.0, 5.0), (0, 2, 5.0, 0.25)]
        x = solve_positions(targets, 3)
        np.testing.assert_allclose(x, [0.0, 2.0, 5.0], atol=1e-12)

    def test_disconnected_components_anchored(self):
        targets = [(0, 1, 1.0, 1.0), (2, 3, 4.0, 1.0)]
        x = solve_positions(targets, 5, anchor=0)
        np.testing.assert_allclose(x[[0, 1]], [0.0, 1.0])
        np.testing.assert_allclose(x[[2, 3]], [0.0, 4.0])
        assert x[4] == 0.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            solve_positions([], 0)
        with pytest.raises(ValueError):
            solve_positions([(0, 1, 1.0, -2.0)], 2)


class TestProjectHeadings:
    def test_identity_on_additive_input(self):
        theta_true = np.array([0.0, 0.4, -1.0, 2.2])
        raw = wrap_angle(theta_true[None, :] - theta_true[:, None])
        weights = np.full((4, 4), 3.0)
        theta, mu = project_headings(raw, weights, tau=1.0)
        np.testing.assert_allclose(mu, raw, atol=1e-12)
        np.testing.assert_allclose(theta, theta_true, atol=1e-12)

    def test_held_spanning_tree_overrides_weak_entry(self):
        raw = np.zeros((3, 3))
        weights = np.zeros((3, 3))
        raw[0, 1], raw[1, 0] = np.pi / 2, -np.pi / 2
        raw[1, 2], raw[2, 1] = np.pi / 2, -np.pi / 2
        raw[0, 2], raw[2, 0] = np.radians(170.0), -np.radians(170.0)
        weights[0, 1] = weights[1, 2] = 50.0
        weights[0, 2] = 0.5
        theta, mu = project_headings(raw, weights, tau=1.0)
        np.testing.assert_allclose(theta, [0.0, np.pi / 2, np.pi], atol=1e-9)
        assert mu[0, 2] == pytest.approx(np.pi, abs=1e-9)
        # held entries reproduced exactly
        assert mu[0, 1] == pytest.approx(np.pi / 2, abs=1e-12)
        assert mu[1, 2] == pytest.approx(np.pi / 2, abs=1e-12)

    def test_all_soft_is_weighted_least_squares(self):
        rng = np.random.default_rng(11)
        theta_true = np.array([0.0, 0.5, 1.1, -0.7])
        raw = wrap_angle(theta_true[None, :] - theta_true[:, None]
                         + rng.normal(0, 0.05, size=(4, 4)))
        raw = (raw - raw.T) / 2.0
        np.fill_diagonal(raw, 0.0)
        weights = rng.uniform(0.01, 0.2, size=(4, 4))
        theta, mu = project_headings(raw, weights, tau=1.0)

        def residual(candidate):
            diff = wrap_angle(raw - (candidate[None, :] - candidate[:, None]))
            w = weights + weights.T
            return float(np.sum(np.triu(w * diff ** 2, k=1)))

        ours = residual(theta)
        for _ in range(200):
            assert ours <= residual(rng.normal(0, 1.5, size=4)) + 1e-9

    def test_conflicting_held_cycle_demotes_lowest(self):
        raw = np.zeros((3, 3))
        for (i, j), v in (((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 1.5)):
            raw[i, j], raw[j, i] = v, -v
        weights = np.zeros((3, 3))
        weights[0, 1], weights[1, 2], weights[0, 2] = 30.0, 20.0, 10.0
        theta, mu = project_headings(raw, weights, tau=1.0)
        # heaviest two constraints win exactly; cycle closer is demoted
        assert mu[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert mu[1, 2] == pytest.approx(1.0, abs=1e-12)
        assert mu[0, 2] == pytest.approx(2.0, abs=1e-9)


class TestUpdateRelationsAdditive:
    def make_square_posteriors(self, corrupt_weight=None):
        # square loop 0->1->2->3->0 on the unit square, plus an optional
        # corrupted low-weight (0,2) relation
        legs = {(0, 1): (1.0, 0.0), (1, 2): (0.0, 1.0),
                (2, 3): (-1.0, 0.0), (3, 0): (0.0, -1.0)}
        entries = []
        for (i, j), (dx, dy) in legs.items():
            for _ in range(3):
                entries.append((i, j, dx, dy, 20.0))
        if corrupt_weight is not None:
            entries.append((0, 2, 9.9, -4.2, corrupt_weight))
        xi = np.zeros((len(entries), 4, 4))
        readings = np.zeros((len(entries), 3))
        for t, (i, j, dx, dy, w) in enumerate(entries):
            xi[t, i, j] = w
            readings[t, 0], readings[t, 1] = dx, dy
        return posteriors_from_xi(xi), experience_from_readings(readings)

    def test_noise_free_embedding_recovered(self):
        post, e = self.make_square_posteriors()
        cfg = LearnConfig(constraint_level=ConstraintLevel.ADDITIVE)
        R, theta = update_relations_additive(
            post, e, RelationMatrix.zero(4, var=1.0), CoordinateMode.GLOBAL,
            cfg)
        assert R.mu_x[0, 1] == pytest.approx(1.0, abs=1e-9)
        assert R.mu_y[1, 2] == pytest.approx(1.0, abs=1e-9)
        assert R.mu_x[0, 2] == pytest.approx(1.0, abs=1e-9)
        assert R.mu_y[0, 2] == pytest.approx(1.0, abs=1e-9)

    def test_corrupted_low_weight_relation_replaced_by_leg_sum(self):
        post, e = self.make_square_posteriors(corrupt_weight=1e-7)
        cfg = LearnConfig(constraint_level=ConstraintLevel.ADDITIVE)
        R, _ = update_relations_additive(
            post, e, RelationMatrix.zero(4, var=1.0), CoordinateMode.GLOBAL,
            cfg)
        assert R.mu_x[0, 2] == pytest.approx(1.0, abs=1e-5)
        assert R.mu_y[0, 2] == pytest.approx(1.0, abs=1e-5)

    def test_two_states_reduces_to_antisym(self):
        rng = np.random.default_rng(31)
        xi = np.zeros((8, 2, 2))
        readings = np.zeros((8, 3))
        for t in range(5):
            xi[t, 0, 1] = rng.uniform(0.5, 1.0)
            readings[t] = rng.normal(0, 1, size=3)
        for t in range(5, 8):
            xi[t, 1, 0] = rng.uniform(0.5, 1.0)
            readings[t] = rng.normal(0, 1, size=3)
        readings[:, 2] = wrap_angle(readings[:, 2])
        post = posteriors_from_xi(xi)
        e = experience_from_readings(readings)
        R_old = RelationMatrix.zero(2, var=1.3, kappa=2.0)
        cfg = LearnConfig(constraint_level=ConstraintLevel.ADDITIVE,
                          spread_damping=0.0)
        R_add, _ = update_relations_additive(post, e, R_old,
                                             CoordinateMode.GLOBAL, cfg)
        R_anti = update_relations_antisym(post, e, R_old,
                                          CoordinateMode.GLOBAL)
        np.testing.assert_allclose(R_add.mu_x, R_anti.mu_x, atol=1e-9)
        np.testing.assert_allclose(R_add.mu_y, R_anti.mu_y, atol=1e-9)
        np.testing.assert_allclose(R_add.mu_theta, R_anti.mu_theta,
                                   atol=1e-9)
        np.testing.assert_allclose(R_add.var_x, R_anti.var_x, atol=1e-9)

    @pytest.mark.parametrize("mode", [CoordinateMode.GLOBAL,
                                      CoordinateMode.RELATIVE])
    def test_postcondition_additive(self, mode):
        rng = np.random.default_rng(37)
        model = random_geohmm(4, rng, mode=mode, consistent=True)
        e = random_experience(model, 40, rng)
        trellis = forward_backward(model, e)
        from geohmm.inference import posteriors as post_fn
        post = post_fn(trellis, model, e)
        cfg = LearnConfig(constraint_level=ConstraintLevel.ADDITIVE)
        R, _ = update_relations_additive(post, e, model.relations, mode, cfg)
        check_model = GeoHmm(n_states=4, obs_dims=model.obs_dims, A=model.A,
                             B=model.B, start_state=model.start_state,
                             relations=R, mode=mode)
        report = check_consistency(check_model, ConstraintLevel.ADDITIVE,
                                   1e-9)
        assert report.consistent, report.summary()


class TestEmLearn:
    def test_stationary_start_converges_immediately(self):
        true = make_loop_model(LoopSpec())
        seq = sample_sequence(true, 600, np.random.default_rng(3))
        cfg = LearnConfig(constraint_level=ConstraintLevel.ANTISYMMETRIC,
                          max_iters=30)
        _, report = em_learn(seq, true, cfg)
        assert report.converged
        assert report.iterations_run <= 5

    def test_trace_length_invariant(self):
        true = make_loop_model(LoopSpec())
        seq = sample_sequence(true, 200, np.random.default_rng(4))
        _, report = em_learn(seq, true, LearnConfig(max_iters=10))
        assert len(report.loglik_trace) == report.iterations_run + 1

    @pytest.mark.parametrize("level", [ConstraintLevel.UNCONSTRAINED,
                                       ConstraintLevel.ANTISYMMETRIC])
    def test_gem_monotone_randomized(self, level):
        rng = np.random.default_rng(41)
        for k in range(10):
            model = random_geohmm(int(rng.integers(2, 5)), rng,
                                  consistent=True)
            seq = sample_sequence(model, 60, rng)
            start = random_geohmm(model.n_states, rng, consistent=True)
            start = GeoHmm(n_states=model.n_states, obs_dims=model.obs_dims,
                           A=start.A, B=start.B,
                           start_state=model.start_state,
                           relations=start.relations, mode=start.mode)
            cfg = LearnConfig(constraint_level=level, max_iters=25)
            _, report = em_learn(seq, start, cfg)
            trace = np.array(report.loglik_trace)
            drops = np.diff(trace) < -1e-8 * np.abs(trace[:-1])
            assert not drops.any(), (k, trace)
            assert not report.monotonicity_violations

    def test_additive_trace_never_decreases(self):
        true = make_loop_model(LoopSpec())
        for s in range(4):
            seq = sample_sequence(true, 300, np.random.default_rng(50 + s))
            init = init_model(seq, 16, default_bucket_config(seq))
            cfg = LearnConfig(constraint_level=ConstraintLevel.ADDITIVE,
                              max_iters=40)
            _, report = em_learn(seq, init, cfg)
            trace = np.array(report.loglik_trace)
            assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))

    def test_constraints_hold_after_every_m_step(self):
        true = make_loop_model(LoopSpec())
        seq = sample_sequence(true, 250, np.random.default_rng(8))
        init = init_model(seq, 16, default_bucket_config(seq))
        for level in (ConstraintLevel.ANTISYMMETRIC, ConstraintLevel.ADDITIVE):
            seen = []

            def check(_it, model, _level=level, _seen=seen):
                report = check_consistency(model, _level, 1e-9)
                _seen.append(report.consistent)

            cfg = LearnConfig(constraint_level=level, max_iters=15)
            em_learn(seq, init, cfg, on_iteration=check)
            assert seen and all(seen)

    def test_loop_cycle_recovered(self):
        spec = LoopSpec(corridor_lengths=(4.0, 4.0, 4.0, 4.0),
                        states_per_corridor=(1, 1, 1, 1))
        true = make_loop_model(spec)
        seq = sample_sequence(true, 150, np.random.default_rng(9))
        init = init_model(seq, 4, default_bucket_config(seq))
        cfg = LearnConfig(constraint_level=ConstraintLevel.ADDITIVE,
                          max_iters=60)
        model, _ = em_learn(seq, init, cfg)
        for i in range(4):
            assert model.A[i].argmax() in (i, (i + 1) % 4)
        off_diag = model.A * (1 - np.eye(4))
        for i in range(4):
            assert off_diag[i].argmax() == (i + 1) % 4

    def test_mode_conflict_rejected(self):
        true = make_loop_model(LoopSpec())
        seq = sample_sequence(true, 50, np.random.default_rng(10))
        cfg = LearnConfig(mode=CoordinateMode.RELATIVE)
        with pytest.raises(ValueError):
            em_learn(seq, true, cfg)

    def test_baseline_without_odometry_runs(self):
        true = make_loop_model(LoopSpec())
        seq = sample_sequence(true, 150, np.random.default_rng(11))
        start = random_model(16, true.obs_dims, np.random.default_rng(12))
        cfg = LearnConfig(use_odometry=False, max_iters=20)
        model, report = em_learn(seq, start, cfg)
        trace = np.array(report.loglik_trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))
        # relations untouched by the baseline
        np.testing.assert_array_equal(model.relations.mu_x,
                                      start.relations.mu_x)


class TestResultantClamp:
    def test_negative_resultant_floors_kappa_at_zero(self):
        # readings antipodal to the (kept) zero heading mean: the raw
        # resultant is negative and must clamp to 0 before inversion
        xi = np.zeros((4, 2, 2))
        xi[:, 0, 1] = 1.0
        readings = np.zeros((4, 3))
        readings[:, 2] = np.pi - 1e-3
        readings[1::2, 2] = -np.pi + 1e-3   # mix signs: mean stays near pi
        post = posteriors_from_xi(xi)
        e = experience_from_readings(readings)
        R_old = RelationMatrix.zero(2, var=1.0, kappa=5.0)
        # pin the mean by making the old mean dominate: use additive path
        # with zero-weight headings is awkward; instead check directly that
        # a resultant computed against an antipodal mean gives kappa 0
        R = update_relations_antisym(post, e, R_old, CoordinateMode.GLOBAL)
        # the new mean sits near +-pi, so residuals are small and kappa is
        # large; now force the antipodal case through the unconstrained
        # update with a fixed mean by reusing the spread helper
        from geohmm.estimation import _spread_updates
        mu_force = np.zeros((2, 2))   # mean 0 while all readings near pi
        var_x, var_y, kappa = _spread_updates(
            post, e, R_old, mu_force, mu_force, mu_force, 1e-6, 1e4)
        assert kappa[0, 1] == 0.0

from itertools import combinations, product

import numpy as np
import pytest

from spikesync import (
    Ensemble,
    SamplerConfig,
    SpikeTrainSet,
    ValidationError,
    bernoulli_loglik,
    beta_from_zeta,
    copula_loglik,
    copula_loglik_grad_beta,
    fgm_binary_pmf,
    fgm_cdf,
    fgm_pmf_table,
    fit_multi,
    joint_table,
    pair_indices,
    pair_loglik_at_lag,
    zeta_from_beta,
)
from spikesync.copula import CopulaModel, check_beta
from spikesync.gp import logit
from spikesync.samplers import gibbs_sweep


def random_beta(rng, n, scale=None):
    k = n * (n - 1) // 2
    b = rng.uniform(-1, 1, k)
    return b * (rng.uniform(0, 1) if scale is None else scale) / np.abs(b).sum()


def all_outcomes(n):
    return [np.array(bits) for bits in product((0, 1), repeat=n)]


class TestFgmCdf:
    def test_zero_marginal_gives_zero(self):
        assert fgm_cdf([0.0, 0.7], [0.4]) == 0.0

    def test_all_ones_gives_one(self):
        assert fgm_cdf([1.0, 1.0, 1.0], [0.2, -0.1, 0.05]) == pytest.approx(1.0)

    def test_worked_example(self):
        assert fgm_cdf([0.5, 0.5], [0.5]) == pytest.approx(0.28125, rel=1e-14)

    def test_constraint_enforced(self):
        with pytest.raises(ValidationError, match="constraint"):
            fgm_cdf([0.5, 0.5, 0.5], [0.8, 0.4, 0.0])


class TestFgmBinaryPmf:
    def test_independence_at_beta_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            p = rng.uniform(0.05, 0.95, n)
            y = rng.integers(0, 2, n)
            expected = np.prod(np.where(y == 1, p, 1 - p))
            got = fgm_binary_pmf(y, p, np.zeros(n * (n - 1) // 2))
            assert got == pytest.approx(expected, rel=1e-12)

    def test_two_neuron_cells_match_joint_table(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p, q = rng.uniform(0.1, 0.9, 2)
            beta = float(rng.uniform(-1, 1))
            zeta = zeta_from_beta(beta, p, q)
            table = joint_table(p, q, zeta).as_array()
            cells = [fgm_binary_pmf(y, [p, q], [beta])
                     for y in ([1, 1], [1, 0], [0, 1], [0, 0])]
            assert np.allclose(cells, table, atol=1e-12)

    def test_normalization_n3(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            p = rng.uniform(0.05, 0.95, 3)
            beta = random_beta(rng, 3)
            total = sum(fgm_binary_pmf(y, p, beta) for y in all_outcomes(3))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_matches_closed_form_table(self):
        rng = np.random.default_rng(3)
        for n in (2, 3, 4):
            p = rng.uniform(0.1, 0.9, n)
            beta = random_beta(rng, n)
            table = fgm_pmf_table(p, beta)
            for m, y in enumerate(all_outcomes(n)):
                assert table[m] == pytest.approx(fgm_binary_pmf(y, p, beta), abs=1e-14)

    def test_nonnegative_on_constraint_boundary(self):
        rng = np.random.default_rng(4)
        for n in (2, 3, 4):
            for _ in range(40):
                p = rng.uniform(0.02, 0.98, n)
                beta = random_beta(rng, n, scale=1.0)  # on the boundary
                table = fgm_pmf_table(p, beta)
                assert table.min() >= -1e-12
                assert table.sum() == pytest.approx(1.0, abs=1e-12)

    def test_pairwise_marginalization(self):
        rng = np.random.default_rng(5)
        for n in (3, 4):
            p = rng.uniform(0.1, 0.9, n)
            beta = random_beta(rng, n)
            pairs = pair_indices(n)
            drop = n - 1
            keep_pairs = [k for k, (i, j) in enumerate(pairs) if drop not in (i, j)]
            sub_beta = np.asarray(beta)[keep_pairs]
            for y_sub in all_outcomes(n - 1):
                total = sum(
                    fgm_binary_pmf(np.append(y_sub, last), p, beta) for last in (0, 1)
                )
                want = fgm_binary_pmf(y_sub, p[:-1], sub_beta)
                assert total == pytest.approx(want, abs=1e-12)

    def test_exchangeability_under_relabeling(self):
        rng = np.random.default_rng(6)
        n = 4
        p = rng.uniform(0.1, 0.9, n)
        beta = random_beta(rng, n)
        y = rng.integers(0, 2, n)
        pairs = pair_indices(n)
        lookup = {pr: k for k, pr in enumerate(pairs)}
        for _ in range(5):
            perm = rng.permutation(n)  # new label a holds old neuron perm[a]
            beta_perm = np.empty_like(beta)
            for a, b in pairs:
                old = tuple(sorted((perm[a], perm[b])))
                beta_perm[lookup[(a, b)]] = beta[lookup[old]]
            lhs = fgm_binary_pmf(y, p, beta)
            rhs = fgm_binary_pmf(y[perm], p[perm], beta_perm)
            assert rhs == pytest.approx(lhs, rel=1e-12)

    def test_monotone_in_beta_for_cofire_cell(self):
        betas = np.linspace(-0.9, 0.9, 19)
        vals = [fgm_binary_pmf([1, 1], [0.3, 0.4], [b]) for b in betas]
        assert np.all(np.diff(vals) > 0)


class TestBetaZetaConversion:
    def test_identity_at_independence(self):
        assert beta_from_zeta(1.0, 0.3, 0.6) == 0.0
        assert zeta_from_beta(0.0, 0.3, 0.6) == 1.0

    def test_documented_out_of_range_case(self):
        # the pairwise parameterization can escape the copula constraint
        assert beta_from_zeta(1.6, 0.5, 0.5) == pytest.approx(2.4, rel=1e-12)

    def test_worked_example(self):
        assert zeta_from_beta(0.5, 0.25, 0.15) == pytest.approx(1.31875, rel=1e-12)

    def test_mutually_inverse(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p, q = rng.uniform(0.05, 0.95, 2)
            z = rng.uniform(0.5, 1.5)
            assert zeta_from_beta(beta_from_zeta(z, p, q), p, q) == pytest.approx(z, rel=1e-12)

    def test_degenerate_margins(self):
        with pytest.raises(ValidationError):
            beta_from_zeta(1.2, 0.0, 0.5)


def make_ensemble(rng, n=3, r=4, t=6, rate=0.4):
    neurons = [
        SpikeTrainSet(f"n{i}", (rng.random((r, t)) < rate).astype(int), 0.01)
        for i in range(n)
    ]
    return Ensemble(neurons)


class TestCopulaLoglik:
    def test_beta_zero_reduces_to_bernoulli_sum(self):
        rng = np.random.default_rng(8)
        ens = make_ensemble(rng)
        us = rng.normal(scale=0.5, size=(3, 6))
        got = copula_loglik(us, np.zeros(3), ens)
        want = sum(bernoulli_loglik(us[i], ens[i]) for i in range(3))
        assert got == pytest.approx(want, rel=1e-12)

    def test_matches_per_bin_pmf_bruteforce(self):
        rng = np.random.default_rng(9)
        ens = make_ensemble(rng, n=3, r=3, t=5)
        us = rng.normal(scale=0.4, size=(3, 5))
        beta = random_beta(rng, 3)
        p = 1 / (1 + np.exp(-us))
        want = 0.0
        for r in range(3):
            for t in range(5):
                y = np.array([ens[i].trials[r, t] for i in range(3)])
                want += np.log(fgm_binary_pmf(y, p[:, t], beta))
        assert copula_loglik(us, beta, ens) == pytest.approx(want, rel=1e-12)

    def test_two_neuron_consistency_with_pairwise(self):
        rng = np.random.default_rng(10)
        ens = make_ensemble(rng, n=2, r=5, t=7)
        u0 = np.full(7, logit(0.35))
        v0 = np.full(7, logit(0.22))
        beta = 0.4
        zeta = zeta_from_beta(beta, 0.35, 0.22)
        lhs = copula_loglik(np.stack([u0, v0]), [beta], ens)
        rhs = pair_loglik_at_lag(u0, v0, zeta, 0, ens[0], ens[1])
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        ens = make_ensemble(rng, n=3, r=4, t=6)
        us = rng.normal(scale=0.4, size=(3, 6))
        beta = random_beta(rng, 3, scale=0.5)
        grad = copula_loglik_grad_beta(us, beta, ens)
        h = 1e-6
        for k in range(3):
            up, dn = beta.copy(), beta.copy()
            up[k] += h
            dn[k] -= h
            fd = (copula_loglik(us, up, ens) - copula_loglik(us, dn, ens)) / (2 * h)
            assert fd == pytest.approx(grad[k], rel=1e-5)

    def test_constraint_validated(self):
        rng = np.random.default_rng(12)
        ens = make_ensemble(rng)
        with pytest.raises(ValidationError, match="constraint"):
            copula_loglik(np.zeros((3, 6)), [0.8, 0.4, 0.0], ens)

    def test_check_beta_length(self):
        with pytest.raises(ValidationError, match="length"):
            check_beta([0.1, 0.2], 3)


class TestFitMulti:
    def _tiny(self):
        rng = np.random.default_rng(13)
        return make_ensemble(rng, n=2, r=5, t=8, rate=0.3)

    def test_smoke_fields(self):
        ens = self._tiny()
        cfg = SamplerConfig(n_iter=40, burn_in=10, seed=4)
        res = fit_multi(ens, cfg)
        assert res.chain.draws.shape == (30, 1 + 8)
        assert res.pairs == [(0, 1)]
        assert res.beta_intervals.shape == (1, 2)
        assert np.abs(res.beta_draws).sum(axis=1).max() <= 1 + 1e-9
        d = res.summary_dict()
        assert d["pairs"][0]["i"] == 1 and d["pairs"][0]["j"] == 2

    def test_deterministic(self):
        ens = self._tiny()
        cfg = SamplerConfig(n_iter=30, burn_in=5, seed=6)
        a = fit_multi(ens, cfg)
        b = fit_multi(ens, cfg)
        assert np.array_equal(a.chain.draws, b.chain.draws)

    def test_needs_two_neurons(self):
        rng = np.random.default_rng(14)
        ens = make_ensemble(rng, n=1)
        with pytest.raises(ValidationError):
            fit_multi(ens, SamplerConfig(n_iter=10, burn_in=2))

    def test_zero_inner_iterations_leave_state_unchanged(self):
        ens = self._tiny()
        model = CopulaModel(ens)
        state = model.init_state()
        state.beta = np.array([0.2])
        u_before = state.blocks[0].u.copy()
        cfg = SamplerConfig(n_iter=10, burn_in=1, ess_steps=0, hyper_steps=0, dep_steps=0)
        gibbs_sweep(model, state, np.random.default_rng(0), cfg)
        assert np.array_equal(state.blocks[0].u, u_before)
        assert np.array_equal(state.beta, [0.2])

    def test_adjacency_lists_significant_pairs(self):
        ens = self._tiny()
        cfg = SamplerConfig(n_iter=150, burn_in=30, seed=4)
        res = fit_multi(ens, cfg)
        adj = res.adjacency()
        assert len(adj) == int(res.significant.sum())

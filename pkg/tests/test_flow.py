"""Matrix flow, generators, moment flow, and free convolution.

Oracles: the quadratic observable <H,H> has the closed-form generator
value N(N-1)/2 - <H,H>; linear observables halve; a frozen two-state
moment flow reduces to scalar exponential decay; the free-convolution
transform must satisfy its own self-consistency equation, reproduce the
empirical transform at t=0, and converge to the semicircle transform as
t grows; zero-noise SDE paths follow their deterministic reductions.
"""

import math

import numpy as np
import pytest

from rrglab.flow import (ConvergenceError, SingularityError, emf_solve,
                         enumerate_configs, estimate_seminorm,
                         eigenvalue_path, eigenvector_sde, evolve_exact,
                         evolve_sde, flow_generator,
                         flow_generator_entrywise, free_conv_stieltjes,
                         moment_flow_rates, qf_lf_compare,
                         semicircle_semigroup_residual,
                         stieltjes_flow_generator, stieltjes_observable,
                         switch_generator_stieltjes)
from rrglab.graphs import sample_regular_graph
from rrglab.chain import switchable_tuples, switched_graph
from rrglab.matrices import (constraint_violation, center_rescale,
                             h_switch_component, inner_product,
                             sample_constrained_goe)
from rrglab.spectra import decompose, semicircle_m, stieltjes_empirical
from rrglab.streams import rng_stream


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck evolution


def test_evolve_exact_at_time_zero_is_identity():
    h = sample_constrained_goe(12, seed=0)
    assert np.array_equal(evolve_exact(h, 0.0, seed=1), h)


def test_evolve_exact_preserves_constraint_and_determinism():
    h = sample_constrained_goe(15, seed=2)
    out1 = evolve_exact(h, 0.8, seed=3)
    out2 = evolve_exact(h, 0.8, seed=3)
    out3 = evolve_exact(h, 0.8, seed=4)
    assert np.array_equal(out1, out2)
    assert not np.array_equal(out1, out3)
    assert constraint_violation(out1) < 1e-12


def test_evolve_exact_matches_norm_identity():
    """E <H_t, H_t> = e^-t <H_0, H_0> + (1 - e^-t) N(N-1)/2."""
    n, t, reps = 30, 0.7, 400
    h0 = center_rescale(sample_regular_graph(n, 5, rng=rng_stream(5)))
    rng = rng_stream(6)
    values = np.empty(reps)
    for r in range(reps):
        ht = evolve_exact(h0, t, rng=rng)
        values[r] = inner_product(ht, ht)
    expected = (math.exp(-t) * inner_product(h0, h0)
                + (1 - math.exp(-t)) * n * (n - 1) / 2.0)
    stderr = values.std(ddof=1) / math.sqrt(reps)
    assert abs(values.mean() - expected) < 5 * stderr


def test_evolve_sde_zero_noise_decays_exponentially():
    h = sample_constrained_goe(10, seed=7)
    out = evolve_sde(h, 1.0, 1e-3, noise=False)
    target = math.exp(-0.5) * h
    assert np.abs(out - target).max() < 1e-3 * np.abs(target).max()


def test_evolve_sde_preserves_constraint():
    h = sample_constrained_goe(10, seed=8)
    out = evolve_sde(h, 0.3, 1e-2, seed=9)
    assert constraint_violation(out) < 1e-12
    assert np.array_equal(out, evolve_sde(h, 0.3, 1e-2, seed=9))


# ---------------------------------------------------------------------------
# Flow generator


def test_flow_generator_quadratic_observable_closed_form():
    n = 8
    h = center_rescale(sample_regular_graph(n, 3, rng=rng_stream(10)))

    def f(mat):
        return inner_product(mat, mat)

    # central differences are exact on quadratics, so a large step avoids
    # roundoff amplification entirely
    expected = n * (n - 1) / 2.0 - f(h)
    dense = flow_generator(f, h, step=0.5, method="dense")
    assert abs(dense - expected) < 1e-9 * abs(expected)
    entrywise = flow_generator_entrywise(f, h, step=0.5)
    assert abs(entrywise - expected) < 1e-9 * abs(expected)
    assert abs(dense - entrywise) < 1e-8 * max(1.0, abs(dense))


def test_flow_generator_halves_linear_observables():
    n = 8
    h = sample_constrained_goe(n, seed=11)

    def f(mat):
        return h_switch_component(mat, 0, 2, 4, 6)

    expected = -0.5 * f(h)
    assert abs(flow_generator(f, h, method="dense") - expected) < 1e-7
    assert abs(flow_generator_entrywise(f, h) - expected) < 1e-7


def test_flow_generator_forms_agree_on_stieltjes_observable():
    # for non-polynomial observables the two forms share the operator but
    # not the finite-difference directions, so they agree to truncation
    # order O(step^2)
    n = 8
    h = center_rescale(sample_regular_graph(n, 3, rng=rng_stream(12)))
    func = stieltjes_observable(0.2 + 0.5j, n)
    gaps = []
    for step in (4e-3, 2e-3):
        dense = flow_generator(func, h, step=step, method="dense")
        entrywise = flow_generator_entrywise(func, h, step=step)
        gaps.append(abs(dense - entrywise))
    assert gaps[0] < 1e-4
    assert gaps[1] < 0.35 * gaps[0]  # shrinks at least quadratically-ish


def test_flow_generator_sampled_estimates_dense():
    n = 10
    h = center_rescale(sample_regular_graph(n, 3, rng=rng_stream(13)))

    def f(mat):
        return inner_product(mat, mat)

    dense = flow_generator(f, h, method="dense")
    sampled, stderr = flow_generator(f, h, method="sampled", n_tuples=20000,
                                     rng=rng_stream(14), return_stderr=True)
    assert stderr > 0
    assert abs(sampled - dense) < 5 * stderr


def test_stieltjes_observable_uses_deflated_spectrum():
    h = center_rescale(sample_regular_graph(12, 3, rng=rng_stream(15)))
    z = -0.3 + 0.4j
    lam = decompose(h).eigenvalues
    expected = stieltjes_empirical(lam, z)
    assert abs(stieltjes_observable(z, 12, part="imag")(h) - expected.imag) < 1e-12
    assert abs(stieltjes_observable(z, 12, part="real")(h) - expected.real) < 1e-12


def test_stieltjes_flow_generator_matches_finite_differences():
    n = 10
    h = center_rescale(sample_regular_graph(n, 3, rng=rng_stream(16)))
    z = 0.0 + 0.5j
    func = stieltjes_observable(z, n)
    closed = stieltjes_flow_generator(decompose(h).eigenvalues, z,
                                      n_ambient=n).imag
    step = 1e-4 * (1.0 + np.abs(h).max())
    fd = flow_generator(func, h, step=step, method="dense")
    assert abs(closed - fd) < 1e-6 * max(1.0, abs(closed))


# ---------------------------------------------------------------------------
# Jump generator of the Stieltjes observable


def test_switch_generator_matches_direct_redecomposition():
    graph = sample_regular_graph(16, 3, rng=rng_stream(17))
    z = -0.3 + 0.1j
    fast = switch_generator_stieltjes(graph, z)
    base = stieltjes_empirical(decompose(center_rescale(graph)).eigenvalues, z)
    acc = 0j
    for i, j, m, n in switchable_tuples(graph):
        lam = decompose(center_rescale(switched_graph(graph, i, j, m, n))).eigenvalues
        acc += stieltjes_empirical(lam, z) - base
    direct = acc / (8 * 16 * 3)
    assert abs(fast - direct) < 1e-10 * max(1.0, abs(direct))


@pytest.mark.filterwarnings("ignore::rrglab.graphs.DegreeRangeWarning")
def test_switch_generator_vanishes_without_moves():
    # the hexagonal state space admits no switching moves at all
    graph = sample_regular_graph(6, 3, rng=rng_stream(18), burn_in=0)
    assert len(switchable_tuples(graph)) == 0
    assert switch_generator_stieltjes(graph, 0.5j) == 0j


# ---------------------------------------------------------------------------
# Seminorms and the discrepancy scan


def test_estimate_seminorm_order_zero_is_lr_mean():
    func = stieltjes_observable(0.5j, 8)
    mats = [sample_constrained_goe(8, seed=s) for s in (0, 1, 2)]
    got = estimate_seminorm(func, mats, 0, r=8)
    expected = float(np.mean([abs(func(m)) ** 8 for m in mats]) ** (1 / 8))
    assert abs(got - expected) < 1e-12
    with pytest.raises(ValueError):
        estimate_seminorm(func, mats, 5)


def test_estimate_seminorm_is_deterministic_and_positive():
    func = stieltjes_observable(0.5j, 10)
    mats = [center_rescale(sample_regular_graph(10, 3, rng=rng_stream(19)))]
    a = estimate_seminorm(func, mats, 2, n_probes=16, rng=rng_stream(20))
    b = estimate_seminorm(func, mats, 2, n_probes=16, rng=rng_stream(20))
    assert a == b > 0


@pytest.mark.filterwarnings("ignore::rrglab.graphs.DegreeRangeWarning")
def test_qf_lf_compare_row_contents():
    rows = qf_lf_compare(16, (4, 8), 0.5j, 4, seed=0,
                         seminorm_samples=2, seminorm_probes=4)
    assert [r.degree for r in rows] == [4, 8]
    for r in rows:
        assert r.big_d == min(r.degree, 16 ** 2 / r.degree ** 3)
        assert r.n_samples == 4
        assert r.mean_abs >= 0 and r.seminorm > 0
        assert r.normalized == pytest.approx(
            r.mean_abs / (r.big_d ** -0.5 * 16 * r.seminorm))


# ---------------------------------------------------------------------------
# Eigenvector moment flow


def test_enumerate_configs_counts_multisets():
    configs = enumerate_configs(3, 2)
    assert len(configs) == math.comb(4, 2)
    assert all(sum(c) == 2 for c in configs)
    assert len(set(configs)) == len(configs)
    assert enumerate_configs(4, 1) == [(1, 0, 0, 0), (0, 1, 0, 0),
                                       (0, 0, 1, 0), (0, 0, 0, 1)]


def test_moment_flow_rates_conserve_mass():
    lam = np.array([1.0, 0.3, -0.8])
    configs = enumerate_configs(3, 2)
    rates = moment_flow_rates(lam, configs, {c: k for k, c in enumerate(configs)},
                              n_ambient=4)
    assert rates.shape == (len(configs), len(configs))
    assert np.abs(rates.sum(axis=1)).max() < 1e-12
    off = rates - np.diag(np.diag(rates))
    assert (off >= 0).all()
    with pytest.raises(SingularityError):
        moment_flow_rates(np.array([1.0, 1.0 + 1e-12]), *_p1_configs(2), n_ambient=3)


def _p1_configs(m):
    configs = enumerate_configs(m, 1)
    return configs, {c: k for k, c in enumerate(configs)}


def test_two_state_moment_flow_matches_exponential():
    lam_pair = np.array([0.7, -0.7])
    w = 1.0 / (3 * (1.4) ** 2)
    path_t = np.array([0.0, 1.0])
    path = np.vstack([lam_pair, lam_pair])
    sol = emf_solve(path_t, path, 1, np.array([1.0, 0.0]), 0.9, n_ambient=3,
                    tol=1e-10)
    decay = np.exp(-2 * w * sol.times)
    exact = np.stack([0.5 + 0.5 * decay, 0.5 - 0.5 * decay], axis=1)
    assert np.abs(sol.values - exact).max() < 1e-6
    assert sol.contraction_ok
    assert np.abs(sol.values.sum(axis=1) - 1.0).max() < 1e-12
    assert (np.diff(sol.sup_norms) <= 1e-12).all()


def test_emf_solve_approaches_uniform_equilibrium():
    # symmetric single-particle rates relax any initial mass to uniform
    lam = np.array([1.2, 0.4, -0.5, -1.1])
    path_t = np.array([0.0, 80.0])
    path = np.vstack([lam, lam])
    f0 = np.array([1.0, 0.0, 0.0, 0.0])
    sol = emf_solve(path_t, path, 1, f0, 80.0, n_ambient=5)
    assert np.abs(sol.final - 0.25).max() < 1e-5


def test_emf_solve_respects_step_budget():
    lam = np.array([0.5, -0.5])
    path = np.vstack([lam, lam])
    with pytest.raises(ConvergenceError):
        emf_solve(np.array([0.0, 1.0]), path, 1, np.array([1.0, 0.0]), 1.0,
                  n_ambient=3, max_steps=2)


# ---------------------------------------------------------------------------
# Eigenvalue and eigenvector paths


def test_eigenvalue_path_shape_start_and_order():
    lam0 = np.array([1.0, 0.2, -1.2])
    times, paths = eigenvalue_path(lam0, 0.05, 0.01, seed=23)
    assert times.shape == (6,) and paths.shape == (6, 3)
    assert np.array_equal(paths[0], np.sort(lam0))
    assert (np.diff(paths, axis=1) >= 0).all()  # every row stays ascending
    _, again = eigenvalue_path(lam0, 0.05, 0.01, seed=23)
    assert np.array_equal(paths, again)


def test_eigenvalue_path_zero_noise_follows_documented_drift():
    lam0 = np.array([-0.8, 0.8])
    dt, n_amb = 1e-3, 3
    _, paths = eigenvalue_path(lam0, dt, dt, noise=False, n_ambient=n_amb)
    drift = np.array([-1.0 / 1.6, 1.0 / 1.6]) / n_amb - lam0 / 2.0
    assert np.abs(paths[1] - (lam0 + drift * dt)).max() < 1e-15


def test_eigenvalue_path_raises_on_collision():
    with pytest.raises(SingularityError):
        eigenvalue_path(np.array([1e-10, 0.0]), 0.01, 0.01, noise=False)


def test_eigenvector_sde_frames_stay_orthonormal():
    rng = rng_stream(24)
    lam0 = np.sort(rng.normal(size=5))[::-1] * 2.0
    path_t, path = eigenvalue_path(lam0, 0.1, 1e-3, seed=25)
    frames = eigenvector_sde(path_t, path, 0.1, 1e-3, seed=26, n_replicas=4)
    assert frames.shape == (4, 5, 5)
    for frame in frames:
        gram = frame.T @ frame
        assert np.abs(gram - np.eye(5)).max() < 1e-10
    assert not np.allclose(frames[0], frames[1])  # replicas are independent
    again = eigenvector_sde(path_t, path, 0.1, 1e-3, seed=26, n_replicas=4)
    assert np.array_equal(frames, again)


def test_eigenvector_sde_zero_noise_norm_decay():
    lam = np.array([1.0, -1.0])
    path_t = np.array([0.0, 1.0])
    path = np.vstack([lam, lam])
    t, dt, n_amb = 0.5, 1e-4, 2
    frames = eigenvector_sde(path_t, path, t, dt, noise=False,
                             renormalize=False, n_ambient=n_amb)
    # each column decays at rate (1/2N) sum_j (lambda_i - lambda_j)^-2
    rate = 1.0 / (2 * n_amb * 4.0)
    expected = math.exp(-rate * t)
    norms = np.linalg.norm(frames[0], axis=0)
    assert np.abs(norms - expected).max() < 1e-4


def test_eigenvector_sde_segments_continue_exactly():
    lam0 = np.array([1.5, 0.0, -1.5])
    path_t, path = eigenvalue_path(lam0, 0.04, 1e-3, seed=27)
    whole = eigenvector_sde(path_t, path, 0.04, 1e-3, seed=28, n_replicas=2)
    rng = rng_stream(28)
    first = eigenvector_sde(path_t, path, 0.02, 1e-3, rng=rng, n_replicas=2)
    second = eigenvector_sde(path_t, path, 0.04, 1e-3, v0=first, rng=rng,
                             n_replicas=2, t_start=0.02)
    # the same noise stream is consumed in the same order; only the float
    # representation of the step times can differ by an ulp
    assert np.allclose(whole, second, rtol=0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# Free convolution


def test_free_conv_at_time_zero_is_empirical():
    lam = np.array([1.4, 0.2, -0.9, -1.3])
    z = 0.3 + 0.2j
    assert free_conv_stieltjes(lam, 0.0, z) == stieltjes_empirical(lam, z)


def test_free_conv_satisfies_self_consistency():
    rng = rng_stream(29)
    lam = np.sort(rng.uniform(-1.8, 1.8, 60))
    for t, z in ((0.2, 0.1 + 0.05j), (1.0, -1.2 + 0.3j), (3.0, 0.9 + 0.02j)):
        m = free_conv_stieltjes(lam, t, z)
        shrink, theta = math.exp(-t / 2), 1 - math.exp(-t)
        residual = np.mean(1.0 / (shrink * lam - z - theta * m)) - m
        assert abs(residual) < 1e-11
        assert m.imag > 0


def test_free_conv_relaxes_to_semicircle():
    lam = np.array([1.0, 1.0, -1.0, -1.0])  # two atoms, far from semicircle
    for z in (0.4 + 0.1j, -0.8 + 0.3j):
        m = free_conv_stieltjes(lam, 12.0, z)
        assert abs(m - semicircle_m(z)) < 1e-5


def test_free_conv_validates_arguments():
    lam = np.array([0.5, -0.5])
    with pytest.raises(ValueError):
        free_conv_stieltjes(lam, 1.0, 0.3 - 0.1j)
    with pytest.raises(ValueError):
        free_conv_stieltjes(lam, -1.0, 0.3 + 0.1j)


def test_semicircle_semigroup_residual_is_roundoff():
    for z in (0.3 + 0.05j, -1.5 + 0.4j, 1.0 + 1.0j):
        for t in (0.1, 1.0, 4.0):
            assert semicircle_semigroup_residual(z, t) < 1e-12


def test_semicircle_continuity_bound():
    rng = rng_stream(30)
    for _ in range(200):
        z = complex(rng.uniform(-3, 3), rng.uniform(1e-4, 2.0))
        w = complex(rng.uniform(-3, 3), rng.uniform(1e-4, 2.0))
        lhs = abs(semicircle_m(z) - semicircle_m(w))
        assert lhs <= 2.0 * math.sqrt(abs(z - w)) + 1e-12

import numpy as np

from coalflow.rng import RngStream
from coalflow.stats import (distance_correlation, distance_correlation_test,
                            energy_two_sample, ks_against_normal,
                            ks_against_uniform, ks_two_sample)


def test_ks_wrappers():
    gen = RngStream(1, (0,)).generator()
    x = gen.standard_normal(4000)
    _, p = ks_against_normal(x, 0.0, 1.0)
    assert p > 0.01
    _, p = ks_against_normal(x + 0.5, 0.0, 1.0)
    assert p < 1e-6
    u = gen.random(4000)
    _, p = ks_against_uniform(u)
    assert p > 0.01
    _, p = ks_two_sample(x, gen.standard_normal(4000))
    assert p > 0.01


def test_energy_two_sample_null_and_alternative():
    gen = RngStream(2, (0,)).generator()
    a = gen.standard_normal((1500, 3))
    b = gen.standard_normal((1500, 3))
    _, p_null = energy_two_sample(a, b, RngStream(2, (1,)), permutations=99)
    assert p_null > 0.01
    c = gen.standard_normal((1500, 3)) + 0.25
    _, p_alt = energy_two_sample(a, c, RngStream(2, (2,)), permutations=99)
    assert p_alt <= 0.01


def test_energy_accepts_1d_inputs():
    gen = RngStream(2, (3,)).generator()
    _, p = energy_two_sample(gen.standard_normal(800),
                             gen.standard_normal(800),
                             RngStream(2, (4,)), permutations=99)
    assert p > 0.01


def test_distance_correlation_independent_vs_dependent():
    gen = RngStream(3, (0,)).generator()
    x = gen.standard_normal(1200)
    y = gen.standard_normal(1200)
    _, p_ind = distance_correlation_test(x, y, RngStream(3, (1,)),
                                         permutations=99)
    assert p_ind > 0.01
    z = x ** 2 + 0.3 * gen.standard_normal(1200)  # nonlinear dependence
    assert distance_correlation(x, z) > 0.2
    _, p_dep = distance_correlation_test(x, z, RngStream(3, (2,)),
                                         permutations=99)
    assert p_dep <= 0.01

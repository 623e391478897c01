import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secquant.hadamard import fwht, hadamard_rotate, inverse_hadamard_rotate, is_power_of_two, next_power_of_two
from secquant.kashin import KashinFrame, kashin_decompose, kashin_dim, kashin_reconstruct
from secquant.ring import InputError, ParameterError


def hadamard_matrix(n):
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


@pytest.mark.parametrize("n", [1, 2, 4, 16, 64])
def test_fwht_matches_dense_sylvester_matrix(n, rng):
    x = rng.normal(size=(3, n))
    assert np.allclose(fwht(x), x @ hadamard_matrix(n).T)


def test_fwht_rejects_non_power_of_two():
    with pytest.raises(ParameterError):
        fwht(np.zeros(6))


def test_power_of_two_helpers():
    assert is_power_of_two(1) and is_power_of_two(1024) and not is_power_of_two(12)
    assert next_power_of_two(1) == 1 and next_power_of_two(513) == 1024


@given(st.integers(0, 8), st.integers(0, 2**32))
def test_rotation_is_orthogonal_and_invertible(log_n, seed):
    n = 1 << log_n
    x = np.random.default_rng(seed).normal(size=n)
    y = hadamard_rotate(x, seed)
    assert math.isclose(np.linalg.norm(y), np.linalg.norm(x), rel_tol=1e-9, abs_tol=1e-12)
    assert np.allclose(inverse_hadamard_rotate(y, seed), x)


def test_rotation_requires_seed_or_signs():
    with pytest.raises(ParameterError):
        hadamard_rotate(np.ones(4))
    with pytest.raises(InputError):
        hadamard_rotate(np.array([1.0, np.nan]), 0)
    y = hadamard_rotate(np.ones(4), signs=np.ones(4))
    assert np.allclose(y, [2, 0, 0, 0])


def test_kashin_dim_examples():
    assert kashin_dim(512) == 1024  # 588.8 rounded up to the 512 granule
    assert kashin_dim(32768) == 37888
    assert kashin_dim(100) == 128  # short inputs use their power-of-two granule


@pytest.mark.parametrize("dim,size", [(8, 16), (512, 1024), (1024, 1536), (300, 384)])
def test_frame_is_tight(dim, size, rng):
    frame = KashinFrame(dim, size, seed=3)
    eye = np.eye(dim)
    synth = frame.synthesis(frame.analysis(eye))
    assert np.allclose(synth, eye)
    a = rng.normal(size=size)
    assert np.linalg.norm(frame.synthesis(a)) <= np.linalg.norm(a) + 1e-9


def test_frame_rejects_odd_sizes():
    with pytest.raises(ParameterError):
        KashinFrame(3, 5, 0)
    with pytest.raises(ParameterError):
        KashinFrame(8, 4, 0)


@given(st.sampled_from([16, 100, 512, 1000]), st.integers(0, 1000))
def test_kashin_reconstruction_is_exact(dim, seed):
    x = np.random.default_rng(seed).lognormal(size=dim)
    a = kashin_decompose(x, seed=seed)
    assert a.shape[-1] == kashin_dim(dim)
    assert np.allclose(kashin_reconstruct(a, dim, seed=seed), x)


def test_kashin_coefficients_are_flatter_than_input(rng):
    x = np.zeros(1024)
    x[0] = 1.0
    a = kashin_decompose(x, seed=1)
    assert np.abs(a).max() < 0.2
    assert np.abs(a).max() * math.sqrt(a.size) < 5.0


def test_kashin_batches_and_validates():
    x = np.random.default_rng(0).normal(size=(4, 64))
    a = kashin_decompose(x, seed=2)
    assert np.allclose(kashin_reconstruct(a, 64, seed=2), x)
    with pytest.raises(InputError):
        kashin_decompose([1.0, np.inf])
    with pytest.raises(ParameterError):
        kashin_dim(10, lam=0.5)

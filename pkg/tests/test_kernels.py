import itertools
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infogap import _kernels_py, kernels

try:
    from infogap import _kernels as _kernels_c
except ImportError:  # pragma: no cover
    _kernels_c = None

needs_ext = pytest.mark.skipif(_kernels_c is None, reason="compiled extension not built")


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 8), st.integers(1, 5))
def test_chebyshev_backends_identical(seed, n, k, y):
    rng = np.random.default_rng(seed)
    t, c = rng.random((n, y)), rng.random((k, y))
    a1, d1 = _kernels_py.chebyshev_assign(t, c)
    a2, d2 = _kernels_c.chebyshev_assign(t, c)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(d1, d2)


def test_chebyshev_ties_go_to_lowest_index():
    t = np.array([[0.5, 0.5]])
    c = np.array([[0.0, 0.5], [1.0, 0.5]])
    for impl in filter(None, (_kernels_py, _kernels_c)):
        assign, dist = impl.chebyshev_assign(t, c)
        assert assign[0] == 0 and dist[0] == 0.5


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 10))
def test_state_probs_backends_identical(seed, n, m):
    act = np.random.default_rng(seed).random((n, m))
    np.testing.assert_array_equal(_kernels_py.binary_state_probs(act), _kernels_c.binary_state_probs(act))


def test_state_probs_bit_order():
    act = np.array([[0.1, 0.7, 0.4]])
    for impl in filter(None, (_kernels_py, _kernels_c)):
        q = impl.binary_state_probs(act)[0]
        for s, bits in enumerate(itertools.product((0, 1), repeat=3)):
            idx = bits[0] * 4 + bits[1] * 2 + bits[2]  # bits listed high to low
            u = (bits[2], bits[1], bits[0])  # unit j is bit j
            expected = np.prod([a if b else 1 - a for a, b in zip(act[0], u)])
            assert q[idx] == pytest.approx(expected, abs=1e-15)


@needs_ext
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_backends_identical(seed):
    rng = np.random.default_rng(seed)
    imgs = rng.random((3, 9, 9))
    angles = rng.uniform(-np.pi, np.pi, 3)
    np.testing.assert_array_equal(_kernels_py.rotate_bilinear(imgs, angles), _kernels_c.rotate_bilinear(imgs, angles))


def test_zero_angle_is_identity():
    imgs = np.random.default_rng(0).random((2, 7, 7))
    for impl in filter(None, (_kernels_py, _kernels_c)):
        np.testing.assert_array_equal(impl.rotate_bilinear(imgs, np.zeros(2)), imgs)


def test_quarter_turn_permutes_pixels():
    img = np.random.default_rng(1).random((1, 5, 5))
    for impl in filter(None, (_kernels_py, _kernels_c)):
        out = impl.rotate_bilinear(img, np.array([np.pi / 2]))
        # a quarter turn maps the grid onto itself; either orientation is a rot90
        assert np.allclose(out[0], np.rot90(img[0], 1), atol=1e-12) or np.allclose(out[0], np.rot90(img[0], -1), atol=1e-12)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if _kernels_c is not None:
        assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    env = dict(os.environ, INFOGAP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from infogap import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

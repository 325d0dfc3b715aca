import os
import subprocess
import sys

import numpy as np
import pytest

from lagrangian_euler import _kernels


@pytest.fixture
def stack(rng):
    return rng.standard_normal((3, 3, 4, 5, 6))


class TestDeterminant:
    def test_matches_linalg(self, stack):
        ref = np.linalg.det(np.moveaxis(stack, (0, 1), (-2, -1)))
        assert np.allclose(_kernels.det3(stack), ref, atol=1e-12)

    def test_numpy_path_agrees(self, stack):
        flat = stack.reshape(3, 3, -1)
        assert np.allclose(_kernels.det3_numpy(flat), _kernels.det3(stack).reshape(-1), atol=1e-13)


class TestCofactor:
    def test_adjugate_identity(self, stack):
        cof = _kernels.cofactor3(stack)
        prod = np.einsum("ba...,bc...->ac...", stack, cof)
        det = _kernels.det3(stack)
        assert np.allclose(prod, np.eye(3).reshape(3, 3, 1, 1, 1) * det, atol=1e-12)

    def test_numpy_path_agrees(self, stack):
        flat = stack.reshape(3, 3, -1)
        assert np.allclose(_kernels.cofactor3_numpy(flat), _kernels.cofactor3(stack).reshape(3, 3, -1))


class TestTrigSum:
    @pytest.mark.parametrize("ncomp", [1, 3])
    def test_numpy_path_agrees(self, rng, ncomp):
        kvals = np.arange(-3, 4, dtype=float)
        coef = rng.standard_normal((ncomp, 7, 7, 7)) + 1j * rng.standard_normal((ncomp, 7, 7, 7))
        pts = rng.uniform(0, 2 * np.pi, (40, 3))
        assert np.allclose(_kernels.trig_sum(coef, kvals, pts), _kernels.trig_sum_numpy(coef, kvals, pts),
                           atol=1e-11)


_SCRIPT = """
import numpy as np
from lagrangian_euler import _kernels
rng = np.random.default_rng(3)
m = rng.standard_normal((3, 3, 50))
print(_kernels.HAS_NUMBA, repr(float(_kernels.det3(m).sum())))
"""


@pytest.mark.parametrize("flag", ["1", ""])
def test_environment_flag_selects_path(flag):
    env = dict(os.environ, LAGRANGIAN_EULER_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
    has, total = out.stdout.split()
    if flag:
        assert has == "False"
    m = np.random.default_rng(3).standard_normal((3, 3, 50))
    assert float(total) == pytest.approx(float(_kernels.det3_numpy(m).sum()), abs=1e-12)

import numpy as np
import pytest

from ucplab import _kernels


@pytest.mark.parametrize("periodic", [True, False])
@pytest.mark.parametrize("shape", [(1, 32, 1), (3, 16, 5)])
def test_second_difference_agree(periodic, shape, rng):
    a = rng.standard_normal(shape)
    np.testing.assert_allclose(_kernels.second_difference_loop(a, periodic),
                               _kernels.second_difference_numpy(a, periodic), atol=1e-13)


def test_ball_kernels_agree(rng):
    abs2 = rng.random(500)
    r = rng.random(500) * 2
    radii = np.linspace(0.1, 1.9, 7)
    np.testing.assert_allclose(_kernels.ball_masses_loop(abs2, r, radii),
                               _kernels.ball_masses_numpy(abs2, r, radii), rtol=1e-12)
    a = _kernels.ball_weighted_sum_loop(abs2, r, 1.0, 1.5, 0.01)
    b = _kernels.ball_weighted_sum_numpy(abs2, r, 1.0, 1.5, 0.01)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert a[1:] == b[1:]


def test_symbol_scan_agree(rng):
    k = np.exp(rng.uniform(0, 5, size=(2000, 3)))
    a = _kernels.symbol_scan_loop(k, 2.6, 1e-12)
    b = _kernels.symbol_scan_numpy(k, 2.6, 1e-12)
    assert a[0] == b[0] == 0
    assert a[1] == pytest.approx(b[1], rel=1e-9, abs=1e-15)


def test_fallback_flag_disables_numba():
    import subprocess
    import sys
    code = "import ucplab._kernels as k; print(k.USING_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={**__import__("os").environ, "UCPLAB_DISABLE_NUMBA": "1"})
    assert out.stdout.strip() == "False"

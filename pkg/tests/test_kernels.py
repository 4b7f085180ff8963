import subprocess
import sys

import numpy as np
import pytest

from distana import kernels
from distana.kernels import numpy_backend

HAS_NUMBA = "numba" in kernels.available_backends()
needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")


def both(fn_name, *args):
    with kernels.use_backend("numpy"):
        a = getattr(kernels.backend(), fn_name)(*args)
    with kernels.use_backend("numba"):
        b = getattr(kernels.backend(), fn_name)(*args)
    return a, b


class TestSelection:
    def test_active_backend_known(self):
        assert kernels.active_backend() in kernels.available_backends()

    def test_use_backend_restores(self):
        before = kernels.active_backend()
        with kernels.use_backend("numpy"):
            assert kernels.active_backend() == "numpy"
        assert kernels.active_backend() == before

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            kernels.set_backend("tpu")

    def test_env_flag_forces_numpy(self):
        code = ("import distana.kernels as k; "
                "print(k.active_backend())")
        out = subprocess.run([sys.executable, "-c", code],
                             env={"PATH": "/usr/bin:/bin", "DISTANA_NUMBA": "0"},
                             capture_output=True, text=True)
        assert out.stdout.strip() == "numpy"

    @needs_numba
    def test_env_flag_forces_numba(self):
        code = ("import distana.kernels as k; "
                "print(k.active_backend())")
        out = subprocess.run([sys.executable, "-c", code],
                             env={"PATH": "/usr/bin:/bin", "DISTANA_NUMBA": "1"},
                             capture_output=True, text=True)
        assert out.stdout.strip() == "numba"

    def test_kernel_names_exist_on_both(self):
        for name in kernels.KERNEL_NAMES:
            assert hasattr(numpy_backend, name)
            if HAS_NUMBA:
                from distana.kernels import numba_backend
                assert hasattr(numba_backend, name)


@needs_numba
class TestParity:
    def test_lstm_cell_forward(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(64, 16)) * 3
        c = rng.normal(size=(64, 4))
        a, b = both("lstm_cell_forward", z, c)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-14, atol=1e-16)

    def test_lstm_cell_backward(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(32, 16))
        c_prev = rng.normal(size=(32, 4))
        h_new, c_new, i, f, g, o, tc = numpy_backend.lstm_cell_forward(z, c_prev)
        dh = rng.normal(size=(32, 4))
        dc = rng.normal(size=(32, 4))
        a, b = both("lstm_cell_backward", dh, dc, c_prev, i, f, g, o, tc)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-13, atol=1e-16)
        np.testing.assert_allclose(a[1], b[1], rtol=1e-13, atol=1e-16)

    def test_gathers_bitwise(self):
        rng = np.random.default_rng(2)
        buf = rng.normal(size=(30, 8))
        idx = rng.integers(-1, 30, size=(8, 30)).astype(np.int64)
        slots = rng.integers(0, 8, size=8).astype(np.int64)
        a, b = both("gather_sum", buf, idx)
        np.testing.assert_array_equal(a, b)
        grad = rng.normal(size=(30, 8))
        a, b = both("gather_sum_backward", grad, idx)
        np.testing.assert_array_equal(a, b)
        a, b = both("gather_slot", buf, idx, slots)
        np.testing.assert_array_equal(a, b)
        grad8 = rng.normal(size=(30, 8))
        a, b = both("gather_slot_backward", grad8, idx, slots, 8)
        np.testing.assert_array_equal(a, b)

    def test_wave_stencil_bitwise(self):
        rng = np.random.default_rng(3)
        prev = rng.normal(size=(16, 16))
        curr = rng.normal(size=(16, 16))
        a, b = both("wave2d_step", prev, curr, 0.09, 0.09)
        np.testing.assert_array_equal(a, b)

    def test_ds1_frame_close(self):
        a, b = both("ds1_frame", 16, 16, 7.25, 8.5, 4.0, 0.25)
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-18)

    def test_sigmoid_branch_form_stable(self):
        x = np.array([-750.0, -35.0, 0.0, 35.0, 750.0])
        s = numpy_backend.sigmoid(x)
        assert np.all(np.isfinite(s))
        assert s[0] == 0.0 and s[-1] == 1.0 and s[2] == 0.5

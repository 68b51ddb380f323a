import numpy as np
import pytest

from tinedge import tensor as T


def finite_difference(build_loss, tensor, eps=1e-4):
    """Central-difference gradient of a scalar-producing closure w.r.t. one tensor."""
    grad = np.zeros_like(tensor.data)
    flat_data = tensor.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat_data.size):
        saved = flat_data[i]
        flat_data[i] = saved + eps
        up = float(build_loss().data)
        flat_data[i] = saved - eps
        down = float(build_loss().data)
        flat_data[i] = saved
        flat_grad[i] = (up - down) / (2.0 * eps)
    return grad


def max_rel_error(analytic, numeric, floor=1e-4):
    """Worst relative disagreement; tiny gradients compare against a floor."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def assert_gradients_match(build_loss, tensors, eps=1e-4, tol=1e-4):
    """Backward pass vs central finite differences for every listed tensor."""
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    T.backward(loss)
    for t in tensors:
        numeric = finite_difference(build_loss, t, eps)
        err = max_rel_error(t.grad, numeric)
        assert err < tol, f"gradient mismatch {err:.3e} (tolerance {tol})"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

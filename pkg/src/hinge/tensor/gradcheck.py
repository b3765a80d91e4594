"""Central-difference gradient checking."""

import numpy as np

from .core import backward, get_tape, no_grad


def numeric_grad(f, params, eps=1e-3):
    """Central differences of scalar ``f()`` w.r.t. each parameter, in float64."""
    out = []
    for p in params:
        g = np.zeros(p.shape, dtype=np.float64)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            with no_grad():
                flat[i] = old + eps
                fp = float(f().data.astype(np.float64).sum())
                flat[i] = old - eps
                fm = float(f().data.astype(np.float64).sum())
            flat[i] = old
            g.reshape(-1)[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def analytic_grad(f, params):
    get_tape().clear()
    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    return [np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64) for p in params]


def rel_error(a, n, tiny=1e-6) -> float:
    """Norm-wise relative error ``max|a - n| / max(max|n|, tiny)``."""
    a, n = np.asarray(a, np.float64), np.asarray(n, np.float64)
    return float(np.abs(a - n).max() / max(np.abs(n).max(), tiny)) if a.size else 0.0


def check_gradients(f, params, eps=1e-3) -> float:
    """Largest relative error over ``params`` between autodiff and central differences."""
    ana = analytic_grad(f, params)
    num = numeric_grad(f, params, eps)
    return max(rel_error(a, n) for a, n in zip(ana, num))

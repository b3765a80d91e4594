"""Element-level and path-level attention plus the prediction head."""

from __future__ import annotations

import json

import numpy as np

from .errors import NonPositiveTemperature, ShapeMismatch
from .tensor import NONLINEARITIES, ParamStore, Tensor, clip, matmul, mul, rowdot, rowmix, sigmoid, softmax_t

PROB_EPS = 1e-7


class ElementAttention:
    """Multi-head attention over the ``M`` positions of each interaction row.

    Head ``n`` scores position ``j`` as ``(h_0 W_T)(h_j W_S)^T`` and takes a
    tempered softmax; the weighted rows go through the per-head ``W_C`` and
    are averaged over heads before the output layer ``sigma(c W_q + b_q)``.
    ``W_T``/``W_S`` are shared across heads unless ``shared_qk`` is false.
    """

    def __init__(self, store: ParamStore, E: int, heads: int = 3, temperature: float = 0.2,
                 nonlinearity: str = "elu", shared_qk: bool = True, prefix: str = "elem"):
        if heads < 1:
            raise ValueError("need at least one head")
        if not temperature > 0:
            raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
        self.E, self.heads, self.temperature = E, heads, temperature
        self.act = NONLINEARITIES[nonlinearity]
        self.shared_qk = shared_qk
        nqk = 1 if shared_qk else heads
        self.W_T = [store.add(f"{prefix}.W_T.{n}", (E, E)) for n in range(nqk)]
        self.W_S = [store.add(f"{prefix}.W_S.{n}", (E, E)) for n in range(nqk)]
        self.W_C = [store.add(f"{prefix}.W_C.{n}", (E, E)) for n in range(heads)]
        self.W_q = store.add(f"{prefix}.W_q", (E, E))
        self.b_q = store.add(f"{prefix}.b_q", (E,), init="zeros")

    def weights(self, x: Tensor) -> list[Tensor]:
        """Per-head attention ``alpha`` with shape ``(R, M)`` each."""
        if x.ndim != 3 or x.shape[2] != self.E or x.shape[1] < 1:
            raise ShapeMismatch(f"element attention expects (R, M, {self.E}), got {x.shape}")
        R, M, E = x.shape
        h0 = x[:, 0, :]
        alphas = []
        for n in range(len(self.W_T)):
            # (h0 W_T)(h_j W_S)^T = h_j . (W_S (h0 W_T)^T)
            u = matmul(matmul(h0, self.W_T[n]), self.W_S[n].transpose())
            scores = rowdot(x, u)
            alphas.append(softmax_t(scores, self.temperature, axis=1))
        if self.shared_qk:
            alphas = alphas * self.heads
        return alphas

    def __call__(self, x: Tensor, return_alpha: bool = False):
        R, M, E = x.shape
        alphas = self.weights(x)
        c = None
        v = None
        for n, alpha in enumerate(alphas):
            if v is None or not self.shared_qk:
                v = rowmix(x, alpha)
            term = matmul(v, self.W_C[n])
            c = term if c is None else c + term
        c = mul(c, 1.0 / self.heads)
        z = self.act(matmul(c, self.W_q) + self.b_q)
        return (z, alphas) if return_alpha else z


class PathAttention:
    """Softmax over all rows of a path-embedding stack, scored by an affine map."""

    def __init__(self, store: ParamStore, E: int, temperature: float = 0.2, prefix: str = "path"):
        if not temperature > 0:
            raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
        self.E, self.temperature = E, temperature
        self.w = store.add(f"{prefix}.w", (E, 1))
        self.b = store.add(f"{prefix}.b", (1,), init="zeros")

    def scores(self, z: Tensor) -> Tensor:
        """``(B, N, E)`` -> ``(B, N)`` raw scores."""
        if z.ndim != 3 or z.shape[2] != self.E or z.shape[1] < 1:
            raise ShapeMismatch(f"path attention expects (B, N, {self.E}), got {z.shape}")
        B, N, _ = z.shape
        return (matmul(z, self.w) + self.b).reshape(B, N)

    def __call__(self, z: Tensor, return_beta: bool = False):
        B, N, E = z.shape
        beta = softmax_t(self.scores(z), self.temperature, axis=1)
        out = matmul(beta.reshape(B, 1, N), z).reshape(B, E)
        return (out, beta) if return_beta else out


class PredictionHead:
    """``sigmoid(W2 act(W1 Z + b1) + b2)`` clamped to ``[1e-7, 1 - 1e-7]``."""

    def __init__(self, store: ParamStore, E: int, nonlinearity: str = "elu", init: str = "xavier",
                 prefix: str = "head"):
        self.act = NONLINEARITIES[nonlinearity]
        self.W1 = store.add(f"{prefix}.W1", (E, E), init=init)
        self.b1 = store.add(f"{prefix}.b1", (E,), init="zeros")
        self.W2 = store.add(f"{prefix}.W2", (E, 1), init=init)
        self.b2 = store.add(f"{prefix}.b2", (1,), init="zeros")

    def logits(self, Z: Tensor) -> Tensor:
        return (matmul(self.act(matmul(Z, self.W1) + self.b1), self.W2) + self.b2).reshape(-1)

    def __call__(self, Z: Tensor) -> Tensor:
        return clip(sigmoid(self.logits(Z)), PROB_EPS, 1.0 - PROB_EPS)


def element_attention(row, att: ElementAttention):
    """Single ``(M, E)`` row -> ``(z, alphas)`` with ``z`` of length ``E``."""
    row = row if isinstance(row, Tensor) else Tensor(row)
    if row.ndim != 2:
        raise ShapeMismatch(f"expected an (M, E) row, got {row.shape}")
    z, alphas = att(row.reshape(1, *row.shape), return_alpha=True)
    return z.reshape(-1), [a.reshape(-1) for a in alphas]


def path_attention(stack, att: PathAttention):
    """``(N, E)`` stack -> ``(Z, beta)``."""
    stack = stack if isinstance(stack, Tensor) else Tensor(stack)
    if stack.ndim != 2:
        raise ShapeMismatch(f"expected an (N, E) stack, got {stack.shape}")
    Z, beta = att(stack.reshape(1, *stack.shape), return_beta=True)
    return Z.reshape(-1), beta.reshape(-1)


def predict(Z, head: PredictionHead) -> Tensor:
    Z = Z if isinstance(Z, Tensor) else Tensor(Z)
    return head(Z.reshape(1, -1) if Z.ndim == 1 else Z)


def write_attention_dump(f, records) -> None:
    """One JSON object per example: ``source``, ``target``, ``beta`` per combination,
    and the top-5 ``alpha`` positions per path row."""
    for rec in records:
        f.write(json.dumps(rec, sort_keys=True) + "\n")


def attention_record(source: int, target: int, beta: np.ndarray, alpha: np.ndarray, K: int) -> dict:
    """``beta`` is ``(K*L,)``, ``alpha`` is ``(K*L, M)`` from head 0."""
    beta = np.asarray(beta, dtype=np.float64)
    L = beta.size // K
    return {
        "source": int(source),
        "target": int(target),
        "beta_per_combination": [float(beta[k * L:(k + 1) * L].sum()) for k in range(K)],
        "beta": [round(float(b), 6) for b in beta],
        "alpha_top5": [np.argsort(-np.asarray(a), kind="stable")[:5].tolist() for a in alpha],
    }

"""Real symmetric embedding of Hermitian matrices.

``X = R + iI`` is represented by ``[[R, -I], [I, R]]``. The map is an injective
*-homomorphism, so it preserves positivity, and ``tr(A X) = tr(E(A) E(X)) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Block


def encode(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    r, i = np.real(x), np.imag(x)
    return np.block([[r, -i], [i, r]])


def decode(y: np.ndarray) -> np.ndarray:
    """Hermitian matrix represented by a real ``2d x 2d`` block (structure averaged)."""
    y = np.asarray(y, dtype=float)
    d = y.shape[0] // 2
    y = 0.5 * (y + y.T)
    r = 0.5 * (y[:d, :d] + y[d:, d:])
    i = 0.5 * (y[d:, :d] - y[:d, d:])
    x = r + 1j * i
    return 0.5 * (x + x.conj().T)


def embed_functional(a: np.ndarray) -> np.ndarray:
    """Real coefficient matrix ``E(A) / 2`` so that ``<E(A)/2, E(X)> = Re tr(A X)``."""
    return 0.5 * encode(0.5 * (a + np.conj(a).T))


@dataclass(frozen=True)
class ComplexEmbedding:
    dim: int
    block: Block

    encode = staticmethod(encode)
    decode = staticmethod(decode)

    def structural_constraints(self) -> list[tuple[np.ndarray, float]]:
        """Linear equalities ``<S, Y> = 0`` that pin ``Y`` to the embedded pattern.

        They impose ``Y11 = Y22`` and ``Y21 = -Y12`` on the symmetric block.
        """
        d = self.dim
        out = []
        for u in range(d):
            for v in range(u, d):
                s = np.zeros((2 * d, 2 * d))
                s[u, v] += 0.5
                s[v, u] += 0.5
                s[d + u, d + v] -= 0.5
                s[d + v, d + u] -= 0.5
                out.append((s, 0.0))
        for u in range(d):
            for v in range(u, d):
                # Y21[u, v] + Y12[u, v] = 0
                s = np.zeros((2 * d, 2 * d))
                s[d + u, v] += 0.5
                s[v, d + u] += 0.5
                s[u, d + v] += 0.5
                s[d + v, u] += 0.5
                out.append((s, 0.0))
        return out


def embed_hermitian(d: int, name: str = "X") -> ComplexEmbedding:
    """Embedding of a ``d x d`` Hermitian variable into a real ``2d x 2d`` block."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return ComplexEmbedding(d, Block(name, 2 * d, complex=False))

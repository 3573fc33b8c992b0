"""Dense operators on tensor-product systems.

Every operator carries a :class:`SystemLayout` naming its tensor factors, so
partial traces, partial transposes and dephasing can be requested by label.
Index convention is row-major: for factors ``(a, b)`` the composite index of
``(i_a, i_b)`` is ``i_a * dim(b) + i_b``. The reference (incoherent) basis of
every factor is its computational basis. All logarithms are base 2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

HERMITICITY_TOL = 1e-10
PSD_TOL = 1e-8
TRACE_TOL = 1e-10
SPECTRAL_TOL = 1e-8
LOG_CUTOFF = 1e-12


class LayoutError(ValueError):
    """Raised when factor labels are unknown or layouts do not match."""


class NotHermitianError(ValueError):
    """Raised when a matrix deviates from Hermiticity beyond tolerance."""


class NotDensityError(ValueError):
    """Raised when an operator is not a valid density operator."""


class Factor(NamedTuple):
    label: str
    dim: int
    side: str | None = None


@dataclass(frozen=True, init=False)
class SystemLayout:
    """Ordered tensor factors ``(label, dim, side)``.

    ``side`` marks the party (``"A"`` or ``"B"``) owning the factor. When it is
    omitted it is taken from the label's leading letter if that letter is A or B.
    """

    factors: tuple[Factor, ...]

    def __init__(self, factors: Iterable = ()):
        out = []
        for f in factors:
            f = Factor(*f)
            if int(f.dim) < 1:
                raise LayoutError(f"factor {f.label!r} has non-positive dimension {f.dim}")
            side = f.side
            if side is None and f.label[:1] in ("A", "B"):
                side = f.label[0]
            if side not in (None, "A", "B"):
                raise LayoutError(f"factor {f.label!r} has invalid side {side!r}")
            out.append(Factor(str(f.label), int(f.dim), side))
        labels = [f.label for f in out]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate factor labels in {labels}")
        object.__setattr__(self, "factors", tuple(out))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def __len__(self):
        return len(self.factors)

    def __add__(self, other: "SystemLayout") -> "SystemLayout":
        return SystemLayout(self.factors + as_layout(other).factors)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown factor label {label!r}; layout has {self.labels}") from None

    def indices(self, labels: Iterable[str]) -> list[int]:
        if isinstance(labels, str):
            labels = [labels]
        return sorted({self.index(l) for l in labels})

    def side_labels(self, side: str) -> list[str]:
        return [f.label for f in self.factors if f.side == side]

    def side_dim(self, side: str) -> int:
        return int(np.prod([f.dim for f in self.factors if f.side == side], dtype=np.int64))

    def keep(self, labels: Iterable[str]) -> "SystemLayout":
        idx = set(self.indices(labels))
        return SystemLayout(f for i, f in enumerate(self.factors) if i in idx)

    def drop(self, labels: Iterable[str]) -> "SystemLayout":
        idx = set(self.indices(labels))
        return SystemLayout(f for i, f in enumerate(self.factors) if i not in idx)

    def renamed(self, suffix: str) -> "SystemLayout":
        return SystemLayout(Factor(f.label + suffix, f.dim, f.side) for f in self.factors)

    def same_shape(self, other: "SystemLayout") -> bool:
        return self.dims == other.dims


def as_layout(spec) -> SystemLayout:
    if isinstance(spec, SystemLayout):
        return spec
    if isinstance(spec, (int, np.integer)):
        return SystemLayout([("S", int(spec), None)])
    return SystemLayout(spec)


def _require_same(a: SystemLayout, b: SystemLayout):
    if a != b:
        raise LayoutError(f"layout mismatch: {a.labels}{a.dims} vs {b.labels}{b.dims}")


# ---------------------------------------------------------------------------
# array kernels; leading two axes are the matrix, trailing axes are a batch
# ---------------------------------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def ptrace_array(arr: np.ndarray, dims: Sequence[int], drop: Sequence[int]) -> np.ndarray:
    """Partial trace of ``arr`` (shape ``(D, D, *batch)``) over factor indices ``drop``."""
    n = len(dims)
    batch = arr.shape[2:]
    t = arr.reshape(tuple(dims) + tuple(dims) + batch)
    rows = list(_LETTERS[:n])
    cols = list(_LETTERS[n:2 * n])
    for k in drop:
        cols[k] = rows[k]
    keep = [k for k in range(n) if k not in set(drop)]
    sub_in = "".join(rows) + "".join(cols) + "..."
    sub_out = "".join(rows[k] for k in keep) + "".join(cols[k] for k in keep) + "..."
    out = np.einsum(f"{sub_in}->{sub_out}", t)
    dk = int(np.prod([dims[k] for k in keep], dtype=np.int64))
    return out.reshape((dk, dk) + batch)


def ptranspose_array(arr: np.ndarray, dims: Sequence[int], on: Sequence[int]) -> np.ndarray:
    n = len(dims)
    batch = arr.shape[2:]
    t = arr.reshape(tuple(dims) + tuple(dims) + batch)
    perm = list(range(t.ndim))
    for k in on:
        perm[k], perm[n + k] = n + k, k
    D = arr.shape[0]
    return np.ascontiguousarray(t.transpose(perm)).reshape((D, D) + batch)


def dephase_mask(dims: Sequence[int], on: Sequence[int]) -> np.ndarray:
    """0/1 mask keeping only entries diagonal on the selected factors."""
    mask = np.ones((1, 1))
    on = set(on)
    for k, d in enumerate(dims):
        m = np.eye(d) if k in on else np.ones((d, d))
        mask = np.einsum("ij,kl->ikjl", mask, m).reshape(mask.shape[0] * d, mask.shape[1] * d)
    return mask


def dephase_array(arr: np.ndarray, dims: Sequence[int], on: Sequence[int]) -> np.ndarray:
    mask = dephase_mask(dims, on)
    return arr * mask.reshape(mask.shape + (1,) * (arr.ndim - 2))


def permute_array(arr: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a square matrix; ``order[k]`` is the old index of new factor k."""
    n = len(dims)
    t = arr.reshape(tuple(dims) * 2)
    t = t.transpose(list(order) + [n + k for k in order])
    return np.ascontiguousarray(t).reshape(arr.shape)


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A Hermitian matrix on the tensor-product space described by ``layout``."""

    layout: SystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        layout = as_layout(self.layout)
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (layout.dim, layout.dim):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dimension {layout.dim}")
        err = hermiticity_error(m)
        if err > HERMITICITY_TOL:
            raise NotHermitianError(f"matrix is not Hermitian (max deviation {err:.3e})")
        m.flags.writeable = False
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def _combine(self, other, sign):
        _require_same(self.layout, other.layout)
        return HermitianOperator(self.layout, self.matrix + sign * other.matrix)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        return HermitianOperator(self.layout, self.matrix * float(scalar))

    __rmul__ = __mul__

    def as_density(self, trace_tol: float = TRACE_TOL) -> "DensityOperator":
        return DensityOperator(self.layout, self.matrix, trace_tol=trace_tol)


@dataclass(frozen=True, eq=False)
class DensityOperator(HermitianOperator):
    """Hermitian, positive semidefinite, unit-trace operator."""

    trace_tol: float = field(default=TRACE_TOL, compare=False, repr=False)

    def __post_init__(self):
        super().__post_init__()
        lo = float(np.linalg.eigvalsh(self.matrix)[0]) if self.dim else 0.0
        if lo < -PSD_TOL:
            raise NotDensityError(f"operator is not positive semidefinite (min eigenvalue {lo:.3e})")
        tr = self.trace()
        if abs(tr - 1.0) > self.trace_tol:
            raise NotDensityError(f"trace {tr!r} differs from 1 by more than {self.trace_tol:g}")

    def is_pure(self, tol: float = 1e-9) -> bool:
        return abs(float(np.real(np.vdot(self.matrix, self.matrix))) - 1.0) <= tol


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


def pure_state(vector, layout) -> DensityOperator:
    """Density operator ``|v><v|`` of a unit vector."""
    v = np.asarray(vector, dtype=np.complex128).ravel()
    n = np.linalg.norm(v)
    if abs(n - 1.0) > 1e-12:
        raise NotDensityError(f"state vector has norm {n!r}, expected 1")
    return DensityOperator(as_layout(layout), np.outer(v, v.conj()))


def basis_density(indices: Sequence[int], layout) -> DensityOperator:
    layout = as_layout(layout)
    v = np.ones(1, dtype=np.complex128)
    for i, d in zip(indices, layout.dims):
        v = np.kron(v, ket(i, d))
    return pure_state(v, layout)


def maximally_mixed(layout) -> DensityOperator:
    layout = as_layout(layout)
    return DensityOperator(layout, np.eye(layout.dim) / layout.dim)


def kron(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Tensor product; the layout is ``a.layout`` followed by ``b.layout``."""
    layout = a.layout + b.layout
    m = np.kron(a.matrix, b.matrix)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(layout, m, trace_tol=max(a.trace_tol, b.trace_tol))
    return HermitianOperator(layout, m)


def _same_kind(x: HermitianOperator, layout: SystemLayout, m: np.ndarray):
    if isinstance(x, DensityOperator):
        return DensityOperator(layout, m, trace_tol=x.trace_tol)
    return HermitianOperator(layout, m)


def partial_trace(x: HermitianOperator, drop: Iterable[str]) -> HermitianOperator:
    """Trace out the factors labelled ``drop``; remaining factors keep their order."""
    idx = x.layout.indices(drop)
    out = ptrace_array(x.matrix, x.layout.dims, idx)
    return _same_kind(x, x.layout.drop(drop), out)


def partial_transpose(x: HermitianOperator, on: Iterable[str]) -> HermitianOperator:
    """Transpose the selected factors in the reference basis (pure entry permutation)."""
    idx = x.layout.indices(on)
    return HermitianOperator(x.layout, ptranspose_array(x.matrix, x.layout.dims, idx))


def dephase(x: HermitianOperator, on: Iterable[str]) -> HermitianOperator:
    """Completely dephase the selected factors in the reference basis."""
    idx = x.layout.indices(on)
    return _same_kind(x, x.layout, dephase_array(x.matrix, x.layout.dims, idx))


def permute(x: HermitianOperator, labels: Sequence[str]) -> HermitianOperator:
    """Reorder factors of ``x`` to follow ``labels``."""
    order = [x.layout.index(l) for l in labels]
    if sorted(order) != list(range(len(x.layout))):
        raise LayoutError(f"{labels} is not a permutation of {x.layout.labels}")
    layout = SystemLayout(x.layout.factors[k] for k in order)
    return _same_kind(x, layout, permute_array(x.matrix, x.layout.dims, order))


def eig_hermitian(x) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors (columns)."""
    m = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
    err = hermiticity_error(m)
    if err > HERMITICITY_TOL * max(1.0, float(np.max(np.abs(m))) if m.size else 1.0):
        raise NotHermitianError(f"matrix is not Hermitian (max deviation {err:.3e})")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w[::-1].copy(), v[:, ::-1].copy()


def _eigvalsh(x) -> np.ndarray:
    m = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def trace_norm(x) -> float:
    """Sum of absolute eigenvalues."""
    return float(np.sum(np.abs(_eigvalsh(x))))


def fidelity_squared(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Squared fidelity ``||sqrt(rho) sqrt(sigma)||_1 ** 2``."""
    _require_same(rho.layout, sigma.layout)
    s = np.linalg.svd(_psd_sqrt(rho.matrix) @ _psd_sqrt(sigma.matrix), compute_uv=False)
    return float(min(1.0, max(0.0, np.sum(s) ** 2)))


def _spectrum_log_terms(w: np.ndarray) -> np.ndarray:
    w = np.where((w < 0) & (w >= -LOG_CUTOFF), 0.0, w)
    w = w[w > LOG_CUTOFF]
    return w


def von_neumann_entropy(rho: DensityOperator) -> float:
    """Entropy ``-tr rho log2 rho`` in bits."""
    w = _spectrum_log_terms(_eigvalsh(rho))
    return float(max(0.0, -np.sum(w * np.log2(w))))


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > LOG_CUTOFF]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def binary_entropy(x: float) -> float:
    return shannon_entropy([x, 1.0 - x])


def relative_entropy(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Quantum relative entropy ``D(rho||sigma)`` in bits; ``inf`` on support violation."""
    _require_same(rho.layout, sigma.layout)
    ws, vs = np.linalg.eigh(sigma.matrix)
    support = ws > LOG_CUTOFF
    kernel = vs[:, ~support]
    if kernel.size:
        leak = float(np.real(np.trace(kernel.conj().T @ rho.matrix @ kernel)))
        if leak > LOG_CUTOFF:
            return float("inf")
    log_sigma = (vs[:, support] * np.log2(ws[support])) @ vs[:, support].conj().T
    cross = float(np.real(np.vdot(rho.matrix, log_sigma)))
    return float(max(0.0, -von_neumann_entropy(rho) - cross))


# ---------------------------------------------------------------------------
# random sampling helpers (used by property tests and demos)
# ---------------------------------------------------------------------------


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(layout, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Random density operator drawn from the induced (Ginibre) measure."""
    layout = as_layout(layout)
    d = layout.dim
    k = d if rank is None else rank
    g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityOperator(layout, m / np.trace(m).real)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + g.conj().T)

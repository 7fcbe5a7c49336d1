"""Dense tensor kernels: unfoldings, mode products, and the Tucker container.

Conventions used throughout the package:

* Tensors are plain ``numpy.ndarray`` objects in float64.
* Modes are 0-based.
* ``unfold(x, n)`` puts mode ``n`` on the rows; its columns enumerate the
  remaining modes with *lower* modes varying fastest, i.e. column index
  ``j = i_0 + i_1 * I_0 + ...`` over the modes other than ``n`` in
  ascending order.  ``fold`` is the exact inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg


def _as_tensor(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        raise ValueError("expected an array with at least one mode")
    return a


def _check_mode(ndim: int, mode: int) -> None:
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for an order-{ndim} tensor")


def unfold(x, mode: int) -> np.ndarray:
    """Matricize ``x`` along ``mode``.

    Returns an ``(I_mode, prod(I_other))`` matrix whose columns enumerate
    the remaining modes with lower modes varying fastest.
    """
    a = _as_tensor(x)
    _check_mode(a.ndim, mode)
    return np.reshape(np.moveaxis(a, mode, 0), (a.shape[mode], -1), order="F")


def fold(m, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild a tensor of ``shape`` from its
    mode-``mode`` unfolding."""
    shape = tuple(int(d) for d in shape)
    _check_mode(len(shape), mode)
    a = np.asarray(m, dtype=np.float64)
    rest = shape[:mode] + shape[mode + 1 :]
    expected = (shape[mode], int(np.prod(rest, dtype=np.int64)))
    if a.shape != expected:
        raise ValueError(f"unfolding has shape {a.shape}, expected {expected}")
    full = np.reshape(a, (shape[mode],) + rest, order="F")
    return np.moveaxis(full, 0, mode)


def mode_product(x, mode: int, matrix) -> np.ndarray:
    """Contract ``matrix`` (``J x I_mode``) against mode ``mode`` of ``x``.

    Equivalent to ``fold(matrix @ unfold(x, mode), mode, new_shape)`` but
    runs as a single tensordot.
    """
    a = _as_tensor(x)
    _check_mode(a.ndim, mode)
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("mode_product expects a matrix")
    if m.shape[1] != a.shape[mode]:
        raise ValueError(
            f"matrix has {m.shape[1]} columns but mode {mode} has extent {a.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(m, a, axes=(1, mode)), 0, mode)


def multi_mode_product(x, matrices: Iterable[tuple[int, np.ndarray]]) -> np.ndarray:
    """Apply several mode products ``(mode, matrix)`` in sequence.

    Modes must be distinct; the result does not depend on the order given.
    """
    a = _as_tensor(x)
    seen: set[int] = set()
    for mode, m in matrices:
        if mode in seen:
            raise ValueError(f"mode {mode} given twice")
        seen.add(mode)
        a = mode_product(a, mode, m)
    return a


def inner(x, y) -> float:
    """Entrywise inner product of two tensors of identical shape."""
    a = _as_tensor(x)
    b = _as_tensor(y)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def fro_norm(x) -> float:
    """Frobenius norm, any order."""
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64).ravel()))


def kronecker(a, b) -> np.ndarray:
    """Kronecker product of two matrices."""
    am = np.asarray(a, dtype=np.float64)
    bm = np.asarray(b, dtype=np.float64)
    if am.ndim != 2 or bm.ndim != 2:
        raise ValueError("kronecker expects two matrices")
    return np.kron(am, bm)


def khatri_rao(a, b) -> np.ndarray:
    """Column-wise Kronecker product; operands must agree in column count."""
    am = np.asarray(a, dtype=np.float64)
    bm = np.asarray(b, dtype=np.float64)
    if am.ndim != 2 or bm.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if am.shape[1] != bm.shape[1]:
        raise ValueError(
            f"column counts differ: {am.shape[1]} vs {bm.shape[1]}"
        )
    return scipy.linalg.khatri_rao(am, bm)


def superdiag(values, order: int) -> np.ndarray:
    """Order-``order`` tensor with ``values`` on the superdiagonal, zero off it."""
    if order < 2:
        raise ValueError("superdiagonal tensors need order >= 2")
    v = np.asarray(values, dtype=np.float64).ravel()
    out = np.zeros((v.size,) * order)
    idx = np.arange(v.size)
    out[(idx,) * order] = v
    return out


@dataclass(frozen=True)
class TuckerFactorization:
    """A core tensor plus one factor matrix per mode.

    ``factors[n]`` has shape ``(I_n, r_n)`` where ``r_n`` is the extent of
    mode ``n`` of ``core``.  The represented tensor is the core contracted
    with every factor along its mode.
    """

    core: np.ndarray
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        core = _as_tensor(self.core)
        factors = tuple(np.asarray(f, dtype=np.float64) for f in self.factors)
        if len(factors) != core.ndim:
            raise ValueError(
                f"core has {core.ndim} modes but {len(factors)} factors given"
            )
        for n, f in enumerate(factors):
            if f.ndim != 2:
                raise ValueError(f"factor {n} is not a matrix")
            if f.shape[1] != core.shape[n]:
                raise ValueError(
                    f"factor {n} has {f.shape[1]} columns but core mode {n} "
                    f"has extent {core.shape[n]}"
                )
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def rank(self) -> tuple[int, ...]:
        return self.core.shape

    def to_dense(self) -> np.ndarray:
        return tucker_to_dense(self)


def tucker_to_dense(t: TuckerFactorization) -> np.ndarray:
    """Expand a Tucker factorization to a dense tensor."""
    return multi_mode_product(t.core, list(enumerate(t.factors)))

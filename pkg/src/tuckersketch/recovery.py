"""Reconstruction of low-Tucker-rank approximations.

Two routes from a sketch:

* ``two_pass_recover`` re-reads the tensor once: orthonormal bases ``Q_n``
  come from QR of the factor sketches, the core is ``X`` contracted by
  ``Q_n^T`` on every mode (so the reconstruction is the orthogonal
  projection of ``X`` onto the tensor product of the spans).
* ``one_pass_recover`` touches only the sketch: it solves one small least
  squares problem per mode to undo the core maps,
  ``W = H x_n pinv(Phi_n^T Q_n)``, without ever materializing a
  pseudoinverse.

Both return a rank-``k`` factorization; ``fixed_rank_truncate`` compresses
that to a target rank ``r`` by running HOOI (or ST-HOSVD) on the small core
and absorbing the small factors, ``P_n = Q_n U_n``.

``hosvd``, ``st_hosvd`` and ``hooi`` also work directly on dense tensors
and double as the comparison baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .drm import make_drm
from .sketch import TuckerSketch
from .tensor import (
    TuckerFactorization,
    fold,
    fro_norm,
    mode_product,
    multi_mode_product,
    unfold,
)

_QR_DIAG_RTOL = 1e-12
_COND_LIMIT = 1e12


class RankInfeasibleError(ValueError):
    """Requested rank exceeds what the data or sketch can support."""


class RankDeficientCoreError(RuntimeError):
    """The one-pass core solve met a numerically rank-deficient system."""


@dataclass(frozen=True)
class FactorBases:
    """Orthonormal bases spanning the factor sketches, one per mode.

    ``degenerate_modes`` lists modes whose sketch was numerically rank
    deficient; the basis is still orthonormal (Householder QR) and still
    spans the sketch columns, but its trailing directions are arbitrary.
    """

    matrices: tuple[np.ndarray, ...]
    degenerate_modes: tuple[int, ...]


@dataclass(frozen=True)
class RecoveryReport:
    """What a recovery did and how well its internal solves went."""

    factorization: TuckerFactorization
    passes: int
    degenerate_modes: tuple[int, ...]
    core_solver_residuals: tuple[float, ...] = ()
    iterations: int = 0


def factor_bases(sk: TuckerSketch) -> FactorBases:
    """Orthonormalize each factor sketch by QR, flagging rank deficiency."""
    mats = []
    degenerate = []
    for n, v in enumerate(sk.factor_sketches):
        q, r = np.linalg.qr(v, mode="reduced")
        scale = np.linalg.norm(v)
        diag = np.abs(np.diag(r))
        if scale == 0.0 or np.any(diag <= _QR_DIAG_RTOL * scale):
            degenerate.append(n)
        mats.append(q)
    return FactorBases(matrices=tuple(mats), degenerate_modes=tuple(degenerate))


def two_pass_recover(x, sk: TuckerSketch) -> RecoveryReport:
    """Rank-``k`` recovery using one more pass over the tensor itself."""
    a = np.asarray(x, dtype=np.float64)
    if a.shape != sk.shape:
        raise ValueError(f"tensor has shape {a.shape} but sketch covers {sk.shape}")
    bases = factor_bases(sk)
    core = multi_mode_product(a, [(n, q.T) for n, q in enumerate(bases.matrices)])
    fact = TuckerFactorization(core=core, factors=bases.matrices)
    return RecoveryReport(
        factorization=fact,
        passes=2,
        degenerate_modes=bases.degenerate_modes,
    )


def one_pass_recover(sk: TuckerSketch) -> RecoveryReport:
    """Rank-``k`` recovery from the sketch alone.

    Regenerates the core maps from the sketch parameters, then for each mode
    solves ``(Phi_n^T Q_n) W = H`` in the least squares sense on the
    unfolded core.  Raises :class:`RankDeficientCoreError` when a system is
    numerically singular (condition number past 1e12).
    """
    bases = factor_bases(sk)
    core = sk.core_sketch
    residuals = []
    for n, q in enumerate(bases.matrices):
        phi = make_drm(sk.params.phi_spec(sk.shape, n))
        z = phi.apply_right(q.T).T  # (s_n, k_n)
        rhs = unfold(core, n)
        sol, _, rank, sv = scipy.linalg.lstsq(z, rhs, lapack_driver="gelsd")
        k_n = sk.params.k[n]
        if rank < k_n or sv[k_n - 1] * _COND_LIMIT < sv[0]:
            raise RankDeficientCoreError(
                f"core solve in mode {n} is rank deficient "
                f"(rank {rank} of {k_n}); enlarge s_{n} or reseed"
            )
        residuals.append(float(np.linalg.norm(z @ sol - rhs)))
        new_shape = core.shape[:n] + (k_n,) + core.shape[n + 1 :]
        core = fold(sol, n, new_shape)
    fact = TuckerFactorization(core=core, factors=bases.matrices)
    return RecoveryReport(
        factorization=fact,
        passes=1,
        degenerate_modes=bases.degenerate_modes,
        core_solver_residuals=tuple(residuals),
    )


def _complete_columns(u: np.ndarray, r: int) -> np.ndarray:
    """Pad orthonormal columns up to ``r`` with re-orthogonalized canonical
    vectors (deterministic)."""
    rows = u.shape[0]
    cols = [u]
    have = u.shape[1]
    for j in range(rows):
        if have == r:
            break
        v = np.zeros(rows)
        v[j] = 1.0
        basis = np.hstack(cols)
        v -= basis @ (basis.T @ v)
        v -= basis @ (basis.T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            cols.append((v / norm)[:, None])
            have += 1
    if have < r:
        raise RankInfeasibleError(f"cannot build {r} orthonormal columns in R^{rows}")
    return np.hstack(cols)


def _leading_left_singular(m: np.ndarray, r: int) -> np.ndarray:
    """First ``r`` left singular vectors, sign-fixed for determinism."""
    if r > m.shape[0]:
        raise RankInfeasibleError(
            f"rank {r} exceeds the mode extent {m.shape[0]}"
        )
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    u = u[:, : min(r, u.shape[1])]
    top = np.abs(u).argmax(axis=0)
    flip = np.where(u[top, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    u = u * flip
    if u.shape[1] < r:
        u = _complete_columns(u, r)
    return u


def _check_rank(rank, order: int, limits, what: str) -> tuple[int, ...]:
    r = tuple(int(v) for v in np.atleast_1d(rank))
    if len(r) == 1 and order > 1:
        r = r * order
    if len(r) != order:
        raise ValueError(f"rank has {len(r)} entries for an order-{order} tensor")
    if any(v < 1 for v in r):
        raise RankInfeasibleError("all rank entries must be >= 1")
    for n, (v, cap) in enumerate(zip(r, limits)):
        if v > cap:
            raise RankInfeasibleError(
                f"rank {v} in mode {n} exceeds the available extent {cap} ({what})"
            )
    return r


def hosvd(x, rank) -> TuckerFactorization:
    """Higher-order SVD: per-mode leading singular vectors, one contraction."""
    a = np.asarray(x, dtype=np.float64)
    r = _check_rank(rank, a.ndim, a.shape, "tensor extent")
    factors = tuple(_leading_left_singular(unfold(a, n), r[n]) for n in range(a.ndim))
    core = multi_mode_product(a, [(n, u.T) for n, u in enumerate(factors)])
    return TuckerFactorization(core=core, factors=factors)


def st_hosvd(x, rank) -> TuckerFactorization:
    """Sequentially truncated HOSVD: shrink the tensor after each mode."""
    a = np.asarray(x, dtype=np.float64)
    r = _check_rank(rank, a.ndim, a.shape, "tensor extent")
    factors = []
    cur = a
    for n in range(a.ndim):
        u = _leading_left_singular(unfold(cur, n), r[n])
        factors.append(u)
        cur = mode_product(cur, n, u.T)
    return TuckerFactorization(core=cur, factors=tuple(factors))


def hooi(
    x,
    rank,
    max_iters: int = 50,
    tol: float = 1e-6,
    return_objectives: bool = False,
):
    """Higher-order orthogonal iteration from an HOSVD start.

    Alternates per-mode subspace updates; each sweep cannot increase the
    reconstruction error.  Stops when a sweep improves the error by less
    than ``tol * ||x||`` or after ``max_iters`` sweeps.  With
    ``return_objectives=True`` also returns the error after every sweep.
    """
    a = np.asarray(x, dtype=np.float64)
    r = _check_rank(rank, a.ndim, a.shape, "tensor extent")
    factors = list(hosvd(a, r).factors)
    norm_x = fro_norm(a)
    objectives: list[float] = []
    prev = None
    core = None
    for _ in range(max_iters):
        for n in range(a.ndim):
            partial = multi_mode_product(
                a, [(m, factors[m].T) for m in range(a.ndim) if m != n]
            )
            factors[n] = _leading_left_singular(unfold(partial, n), r[n])
        core = multi_mode_product(a, [(n, u.T) for n, u in enumerate(factors)])
        # With orthonormal factors the error splits off the captured energy.
        gap = max(norm_x**2 - fro_norm(core) ** 2, 0.0)
        obj = float(np.sqrt(gap))
        objectives.append(obj)
        if prev is not None and prev - obj <= tol * max(norm_x, 1e-300):
            break
        prev = obj
    if core is None:  # max_iters == 0: fall back to the start point
        core = multi_mode_product(a, [(n, u.T) for n, u in enumerate(factors)])
    fact = TuckerFactorization(core=core, factors=tuple(factors))
    if return_objectives:
        return fact, objectives
    return fact


_FIXED_RANK_METHODS = ("hooi", "st_hosvd", "hosvd")


def fixed_rank_truncate(
    t: TuckerFactorization,
    rank,
    method: str = "hooi",
    max_iters: int = 50,
    tol: float = 1e-6,
) -> TuckerFactorization:
    """Compress a factorization to a fixed smaller Tucker rank.

    Runs the chosen method on the small core only, then absorbs its factors
    into the existing ones; the large tensor is never formed.
    """
    if method not in _FIXED_RANK_METHODS:
        raise ValueError(f"method must be one of {_FIXED_RANK_METHODS}")
    r = _check_rank(rank, t.core.ndim, t.core.shape, "core extent")
    if method == "hooi":
        inner = hooi(t.core, r, max_iters=max_iters, tol=tol)
    elif method == "st_hosvd":
        inner = st_hosvd(t.core, r)
    else:
        inner = hosvd(t.core, r)
    outer = tuple(f @ u for f, u in zip(t.factors, inner.factors))
    return TuckerFactorization(core=inner.core, factors=outer)

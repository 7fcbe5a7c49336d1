"""Linear sketches of tensors: build, update, merge.

A sketch of a tensor ``X`` with order ``N`` holds one factor sketch per
mode, ``V_n = unfold(X, n) @ Omega_n`` of shape ``(I_n, k_n)``, plus a core
sketch ``H = X`` contracted on every mode ``n`` by ``Phi_n^T`` with shape
``(s_1, ..., s_N)``.  All maps are regenerated from ``(master_seed, role,
mode)``, so the sketch is a pure linear function of ``X`` and sketches of
shards simply add.

Updates never densify structured maps: slab updates restrict realized dense
maps by row blocks and TRP maps by factor slices.  The one exception is an
SSRFT map, which has no input-side row restriction; slab updates under
ssrft zero-pad the slab into a full tensor first (correct, but the update
then costs full-tensor memory).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .drm import DrmSpec, apply_trp_factors, make_drm
from .tensor import fold, mode_product, unfold

_ROLE_OMEGA = 101
_ROLE_PHI = 202

_FACTOR_KINDS = ("gaussian", "sparse_sign", "ssrft", "trp")
_CORE_KINDS = ("gaussian", "sparse_sign", "ssrft")
_DENSE_KINDS = ("gaussian", "sparse_sign")


class ParamsMismatchError(ValueError):
    """Raised when combining sketches whose parameters differ."""


@dataclass(frozen=True)
class SketchParams:
    """Sketch sizes, map kinds, and the master seed they all derive from.

    ``k[n]`` is the factor-sketch width for mode ``n`` and ``s[n]`` the core
    sketch extent; recovery needs ``s_n >= k_n`` and the one-pass error
    guarantee wants ``s_n > 2 k_n`` (a warning, not an error, below that).
    """

    k: tuple[int, ...]
    s: tuple[int, ...]
    master_seed: int
    omega_kind: str = "gaussian"
    phi_kind: str = "gaussian"
    density: float = 0.1

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        s = tuple(int(v) for v in self.s)
        if not k:
            raise ValueError("at least one mode is required")
        if len(k) != len(s):
            raise ValueError(f"k has {len(k)} modes but s has {len(s)}")
        if any(v < 1 for v in k):
            raise ValueError("all k_n must be >= 1")
        if any(sv < kv for kv, sv in zip(k, s)):
            raise ValueError("core sketch needs s_n >= k_n in every mode")
        if self.omega_kind not in _FACTOR_KINDS:
            raise ValueError(f"unknown factor map kind {self.omega_kind!r}")
        if self.phi_kind not in _CORE_KINDS:
            raise ValueError(
                f"core map kind must be one of {_CORE_KINDS}, got {self.phi_kind!r}"
                " (a single-mode trp degenerates to its lone factor)"
            )
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "master_seed", int(self.master_seed))
        if any(sv <= 2 * kv for kv, sv in zip(k, s)):
            warnings.warn(
                "s_n <= 2 k_n in some mode: the sketch still works, but the "
                "one-pass error guarantee needs s_n > 2 k_n",
                UserWarning,
                stacklevel=3,
            )

    @property
    def order(self) -> int:
        return len(self.k)

    @classmethod
    def for_rank(
        cls, rank, master_seed: int, order: int | None = None, **kwargs
    ) -> "SketchParams":
        """Default sizing for a target Tucker rank: k = 2r + 1, s = 2k + 1.

        ``rank`` may be per-mode or a scalar; a scalar needs ``order``.
        """
        r = tuple(int(v) for v in np.atleast_1d(rank))
        if len(r) == 1 and order is not None:
            r = r * int(order)
        k = tuple(2 * v + 1 for v in r)
        s = tuple(2 * v + 1 for v in k)
        return cls(k=k, s=s, master_seed=master_seed, **kwargs)

    def _density_for(self, kind: str) -> float | None:
        return self.density if kind == "sparse_sign" else None

    def omega_spec(self, shape: tuple[int, ...], mode: int) -> DrmSpec:
        """Spec of the factor-sketch map for one mode of a tensor of ``shape``."""
        rest = tuple(d for m, d in enumerate(shape) if m != mode)
        in_dim = int(np.prod(rest, dtype=np.int64))
        return DrmSpec(
            kind=self.omega_kind,
            in_dim=in_dim,
            out_dim=self.k[mode],
            seed=rng.mix64(self.master_seed, _ROLE_OMEGA, mode),
            density=self._density_for(self.omega_kind),
            mode_dims=rest if self.omega_kind == "trp" else None,
        )

    def phi_spec(self, shape: tuple[int, ...], mode: int) -> DrmSpec:
        """Spec of the core-sketch map for one mode."""
        return DrmSpec(
            kind=self.phi_kind,
            in_dim=shape[mode],
            out_dim=self.s[mode],
            seed=rng.mix64(self.master_seed, _ROLE_PHI, mode),
            density=self._density_for(self.phi_kind),
        )


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TuckerSketch:
    """Immutable sketch state: factor sketches plus the core sketch."""

    params: SketchParams
    shape: tuple[int, ...]
    factor_sketches: tuple[np.ndarray, ...]
    core_sketch: np.ndarray

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        if len(shape) != self.params.order:
            raise ValueError("shape order does not match params")
        vs = tuple(np.asarray(v, dtype=np.float64) for v in self.factor_sketches)
        if len(vs) != self.params.order:
            raise ValueError("one factor sketch per mode is required")
        for n, v in enumerate(vs):
            want = (shape[n], self.params.k[n])
            if v.shape != want:
                raise ValueError(f"factor sketch {n} has shape {v.shape}, expected {want}")
        h = np.asarray(self.core_sketch, dtype=np.float64)
        if h.shape != self.params.s:
            raise ValueError(f"core sketch has shape {h.shape}, expected {self.params.s}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "factor_sketches", tuple(_freeze(v) for v in vs))
        object.__setattr__(self, "core_sketch", _freeze(h))


class StreamingSketcher:
    """Accumulates a sketch from a stream of linear updates in one pass.

    Working state is just the sketch arrays and the realized maps; the
    tensor itself is never stored.  ``peak_aux_scalars`` reports (an
    estimate of) the largest temporary allocated by any single update, for
    memory-contract checks.
    """

    def __init__(self, shape, params: SketchParams, *, init: TuckerSketch | None = None):
        shape = tuple(int(d) for d in shape)
        if len(shape) != params.order:
            raise ValueError(
                f"params describe {params.order} modes but shape has {len(shape)}"
            )
        if any(d < 1 for d in shape):
            raise ValueError("all extents must be >= 1")
        for n, (d, kn) in enumerate(zip(shape, params.k)):
            if kn > d:
                raise ValueError(
                    f"factor sketch width k_{n}={kn} exceeds the mode extent {d}"
                )
        self.shape = shape
        self.params = params
        self._omegas = [make_drm(params.omega_spec(shape, n)) for n in range(len(shape))]
        self._phis = [make_drm(params.phi_spec(shape, n)) for n in range(len(shape))]
        if init is not None:
            if init.params != params or init.shape != shape:
                raise ParamsMismatchError(
                    "initial sketch was built under different parameters or shape"
                )
            self._v = [v.copy() for v in init.factor_sketches]
            self._h = init.core_sketch.copy()
        else:
            self._v = [np.zeros((shape[n], params.k[n])) for n in range(len(shape))]
            self._h = np.zeros(params.s)
        self.peak_aux_scalars = 0

    def _note_aux(self, count: int) -> None:
        if count > self.peak_aux_scalars:
            self.peak_aux_scalars = int(count)

    def _scale(self, theta1: float) -> None:
        if theta1 != 1.0:
            for v in self._v:
                v *= theta1
            self._h *= theta1

    def _contract_phi_mode(self, t: np.ndarray, mode: int, phi) -> np.ndarray:
        """Contract ``Phi_mode^T`` against mode ``mode`` of ``t``."""
        m = unfold(t, mode)
        out = phi.apply_right(m.T).T
        new_shape = t.shape[:mode] + (out.shape[0],) + t.shape[mode + 1 :]
        return fold(out, mode, new_shape)

    def update_dense(self, f, theta1: float = 1.0, theta2: float = 1.0) -> None:
        """Fold the linear update ``X <- theta1 * X + theta2 * f`` into the sketch."""
        a = np.asarray(f, dtype=np.float64)
        if a.shape != self.shape:
            raise ValueError(f"update has shape {a.shape}, expected {self.shape}")
        self._scale(theta1)
        for n, om in enumerate(self._omegas):
            self._v[n] += theta2 * om.apply_right(unfold(a, n))
        t = a
        for n, phi in enumerate(self._phis):
            t = self._contract_phi_mode(t, n, phi)
        self._h += theta2 * t
        self._note_aux(2 * a.size)

    def update_slab(
        self, mode: int, offset: int, slab, theta1: float = 1.0, theta2: float = 1.0
    ) -> None:
        """Fold in an update supported on ``offset:offset+c`` along one mode.

        ``slab`` carries full extents on every other mode.  Equivalent to
        ``update_dense`` on the zero-padded tensor, at slab cost (except
        under ssrft maps, which force the zero-padded path).
        """
        a = np.asarray(slab, dtype=np.float64)
        n_modes = len(self.shape)
        if not 0 <= mode < n_modes:
            raise ValueError(f"mode {mode} out of range")
        if a.ndim != n_modes:
            raise ValueError(f"slab has order {a.ndim}, expected {n_modes}")
        c = a.shape[mode]
        for m in range(n_modes):
            if m != mode and a.shape[m] != self.shape[m]:
                raise ValueError(
                    f"slab extent {a.shape[m]} in mode {m} does not match {self.shape[m]}"
                )
        if c < 1 or offset < 0 or offset + c > self.shape[mode]:
            raise ValueError(
                f"rows {offset}:{offset + c} fall outside extent {self.shape[mode]}"
            )

        if self.params.omega_kind == "ssrft" or self.params.phi_kind == "ssrft":
            full = np.zeros(self.shape)
            sel = tuple(
                slice(offset, offset + c) if m == mode else slice(None)
                for m in range(n_modes)
            )
            full[sel] = a
            self.update_dense(full, theta1, theta2)
            return

        self._scale(theta1)

        # Factor sketch of the slab's own mode: the map acts on the other
        # modes, which the slab covers in full.
        self._v[mode][offset : offset + c] += theta2 * self._omegas[mode].apply_right(
            unfold(a, mode)
        )

        # Other modes: restrict the map to the rows whose multi-index hits
        # the slab along `mode`.
        for n in range(n_modes):
            if n == mode:
                continue
            self._v[n] += theta2 * self._apply_omega_restricted(n, mode, offset, c, a)

        # Core sketch: full maps on every mode except `mode`, then the row
        # block of Phi_mode.
        t = a
        for m in range(n_modes):
            if m != mode:
                t = self._contract_phi_mode(t, m, self._phis[m])
        block = self._phis[mode].entries[offset : offset + c]
        self._h += theta2 * mode_product(t, mode, block.T)
        self._note_aux(2 * a.size)

    def _apply_omega_restricted(
        self, n: int, mode: int, offset: int, c: int, slab: np.ndarray
    ) -> np.ndarray:
        """``unfold(slab, n) @ Omega_n[rows]`` where rows are the flat indices
        whose ``mode`` component lies in ``offset:offset+c``."""
        om = self._omegas[n]
        rest = tuple(m for m in range(len(self.shape)) if m != n)
        axis_pos = rest.index(mode)
        rows = unfold(slab, n)
        if self.params.omega_kind in _DENSE_KINDS:
            dims = tuple(self.shape[m] for m in rest)
            grid = om.entries.reshape((*dims, self.params.k[n]), order="F")
            sel = tuple(
                slice(offset, offset + c) if j == axis_pos else slice(None)
                for j in range(len(dims))
            )
            restricted = grid[sel].reshape((-1, self.params.k[n]), order="F")
            return rows @ restricted
        # trp: slice the one factor that lives on `mode`
        factors = list(om.factors)
        factors[axis_pos] = factors[axis_pos][offset : offset + c]
        return apply_trp_factors(rows, tuple(factors))

    def sketch(self) -> TuckerSketch:
        """Snapshot the accumulated state as an immutable sketch."""
        return TuckerSketch(
            params=self.params,
            shape=self.shape,
            factor_sketches=tuple(v.copy() for v in self._v),
            core_sketch=self._h.copy(),
        )


def tucker_sketch(x, params: SketchParams) -> TuckerSketch:
    """Sketch a fully materialized tensor in one shot."""
    a = np.asarray(x, dtype=np.float64)
    sk = StreamingSketcher(a.shape, params)
    sk.update_dense(a)
    return sk.sketch()


def zero_sketch(shape, params: SketchParams) -> TuckerSketch:
    """The sketch of the zero tensor (the additive identity for merges)."""
    return StreamingSketcher(shape, params).sketch()


def sketch_linear_update(
    sk: TuckerSketch, f, theta1: float = 1.0, theta2: float = 1.0
) -> TuckerSketch:
    """Sketch of ``theta1 * X + theta2 * f`` given the sketch of ``X``."""
    acc = StreamingSketcher(sk.shape, sk.params, init=sk)
    acc.update_dense(f, theta1, theta2)
    return acc.sketch()


def sketch_slab_update(
    sk: TuckerSketch,
    mode: int,
    offset: int,
    slab,
    theta1: float = 1.0,
    theta2: float = 1.0,
) -> TuckerSketch:
    """Slab-supported variant of :func:`sketch_linear_update`."""
    acc = StreamingSketcher(sk.shape, sk.params, init=sk)
    acc.update_slab(mode, offset, slab, theta1, theta2)
    return acc.sketch()


def sketch_merge(a: TuckerSketch, b: TuckerSketch) -> TuckerSketch:
    """Combine sketches of shards: valid only under identical params and shape."""
    if a.params != b.params:
        raise ParamsMismatchError(
            "sketches were built under different parameters; refusing to merge"
        )
    if a.shape != b.shape:
        raise ParamsMismatchError(
            f"sketches cover different shapes {a.shape} vs {b.shape}"
        )
    return TuckerSketch(
        params=a.params,
        shape=a.shape,
        factor_sketches=tuple(
            va + vb for va, vb in zip(a.factor_sketches, b.factor_sketches)
        ),
        core_sketch=a.core_sketch + b.core_sketch,
    )


def sketch_storage(sk: TuckerSketch) -> int:
    """Scalar count of the sketch state: sum_n I_n k_n + prod_n s_n."""
    factor = sum(v.size for v in sk.factor_sketches)
    return int(factor + sk.core_sketch.size)

"""Pressure-centred Vanka smoothers: multiplicative, additive, restricted additive.

Every free pressure DoF owns one patch made of the velocity DoFs coupled to
it in the pressure row of the matrix plus the pressure itself. Patch data is
stored packed (CSR-like offsets) so the compiled kernels can walk it without
Python overhead:

* ``sd_ptr``/``sd_dofs``: global DoFs of each patch, velocities ascending,
  the centre pressure last;
* ``rs_ptr``/``rs_global``/``rs_local``: the restricted set (centre u_x, u_y
  and p where free), global and patch-local indices;
* ``blk_ptr``/``blocks``/``piv``: row-major dense LU factors per patch;
* ``inv_ptr``/``inv``: for the restricted variant only, the rows of the
  inverse patch matrix that belong to the restricted set.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .linalg import PIVOT_RTOL, DenseLU, SingularLocalSystem, extract_submatrix, lu_factor


class Variant(str, Enum):
    MV = "mv"
    AV = "av"
    RAV = "rav"


DEFAULT_DAMPING = {Variant.MV: 0.66, Variant.AV: 0.1, Variant.RAV: 0.66}


@dataclass(frozen=True)
class SmootherConfig:
    variant: Variant = Variant.MV
    damping: float = None
    sweep_order: str = "ascending"  # MV only; or "descending"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.damping is None:
            object.__setattr__(self, "damping", DEFAULT_DAMPING[self.variant])
        if not 0.0 < self.damping < 2.0:
            raise ValueError(f"damping must lie in (0, 2), got {self.damping}")
        if self.sweep_order not in ("ascending", "descending"):
            raise ValueError(f"unknown sweep order {self.sweep_order!r}")


@dataclass(frozen=True)
class VankaSubdomain:
    """View of one patch; ``restricted_local`` indexes into ``dofs``."""

    index: int
    center_pressure_dof: int
    dofs: np.ndarray
    restricted_dofs: np.ndarray
    restricted_local: np.ndarray

    @property
    def size(self):
        return len(self.dofs)


@dataclass
class FlopCounter:
    residual: int = 0
    patch: int = 0
    applications: int = 0
    patch_applications: int = 0

    def add(self, counts, n_patches):
        self.residual += int(counts[0])
        self.patch += int(counts[1])
        self.applications += 1
        self.patch_applications += n_patches

    @property
    def patch_per_subdomain(self):
        return self.patch / self.patch_applications if self.patch_applications else 0.0


def _ptr(sizes):
    out = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=out[1:])
    return out


@dataclass
class VankaPatches:
    """All patches of one level, packed for the kernels."""

    n_dofs: int
    sd_ptr: np.ndarray
    sd_dofs: np.ndarray
    rs_ptr: np.ndarray
    rs_global: np.ndarray
    rs_local: np.ndarray
    variant: Variant = None
    blk_ptr: np.ndarray = None
    blocks: np.ndarray = None
    piv: np.ndarray = None
    inv_ptr: np.ndarray = None
    inv: np.ndarray = None
    _scratch: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_lists(cls, n_dofs, dofs, restricted):
        """Build from explicit per-patch DoF lists; ``restricted`` entries must be in ``dofs``."""
        sizes = [len(d) for d in dofs]
        if any(s == 0 for s in sizes):
            raise ValueError("empty patch")
        rs_local = []
        for d, r in zip(dofs, restricted):
            where = {int(g): k for k, g in enumerate(d)}
            rs_local.append([where[int(g)] for g in r])
        return cls(
            n_dofs,
            _ptr(sizes),
            np.concatenate([np.asarray(d, dtype=np.int64) for d in dofs]),
            _ptr([len(r) for r in restricted]),
            np.concatenate([np.asarray(r, dtype=np.int64) for r in restricted]),
            np.concatenate([np.asarray(r, dtype=np.int64) for r in rs_local]),
        )

    def __len__(self):
        return len(self.sd_ptr) - 1

    def __getitem__(self, s):
        if not -len(self) <= s < len(self):
            raise IndexError(s)
        s %= len(self)
        d = self.sd_dofs[self.sd_ptr[s]:self.sd_ptr[s + 1]]
        lo, hi = self.rs_ptr[s], self.rs_ptr[s + 1]
        return VankaSubdomain(s, int(d[-1]), d, self.rs_global[lo:hi], self.rs_local[lo:hi])

    def __iter__(self):
        return (self[s] for s in range(len(self)))

    @property
    def sizes(self):
        return np.diff(self.sd_ptr)

    @property
    def restricted_sizes(self):
        return np.diff(self.rs_ptr)

    def lu(self, s):
        """DenseLU of patch ``s`` (MV/AV factorizations only)."""
        if self.blocks is None:
            raise RuntimeError("patches carry no LU factors")
        n = self.sizes[s]
        a = self.blocks[self.blk_ptr[s]:self.blk_ptr[s] + n * n].reshape(n, n)
        return DenseLU(a.copy(), self.piv[self.sd_ptr[s]:self.sd_ptr[s + 1]].copy())

    def inverse_rows(self, s):
        """Stored rows of the inverse patch matrix for patch ``s`` (RAV only)."""
        if self.inv is None:
            raise RuntimeError("patches carry no inverse rows")
        n, m = self.sizes[s], self.restricted_sizes[s]
        return self.inv[self.inv_ptr[s]:self.inv_ptr[s] + m * n].reshape(m, n).copy()

    def stored_values(self):
        """Number of floating-point values kept after setup."""
        if self.inv is not None:
            return len(self.inv)
        return 0 if self.blocks is None else len(self.blocks)

    def scratch(self, name):
        buf = self._scratch.get(name)
        if buf is None:
            buf = self._scratch[name] = np.empty(self.n_dofs)
        return buf


def build_subdomains(system):
    """One patch per free pressure DoF, from the pressure rows of the matrix pattern."""
    L, dm = system.L, system.dof_map
    n_u, n = dm.n_u, dm.n
    lo, hi = L.indptr[n_u], L.indptr[n]
    cols = L.indices[lo:hi]
    rows = np.repeat(np.arange(n_u, n), np.diff(L.indptr[n_u:]))
    vel = cols < n_u
    nvel = np.bincount(rows[vel] - n_u, minlength=dm.n_p)
    if np.any(nvel == 0):
        bad = int(n_u + np.flatnonzero(nvel == 0)[0])
        raise ValueError(f"pressure DoF {bad} couples to no velocity DoF")
    sizes = nvel + 1
    sd_ptr = _ptr(sizes)
    sd_dofs = np.empty(sd_ptr[-1], dtype=np.int64)
    center_pos = sd_ptr[1:] - 1
    is_center = np.zeros(len(sd_dofs), dtype=bool)
    is_center[center_pos] = True
    sd_dofs[~is_center] = cols[vel]
    sd_dofs[center_pos] = np.arange(n_u, n)

    # restricted set: centre vertex velocities (if free) and the pressure
    p = dm.p
    vert = np.empty(dm.n_p, dtype=np.int64)
    vert[p[p >= 0] - n_u] = np.flatnonzero(p >= 0)
    cand = np.column_stack([dm.ux[vert], dm.uy[vert], np.arange(n_u, n)])
    keep = cand >= 0
    rs_ptr = _ptr(keep.sum(axis=1))
    rs_global = cand[keep]
    owner = np.repeat(np.arange(dm.n_p), keep.sum(axis=1))
    # patch DoFs are sorted within each patch (pressure last), so the
    # (patch, dof) keys are globally sorted and searchsorted finds positions
    sd_owner = np.repeat(np.arange(dm.n_p), sizes)
    keys = sd_owner * n + sd_dofs
    want = owner * n + rs_global
    hit = np.searchsorted(keys, want)
    if np.any(hit >= len(keys)) or np.any(keys[np.minimum(hit, len(keys) - 1)] != want):
        raise ValueError("a centre velocity DoF is missing from its own patch")
    rs_local = hit - sd_ptr[owner]
    return VankaPatches(n, sd_ptr, sd_dofs, rs_ptr, rs_global, rs_local)


def _raise_singular(L, patches, s):
    d = patches[s].dofs
    try:
        lu_factor(extract_submatrix(L, d, d), subdomain=s)
    except SingularLocalSystem:
        raise
    raise SingularLocalSystem(f"zero pivot in subdomain {s}", s)


def factorize_subdomains(system, patches, variant, backend=None, rtol=PIVOT_RTOL):
    """Set up local solves: LU factors (MV, AV) or restricted inverse rows (RAV)."""
    variant = Variant(variant)
    kb = kernels.get(backend)
    L = system.L if hasattr(system, "L") else system
    sizes = patches.sizes
    blk_ptr = _ptr(sizes * sizes)
    blocks = np.zeros(blk_ptr[-1])
    pos = np.full(patches.n_dofs, -1, dtype=np.int64)
    kb.gather_blocks(L.indptr, L.indices, L.data, patches.sd_ptr, patches.sd_dofs, blk_ptr, blocks, pos)
    piv = np.empty(len(patches.sd_dofs), dtype=np.int64)
    failed = kb.factor_blocks(patches.sd_ptr, blk_ptr, blocks, piv, rtol)
    if failed >= 0:
        _raise_singular(L, patches, int(failed))
    patches.variant = variant
    if variant is Variant.RAV:
        inv_ptr = _ptr(patches.restricted_sizes * sizes)
        inv = np.empty(inv_ptr[-1])
        kb.inverse_rows(patches.sd_ptr, blk_ptr, blocks, piv, patches.rs_ptr, patches.rs_local, inv_ptr, inv)
        patches.inv_ptr, patches.inv = inv_ptr, inv
        patches.blk_ptr = patches.blocks = patches.piv = None
    else:
        patches.blk_ptr, patches.blocks, patches.piv = blk_ptr, blocks, piv
        patches.inv_ptr = patches.inv = None
    return patches


def _prepare(x, b, n):
    x = np.array(x, dtype=np.float64, copy=True)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if x.shape != (n,) or b.shape != (n,):
        raise ValueError(f"expected vectors of length {n}")
    return x, b


def sweep_order(patches, rule="ascending"):
    order = np.arange(len(patches), dtype=np.int64)
    return order[::-1].copy() if rule == "descending" else order


def smooth_multiplicative(system, patches, x, b, omega=DEFAULT_DAMPING[Variant.MV],
                          order=None, backend=None, counter=None):
    """One sequential sweep with a fresh local residual per patch."""
    if patches.blocks is None:
        raise RuntimeError("multiplicative smoothing needs LU factors")
    L = system.L if hasattr(system, "L") else system
    x, b = _prepare(x, b, patches.n_dofs)
    order = sweep_order(patches) if order is None else np.ascontiguousarray(order, dtype=np.int64)
    counts = kernels.get(backend).mv_sweep(
        L.indptr, L.indices, L.data, b, x, patches.sd_ptr, patches.sd_dofs,
        patches.blk_ptr, patches.blocks, patches.piv, order, float(omega))
    if counter is not None:
        counter.add(counts, len(order))
    return x


def smooth_additive(system, patches, x, b, omega=DEFAULT_DAMPING[Variant.AV], backend=None, counter=None):
    """One global residual; patch corrections summed where patches overlap."""
    if patches.blocks is None:
        raise RuntimeError("additive smoothing needs LU factors")
    L = system.L if hasattr(system, "L") else system
    x, b = _prepare(x, b, patches.n_dofs)
    counts = kernels.get(backend).av_apply(
        L.indptr, L.indices, L.data, b, x, patches.sd_ptr, patches.sd_dofs,
        patches.blk_ptr, patches.blocks, patches.piv, float(omega),
        patches.scratch("r"), patches.scratch("delta"))
    if counter is not None:
        counter.add(counts, len(patches))
    return x


def smooth_restricted_additive(system, patches, x, b, omega=DEFAULT_DAMPING[Variant.RAV],
                               backend=None, counter=None):
    """One global residual; each patch writes only its restricted DoFs."""
    if patches.inv is None:
        raise RuntimeError("restricted additive smoothing needs inverse rows")
    L = system.L if hasattr(system, "L") else system
    x, b = _prepare(x, b, patches.n_dofs)
    counts = kernels.get(backend).rav_apply(
        L.indptr, L.indices, L.data, b, x, patches.sd_ptr, patches.sd_dofs,
        patches.rs_ptr, patches.rs_global, patches.inv_ptr, patches.inv, float(omega),
        patches.scratch("r"))
    if counter is not None:
        counter.add(counts, len(patches))
    return x


def partition_counts(patches):
    """How often each DoF is written by the restricted variant (all ones when it partitions)."""
    return np.bincount(patches.rs_global, minlength=patches.n_dofs)


class VankaSmoother:
    """Set up once per level, then ``smoother(x, b)`` applies one step."""

    def __init__(self, system, config=None, backend=None):
        self.system = system
        self.config = config or SmootherConfig()
        self.backend = backend
        self.patches = factorize_subdomains(system, build_subdomains(system), self.config.variant, backend)
        self.order = sweep_order(self.patches, self.config.sweep_order)
        self.flops = FlopCounter()

    def __call__(self, x, b):
        v, w = self.config.variant, self.config.damping
        if v is Variant.MV:
            return smooth_multiplicative(self.system, self.patches, x, b, w, self.order, self.backend, self.flops)
        if v is Variant.AV:
            return smooth_additive(self.system, self.patches, x, b, w, self.backend, self.flops)
        return smooth_restricted_additive(self.system, self.patches, x, b, w, self.backend, self.flops)

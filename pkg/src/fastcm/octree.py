"""Uniform-depth octree over RWG centroids with per-level interaction lists.

Boxes at level ``l`` have edge ``a0 / 2**l`` and integer coordinates in
``[0, 2**l)^3``. Membership uses half-open intervals ``[low, high)`` per axis.
Two boxes at the same level are *near* when their coordinates differ by at
most one along every axis (this includes the box itself).

Interaction list modes
----------------------
``standard``
    Far pairs are boxes whose parents are near but which are not near
    themselves, at levels 2..L_f. Everything else is in the finest-level
    near block.
``all_translate``
    Every pair of distinct sibling boxes is translated at its own level,
    from level 1 down to L_f. Only a box's self-interaction stays in the
    near block. Valid only for the regular ``sin(kR)/R`` kernel.
``all_translate_bookkeeping``
    The standard far lists plus the near-but-distinct finest-level pairs,
    i.e. the same coverage as ``all_translate`` with standard bookkeeping.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

MODES = ("standard", "all_translate", "all_translate_bookkeeping")
COARSEST = {"standard": 2, "all_translate": 1, "all_translate_bookkeeping": 2}


class OctreeError(ValueError):
    pass


def morton_key(coords, bits):
    """Bit-interleaved key of integer box coordinates, ``bits`` per axis."""
    c = np.asarray(coords, dtype=np.int64)
    key = np.zeros(c.shape[:-1], dtype=np.int64)
    for b in range(bits):
        for axis in range(3):
            key |= ((c[..., axis] >> b) & 1) << (3 * b + 2 - axis)
    return key


@dataclass(eq=False)
class Level:
    index: int
    size: float
    coords: np.ndarray  # (n_boxes, 3) int, sorted by Morton key
    centers: np.ndarray
    parent: np.ndarray  # index into the coarser level, -1 at level 0
    child_ptr: np.ndarray = field(default=None, repr=False)
    children: np.ndarray = field(default=None, repr=False)

    @property
    def n_boxes(self):
        return len(self.coords)

    def lookup(self, coords):
        """Box indices for integer coordinates, -1 where unoccupied."""
        side = 1 << self.index
        key = morton_key(self.coords, self.index)
        c = np.asarray(coords)
        inside = np.all((c >= 0) & (c < side), axis=-1)
        q = morton_key(np.clip(c, 0, side - 1), self.index)
        pos = np.clip(np.searchsorted(key, q), 0, len(key) - 1)
        return np.where(inside & (key[pos] == q), pos, -1)


@dataclass(eq=False)
class InteractionList:
    """Translated box pairs at one level. ``offsets = coords[t] - coords[s]``."""

    level: int
    targets: np.ndarray
    sources: np.ndarray
    offsets: np.ndarray

    def __len__(self):
        return len(self.targets)


@dataclass(eq=False)
class Octree:
    origin: np.ndarray  # low corner of the level-0 cube
    size0: float
    finest: int
    wavenumber: float
    target_box: float
    levels: list
    basis_box: np.ndarray  # finest box of every basis
    member_ptr: np.ndarray
    members: np.ndarray
    dense_fallback: bool

    @property
    def n_levels(self):
        """Number of levels including level 0."""
        return self.finest + 1

    @property
    def finest_level(self):
        return self.levels[self.finest]

    def box_size(self, level):
        return self.size0 / 2**level

    def box_size_wavelengths(self, level):
        return self.box_size(level) * self.wavenumber / (2 * math.pi)

    def members_of(self, box):
        return self.members[self.member_ptr[box] : self.member_ptr[box + 1]]

    def near_boxes(self, level, box):
        lv = self.levels[level]
        offs = np.stack(np.meshgrid(*[np.arange(-1, 2)] * 3, indexing="ij"), -1).reshape(-1, 3)
        idx = lv.lookup(lv.coords[box] + offs)
        return np.sort(idx[idx >= 0])

    def near_box_pairs(self, mode="standard"):
        """(target, source) finest-level box pairs handled by the near block."""
        lv = self.finest_level
        if self.dense_fallback:
            t, s = np.meshgrid(np.arange(lv.n_boxes), np.arange(lv.n_boxes), indexing="ij")
            return t.ravel(), s.ravel()
        if mode in ("all_translate", "all_translate_bookkeeping"):
            idx = np.arange(lv.n_boxes)
            return idx, idx.copy()
        offs = np.stack(np.meshgrid(*[np.arange(-1, 2)] * 3, indexing="ij"), -1).reshape(-1, 3)
        nb = lv.lookup(lv.coords[:, None, :] + offs[None])
        t = np.repeat(np.arange(lv.n_boxes), len(offs)).reshape(nb.shape)
        keep = nb >= 0
        return t[keep], nb[keep]

    def near_basis_pairs(self, mode="standard"):
        """Basis index pairs (rows, cols) of the near block, sorted by row."""
        bt, bs = self.near_box_pairs(mode)
        counts_t = np.diff(self.member_ptr)[bt]
        counts_s = np.diff(self.member_ptr)[bs]
        rows, cols = [], []
        for t, s, nt, ns in zip(bt, bs, counts_t, counts_s):
            mt, ms = self.members_of(t), self.members_of(s)
            rows.append(np.repeat(mt, ns))
            cols.append(np.tile(ms, nt))
        rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
        cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
        order = np.lexsort((cols, rows))
        return rows[order], cols[order]

    def stats(self):
        out = {
            "levels": self.n_levels,
            "finest": self.finest,
            "size0": self.size0,
            "dense_fallback": self.dense_fallback,
            "per_level": [],
        }
        for lv in self.levels:
            out["per_level"].append(
                {
                    "level": lv.index,
                    "box_size": lv.size,
                    "box_size_wavelengths": self.box_size_wavelengths(lv.index),
                    "occupied_boxes": int(lv.n_boxes),
                }
            )
        for mode in MODES:
            lists = interaction_lists(self, mode)
            for entry, il in zip(out["per_level"], lists):
                entry[f"pairs_{mode}"] = len(il)
        return out

    def stats_json(self, **kwargs):
        return json.dumps(self.stats(), **kwargs)


def build_octree(basis, k, target_box=0.25):
    """Octree over RWG edge midpoints.

    Parameters
    ----------
    basis : RwgBasis
    k : float
        Wavenumber in rad/m.
    target_box : float
        Finest box edge as a fraction of the wavelength, in [0.2, 0.5].

    The level-0 cube is centered on the mesh bounding box and sized
    ``target_box * wavelength * 2**L_f`` with the smallest ``L_f`` that
    encloses the whole surface, so the finest box size is exactly the target.
    """
    if not 0.2 <= target_box <= 0.5:
        raise OctreeError(f"target_box must lie in [0.2, 0.5] wavelengths, got {target_box}")
    pts = basis.centroids
    if len(pts) == 0:
        raise OctreeError("basis is empty")
    verts = basis.mesh.vertices
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    extent = float((hi - lo).max())
    if np.ptp(pts, axis=0).max() <= 0 and len(pts) > 1:
        raise OctreeError("degenerate extent: all basis centroids coincide")
    lam = 2 * math.pi / k
    finest_size = target_box * lam
    finest = max(0, math.ceil(math.log2(extent * (1 + 1e-9) / finest_size)))
    size0 = finest_size * 2**finest
    origin = (lo + hi) / 2 - size0 / 2

    levels = []
    coords_f = np.floor((pts - origin) / finest_size).astype(np.int64)
    coords_f = np.clip(coords_f, 0, (1 << finest) - 1)
    for lvl in range(finest, -1, -1):
        c = coords_f >> (finest - lvl)
        uniq = np.unique(c, axis=0)
        # Morton order keeps the children of each parent contiguous
        uniq = uniq[np.argsort(morton_key(uniq, lvl), kind="stable")]
        size = size0 / 2**lvl
        levels.append(
            Level(lvl, size, uniq, origin + (uniq + 0.5) * size, np.full(len(uniq), -1))
        )
    levels.reverse()
    for lvl in range(1, finest + 1):
        lv = levels[lvl]
        lv.parent = levels[lvl - 1].lookup(lv.coords >> 1)
        order = np.argsort(lv.parent, kind="stable")
        pr = levels[lvl - 1]
        pr.child_ptr = np.searchsorted(lv.parent[order], np.arange(pr.n_boxes + 1))
        pr.children = order

    fl = levels[finest]
    basis_box = fl.lookup(coords_f)
    order = np.argsort(basis_box, kind="stable")
    member_ptr = np.searchsorted(basis_box[order], np.arange(fl.n_boxes + 1))

    return Octree(
        origin=origin,
        size0=size0,
        finest=finest,
        wavenumber=float(k),
        target_box=target_box,
        levels=levels,
        basis_box=basis_box,
        member_ptr=member_ptr,
        members=order,
        dense_fallback=finest < 2,
    )


def _pairs_with_near_parents(tree, lvl):
    """All (t, s) at ``lvl`` whose parents are near, as box index arrays."""
    lv = tree.levels[lvl]
    pr = tree.levels[lvl - 1]
    offs = np.stack(np.meshgrid(*[np.arange(-1, 2)] * 3, indexing="ij"), -1).reshape(-1, 3)
    parent_nb = pr.lookup(pr.coords[lv.parent][:, None, :] + offs[None])  # (n, 27)
    ts, ss = [], []
    for j in range(len(offs)):
        has = parent_nb[:, j] >= 0
        tgt = np.flatnonzero(has)
        for cnum in range(8):
            # child coordinate of the neighbor parent
            child = (pr.coords[parent_nb[has, j]] << 1) + np.array(
                [(cnum >> 2) & 1, (cnum >> 1) & 1, cnum & 1]
            )
            src = lv.lookup(child)
            ok = src >= 0
            ts.append(tgt[ok])
            ss.append(src[ok])
    t = np.concatenate(ts)
    s = np.concatenate(ss)
    return t, s


def interaction_lists(tree, mode="standard"):
    """Translated box pairs per level, one ``InteractionList`` per level 0..L_f."""
    if mode not in MODES:
        raise ValueError(f"unknown interaction-list mode {mode!r}; expected one of {MODES}")
    out = []
    empty = np.empty(0, np.int64)
    for lvl in range(tree.n_levels):
        lv = tree.levels[lvl]
        t = s = empty
        if not tree.dense_fallback and lvl >= COARSEST[mode]:
            if mode == "all_translate":
                t, s = _pairs_with_near_parents(tree, lvl)
                same = lv.parent[t] == lv.parent[s]
                t, s = t[same & (t != s)], s[same & (t != s)]
            else:
                t, s = _pairs_with_near_parents(tree, lvl)
                d = np.abs(lv.coords[t] - lv.coords[s]).max(axis=1)
                far = d > 1
                if mode == "all_translate_bookkeeping" and lvl == tree.finest:
                    far = d > 0
                t, s = t[far], s[far]
        order = np.lexsort((s, t))
        t, s = t[order], s[order]
        out.append(InteractionList(lvl, t, s, lv.coords[t] - lv.coords[s]))
    return out

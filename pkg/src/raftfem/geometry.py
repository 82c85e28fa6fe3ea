"""Conforming triangulations of the sphere with red-green adaptivity.

Meshes are built from the octahedron by red (1:4 midpoint) refinement,
with every new vertex pushed radially onto the sphere. Level ``n`` of the
uniform hierarchy has ``4 * 4**n + 2`` vertices, so level 4 gives the 1026
vertex base grid used throughout the simulations.

Local refinement keeps a forest of red-refined triangles. The conforming
mesh handed to the finite-element code is generated from the forest leaves
by the classical red-green closure: leaves with two or more hanging edges
are red-refined, leaves with exactly one hanging edge are bisected (green)
for output only. Green triangles are never refined further; marking one
red-refines the leaf it came from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, MeshBoundsError

MAX_UNIFORM_LEVEL = 10
_KEY_SHIFT = np.int64(1) << np.int64(31)


class _Forest:
    """Mutable red-refinement forest. Only ever mutated on a private copy."""

    def __init__(self, positions, triangles, R):
        self.R = float(R)
        self.pos = np.asarray(positions, dtype=float)
        self.vparent = -np.ones((len(self.pos), 2), dtype=np.int64)
        n = len(triangles)
        self.verts = np.asarray(triangles, dtype=np.int64).reshape(n, 3)
        self.parent = -np.ones(n, dtype=np.int64)
        self.children = -np.ones((n, 4), dtype=np.int64)
        self.level = np.zeros(n, dtype=np.int64)
        self.alive = np.ones(n, dtype=bool)
        self.mid = {}
        self._keys = None
        self._vals = None

    def copy(self):
        other = _Forest.__new__(_Forest)
        other.R = self.R
        other.pos = self.pos.copy()
        other.vparent = self.vparent.copy()
        other.verts = self.verts.copy()
        other.parent = self.parent.copy()
        other.children = self.children.copy()
        other.level = self.level.copy()
        other.alive = self.alive.copy()
        other.mid = dict(self.mid)
        other._keys = self._keys
        other._vals = self._vals
        return other

    @property
    def n_vertices(self):
        return len(self.pos)

    def leaves(self):
        return np.flatnonzero(self.alive & (self.children[:, 0] < 0))

    # -- midpoint bookkeeping -------------------------------------------------

    def _lookup_table(self):
        if self._keys is None:
            if self.mid:
                ab = np.array(list(self.mid.keys()), dtype=np.int64)
                keys = ab[:, 0] * _KEY_SHIFT + ab[:, 1]
                vals = np.fromiter(self.mid.values(), dtype=np.int64, count=len(self.mid))
                order = np.argsort(keys)
                self._keys, self._vals = keys[order], vals[order]
            else:
                self._keys = np.zeros(0, dtype=np.int64)
                self._vals = np.zeros(0, dtype=np.int64)
        return self._keys, self._vals

    def lookup(self, a, b):
        """Midpoint vertex ids of edges (a, b); -1 where none exists."""
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        q = lo * _KEY_SHIFT + hi
        keys, vals = self._lookup_table()
        out = -np.ones(len(q), dtype=np.int64)
        if len(keys) == 0:
            return out
        idx = np.searchsorted(keys, q)
        idx = np.minimum(idx, len(keys) - 1)
        hit = keys[idx] == q
        out[hit] = vals[idx[hit]]
        return out

    def _midpoints(self, a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        found = self.lookup(lo, hi)
        missing = np.flatnonzero(found < 0)
        if len(missing):
            pairs, inverse = np.unique(
                np.stack([lo[missing], hi[missing]], axis=1), axis=0, return_inverse=True
            )
            inverse = np.asarray(inverse).reshape(-1)
            start = self.n_vertices
            new_ids = start + np.arange(len(pairs))
            p = self.pos[pairs[:, 0]] + self.pos[pairs[:, 1]]
            p *= self.R / np.linalg.norm(p, axis=1)[:, None]
            self.pos = np.vstack([self.pos, p])
            self.vparent = np.vstack([self.vparent, pairs])
            for (i, j), v in zip(pairs.tolist(), new_ids.tolist()):
                self.mid[(i, j)] = v
            self._keys = None
            found[missing] = new_ids[inverse]
        return found

    # -- structural edits -------------------------------------------------------

    def red_refine(self, nodes):
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        nodes = nodes[self.children[nodes, 0] < 0]
        if len(nodes) == 0:
            return
        a, b, c = self.verts[nodes].T
        mab = self._midpoints(a, b)
        mbc = self._midpoints(b, c)
        mca = self._midpoints(c, a)
        kids = np.stack(
            [
                np.stack([a, mab, mca], axis=1),
                np.stack([mab, b, mbc], axis=1),
                np.stack([mca, mbc, c], axis=1),
                np.stack([mab, mbc, mca], axis=1),
            ],
            axis=1,
        ).reshape(-1, 3)
        first = len(self.verts)
        ids = first + np.arange(4 * len(nodes))
        self.verts = np.vstack([self.verts, kids])
        self.parent = np.concatenate([self.parent, np.repeat(nodes, 4)])
        self.children = np.vstack([self.children, -np.ones((len(ids), 4), dtype=np.int64)])
        self.level = np.concatenate([self.level, np.repeat(self.level[nodes] + 1, 4)])
        self.alive = np.concatenate([self.alive, np.ones(len(ids), dtype=bool)])
        self.children[nodes] = ids.reshape(-1, 4)

    def coarsen(self, parents):
        for p in np.unique(np.asarray(parents, dtype=np.int64)).tolist():
            kids = self.children[p]
            if kids[0] < 0 or np.any(self.children[kids, 0] >= 0):
                continue
            self.alive[kids] = False
            self.children[p] = -1

    def _hanging(self, leaves, active):
        t = self.verts[leaves]
        mids = np.empty((len(leaves), 3), dtype=np.int64)
        doubly = np.zeros(len(leaves), dtype=bool)
        for e in range(3):
            a, b = t[:, e], t[:, (e + 1) % 3]
            m = self.lookup(a, b)
            m[m >= 0] = np.where(active[m[m >= 0]], m[m >= 0], -1)
            mids[:, e] = m
            has = m >= 0
            if has.any():
                for end in (a, b):
                    mm = self.lookup(end[has], m[has])
                    deep = np.zeros(has.sum(), dtype=bool)
                    ok = mm >= 0
                    deep[ok] = active[mm[ok]]
                    doubly[np.flatnonzero(has)[deep]] = True
        return mids, doubly

    def close(self):
        """Red-refine until every leaf has at most one singly-hanging edge."""
        while True:
            leaves = self.leaves()
            active = np.zeros(self.n_vertices, dtype=bool)
            active[self.verts[leaves].ravel()] = True
            mids, doubly = self._hanging(leaves, active)
            need = ((mids >= 0).sum(axis=1) >= 2) | doubly
            if not need.any():
                return leaves, mids
            self.red_refine(leaves[need])


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Conforming triangulation of the sphere of radius ``R``.

    ``vertices`` is ``(V, 3)``, ``triangles`` is ``(F, 3)`` with outward
    orientation and ``level`` holds the refinement depth of every triangle
    (green halves inherit the depth of the leaf they split). ``vertex_ids``
    and ``owner`` tie the mesh back to its refinement forest and are used
    for field transfer between adapted meshes.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: np.ndarray
    R: float
    vertex_ids: np.ndarray = field(repr=False)
    owner: np.ndarray = field(repr=False)
    green: np.ndarray = field(repr=False)
    _forest: _Forest = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an ``(E, 2)`` array with ``i < j``."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)


@dataclass(frozen=True)
class AdaptMarks:
    """Triangle indices to refine and to coarsen, for one specific mesh."""

    refine: frozenset = frozenset()
    coarsen: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "refine", frozenset(int(i) for i in self.refine))
        object.__setattr__(self, "coarsen", frozenset(int(i) for i in self.coarsen))
        if self.refine & self.coarsen:
            raise ValueError("a triangle cannot be marked for refinement and coarsening")

    def validate(self, mesh: SurfaceMesh) -> None:
        for i in self.refine | self.coarsen:
            if not 0 <= i < mesh.n_triangles:
                raise ValueError(f"mark index {i} out of range for mesh with {mesh.n_triangles} triangles")


def triangle_areas(vertices, triangles):
    x0, x1, x2 = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(x1 - x0, x2 - x0), axis=1)


def element_area(mesh: SurfaceMesh, t: int) -> float:
    """Area of the flat triangle ``t``; raises GeometryError if degenerate."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    x0, x1, x2 = mesh.vertices[mesh.triangles[t]]
    area = 0.5 * float(np.linalg.norm(np.cross(x1 - x0, x2 - x0)))
    scale = max(np.linalg.norm(x1 - x0), np.linalg.norm(x2 - x0), 1e-300)
    if area <= 1e-14 * scale**2:
        raise GeometryError(f"triangle {t} is degenerate (area {area:g})")
    return area


def p1_gradients(vertices, triangles, values):
    """Constant tangential gradients of a P1 field on each flat triangle.

    Returns ``(grads, areas)`` with ``grads`` of shape ``(F, 3)``.
    """
    x0, x1, x2 = (vertices[triangles[:, k]] for k in range(3))
    n = np.cross(x1 - x0, x2 - x0)
    dbl = np.linalg.norm(n, axis=1)
    if np.any(dbl <= 0):
        raise GeometryError("degenerate triangle in gradient evaluation")
    n /= dbl[:, None]
    f = values[triangles]
    # grad(lambda_i) = n x (edge opposite i) / (2|K|)
    g = (
        f[:, [0]] * np.cross(n, x2 - x1)
        + f[:, [1]] * np.cross(n, x0 - x2)
        + f[:, [2]] * np.cross(n, x1 - x0)
    ) / dbl[:, None]
    return g, 0.5 * dbl


def _octahedron(R):
    pos = R * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
    )
    tris = []
    for ix in (0, 1):
        for iy in (2, 3):
            for iz in (4, 5):
                t = [ix, iy, iz]
                x0, x1, x2 = pos[t]
                if np.dot(np.cross(x1 - x0, x2 - x0), x0 + x1 + x2) < 0:
                    t = [ix, iz, iy]
                tris.append(t)
    return pos, np.array(tris)


def _mesh_from_forest(forest: _Forest) -> SurfaceMesh:
    leaves, mids = forest.close()
    t = forest.verts[leaves]
    nh = (mids >= 0).sum(axis=1)
    plain = nh == 0
    tris = [t[plain]]
    owners = [leaves[plain]]
    greens = [np.zeros(plain.sum(), dtype=bool)]
    for e in range(3):
        sel = (nh == 1) & (mids[:, e] >= 0)
        if not sel.any():
            continue
        a, b, c = t[sel, e], t[sel, (e + 1) % 3], t[sel, (e + 2) % 3]
        m = mids[sel, e]
        tris += [np.stack([a, m, c], axis=1), np.stack([m, b, c], axis=1)]
        owners += [leaves[sel], leaves[sel]]
        greens += [np.ones(sel.sum(), dtype=bool)] * 2
    tris = np.concatenate(tris)
    owner = np.concatenate(owners)
    green = np.concatenate(greens)
    order = np.lexsort((green, owner))
    tris, owner, green = tris[order], owner[order], green[order]
    used = np.unique(tris)
    local = -np.ones(forest.n_vertices, dtype=np.int64)
    local[used] = np.arange(len(used))
    return SurfaceMesh(
        vertices=forest.pos[used].copy(),
        triangles=local[tris],
        level=forest.level[owner].copy(),
        R=forest.R,
        vertex_ids=used,
        owner=owner,
        green=green,
        _forest=forest,
    )


def build_octasphere(levels: int, R: float = 1.0) -> SurfaceMesh:
    """Uniformly refined octahedron projected onto the sphere of radius R."""
    if not isinstance(levels, (int, np.integer)) or not 0 <= levels <= MAX_UNIFORM_LEVEL:
        raise MeshBoundsError(f"levels must be an integer in [0, {MAX_UNIFORM_LEVEL}], got {levels!r}")
    if R <= 0:
        raise GeometryError("sphere radius must be positive")
    pos, tris = _octahedron(R)
    forest = _Forest(pos, tris, R)
    for _ in range(int(levels)):
        forest.red_refine(forest.leaves())
    return _mesh_from_forest(forest)


def refine_elements(mesh: SurfaceMesh, marks: AdaptMarks, min_level: int = 0) -> SurfaceMesh:
    """Apply refinement/coarsening marks and return a new conforming mesh.

    Coarsening removes a family of four red children only when every child
    is an unrefined leaf whose triangles are all marked, and only above
    ``min_level``. The closure may re-refine a coarsened parent if its
    neighbours require it, in which case the coarsening mark has no effect.
    """
    marks.validate(mesh)
    if not marks.refine and not marks.coarsen:
        return mesh
    forest = mesh._forest.copy()
    if marks.coarsen:
        idx = np.fromiter(marks.coarsen, dtype=np.int64)
        cand = np.zeros(len(forest.verts), dtype=bool)
        cand[mesh.owner[idx]] = True
        # a leaf qualifies only if all of its (green) triangles are marked
        unmarked = np.setdiff1d(np.arange(mesh.n_triangles), idx)
        cand[mesh.owner[unmarked]] = False
        parents = np.unique(forest.parent[np.flatnonzero(cand)])
        parents = parents[parents >= 0]
        ok = [
            p
            for p in parents.tolist()
            if forest.level[p] >= min_level and np.all(cand[forest.children[p]])
        ]
        forest.coarsen(ok)
    if marks.refine:
        idx = np.fromiter(marks.refine, dtype=np.int64)
        forest.red_refine(mesh.owner[idx])
    return _mesh_from_forest(forest)


def mark_for_adaptation(
    mesh: SurfaceMesh,
    phi,
    eps: float,
    mu: float = 0.05,
    max_level: int | None = None,
    coarsen: bool = False,
    theta: float = 0.1,
    min_level: int = 0,
) -> AdaptMarks:
    """Mark triangles whose gradient exceeds ``mu * eps / |K|``.

    The P1 gradient is constant per element, so the L-infinity norm over
    ``K`` is exact. With ``coarsen=True`` elements whose indicator is below
    ``theta`` times the threshold and whose depth exceeds ``min_level`` are
    offered for coarsening.
    """
    if eps <= 0 or mu <= 0:
        raise ValueError("eps and mu must be positive")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (mesh.n_vertices,):
        raise ValueError("phi does not match the mesh")
    g, area = p1_gradients(mesh.vertices, mesh.triangles, phi)
    gnorm = np.linalg.norm(g, axis=1)
    threshold = mu * eps / area
    refine = gnorm > threshold
    if max_level is not None:
        refine &= mesh.level < max_level
    coarse = np.zeros_like(refine)
    if coarsen:
        coarse = (gnorm < theta * threshold) & (mesh.level > min_level) & ~refine
    return AdaptMarks(frozenset(np.flatnonzero(refine).tolist()), frozenset(np.flatnonzero(coarse).tolist()))


def transfer_field(old: SurfaceMesh, new: SurfaceMesh, values) -> np.ndarray:
    """Nodal interpolation of a P1 field between meshes of one hierarchy.

    New vertices get the average of their parent-edge endpoints (exact P1
    interpolation on the nested hierarchy); vertices removed by coarsening
    are dropped.
    """
    values = np.asarray(values, dtype=float)
    if old is new:
        return values.copy()
    forest = new._forest
    full = np.full(forest.n_vertices, np.nan)
    known = old.vertex_ids < forest.n_vertices
    full[old.vertex_ids[known]] = values[known]
    missing = new.vertex_ids[np.isnan(full[new.vertex_ids])]
    while len(missing):
        # parents may themselves be missing (multi-level refinement in one pass)
        pending = np.isnan(full[missing])
        todo = missing[pending]
        pa, pb = forest.vparent[todo].T
        if np.any(pa < 0):
            raise GeometryError("meshes do not share a refinement hierarchy")
        ready = ~np.isnan(full[pa]) & ~np.isnan(full[pb])
        if not ready.any():
            needed = np.unique(np.concatenate([pa[~ready], pb[~ready]]))
            needed = needed[np.isnan(full[needed])]
            missing = np.concatenate([needed, todo])
            continue
        full[todo[ready]] = 0.5 * (full[pa[ready]] + full[pb[ready]])
        missing = todo[~ready]
    return full[new.vertex_ids]


def check_mesh(mesh: SurfaceMesh, tol: float = 1e-12) -> None:
    """Raise GeometryError unless the mesh is a closed, conforming, oriented sphere."""
    r = np.linalg.norm(mesh.vertices, axis=1)
    if np.max(np.abs(r - mesh.R)) > tol * mesh.R:
        raise GeometryError("vertex off the sphere")
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    n = mesh.n_vertices
    fwd = directed[:, 0] * n + directed[:, 1]
    if len(np.unique(fwd)) != len(fwd):
        raise GeometryError("inconsistent orientation or duplicated triangle")
    rev = directed[:, 1] * n + directed[:, 0]
    if not np.array_equal(np.sort(fwd), np.sort(rev)):
        raise GeometryError("mesh is not closed and conforming (unmatched or hanging edge)")
    x0, x1, x2 = (mesh.vertices[t[:, k]] for k in range(3))
    if np.any(np.einsum("ij,ij->i", np.cross(x1 - x0, x2 - x0), x0 + x1 + x2) <= 0):
        raise GeometryError("triangle with inward orientation")
    if mesh.euler_characteristic() != 2:
        raise GeometryError(f"Euler characteristic {mesh.euler_characteristic()} != 2")
    if len(np.unique(t)) != n:
        raise GeometryError("unused vertex")

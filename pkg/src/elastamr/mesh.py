"""Conforming triangular meshes with labeled boundaries.

Triangles are stored counter-clockwise with the *newest vertex* first: the
refinement edge of every triangle is local edge 0, the edge opposite local
vertex 0.  Local edge ``j`` runs from vertex ``j+1`` to vertex ``j+2``.

Meshes are immutable; refinement returns a new :class:`Mesh`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .elements import LOCAL_EDGES

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
LABELS = ("interior", "dirichlet", "neumann")


class MeshError(ValueError):
    """Invalid or non-conforming mesh input."""


def _pair_codes(pairs: np.ndarray, n: int) -> np.ndarray:
    pairs = np.sort(np.asarray(pairs, dtype=np.int64), axis=-1)
    return pairs[..., 0] * n + pairs[..., 1]


@dataclass(frozen=True)
class Triangle:
    vertices: tuple
    refinement_edge: int
    neighbors: tuple  # per local edge, -1 on the boundary
    generation: int


@dataclass(frozen=True)
class Geometry:
    h: float
    area: float
    grad_lambda: np.ndarray


@dataclass(frozen=True)
class EdgeTable:
    """Edges of a mesh and their adjacency.

    ``normals`` are unit normals: outward on the boundary, and on interior
    edges pointing out of the neighbour with the smaller id (``elements[:, 0]``,
    called K+).  ``tangents`` are ``(-n2, n1)``.  ``sign[t, j]`` is +1 if the
    stored normal of local edge ``j`` of triangle ``t`` is outward for ``t``.
    """

    vertices: np.ndarray  # (E, 2) sorted pairs
    elements: np.ndarray  # (E, 2), second entry -1 on boundary
    local_index: np.ndarray  # (E, 2) local edge index within each neighbour
    labels: np.ndarray  # (E,)
    lengths: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    elem2edge: np.ndarray  # (T, 3)
    sign: np.ndarray  # (T, 3)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def boundary(self) -> np.ndarray:
        return self.labels != INTERIOR


class Mesh:
    """Conforming triangulation.

    Parameters
    ----------
    coords : (N, 2) array
    elements : (M, 3) int array, any orientation
    boundary : (K, 2) int array of boundary edges
    boundary_labels : (K,) labels, strings or codes
    generation : optional (M,) bisection depth
    assign_refinement_edges : rotate every triangle so that its longest edge
        is the refinement edge (ties: smallest opposite vertex id).  Set to
        False to keep the given newest-vertex-first order.
    """

    def __init__(
        self,
        coords,
        elements,
        boundary,
        boundary_labels,
        generation=None,
        assign_refinement_edges: bool = True,
        validate: bool = True,
    ):
        coords = np.array(coords, dtype=float).reshape(-1, 2)
        elems = np.array(elements, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(coords)):
            raise MeshError("non-finite vertex coordinates")
        if elems.size and (elems.min() < 0 or elems.max() >= len(coords)):
            raise MeshError("triangle refers to a missing vertex")

        area2 = _signed_area2(coords, elems)
        P = coords[elems]
        longest = np.max(np.sum((P[:, [1, 2, 0]] - P) ** 2, axis=2), axis=1, initial=0.0)
        # scale-invariant, so strongly graded meshes pass
        if np.any(np.abs(area2) <= 1e-12 * longest):
            raise MeshError("zero-area triangle")
        cw = area2 < 0
        elems[cw] = elems[cw][:, [0, 2, 1]]
        if assign_refinement_edges:
            elems = _rotate_longest_first(coords, elems)

        labels = np.array(
            [LABELS.index(l) if isinstance(l, str) else int(l) for l in boundary_labels],
            dtype=np.int64,
        )
        bnd = np.sort(np.array(boundary, dtype=np.int64).reshape(-1, 2), axis=1)
        if len(labels) != len(bnd):
            raise MeshError("boundary label count mismatch")
        if np.any((labels != DIRICHLET) & (labels != NEUMANN)):
            raise MeshError("boundary labels must be dirichlet or neumann")

        self.coords = coords
        self.elements = elems
        self.boundary_edges = bnd
        self.boundary_labels = labels
        self.generation = (
            np.zeros(len(elems), dtype=np.int64)
            if generation is None
            else np.asarray(generation, dtype=np.int64)
        )
        for a in (self.coords, self.elements, self.boundary_edges, self.boundary_labels, self.generation):
            a.setflags(write=False)
        if validate:
            self._validate()

    # -- basic sizes -------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_triangles(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __repr__(self) -> str:
        return f"Mesh(V={self.n_vertices}, E={self.n_edges}, T={self.n_triangles})"

    # -- geometry ----------------------------------------------------------

    @cached_property
    def vertices_of(self) -> np.ndarray:
        """Vertex coordinates per triangle, (T, 3, 2)."""
        return self.coords[self.elements]

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * _signed_area2(self.coords, self.elements)

    @cached_property
    def edge_lengths_local(self) -> np.ndarray:
        P = self.vertices_of
        d = P[:, LOCAL_EDGES[:, 1]] - P[:, LOCAL_EDGES[:, 0]]
        return np.linalg.norm(d, axis=2)

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths_local.max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, (T, 3, 2)."""
        P = self.vertices_of
        nxt = P[:, [1, 2, 0]]
        prv = P[:, [2, 0, 1]]
        g = np.stack([nxt[..., 1] - prv[..., 1], prv[..., 0] - nxt[..., 0]], axis=-1)
        return g / (2.0 * self.areas)[:, None, None]

    def geometry(self, t: int) -> Geometry:
        return Geometry(float(self.diameters[t]), float(self.areas[t]), self.grad_lambda[t].copy())

    @cached_property
    def angles(self) -> np.ndarray:
        """Interior angles (radians) at each local vertex, (T, 3)."""
        L = self.edge_lengths_local  # L[:, j] opposite vertex j
        a, b, c = L[:, 0], L[:, 1], L[:, 2]
        ang0 = np.arccos(np.clip((b**2 + c**2 - a**2) / (2 * b * c), -1, 1))
        ang1 = np.arccos(np.clip((a**2 + c**2 - b**2) / (2 * a * c), -1, 1))
        return np.column_stack([ang0, ang1, np.pi - ang0 - ang1])

    @property
    def min_angle(self) -> float:
        return float(np.degrees(self.angles.min()))

    def to_physical(self, bary: np.ndarray, elements=None) -> np.ndarray:
        """Map barycentric points (P, 3) to physical points (T, P, 2)."""
        P = self.vertices_of if elements is None else self.vertices_of[elements]
        return np.einsum("pi,tix->tpx", bary, P)

    # -- topology ----------------------------------------------------------

    @cached_property
    def edges(self) -> EdgeTable:
        T = self.n_triangles
        N = self.n_vertices
        loc = self.elements[:, LOCAL_EDGES]  # (T, 3, 2)
        codes = _pair_codes(loc, N).ravel()
        uniq, inv, counts = np.unique(codes, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two triangles")
        E = len(uniq)
        elem2edge = inv.reshape(T, 3)

        order = np.argsort(inv, kind="stable")
        first = np.searchsorted(inv[order], np.arange(E))
        owner = order // 3
        lidx = order % 3
        e_elems = -np.ones((E, 2), dtype=np.int64)
        e_loc = -np.ones((E, 2), dtype=np.int64)
        e_elems[:, 0] = owner[first]
        e_loc[:, 0] = lidx[first]
        two = counts == 2
        e_elems[two, 1] = owner[first[two] + 1]
        e_loc[two, 1] = lidx[first[two] + 1]
        # smaller triangle id first (K+)
        swap = two & (e_elems[:, 1] < e_elems[:, 0])
        e_elems[swap] = e_elems[swap][:, ::-1]
        e_loc[swap] = e_loc[swap][:, ::-1]

        verts = np.column_stack([uniq // N, uniq % N])
        labels = np.zeros(E, dtype=np.int64)
        bcodes = _pair_codes(self.boundary_edges, N)
        pos = np.searchsorted(uniq, bcodes)
        ok = (pos < E) & (uniq[np.minimum(pos, E - 1)] == bcodes)
        if not np.all(ok):
            raise MeshError("labeled boundary segment is not an edge of the mesh")
        if np.any(two[pos]):
            raise MeshError("labeled boundary segment is an interior edge")
        labels[pos] = self.boundary_labels
        if np.any((~two) & (labels == INTERIOR)):
            raise MeshError("unlabeled boundary edge")

        # outward normal of the owning local edge of K+
        P = self.vertices_of[e_elems[:, 0]]
        j = e_loc[:, 0]
        p = P[np.arange(E), LOCAL_EDGES[j, 0]]
        q = P[np.arange(E), LOCAL_EDGES[j, 1]]
        d = q - p
        lengths = np.linalg.norm(d, axis=1)
        normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
        tangents = np.column_stack([-normals[:, 1], normals[:, 0]])

        sign = -np.ones((T, 3), dtype=np.int64)
        sign[e_elems[:, 0], e_loc[:, 0]] = 1

        table = EdgeTable(verts, e_elems, e_loc, labels, lengths, normals, tangents, elem2edge, sign)
        for a in vars(table).values():
            a.setflags(write=False)
        return table

    def triangle(self, t: int) -> Triangle:
        ed = self.edges
        nb = []
        for j in range(3):
            e = ed.elem2edge[t, j]
            a, b = ed.elements[e]
            nb.append(int(b if a == t else a))
        return Triangle(tuple(int(v) for v in self.elements[t]), 0, tuple(nb), int(self.generation[t]))

    @cached_property
    def vertex_labels(self) -> np.ndarray:
        """Per vertex: bitmask of adjacent boundary labels (1 dirichlet, 2 neumann)."""
        mask = np.zeros(self.n_vertices, dtype=np.int64)
        for lab in (DIRICHLET, NEUMANN):
            v = self.boundary_edges[self.boundary_labels == lab].ravel()
            mask[v] |= lab
        return mask

    def _validate(self) -> None:
        s = np.sort(self.elements, axis=1)
        if len(np.unique(s, axis=0)) != len(s):
            raise MeshError("non-conforming mesh: duplicate triangle")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.elements.ravel()] = True
        if not used.all():
            raise MeshError("vertex not used by any triangle")
        ed = self.edges  # raises on adjacency/label problems
        # hanging vertices sit strictly inside a boundary edge of a neighbour
        bnd = ed.vertices[ed.boundary]
        if len(bnd) * self.n_vertices <= 5_000_000:
            p = self.coords[bnd[:, 0]][:, None, :]
            q = self.coords[bnd[:, 1]][:, None, :]
            x = self.coords[None, :, :]
            d = q - p
            L2 = np.sum(d * d, axis=2)
            s_ = np.sum((x - p) * d, axis=2) / L2
            cross = d[..., 0] * (x - p)[..., 1] - d[..., 1] * (x - p)[..., 0]
            inside = (s_ > 1e-10) & (s_ < 1 - 1e-10) & (np.abs(cross) <= 1e-10 * L2)
            if inside.any():
                raise MeshError("non-conforming mesh: hanging vertex on an edge")


def _signed_area2(coords, elems) -> np.ndarray:
    P = coords[elems]
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]


def _rotate_longest_first(coords, elems) -> np.ndarray:
    P = coords[elems]
    L = np.linalg.norm(P[:, LOCAL_EDGES[:, 1]] - P[:, LOCAL_EDGES[:, 0]], axis=2)
    # longest edge, ties by smallest opposite vertex id
    Lr = np.round(L / L.max(axis=1, keepdims=True), 12)
    key = np.where(Lr == Lr.max(axis=1, keepdims=True), elems, np.iinfo(np.int64).max)
    j = np.argmin(key, axis=1)
    idx = (j[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(elems, idx, axis=1)


# ---------------------------------------------------------------------------
# file format


def load_mesh(text_or_path) -> Mesh:
    """Parse the line-oriented mesh format.

    ``vertices N`` followed by N lines ``x y``; ``triangles M`` followed by M
    lines ``v0 v1 v2``; ``boundary K`` followed by K lines ``va vb label``.
    Indices are 0-based, ``#`` starts a comment.
    """
    if isinstance(text_or_path, Path) or (
        isinstance(text_or_path, str) and "\n" not in text_or_path and Path(text_or_path).is_file()
    ):
        text = Path(text_or_path).read_text()
    else:
        text = text_or_path
    lines = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    sections = {}
    i = 0
    try:
        while i < len(lines):
            head = lines[i]
            if len(head) != 2 or head[0] not in ("vertices", "triangles", "boundary"):
                raise MeshError(f"unexpected line: {' '.join(head)}")
            n = int(head[1])
            sections[head[0]] = lines[i + 1 : i + 1 + n]
            if len(sections[head[0]]) != n:
                raise MeshError(f"section {head[0]} truncated")
            i += 1 + n
        coords = [[float(a) for a in ln] for ln in sections["vertices"]]
        tris = [[int(a) for a in ln] for ln in sections["triangles"]]
        bnd = [[int(ln[0]), int(ln[1])] for ln in sections.get("boundary", [])]
        labels = [ln[2] for ln in sections.get("boundary", [])]
    except KeyError as exc:
        raise MeshError(f"missing section {exc}") from None
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"parse failure: {exc}") from None
    if any(len(c) != 2 for c in coords) or any(len(t) != 3 for t in tris):
        raise MeshError("parse failure: wrong number of entries")
    if any(l not in ("dirichlet", "neumann") for l in labels):
        raise MeshError("boundary label must be dirichlet or neumann")
    return Mesh(coords, tris, bnd, labels)


def format_mesh(mesh: Mesh) -> str:
    out = [f"vertices {mesh.n_vertices}"]
    out += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.coords]
    out.append(f"triangles {mesh.n_triangles}")
    out += [" ".join(str(v) for v in t) for t in mesh.elements]
    out.append(f"boundary {len(mesh.boundary_edges)}")
    out += [f"{a} {b} {LABELS[l]}" for (a, b), l in zip(mesh.boundary_edges, mesh.boundary_labels)]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# refinement


def _split_boundary(mesh: Mesh, mid: np.ndarray):
    """Split boundary edges whose midpoint exists; labels are inherited."""
    ed = mesh.edges
    N = mesh.n_vertices
    codes = _pair_codes(ed.vertices, N)
    bcodes = _pair_codes(mesh.boundary_edges, N)
    e = np.searchsorted(codes, bcodes)
    m = mid[e]
    keep = m < 0
    a, b = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    split = ~keep
    new_edges = np.concatenate(
        [
            mesh.boundary_edges[keep],
            np.column_stack([a[split], m[split]]),
            np.column_stack([m[split], b[split]]),
        ]
    )
    lab = mesh.boundary_labels
    new_labels = np.concatenate([lab[keep], lab[split], lab[split]])
    return new_edges, new_labels


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    """Red refinement: every triangle into four similar children.

    Children inherit the refinement edge parallel to the parent's, which
    keeps a compatible newest-vertex labeling compatible.
    """
    for _ in range(times):
        ed = mesh.edges
        N = mesh.n_vertices
        mid = N + np.arange(len(ed))
        coords = np.vstack([mesh.coords, 0.5 * (mesh.coords[ed.vertices[:, 0]] + mesh.coords[ed.vertices[:, 1]])])
        v0, v1, v2 = mesh.elements.T
        m0, m1, m2 = mid[ed.elem2edge].T
        children = np.stack(
            [
                np.column_stack([v0, m2, m1]),
                np.column_stack([m2, v1, m0]),
                np.column_stack([m1, m0, v2]),
                np.column_stack([m0, m1, m2]),
            ],
            axis=1,
        ).reshape(-1, 3)
        gen = np.repeat(mesh.generation + 2, 4)
        bnd, lab = _split_boundary(mesh, mid)
        mesh = Mesh(coords, children, bnd, lab, gen, assign_refinement_edges=False, validate=False)
    return mesh


def bisect(mesh: Mesh, marked) -> Mesh:
    """Newest vertex bisection of the marked triangles with conforming closure.

    Every marked triangle is bisected at least once across its refinement
    edge; neighbours are bisected as needed so that no hanging vertex
    remains.  Children have their refinement edge opposite the new vertex.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise IndexError("marked triangle out of range")
    ed = mesh.edges
    E = len(ed)
    e2e = ed.elem2edge
    refine_edge = np.zeros(E, dtype=bool)
    refine_edge[e2e[marked, 0]] = True
    for _ in range(E + 1):
        need = refine_edge[e2e].any(axis=1) & ~refine_edge[e2e[:, 0]]
        if not need.any():
            break
        refine_edge[e2e[need, 0]] = True
    else:  # pragma: no cover - defensive
        raise RuntimeError("bisection closure did not terminate")

    N = mesh.n_vertices
    split = np.flatnonzero(refine_edge)
    mid = -np.ones(E, dtype=np.int64)
    mid[split] = N + np.arange(len(split))
    coords = np.vstack(
        [mesh.coords, 0.5 * (mesh.coords[ed.vertices[split, 0]] + mesh.coords[ed.vertices[split, 1]])]
    )
    Nn = len(coords)
    codes = _pair_codes(ed.vertices[split], Nn)  # sorted since split is sorted

    elems = mesh.elements.copy()
    gen = mesh.generation.copy()
    while True:
        c = _pair_codes(elems[:, 1:3], Nn)
        pos = np.searchsorted(codes, c)
        hit = (pos < len(codes)) & (codes[np.minimum(pos, len(codes) - 1)] == c)
        if not hit.any():
            break
        m = N + pos[hit]
        v0, v1, v2 = elems[hit].T
        ch = np.concatenate([np.column_stack([m, v0, v1]), np.column_stack([m, v2, v0])])
        elems = np.concatenate([elems[~hit], ch])
        g = gen[hit] + 1
        gen = np.concatenate([gen[~hit], g, g])

    bnd, lab = _split_boundary(mesh, mid)
    return Mesh(coords, elems, bnd, lab, gen, assign_refinement_edges=False, validate=False)


def geometry(mesh: Mesh, t: int) -> Geometry:
    return mesh.geometry(t)

"""Conforming simplicial meshes and piecewise-linear nodal interpolation.

A mesh is a list of vertices in R^d plus a list of d-simplices given by
vertex indices.  Loading or building a mesh can run a conformity check:
simplices must be non-degenerate, pairwise non-overlapping in their
interiors, and no vertex may lie inside or on a simplex it is not part of
(no hanging nodes).

The module also provides the local objects the network compiler consumes:
the star of a vertex (its incident simplices together with the affine
function that matches the nodal hat function on each of them), a local
convexity test for stars, volume-weighted uniform sampling, and the mesh
quality numbers (maximum vertex valence, shape regularity).
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog

from .cpwl import AffineFunc
from .errors import DegenerateSimplex, NonConforming, OutsideDomain, SingularSystem

logger = logging.getLogger(__name__)

#: Weak membership slack for barycentric coordinates.
BARY_TOL = 1e-10
#: Non-degeneracy threshold on the homogeneous vertex-matrix determinant.
DEGENERACY_TOL = 1e-12
#: Residual bound for the local affine interpolation solves.
INTERP_RESIDUAL_TOL = 1e-12

MESH_SCHEMA_VERSION = "1"


@dataclass
class SimplicialMesh:
    """A conforming simplicial mesh with precomputed barycentric transforms.

    Attributes:
        dim: Ambient (= element) dimension ``d``.
        vertices: Vertex coordinates, shape ``(n, d)``.
        simplices: Vertex indices per element, shape ``(m, d+1)``.
        boundary_vertices: Sorted indices of vertices on the domain boundary
            (vertices of facets belonging to exactly one element).
        bary_inverse: Stacked inverses of the homogeneous vertex matrices,
            shape ``(m, d+1, d+1)``; barycentric coordinates of ``x`` in
            element ``k`` are ``bary_inverse[k] @ [x, 1]``.
        volumes: Element volumes, shape ``(m,)``.
        vertex_to_simplices: For each vertex, the sorted indices of elements
            containing it.
    """

    dim: int
    vertices: NDArray[np.float64]
    simplices: NDArray[np.int64]
    boundary_vertices: NDArray[np.int64]
    bary_inverse: NDArray[np.float64]
    volumes: NDArray[np.float64]
    vertex_to_simplices: list[tuple[int, ...]] = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_simplices(self) -> int:
        return self.simplices.shape[0]

    @property
    def interior_vertices(self) -> NDArray[np.int64]:
        mask = np.ones(self.num_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.nonzero(mask)[0]

    def barycentric(self, k: int, X: NDArray[np.float64]) -> NDArray[np.float64]:
        """Barycentric coordinates of points ``X`` (n, d) in element ``k``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        hom = np.hstack([X, np.ones((X.shape[0], 1))])
        return hom @ self.bary_inverse[k].T

    def contains(self, k: int, X: NDArray[np.float64], tol: float = BARY_TOL) -> NDArray[np.bool_]:
        """Weak membership of points in the closed element ``k``."""
        lam = self.barycentric(k, X)
        return np.all(lam >= -tol, axis=1)


@dataclass
class VertexStar:
    """The star of a mesh vertex, with the per-element hat-function affines.

    Attributes:
        center: The vertex index.
        incident: Sorted indices of elements containing the vertex.
        local_affines: For each incident element, the affine function that
            equals 1 at the center vertex and 0 at the element's other
            vertices (parallel lists with ``incident``).
    """

    center: int
    incident: tuple[int, ...]
    local_affines: list[AffineFunc]


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------


def _facets(simplex: NDArray[np.int64]) -> list[frozenset[int]]:
    """All (d-1)-faces of a simplex, as frozensets of vertex indices."""
    verts = [int(v) for v in simplex]
    return [frozenset(verts[:i] + verts[i + 1 :]) for i in range(len(verts))]


def _check_no_interior_overlap(
    mesh: SimplicialMesh, k1: int, k2: int, shared: set[int]
) -> None:
    """Raises NonConforming if elements k1, k2 share interior points.

    Pairs sharing a full facet are tested by requiring the two opposite
    vertices on strictly opposite sides of the facet's hyperplane.  Other
    pairs are tested with a linear program that maximizes the joint
    barycentric slack: a positive optimum means a common interior point.
    """
    d = mesh.dim
    s1, s2 = mesh.simplices[k1], mesh.simplices[k2]
    if len(shared) == d:
        P = mesh.vertices[sorted(shared)]
        if d == 1:
            n = np.array([1.0])
        else:
            E = P[1:] - P[0]
            _, _, Vt = np.linalg.svd(E)
            n = Vt[-1]
        o1 = next(int(v) for v in s1 if int(v) not in shared)
        o2 = next(int(v) for v in s2 if int(v) not in shared)
        side1 = float(n @ (mesh.vertices[o1] - P[0]))
        side2 = float(n @ (mesh.vertices[o2] - P[0]))
        if side1 * side2 >= 0:
            raise NonConforming(
                f"elements {k1} and {k2} lie on the same side of their shared facet"
            )
        return
    # General pair: maximize eps subject to all barycentric coordinates of a
    # common point being >= eps, for both elements.  The barycentric
    # coordinate functionals are the rows of the stored inverse transforms.
    rows = []
    rhs = []
    for k in (k1, k2):
        B = mesh.bary_inverse[k]  # lam_j(x) = B[j, :d] @ x + B[j, d]
        for j in range(d + 1):
            rows.append(np.concatenate([-B[j, :d], [1.0]]))
            rhs.append(B[j, d])
    res = linprog(
        c=np.concatenate([np.zeros(d), [-1.0]]),
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=[(None, None)] * (d + 1),
        method="highs",
    )
    if res.status == 0 and res.x is not None and res.x[-1] > BARY_TOL:
        raise NonConforming(
            f"elements {k1} and {k2} overlap in their interiors "
            f"(joint slack {res.x[-1]:.3e})"
        )


def build_mesh(
    vertices: NDArray[np.float64],
    simplices: NDArray[np.int64],
    validate: bool = True,
) -> SimplicialMesh:
    """Builds a mesh, precomputing transforms and optionally validating it.

    Always checked: index bounds, repeated vertices within an element,
    element non-degeneracy, duplicate elements.  With ``validate=True``,
    additionally: no vertex inside or on a foreign element (hanging nodes)
    and pairwise disjoint element interiors.

    Args:
        vertices: Coordinates, shape ``(n, d)`` (a 1D array is treated as
            ``(n, 1)``).
        simplices: Vertex index array of shape ``(m, d+1)``.
        validate: Run the full conformity check.

    Returns:
        The constructed mesh.

    Raises:
        DegenerateSimplex: If an element has (near-)zero volume.
        NonConforming: If the conformity check fails.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim == 1:
        vertices = vertices[:, None]
    simplices = np.asarray(simplices, dtype=np.int64)
    if simplices.ndim == 1:
        simplices = simplices[None, :]
    n, d = vertices.shape
    m, dd = simplices.shape
    if dd != d + 1:
        raise ValueError(f"elements of a {d}-dimensional mesh need {d + 1} vertices")
    if simplices.min() < 0 or simplices.max() >= n:
        raise NonConforming("element refers to a vertex index out of range")
    for k in range(m):
        if len(set(int(v) for v in simplices[k])) != d + 1:
            raise NonConforming(f"element {k} repeats a vertex")

    # Homogeneous vertex matrices, their inverses and element volumes.
    bary_inverse = np.empty((m, d + 1, d + 1))
    volumes = np.empty(m)
    fact = math.factorial(d)
    for k in range(m):
        V = vertices[simplices[k]]  # (d+1, d)
        A = np.vstack([V.T, np.ones(d + 1)])  # columns are homogeneous vertices
        det = np.linalg.det(A)
        if abs(det) < DEGENERACY_TOL:
            raise DegenerateSimplex(f"element {k} has volume ~ {abs(det) / fact:.3e}")
        bary_inverse[k] = np.linalg.inv(A)
        volumes[k] = abs(det) / fact

    keys = [frozenset(int(v) for v in simplices[k]) for k in range(m)]
    if len(set(keys)) != m:
        raise NonConforming("duplicate elements")

    # Boundary vertices from facets used by exactly one element.
    facet_count: dict[frozenset[int], int] = {}
    for k in range(m):
        for f in _facets(simplices[k]):
            facet_count[f] = facet_count.get(f, 0) + 1
    if any(cnt > 2 for cnt in facet_count.values()):
        raise NonConforming("a facet is shared by more than two elements")
    boundary: set[int] = set()
    for f, cnt in facet_count.items():
        if cnt == 1:
            boundary |= f

    v2s: list[list[int]] = [[] for _ in range(n)]
    for k in range(m):
        for v in simplices[k]:
            v2s[int(v)].append(k)
    vertex_to_simplices = [tuple(sorted(s)) for s in v2s]
    if any(not s for s in vertex_to_simplices):
        raise NonConforming("mesh has an unused vertex")

    mesh = SimplicialMesh(
        dim=d,
        vertices=vertices,
        simplices=simplices,
        boundary_vertices=np.array(sorted(boundary), dtype=np.int64),
        bary_inverse=bary_inverse,
        volumes=volumes,
        vertex_to_simplices=vertex_to_simplices,
    )

    if validate:
        # Hanging nodes: no vertex inside or on a foreign closed element.
        for k in range(m):
            members = set(int(v) for v in simplices[k])
            lam = mesh.barycentric(k, vertices)
            inside = np.all(lam >= -BARY_TOL, axis=1)
            for v in np.nonzero(inside)[0]:
                if int(v) not in members:
                    raise NonConforming(
                        f"vertex {int(v)} lies on or inside element {k} "
                        "without being one of its vertices"
                    )
        # Pairwise interior overlaps, with a bounding-box prefilter.
        los = np.array([vertices[simplices[k]].min(axis=0) for k in range(m)])
        his = np.array([vertices[simplices[k]].max(axis=0) for k in range(m)])
        for k1, k2 in itertools.combinations(range(m), 2):
            if np.any(los[k1] > his[k2] + BARY_TOL) or np.any(los[k2] > his[k1] + BARY_TOL):
                continue
            shared = set(int(v) for v in simplices[k1]) & set(int(v) for v in simplices[k2])
            _check_no_interior_overlap(mesh, k1, k2, shared)
        logger.debug("mesh validated: %d vertices, %d elements, d=%d", n, m, d)

    return mesh


# ---------------------------------------------------------------------------
# Stars, convexity, quality numbers
# ---------------------------------------------------------------------------


def vertex_star(mesh: SimplicialMesh, i: int) -> VertexStar:
    """Builds the star of vertex ``i`` with its per-element hat affines.

    On each incident element the returned affine function solves the
    interpolation conditions: value 1 at vertex ``i``, value 0 at the other
    element vertices.

    Raises:
        SingularSystem: If an interpolation solve leaves a residual above
            tolerance (cannot happen on a non-degenerate element).
    """
    incident = mesh.vertex_to_simplices[i]
    affines = []
    for k in incident:
        verts = mesh.simplices[k]
        M = np.hstack([mesh.vertices[verts], np.ones((mesh.dim + 1, 1))])
        rhs = (verts == i).astype(float)
        coef = np.linalg.solve(M, rhs)
        resid = float(np.max(np.abs(M @ coef - rhs)))
        if resid > INTERP_RESIDUAL_TOL:
            raise SingularSystem(
                f"interpolation residual {resid:.3e} on element {k} at vertex {i}"
            )
        affines.append(AffineFunc(coef[:-1], float(coef[-1])))
    return VertexStar(center=i, incident=incident, local_affines=affines)


def is_locally_convex(mesh: SimplicialMesh, i: int, tol: float = BARY_TOL) -> bool:
    """Tests whether the star of vertex ``i`` is a convex set.

    The star is star-shaped, so it is convex exactly when every boundary
    facet of the star (a facet belonging to exactly one incident element)
    supports it: all star vertices must lie weakly on the inner side of the
    facet's hyperplane, oriented by the element vertex opposite the facet.
    """
    incident = mesh.vertex_to_simplices[i]
    facet_owner: dict[frozenset[int], list[int]] = {}
    for k in incident:
        for f in _facets(mesh.simplices[k]):
            facet_owner.setdefault(f, []).append(k)
    star_vertices = sorted({int(v) for k in incident for v in mesh.simplices[k]})
    P_all = mesh.vertices[star_vertices]
    for f, owners in facet_owner.items():
        if len(owners) != 1:
            continue
        P = mesh.vertices[sorted(f)]
        if mesh.dim == 1:
            normal = np.array([1.0])
        else:
            E = P[1:] - P[0]
            _, _, Vt = np.linalg.svd(E)
            normal = Vt[-1]
        opp = next(int(v) for v in mesh.simplices[owners[0]] if int(v) not in f)
        if float(normal @ (mesh.vertices[opp] - P[0])) > 0:
            normal = -normal
        # Now the owning element lies on the side normal . (x - P0) <= 0.
        if np.any(P_all @ normal - normal @ P[0] > tol):
            return False
    return True


def compute_kh(mesh: SimplicialMesh) -> int:
    """Maximum number of elements meeting at a single vertex."""
    return max(len(s) for s in mesh.vertex_to_simplices)


def _circumradius(V: NDArray[np.float64]) -> float:
    """Circumradius of the simplex with vertex rows ``V`` ((d+1, d))."""
    v0 = V[0]
    E = V[1:] - v0  # (d, d)
    # Solve 2 (v_j - v_0) . x = |v_j|^2 - |v_0|^2 for the circumcenter x.
    center = np.linalg.solve(2.0 * E, np.sum(V[1:] ** 2, axis=1) - np.sum(v0**2))
    return float(np.linalg.norm(center - v0))


def _facet_measure(P: NDArray[np.float64]) -> float:
    """(d-1)-volume of the facet with vertex rows ``P`` ((d, d)).

    A single point (d = 1) has measure 1, which makes the inradius formula
    ``r = d V / sum(facet measures)`` reduce to the half-length in 1D.
    """
    q = P.shape[0] - 1
    if q == 0:
        return 1.0
    E = P[1:] - P[0]
    G = E @ E.T
    return math.sqrt(max(float(np.linalg.det(G)), 0.0)) / math.factorial(q)


def shape_regularity(mesh: SimplicialMesh) -> float:
    """Minimum inradius/circumradius ratio over all elements.

    Inradius is ``d V / sum(facet measures)``; the circumcenter solves the
    equal-distance linear system.  For 1D meshes both radii equal the
    half-length, so the result is exactly 1.0.
    """
    best = np.inf
    for k in range(mesh.num_simplices):
        V = mesh.vertices[mesh.simplices[k]]
        facets_sum = sum(
            _facet_measure(np.delete(V, j, axis=0)) for j in range(mesh.dim + 1)
        )
        r = mesh.dim * mesh.volumes[k] / facets_sum
        R = _circumradius(V)
        best = min(best, r / R)
    return float(best)


# ---------------------------------------------------------------------------
# Point location, interpolation, sampling
# ---------------------------------------------------------------------------


def find_simplex(mesh: SimplicialMesh, X: NDArray[np.float64], tol: float = BARY_TOL) -> NDArray[np.int64]:
    """Index of a containing element per point (-1 where none contains it)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.full(X.shape[0], -1, dtype=np.int64)
    remaining = np.arange(X.shape[0])
    for k in range(mesh.num_simplices):
        if remaining.size == 0:
            break
        inside = mesh.contains(k, X[remaining], tol)
        hit = remaining[inside]
        out[hit] = k
        remaining = remaining[~inside]
    return out


def interpolate(
    mesh: SimplicialMesh, coeffs: NDArray[np.float64], X: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Evaluates the nodal piecewise-linear interpolant at points ``X``.

    Args:
        mesh: The mesh.
        coeffs: One nodal value per mesh vertex, shape ``(n,)``.
        X: Points, shape ``(q, d)`` (or ``(q,)`` for 1D meshes).

    Returns:
        Values, shape ``(q,)``.

    Raises:
        OutsideDomain: If a point lies in no element.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (mesh.num_vertices,):
        raise ValueError("need one coefficient per mesh vertex")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and mesh.dim == 1:
        X = X[:, None]
    X = np.atleast_2d(X)
    ks = find_simplex(mesh, X)
    if np.any(ks < 0):
        bad = X[ks < 0][0]
        raise OutsideDomain(f"point {bad!r} lies outside the mesh")
    vals = np.empty(X.shape[0])
    for k in np.unique(ks):
        sel = ks == k
        lam = mesh.barycentric(int(k), X[sel])
        vals[sel] = lam @ coeffs[mesh.simplices[int(k)]]
    return vals


def sample_points(
    mesh: SimplicialMesh, n: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Samples ``n`` points uniformly from the meshed domain.

    An element is picked with probability proportional to its volume, then a
    point is drawn uniformly inside it via symmetric-Dirichlet barycentric
    weights.
    """
    probs = mesh.volumes / mesh.volumes.sum()
    ks = rng.choice(mesh.num_simplices, size=n, p=probs)
    lam = rng.dirichlet(np.ones(mesh.dim + 1), size=n)
    out = np.empty((n, mesh.dim))
    for k in np.unique(ks):
        sel = ks == k
        out[sel] = lam[sel] @ mesh.vertices[mesh.simplices[int(k)]]
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def mesh_to_dict(mesh: SimplicialMesh) -> dict:
    return {
        "schema": MESH_SCHEMA_VERSION,
        "dim": mesh.dim,
        "vertices": mesh.vertices.tolist(),
        "simplices": mesh.simplices.tolist(),
        "boundary": mesh.boundary_vertices.tolist(),
    }


def mesh_from_dict(d: dict, validate: bool = True) -> SimplicialMesh:
    if d.get("schema", MESH_SCHEMA_VERSION) != MESH_SCHEMA_VERSION:
        raise ValueError(f"unsupported mesh schema {d.get('schema')!r}")
    mesh = build_mesh(
        np.array(d["vertices"], dtype=float),
        np.array(d["simplices"], dtype=np.int64),
        validate=validate,
    )
    if "boundary" in d and d["boundary"] is not None:
        given = sorted(int(v) for v in d["boundary"])
        derived = mesh.boundary_vertices.tolist()
        if given != derived:
            raise NonConforming(
                "stored boundary vertex list disagrees with the mesh topology"
            )
    return mesh


def save_mesh(mesh: SimplicialMesh, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh_to_dict(mesh), fh)


def load_mesh(path: str, validate: bool = True) -> SimplicialMesh:
    with open(path, encoding="utf-8") as fh:
        return mesh_from_dict(json.load(fh), validate=validate)

"""Continuous piecewise-linear (CPWL) functions and their lattice forms.

A CPWL function can be described two ways here:

* :class:`CpwlPieces` — an explicit list of affine pieces together with one
  convex polyhedral region per piece (half-space intersections) covering a
  box domain.
* :class:`LatticeForm` — a max-of-mins expression ``max_k min_{i in s_k} l_i``
  over a shared list of affine functions, with one index clause ``s_k`` per
  max argument.

The module constructs lattice forms from piece lists along two routes:

* via the partition of the domain into unique-order cells (cells of the
  arrangement of all pairwise difference hyperplanes, on which the value
  ordering of the pieces is constant), and
* directly from the convex piece regions, certifying clause membership at
  the region's polytope vertices.

It also provides the 1D separating-line witness used to justify the
lattice construction, plus polygon/polytope helpers for dimensions 1 and 2.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import (
    AmbiguousActivePiece,
    DimensionUnsupported,
    DuplicatePieces,
    OutsideDomain,
    PreconditionViolated,
    UnboundedRegionUnsupported,
)

logger = logging.getLogger(__name__)

#: Tolerance for half-space membership and geometric predicates.
GEOM_TOL = 1e-10
#: Two affine pieces are considered identical if all parameters differ by
#: less than this, and polygon cells below this area are dropped.
DISTINCT_TOL = 1e-12
AREA_TOL = 1e-12


# ---------------------------------------------------------------------------
# Affine functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineFunc:
    """An affine function ``x -> gradient . x + offset`` on R^d.

    Attributes:
        gradient: Coefficient vector of shape ``(d,)``.
        offset: Constant term.
    """

    gradient: NDArray[np.float64]
    offset: float

    def __post_init__(self) -> None:
        g = np.atleast_1d(np.asarray(self.gradient, dtype=float))
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "offset", float(self.offset))
        if not np.all(np.isfinite(g)) or not math.isfinite(self.offset):
            raise ValueError("affine function has non-finite parameters")

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]

    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64] | float:
        """Evaluates at a point ``(d,)`` or batch ``(n, d)`` of points."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(x @ self.gradient + self.offset)
        return x @ self.gradient + self.offset


def affines_close(p: AffineFunc, q: AffineFunc, tol: float = DISTINCT_TOL) -> bool:
    """True if two affine functions agree componentwise within ``tol``."""
    return bool(
        np.all(np.abs(p.gradient - q.gradient) < tol)
        and abs(p.offset - q.offset) < tol
    )


def check_distinct(pieces: list[AffineFunc], tol: float = DISTINCT_TOL) -> None:
    """Raises DuplicatePieces if any two pieces coincide within ``tol``."""
    for i, j in itertools.combinations(range(len(pieces)), 2):
        if affines_close(pieces[i], pieces[j], tol):
            raise DuplicatePieces(f"pieces {i} and {j} coincide within {tol}")


# ---------------------------------------------------------------------------
# Polyhedra helpers (half-space intersections A x <= c)
# ---------------------------------------------------------------------------


def as_halfspaces(A: NDArray[np.float64], c: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if A.shape[0] != c.shape[0]:
        raise ValueError("half-space matrix and offsets disagree in length")
    return A, c


def box_halfspaces(lo: NDArray, hi: NDArray) -> tuple[NDArray, NDArray]:
    """Half-space form of the box ``lo <= x <= hi``."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.shape[0]
    A = np.vstack([np.eye(d), -np.eye(d)])
    c = np.concatenate([hi, -lo])
    return A, c


def polytope_vertices(
    A: NDArray[np.float64], c: NDArray[np.float64], tol: float = GEOM_TOL
) -> NDArray[np.float64]:
    """Enumerates vertices of the polytope ``{x : A x <= c}``.

    Candidate vertices are intersections of ``d`` of the bounding
    hyperplanes, kept when they satisfy all inequalities within ``tol``.
    Near-duplicate vertices are merged.

    Args:
        A: Half-space normals, shape ``(k, d)``.
        c: Half-space offsets, shape ``(k,)``.
        tol: Feasibility slack.

    Returns:
        Array of vertices, shape ``(v, d)`` (possibly empty).
    """
    A, c = as_halfspaces(A, c)
    k, d = A.shape
    verts: list[NDArray] = []
    for rows in itertools.combinations(range(k), d):
        M = A[list(rows)]
        rhs = c[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, rhs)
        if np.all(A @ x <= c + tol):
            verts.append(x)
    if not verts:
        return np.empty((0, d))
    out: list[NDArray] = []
    for v in verts:
        if not any(np.linalg.norm(v - w) < 1e-9 for w in out):
            out.append(v)
    return np.array(out)


def clip_polygon(
    poly: NDArray[np.float64], normal: NDArray[np.float64], offset: float
) -> NDArray[np.float64]:
    """Clips a convex polygon against the half-plane ``normal . x <= offset``.

    Uses Sutherland-Hodgman on the vertex loop.  Returns the clipped
    polygon's vertices (possibly empty).
    """
    if poly.shape[0] == 0:
        return poly
    out: list[NDArray] = []
    n = poly.shape[0]
    vals = poly @ normal - offset
    for i in range(n):
        j = (i + 1) % n
        vi, vj = vals[i], vals[j]
        if vi <= 0:
            out.append(poly[i])
        if (vi < 0 < vj) or (vj < 0 < vi):
            t = vi / (vi - vj)
            out.append(poly[i] + t * (poly[j] - poly[i]))
    if not out:
        return np.empty((0, poly.shape[1]))
    return np.array(out)


def polygon_area(poly: NDArray[np.float64]) -> float:
    """Area of a 2D polygon by the shoelace formula (vertices in loop order)."""
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def interior_points(poly: NDArray[np.float64], n: int, rng: np.random.Generator) -> NDArray:
    """Samples ``n`` interior points of a convex polygon/segment.

    Each point is a strictly positive convex combination of the vertices
    (Dirichlet weights), hence lies in the relative interior.
    """
    w = rng.dirichlet(np.ones(poly.shape[0]), size=n)
    return w @ poly


# ---------------------------------------------------------------------------
# CPWL piece lists
# ---------------------------------------------------------------------------


@dataclass
class CpwlPieces:
    """A CPWL function given by affine pieces on convex polyhedral regions.

    Attributes:
        dim: Ambient dimension ``d``.
        pieces: Distinct affine pieces, one per region.
        regions: Convex regions as half-space pairs ``(A, c)`` meaning
            ``A x <= c``; ``regions[i]`` is where ``pieces[i]`` is active.
        domain_box: Pair ``(lo, hi)`` bounding the domain, or ``None`` for
            all of R^d (regions must then cover R^d).
    """

    dim: int
    pieces: list[AffineFunc]
    regions: list[tuple[NDArray, NDArray]]
    domain_box: tuple[NDArray, NDArray] | None = None

    def __post_init__(self) -> None:
        if len(self.pieces) != len(self.regions):
            raise ValueError("need exactly one region per piece")
        if not self.pieces:
            raise ValueError("need at least one piece")
        for p in self.pieces:
            if p.dim != self.dim:
                raise ValueError("piece dimension disagrees with dim")
        check_distinct(self.pieces)
        self.regions = [as_halfspaces(A, c) for A, c in self.regions]
        if self.domain_box is not None:
            lo = np.atleast_1d(np.asarray(self.domain_box[0], dtype=float))
            hi = np.atleast_1d(np.asarray(self.domain_box[1], dtype=float))
            if lo.shape[0] != self.dim or np.any(hi <= lo):
                raise ValueError("invalid domain box")
            self.domain_box = (lo, hi)

    @property
    def num_pieces(self) -> int:
        return len(self.pieces)

    def containing_regions(self, x: NDArray[np.float64]) -> list[int]:
        """Indices of all regions containing ``x`` (weak inequalities)."""
        x = np.asarray(x, dtype=float)
        out = []
        for i, (A, c) in enumerate(self.regions):
            if np.all(A @ x <= c + GEOM_TOL):
                out.append(i)
        return out

    def in_domain(self, x: NDArray[np.float64]) -> bool:
        if self.domain_box is None:
            return True
        lo, hi = self.domain_box
        return bool(np.all(x >= lo - GEOM_TOL) and np.all(x <= hi + GEOM_TOL))

    def __call__(self, X: NDArray[np.float64]) -> NDArray[np.float64] | float:
        single = np.asarray(X).ndim == 1
        X2 = np.atleast_2d(np.asarray(X, dtype=float))
        vals = eval_pieces(self, X2)
        return float(vals[0]) if single else vals

    def sample_domain(self, n: int, rng: np.random.Generator) -> NDArray:
        """Uniform random points in the domain box."""
        if self.domain_box is None:
            raise OutsideDomain("cannot sample an unbounded domain; set a domain box")
        lo, hi = self.domain_box
        return rng.uniform(lo, hi, size=(n, self.dim))

    def validate(self, rng: np.random.Generator, samples: int = 2000) -> None:
        """Sampling check that regions cover the domain and values are continuous.

        Every sampled domain point must belong to at least one region, and
        points claimed by several regions must get matching values from all
        of them (which is how disjoint-interior violations surface).
        """
        X = self.sample_domain(samples, rng)
        for x in X:
            idx = self.containing_regions(x)
            if not idx:
                raise OutsideDomain(f"regions do not cover domain point {x!r}")
            vals = [self.pieces[i](x) for i in idx]
            if max(vals) - min(vals) > 1e-8:
                raise ValueError(
                    f"pieces disagree at {x!r}: values {vals} — regions overlap "
                    "on a set of positive measure or the function is discontinuous"
                )


def eval_pieces(f: CpwlPieces, X: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluates a piece-list CPWL function at a batch of points.

    On region boundaries any containing region may be used; continuity makes
    the candidate values equal.

    Args:
        f: The function.
        X: Points, shape ``(n, d)``.

    Returns:
        Values, shape ``(n,)``.

    Raises:
        OutsideDomain: If some point lies outside every region or outside
            the domain box.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    vals = np.full(n, np.nan)
    found = np.zeros(n, dtype=bool)
    if f.domain_box is not None:
        lo, hi = f.domain_box
        inside_box = np.all(X >= lo - GEOM_TOL, axis=1) & np.all(X <= hi + GEOM_TOL, axis=1)
        if not np.all(inside_box):
            bad = X[~inside_box][0]
            raise OutsideDomain(f"point {bad!r} outside the domain box")
    for i, (A, c) in enumerate(f.regions):
        inside = np.all(X @ A.T <= c + GEOM_TOL, axis=1) & ~found
        if np.any(inside):
            vals[inside] = f.pieces[i](X[inside])
            found |= inside
    if not np.all(found):
        bad = X[~found][0]
        raise OutsideDomain(f"point {bad!r} outside every region")
    return vals


# ---------------------------------------------------------------------------
# Lattice forms
# ---------------------------------------------------------------------------


@dataclass
class LatticeForm:
    """A max-of-mins expression over a shared affine piece list.

    Attributes:
        pieces: Affine functions ``l_1 .. l_m``.
        clauses: Non-empty index subsets; the function is
            ``max_k min_{i in clauses[k]} pieces[i]``.
    """

    pieces: list[AffineFunc]
    clauses: list[tuple[int, ...]]

    def __post_init__(self) -> None:
        m = len(self.pieces)
        self.clauses = [tuple(int(i) for i in s) for s in self.clauses]
        for s in self.clauses:
            if not s:
                raise ValueError("empty clause")
            if any(i < 0 or i >= m for i in s):
                raise ValueError("clause index out of range")
        if not self.clauses:
            raise ValueError("need at least one clause")

    @property
    def num_pieces(self) -> int:
        return len(self.pieces)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def __call__(self, X: NDArray[np.float64]) -> NDArray[np.float64] | float:
        single = np.asarray(X).ndim == 1
        vals = eval_lattice(self, np.atleast_2d(np.asarray(X, dtype=float)))
        return float(vals[0]) if single else vals

    def dedup(self) -> "LatticeForm":
        """Removes exactly-identical clauses (order preserved otherwise)."""
        seen: set[tuple[int, ...]] = set()
        out = []
        for s in self.clauses:
            key = tuple(sorted(s))
            if key not in seen:
                seen.add(key)
                out.append(s)
        return LatticeForm(self.pieces, out)


def eval_lattice(f: LatticeForm, X: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluates ``max_k min_{i in s_k} l_i`` at a batch of points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.stack([p(X) for p in f.pieces], axis=1)  # (n, m)
    best = np.full(X.shape[0], -np.inf)
    for s in f.clauses:
        np.maximum(best, P[:, list(s)].min(axis=1), out=best)
    return best


# ---------------------------------------------------------------------------
# Unique-order partition (d <= 2)
# ---------------------------------------------------------------------------


@dataclass
class UniqueOrderCell:
    """A cell on which the ascending order of piece values is constant.

    Attributes:
        vertices: Cell polygon vertices (2D) or segment endpoints (1D),
            shape ``(p, d)``.
        order: Piece indices sorted by ascending value on the cell.
        sample_point: Interior point (vertex centroid) used for ordering.
    """

    vertices: NDArray[np.float64]
    order: tuple[int, ...]
    sample_point: NDArray[np.float64]


@dataclass
class UniqueOrderPartition:
    """Cells of the difference-hyperplane arrangement clipped to the domain."""

    dim: int
    cells: list[UniqueOrderCell] = field(default_factory=list)

    @property
    def num_cells(self) -> int:
        return len(self.cells)


def _require_box(f: CpwlPieces) -> tuple[NDArray, NDArray]:
    if f.domain_box is None:
        raise UnboundedRegionUnsupported(
            "operation needs a bounded domain; set a domain box"
        )
    return f.domain_box


def unique_order_partition(f: CpwlPieces) -> UniqueOrderPartition:
    """Partitions the domain box into cells of constant piece-value order.

    The cells are the full-dimensional cells of the arrangement of all
    pairwise difference hyperplanes ``{x : l_i(x) = l_j(x)}`` intersected
    with the domain box.  Cells with identical orderings are kept separate.
    Degenerate cells (length/area below tolerance) are dropped.

    Args:
        f: Piece-list CPWL function with pairwise distinct pieces, d <= 2.

    Returns:
        The partition with one ascending-order permutation per cell.

    Raises:
        DimensionUnsupported: If ``f.dim > 2``.
        DuplicatePieces: If two pieces coincide.
    """
    if f.dim > 2:
        raise DimensionUnsupported("unique-order partition implemented for d <= 2")
    check_distinct(f.pieces)
    lo, hi = _require_box(f)
    m = f.num_pieces

    if f.dim == 1:
        cuts = [float(lo[0]), float(hi[0])]
        for i, j in itertools.combinations(range(m), 2):
            da = f.pieces[i].gradient[0] - f.pieces[j].gradient[0]
            db = f.pieces[i].offset - f.pieces[j].offset
            if abs(da) > DISTINCT_TOL:
                x = -db / da
                if lo[0] + AREA_TOL < x < hi[0] - AREA_TOL:
                    cuts.append(float(x))
        xs = np.array(sorted(cuts))
        xs = xs[np.concatenate([[True], np.diff(xs) > AREA_TOL])]
        cells = []
        for a, b in zip(xs[:-1], xs[1:]):
            seg = np.array([[a], [b]])
            mid = np.array([(a + b) / 2.0])
            vals = np.array([p(mid) for p in f.pieces])
            cells.append(UniqueOrderCell(seg, tuple(np.argsort(vals, kind="stable")), mid))
        return UniqueOrderPartition(1, cells)

    # d == 2: sequential clipping of box polygon by each difference line.
    box_poly = np.array(
        [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
    )
    polys = [box_poly]
    for i, j in itertools.combinations(range(m), 2):
        n_ij = f.pieces[i].gradient - f.pieces[j].gradient
        c_ij = f.pieces[j].offset - f.pieces[i].offset
        if np.all(np.abs(n_ij) < DISTINCT_TOL):
            continue  # parallel pieces never cross
        nxt: list[NDArray] = []
        for poly in polys:
            below = clip_polygon(poly, n_ij, c_ij)
            above = clip_polygon(poly, -n_ij, -c_ij)
            for part in (below, above):
                if polygon_area(part) > AREA_TOL:
                    nxt.append(part)
        polys = nxt
    cells = []
    for poly in polys:
        x_star = poly.mean(axis=0)
        vals = np.array([p(x_star) for p in f.pieces])
        cells.append(UniqueOrderCell(poly, tuple(np.argsort(vals, kind="stable")), x_star))
    logger.debug("unique-order partition: m=%d pieces -> %d cells", m, len(cells))
    return UniqueOrderPartition(2, cells)


def lattice_from_unique_order(f: CpwlPieces, p: UniqueOrderPartition) -> LatticeForm:
    """Builds the lattice form with one clause per unique-order cell.

    On each cell the active piece ``l_k`` is found through region
    containment of the cell's sample point; the clause collects every piece
    whose value at the sample point is at least ``l_k``'s (the pieces lying
    weakly above the active one on the whole cell, since orderings are
    constant on cells).

    Raises:
        AmbiguousActivePiece: If no piece reproduces the function value at a
            cell's sample point within tolerance.
    """
    clauses = []
    for cell in p.cells:
        x_star = cell.sample_point
        candidates = f.containing_regions(x_star)
        if not candidates:
            raise AmbiguousActivePiece(
                f"no region of the source contains cell sample point {x_star!r}"
            )
        cand_vals = [f.pieces[i](x_star) for i in candidates]
        if max(cand_vals) - min(cand_vals) > DISTINCT_TOL:
            raise AmbiguousActivePiece(
                f"regions containing {x_star!r} give conflicting values {cand_vals}"
            )
        active = candidates[0]
        vals = np.array([q(x_star) for q in f.pieces])
        # The clause is the ascending-order suffix starting at the active
        # piece: everything valued at least the active piece on this cell.
        clause = tuple(
            int(i) for i in range(f.num_pieces) if vals[i] >= vals[active] - DISTINCT_TOL
        )
        clauses.append(clause)
    return LatticeForm(list(f.pieces), clauses)


def lattice_from_convex_regions(f: CpwlPieces) -> LatticeForm:
    """Builds the lattice form with one clause per convex piece region.

    Membership of piece ``i`` in clause ``k`` means ``l_i >= l_k`` on the
    whole region of piece ``k``; because both are affine and the region is
    the convex hull of its vertices, it is enough to check the inequality at
    every vertex of the (box-clipped) region polytope.

    Raises:
        UnboundedRegionUnsupported: If no domain box is available to make
            the regions bounded.
    """
    lo, hi = _require_box(f)
    boxA, boxc = box_halfspaces(lo, hi)
    clauses = []
    for k, (A, c) in enumerate(f.regions):
        Afull = np.vstack([A, boxA])
        cfull = np.concatenate([c, boxc])
        verts = polytope_vertices(Afull, cfull)
        if verts.shape[0] == 0:
            raise PreconditionViolated(
                f"region {k} is empty within the domain box; every piece must "
                "be active somewhere"
            )
        lk = f.pieces[k]
        members = []
        for i, li in enumerate(f.pieces):
            diffs = li(verts) - lk(verts)
            if np.all(diffs >= -GEOM_TOL):
                members.append(i)
        clauses.append(tuple(members))
    return LatticeForm(list(f.pieces), clauses)


# ---------------------------------------------------------------------------
# 1D separating-line witness
# ---------------------------------------------------------------------------


def verify_1d_path_lemma(f: CpwlPieces) -> int:
    """Finds the separating-line witness for a 1D CPWL path on [0, 1].

    Writing the pieces in left-to-right cell order as ``l_i(t) = k_i t + b_i``
    with first piece ``l_0`` and last piece ``l_r``, the hypotheses are that
    ``l_0 > l_r`` at both ends of [0, 1], i.e. ``b_0 > b_r`` and
    ``k_0 + b_0 > k_r + b_r``.  The witness is a piece index ``p`` with
    minimal slope; its line satisfies ``b_p >= b_0`` (so ``l_p >= l_0`` on
    the first cell) and ``k_p + b_p <= k_r + b_r`` (so ``l_p <= l_r`` on the
    last cell).

    Args:
        f: 1D piece-list function on the domain box [0, 1], with regions
            ordered however; they are sorted by interval here.

    Returns:
        The witness piece index (into the left-to-right cell order).

    Raises:
        PreconditionViolated: If the domain is not [0, 1] or the endpoint
            domination hypotheses fail.
    """
    if f.dim != 1:
        raise PreconditionViolated("path lemma is one-dimensional")
    lo, hi = _require_box(f)
    if abs(lo[0]) > GEOM_TOL or abs(hi[0] - 1.0) > GEOM_TOL:
        raise PreconditionViolated("path lemma expects the domain [0, 1]")

    # Order pieces by their interval: use each region's feasible interval.
    intervals = []
    for idx, (A, c) in enumerate(f.regions):
        left, right = lo[0], hi[0]
        for a_row, c_row in zip(A[:, 0], c):
            if a_row > GEOM_TOL:
                right = min(right, c_row / a_row)
            elif a_row < -GEOM_TOL:
                left = max(left, c_row / a_row)
        if right - left < AREA_TOL:
            raise PreconditionViolated(f"region {idx} has empty interior in [0, 1]")
        intervals.append((left, idx))
    order = [idx for _, idx in sorted(intervals)]
    slopes = np.array([f.pieces[i].gradient[0] for i in order])
    offsets = np.array([f.pieces[i].offset for i in order])

    b0, br = offsets[0], offsets[-1]
    e0, er = slopes[0] + offsets[0], slopes[-1] + offsets[-1]
    if not (b0 > br + DISTINCT_TOL and e0 > er + DISTINCT_TOL):
        raise PreconditionViolated(
            "first piece must strictly dominate the last piece at both ends"
        )
    p = int(np.argmin(slopes))
    if not (offsets[p] >= b0 - GEOM_TOL and slopes[p] + offsets[p] <= er + GEOM_TOL):
        raise AssertionError(
            "witness inequalities failed; the input violates the path structure"
        )
    return p


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

CPWL_SCHEMA_VERSION = "1"
LATTICE_SCHEMA_VERSION = "1"


def pieces_to_dict(f: CpwlPieces) -> dict:
    """JSON-ready dict: pieces, regions (as half-space objects), domain box."""
    return {
        "schema": CPWL_SCHEMA_VERSION,
        "dim": f.dim,
        "pieces": [{"a": p.gradient.tolist(), "b": p.offset} for p in f.pieces],
        "regions": [
            [{"n": row.tolist(), "c": float(cc)} for row, cc in zip(A, c)]
            for A, c in f.regions
        ],
        "domain_box": None
        if f.domain_box is None
        else [f.domain_box[0].tolist(), f.domain_box[1].tolist()],
    }


def pieces_from_dict(d: dict) -> CpwlPieces:
    if d.get("schema", CPWL_SCHEMA_VERSION) != CPWL_SCHEMA_VERSION:
        raise ValueError(f"unsupported piece-list schema {d.get('schema')!r}")
    pieces = [AffineFunc(np.array(p["a"], dtype=float), float(p["b"])) for p in d["pieces"]]
    regions = []
    for reg in d["regions"]:
        if reg:
            A = np.array([h["n"] for h in reg], dtype=float)
            c = np.array([h["c"] for h in reg], dtype=float)
        else:
            A = np.zeros((0, int(d["dim"])))
            c = np.zeros(0)
        regions.append((A, c))
    box = d.get("domain_box")
    domain = None if box is None else (np.array(box[0], float), np.array(box[1], float))
    return CpwlPieces(int(d["dim"]), pieces, regions, domain)


def lattice_to_dict(f: LatticeForm) -> dict:
    return {
        "schema": LATTICE_SCHEMA_VERSION,
        "pieces": [{"a": p.gradient.tolist(), "b": p.offset} for p in f.pieces],
        "clauses": [list(s) for s in f.clauses],
    }


def lattice_from_dict(d: dict) -> LatticeForm:
    if d.get("schema", LATTICE_SCHEMA_VERSION) != LATTICE_SCHEMA_VERSION:
        raise ValueError(f"unsupported lattice schema {d.get('schema')!r}")
    pieces = [AffineFunc(np.array(p["a"], dtype=float), float(p["b"])) for p in d["pieces"]]
    return LatticeForm(pieces, [tuple(s) for s in d["clauses"]])


def save_pieces(f: CpwlPieces, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pieces_to_dict(f), fh)


def load_pieces(path: str) -> CpwlPieces:
    with open(path, encoding="utf-8") as fh:
        return pieces_from_dict(json.load(fh))

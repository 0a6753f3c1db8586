"""Piece-list CPWL functions, lattice forms, and the 1D path witness.

Oracles: direct max-of-affines evaluation for convex instances, shoelace
areas for polygon clipping, brute-force lattice evaluation, and hand
geometry for the halfspace utilities.
"""

import math

import numpy as np
import pytest
from helpers import (
    cpwl_suite,
    random_fan,
    random_max_affine,
    random_path_instance,
    random_zigzag,
)
from hypothesis import given, settings
from hypothesis import strategies as st

from cpwlrelu.cpwl import (
    AffineFunc,
    CpwlPieces,
    box_halfspaces,
    check_distinct,
    clip_polygon,
    eval_lattice,
    eval_pieces,
    lattice_from_convex_regions,
    lattice_from_dict,
    lattice_from_unique_order,
    lattice_to_dict,
    pieces_from_dict,
    pieces_to_dict,
    polygon_area,
    polytope_vertices,
    unique_order_partition,
    verify_1d_path_lemma,
)
from cpwlrelu.errors import (
    DuplicatePieces,
    OutsideDomain,
    PreconditionViolated,
)


# ---------------------------------------------------------------------------
# Basics
# ---------------------------------------------------------------------------


def test_affine_eval(rng):
    a = AffineFunc(np.array([2.0, -1.0]), 0.5)
    X = rng.normal(size=(50, 2))
    assert np.allclose(a(X), X @ np.array([2.0, -1.0]) + 0.5)
    assert a(np.array([1.0, 1.0])) == pytest.approx(1.5)


def test_check_distinct_rejects_duplicates():
    p = AffineFunc(np.array([1.0]), 0.0)
    q = AffineFunc(np.array([1.0]), 0.0)
    with pytest.raises(DuplicatePieces):
        check_distinct([p, q])


def test_eval_pieces_matches_max_for_convex(rng):
    for d, m in ((1, 4), (2, 5)):
        f = random_max_affine(d, m, rng)
        X = f.sample_domain(500, rng)
        direct = np.max(np.stack([p(X) for p in f.pieces]), axis=0)
        assert np.max(np.abs(eval_pieces(f, X) - direct)) < 1e-12


def test_eval_outside_domain_raises(rng):
    f = random_max_affine(1, 3, rng)
    with pytest.raises(OutsideDomain):
        eval_pieces(f, np.array([[5.0]]))


def test_validate_catches_inconsistent_pieces(rng):
    # Two overlapping regions carrying different affine values.
    box = (np.array([-1.0]), np.array([1.0]))
    whole = (np.array([[1.0], [-1.0]]), np.array([2.0, 2.0]))
    f = CpwlPieces(
        1,
        [AffineFunc(np.array([1.0]), 0.0), AffineFunc(np.array([-1.0]), 0.0)],
        [whole, whole],
        box,
    )
    with pytest.raises(ValueError):
        f.validate(rng)


# ---------------------------------------------------------------------------
# Polytope helpers
# ---------------------------------------------------------------------------


def test_polytope_vertices_unit_square():
    A, c = box_halfspaces(np.zeros(2), np.ones(2))
    V = polytope_vertices(A, c, 2)
    got = {tuple(np.round(v, 9)) for v in V}
    assert got == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_clip_polygon_area_oracle():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polygon_area(square) == pytest.approx(1.0)
    half = clip_polygon(square, np.array([1.0, 0.0]), 0.5)  # keep x <= 0.5
    assert polygon_area(half) == pytest.approx(0.5)
    corner = clip_polygon(square, np.array([1.0, 1.0]), 0.5)  # x + y <= 0.5
    assert polygon_area(corner) == pytest.approx(0.125)


# ---------------------------------------------------------------------------
# Unique-order partition and lattice construction
# ---------------------------------------------------------------------------


def test_unique_order_cells_have_constant_order(rng, cpwl_instances):
    """Each cell's recorded order sorts the piece values, everywhere in it."""
    for name, f in cpwl_instances:
        part = unique_order_partition(f)
        for cell in part.cells:
            x = np.asarray(cell.sample_point)
            vals = np.array([p(x) for p in f.pieces])
            ranked = np.array([vals[i] for i in cell.order])
            assert np.all(np.diff(ranked) >= -1e-9), (name, cell.order)


def test_both_lattice_routes_reproduce_source(rng, cpwl_instances):
    for name, f in cpwl_instances:
        X = f.sample_domain(1500, rng)
        ref = eval_pieces(f, X)
        for route in ("order", "regions"):
            if route == "order":
                lat = lattice_from_unique_order(f, unique_order_partition(f))
            else:
                lat = lattice_from_convex_regions(f)
            got = eval_lattice(lat, X)
            assert np.max(np.abs(got - ref)) < 1e-9, (name, route)


def test_lattice_clause_count_bounds(cpwl_instances):
    """One clause per order cell: piece count <= clause count <= m!.

    The order partition refines the piece regions (every region boundary is
    a difference hyperplane), giving the lower bound; each strict order is
    realized on a convex — hence connected — set, giving at most one cell
    per permutation and the upper bound.  Deduplication only shrinks.
    """
    for name, f in cpwl_instances:
        m = f.num_pieces
        part = unique_order_partition(f)
        lat = lattice_from_unique_order(f, part)
        assert lat.num_clauses == part.num_cells, name
        assert m <= lat.num_clauses <= math.factorial(m), name
        assert lat.dedup().num_clauses <= lat.num_clauses, name


def test_convex_regions_route_needs_nonempty_regions():
    # Second piece's region is empty inside the box.
    box = (np.array([-1.0]), np.array([1.0]))
    f = CpwlPieces(
        1,
        [AffineFunc(np.array([1.0]), 0.0), AffineFunc(np.array([2.0]), -10.0)],
        [
            (np.array([[0.0]]), np.array([1.0])),  # whole line
            (np.array([[-1.0]]), np.array([-5.0])),  # x >= 5: empty in box
        ],
        box,
    )
    with pytest.raises(PreconditionViolated):
        lattice_from_convex_regions(f)


def test_lattice_dedup_removes_repeats():
    from cpwlrelu.cpwl import LatticeForm

    p = [AffineFunc(np.array([1.0]), 0.0), AffineFunc(np.array([-1.0]), 0.0)]
    lat = LatticeForm(p, [(0, 1), (1, 0), (0,)])
    out = lat.dedup()
    assert out.num_clauses == 2


def test_eval_lattice_bruteforce_oracle(rng):
    p = [
        AffineFunc(np.array([1.0, 0.0]), 0.0),
        AffineFunc(np.array([0.0, 1.0]), 0.2),
        AffineFunc(np.array([-1.0, -1.0]), 0.1),
    ]
    from cpwlrelu.cpwl import LatticeForm

    lat = LatticeForm(p, [(0, 1), (2,), (1, 2)])
    X = rng.uniform(-1, 1, size=(200, 2))
    vals = np.stack([q(X) for q in p], axis=1)
    ref = np.maximum(
        np.minimum(vals[:, 0], vals[:, 1]),
        np.maximum(vals[:, 2], np.minimum(vals[:, 1], vals[:, 2])),
    )
    assert np.allclose(eval_lattice(lat, X), ref, atol=1e-12)


# ---------------------------------------------------------------------------
# 1D path lemma witness
# ---------------------------------------------------------------------------


def test_path_lemma_witness_inequalities(rng):
    for trial in range(25):
        m = int(rng.integers(3, 6))
        f = random_path_instance(m, rng)
        p = verify_1d_path_lemma(f)
        k = np.array([q.gradient[0] for q in f.pieces])
        b = np.array([q.offset for q in f.pieces])
        assert b[p] >= b[0] - 1e-10
        assert k[p] + b[p] <= k[-1] + b[-1] + 1e-10


def test_path_lemma_rejects_bad_hypotheses(rng):
    while True:  # find a zigzag violating the endpoint domination
        f = random_zigzag(3, rng, lo=0.0, hi=1.0)
        first, last = f.pieces[0], f.pieces[-1]
        if first.offset <= last.offset:
            break
    with pytest.raises(PreconditionViolated):
        verify_1d_path_lemma(f)


def test_path_lemma_rejects_wrong_domain(rng):
    f = random_zigzag(3, rng)  # domain [-1, 1]
    with pytest.raises(PreconditionViolated):
        verify_1d_path_lemma(f)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_pieces_roundtrip(rng, tmp_path, cpwl_instances):
    from cpwlrelu.cpwl import load_pieces, save_pieces

    for name, f in cpwl_instances[:4]:
        p = tmp_path / f"{name}.json"
        save_pieces(f, str(p))
        back = load_pieces(str(p))
        X = f.sample_domain(200, rng)
        assert np.max(np.abs(eval_pieces(back, X) - eval_pieces(f, X))) < 1e-12


def test_lattice_roundtrip(rng):
    f = random_max_affine(2, 4, rng)
    lat = lattice_from_convex_regions(f)
    back = lattice_from_dict(lattice_to_dict(lat))
    X = f.sample_domain(200, rng)
    assert np.allclose(eval_lattice(back, X), eval_lattice(lat, X), atol=0)


# ---------------------------------------------------------------------------
# Property tests
# ---------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 5))
def test_property_zigzag_lattice_equivalence(seed, m):
    rng = np.random.default_rng(seed)
    f = random_zigzag(m, rng)
    lat = lattice_from_unique_order(f, unique_order_partition(f))
    assert m <= lat.num_clauses <= math.factorial(m)
    X = f.sample_domain(300, rng)
    assert np.max(np.abs(eval_lattice(lat.dedup(), X) - eval_pieces(f, X))) < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_property_fan_routes_agree(seed):
    rng = np.random.default_rng(seed)
    f = random_fan(4, rng)
    X = f.sample_domain(300, rng)
    a = eval_lattice(lattice_from_unique_order(f, unique_order_partition(f)), X)
    b = eval_lattice(lattice_from_convex_regions(f), X)
    ref = eval_pieces(f, X)
    assert np.max(np.abs(a - ref)) < 1e-9
    assert np.max(np.abs(b - ref)) < 1e-9

"""Exact compilation of CPWL functions into ReLU networks.

Two constructive pathways, both exact (no approximation):

* **Deep pathway** (`compile_basis_deep`, `compile_fem_deep`): a nodal hat
  function on a mesh whose vertex star is convex equals
  ``max(0, min_k g_k)`` over the star's local affine functions.  The min is
  realized by a balanced binary tree of 4-neuron gadgets, topped by one
  max-with-zero gadget; hidden depth is ``ceil(log2(valence)) + 1``.  A
  finite element function compiles as a combination of scaled hats; scaling
  happens in the first layer so every later layer keeps weights in
  ``{0, +-1/2, +-1}`` with zero bias.

* **Shallow pathway** (`compile_lattice_shallow`, `compile_cpwl_shallow`,
  `compile_basis_shallow`, `compile_fem_shallow`): a max-of-mins lattice
  form is expanded into a signed sum of plain max terms; terms with more
  than ``d + 1`` arguments are rewritten — using exact max-algebra
  identities, numerically verified at every step — into terms of at most
  ``d + 1`` arguments, so the final network has hidden depth
  ``ceil(log2(d + 1))`` regardless of the input's complexity.

Every compile function returns the network together with a
:class:`BoundReport` whose predicted depth and size bounds have been
asserted against the actual network (`BoundViolated` otherwise).
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .cpwl import (
    AffineFunc,
    CpwlPieces,
    LatticeForm,
    eval_lattice,
    lattice_from_convex_regions,
    lattice_from_unique_order,
    unique_order_partition,
)
from .errors import (
    BoundViolated,
    ClauseTooWide,
    EmptyList,
    ExpansionOverflow,
    NotLocallyConvex,
    NumericalDependenceAmbiguous,
)
from .mesh import (
    SimplicialMesh,
    compute_kh,
    interpolate,
    is_locally_convex,
    sample_points,
    vertex_star,
)
from .relu_net import (
    NetBuilder,
    ReluNetwork,
    affine_network,
    eval_network,
    linear_combine,
    pad_network,
    parallel,
    prune_dead_channels,
)

logger = logging.getLogger(__name__)

#: Caps for the shallow expansion (raising them only costs memory/time).
MAX_PIECES_SHALLOW = 8
MAX_CLAUSES_SHALLOW = 64

#: Dependency-fit acceptance and ambiguity thresholds (relative).
DEP_ACCEPT = 1e-8
DEP_AMBIGUOUS = 1e-4
#: Tolerance for the per-rewrite numerical identity checks.
REWRITE_TOL = 1e-10
# Running count of rewrite steps that passed their numerical re-check;
# tests read (and may reset) this to confirm every recursion step is audited.
REWRITE_CHECKS_PASSED = 0
#: Tolerance for the post-compilation sampling self-check.
COMPILE_TOL = 1e-9


def ceil_log2(n: int) -> int:
    """Smallest ``k`` with ``2^k >= n`` (0 for ``n <= 1``)."""
    return 0 if n <= 1 else (int(n) - 1).bit_length()


@dataclass
class BoundReport:
    """Predicted-versus-actual accounting for one compilation.

    Attributes:
        pathway: Which construction produced the network.
        predicted_depth: Upper bound on hidden layers promised beforehand.
        actual_depth: Hidden layers of the produced network.
        predicted_size_bound: Upper bound on hidden neurons promised
            beforehand (may be astronomically loose for the shallow
            pathway; it is an exact integer).
        actual_size: Hidden neurons of the produced network.
        d: Input dimension.
        kh: Maximum vertex valence of the mesh (mesh pathways only).
        m: Number of affine pieces involved (pathway-specific; see the
            compile function docstrings).
        M: Number of lattice clauses / expansion terms (pathway-specific).
    """

    pathway: str
    predicted_depth: int
    actual_depth: int
    predicted_size_bound: int
    actual_size: int
    d: int
    kh: int | None = None
    m: int | None = None
    M: int | None = None

    def to_dict(self) -> dict:
        return {
            "pathway": self.pathway,
            "predicted_depth": self.predicted_depth,
            "actual_depth": self.actual_depth,
            "predicted_size_bound": str(self.predicted_size_bound),
            "actual_size": self.actual_size,
            "d": self.d,
            "kh": self.kh,
            "m": self.m,
            "M": self.M,
        }


def _check_bounds(report: BoundReport) -> BoundReport:
    if report.actual_depth > report.predicted_depth:
        raise BoundViolated(
            f"{report.pathway}: depth {report.actual_depth} exceeds "
            f"predicted {report.predicted_depth}"
        )
    if report.actual_size > report.predicted_size_bound:
        raise BoundViolated(
            f"{report.pathway}: size {report.actual_size} exceeds "
            f"predicted {report.predicted_size_bound}"
        )
    return report


@dataclass
class EquivalenceReport:
    """Result of sampling-based network-vs-reference comparison.

    Attributes:
        passed: True when the largest deviation is within tolerance.
        max_abs_diff: Largest absolute deviation observed.
        worst_point: Sample point achieving it.
        samples: Number of points compared.
        tol: Tolerance used.
    """

    passed: bool
    max_abs_diff: float
    worst_point: NDArray[np.float64]
    samples: int
    tol: float


def equivalence_report(
    net: ReluNetwork, reference, X: NDArray[np.float64], tol: float = COMPILE_TOL
) -> EquivalenceReport:
    """Compares network output against a reference callable on points ``X``.

    Evaluation is chunked so very wide networks do not materialize huge
    activation matrices.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    widest = max(W.shape[0] for W, _ in net.layers)
    chunk = max(1, min(X.shape[0], int(2**24 // max(widest, 1)) or 1))
    diffs = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        sl = slice(s, min(s + chunk, X.shape[0]))
        got = np.asarray(eval_network(net, X[sl]), dtype=float).reshape(-1)
        want = np.asarray(reference(X[sl]), dtype=float).reshape(-1)
        diffs[sl] = np.abs(got - want)
    worst = int(np.argmax(diffs))
    return EquivalenceReport(
        passed=bool(diffs[worst] <= tol),
        max_abs_diff=float(diffs[worst]),
        worst_point=X[worst],
        samples=X.shape[0],
        tol=tol,
    )


def _self_check(net: ReluNetwork, reference, X: NDArray, what: str) -> None:
    rep = equivalence_report(net, reference, X, COMPILE_TOL)
    if not rep.passed:
        raise AssertionError(
            f"internal error: {what} deviates by {rep.max_abs_diff:.3e} "
            f"at {rep.worst_point!r}"
        )


# ---------------------------------------------------------------------------
# Network-level min/max gadget trees (shallow pathway and generic max-of-m)
# ---------------------------------------------------------------------------

_MIN_PATTERNS = ((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0))
_MIN_COMBO = (0.5, -0.5, -0.5, -0.5)
_MAX_PATTERNS = ((-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0))
_MAX_COMBO = (-0.5, 0.5, 0.5, 0.5)


def _pair_gadget(a: ReluNetwork, b: ReluNetwork, kind: str) -> ReluNetwork:
    """One 4-neuron gadget computing min/max of two single-output networks."""
    depth = max(a.hidden_layer_count, b.hidden_layer_count)
    stacked = parallel([pad_network(a, depth), pad_network(b, depth)])
    Wc, bc = stacked.layers[-1]
    patterns = _MIN_PATTERNS if kind == "min" else _MAX_PATTERNS
    combo = _MIN_COMBO if kind == "min" else _MAX_COMBO
    sparse = sp.issparse(Wc)
    rows = []
    biases = []
    for s0, s1 in patterns:
        if sparse:
            rows.append(s0 * Wc[[0]] + s1 * Wc[[1]])
        else:
            rows.append(s0 * Wc[0] + s1 * Wc[1])
        biases.append(s0 * bc[0] + s1 * bc[1])
    Wh = sp.vstack(rows, format="csr") if sparse else np.vstack(rows)
    bh = np.array(biases)
    Wo = np.array([combo])
    if sparse:
        Wo = sp.csr_matrix(Wo)
    layers = list(stacked.layers[:-1]) + [(Wh, bh), (Wo, np.zeros(1))]
    return ReluNetwork(a.input_dim, layers)


def _gadget_tree(nets: list[ReluNetwork], kind: str) -> ReluNetwork:
    """Balanced min/max tree over single-output networks.

    The argument list splits recursively into a left half of
    ``ceil(m/2)`` networks and a right half of ``floor(m/2)``.
    """
    if not nets:
        raise EmptyList(f"cannot take {kind} of zero networks")
    if len(nets) == 1:
        return nets[0]
    k = (len(nets) + 1) // 2
    return _pair_gadget(_gadget_tree(nets[:k], kind), _gadget_tree(nets[k:], kind), kind)


def compile_max_of_m(nets: list[ReluNetwork]) -> tuple[ReluNetwork, BoundReport]:
    """Maximum of ``m`` single-output networks via a balanced gadget tree.

    Depth bound: ``max_i depth_i + ceil(log2 m) + 1``.  Size bound: the sum
    of the equal-depth padded input sizes plus ``4 (2m - 1)``.

    Returns:
        The max network and its checked bound report.
    """
    if not nets:
        raise EmptyList("cannot take the maximum of zero networks")
    m = len(nets)
    depth = max(n.hidden_layer_count for n in nets)
    padded_sizes = [n.size + 2 * (depth - n.hidden_layer_count) for n in nets]
    net = prune_dead_channels(_gadget_tree(nets, "max"))
    report = BoundReport(
        pathway="max-of-m",
        predicted_depth=depth + ceil_log2(m) + 1,
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=sum(padded_sizes) + 4 * (2 * m - 1),
        actual_size=net.size,
        d=nets[0].input_dim,
        m=m,
    )
    return net, _check_bounds(report)


# ---------------------------------------------------------------------------
# Deep pathway: hats as max(0, min of star affines)
# ---------------------------------------------------------------------------


class _TreeNode:
    __slots__ = ("left", "right", "leaf", "depth", "ch")

    def __init__(self, left=None, right=None, leaf=None):
        self.left = left
        self.right = right
        self.leaf = leaf
        self.depth = 0 if leaf is not None else 1 + max(left.depth, right.depth)
        self.ch = None


def _split_tree(items: list[int]) -> _TreeNode:
    if len(items) == 1:
        return _TreeNode(leaf=items[0])
    k = (len(items) + 1) // 2
    return _TreeNode(left=_split_tree(items[:k]), right=_split_tree(items[k:]))


def _walk(node: _TreeNode, out: list[_TreeNode]) -> None:
    out.append(node)
    if node.leaf is None:
        _walk(node.left, out)
        _walk(node.right, out)


def _hat_net_deep(
    mesh: SimplicialMesh, vertex: int, scale: float, sign: float
) -> ReluNetwork:
    """Network for ``sign * max(0, min_k (scale * g_k))`` at one vertex.

    ``g_k`` are the vertex star's local affine functions; for a convex star
    the expression equals ``sign * scale`` times the nodal hat function on
    the meshed domain.  Built level-synchronously: each min-tree level is
    one layer; values finished early ride identity carries (2 neurons per
    level); the constant-zero channel of the final max gadget is free.
    """
    if not is_locally_convex(mesh, vertex):
        raise NotLocallyConvex(
            f"the star of vertex {vertex} is not convex; the deep construction "
            "does not apply"
        )
    star = vertex_star(mesh, vertex)
    n = len(star.incident)
    builder = NetBuilder(mesh.dim)
    root = _split_tree(list(range(n)))
    nodes: list[_TreeNode] = []
    _walk(root, nodes)
    for node in nodes:
        if node.leaf is not None:
            g = star.local_affines[node.leaf]
            node.ch = builder.affine_channel(scale * g.gradient, scale * g.offset)
    # Identity-carry schedule: a child finished at its own depth must be
    # re-emitted at every level until its parent consumes it.
    carries: dict[int, list[_TreeNode]] = {}
    for node in nodes:
        if node.leaf is None:
            for child in (node.left, node.right):
                for t in range(child.depth + 1, node.depth):
                    carries.setdefault(t, []).append(child)
    for level in range(1, root.depth + 1):
        ops = []
        producers = []
        for node in nodes:
            if node.leaf is None and node.depth == level:
                ops.append(("min", node.left.ch, node.right.ch))
                producers.append(node)
        for node in carries.get(level, []):
            ops.append(("id", node.ch))
            producers.append(node)
        results = builder.apply_level(ops)
        for node, ch in zip(producers, results):
            node.ch = ch
    (final,) = builder.apply_level([("max", root.ch, builder.zero())])
    return builder.finish([[(float(sign), final)]], [0.0])


def compile_basis_deep(
    mesh: SimplicialMesh, vertex: int, rng: np.random.Generator | None = None
) -> tuple[ReluNetwork, BoundReport]:
    """Compiles one nodal hat function via the deep pathway.

    Bounds (checked): hidden depth ``ceil(log2 kh) + 1`` and size
    ``8 kh``, with ``kh`` the mesh's maximum vertex valence.

    Raises:
        NotLocallyConvex: If the vertex star is not convex.
    """
    rng = rng or np.random.default_rng(12345)
    net = prune_dead_channels(_hat_net_deep(mesh, vertex, 1.0, 1.0))
    kh = compute_kh(mesh)
    coeffs = np.zeros(mesh.num_vertices)
    coeffs[vertex] = 1.0
    X = sample_points(mesh, 64, rng)
    _self_check(net, lambda P: interpolate(mesh, coeffs, P), X, f"deep hat {vertex}")
    report = BoundReport(
        pathway="deep",
        predicted_depth=ceil_log2(kh) + 1,
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=8 * kh,
        actual_size=net.size,
        d=mesh.dim,
        kh=kh,
        m=len(mesh.vertex_to_simplices[vertex]),
    )
    return net, _check_bounds(report)


def compile_fem_deep(
    mesh: SimplicialMesh,
    coeffs: NDArray[np.float64],
    rng: np.random.Generator | None = None,
) -> tuple[ReluNetwork, BoundReport]:
    """Compiles a nodal finite element function via the deep pathway.

    The function ``sum_i c_i phi_i`` is built hat by hat; each hat's first
    layer is scaled by ``|c_i|`` and the sign lands in the output
    combination, so all layers past the first stay on the low-bit grid with
    zero bias.  Bounds (checked): hidden depth ``ceil(log2 kh) + 1``, size
    ``8 kh N`` with ``N`` the number of nonzero coefficients.

    Raises:
        NotLocallyConvex: If a used vertex has a non-convex star.
    """
    rng = rng or np.random.default_rng(12345)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (mesh.num_vertices,):
        raise ValueError("need one coefficient per mesh vertex")
    used = [i for i in range(mesh.num_vertices) if coeffs[i] != 0.0]
    kh = compute_kh(mesh)
    if not used:
        net = ReluNetwork(mesh.dim, [(np.zeros((1, mesh.dim)), np.zeros(1))])
        report = BoundReport(
            pathway="deep", predicted_depth=ceil_log2(kh) + 1, actual_depth=0,
            predicted_size_bound=0, actual_size=0, d=mesh.dim, kh=kh, m=0, M=0,
        )
        return net, report
    hats = [
        _hat_net_deep(mesh, i, abs(float(coeffs[i])), float(np.sign(coeffs[i])))
        for i in used
    ]
    net = prune_dead_channels(linear_combine(hats, np.ones(len(hats))))
    X = sample_points(mesh, 128, rng)
    _self_check(net, lambda P: interpolate(mesh, coeffs, P), X, "deep FE function")
    report = BoundReport(
        pathway="deep",
        predicted_depth=ceil_log2(kh) + 1,
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=8 * kh * len(used),
        actual_size=net.size,
        d=mesh.dim,
        kh=kh,
        m=len(used),
    )
    return net, _check_bounds(report)


# ---------------------------------------------------------------------------
# Shallow pathway: expansion into signed max terms
# ---------------------------------------------------------------------------


def _expand_lattice_terms(clauses: list[tuple[int, ...]]) -> dict[frozenset, int]:
    """Expands ``max_j min s_j`` into integer-weighted plain max terms.

    Works backwards through the clause list; the running state maps each
    argument set ``S`` to an integer weight, with the invariant that the
    function equals ``sum_S w_S max({running prefix} U S)``.  Merging after
    every clause keeps at most ``2^m`` live terms.
    """
    state: dict[frozenset, int] = {frozenset(): 1}
    for s in reversed(clauses):
        subsets = []
        members = sorted(s)
        for r in range(1, len(members) + 1):
            for T in itertools.combinations(members, r):
                subsets.append((frozenset(T), -1 if r % 2 == 0 else 1))
        nxt: Counter = Counter()
        for S, w in state.items():
            for T, sg in subsets:
                nxt[S | T] += w * sg
        state = {S: w for S, w in nxt.items() if w != 0}
    if any(not S for S in state):
        raise AssertionError("internal error: empty argument set after expansion")
    return state


# --- exact term rewriting to bounded width --------------------------------


@dataclass
class _Term:
    """One signed max term, possibly with a dependent extra argument.

    Value: ``sign * max({c0} U affs U {dep})`` where the dependent argument
    is ``sum_j alphas[j] * affs[j] + alpha0`` (absent when ``alphas`` is
    None).  ``c0 = None`` means no constant argument.
    """

    sign: int
    c0: float | None
    affs: list[AffineFunc]
    alphas: NDArray[np.float64] | None = None
    alpha0: float = 0.0


def _term_value(t: _Term, X: NDArray[np.float64]) -> NDArray[np.float64]:
    X = np.atleast_2d(X)
    cols = [a(X) for a in t.affs]
    if t.alphas is not None:
        V = np.stack(cols, axis=1) if cols else np.zeros((X.shape[0], 0))
        cols.append(V @ t.alphas + t.alpha0)
    if t.c0 is not None:
        cols.append(np.full(X.shape[0], t.c0))
    return t.sign * np.max(np.stack(cols, axis=1), axis=1)


def _terms_value(terms: list[_Term], X: NDArray) -> NDArray:
    out = np.zeros(np.atleast_2d(X).shape[0])
    for t in terms:
        out += _term_value(t, X)
    return out


def _audit_rewrite(t: _Term, parts: list[_Term], pts: NDArray, what: str) -> None:
    """Numerically re-checks one rewrite step (and counts it)."""
    global REWRITE_CHECKS_PASSED
    before = _term_value(t, pts)
    after = _terms_value(parts, pts)
    scale = max(1.0, float(np.max(np.abs(before))))
    if np.max(np.abs(before - after)) > REWRITE_TOL * scale:
        raise AssertionError(f"{what} rewrite failed numerical check")
    REWRITE_CHECKS_PASSED += 1


def _resolve_dependent(t: _Term, pts: NDArray, out: list[_Term]) -> None:
    """Eliminates the dependent argument of ``t``, appending pure terms.

    Implements the exact rewriting recursion; every rewrite is re-verified
    numerically on ``pts`` and any mismatch aborts (it would mean a bug, not
    an input problem).  Branching is at most ``2^(k+1) - 1`` for dependent
    support size ``k``.
    """
    alphas, a0 = t.alphas, t.alpha0
    assert alphas is not None
    J = [j for j in range(len(alphas)) if abs(alphas[j]) > 1e-12]
    if not J:
        c0 = a0 if t.c0 is None else max(t.c0, a0)
        result = _Term(t.sign, c0, list(t.affs))
        _audit_rewrite(t, [result], pts, "constant-merge")
        out.append(result)
        return
    ones = [j for j in J if abs(alphas[j] - 1.0) <= 1e-12]
    if len(J) == 1 and len(ones) == 1:
        j = J[0]
        if a0 > 0:
            affs = list(t.affs)
            affs[j] = AffineFunc(affs[j].gradient, affs[j].offset + a0)
            result = _Term(t.sign, t.c0, affs)
        else:
            result = _Term(t.sign, t.c0, list(t.affs))
        _audit_rewrite(t, [result], pts, "domination")
        out.append(result)
        return
    if len(ones) == len(J):
        # All unit coefficients: re-root the dependency on a new member
        # l_eta' = sum_{j in J} l_j + a0, expressing the old member through
        # it with coefficients {+1, -1...} so the next step can pivot.
        eta = J[-1]
        grad = sum((t.affs[j].gradient for j in J), np.zeros_like(t.affs[0].gradient))
        off = sum(t.affs[j].offset for j in J) + a0
        affs = list(t.affs)
        old = affs[eta]
        affs[eta] = AffineFunc(grad, off)
        alphas2 = np.zeros(len(affs))
        alphas2[eta] = 1.0
        for j in J[:-1]:
            alphas2[j] = -1.0
        t2 = _Term(t.sign, t.c0, affs, alphas2, -a0)
        _audit_rewrite(t, [t2], pts, "re-rooting")
        _resolve_dependent(t2, pts, out)
        return
    # General pivot: largest index with coefficient outside {0, 1}.
    eta = max(j for j in J if abs(alphas[j] - 1.0) > 1e-12)
    alpha = float(alphas[eta])
    abar = 1.0 / (1.0 - alpha)
    rest = [j for j in J if j != eta]
    h_grad = sum(
        (alphas[j] * t.affs[j].gradient for j in rest),
        np.zeros_like(t.affs[0].gradient),
    )
    h_off = sum(alphas[j] * t.affs[j].offset for j in rest) + a0
    # Dependent for branches A and B: abar * h over the unchanged indices.
    alphas_h = np.zeros(len(t.affs))
    for j in rest:
        alphas_h[j] = abar * alphas[j]
    const_h = abar * a0
    gprime = AffineFunc(
        alpha * t.affs[eta].gradient + h_grad, alpha * t.affs[eta].offset + h_off
    )
    if alpha > 1.0:
        signs = (-1, 1, 1)
        affs_c = list(t.affs)  # median is the member itself
    elif 0.0 < alpha < 1.0:
        signs = (1, -1, 1)
        affs_c = list(t.affs)
        affs_c[eta] = gprime
    else:
        signs = (1, 1, -1)
        affs_c = list(t.affs)
        affs_c[eta] = AffineFunc(abar * h_grad, abar * h_off)
    branch_a = _Term(t.sign * signs[0], t.c0, list(t.affs), alphas_h.copy(), const_h)
    affs_b = list(t.affs)
    affs_b[eta] = gprime
    branch_b = _Term(t.sign * signs[1], t.c0, affs_b, alphas_h.copy(), const_h)
    branch_c = _Term(t.sign * signs[2], t.c0, affs_c)
    _audit_rewrite(t, [branch_a, branch_b, branch_c], pts, f"three-term (alpha={alpha:.6g})")
    _resolve_dependent(branch_a, pts, out)
    _resolve_dependent(branch_b, pts, out)
    out.append(branch_c)


def _find_dependency(
    affs: list[AffineFunc], d: int
) -> tuple[int, NDArray[np.float64], float]:
    """Finds one argument affinely expressible through at most ``d`` others.

    Scans elimination targets from the last argument down; for each target,
    tries size-``d`` subsets of the remaining arguments and solves the
    (d+1)-parameter interpolation system.  A relative residual below
    ``1e-8`` accepts; a residual in the ambiguity band ``[1e-8, 1e-4]``
    aborts, because acting on an uncertain dependency could silently change
    the function.

    Returns:
        ``(target index, coefficients over the remaining args, constant)``.

    Raises:
        NumericalDependenceAmbiguous: On an ambiguous fit or when no clean
            dependency is found.
    """
    L = len(affs)
    for tgt in range(L - 1, -1, -1):
        others = [j for j in range(L) if j != tgt]
        v = np.concatenate([affs[tgt].gradient, [affs[tgt].offset]])
        scale = max(1.0, float(np.max(np.abs(v))))
        for subset in itertools.combinations(others, min(d, len(others))):
            M = np.column_stack(
                [np.concatenate([affs[j].gradient, [affs[j].offset]]) for j in subset]
                + [np.concatenate([np.zeros(d), [1.0]])]
            )
            x, *_ = np.linalg.lstsq(M, v, rcond=None)
            resid = float(np.max(np.abs(M @ x - v)))
            if resid < DEP_ACCEPT * scale:
                alphas = np.zeros(L - 1)
                for pos, j in enumerate(subset):
                    alphas[others.index(j)] = x[pos]
                return tgt, alphas, float(x[-1])
            if resid <= DEP_AMBIGUOUS * scale:
                raise NumericalDependenceAmbiguous(
                    f"dependency fit residual {resid:.3e} is in the ambiguity "
                    f"band [{DEP_ACCEPT}, {DEP_AMBIGUOUS}] (relative)"
                )
    raise NumericalDependenceAmbiguous(
        "no clean affine dependency found although the argument count "
        "guarantees one exists"
    )


def reduce_term_width(
    sign: int,
    c0: float | None,
    affs: list[AffineFunc],
    max_args: int,
    pts: NDArray[np.float64],
) -> list[_Term]:
    """Rewrites one max term into terms with at most ``max_args`` arguments.

    The constant (when present) counts as an argument.  Each elimination
    step removes one affine argument by expressing it through at most ``d``
    others plus a constant, then resolving the resulting dependent argument
    exactly.  The rewritten sum is numerically re-verified against the
    original at ``pts``.

    Returns:
        Pure terms (no dependents) whose signed sum equals the input term.
    """
    d = affs[0].dim if affs else 0
    queue = [_Term(sign, c0, list(affs))]
    done: list[_Term] = []
    while queue:
        t = queue.pop()
        width = len(t.affs) + (1 if t.c0 is not None else 0)
        if width <= max_args:
            done.append(t)
            continue
        tgt, alphas, a0 = _find_dependency(t.affs, d)
        reduced_affs = [a for j, a in enumerate(t.affs) if j != tgt]
        twd = _Term(t.sign, t.c0, reduced_affs, alphas, a0)
        pieces: list[_Term] = []
        _resolve_dependent(twd, pts, pieces)
        if len(pieces) > 2 ** (d + 1) - 1:
            raise AssertionError(
                f"elimination produced {len(pieces)} terms, above the "
                f"guaranteed 2^(d+1)-1 = {2 ** (d + 1) - 1}"
            )
        before = _term_value(t, pts)
        after = _terms_value(pieces, pts)
        scale = max(1.0, float(np.max(np.abs(before))))
        if np.max(np.abs(before - after)) > REWRITE_TOL * scale:
            raise AssertionError("elimination step failed numerical check")
        queue.extend(pieces)
    return done


# --- pure terms to networks ------------------------------------------------


def _term_network(c0: float | None, affs: list[AffineFunc], dim: int) -> ReluNetwork:
    """Network for ``max({c0} U affs)`` via a balanced max-gadget tree."""
    leaves: list[ReluNetwork] = []
    if c0 is not None:
        leaves.append(affine_network(np.zeros(dim), c0))
    leaves.extend(affine_network(a.gradient, a.offset) for a in affs)
    return _gadget_tree(leaves, "max")


def _affine_key(a: AffineFunc) -> tuple:
    return tuple(np.round(a.gradient, 12)) + (round(a.offset, 12),)


def _merge_pure_terms(
    weighted: list[tuple[int, _Term]]
) -> list[tuple[int, float | None, list[AffineFunc]]]:
    """Merges identical pure terms, returning (net weight, c0, affs) triples."""
    acc: dict[tuple, list] = {}
    for w, t in weighted:
        key = (
            None if t.c0 is None else round(t.c0, 12),
            tuple(sorted(_affine_key(a) for a in t.affs)),
        )
        if key in acc:
            acc[key][0] += w * t.sign
        else:
            acc[key] = [w * t.sign, t.c0, list(t.affs)]
    return [(w, c0, affs) for w, c0, affs in acc.values() if w != 0]


def _emit_weighted(
    merged: list[tuple[int, float | None, list[AffineFunc]]], dim: int
) -> tuple[list[ReluNetwork], list[float]]:
    """Materializes term networks, splitting weights into ``+-1 / +-2``.

    An integer weight ``w`` becomes ``ceil(|w|/2)`` copies of the term's
    network with weights ``+-2`` (and one ``+-1`` for odd ``|w|``), keeping
    every output-layer entry in ``{+-1/2, +-1}``.
    """
    nets: list[ReluNetwork] = []
    weights: list[float] = []
    for w, c0, affs in merged:
        s = 1.0 if w > 0 else -1.0
        k = abs(w)
        base = _term_network(c0, affs, dim)
        while k > 0:
            step = 2 if k >= 2 else 1
            nets.append(base)
            weights.append(s * step)
            k -= step
    return nets, weights


# --- shallow compile entry points ------------------------------------------


def compile_lattice_shallow(lat: LatticeForm) -> tuple[ReluNetwork, BoundReport]:
    """Compiles a max-of-mins form whose clauses have at most d+1 members.

    Per-clause min trees (depth ``ceil(log2(d+1))`` each, checked) feed a
    balanced max tree; total depth is at most
    ``ceil(log2(d+1)) + ceil(log2 M) + 1`` and the size obeys the generic
    max-of-m bound over the padded clause networks.

    Raises:
        ClauseTooWide: If some clause has more than ``d + 1`` members.
    """
    d = lat.pieces[0].dim
    M = lat.num_clauses
    clause_nets = []
    for k, s in enumerate(lat.clauses):
        if len(s) > d + 1:
            raise ClauseTooWide(
                f"clause {k} has {len(s)} members, above d+1 = {d + 1}; "
                "rewrite the form first (compile_cpwl_shallow does this)"
            )
        leaves = [affine_network(lat.pieces[i].gradient, lat.pieces[i].offset) for i in s]
        cnet = _gadget_tree(leaves, "min")
        if cnet.hidden_layer_count > ceil_log2(d + 1):
            raise BoundViolated(
                f"clause {k} network is deeper than ceil(log2(d+1))"
            )
        clause_nets.append(cnet)
    depth = max(n.hidden_layer_count for n in clause_nets)
    padded_sizes = [n.size + 2 * (depth - n.hidden_layer_count) for n in clause_nets]
    net = prune_dead_channels(_gadget_tree(clause_nets, "max"))
    report = BoundReport(
        pathway="shallow-lattice",
        predicted_depth=ceil_log2(d + 1) + ceil_log2(M) + 1,
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=sum(padded_sizes) + 4 * (2 * M - 1),
        actual_size=net.size,
        d=d,
        m=lat.num_pieces,
        M=M,
    )
    return net, _check_bounds(report)


def compile_cpwl_shallow(
    f: CpwlPieces,
    rng: np.random.Generator | None = None,
    route: str = "auto",
) -> tuple[ReluNetwork, BoundReport]:
    """Compiles a piece-list CPWL function into a fixed-depth network.

    Builds a max-of-mins form (via the unique-order partition for d <= 2,
    or via the convex piece regions otherwise), expands it into a signed
    sum of plain max terms, rewrites every term to at most ``d + 1``
    arguments, and emits one balanced max tree per term.  Hidden depth is
    at most ``ceil(log2(d+1))`` — independent of the number of pieces.

    Args:
        f: The function; needs a domain box.
        rng: Generator for the verification sample points.
        route: ``"order"``, ``"regions"``, or ``"auto"`` (order for d <= 2).

    Returns:
        Network and checked bound report (``m`` pieces, ``M`` clauses).

    Raises:
        ExpansionOverflow: If ``m`` or ``M`` exceed the expansion caps.
    """
    rng = rng or np.random.default_rng(12345)
    d = f.dim
    m = f.num_pieces
    if m > MAX_PIECES_SHALLOW:
        raise ExpansionOverflow(
            f"{m} pieces exceed the expansion cap {MAX_PIECES_SHALLOW}"
        )
    if route == "auto":
        route = "order" if d <= 2 else "regions"
    if route == "order":
        lat = lattice_from_unique_order(f, unique_order_partition(f)).dedup()
    elif route == "regions":
        lat = lattice_from_convex_regions(f).dedup()
    else:
        raise ValueError(f"unknown route {route!r}")
    M = lat.num_clauses
    if M > MAX_CLAUSES_SHALLOW:
        raise ExpansionOverflow(
            f"{M} clauses exceed the expansion cap {MAX_CLAUSES_SHALLOW}"
        )
    pts = f.sample_domain(64, rng)
    state = _expand_lattice_terms(lat.clauses)
    # Sanity: the expansion must reproduce the lattice form exactly.
    acc = np.zeros(pts.shape[0])
    for S, w in state.items():
        V = np.stack([lat.pieces[i](pts) for i in sorted(S)], axis=1)
        acc += w * V.max(axis=1)
    ref = eval_lattice(lat, pts)
    scale = max(1.0, float(np.max(np.abs(ref))))
    if np.max(np.abs(acc - ref)) > REWRITE_TOL * scale:
        raise AssertionError("internal error: lattice expansion mismatch")
    weighted: list[tuple[int, _Term]] = []
    for S, w in sorted(state.items(), key=lambda kv: sorted(kv[0])):
        pures = reduce_term_width(
            1, None, [lat.pieces[i] for i in sorted(S)], d + 1, pts
        )
        weighted.extend((w, t) for t in pures)
    merged = _merge_pure_terms(weighted)
    nets, weights = _emit_weighted(merged, d)
    net = prune_dead_channels(linear_combine(nets, np.array(weights)))
    _self_check(net, lambda P: np.asarray(f(P)), pts, "shallow CPWL compile")
    predicted_size = (
        (10 * d + 6)
        * (2**m - 1) ** M
        * (2 ** (d + 1) - 1) ** max(m - d - 1, 0)
    )
    report = BoundReport(
        pathway="shallow",
        predicted_depth=ceil_log2(d + 1),
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=predicted_size,
        actual_size=net.size,
        d=d,
        m=m,
        M=M,
    )
    return net, _check_bounds(report)


def _basis_shallow_size_bound(n: int, d: int) -> int:
    """Size bound for one hat compiled shallow from an n-element star."""
    total = 0
    for j in range(1, min(d, n) + 1):
        total += math.comb(n, j) * (10 * j + 6)
    for j in range(d + 1, n + 1):
        total += math.comb(n, j) * (10 * d + 6) * (2 ** (d + 1) - 1) ** (j - d)
    return total


def _basis_shallow_terms(
    mesh: SimplicialMesh, vertex: int, scale: float, pts: NDArray
) -> list[tuple[int, _Term]]:
    """Signed pure terms for ``scale * max(0, min_k g_k)`` at one vertex."""
    if not is_locally_convex(mesh, vertex):
        raise NotLocallyConvex(
            f"the star of vertex {vertex} is not convex; the lattice identity "
            "for its hat function does not apply"
        )
    star = vertex_star(mesh, vertex)
    gs = [AffineFunc(scale * g.gradient, scale * g.offset) for g in star.local_affines]
    n = len(gs)
    d = mesh.dim
    weighted: list[tuple[int, _Term]] = []
    for r in range(1, n + 1):
        sgn = 1 if r % 2 == 1 else -1
        for T in itertools.combinations(range(n), r):
            pures = reduce_term_width(1, 0.0, [gs[i] for i in T], d + 1, pts)
            weighted.extend((sgn, t) for t in pures)
    return weighted


def compile_basis_shallow(
    mesh: SimplicialMesh, vertex: int, rng: np.random.Generator | None = None
) -> tuple[ReluNetwork, BoundReport]:
    """Compiles one nodal hat function via the shallow pathway.

    Expands ``max(0, min_k g_k)`` over the vertex star by inclusion-
    exclusion into ``2^n - 1`` signed max terms, rewrites wide terms to at
    most ``d + 1`` arguments, and sums term networks.  Hidden depth is at
    most ``ceil(log2(d+1))``; the size bound is combinatorial in the
    valence ``n`` (see report).

    Raises:
        NotLocallyConvex: If the vertex star is not convex.
    """
    rng = rng or np.random.default_rng(12345)
    pts = sample_points(mesh, 64, rng)
    weighted = _basis_shallow_terms(mesh, vertex, 1.0, pts)
    merged = _merge_pure_terms(weighted)
    nets, weights = _emit_weighted(merged, mesh.dim)
    net = prune_dead_channels(linear_combine(nets, np.array(weights)))
    coeffs = np.zeros(mesh.num_vertices)
    coeffs[vertex] = 1.0
    _self_check(net, lambda P: interpolate(mesh, coeffs, P), pts, "shallow hat")
    n = len(mesh.vertex_to_simplices[vertex])
    report = BoundReport(
        pathway="shallow-basis",
        predicted_depth=ceil_log2(mesh.dim + 1),
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=_basis_shallow_size_bound(n, mesh.dim),
        actual_size=net.size,
        d=mesh.dim,
        kh=compute_kh(mesh),
        m=n,
        M=2**n - 1,
    )
    return net, _check_bounds(report)


def compile_fem_shallow(
    mesh: SimplicialMesh,
    coeffs: NDArray[np.float64],
    rng: np.random.Generator | None = None,
) -> tuple[ReluNetwork, BoundReport]:
    """Compiles a nodal finite element function via the shallow pathway.

    Each hat with nonzero coefficient is expanded as in
    :func:`compile_basis_shallow` with its first-layer affines scaled by
    ``|c_i|`` (the expansion is positively homogeneous), signs going into
    the ``+-1`` output combination.  Hidden depth stays at most
    ``ceil(log2(d+1))`` regardless of the mesh.

    Raises:
        NotLocallyConvex: If a used vertex has a non-convex star.
    """
    rng = rng or np.random.default_rng(12345)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (mesh.num_vertices,):
        raise ValueError("need one coefficient per mesh vertex")
    used = [i for i in range(mesh.num_vertices) if coeffs[i] != 0.0]
    kh = compute_kh(mesh)
    d = mesh.dim
    if not used:
        net = ReluNetwork(d, [(np.zeros((1, d)), np.zeros(1))])
        return net, BoundReport(
            pathway="shallow", predicted_depth=ceil_log2(d + 1), actual_depth=0,
            predicted_size_bound=0, actual_size=0, d=d, kh=kh, m=0, M=0,
        )
    pts = sample_points(mesh, 128, rng)
    weighted: list[tuple[int, _Term]] = []
    for i in used:
        sgn = 1 if coeffs[i] > 0 else -1
        local = _basis_shallow_terms(mesh, i, abs(float(coeffs[i])), pts)
        weighted.extend((sgn * w, t) for w, t in local)
    merged = _merge_pure_terms(weighted)
    nets, weights = _emit_weighted(merged, d)
    net = prune_dead_channels(linear_combine(nets, np.array(weights)))
    _self_check(net, lambda P: interpolate(mesh, coeffs, P), pts, "shallow FE function")
    bound = sum(
        _basis_shallow_size_bound(len(mesh.vertex_to_simplices[i]), d) for i in used
    )
    report = BoundReport(
        pathway="shallow",
        predicted_depth=ceil_log2(d + 1),
        actual_depth=net.hidden_layer_count,
        predicted_size_bound=bound,
        actual_size=net.size,
        d=d,
        kh=kh,
        m=len(used),
        M=len(merged),
    )
    return net, _check_bounds(report)

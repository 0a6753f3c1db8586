"""ReLU network containers, composition operations, and a layer builder.

A network is a plain sequence of affine layers with ReLU applied between
consecutive layers (not after the last).  Weight matrices may be dense
numpy arrays or scipy CSR matrices; evaluation and serialization handle
both.  ``hidden_layer_count`` is the number of layers minus one, and
``size`` is the total number of hidden neurons.

:class:`NetBuilder` assembles networks level by level from *channels*: a
channel is a value represented as a fixed linear combination of the current
level's activations plus a bias.  Min/max gadgets (4 neurons), identity
carries (2 neurons), and free constant-zero channels keep every layer past
the first with zero bias and weights in a fixed small set, which is what
the low-bit structure checker later verifies.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .errors import DimensionMismatch, EmptyList, PairwiseDependent

logger = logging.getLogger(__name__)

NETWORK_SCHEMA_VERSION = "1"

#: Feature-matrix rank threshold factor for the independence check.
RANK_TOL_FACTOR = 1e-8


def relu(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.maximum(x, 0.0)


def _is_sparse(W) -> bool:
    return sp.issparse(W)


def _nnz(W) -> int:
    if _is_sparse(W):
        return int(W.count_nonzero())
    return int(np.count_nonzero(W))


@dataclass
class ReluNetwork:
    """A feed-forward ReLU network.

    Attributes:
        input_dim: Dimension of the input.
        layers: List of ``(W, b)`` pairs; ReLU is applied after every layer
            except the last.  ``W`` may be dense or CSR sparse; ``b`` is a
            dense vector.
    """

    input_dim: int
    layers: list[tuple[object, NDArray[np.float64]]]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("a network needs at least one (output) layer")
        cur = self.input_dim
        for idx, (W, b) in enumerate(self.layers):
            if W.shape[1] != cur:
                raise DimensionMismatch(
                    f"layer {idx} expects {W.shape[1]} inputs, previous width is {cur}"
                )
            if b.shape != (W.shape[0],):
                raise DimensionMismatch(f"layer {idx} bias length mismatch")
            cur = W.shape[0]

    @property
    def hidden_layer_count(self) -> int:
        return len(self.layers) - 1

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def hidden_widths(self) -> list[int]:
        return [W.shape[0] for W, _ in self.layers[:-1]]

    @property
    def size(self) -> int:
        """Total number of hidden neurons."""
        return int(sum(self.hidden_widths))

    def __call__(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        return eval_network(self, X)


@dataclass
class NetworkStats:
    """Summary numbers for a network.

    Attributes:
        hidden_layers: Number of hidden layers (layers minus one).
        size: Total number of hidden neurons.
        nonzero_params: Count of nonzero weight and bias entries.
    """

    hidden_layers: int
    size: int
    nonzero_params: int


def network_stats(net: ReluNetwork) -> NetworkStats:
    nz = sum(_nnz(W) + int(np.count_nonzero(b)) for W, b in net.layers)
    return NetworkStats(net.hidden_layer_count, net.size, int(nz))


def eval_network(net: ReluNetwork, X: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluates the network on a batch.

    Args:
        net: The network.
        X: Points of shape ``(n, input_dim)`` or a single point ``(input_dim,)``.

    Returns:
        Shape ``(n,)`` for single-output networks, else ``(n, q)``; a single
        point yields a scalar or ``(q,)``.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    act = np.atleast_2d(X)
    if act.shape[1] != net.input_dim:
        raise DimensionMismatch(
            f"network expects input dimension {net.input_dim}, got {act.shape[1]}"
        )
    for W, b in net.layers[:-1]:
        pre = (W @ act.T).T + b
        act = relu(np.asarray(pre))
    W, b = net.layers[-1]
    out = np.asarray((W @ act.T).T + b)
    if net.output_dim == 1:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Composition operations
# ---------------------------------------------------------------------------


def affine_network(a: NDArray[np.float64], b: float) -> ReluNetwork:
    """The zero-hidden-layer network computing ``a . x + b``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return ReluNetwork(a.shape[0], [(a[None, :], np.array([float(b)]))])


def pad_network(net: ReluNetwork, target_hidden: int) -> ReluNetwork:
    """Deepens a single-output network to ``target_hidden`` hidden layers.

    Each added level carries the scalar output through the identity
    ``t = relu(t) - relu(-t)`` at a cost of two neurons, leaving the
    computed function unchanged.
    """
    if net.output_dim != 1:
        raise DimensionMismatch("padding is defined for single-output networks")
    if net.hidden_layer_count > target_hidden:
        raise ValueError("network is already deeper than the padding target")
    layers = list(net.layers)
    while len(layers) - 1 < target_hidden:
        W, b = layers[-1]
        if _is_sparse(W):
            W_id = sp.vstack([W, -W], format="csr")
            W_out = sp.csr_matrix(np.array([[1.0, -1.0]]))
        else:
            W_id = np.vstack([W, -W])
            W_out = np.array([[1.0, -1.0]])
        b_id = np.concatenate([b, -b])
        layers = layers[:-1] + [(W_id, b_id), (W_out, np.zeros(1))]
    return ReluNetwork(net.input_dim, layers)


def prune_dead_channels(net: ReluNetwork, tol: float = 1e-12) -> ReluNetwork:
    """Removes hidden channels that are provably inactive at every input.

    A channel whose incoming weights are all within ``tol`` of zero and
    whose bias is at most ``tol`` outputs ``relu(b) <= tol`` everywhere, so
    dropping it (and the columns that read it) changes the computed
    function by a negligible constant at most.  Repeats until stable, since
    removing a channel can zero out a downstream row.  A layer always
    keeps at least one channel so shapes stay valid.
    """
    layers = [(W, np.asarray(b, dtype=float).copy()) for W, b in net.layers]
    changed = True
    while changed:
        changed = False
        for li in range(len(layers) - 1):
            W, b = layers[li]
            if _is_sparse(W):
                row_max = np.asarray(abs(W).max(axis=1).todense()).ravel()
            else:
                row_max = (
                    np.max(np.abs(W), axis=1) if W.shape[1] else np.zeros(W.shape[0])
                )
            alive = (row_max > tol) | (b > tol)
            if alive.all():
                continue
            if not alive.any():
                alive[0] = True  # keep one (inactive) channel per layer
            keep = np.flatnonzero(alive)
            if len(keep) == W.shape[0]:
                continue
            layers[li] = (W[keep], b[keep])
            W_next, b_next = layers[li + 1]
            layers[li + 1] = (W_next[:, keep], b_next)
            changed = True
    return ReluNetwork(net.input_dim, layers)


def _stack_first(Ws: list, sparse: bool):
    return sp.vstack([sp.csr_matrix(W) for W in Ws], format="csr") if sparse else np.vstack(Ws)


def _block_diag(Ws: list, sparse: bool):
    if sparse:
        return sp.block_diag([sp.csr_matrix(W) for W in Ws], format="csr")
    total_r = sum(W.shape[0] for W in Ws)
    total_c = sum(W.shape[1] for W in Ws)
    out = np.zeros((total_r, total_c))
    r = c = 0
    for W in Ws:
        out[r : r + W.shape[0], c : c + W.shape[1]] = W
        r += W.shape[0]
        c += W.shape[1]
    return out


def parallel(nets: list[ReluNetwork]) -> ReluNetwork:
    """Runs networks side by side on a shared input, concatenating outputs.

    Networks are first padded to a common depth.  The first layer stacks the
    nets' first layers over the shared input; later layers are block
    diagonal.
    """
    if not nets:
        raise EmptyList("need at least one network")
    d = nets[0].input_dim
    if any(n.input_dim != d for n in nets):
        raise DimensionMismatch("parallel networks must share the input dimension")
    depth = max(n.hidden_layer_count for n in nets)
    nets = [pad_network(n, depth) if n.hidden_layer_count < depth else n for n in nets]
    sparse = any(_is_sparse(W) for n in nets for W, _ in n.layers)
    layers = []
    for li in range(depth + 1):
        Ws = [n.layers[li][0] for n in nets]
        bs = [n.layers[li][1] for n in nets]
        W = _stack_first(Ws, sparse) if li == 0 else _block_diag(Ws, sparse)
        layers.append((W, np.concatenate(bs)))
    return ReluNetwork(d, layers)


def linear_combine(
    nets: list[ReluNetwork], weights: NDArray[np.float64], bias: float = 0.0
) -> ReluNetwork:
    """Builds the network computing ``sum_i weights[i] * nets[i](x) + bias``.

    All inputs must be single-output networks over the same input space.
    """
    if any(n.output_dim != 1 for n in nets):
        raise DimensionMismatch("linear_combine needs single-output networks")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(nets),):
        raise DimensionMismatch("need exactly one weight per network")
    if len(nets) == 1:
        # Scale the output layer in place; no padding needed.
        net = nets[0]
        W, b = net.layers[-1]
        Wn = W * weights[0] if not _is_sparse(W) else W.multiply(weights[0]).tocsr()
        return ReluNetwork(
            net.input_dim, list(net.layers[:-1]) + [(Wn, b * weights[0] + bias)]
        )
    stacked = parallel(nets)
    W, b = stacked.layers[-1]
    if _is_sparse(W):
        Wn = sp.csr_matrix(weights[None, :]) @ W
    else:
        Wn = weights[None, :] @ W
    bn = np.array([float(weights @ b) + bias])
    return ReluNetwork(stacked.input_dim, list(stacked.layers[:-1]) + [(Wn, bn)])


# ---------------------------------------------------------------------------
# First-layer independence check
# ---------------------------------------------------------------------------


def independence_check(
    W: NDArray[np.float64],
    b: NDArray[np.float64],
    rng: np.random.Generator,
    samples: int | None = None,
    box: float = 10.0,
) -> bool:
    """Tests linear independence of the units ``x -> relu(w_i . x + b_i)``.

    First verifies that no two rows ``(w_i, b_i)`` are proportional (which
    would make the corresponding units dependent regardless of sampling);
    then forms the feature matrix of the units on uniform random points in
    ``[-box, box]^d`` and compares its numerical rank against the unit
    count.

    Args:
        W: First-layer weights, shape ``(m, d)``.
        b: First-layer biases, shape ``(m,)``.
        rng: Random generator for the sample points.
        samples: Number of sample points (default ``max(200, 20 m)``).
        box: Half-width of the sampling box.

    Returns:
        True when the numerical feature rank equals ``m``.

    Raises:
        PairwiseDependent: If two rows of ``[W | b]`` are proportional.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m, d = W.shape
    rows = np.hstack([W, b[:, None]])
    for i in range(m):
        for j in range(i + 1, m):
            pair = rows[[i, j]]
            s = np.linalg.svd(pair, compute_uv=False)
            if s[-1] <= 1e-12 * max(s[0], 1.0):
                raise PairwiseDependent(
                    f"first-layer rows {i} and {j} are proportional"
                )
    if samples is None:
        samples = max(200, 20 * m)
    X = rng.uniform(-box, box, size=(samples, d))
    F = relu(X @ W.T + b)
    s = np.linalg.svd(F, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL_FACTOR * s[0])) if s[0] > 0 else 0
    logger.debug("independence check: m=%d, feature rank=%d", m, rank)
    return rank == m


# ---------------------------------------------------------------------------
# Level builder with structured channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelRef:
    """A value available at one builder level.

    The value equals ``sum_j coeffs[j] * activation[j] + bias`` over the
    activations of ``level``.  Level-0 channels combine the raw inputs.
    """

    level: int
    coeffs: tuple[tuple[int, float], ...]
    bias: float

    def as_dict(self) -> dict[int, float]:
        return dict(self.coeffs)


def _make_ref(level: int, coeffs: dict[int, float], bias: float) -> ChannelRef:
    items = tuple(sorted((int(k), float(v)) for k, v in coeffs.items() if v != 0.0))
    return ChannelRef(level, items, float(bias))


class NetBuilder:
    """Assembles a ReLU network one level at a time from channels.

    Start from the input channels (one per coordinate) and constants; each
    :meth:`apply_level` call turns a list of gadget operations on current-
    level channels into one sparse hidden layer and returns the next-level
    channels.  Biases are only ever written into the first layer; all later
    layers have zero bias, and gadget/identity coefficients keep their
    weights in ``{0, +-1/2, +-1}`` whenever the consumed channels have
    integer or half-integer coefficients.

    Operations (each a tuple):
        ``("min", a, b)`` — 4 neurons, channel for ``min(a, b)``.
        ``("max", a, b)`` — 4 neurons, channel for ``max(a, b)``.
        ``("id", a)`` — 2 neurons, carries ``a`` to the next level.
    """

    def __init__(self, input_dim: int):
        self.input_dim = int(input_dim)
        self.level = 0
        self._width = int(input_dim)  # width of the current activation vector
        self.layers: list[tuple[object, NDArray[np.float64]]] = []

    def input_channel(self, i: int) -> ChannelRef:
        """Channel for the raw input coordinate ``x_i`` (level 0 only)."""
        if self.level != 0:
            raise ValueError("input channels exist only before the first layer")
        return _make_ref(0, {i: 1.0}, 0.0)

    def affine_channel(self, a: NDArray[np.float64], b: float) -> ChannelRef:
        """Channel for an affine function of the input (level 0 only)."""
        if self.level != 0:
            raise ValueError("affine channels exist only before the first layer")
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return _make_ref(0, {i: float(v) for i, v in enumerate(a)}, float(b))

    def zero(self) -> ChannelRef:
        """The free constant-zero channel, valid at the current level."""
        return _make_ref(self.level, {}, 0.0)

    def _check(self, ch: ChannelRef) -> None:
        if ch.level != self.level:
            raise ValueError(
                f"channel from level {ch.level} used at level {self.level}"
            )

    def apply_level(self, ops: list[tuple]) -> list[ChannelRef]:
        """Emits one hidden layer realizing ``ops`` and advances the level.

        Args:
            ops: Operations on current-level channels (see class docstring).

        Returns:
            One next-level channel per operation, in order.
        """
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        biases: list[float] = []
        out_channels: list[ChannelRef] = []
        neuron = 0

        def emit_row(combo: dict[int, float], bias: float) -> int:
            nonlocal neuron
            for c, v in combo.items():
                if v != 0.0:
                    rows.append(neuron)
                    cols.append(c)
                    vals.append(v)
            biases.append(bias)
            neuron += 1
            return neuron - 1

        def lin(sa: float, a: ChannelRef, sb: float, b: ChannelRef) -> tuple[dict, float]:
            combo: dict[int, float] = {}
            for c, v in a.coeffs:
                combo[c] = combo.get(c, 0.0) + sa * v
            for c, v in b.coeffs:
                combo[c] = combo.get(c, 0.0) + sb * v
            return combo, sa * a.bias + sb * b.bias

        for op in ops:
            kind = op[0]
            if kind in ("min", "max"):
                _, a, b = op
                self._check(a)
                self._check(b)
                if kind == "min":
                    patterns = [(1, 1), (-1, -1), (1, -1), (-1, 1)]
                    combo_w = (0.5, -0.5, -0.5, -0.5)
                else:
                    patterns = [(-1, -1), (1, 1), (-1, 1), (1, -1)]
                    combo_w = (-0.5, 0.5, 0.5, 0.5)
                ids = []
                for sa, sb in patterns:
                    combo, bias = lin(float(sa), a, float(sb), b)
                    ids.append(emit_row(combo, bias))
                out_channels.append(
                    _make_ref(self.level + 1, dict(zip(ids, combo_w)), 0.0)
                )
            elif kind == "id":
                _, a = op
                self._check(a)
                cp, bp = lin(1.0, a, 0.0, self.zero())
                cn, bn = lin(-1.0, a, 0.0, self.zero())
                ip = emit_row(cp, bp)
                im = emit_row(cn, bn)
                out_channels.append(
                    _make_ref(self.level + 1, {ip: 1.0, im: -1.0}, 0.0)
                )
            else:
                raise ValueError(f"unknown builder operation {kind!r}")

        bias_vec = np.array(biases)
        if self.level >= 1 and np.any(bias_vec != 0.0):
            raise AssertionError(
                "internal builder error: nonzero bias past the first layer"
            )
        W = sp.csr_matrix(
            (vals, (rows, cols)), shape=(neuron, self._width), dtype=float
        )
        self.layers.append((W, bias_vec))
        self.level += 1
        self._width = neuron
        return out_channels

    def finish(
        self, combos: list[list[tuple[float, ChannelRef]]], bias: list[float] | None = None
    ) -> ReluNetwork:
        """Appends the output layer combining current-level channels.

        Args:
            combos: One list of ``(weight, channel)`` terms per output row.
            bias: Optional per-row output bias (default zeros).

        Returns:
            The assembled network (sparse layers).
        """
        q = len(combos)
        bias_vec = np.zeros(q) if bias is None else np.asarray(bias, dtype=float)
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        for r, terms in enumerate(combos):
            acc: dict[int, float] = {}
            for w, ch in terms:
                self._check(ch)
                for c, v in ch.coeffs:
                    acc[c] = acc.get(c, 0.0) + w * v
                bias_vec[r] += w * ch.bias
            for c, v in acc.items():
                if v != 0.0:
                    rows.append(r)
                    cols.append(c)
                    vals.append(v)
        W = sp.csr_matrix((vals, (rows, cols)), shape=(q, self._width), dtype=float)
        layers = self.layers + [(W, bias_vec)]
        return ReluNetwork(self.input_dim, layers)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

#: Refuse to densify layers with more entries than this when serializing.
MAX_DENSE_ENTRIES = 4_000_000


def network_to_dict(net: ReluNetwork) -> dict:
    layers = []
    for W, b in net.layers:
        entries = W.shape[0] * W.shape[1]
        if entries > MAX_DENSE_ENTRIES:
            raise ValueError(
                f"layer with {entries} entries is too large to serialize densely"
            )
        Wd = W.toarray() if _is_sparse(W) else np.asarray(W)
        layers.append({"W": Wd.tolist(), "b": np.asarray(b).tolist()})
    return {
        "schema": NETWORK_SCHEMA_VERSION,
        "input_dim": net.input_dim,
        "layers": layers,
    }


def network_from_dict(d: dict) -> ReluNetwork:
    if d.get("schema", NETWORK_SCHEMA_VERSION) != NETWORK_SCHEMA_VERSION:
        raise ValueError(f"unsupported network schema {d.get('schema')!r}")
    layers = [
        (np.array(layer["W"], dtype=float), np.array(layer["b"], dtype=float))
        for layer in d["layers"]
    ]
    return ReluNetwork(int(d["input_dim"]), layers)


def save_network(net: ReluNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh)


def load_network(path: str) -> ReluNetwork:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))

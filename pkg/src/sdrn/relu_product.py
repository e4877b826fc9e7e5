r"""ReLU approximation of products, from tooth functions to basis features.

The chain of constructions:

* ``tooth`` g and its iterates g_r (sawtooth with ``2**(r-1)`` teeth);
* ``square_approx`` f_R(x) = x - sum_r g_r(x)/4**r, the piecewise-linear
  interpolant of x**2 on the dyadic grid of step ``2**-R``, with
  ``|f_R(x) - x**2| <= 2**(-2R-2)`` on [0, 1];
* ``pair_product`` applying the polarisation identity
  xy = ((x+y)**2 - x**2 - y**2)/2 to f_R, accurate to ``3 * 2**(-2R-2)``;
* ``tree_product`` multiplying q factors through a balanced binary tree
  of pair products, accurate to ``3 * 2**(-2R-2) * (q-1)``;
* ``approx_basis_eval`` applying the tree to the hat factors of a
  tensor-product basis function.

Each closed form has a twin builder returning an explicit
:class:`ReluGraph` whose evaluation matches it pointwise; the graphs
carry exact depth/unit/weight accounting (weights = connections plus
units).  The closed forms are the fast path used to assemble feature
matrices; the graphs exist for verification and complexity reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sparse_grid import BasisId, hat_eval


def relu(x):
    return np.maximum(x, 0.0)


def tooth(x):
    """The unit sawtooth: 2x on [0, 1/2), 2(1-x) on [1/2, 1], 0 outside.

    Computed through its ReLU form ``2*s(x) - 4*s(x - 1/2) + 2*s(x - 1)``
    so that inputs outside [0, 1] behave the same as in the graphs.
    """
    x = np.asarray(x, dtype=float)
    return 2.0 * relu(x) - 4.0 * relu(x - 0.5) + 2.0 * relu(x - 1.0)


def tooth_iter(r: int, x):
    """r-fold composition of the tooth function, ``r >= 1``."""
    if r < 1:
        raise ValueError(f"iteration count must be >= 1, got {r}")
    out = tooth(x)
    for _ in range(r - 1):
        out = tooth(out)
    return out


def square_approx(R: int, x):
    """f_R(x) = x - sum_{r=1}^{R} g_r(x) / 4**r for x in [0, 1].

    Exact at every dyadic point ``k * 2**-R``; the error against x**2
    peaks at cell midpoints with value exactly ``2**(-2R-2)``.
    """
    if R < 1:
        raise ValueError(f"accuracy level R must be >= 1, got {R}")
    x = np.asarray(x, dtype=float)
    out = x.copy()
    g = x
    for r in range(1, R + 1):
        g = tooth(g)
        out = out - g / 4.0 ** r
    return out


def pair_product(R: int, x, y):
    """Approximate ``x * y`` as 2*(f_R((x+y)/2) - f_R(x)/4 - f_R(y)/4).

    Inputs are clamped to [0, 1] first, the domain on which the error
    bound ``3 * 2**(-2R-2)`` holds.  Exactly symmetric in its arguments
    (the two single-argument terms are added before subtracting).
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    return 2.0 * (
        square_approx(R, 0.5 * (x + y))
        - 0.25 * (square_approx(R, x) + square_approx(R, y))
    )


def tree_product(R: int, values: Sequence):
    """Left-to-right binary-tree product of ``q >= 1`` factors in [0, 1].

    Adjacent factors are paired per level, an unpaired trailing factor is
    forwarded unchanged, and every internal pair output is clamped back
    to [0, 1] before the next level (the clamp is ReLU-expressible, and
    keeps each pair product on the domain where its bound applies).  The
    root output is returned unclamped.  Error against the exact product
    is at most ``3 * 2**(-2R-2) * (q - 1)``.
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    if len(vals) == 0:
        raise ValueError("tree_product needs at least one factor")
    while len(vals) > 1:
        nxt = []
        for i in range(0, len(vals) - 1, 2):
            prod = pair_product(R, vals[i], vals[i + 1])
            if len(vals) > 2:
                prod = np.clip(prod, 0.0, 1.0)
            nxt.append(prod)
        if len(vals) % 2 == 1:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def approx_basis_eval(R: int, bid: BasisId, x):
    """ReLU-product approximation of the tensor hat function of ``bid``.

    For ``d == 1`` this is the exact hat value (no product needed); for
    ``d >= 2`` the deviation from the exact tensor product is at most
    ``3 * 2**(-2R-2) * (d - 1)``.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != bid.dimension:
        raise ValueError(f"point dimension {pts.shape[1]} != basis dimension {bid.dimension}")
    factors = [hat_eval(l, s, pts[:, j]) for j, (l, s) in enumerate(zip(bid.level, bid.node))]
    out = tree_product(R, factors)
    return out if np.ndim(x) == 2 else out[0]


@dataclass(frozen=True)
class ProductApproximator:
    """A fixed-accuracy multiplier of ``factor_count`` values in [0, 1].

    The pairing schedule is adjacent left-to-right per level (an
    unpaired trailing value is forwarded), giving ``ceil(log2 q)``
    levels; callable on a factor sequence like :func:`tree_product`.
    """

    accuracy_level: int
    factor_count: int

    def __post_init__(self) -> None:
        if self.accuracy_level < 1:
            raise ValueError(f"accuracy level must be >= 1, got {self.accuracy_level}")
        if self.factor_count < 1:
            raise ValueError(f"factor count must be >= 1, got {self.factor_count}")

    @property
    def tree_levels(self) -> int:
        return math.ceil(math.log2(self.factor_count)) if self.factor_count > 1 else 0

    def error_bound(self) -> float:
        return 3.0 * 2.0 ** (-2 * self.accuracy_level - 2) * (self.factor_count - 1)

    def __call__(self, values: Sequence):
        if len(values) != self.factor_count:
            raise ValueError(f"expected {self.factor_count} factors, got {len(values)}")
        return tree_product(self.accuracy_level, values)


@dataclass(frozen=True)
class ApproxBasisFeature:
    """One basis id paired with the product approximator over its hats."""

    bid: BasisId
    R: int

    def product(self) -> ProductApproximator:
        return ProductApproximator(accuracy_level=self.R, factor_count=self.bid.dimension)

    def deviation_bound(self) -> float:
        return self.product().error_bound()

    def __call__(self, x):
        return approx_basis_eval(self.R, self.bid, x)


# --------------------------------------------------------------------------
# Explicit graphs
# --------------------------------------------------------------------------

# An affine expression is a dict {(layer, index): weight} plus a bias,
# where layer 0 means the network inputs and layer k >= 1 the k-th
# computation layer.  Builders compose expressions symbolically, so
# chains of affine maps are flattened and never cost extra units.
Expr = tuple[dict[tuple[int, int], float], float]


@dataclass(frozen=True)
class ComplexityReport:
    depth: int
    units: int
    weights: int


@dataclass
class Neuron:
    """One computational unit: affine in earlier values, optional ReLU."""

    inputs: list[tuple[int, int, float]]
    bias: float
    relu: bool


@dataclass
class ReluGraph:
    """Layered ReLU network with explicit (possibly skipping) connections.

    ``layers[k]`` holds the neurons of computation layer ``k + 1``; the
    final layer must contain the single linear output unit.  Depth
    counts the input layer plus every computation layer; the weight
    count is the number of connections plus the number of units.
    """

    input_arity: int
    layers: list[list[Neuron]] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.layers) + 1

    @property
    def unit_count(self) -> int:
        return sum(len(layer) for layer in self.layers)

    @property
    def connection_count(self) -> int:
        return sum(len(n.inputs) for layer in self.layers for n in layer)

    @property
    def weight_count(self) -> int:
        return self.connection_count + self.unit_count

    def complexity(self) -> ComplexityReport:
        return ComplexityReport(depth=self.depth, units=self.unit_count, weights=self.weight_count)

    def eval(self, x) -> np.ndarray:
        """Evaluate the output unit; ``x`` is ``(input_arity,)`` or ``(n, input_arity)``."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if pts.shape[1] != self.input_arity:
            raise ValueError(f"expected {self.input_arity} inputs, got {pts.shape[1]}")
        values: list[np.ndarray] = [pts.T]
        for layer in self.layers:
            acts = np.empty((len(layer), pts.shape[0]))
            for i, neuron in enumerate(layer):
                acc = np.full(pts.shape[0], neuron.bias)
                for (lyr, idx, w) in neuron.inputs:
                    acc += w * values[lyr][idx]
                acts[i] = np.maximum(acc, 0.0) if neuron.relu else acc
            values.append(acts)
        out = values[-1][0]
        return out if np.ndim(x) == 2 else out[0]

    def to_json(self) -> dict:
        """JSON-ready description (layer list; see README for the layout)."""
        return {
            "input_arity": self.input_arity,
            "depth": self.depth,
            "units": self.unit_count,
            "weights": self.weight_count,
            "layers": [
                [
                    {
                        "inputs": [[lyr, idx, w] for (lyr, idx, w) in n.inputs],
                        "bias": n.bias,
                        "relu": n.relu,
                    }
                    for n in layer
                ]
                for layer in self.layers
            ],
        }


def _combine(terms: Sequence[tuple[float, Expr]], bias: float = 0.0) -> Expr:
    coeffs: dict[tuple[int, int], float] = {}
    b = bias
    for c, (refs, eb) in terms:
        if c == 0.0:
            continue
        b += c * eb
        for key, w in refs.items():
            coeffs[key] = coeffs.get(key, 0.0) + c * w
    return ({k: w for k, w in coeffs.items() if w != 0.0}, b)


class _SquareChain:
    """One f_R evaluation threaded through shared tooth layers."""

    def __init__(self, u: Expr):
        self.terms: list[tuple[float, Expr]] = [(1.0, u)]
        self.g = u

    def piece_specs(self) -> list[tuple[Expr, bool]]:
        return [(_combine([(1.0, self.g)], bias=shift), True) for shift in (0.0, -0.5, -1.0)]

    def advance(self, pieces: list[Expr], r: int) -> None:
        self.g = _combine([(2.0, pieces[0]), (-4.0, pieces[1]), (2.0, pieces[2])])
        self.terms.append((-(4.0 ** -r), self.g))

    def result(self) -> Expr:
        return _combine(self.terms)


class _GraphBuilder:
    """Accumulates layers; expressions reference (layer, index) pairs."""

    def __init__(self, input_arity: int):
        self.graph = ReluGraph(input_arity=input_arity)

    @staticmethod
    def input_expr(j: int) -> Expr:
        return ({(0, j): 1.0}, 0.0)

    def add_layer(self, specs: Sequence[tuple[Expr, bool]]) -> list[Expr]:
        """Append one layer of neurons; returns expressions for their outputs."""
        layer_idx = len(self.graph.layers) + 1
        neurons = []
        outs: list[Expr] = []
        for i, ((refs, bias), use_relu) in enumerate(specs):
            inputs = [(lyr, idx, w) for (lyr, idx), w in sorted(refs.items())]
            neurons.append(Neuron(inputs=inputs, bias=bias, relu=use_relu))
            outs.append(({(layer_idx, i): 1.0}, 0.0))
        self.graph.layers.append(neurons)
        return outs

    def square_layers(self, chains: list[_SquareChain], R: int) -> None:
        """Append R layers advancing all chains in lockstep."""
        for r in range(1, R + 1):
            specs: list[tuple[Expr, bool]] = []
            for chain in chains:
                specs.extend(chain.piece_specs())
            outs = self.add_layer(specs)
            for i, chain in enumerate(chains):
                chain.advance(outs[3 * i : 3 * i + 3], r)

    def pair_exprs(self, pairs: list[tuple[Expr, Expr]], R: int) -> list[Expr]:
        """Pair products of all ``pairs`` sharing the same R layers."""
        trios = []
        chains: list[_SquareChain] = []
        for u, v in pairs:
            mid = _combine([(0.5, u), (0.5, v)])
            trio = (_SquareChain(mid), _SquareChain(u), _SquareChain(v))
            trios.append(trio)
            chains.extend(trio)
        self.square_layers(chains, R)
        return [
            _combine([(2.0, m.result()), (-0.5, a.result()), (-0.5, b.result())])
            for m, a, b in trios
        ]

    def clamp_exprs(self, exprs: list[Expr]) -> list[Expr]:
        """Clamp each value to [0, 1] in one shared layer: s(v) - s(v - 1)."""
        specs: list[tuple[Expr, bool]] = []
        for e in exprs:
            specs.append((e, True))
            specs.append((_combine([(1.0, e)], bias=-1.0), True))
        outs = self.add_layer(specs)
        return [
            _combine([(1.0, outs[2 * i]), (-1.0, outs[2 * i + 1])])
            for i in range(len(exprs))
        ]

    def tree_exprs(self, exprs: list[Expr], R: int) -> Expr:
        vals = list(exprs)
        while len(vals) > 1:
            pairs = [(vals[i], vals[i + 1]) for i in range(0, len(vals) - 1, 2)]
            prods = self.pair_exprs(pairs, R)
            if len(vals) > 2:
                prods = self.clamp_exprs(prods)
            if len(vals) % 2 == 1:
                prods.append(vals[-1])
            vals = prods
        return vals[0]

    def finish(self, expr: Expr) -> ReluGraph:
        self.add_layer([(expr, False)])
        return self.graph


def build_square_network(R: int) -> ReluGraph:
    """Explicit graph for f_R: depth R+2, units 3R+1, weights 15R-4."""
    if R < 1:
        raise ValueError(f"accuracy level R must be >= 1, got {R}")
    b = _GraphBuilder(input_arity=1)
    chain = _SquareChain(b.input_expr(0))
    b.square_layers([chain], R)
    return b.finish(chain.result())


def build_pair_network(R: int) -> ReluGraph:
    """Explicit graph computing the pair product on [0, 1]**2.

    Matches :func:`pair_product` pointwise on the unit square (the graph
    does not reproduce the input clamping applied outside it).
    """
    if R < 1:
        raise ValueError(f"accuracy level R must be >= 1, got {R}")
    b = _GraphBuilder(input_arity=2)
    out = b.pair_exprs([(b.input_expr(0), b.input_expr(1))], R)[0]
    return b.finish(out)


def build_basis_network(R: int, bid: BasisId) -> ReluGraph:
    """Explicit graph for the ReLU-product basis feature of ``bid``.

    The first layer computes the d hat values (three ReLU pieces each),
    then a binary tree of pair blocks, one block of shared layers per
    tree level, with clamped intermediate outputs, mirrors
    :func:`approx_basis_eval`.  Depth is ``R * ceil(log2 d)`` up to an
    additive O(log d) term.
    """
    if R < 1:
        raise ValueError(f"accuracy level R must be >= 1, got {R}")
    b = _GraphBuilder(input_arity=bid.dimension)
    specs: list[tuple[Expr, bool]] = []
    for j, (l, s) in enumerate(zip(bid.level, bid.node)):
        scale = 2.0 ** l
        xj = b.input_expr(j)
        for shift in (1.0, 0.0, -1.0):
            specs.append((_combine([(scale, xj)], bias=shift - s), True))
    pieces = b.add_layer(specs)
    hats = [
        _combine([(1.0, pieces[3 * j]), (-2.0, pieces[3 * j + 1]), (1.0, pieces[3 * j + 2])])
        for j in range(bid.dimension)
    ]
    out = b.tree_exprs(hats, R) if bid.dimension > 1 else hats[0]
    return b.finish(out)


def basis_network_complexity(d: int, R: int) -> ComplexityReport:
    """Depth/unit/weight counts of one basis-feature network.

    The counts depend only on the dimension and the accuracy level, not
    on which basis id is built, so a representative id is used.
    """
    bid = BasisId((0,) * d, (0,) * d)
    return build_basis_network(R, bid).complexity()

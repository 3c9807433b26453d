"""Connections and complex projective structures on a chart.

All tensors are stored as nested tuples of :class:`~cproj.expr.Expr` with
0-based indices, so ``Gamma.components[i][j][k]`` is the Christoffel symbol
with upper index ``i+1`` and lower indices ``j+1, k+1``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .expr import ZERO, ChartPoint, Evaluator, Expr, as_expr, as_points, conj, diff, evaluator

__all__ = [
    "default_grid",
    "StructureError",
    "DegenerateMetricError",
    "NonKahlerError",
    "HermitianMetricField",
    "ChristoffelField",
    "ProjectiveStructure",
    "LoweredPi",
    "levi_civita",
    "project",
    "shift",
    "pi_lower",
    "fubini_study",
]

TRACE_TOL = 1e-9
KAHLER_TOL = 1e-9


class StructureError(ValueError):
    """Invalid structure or metric data."""


class DegenerateMetricError(StructureError):
    pass


class NonKahlerError(StructureError):
    pass


@functools.lru_cache(maxsize=16)
def _grid(n: int, radius: float) -> np.ndarray:
    axis = np.linspace(-radius, radius, n)
    pts = np.array(list(itertools.product(axis, repeat=4)))
    return np.stack([pts[:, 0] + 1j * pts[:, 1], pts[:, 2] + 1j * pts[:, 3]], axis=1)


def default_grid(n: int = 5, radius: float = 0.9) -> np.ndarray:
    """``n**4`` points of the cube ``[-radius, radius]^4`` as (z1, z2) pairs.

    Real coordinates are ordered (Re z1, Im z1, Re z2, Im z2).
    """
    return _grid(int(n), float(radius)).copy()


def _sym3(entries, name: str) -> tuple:
    """Build a (2,2,2) nested tuple symmetric in the last two indices."""
    comps = [[[ZERO, ZERO], [ZERO, ZERO]] for _ in range(2)]
    if isinstance(entries, Mapping):
        seen = {}
        for key, value in entries.items():
            i, j, k = _parse_index(key, name)
            if j > k:
                j, k = k, j
            e = as_expr(value)
            if seen.get((i, j, k), e) is not e:
                raise StructureError(f"{name}{i + 1}_{j + 1}{k + 1} and {name}{i + 1}_{k + 1}{j + 1} differ")
            seen[i, j, k] = e
            comps[i][j][k] = e
    else:
        arr = entries
        for i, j, k in itertools.product(range(2), repeat=3):
            if j <= k:
                comps[i][j][k] = as_expr(arr[i][j][k])
    for i in range(2):
        comps[i][1][0] = comps[i][0][1]
    return tuple(tuple(tuple(row) for row in block) for block in comps)


def _parse_index(key, name: str) -> tuple[int, int, int]:
    """Accept (i, j, k) 1-based tuples or strings like 'Pi1_22' / '1_22'."""
    if isinstance(key, str):
        digits = [c for c in key if c.isdigit()]
        if len(digits) != 3:
            raise StructureError(f"cannot read component index from {key!r}")
        key = tuple(int(c) for c in digits)
    i, j, k = key
    if not all(x in (1, 2) for x in (i, j, k)):
        raise StructureError(f"{name} index {key!r} outside {{1,2}}")
    return i - 1, j - 1, k - 1


class _Tensor:
    """Shared evaluation helpers for the expression tensors below."""

    components: tuple

    def flat(self) -> list[Expr]:
        out: list[Expr] = []

        def walk(x):
            if isinstance(x, Expr):
                out.append(x)
            else:
                for y in x:
                    walk(y)

        walk(self.components)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        shape = []
        x = self.components
        while not isinstance(x, Expr):
            shape.append(len(x))
            x = x[0]
        return tuple(shape)

    def values(self, points) -> np.ndarray:
        """Components at ``points``: shape (N, *self.shape); non-finite where singular."""
        pts = as_points(points)
        raw = evaluator(self.flat())(pts[:, 0], pts[:, 1])
        return np.moveaxis(raw, 0, -1).reshape((len(pts),) + self.shape)

    def at(self, p) -> np.ndarray:
        return self.values([p])[0]


class HermitianMetricField(_Tensor):
    """Components g_{i jbar} of a hermitian metric in holomorphic coordinates.

    ``g21`` defaults to ``conj(g12)``; when given explicitly, hermiticity is
    checked at evaluation time by :meth:`hermiticity_residual`.
    """

    def __init__(self, g11, g12, g22, g21=None):
        g11, g12, g22 = as_expr(g11), as_expr(g12), as_expr(g22)
        g21 = conj(g12) if g21 is None else as_expr(g21)
        self.components = ((g11, g12), (g21, g22))

    @classmethod
    def identity(cls) -> "HermitianMetricField":
        return cls(1, 0, 1)

    @classmethod
    def from_potential(cls, potential) -> "HermitianMetricField":
        """g_{i jbar} = d^2 K / dz^i d(conj z^j) for a real potential K."""
        K = as_expr(potential)
        g = [[diff(diff(K, i + 1), j + 1, barred=True) for j in range(2)] for i in range(2)]
        return cls(g[0][0], g[0][1], g[1][1], g[1][0])

    @functools.cached_property
    def det(self) -> Expr:
        (a, b), (c, d) = self.components
        return a * d - b * c

    @functools.cached_property
    def z_derivatives(self) -> tuple:
        """dg[i][k][j] = d g_{k jbar} / dz^i."""
        return tuple(
            tuple(tuple(diff(self.components[k][j], i + 1) for j in range(2)) for k in range(2))
            for i in range(2)
        )

    def hermiticity_residual(self, points) -> float:
        g = self.values(points)
        ok = np.isfinite(g).all(axis=(1, 2))
        g = g[ok]
        if not len(g):
            return 0.0
        return float(np.max(np.abs(g - np.conj(np.swapaxes(g, 1, 2)))))

    def kahler_residual(self, points) -> float:
        """max |dg_{k jbar}/dz^i - dg_{i jbar}/dz^k|, relative to the size of dg."""
        dg = np.asarray(
            np.moveaxis(evaluator(list(_flatten(self.z_derivatives)))(*as_points(points).T), 0, -1)
        ).reshape(-1, 2, 2, 2)
        ok = np.isfinite(dg).all(axis=(1, 2, 3))
        dg = dg[ok]
        if not len(dg):
            return 0.0
        asym = np.abs(dg[:, 0, 1, :] - dg[:, 1, 0, :])
        scale = max(1.0, float(np.max(np.abs(dg))))
        return float(np.max(asym)) / scale


def _flatten(x):
    if isinstance(x, Expr):
        yield x
    else:
        for y in x:
            yield from _flatten(y)


class ChristoffelField(_Tensor):
    """Complex Christoffel symbols Gamma^i_{jk}, symmetric in (j, k) by storage."""

    def __init__(self, components):
        self.components = _sym3(components, "Gamma")

    @classmethod
    def zero(cls) -> "ChristoffelField":
        return cls({})

    def traces(self) -> tuple[Expr, Expr]:
        """Gamma^l_{lj} for j = 1, 2."""
        c = self.components
        return tuple(c[0][0][j] + c[1][1][j] for j in range(2))


class ProjectiveStructure(_Tensor):
    """Complex projective invariants Pi^i_{jk} on a chart.

    Components may be given as a mapping keyed by 1-based ``(i, j, k)`` tuples or
    strings such as ``"Pi1_22"`` (missing entries are zero), or as a nested
    2x2x2 array.  Symmetry in (j, k) is enforced by storage; trace-freeness
    ``Pi^1_{1k} + Pi^2_{2k} = 0`` is checked on ``samples`` unless
    ``validate=False``.
    """

    def __init__(self, components, *, validate: bool = True, samples=None, tol: float = TRACE_TOL):
        self.components = _sym3(components, "Pi")
        if validate:
            pts = default_grid() if samples is None else samples
            residual = self.trace_residual(pts)
            if residual > tol:
                raise StructureError(f"Pi is not trace-free: max |Pi^l_(lk)| = {residual:.3e} > {tol:.1e}")

    @classmethod
    def zero(cls) -> "ProjectiveStructure":
        return cls({}, validate=False)

    def trace_residual(self, points) -> float:
        c = self.components
        traces = [c[0][0][k] + c[1][1][k] for k in range(2)]
        vals = evaluator(traces)(*as_points(points).T)
        vals = vals[:, Evaluator.finite_mask(vals)]
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def is_holomorphic(self) -> bool:
        """True when no component depends on conj(z) (syntactic check)."""
        return all(diff(e, k, barred=True).is_zero() for e in self.flat() for k in (1, 2))

    # Derived gauge quantities, computed once per structure.

    @functools.cached_property
    def lowered(self) -> "LoweredPi":
        return pi_lower(self)

    @functools.cached_property
    def weyl_exprs(self) -> tuple:
        """W[i][k][l][j] = -dPi^i_{kl}/d(conj z^j)."""
        c = self.components
        return tuple(
            tuple(tuple(tuple(-diff(c[i][k][l], j + 1, barred=True) for j in range(2)) for l in range(2)) for k in range(2))
            for i in range(2)
        )

    @functools.cached_property
    def k_exprs(self) -> tuple:
        """K[i][k][j] = -dPi_{ik}/d(conj z^j)."""
        low = self.lowered.components
        return tuple(
            tuple(tuple(-diff(low[i][k], j + 1, barred=True) for j in range(2)) for k in range(2)) for i in range(2)
        )

    @functools.cached_property
    def liouville_exprs(self) -> tuple:
        """L_i = dPi_{i2}/dz1 - dPi_{i1}/dz2 + Pi_{k1} Pi^k_{i2} - Pi_{k2} Pi^k_{i1}."""
        low = self.lowered.components
        c = self.components
        out = []
        for i in range(2):
            e = diff(low[i][1], 1) - diff(low[i][0], 2)
            for k in range(2):
                e = e + low[k][0] * c[k][i][1] - low[k][1] * c[k][i][0]
            out.append(e)
        return tuple(out)

    @functools.cached_property
    def _connection_exprs(self) -> list[Expr]:
        exprs = self.flat()
        exprs += self.lowered.flat()
        exprs += list(_flatten(self.weyl_exprs))
        exprs += list(_flatten(self.k_exprs))
        return exprs

    @functools.cached_property
    def _gauge_exprs(self) -> list[Expr]:
        return self._connection_exprs + list(self.liouville_exprs)

    def gauge_data(self, points, liouville: bool = True) -> "GaugeData":
        """Evaluate Pi, Pi_ij, W, K and (optionally) L at ``points`` in one vectorised pass.

        Without ``liouville`` the ``liouville`` field is None; transport does not need it.
        """
        pts = as_points(points)
        exprs = self._gauge_exprs if liouville else self._connection_exprs
        raw = evaluator(exprs)(pts[:, 0], pts[:, 1])
        raw = np.moveaxis(raw, 0, -1)
        n = len(pts)
        return GaugeData(
            points=pts,
            pi=raw[:, 0:8].reshape(n, 2, 2, 2),
            pi_low=raw[:, 8:12].reshape(n, 2, 2),
            weyl=raw[:, 12:28].reshape(n, 2, 2, 2, 2),
            k=raw[:, 28:36].reshape(n, 2, 2, 2),
            liouville=raw[:, 36:38].reshape(n, 2) if liouville else None,
        )


@dataclass(frozen=True)
class GaugeData:
    """Numerical values of the coordinate-gauge quantities at a batch of points.

    Index conventions (0-based): ``pi[n, i, j, k]`` is Pi^i_{jk};
    ``pi_low[n, i, j]`` is Pi_{ij}; ``weyl[n, i, k, l, j]`` is W^i_{kl jbar};
    ``k[n, i, k, j]`` is K_{ik jbar}; ``liouville[n, i]`` is L_i.
    """

    points: np.ndarray
    pi: np.ndarray
    pi_low: np.ndarray
    weyl: np.ndarray
    k: np.ndarray
    liouville: np.ndarray | None

    def finite(self) -> np.ndarray:
        arrays = [a for a in (self.pi, self.pi_low, self.weyl, self.k, self.liouville) if a is not None]
        return np.all([np.isfinite(a).reshape(len(self.points), -1).all(axis=1) for a in arrays], axis=0)


class LoweredPi(_Tensor):
    """Pi_{ij} = Pi^k_{il} Pi^l_{jk} - dPi^k_{ij}/dz^k (not assumed symmetric)."""

    def __init__(self, components: Sequence[Sequence[Expr]]):
        self.components = tuple(tuple(as_expr(x) for x in row) for row in components)


# ----------------------------------------------------------------- operations


def levi_civita(g: HermitianMetricField, samples=None, tol: float = KAHLER_TOL) -> ChristoffelField:
    """Christoffel symbols of the Levi-Civita connection of a Kahler metric.

    Solves g_{s jbar} Gamma^s_{ik} = dg_{k jbar}/dz^i with the inverse metric formed
    symbolically (adjugate over determinant).  ``samples`` (default: the 5^4 grid)
    are used to reject metrics that are degenerate everywhere or not Kahler.
    """
    pts = default_grid() if samples is None else as_points(samples)
    det_vals = evaluator([g.det])(pts[:, 0], pts[:, 1])[0]
    good = np.isfinite(det_vals) & (np.abs(det_vals) > 1e-12)
    if not good.any():
        raise DegenerateMetricError("metric is degenerate at every validation point")
    residual = g.kahler_residual(pts[good])
    if residual > tol:
        raise NonKahlerError(f"metric is not Kahler: dg_(k jbar)/dz^i asymmetry {residual:.3e} > {tol:.1e}")

    (g11, g12), (g21, g22) = g.components
    D = g.det
    inv = ((g22 / D, -g12 / D), (-g21 / D, g11 / D))  # inv[j][s] = g^{j sbar}-style inverse of M[s][j]
    dg = g.z_derivatives
    comps = {}
    for s in range(2):
        for i in range(2):
            for k in range(i, 2):
                e = ZERO
                for j in range(2):
                    e = e + dg[i][k][j] * inv[j][s]
                comps[(s + 1, i + 1, k + 1)] = e
    return ChristoffelField(comps)


def project(gamma: ChristoffelField) -> ProjectiveStructure:
    """Pi^i_{jk} = Gamma^i_{jk} - (Gamma^l_{lj} delta^i_k + Gamma^l_{lk} delta^i_j) / 3."""
    c = gamma.components
    tr = gamma.traces()
    comps = {}
    for i in range(2):
        for j in range(2):
            for k in range(j, 2):
                e = c[i][j][k]
                correction = ZERO
                if i == k:
                    correction = correction + tr[j]
                if i == j:
                    correction = correction + tr[k]
                if not correction.is_zero():
                    e = e - correction / 3
                comps[(i + 1, j + 1, k + 1)] = e
    return ProjectiveStructure(comps, validate=False)


def shift(gamma: ChristoffelField, beta: Sequence) -> ChristoffelField:
    """Projectively equivalent connection Gamma^i_{jk} + delta^i_j beta_k + delta^i_k beta_j."""
    b = [as_expr(x) for x in beta]
    if len(b) != 2:
        raise ValueError("beta needs two components")
    c = gamma.components
    comps = {}
    for i in range(2):
        for j in range(2):
            for k in range(j, 2):
                e = c[i][j][k]
                if i == j:
                    e = e + b[k]
                if i == k:
                    e = e + b[j]
                comps[(i + 1, j + 1, k + 1)] = e
    return ChristoffelField(comps)


def pi_lower(pi: ProjectiveStructure) -> LoweredPi:
    """Lowered invariants Pi_{ij} = Pi^k_{il} Pi^l_{jk} - dPi^k_{ij}/dz^k."""
    c = pi.components
    rows = []
    for i in range(2):
        row = []
        for j in range(2):
            e = ZERO
            for k in range(2):
                for l in range(2):
                    e = e + c[k][i][l] * c[l][j][k]
            for k in range(2):
                e = e - diff(c[k][i][j], k + 1)
            row.append(e)
        rows.append(row)
    return LoweredPi(rows)


def fubini_study() -> HermitianMetricField:
    """Fubini-Study metric in the affine chart: d d-bar log(1 + |z|^2)."""
    from .expr import z1, z2

    r = 1 + z1 * conj(z1) + z2 * conj(z2)
    g11 = 1 / r - conj(z1) * z1 / r**2
    g12 = -conj(z1) * z2 / r**2
    g21 = -conj(z2) * z1 / r**2
    g22 = 1 / r - conj(z2) * z2 / r**2
    return HermitianMetricField(g11, g12, g22, g21)

"""Kahler metrisability of a complex projective structure on a chart.

The pipeline: a Liouville test, the pointwise algebraic Weyl obstruction on the
hermitian part of the prolonged state, holonomy of the prolonged connection
around probe loops, and finally reconstruction of candidate metrics from the
states that survive, checked for compatibility with the structure.

In the flat case the prolonged connection is the one of ``dH + theta H + H theta* = 0``
on 3x3 hermitian matrices, solved in closed form by ``H = u^-1 C u^-*`` where
``u(z)`` is unipotent lower triangular with first column ``(1, z1, z2)``.  The
state sits in ``H`` as::

    [[ h,    conj(h2), -conj(h1)],
     [ h2,   -h22,      h21     ],
     [-h1,    h12,     -h11     ]]
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree
from scipy.spatial.distance import cdist

from .curvature import VANISH_TOL, WeylAtPoint
from .expr import ZERO, ChartPoint, DomainError, as_expr, as_points, conj, const, diff, evaluator, z1, z2
from .prolongation import (
    DEFAULT_STEPS,
    EPS_INV,
    ChartPath,
    ProlongedState,
    from_real,
    propagator,
    segment_propagators,
    to_real,
)
from .structure import (
    DegenerateMetricError,
    HermitianMetricField,
    ProjectiveStructure,
    default_grid,
    levi_civita,
    project,
)

__all__ = [
    "HermitianForm3",
    "h_from_metric",
    "metric_from_h",
    "state_from_metric",
    "weyl_obstruction_residual",
    "obstruction_solution_space",
    "admits_nondegenerate",
    "solve_flat",
    "flat_state_matrix",
    "flat_metric_field",
    "verify_compatibility",
    "CompatibilityReport",
    "default_loops",
    "axis_loops",
    "metrise",
    "MetrisationReport",
    "Candidate",
]

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-12
CANDIDATE_DET_TOL = 1e-10
NULL_TOL = 1e-9
HOLONOMY_TOL = 1e-6
COMPAT_TOL = 1e-6
RECONSTRUCTION_STEPS = 200
_PROBE_FRAME = np.linalg.qr(np.vander([1.0, 2.0, 3.0, 4.0], increasing=True).T)[0]

# Orthonormal basis of hermitian 2x2 matrices in the coordinates (h11, h22, Re h12, Im h12).
_HERM_BASIS = from_real(np.eye(9)[:4])[0]
# det(h) = h11 h22 - |h12|^2 as a quadratic form in the same coordinates.
_DET_FORM = np.array([[0, 0.5, 0, 0], [0.5, 0, 0, 0], [0, 0, -1, 0], [0, 0, 0, -1.0]])


def _hermitian_coords(h: np.ndarray) -> np.ndarray:
    return to_real(h, np.zeros(h.shape[:-2] + (2,)), np.zeros(h.shape[:-2]))[..., :4]


def _det2(h: np.ndarray) -> np.ndarray:
    return (h[..., 0, 0] * h[..., 1, 1] - h[..., 0, 1] * h[..., 1, 0]).real


# -------------------------------------------------------------- h <-> metric


def h_from_metric(g, p=None) -> np.ndarray:
    """h_{i jbar} = g_{i jbar} det(g)^(-2/3), with the real cube root of det(g).

    ``g`` is a HermitianMetricField (evaluated at ``p``) or a 2x2 hermitian array.
    """
    gm = g.at(p) if isinstance(g, HermitianMetricField) else np.asarray(g, dtype=complex)
    if not np.isfinite(gm).all():
        raise DomainError(p)
    det = float(_det2(gm))
    if abs(det) <= DEGENERATE_TOL:
        raise DegenerateMetricError(f"metric is degenerate (det = {det:.3e})")
    return gm / np.cbrt(det) ** 2


def metric_from_h(h) -> np.ndarray:
    """g_{i jbar} = h_{i jbar} / (h11 h22 - |h12|^2)^2."""
    h = np.asarray(h, dtype=complex)
    det = float(_det2(h))
    if abs(det) <= DEGENERATE_TOL:
        raise DegenerateMetricError(f"h is degenerate (h11 h22 - |h12|^2 = {det:.3e})")
    return h / det**2


def state_from_metric(g: HermitianMetricField, p, pi: ProjectiveStructure | None = None) -> ProlongedState:
    """The prolonged state induced by a Kahler metric at ``p``.

    ``h_{i jbar}`` from :func:`h_from_metric`; ``h_j`` from the trace part of the
    Levi-Civita connection, ``conj(h_j) = -(h_{2 jbar} T_1 - h_{1 jbar} T_2) / 3``
    with ``T_i = d log det(g) / dz^i``; ``h`` from the ``dz^2`` component of the
    equation for ``dh_1``.
    """
    if pi is None:
        pi = project(levi_civita(g))
    (g11, g12), (g21, g22) = g.components
    G = g.det
    T = [diff(G, 1) / G, diff(G, 2) / G]
    Y = [-(g21 * T[0] - g11 * T[1]) / 3, -(g22 * T[0] - g12 * T[1]) / 3]
    dY1bar = diff(conj(Y[0]), 2)
    pts = as_points(p)
    vals = evaluator([G, T[0], T[1], Y[0], Y[1], dY1bar])(pts[:, 0], pts[:, 1])[:, 0]
    if not np.isfinite(vals).all():
        raise DomainError(ChartPoint(pts[0, 0], pts[0, 1]))
    Gv, T1, T2, Y1, Y2, dY1b = vals
    hmat = h_from_metric(g, pts[0])
    c = 1.0 / np.cbrt(Gv.real) ** 2
    hvec = c * np.conj(np.array([Y1, Y2]))
    d2h1 = -(2.0 / 3.0) * c * T2 * np.conj(Y1) + c * dY1b
    data = pi.gauge_data(pts)
    P, W = data.pi[0], data.weyl[0]
    hscal = d2h1 - hvec @ P[:, 0, 1] + 0.5 * np.einsum("ij,si,sj->", EPS_INV, hmat, W[:, 0, 1, :])
    return ProlongedState(hmat, hvec, hscal)


# -------------------------------------------------------- algebraic obstruction


def _weyl_array(W) -> np.ndarray:
    return W.W if isinstance(W, WeylAtPoint) else np.asarray(W, dtype=complex)


def _obstruction_terms(W: np.ndarray, h: np.ndarray) -> np.ndarray:
    """LHS - RHS of the algebraic condition, indexed [..., i, k, j, l]."""
    hb = np.conj(h)
    Wb = np.conj(W)
    lhs = np.einsum("...js,...sikl->...ikjl", hb, W) + np.einsum("...ls,...sikj->...ikjl", hb, W)
    rhs = np.einsum("...ks,...sjli->...ikjl", h, Wb) + np.einsum("...is,...sjlk->...ikjl", h, Wb)
    return lhs - rhs


def weyl_obstruction_residual(W, h) -> float:
    """max over (i,k,j,l) of
    |conj(h_{j sbar}) W^s_{ik lbar} + conj(h_{l sbar}) W^s_{ik jbar}
     - h_{k sbar} conj(W^s_{jl ibar}) - h_{i sbar} conj(W^s_{jl kbar})|.
    """
    return float(np.max(np.abs(_obstruction_terms(_weyl_array(W), np.asarray(h, dtype=complex)))))


def obstruction_solution_space(weyls: Sequence, rtol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal basis (shape (d, 2, 2)) of the hermitian h solving the condition
    simultaneously for every Weyl tensor in ``weyls``."""
    Ws = [_weyl_array(W) for W in weyls]
    if not Ws:
        raise ValueError("need at least one Weyl tensor")
    W = np.stack(Ws)  # (n, 2,2,2,2)
    cols = _obstruction_terms(W[None], _HERM_BASIS[:, None])  # (4, n, 2,2,2,2)
    M = cols.reshape(4, -1).T
    M = np.concatenate([M.real, M.imag], axis=0)
    _, s, vt = np.linalg.svd(M)
    if s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > rtol * s[0]))
    null = vt[rank:]
    return np.einsum("dk,kij->dij", null, _HERM_BASIS)


def admits_nondegenerate(basis, tol: float = 1e-9) -> bool:
    """Whether the span of hermitian ``basis`` matrices contains a nondegenerate one."""
    basis = np.asarray(basis)
    if not len(basis):
        return False
    B = _hermitian_coords(basis)
    Q = B @ _DET_FORM @ B.T
    return bool(np.max(np.abs(Q)) > tol)


# --------------------------------------------------------------- flat case


@dataclass(frozen=True)
class HermitianForm3:
    """A hermitian form on C^3 parametrising compatible metrics of the flat structure."""

    C: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        C = np.asarray(self.C, dtype=complex)
        if C.shape != (3, 3):
            raise ValueError("C must be 3x3")
        if np.max(np.abs(C - C.conj().T)) > self.tol * max(1.0, float(np.max(np.abs(C)))):
            raise ValueError("C is not hermitian")
        object.__setattr__(self, "C", 0.5 * (C + C.conj().T))

    @classmethod
    def from_reals(cls, values: Sequence[float]) -> "HermitianForm3":
        """From (C11, C22, C33, Re C12, Im C12, Re C13, Im C13, Re C23, Im C23)."""
        d1, d2, d3, r12, i12, r13, i13, r23, i23 = map(float, values)
        C = np.array(
            [
                [d1, r12 + 1j * i12, r13 + 1j * i13],
                [r12 - 1j * i12, d2, r23 + 1j * i23],
                [r13 - 1j * i13, r23 - 1j * i23, d3],
            ]
        )
        return cls(C)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.C)

    @property
    def rank(self) -> int:
        ev = self.eigenvalues
        norm = float(np.max(np.abs(ev)))
        if norm == 0.0:
            return 0
        return int(np.sum(np.abs(ev) > 1e-10 * norm))


def _uinv(p) -> np.ndarray:
    a, b = as_points(p)[0]
    return np.array([[1, 0, 0], [-a, 1, 0], [-b, 0, 1]], dtype=complex)


def flat_state_matrix(state: ProlongedState) -> np.ndarray:
    """The 3x3 hermitian matrix H holding ``state``."""
    h = state.hmat
    h1, h2 = state.hvec
    return np.array(
        [
            [state.hscal, np.conj(h2), -np.conj(h1)],
            [h2, -h[1, 1], h[1, 0]],
            [-h1, h[0, 1], -h[0, 0]],
        ],
        dtype=complex,
    )


def _state_from_matrix(H: np.ndarray) -> ProlongedState:
    hmat = np.array([[-H[2, 2], H[2, 1]], [H[1, 2], -H[1, 1]]])
    hvec = np.array([-H[2, 0], H[1, 0]])
    return ProlongedState(hmat, hvec, H[0, 0])


def solve_flat(C, p) -> ProlongedState:
    """Closed-form solution of the flat prolonged system: ``H(p) = u(p)^-1 C u(p)^-*``."""
    C = C.C if isinstance(C, HermitianForm3) else HermitianForm3(C).C
    ui = _uinv(p)
    return _state_from_matrix(ui @ C @ ui.conj().T)


def flat_metric_field(C) -> HermitianMetricField:
    """The (pseudo-)Kahler metric h / det(h)^2 built from ``solve_flat(C, .)``, symbolically."""
    C = C.C if isinstance(C, HermitianForm3) else HermitianForm3(C).C
    rows = [(-z1, const(1), ZERO), (-z2, ZERO, const(1))]

    def block(a, b):
        e = ZERO
        for c in range(3):
            for d in range(3):
                if C[c, d] != 0:
                    e = e + rows[a][c] * C[c, d] * conj(rows[b][d])
        return e

    h11, h12, h21, h22 = -block(1, 1), block(1, 0), block(0, 1), -block(0, 0)
    det2 = (h11 * h22 - h12 * h21) ** 2
    return HermitianMetricField(h11 / det2, h12 / det2, h22 / det2, h21 / det2)


# ------------------------------------------------------------ compatibility


@dataclass
class CompatibilityReport:
    residual: float
    kahler_residual: float
    n_samples: int
    skipped: list = field(default_factory=list)


def verify_compatibility(pi: ProjectiveStructure, g: HermitianMetricField, samples=None) -> CompatibilityReport:
    """sup over samples of |project(levi_civita(g)) - Pi|, component-wise."""
    pts = default_grid() if samples is None else as_points(samples)
    pig = project(levi_civita(g, pts))
    a, b = pig.values(pts), pi.values(pts)
    gv = g.values(pts)
    ok = np.isfinite(a).all(axis=(1, 2, 3)) & np.isfinite(b).all(axis=(1, 2, 3)) & (np.abs(_det2(gv)) > DEGENERATE_TOL)
    if not ok.any():
        raise DegenerateMetricError("no sample where both the metric and the structure are regular")
    skipped = [ChartPoint(complex(x), complex(y)) for x, y in pts[~ok]]
    return CompatibilityReport(
        residual=float(np.max(np.abs(a[ok] - b[ok]))),
        kahler_residual=g.kahler_residual(pts[ok]),
        n_samples=int(ok.sum()),
        skipped=skipped,
    )


def _numeric_compatibility(pi, states_at, points, step, fd=1e-4):
    """Compatibility residual of metrics given by prolonged states at ``points``.

    Metric derivatives come from central differences of states transported a
    distance ``fd`` in each real direction; returns (residual, kahler) arrays.
    """
    n = len(points)
    dirs = np.array([[1, 0], [1j, 0], [0, 1], [0, 1j]], dtype=complex)
    starts = np.repeat(points, 8, axis=0)
    offsets = np.concatenate([dirs, -dirs])[None].repeat(n, axis=0).reshape(-1, 2) * fd
    P = segment_propagators(pi, starts, starts + offsets, steps=step).reshape(n, 8, 9, 9)
    # states_at: (m, n, 9) for m candidates
    moved = np.einsum("nrab,mnb->mnra", P, states_at)
    hm = from_real(moved)[0]
    det = _det2(hm)
    g = hm / det[..., None, None] ** 2
    dx = (g[:, :, :4] - g[:, :, 4:]) / (2 * fd)  # (m, n, 4, 2, 2)
    dz = np.stack([0.5 * (dx[:, :, 0] - 1j * dx[:, :, 1]), 0.5 * (dx[:, :, 2] - 1j * dx[:, :, 3])], axis=2)
    h0 = from_real(states_at)[0]
    g0 = h0 / _det2(h0)[..., None, None] ** 2
    # dz[m, n, i, k, j] = d g_{k jbar} / dz^i ; solve g_{s jbar} Gamma^s_{ik} = dz[i,k,j]
    gT = np.swapaxes(g0, -1, -2)
    gamma = np.linalg.solve(gT[:, :, None, None], dz[..., None])[..., 0]  # (m,n,i,k,s)
    gamma = np.transpose(gamma, (0, 1, 4, 2, 3))  # [s, i, k]
    tr = gamma[:, :, 0, 0, :] + gamma[:, :, 1, 1, :]
    eye = np.eye(2)
    proj = gamma - (np.einsum("mnj,ik->mnijk", tr, eye) + np.einsum("mnk,ij->mnijk", tr, eye)) / 3
    data = pi.gauge_data(points)
    residual = np.max(np.abs(proj - data.pi[None]), axis=(2, 3, 4))
    kahler = np.max(np.abs(dz[:, :, 0, 1] - dz[:, :, 1, 0]), axis=-1) / np.maximum(1.0, np.max(np.abs(dz), axis=(2, 3, 4)))
    return residual, kahler


# ------------------------------------------------------------------ metrise


def default_loops(basepoint, side: float = 0.2) -> list[ChartPath]:
    """Six squares of the given side centred at ``basepoint``.

    The squares lie in the planes spanned by pairs of columns of a fixed
    orthonormal frame of R^4 = (Re z1, Im z1, Re z2, Im z2) in general position,
    so the six planes span all bivectors and none is a complex line or a
    coordinate plane.  Each loop runs from the basepoint to
    the midpoint of one edge, around the square, and back.
    """
    bp = as_points(basepoint)[0]
    dirs = [np.array([q[0] + 1j * q[1], q[2] + 1j * q[3]]) for q in _PROBE_FRAME.T]
    h = side / 2
    loops = []
    for a, b in combinations(range(4), 2):
        e, f = dirs[a], dirs[b]
        m = bp - h * f
        corners = [m + h * e, m + h * e + side * f, m - h * e + side * f, m - h * e]
        loops.append(ChartPath.polyline([bp, m, *corners, m, bp]))
    return loops


def axis_loops(basepoint, side: float = 0.2) -> list[ChartPath]:
    """Four axis-aligned squares centred at ``basepoint`` in the (Re z1, Im z1),
    (Re z1, Re z2), (Im z1, Im z2) and (Re z2, Im z2) planes.

    Loops in the two complex coordinate lines cannot see holonomy of
    structures that depend on one coordinate only, which is why
    :func:`default_loops` uses planes in general position instead.
    """
    bp = as_points(basepoint)[0]
    units = [np.array([1, 0]), np.array([1j, 0]), np.array([0, 1]), np.array([0, 1j])]
    h = side / 2
    loops = []
    for a, b in [(0, 1), (0, 2), (1, 3), (2, 3)]:
        e, f = units[a], units[b]
        m = bp - h * f
        corners = [m + h * e, m + h * e + side * f, m - h * e + side * f, m - h * e]
        loops.append(ChartPath.polyline([bp, m, *corners, m, bp]))
    return loops


def _based_loop(loop: ChartPath, bp: np.ndarray) -> ChartPath:
    if not loop.is_closed:
        raise ValueError("probe loops must be closed")
    if np.allclose(loop.start, bp, rtol=0, atol=1e-12):
        return loop
    spoke = ChartPath.polyline([bp, loop.start])
    return spoke + loop + spoke.reversed()


@dataclass
class Candidate:
    """A prolonged state at the basepoint consistent with the algebraic and holonomy tests."""

    state: ProlongedState
    degenerate: bool
    representative: bool = False
    metric_values: np.ndarray | None = None
    compatibility_residual: float | None = None
    kahler_residual: float | None = None


@dataclass
class MetrisationReport:
    verdict: str
    stage: str | None
    basepoint: ChartPoint
    liouville_sup: float
    liouville_at_basepoint: tuple
    weyl_sup: float
    algebraic_dimension: int | None = None
    algebraic_basis: np.ndarray | None = None
    algebraic_failures: list = field(default_factory=list)
    holonomy_defects: list = field(default_factory=list)
    candidate_dimension: int | None = None
    candidates: list = field(default_factory=list)
    samples: np.ndarray | None = None
    skipped: list = field(default_factory=list)
    message: str = ""

    @property
    def metrisable(self) -> bool:
        return self.verdict == "metrisable-at-samples"


def _null_space(M: np.ndarray, tol: float) -> np.ndarray:
    if M.size == 0:
        return np.eye(M.shape[1])
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol))
    return vt[rank:]


def _tree_propagators(pi, pts, root: int, steps: int) -> np.ndarray:
    """Propagators from ``pts[root]`` to every point along a minimum spanning tree."""
    n = len(pts)
    P = np.empty((n, 9, 9))
    P[root] = np.eye(9)
    if n == 1:
        return P
    real = np.stack([pts[:, 0].real, pts[:, 0].imag, pts[:, 1].real, pts[:, 1].imag], axis=1)
    dist = cdist(real, real)
    tree = minimum_spanning_tree(dist)
    order, pred = breadth_first_order(tree, root, directed=False)
    children = order[1:]
    edges = segment_propagators(pi, pts[pred[children]], pts[children], steps=steps)
    for node, E in zip(children, edges):
        P[node] = E @ P[pred[node]]
    return P


def metrise(
    pi: ProjectiveStructure,
    samples=None,
    basepoint=None,
    loops: Sequence[ChartPath] | None = None,
    *,
    tol: float = VANISH_TOL,
    holonomy_tol: float = HOLONOMY_TOL,
    compat_tol: float = COMPAT_TOL,
    steps: int = DEFAULT_STEPS,
    reconstruction_steps: int = RECONSTRUCTION_STEPS,
) -> MetrisationReport:
    """Decide Kahler metrisability of ``pi`` at the sample points.

    Stages, in order: Liouville curvature must vanish; at every sample the
    algebraic Weyl condition must admit a nondegenerate hermitian solution;
    some nondegenerate state at the basepoint must be fixed by the holonomy of
    every probe loop; the metric reconstructed from it by transport must be
    compatible with ``pi``.  The first failing stage is named in the report.

    ``steps`` (per unit length) is used for the probe loops; reconstruction
    along the spanning tree of the samples uses the coarser
    ``reconstruction_steps``, which is ample for the compatibility tolerance.
    """
    pts = default_grid() if samples is None else as_points(samples)
    bp = np.zeros(2, dtype=complex) if basepoint is None else as_points(basepoint)[0]
    dists = np.abs(pts - bp).max(axis=1)
    if dists.min() > 1e-12:
        raise ValueError("basepoint must be one of the samples")
    root_guess = int(np.argmin(dists))

    data = pi.gauge_data(pts)
    ok = data.finite()
    skipped = [ChartPoint(complex(a), complex(b)) for a, b in pts[~ok]]
    if not ok[root_guess]:
        raise DomainError(ChartPoint(bp[0], bp[1]), "structure is singular at the basepoint")
    keep = np.flatnonzero(ok)
    pts = pts[keep]
    root = int(np.flatnonzero(keep == root_guess)[0])
    L = data.liouville[keep]
    Wsup = float(np.max(np.abs(data.weyl[keep])))
    report = MetrisationReport(
        verdict="obstructed",
        stage=None,
        basepoint=ChartPoint(complex(bp[0]), complex(bp[1])),
        liouville_sup=float(np.max(np.abs(L))),
        liouville_at_basepoint=(complex(L[root, 0]), complex(L[root, 1])),
        weyl_sup=Wsup,
        samples=pts,
        skipped=skipped,
    )

    if report.liouville_sup >= tol:
        report.stage = "liouville"
        report.message = "Liouville curvature does not vanish; Liouville-flatness is necessary"
        return report

    weyls = data.weyl[keep]
    basis = obstruction_solution_space([weyls[root]])
    report.algebraic_dimension = len(basis)
    report.algebraic_basis = basis
    if Wsup >= tol:
        for idx in range(len(pts)):
            if not admits_nondegenerate(obstruction_solution_space([weyls[idx]])):
                report.algebraic_failures.append(ChartPoint(complex(pts[idx, 0]), complex(pts[idx, 1])))
    if report.algebraic_failures:
        report.stage = "weyl-algebraic"
        report.message = "the algebraic Weyl condition has no nondegenerate solution at some samples"
        return report

    probe = default_loops(bp) if loops is None else [_based_loop(lp, bp) for lp in loops]
    rows = []
    for lp in probe:
        H = propagator(pi, lp, steps)
        report.holonomy_defects.append(float(np.linalg.norm(H - np.eye(9), 2)))
        rows.append(H - np.eye(9))
    B = _hermitian_coords(basis)  # (d, 4)
    proj = np.zeros((4, 9))
    proj[:, :4] = np.eye(4) - B.T @ B
    rows.append(proj)
    cand = _null_space(np.concatenate(rows, axis=0), holonomy_tol)
    report.candidate_dimension = len(cand)
    Q = cand[:, :4] @ _DET_FORM @ cand[:, :4].T if len(cand) else np.zeros((0, 0))
    if not len(cand) or np.max(np.abs(Q)) <= CANDIDATE_DET_TOL:
        report.stage = "holonomy"
        report.message = "no nondegenerate state is invariant under the probe-loop holonomy"
        return report

    evals, evecs = np.linalg.eigh(Q)
    pick = int(np.argmax(evals)) if evals.max() > CANDIDATE_DET_TOL else int(np.argmin(evals))
    rep = evecs[:, pick] @ cand
    vectors = [rep] + list(cand)
    flags = [True] + [False] * len(cand)

    P = _tree_propagators(pi, pts, root, reconstruction_steps)
    recon = []
    for x, is_rep in zip(vectors, flags):
        state = ProlongedState.from_real(x)
        c = Candidate(state=state, degenerate=abs(state.det) < CANDIDATE_DET_TOL, representative=is_rep)
        report.candidates.append(c)
        if not c.degenerate:
            recon.append(c)
    states = np.stack([np.einsum("nab,b->na", P, c.state.to_real()) for c in recon])  # (m, n, 9)
    hm = from_real(states)[0]
    dets = _det2(hm)
    regular = (np.abs(dets) > CANDIDATE_DET_TOL).all(axis=0)
    residual, kahler = _numeric_compatibility(pi, states[:, regular], pts[regular], reconstruction_steps)
    for k, c in enumerate(recon):
        with np.errstate(all="ignore"):
            c.metric_values = hm[k] / dets[k][:, None, None] ** 2
        c.compatibility_residual = float(residual[k].max()) if residual.size else 0.0
        c.kahler_residual = float(kahler[k].max()) if kahler.size else 0.0

    best = recon[0]
    if best.compatibility_residual < compat_tol and best.kahler_residual < compat_tol:
        report.verdict = "metrisable-at-samples"
        report.message = f"{report.candidate_dimension}-dimensional space of compatible prolonged states"
    else:
        report.stage = "reconstruction"
        report.message = "reconstructed metric is not compatible with the structure"
    return report

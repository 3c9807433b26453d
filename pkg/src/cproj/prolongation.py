"""The rank 9 prolonged linear system and its parallel transport.

A prolonged state consists of a hermitian matrix ``h_{i jbar}``, a complex pair
``h_i`` and a real scalar ``h``.  Pulled back by the coordinate section the
system reads, along a curve with velocity ``v`` (``theta^s_i = Pi^s_{ik} v^k``,
``theta^0_i = Pi_{ik} v^k``)::

    dh_{i jbar} = h_{i sbar} conj(theta^s_j) + h_{s jbar} theta^s_i
                  + h_i conj(eps_{sj} v^s) + conj(h_j) eps_{si} v^s
    dh_k        = h_l theta^l_k + h_{k ibar} eps^{ij} conj(theta^0_j)
                  + (eps_{kl} h - 1/2 eps^{ij} h_{s ibar} W^s_{kl jbar}) v^l
    dh          = -2 eps^{lk} Re(h_l theta^0_k)
                  + c_K eps^{ij} eps^{kl} Re(h_{k ibar} K_{ls jbar} v^s)

with ``eps_{12} = 1`` and ``eps^{ij}`` its inverse matrix.

States are handled in real coordinates
``(h11, h22, Re h12, Im h12, Re h1, Im h1, Re h2, Im h2, h)``, where ``h12`` is
``h_{1 bar2}``; the system is then an ordinary linear ODE ``x' = A(t) x``
integrated with classical fixed-step RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .expr import ChartPoint, DomainError, Expr, as_expr, as_points, diff, evaluator
from .structure import GaugeData, ProjectiveStructure

__all__ = [
    "EPS",
    "EPS_INV",
    "K_TERM_COEFF",
    "ProlongedState",
    "InvariantBreachError",
    "ChartPath",
    "rhs_components",
    "rhs_matrices",
    "prolonged_rhs",
    "propagator",
    "transport",
    "holonomy_defect",
    "DEFAULT_STEPS",
]

EPS = np.array([[0.0, 1.0], [-1.0, 0.0]])
EPS_INV = np.linalg.inv(EPS)
K_TERM_COEFF = 1.0
DEFAULT_STEPS = 1000
REALITY_TOL = 1e-9


class InvariantBreachError(RuntimeError):
    """An internal invariant failed (hermiticity or reality of the state)."""


@dataclass(frozen=True, eq=False)
class ProlongedState:
    """A point of the 9-real-dimensional fibre of the prolonged system."""

    hmat: np.ndarray
    hvec: np.ndarray
    hscal: float

    def __post_init__(self):
        hmat = np.asarray(self.hmat, dtype=complex).reshape(2, 2)
        hvec = np.asarray(self.hvec, dtype=complex).reshape(2)
        hscal = complex(self.hscal)
        scale = max(1.0, float(np.max(np.abs(hmat))), abs(hscal))
        if np.max(np.abs(hmat - hmat.conj().T)) > REALITY_TOL * scale:
            raise InvariantBreachError(f"h_(i jbar) is not hermitian: {hmat}")
        if abs(hscal.imag) > REALITY_TOL * scale:
            raise InvariantBreachError(f"h is not real: {hscal}")
        hmat = 0.5 * (hmat + hmat.conj().T)
        object.__setattr__(self, "hmat", hmat)
        object.__setattr__(self, "hvec", hvec)
        object.__setattr__(self, "hscal", float(hscal.real))

    @classmethod
    def zero(cls) -> "ProlongedState":
        return cls(np.zeros((2, 2)), np.zeros(2), 0.0)

    def to_real(self) -> np.ndarray:
        return to_real(self.hmat, self.hvec, self.hscal)

    @classmethod
    def from_real(cls, x) -> "ProlongedState":
        hmat, hvec, hscal = from_real(np.asarray(x, dtype=float))
        return cls(hmat, hvec, hscal)

    @property
    def det(self) -> float:
        h = self.hmat
        return float((h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]).real)


def to_real(hmat, hvec, hscal) -> np.ndarray:
    hmat = np.asarray(hmat)
    hvec = np.asarray(hvec)
    hscal = np.asarray(hscal)
    return np.stack(
        [
            hmat[..., 0, 0].real,
            hmat[..., 1, 1].real,
            hmat[..., 0, 1].real,
            hmat[..., 0, 1].imag,
            hvec[..., 0].real,
            hvec[..., 0].imag,
            hvec[..., 1].real,
            hvec[..., 1].imag,
            np.real(hscal),
        ],
        axis=-1,
    )


def from_real(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    hmat = np.empty(x.shape[:-1] + (2, 2), dtype=complex)
    hmat[..., 0, 0] = x[..., 0]
    hmat[..., 1, 1] = x[..., 1]
    hmat[..., 0, 1] = x[..., 2] + 1j * x[..., 3]
    hmat[..., 1, 0] = x[..., 2] - 1j * x[..., 3]
    hvec = np.stack([x[..., 4] + 1j * x[..., 5], x[..., 6] + 1j * x[..., 7]], axis=-1)
    return hmat, hvec, x[..., 8].astype(complex)


def rhs_components(pi, pi_low, weyl, k, v, hmat, hvec, hscal, k_coeff: float = K_TERM_COEFF):
    """Complex right-hand side of the prolonged system; all arguments broadcast.

    Shapes (trailing): pi (2,2,2), pi_low (2,2), weyl (2,2,2,2), k (2,2,2),
    v (2,), hmat (2,2), hvec (2,), hscal ().  Returns (dhmat, dhvec, dhscal).
    """
    th = np.einsum("...sik,...k->...si", pi, v)
    p0 = np.einsum("...jm,...m->...j", pi_low, v)
    ev = np.einsum("sj,...s->...j", EPS, v)
    # geometric factors contracted with v first; the state enters last
    wv = np.einsum("ij,...sklj,...l->...ski", EPS_INV, weyl, v, optimize=True)
    kv = EPS_INV @ np.einsum("...lsj,...s->...lj", k, v) @ EPS_INV.T
    dmat = (
        hmat @ np.conj(th)
        + np.swapaxes(th, -1, -2) @ hmat
        + hvec[..., :, None] * np.conj(ev)[..., None, :]
        + ev[..., :, None] * np.conj(hvec)[..., None, :]
    )
    dvec = (
        (hvec[..., None, :] @ th)[..., 0, :]
        + (hmat @ (EPS_INV @ np.conj(p0)[..., None]))[..., 0]
        - hscal[..., None] * ev  # eps_{kl} v^l = -ev_k
        - 0.5 * np.einsum("...si,...ski->...k", hmat, wv)
    )
    dscal = -2.0 * np.real(np.einsum("...l,...l->...", hvec, (EPS_INV @ p0[..., None])[..., 0])) + k_coeff * np.real(
        np.einsum("...ki,...ki->...", hmat, kv)
    )
    return dmat, dvec, dscal


_BASIS = from_real(np.eye(9))


def rhs_matrices(data: GaugeData, v: np.ndarray, k_coeff: float = K_TERM_COEFF) -> np.ndarray:
    """Real 9x9 matrices A with x' = A x, one per point of ``data``; shape (N, 9, 9)."""
    v = np.asarray(v, dtype=complex).reshape(-1, 2)
    bm, bv, bs = (b[:, None] for b in _BASIS)  # (9, 1, ...)
    dmat, dvec, dscal = rhs_components(
        data.pi[None], data.pi_low[None], data.weyl[None], data.k[None], v[None], bm, bv, bs, k_coeff
    )
    scale = max(1.0, float(np.max(np.abs(dmat))) if dmat.size else 1.0)
    drift = np.max(np.abs(dmat - np.conj(np.swapaxes(dmat, -1, -2)))) if dmat.size else 0.0
    if drift > REALITY_TOL * scale:
        raise InvariantBreachError(f"prolonged system lost hermiticity (drift {drift:.3e})")
    cols = to_real(dmat, dvec, dscal)  # (9, N, 9)
    return np.transpose(cols, (1, 2, 0))


def prolonged_rhs(pi: ProjectiveStructure, p, v) -> np.ndarray:
    """The real-linear map D of the system at ``p`` along velocity ``v`` as a 9x9 matrix.

    ``ProlongedState.from_real(D @ state.to_real())`` is d(state)/dt.
    """
    pts = as_points(p)
    data = pi.gauge_data(pts)
    if not data.finite().all():
        raise DomainError(ChartPoint(pts[0, 0], pts[0, 1]))
    return rhs_matrices(data, np.asarray(v, dtype=complex)[None])[0]


# ------------------------------------------------------------------- paths


@dataclass(frozen=True)
class _Segment:
    kind: str
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    exprs: tuple | None = None
    velocity_exprs: tuple | None = None

    def position(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "line":
            return self.a[None, :] + t[:, None] * (self.b - self.a)[None, :]
        vals = evaluator(self.exprs)(t.astype(complex), np.zeros_like(t, dtype=complex))
        return vals.T

    def velocity(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "line":
            return np.broadcast_to(self.b - self.a, (len(t), 2))
        vals = evaluator(self.velocity_exprs)(t.astype(complex), np.zeros_like(t, dtype=complex))
        return vals.T

    @property
    def length(self) -> float:
        if self.kind == "line":
            return float(np.linalg.norm(self.b - self.a))
        t = np.linspace(0.0, 1.0, 257)
        speed = np.linalg.norm(self.velocity(t), axis=1)
        return float(trapezoid(speed, t))


class ChartPath:
    """A path in the chart: a polyline or a parametric curve on t in [0, 1].

    Parametric curves are given by two expressions in ``z1``, read as the real
    parameter ``t`` (i.e. evaluated at ``z1 = t + 0i``).
    """

    def __init__(self, segments: Sequence[_Segment], start, end, points=None):
        self._segments = tuple(segments)
        self.start = np.asarray(start, dtype=complex)
        self.end = np.asarray(end, dtype=complex)
        self.points = points

    @classmethod
    def polyline(cls, points) -> "ChartPath":
        pts = as_points(points)
        for a, b in zip(pts[:-1], pts[1:]):
            if np.array_equal(a, b):
                raise ValueError("consecutive path points must be distinct")
        segs = [_Segment("line", a, b) for a, b in zip(pts[:-1], pts[1:])]
        return cls(segs, pts[0], pts[-1], pts)

    @classmethod
    def parametric(cls, x1, x2) -> "ChartPath":
        exprs = (as_expr(x1), as_expr(x2))
        vel = tuple(diff(e, 1) + diff(e, 1, barred=True) for e in exprs)
        seg = _Segment("curve", exprs=exprs, velocity_exprs=vel)
        ends = seg.position(np.array([0.0, 1.0]))
        if not np.isfinite(seg.velocity(np.linspace(0, 1, 33))).all():
            raise ValueError("parametric path has non-finite velocity")
        return cls([seg], ends[0], ends[1])

    @property
    def segments(self) -> tuple:
        return self._segments

    @property
    def length(self) -> float:
        return sum(s.length for s in self._segments)

    @property
    def is_closed(self) -> bool:
        return bool(np.allclose(self.start, self.end, rtol=0, atol=1e-12))

    def reversed(self) -> "ChartPath":
        if self.points is None:
            raise NotImplementedError("only polylines can be reversed")
        return ChartPath.polyline(self.points[::-1])

    def __add__(self, other: "ChartPath") -> "ChartPath":
        if self.points is None or other.points is None:
            raise NotImplementedError("only polylines can be concatenated")
        if not np.allclose(self.end, other.start, rtol=0, atol=1e-12):
            raise ValueError("paths do not connect")
        return ChartPath.polyline(np.concatenate([self.points, other.points[1:]]))


# ----------------------------------------------------------------- transport


def _chain(S: np.ndarray) -> np.ndarray:
    """Ordered product S[..., n-1, :, :] @ ... @ S[..., 0, :, :]."""
    while S.shape[-3] > 1:
        if S.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(S.shape[-1]), S.shape[:-3] + (1,) + S.shape[-2:])
            S = np.concatenate([S, eye], axis=-3)
        S = S[..., 1::2, :, :] @ S[..., 0::2, :, :]
    return S[..., 0, :, :]


def _rk4_propagators(pi: ProjectiveStructure, positions: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """Propagators for a batch of curves sampled at RK4 stage points.

    ``positions``/``velocities`` have shape (E, 2n+1, 2) on a uniform grid of the
    unit parameter interval; returns (E, 9, 9).
    """
    E, m, _ = positions.shape
    n = (m - 1) // 2
    data = pi.gauge_data(positions.reshape(-1, 2), liouville=False)
    ok = data.finite()
    if not ok.all():
        bad = data.points[np.flatnonzero(~ok)[0]]
        raise DomainError(ChartPoint(bad[0], bad[1]), "structure is singular on the path")
    A = rhs_matrices(data, velocities.reshape(-1, 2)).reshape(E, m, 9, 9)
    h = 1.0 / n
    eye = np.eye(9)
    A0, Am, A1 = A[:, 0:-1:2], A[:, 1::2], A[:, 2::2]
    k1 = A0
    k2 = Am @ (eye + 0.5 * h * k1)
    k3 = Am @ (eye + 0.5 * h * k2)
    k4 = A1 @ (eye + h * k3)
    S = eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _chain(S)


def _steps_for(length: float, steps: int) -> int:
    return max(1, int(math.ceil(steps * length - 1e-9)))


def segment_propagators(pi: ProjectiveStructure, starts, ends, steps: int = DEFAULT_STEPS, batch: int = 32) -> np.ndarray:
    """Propagators along the straight segments ``starts[e] -> ends[e]``; shape (E, 9, 9)."""
    a = as_points(starts)
    b = as_points(ends)
    if not len(a):
        return np.zeros((0, 9, 9))
    n = _steps_for(float(np.max(np.linalg.norm(b - a, axis=1))), steps)
    t = np.linspace(0.0, 1.0, 2 * n + 1)
    out = np.empty((len(a), 9, 9))
    for lo in range(0, len(a), batch):
        hi = min(lo + batch, len(a))
        pos = a[lo:hi, None, :] + t[None, :, None] * (b[lo:hi] - a[lo:hi])[:, None, :]
        vel = np.broadcast_to((b[lo:hi] - a[lo:hi])[:, None, :], pos.shape)
        out[lo:hi] = _rk4_propagators(pi, pos, vel)
    return out


def propagator(pi: ProjectiveStructure, path: ChartPath, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """9x9 real matrix transporting states from the start of ``path`` to its end.

    ``steps`` is the number of RK4 steps per unit of path length (Euclidean in C^2).
    """
    total = np.eye(9)
    for seg in path.segments:
        n = _steps_for(seg.length, steps)
        t = np.linspace(0.0, 1.0, 2 * n + 1)
        P = _rk4_propagators(pi, seg.position(t)[None], np.asarray(seg.velocity(t))[None])[0]
        total = P @ total
    return total


def transport(pi: ProjectiveStructure, state0: ProlongedState, path: ChartPath, steps: int = DEFAULT_STEPS) -> ProlongedState:
    """Parallel transport of ``state0`` along ``path`` under the prolonged connection."""
    x = propagator(pi, path, steps) @ state0.to_real()
    return ProlongedState.from_real(x)


def holonomy_defect(pi: ProjectiveStructure, loop: ChartPath, steps: int = DEFAULT_STEPS) -> float:
    """Operator 2-norm of (transport around ``loop``) minus the identity."""
    if not loop.is_closed:
        raise ValueError("holonomy needs a closed loop (first point equal to last)")
    return float(np.linalg.norm(propagator(pi, loop, steps) - np.eye(9), 2))

"""Generalised geodesics of a complex projective structure.

A curve is a generalised geodesic when its acceleration, corrected by
``Pi``, stays in the complex line of its velocity:
``zdot^i a^j - zdot^j a^i = 0`` with ``a^j = zddot^j + Pi^j_{kl} zdot^k zdot^l``.
We integrate the parametrisation in which ``a = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ChartPoint, DomainError, as_points, evaluator
from .structure import ProjectiveStructure

__all__ = ["GeodesicTrajectory", "GeodesicDomainError", "integrate_geodesic", "wedge_residual"]


@dataclass(frozen=True)
class GeodesicTrajectory:
    """Samples ``(t[n], z[n], zdot[n])`` of a chart curve; t strictly increasing."""

    t: np.ndarray
    z: np.ndarray
    zdot: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        z = np.asarray(self.z, dtype=complex).reshape(len(t), 2)
        zdot = np.asarray(self.zdot, dtype=complex).reshape(len(t), 2)
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not (np.isfinite(t).all() and np.isfinite(z).all() and np.isfinite(zdot).all()):
            raise ValueError("trajectory samples must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "zdot", zdot)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self) -> list[tuple[float, ChartPoint, tuple[complex, complex]]]:
        return [
            (float(t), ChartPoint(complex(z[0]), complex(z[1])), (complex(v[0]), complex(v[1])))
            for t, z, v in zip(self.t, self.z, self.zdot)
        ]


class GeodesicDomainError(DomainError):
    """Integration hit a point where Pi cannot be evaluated.

    ``trajectory`` holds the samples computed before the failure.
    """

    def __init__(self, point, trajectory: GeodesicTrajectory):
        super().__init__(point, "structure is singular along the geodesic")
        self.trajectory = trajectory


class _Singular(Exception):
    def __init__(self, at):
        self.at = at


def _acceleration(pi_eval, z: np.ndarray, v: np.ndarray) -> np.ndarray:
    P = pi_eval(z[:, 0], z[:, 1]).T.reshape(-1, 2, 2, 2)
    return -np.einsum("njkl,nk,nl->nj", P, v, v)


def integrate_geodesic(pi: ProjectiveStructure, z0, v0, T: float, steps: int = 1000) -> GeodesicTrajectory:
    """Classical RK4 for ``zddot^j = -Pi^j_{kl} zdot^k zdot^l`` on [0, T].

    Returns ``steps + 1`` equally spaced samples.  Raises
    :class:`GeodesicDomainError` (carrying the partial trajectory) if the
    structure is singular along the way.
    """
    z = as_points(z0)[0]
    v = np.asarray(v0, dtype=complex).reshape(2)
    if not np.any(v != 0):
        raise ValueError("initial velocity must be nonzero")
    if not np.isfinite(v).all():
        raise ValueError("initial velocity must be finite")
    if not (T > 0 and np.isfinite(T)):
        raise ValueError("T must be positive")
    if steps < 2:
        raise ValueError("need at least 2 steps")
    h = T / steps
    pe = evaluator(pi.flat())

    def f(y):
        acc = _acceleration(pe, y[None, :2], y[None, 2:])[0]
        if not np.isfinite(acc).all():
            raise _Singular(y[:2])
        return np.concatenate([y[2:], acc])

    ts = np.linspace(0.0, T, steps + 1)
    ys = np.empty((steps + 1, 4), dtype=complex)
    ys[0] = np.concatenate([z, v])
    for n in range(steps):
        y = ys[n]
        try:
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            nxt = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.isfinite(nxt).all():
                raise _Singular(nxt[:2])
        except (_Singular, DomainError) as exc:
            where = exc.at if isinstance(exc, _Singular) else exc.point
            partial = GeodesicTrajectory(ts[: n + 1], ys[: n + 1, :2], ys[: n + 1, 2:])
            raise GeodesicDomainError(ChartPoint(complex(where[0]), complex(where[1])), partial) from None
        ys[n + 1] = nxt
    return GeodesicTrajectory(ts, ys[:, :2], ys[:, 2:])


def _time_derivative(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d/dt of samples ``f[n, ...]``: fourth-order stencils on uniform grids,
    otherwise second-order ``np.gradient``."""
    n = len(t)
    dt = np.diff(t)
    if n < 5 or np.ptp(dt) > 1e-12 * dt.mean():
        return np.gradient(f, t, axis=0, edge_order=2)
    h = dt.mean()
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    edge = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    near = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    head, tail = f[:5], f[: -6 : -1]
    d[0], d[1] = np.tensordot(edge, head, axes=1), np.tensordot(near, head, axes=1)
    d[-1], d[-2] = -np.tensordot(edge, tail, axes=1), -np.tensordot(near, tail, axes=1)
    return d


def wedge_residual(pi: ProjectiveStructure, traj: GeodesicTrajectory) -> float:
    """max over samples of ``|zdot^1 a^2 - zdot^2 a^1|``.

    ``zddot`` comes from finite differences of the sampled ``zdot``, so the
    value checks the integrator rather than repeating it.
    """
    if len(traj) < 3:
        raise ValueError("wedge_residual needs at least 3 samples")
    zdd = _time_derivative(traj.zdot, traj.t)
    P = pi.values(traj.z)
    a = zdd + np.einsum("njkl,nk,nl->nj", P, traj.zdot, traj.zdot)
    w = traj.zdot[:, 0] * a[:, 1] - traj.zdot[:, 1] * a[:, 0]
    return float(np.max(np.abs(w)))

"""Curvature of a complex projective structure in the coordinate gauge.

The Cartan connection pulled back by the coordinate section has
``phi^i_0 = dz^i``, ``phi^i_j = Pi^i_{jk} dz^k`` and ``phi^0_i = Pi_{ik} dz^k``.
Expanding its curvature in the basis ``dz^1 ^ dz^2``, ``dz^l ^ d(conj z^j)`` gives

* Weyl:      W^i_{kl jbar} = -dPi^i_{kl}/d(conj z^j)
* K tensor:  K_{ik jbar}   = -dPi_{ik}/d(conj z^j)
* Liouville: L_i = dPi_{i2}/dz^1 - dPi_{i1}/dz^2 + Pi_{k1} Pi^k_{i2} - Pi_{k2} Pi^k_{i1}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import ChartPoint, DomainError, as_points
from .structure import ProjectiveStructure

__all__ = [
    "WeylAtPoint",
    "KAtPoint",
    "LiouvilleAtPoint",
    "Classification",
    "weyl",
    "k_tensor",
    "liouville",
    "classify",
    "VANISH_TOL",
]

VANISH_TOL = 1e-9


@dataclass(frozen=True)
class WeylAtPoint:
    """``W[i, k, l, j]`` = W^{i+1}_{(k+1)(l+1) bar(j+1)}."""

    W: np.ndarray

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.W - np.swapaxes(self.W, 1, 2))))

    def trace_residual(self) -> float:
        return float(np.max(np.abs(self.W[0, 0] + self.W[1, 1])))


@dataclass(frozen=True)
class KAtPoint:
    """``K[i, k, j]`` = K_{(i+1)(k+1) bar(j+1)}."""

    K: np.ndarray

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.K - np.swapaxes(self.K, 0, 1))))


@dataclass(frozen=True)
class LiouvilleAtPoint:
    L1: complex
    L2: complex

    def __iter__(self):
        return iter((self.L1, self.L2))


def _single(pi: ProjectiveStructure, p):
    pts = as_points(p)
    data = pi.gauge_data(pts)
    if not data.finite().all():
        raise DomainError(ChartPoint(pts[0, 0], pts[0, 1]))
    return data


def weyl(pi: ProjectiveStructure, p) -> WeylAtPoint:
    return WeylAtPoint(_single(pi, p).weyl[0])


def k_tensor(pi: ProjectiveStructure, p) -> KAtPoint:
    return KAtPoint(_single(pi, p).k[0])


def liouville(pi: ProjectiveStructure, p) -> LiouvilleAtPoint:
    L = _single(pi, p).liouville[0]
    return LiouvilleAtPoint(complex(L[0]), complex(L[1]))


@dataclass
class Classification:
    """Sup-norms of the curvature over a sample set and the resulting flags."""

    weyl_sup: float
    k_sup: float
    liouville_sup: float
    tol: float
    n_samples: int
    skipped: list = field(default_factory=list)

    @property
    def weyl_flat(self) -> bool:
        return self.weyl_sup < self.tol

    @property
    def liouville_flat(self) -> bool:
        return self.liouville_sup < self.tol

    @property
    def flat(self) -> bool:
        return self.weyl_flat and self.liouville_flat

    @property
    def label(self) -> str:
        if self.flat:
            return "flat"
        if self.weyl_flat:
            return "holomorphic"
        if self.liouville_flat:
            return "liouville-flat"
        return "generic"


def classify(pi: ProjectiveStructure, samples, tol: float = VANISH_TOL) -> Classification:
    """Decide Weyl-, Liouville- and full flatness from sup-norms over ``samples``.

    Samples where the structure cannot be evaluated are skipped and listed in
    ``Classification.skipped``.
    """
    pts = as_points(samples)
    if not len(pts):
        raise ValueError("classify needs at least one sample")
    data = pi.gauge_data(pts)
    ok = data.finite()
    skipped = [ChartPoint(complex(a), complex(b)) for a, b in pts[~ok]]
    if not ok.any():
        raise DomainError(skipped[0], "structure is singular at every sample")

    def sup(a):
        return float(np.max(np.abs(a[ok])))

    return Classification(
        weyl_sup=sup(data.weyl),
        k_sup=sup(data.k),
        liouville_sup=sup(data.liouville),
        tol=tol,
        n_samples=int(ok.sum()),
        skipped=skipped,
    )

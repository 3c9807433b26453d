"""Random structures, potentials and a sympy oracle shared by the tests.

Every random object is built twice: as text for the library parser and as a
sympy expression in the independent symbols ``z1, z2, w1, w2`` (``w = conj z``).
"""

from __future__ import annotations

import itertools

import numpy as np
import sympy as sp

from cproj.structure import HermitianMetricField, ProjectiveStructure, default_grid

Z1, Z2, W1, W2 = sp.symbols("z1 z2 w1 w2")
ZS = (Z1, Z2)
WS = (W1, W2)
_TEXT = {Z1: "z1", Z2: "z2", W1: "conj(z1)", W2: "conj(z2)"}

FS_TEXT = {
    "g11": "(1+z2*conj(z2))/(1+z1*conj(z1)+z2*conj(z2))^2",
    "g12": "-conj(z1)*z2/(1+z1*conj(z1)+z2*conj(z2))^2",
    "g22": "(1+z1*conj(z1))/(1+z1*conj(z1)+z2*conj(z2))^2",
}


def _monomials(degree: int, holomorphic: bool):
    gens = ZS if holomorphic else ZS + WS
    for powers in itertools.product(range(degree + 1), repeat=len(gens)):
        if sum(powers) <= degree:
            yield powers, gens


def random_polynomial(rng: np.random.Generator, degree: int = 2, holomorphic: bool = False, density: float = 0.6):
    """(text, sympy) of a polynomial with complex coefficients, parts uniform in [-1, 1]."""
    terms, sym = [], sp.Integer(0)
    for powers, gens in _monomials(degree, holomorphic):
        if rng.random() > density:
            continue
        c = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        factors = [f"{_TEXT[g]}^{p}" for g, p in zip(gens, powers) if p]
        terms.append("*".join([f"({c.real!r}+({c.imag!r})*i)"] + factors))
        mono = sp.Integer(1)
        for g, p in zip(gens, powers):
            mono *= g**p
        sym += (sp.Float(c.real, 17) + sp.I * sp.Float(c.imag, 17)) * mono
    return ("+".join(terms) if terms else "0"), sym


def random_structure(rng, degree: int = 2, holomorphic: bool = False):
    """A trace-free structure with random Pi^1_11, Pi^1_12, Pi^1_22, Pi^2_11.

    Returns the ProjectiveStructure and the sympy components ``S[i][j][k]``.
    """
    free = {key: random_polynomial(rng, degree, holomorphic) for key in ("111", "112", "122", "211")}
    text = {
        "Pi1_11": free["111"][0],
        "Pi1_12": free["112"][0],
        "Pi1_22": free["122"][0],
        "Pi2_11": free["211"][0],
        "Pi2_12": f"-({free['111'][0]})",
        "Pi2_22": f"-({free['112'][0]})",
    }
    S = [[[None] * 2 for _ in range(2)] for _ in range(2)]
    S[0][0][0] = free["111"][1]
    S[0][0][1] = S[0][1][0] = free["112"][1]
    S[0][1][1] = free["122"][1]
    S[1][0][0] = free["211"][1]
    S[1][0][1] = S[1][1][0] = -free["111"][1]
    S[1][1][1] = -free["112"][1]
    return ProjectiveStructure(text), S


def random_potential(rng, scale: float = 0.08, min_det: float = 0.3, radius: float = 0.9):
    """A real Kahler potential |z|^2 + small quartic terms, nondegenerate on the default grid.

    Returns (metric, potential text, sympy potential).
    """
    grid = default_grid(radius=radius)
    while True:
        text_terms, sym = ["z1*conj(z1)", "z2*conj(z2)"], Z1 * W1 + Z2 * W2
        for a, b in itertools.product(itertools.product(range(3), repeat=2), repeat=2):
            if sum(a) != 2 or sum(b) != 2 or a > b:
                continue
            c = complex(rng.uniform(-scale, scale), rng.uniform(-scale, scale))
            if a == b:
                c = complex(c.real, 0.0)
            mono = Z1 ** a[0] * Z2 ** a[1] * W1 ** b[0] * W2 ** b[1]
            cmono = W1 ** a[0] * W2 ** a[1] * Z1 ** b[0] * Z2 ** b[1]
            cs = sp.Float(c.real, 17) + sp.I * sp.Float(c.imag, 17)
            if a == b:
                sym += cs * mono
            else:
                sym += cs * mono + sp.conjugate(cs) * cmono
            t = "*".join(f"{_TEXT[g]}^{p}" for g, p in zip((Z1, Z2, W1, W2), a + b) if p)
            if a == b:
                text_terms.append(f"({c.real!r})*{t}")
            else:
                text_terms.append(f"(({c.real!r}+({c.imag!r})*i)*{t}+conj(({c.real!r}+({c.imag!r})*i)*{t}))")
        text = "+".join(text_terms)
        g = HermitianMetricField.from_potential(text)
        det = g.values(grid)
        det = (det[:, 0, 0] * det[:, 1, 1] - det[:, 0, 1] * det[:, 1, 0]).real
        if det.min() > min_det:
            return g, text, sym


def sym_at(expr, p):
    """Evaluate a sympy expression in (z, w) at the chart point p with w = conj z."""
    z1, z2 = p
    subs = {Z1: z1, Z2: z2, W1: np.conj(z1), W2: np.conj(z2)}
    return complex(sp.N(expr.subs(subs), 20))


COORDS = (Z1, Z2, W1, W2)


def _d(form):
    """Exterior derivative of a 1-form (coefficient list over dz1, dz2, dw1, dw2)
    as an antisymmetric 4x4 matrix T with form = sum_{a<b} T[a,b] dx^a ^ dx^b."""
    T = sp.zeros(4, 4)
    for a in range(4):
        for b in range(4):
            T[a, b] = sp.diff(form[b], COORDS[a]) - sp.diff(form[a], COORDS[b])
    return T


def _wedge(f, g):
    return sp.Matrix(4, 4, lambda a, b: f[a] * g[b] - f[b] * g[a])


def sym_curvature(S):
    """Oracle: lowered Pi, Weyl, K and Liouville from sympy components ``S[i][j][k]``.

    Builds the 3x3 matrix of 1-forms phi (index 0 plus 1, 2) with phi^0_0 = 0,
    phi^i_0 = dz^i, phi^i_j = Pi^i_{jk} dz^k, phi^0_i = Pi_{ik} dz^k, forms the
    curvature Theta = d phi + phi ^ phi as 2-forms and reads the tensors off
    their coefficients.  Also returns the parts that must vanish identically.
    """
    r = range(2)
    low = [
        [
            sum(S[k][i][l] * S[l][j][k] for k in r for l in r) - sum(sp.diff(S[k][i][j], ZS[k]) for k in r)
            for j in r
        ]
        for i in r
    ]

    def one(coeffs):
        return list(coeffs) + [0, 0]

    phi = [[None] * 3 for _ in range(3)]
    phi[0][0] = [0, 0, 0, 0]
    for i in r:
        phi[i + 1][0] = one([1 if k == i else 0 for k in r])
        phi[0][i + 1] = one([low[i][k] for k in r])
        for j in r:
            phi[i + 1][j + 1] = one([S[i][j][k] for k in r])
    theta = [[_d(phi[A][B]) + sum((_wedge(phi[A][C], phi[C][B]) for C in range(3)), sp.zeros(4, 4))
              for B in range(3)] for A in range(3)]
    # coefficient of dz^l ^ dw^j is T[l, 2 + j]; of dz^1 ^ dz^2 is T[0, 1]
    W = [[[[theta[i + 1][k + 1][l, 2 + j] for j in r] for l in r] for k in r] for i in r]
    K = [[[theta[0][i + 1][k, 2 + j] for j in r] for k in r] for i in r]
    L = [theta[0][i + 1][0, 1] for i in r]
    vanishing = [theta[A][0][a, b] for A in range(3) for a in range(4) for b in range(4)]
    vanishing += [theta[i + 1][j + 1][0, 1] for i in r for j in r]
    return low, W, K, L, vanishing


def sym_levi_civita(potential):
    """Oracle: Christoffel symbols Gamma[s][i][k] of the Kahler metric of a sympy potential."""
    g = sp.Matrix(2, 2, lambda i, j: sp.diff(potential, ZS[i], WS[j]))
    ginv = g.inv()
    # g_{s jbar} Gamma^s_{ik} = d_i g_{k jbar}  =>  Gamma^s_{ik} = sum_j d_i g_{k jbar} ginv[j, s]
    return [
        [[sum(sp.diff(g[k, j], ZS[i]) * ginv[j, s] for j in range(2)) for k in range(2)] for i in range(2)]
        for s in range(2)
    ], g


def random_points(rng, n: int, radius: float = 0.8) -> np.ndarray:
    re = rng.uniform(-radius, radius, size=(n, 4))
    return np.stack([re[:, 0] + 1j * re[:, 1], re[:, 2] + 1j * re[:, 3]], axis=1)


def random_hermitian3(rng, max_cond: float = 1e3, min_rank: int = 2):
    """Random 3x3 hermitian C of rank >= min_rank with condition number (on its range) < max_cond."""
    while True:
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        Q, _ = np.linalg.qr(A)
        rank = int(rng.integers(min_rank, 4))
        ev = rng.uniform(0.5, 2.0, size=3) * rng.choice([-1.0, 1.0], size=3)
        ev[rank:] = 0.0
        nz = np.abs(ev[:rank])
        if nz.max() / nz.min() < max_cond:
            C = Q @ np.diag(ev) @ Q.conj().T
            return 0.5 * (C + C.conj().T)

"""Reduced Kronecker-power monomial bases and truncated polynomial algebra.

The degree-d basis over n variables collects every monomial
x1^e1 * ... * xn^en with e1 + ... + en = d exactly once (duplicates of the
full Kronecker power are merged).  Monomials are ordered by decreasing
exponent tuple, i.e. graded lexicographic with x1 heaviest:

    n=2, d=2:  x1^2, x1*x2, x2^2
    n=2, d=3:  x1^3, x1^2*x2, x1*x2^2, x2^3

All higher-level objects (Taylor maps, polynomial ODE right-hand sides)
store one dense coefficient block per degree against these bases, so the
ordering here is a file-format contract as well.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "MultiIndex",
    "MonomialBasis",
    "basis_size",
    "enumerate_monomials",
    "kron_power",
    "kron_power_jacobian",
    "lift_linear",
    "compose_power_truncate",
    "map_powers",
]


@dataclass(frozen=True)
class MultiIndex:
    """Exponent tuple of a single monomial."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        if len(self.exponents) == 0:
            raise ValueError("empty exponent tuple")
        if any(e < 0 for e in self.exponents):
            raise ValueError(f"negative exponent in {self.exponents}")

    @property
    def degree(self) -> int:
        return int(sum(self.exponents))


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered, duplicate-free monomial basis of one exact degree."""

    dim: int
    degree: int
    indices: tuple[MultiIndex, ...]

    def __len__(self) -> int:
        return len(self.indices)

    def exponent_rows(self) -> np.ndarray:
        """Exponents as an integer matrix of shape (len(self), dim)."""
        return exponent_matrix(self.dim, self.degree)

    def position(self, exponents: tuple[int, ...]) -> int:
        """Index of a monomial inside this basis."""
        return _position_table(self.dim, self.degree)[tuple(exponents)]


def basis_size(n: int, d: int) -> int:
    """Number of degree-d monomials in n variables: C(n+d-1, d)."""
    if n < 1:
        raise ValueError(f"need at least one variable, got n={n}")
    if d < 0:
        raise ValueError(f"degree must be non-negative, got d={d}")
    return math.comb(n + d - 1, d)


@lru_cache(maxsize=None)
def exponent_matrix(n: int, d: int) -> np.ndarray:
    """Exponent rows of the degree-d basis, shape (basis_size(n, d), n).

    Rows follow the documented ordering.  Enumerating sorted variable-index
    tuples with itertools.combinations_with_replacement produces exactly the
    decreasing-exponent order, so that is used as the single source of truth.
    """
    basis_size(n, d)  # validate arguments
    rows = np.zeros((basis_size(n, d), n), dtype=np.int64)
    for r, combo in enumerate(itertools.combinations_with_replacement(range(n), d)):
        for i in combo:
            rows[r, i] += 1
    rows.flags.writeable = False
    return rows


@lru_cache(maxsize=None)
def _position_table(n: int, d: int) -> dict[tuple[int, ...], int]:
    rows = exponent_matrix(n, d)
    return {tuple(int(e) for e in row): r for r, row in enumerate(rows)}


def enumerate_monomials(n: int, d: int) -> MonomialBasis:
    """The degree-d monomial basis over n variables."""
    rows = exponent_matrix(n, d)
    indices = tuple(MultiIndex(tuple(int(e) for e in row)) for row in rows)
    return MonomialBasis(dim=n, degree=d, indices=indices)


def _as_state(X, n: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 1:
        raise ValueError(f"state must be a 1-d vector, got shape {X.shape}")
    if n is not None and X.shape[0] != n:
        raise ValueError(f"state has dimension {X.shape[0]}, expected {n}")
    return X


def kron_power(X, d: int) -> np.ndarray:
    """Reduced Kronecker power X^[d]: all degree-d monomials of X.

    X^[0] is the single entry 1; X^[1] is X itself.
    """
    X = _as_state(X)
    if d == 0:
        return np.ones(1)
    E = exponent_matrix(X.shape[0], d)
    return np.prod(X[None, :] ** E, axis=1)


@lru_cache(maxsize=None)
def _jacobian_tables(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Tables for d(X^[d])/dX: coefficient E[j,i] and the index of the
    degree-(d-1) monomial obtained by lowering exponent i of row j."""
    E = exponent_matrix(n, d)
    lower = _position_table(n, d - 1)
    idx = np.zeros_like(E)
    for j, row in enumerate(E):
        for i in range(n):
            if row[i] > 0:
                reduced = [int(e) for e in row]
                reduced[i] -= 1
                idx[j, i] = lower[tuple(reduced)]
    coef = E.astype(float)
    coef.flags.writeable = False
    idx.flags.writeable = False
    return coef, idx


def kron_power_jacobian(X, d: int, lower_power: np.ndarray | None = None) -> np.ndarray:
    """Jacobian of X^[d] with respect to X, shape (basis_size(n, d), n).

    lower_power may supply a precomputed X^[d-1] to avoid recomputation.
    """
    X = _as_state(X)
    if d < 1:
        raise ValueError(f"degree must be >= 1 for a jacobian, got d={d}")
    if d == 1:
        return np.eye(X.shape[0])
    coef, idx = _jacobian_tables(X.shape[0], d)
    if lower_power is None:
        lower_power = kron_power(X, d - 1)
    return coef * lower_power[idx]


@lru_cache(maxsize=None)
def _mult_table(n: int, a: int, b: int) -> np.ndarray:
    """Position in the degree-(a+b) basis of each product of a degree-a and a
    degree-b monomial, shape (basis_size(n,a), basis_size(n,b))."""
    Ea = exponent_matrix(n, a)
    Eb = exponent_matrix(n, b)
    target = _position_table(n, a + b)
    table = np.zeros((Ea.shape[0], Eb.shape[0]), dtype=np.int64)
    for i, ra in enumerate(Ea):
        for j, rb in enumerate(Eb):
            table[i, j] = target[tuple(int(e) for e in (ra + rb))]
    table.flags.writeable = False
    return table


def _poly_mul(u: list[np.ndarray], v: list[np.ndarray], n: int, k: int) -> list[np.ndarray]:
    """Product of two scalar polynomials in coefficient-per-degree form,
    discarding terms of total degree above k."""
    out = [np.zeros(basis_size(n, c)) for c in range(k + 1)]
    for a, ua in enumerate(u):
        if a > k or ua is None:
            continue
        for b, vb in enumerate(v):
            c = a + b
            if c > k or vb is None:
                continue
            table = _mult_table(n, a, b)
            out[c] += np.bincount(
                table.ravel(), weights=np.outer(ua, vb).ravel(), minlength=out[c].shape[0]
            )
    return out


def _component_polys(blocks: list[np.ndarray], k: int) -> tuple[list[list[np.ndarray]], int, int]:
    """Split coefficient blocks of a polynomial map into per-component scalar
    polynomials padded/truncated to degree k."""
    if len(blocks) < 2:
        raise ValueError("a polynomial map needs blocks for degrees 0 and 1")
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    m = blocks[0].shape[0]
    n = blocks[1].shape[1]
    for d, b in enumerate(blocks):
        if b.shape != (m, basis_size(n, d)):
            raise ValueError(
                f"degree-{d} block has shape {b.shape}, expected {(m, basis_size(n, d))}"
            )
    comps = []
    for i in range(m):
        poly = [blocks[d][i] if d < len(blocks) else None for d in range(k + 1)]
        poly = [p if p is not None else np.zeros(basis_size(n, d)) for d, p in enumerate(poly)]
        comps.append(poly)
    return comps, m, n


def map_powers(blocks, max_degree: int, k: int) -> dict[int, list[np.ndarray]]:
    """Coefficients of M(X)^[d] for d = 0..max_degree, truncated at degree k.

    blocks lists the coefficient matrices of the map M (degree 0 upward,
    m rows over n input variables).  The result maps each power d to a list
    of arrays A_0..A_k with A_j of shape (basis_size(m, d), basis_size(n, j))
    such that M(X)^[d] = sum_j A_j X^[j] up to the discarded degrees.

    Products share prefixes: the entries of M(X)^[d] are enumerated exactly in
    basis order of the m-component monomials, each extending a degree-(d-1)
    product by one component factor.
    """
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}")
    if k < 0:
        raise ValueError(f"truncation order must be >= 0, got {k}")
    comps, m, n = _component_polys(list(blocks), k)

    collected: dict[int, list[list[np.ndarray]]] = {d: [] for d in range(1, max_degree + 1)}

    def extend(start: int, depth: int, prefix: list[np.ndarray] | None):
        for i in range(start, m):
            poly = comps[i] if prefix is None else _poly_mul(prefix, comps[i], n, k)
            collected[depth + 1].append(poly)
            if depth + 1 < max_degree:
                extend(i, depth + 1, poly)

    if max_degree >= 1:
        extend(0, 0, None)

    result: dict[int, list[np.ndarray]] = {}
    one = [np.ones((1, 1))] + [np.zeros((1, basis_size(n, j))) for j in range(1, k + 1)]
    result[0] = one
    for d in range(1, max_degree + 1):
        rows = collected[d]
        result[d] = [np.vstack([poly[j] for poly in rows]) for j in range(k + 1)]
    return result


def compose_power_truncate(blocks, d: int, k: int) -> list[np.ndarray]:
    """Expansion of M(X)^[d] over input monomials of degree 0..k.

    Substitutes the polynomial map M given by coefficient blocks into the
    reduced Kronecker power of degree d and discards all terms of degree
    above k.  Returns one array per input degree, the degree-j array having
    shape (basis_size(m, d), basis_size(n, j)).
    """
    if d < 0:
        raise ValueError(f"power must be >= 0, got d={d}")
    return map_powers(blocks, d, k)[d]


def lift_linear(W, d: int) -> np.ndarray:
    """Matrix L with L @ X^[d] == (W @ X)^[d] for every X.

    W may be rectangular (m x n); L is basis_size(m, d) x basis_size(n, d).
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"W must be a matrix, got shape {W.shape}")
    if d == 0:
        return np.ones((1, 1))
    m, n = W.shape
    blocks = [np.zeros((m, 1)), W]
    return compose_power_truncate(blocks, d, d)[d]

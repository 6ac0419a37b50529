"""Polynomial (Taylor) maps of a fixed state dimension and truncation order.

A map of order k sends X to W_0 + W_1 X + W_2 X^[2] + ... + W_k X^[k], where
X^[d] is the reduced Kronecker power over the bases of ``tmnet.basis``.
This module provides evaluation, state and weight derivatives, truncated
composition, and the coefficient-space symplectic residual used as a
structure-preserving training penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import basis

__all__ = [
    "TaylorMap",
    "identity_map",
    "compose",
    "SymplecticStructure",
    "SymplecticResidual",
    "symplectic_residual",
    "symplectic_penalty",
    "symplectic_penalty_gradient",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TaylorMap:
    """Truncated polynomial map X -> W_0 + W_1 X + ... + W_k X^[k].

    weights[d] has shape (dim, basis_size(dim, d)); W_0 is a column.
    Instances are immutable; training code works on copies.
    """

    dim: int
    order: int
    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if len(self.weights) != self.order + 1:
            raise ValueError(
                f"expected {self.order + 1} weight blocks, got {len(self.weights)}"
            )
        ws = []
        for d, w in enumerate(self.weights):
            w = np.asarray(w, dtype=float)
            want = (self.dim, basis.basis_size(self.dim, d))
            if w.shape != want:
                raise ValueError(f"degree-{d} block has shape {w.shape}, expected {want}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"degree-{d} block contains non-finite entries")
            ws.append(_frozen(w))
        object.__setattr__(self, "weights", tuple(ws))

    def apply(self, X) -> np.ndarray:
        """Evaluate the map at a state vector."""
        X = np.asarray(X, dtype=float)
        out = self.weights[0][:, 0].copy()
        for d in range(1, self.order + 1):
            out += self.weights[d] @ basis.kron_power(X, d)
        return out

    __call__ = apply

    def jacobian(self, X, powers: list[np.ndarray] | None = None) -> np.ndarray:
        """d(apply)/dX at X, shape (dim, dim).

        powers may pass precomputed kron powers [X^[0], X^[1], ...] to reuse.
        """
        X = np.asarray(X, dtype=float)
        J = self.weights[1].copy()
        for d in range(2, self.order + 1):
            lower = powers[d - 1] if powers is not None else None
            J += self.weights[d] @ basis.kron_power_jacobian(X, d, lower_power=lower)
        return J

    def weight_gradients(self, X, upstream, powers: list[np.ndarray] | None = None):
        """Gradient blocks of <upstream, apply(X)> with respect to each W_d."""
        X = np.asarray(X, dtype=float)
        upstream = np.asarray(upstream, dtype=float)
        grads = []
        for d in range(self.order + 1):
            kp = powers[d] if powers is not None else basis.kron_power(X, d)
            grads.append(np.outer(upstream, kp))
        return grads

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "order": self.order,
            "basis_ordering": "graded_lex_x1_desc",
            "weights": [w.tolist() for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaylorMap":
        ordering = data.get("basis_ordering", "graded_lex_x1_desc")
        if ordering != "graded_lex_x1_desc":
            raise ValueError(f"unsupported basis ordering {ordering!r}")
        return cls(
            dim=int(data["dim"]),
            order=int(data["order"]),
            weights=tuple(np.asarray(w, dtype=float) for w in data["weights"]),
        )


def identity_map(n: int, k: int) -> TaylorMap:
    """The identity as an order-k map: W_1 = I, all other blocks zero."""
    weights = [np.zeros((n, basis.basis_size(n, d))) for d in range(k + 1)]
    weights[1] = np.eye(n)
    return TaylorMap(dim=n, order=k, weights=tuple(weights))


def compose(outer: TaylorMap, inner: TaylorMap, k: int | None = None) -> TaylorMap:
    """outer(inner(X)) truncated at order k (default: max of the two orders)."""
    if outer.dim != inner.dim:
        raise ValueError(f"dimension mismatch: {outer.dim} vs {inner.dim}")
    n = inner.dim
    if k is None:
        k = max(outer.order, inner.order)
    powers = basis.map_powers(inner.weights, outer.order, k)
    blocks = [np.zeros((n, basis.basis_size(n, j))) for j in range(k + 1)]
    blocks[0][:, 0] += outer.weights[0][:, 0]
    for d in range(1, outer.order + 1):
        for j in range(k + 1):
            blocks[j] += outer.weights[d] @ powers[d][j]
    return TaylorMap(dim=n, order=k, weights=tuple(blocks))


@dataclass(frozen=True)
class SymplecticStructure:
    """The canonical antisymmetric form on interleaved (q, p) states.

    States in this package order phase space pairwise, (q1, p1, q2, p2, ...),
    e.g. (phi, phi') or (x, x', y, y'), so J is block-diagonal with 2x2 blocks
    [[0, 1], [-1, 0]]. For a single pair this is exactly [[0, 1], [-1, 0]].
    """

    dim: int

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError(f"symplectic structure needs even dim >= 2, got {self.dim}")

    @property
    def J(self) -> np.ndarray:
        J = np.zeros((self.dim, self.dim))
        for q in range(0, self.dim, 2):
            J[q, q + 1] = 1.0
            J[q + 1, q] = -1.0
        return J


@dataclass(frozen=True)
class SymplecticResidual:
    """Coefficients of Jac(X)^T J Jac(X) - J on monomial bases.

    coefficients[d] has shape (basis_size(dim, d), dim, dim); degrees run from
    0 to 2(k-1).  Every coefficient matrix is antisymmetric, so each scalar
    constraint appears twice (both triangles); the penalty keeps that factor.
    """

    dim: int
    order: int
    coefficients: tuple[np.ndarray, ...]

    def penalty(self) -> float:
        return float(sum(np.sum(c * c) for c in self.coefficients))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(c)) for c in self.coefficients))


@lru_cache(maxsize=None)
def _gradient_structures(n: int, k: int):
    """Constant matrices G with Jac(X) = sum over (d, m) of W_d G_{d,m} x^m.

    Returns a tuple of entries (d, degree_of_m, position_of_m, G) with G of
    shape (basis_size(n, d), n): the monomial coefficient of the kron-power
    jacobian d(X^[d])/dX.
    """
    entries = []
    for d in range(1, k + 1):
        E = basis.exponent_matrix(n, d)
        if d == 1:
            entries.append((1, 0, 0, _frozen(np.eye(n))))
            continue
        coef, idx = basis._jacobian_tables(n, d)
        for m_pos in range(basis.basis_size(n, d - 1)):
            G = np.where((idx == m_pos) & (coef > 0), coef, 0.0)
            if np.any(G):
                entries.append((d, d - 1, m_pos, _frozen(G)))
    return tuple(entries)


@lru_cache(maxsize=None)
def _pair_targets(n: int, a: int, b: int) -> np.ndarray:
    return basis._mult_table(n, a, b)


def _residual_terms(tm: TaylorMap):
    """Shared assembly for residual, penalty and penalty gradient."""
    n, k = tm.dim, tm.order
    J = SymplecticStructure(n).J
    entries = _gradient_structures(n, k)
    slots = [(d, deg, pos, G, tm.weights[d] @ G) for (d, deg, pos, G) in entries]
    max_deg = 2 * (k - 1)
    coeffs = [
        np.zeros((basis.basis_size(n, deg), n, n)) for deg in range(max_deg + 1)
    ]
    for (da, dega, posa, Ga, A) in slots:
        for (db, degb, posb, Gb, B) in slots:
            target = int(_pair_targets(n, dega, degb)[posa, posb])
            coeffs[dega + degb][target] += A.T @ (J @ B)
    coeffs[0][0] -= J
    return J, slots, coeffs


def symplectic_residual(tm: TaylorMap) -> SymplecticResidual:
    """Polynomial-matrix residual Jac(X)^T J Jac(X) - J in coefficient space.

    The residual is identically zero iff the map is symplectic at every state;
    for n=2, k=2 the degree-0 coefficient's (1,2) entry is
    w1^{11} w1^{22} - w1^{12} w1^{21} - 1 and the six monomial coefficients
    {1, x1, x2, x1^2, x1 x2, x2^2} carry one scalar constraint each.
    """
    _, _, coeffs = _residual_terms(tm)
    return SymplecticResidual(
        dim=tm.dim, order=tm.order, coefficients=tuple(_frozen(c) for c in coeffs)
    )


def symplectic_penalty(tm: TaylorMap) -> float:
    """Sum of squared residual coefficients; 0 exactly iff symplectic.

    Both triangles of the antisymmetric residual are summed, so each
    independent constraint contributes twice.
    """
    _, _, coeffs = _residual_terms(tm)
    return float(sum(np.sum(c * c) for c in coeffs))


def symplectic_penalty_gradient(tm: TaylorMap) -> list[np.ndarray]:
    """d symplectic_penalty / dW_d for every block (W_0 gradient is zero)."""
    n = tm.dim
    J, slots, coeffs = _residual_terms(tm)
    S = [2.0 * c for c in coeffs]
    grads = [np.zeros_like(w) for w in tm.weights]
    for (da, dega, posa, Ga, A) in slots:
        for (db, degb, posb, Gb, B) in slots:
            target = int(_pair_targets(n, dega, degb)[posa, posb])
            Sm = S[dega + degb][target]
            grads[da] += J @ B @ Sm.T @ Ga.T
            grads[db] += J.T @ A @ Sm @ Gb.T
    return grads

"""Gauss-Radau quadrature on [0, 1] with the right endpoint fixed at 1.

An m-node rule integrates polynomials up to degree 2m-2 exactly against the
uniform weight.  Interior nodes are the (mapped) roots of the Jacobi
polynomial P_{m-1}^{(1,0)}; interior weights follow from the Gauss-Jacobi
weights, and the endpoint weight is 2/m^2 before mapping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["QuadratureRule", "gauss_radau"]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes in (0, 1] with the last node equal to 1; positive weights summing to 1."""

    nodes: tuple[float, ...]
    weights: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.nodes)

    def integrate_monomial(self, k: int) -> float:
        return float(sum(w * t ** k for t, w in zip(self.nodes, self.weights)))


def gauss_radau(m: int) -> QuadratureRule:
    """m-node Gauss-Radau rule on [0, 1] with fixed node t_m = 1."""
    if m < 2:
        raise ValueError(f"Gauss-Radau rule needs at least 2 nodes, got {m}")
    # Radau on [-1, 1] fixing +1: interior nodes are roots of P_{m-1}^{(1,0)},
    # with weights lam_i / (1 - x_i); the fixed endpoint carries 2/m^2.
    x, lam = roots_jacobi(m - 1, 1.0, 0.0)
    order = np.argsort(x)
    x, lam = x[order], lam[order]
    interior_w = lam / (1.0 - x)
    nodes = np.concatenate([(x + 1.0) / 2.0, [1.0]])
    weights = np.concatenate([interior_w / 2.0, [1.0 / m ** 2]])
    return QuadratureRule(tuple(float(t) for t in nodes),
                          tuple(float(w) for w in weights))

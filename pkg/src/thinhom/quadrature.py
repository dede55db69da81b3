"""Triangle quadrature rules in barycentric form and mesh-level helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    bary: np.ndarray     # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,) summing to 1 (multiply by the element area)

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _sym_rule(groups):
    pts, wts = [], []
    for a, b, w in groups:
        for perm in ((a, a, b), (a, b, a), (b, a, a)):
            pts.append(perm)
            wts.append(w)
    return TriangleRule(np.array(pts), np.array(wts))


# interior 3-point rule, exact for quadratics (and for the P1 mass matrix)
RULE3 = TriangleRule(np.array([[2 / 3, 1 / 6, 1 / 6],
                               [1 / 6, 2 / 3, 1 / 6],
                               [1 / 6, 1 / 6, 2 / 3]]), np.full(3, 1 / 3))

# 6-point rule, exact for degree 4
RULE6 = _sym_rule([(0.445948490915965, 0.108103018168070, 0.223381589678011),
                   (0.091576213509771, 0.816847572980459, 0.109951743655322)])


def rule_points(mesh, rule: TriangleRule = RULE3) -> np.ndarray:
    """Physical quadrature points, shape (M, nq, 2)."""
    return np.einsum("qi,eia->eqa", rule.bary, mesh.nodes[mesh.elements])


def rule_weights(mesh, rule: TriangleRule = RULE3) -> np.ndarray:
    """Physical quadrature weights, shape (M, nq)."""
    return mesh.signed_areas[:, None] * rule.weights[None, :]


def nodal_at_points(mesh, values, rule: TriangleRule = RULE3) -> np.ndarray:
    """P1 field with nodal ``values`` evaluated at the rule points, shape (M, nq)."""
    return np.asarray(values, dtype=float)[mesh.elements] @ rule.bary.T

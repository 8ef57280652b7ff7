"""Weak-coupling indicator of a designed platoon."""

from __future__ import annotations

import numpy as np

from .types import SynthesisResult

__all__ = ["weak_coupling_metric"]


def weak_coupling_metric(result: SynthesisResult,
                         norm: str = "2") -> tuple[np.ndarray, float]:
    """Column sums ``sum_i ||P_i K_ij||`` over every follower ``i``.

    ``norm`` is ``"2"`` (induced 2-norm) or ``"fro"``.
    """
    if norm not in ("2", "fro"):
        raise ValueError("norm must be '2' or 'fro'")
    ord_ = 2 if norm == "2" else "fro"
    K = result.gains.K
    N = K.shape[0]
    vals = np.zeros(N)
    for j in range(N):
        vals[j] = sum(np.linalg.norm(result.certs[i].P @ K[i, j], ord_)
                      for i in range(N))
    return vals, float(vals.max(initial=0.0))

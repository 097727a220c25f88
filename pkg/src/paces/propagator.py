"""Action of ``exp(-i H dt)`` on a vector by a running Taylor sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PropagatorDivergence(RuntimeError):
    """The Taylor series did not converge within ``max_order`` terms."""


@dataclass
class PropagatorConfig:
    """Timestep and termination controls of :func:`expmv`.

    ``substeps > 1`` splits ``dt`` into equal pieces, each expanded
    separately, which keeps the per-piece series short for large ``dt``.
    """

    dt: float = 0.05
    rtol: float = 1e-15
    max_order: int = 200
    substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.rtol < 1:
            raise ValueError(f"rtol must lie in (0, 1), got {self.rtol}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.max_order < 2:
            raise ValueError("max_order must be >= 2")


def _taylor(H, c, tau, rtol, max_order):
    result = np.array(c, dtype=np.complex128, copy=True)
    term = result.copy()
    small = 0
    for n in range(1, max_order + 1):
        term = H @ term
        term *= -1j * tau / n
        result += term
        tn = np.linalg.norm(term)
        if not np.isfinite(tn):
            break
        # two consecutive small terms: odd/even cancellation can fake one
        if tn <= rtol * np.linalg.norm(result):
            small += 1
            if small == 2:
                return result, n, float(tn)
        else:
            small = 0
    raise PropagatorDivergence(
        f"Taylor series not converged after {max_order} terms "
        f"(last term norm {tn:.3e}); reduce the timestep"
    )


def expmv(H, c, cfg: PropagatorConfig):
    """Return ``(exp(-i H dt) c, order_used, last_term_norm)``.

    Only one work vector besides input and result is kept.  ``order_used``
    is the largest order reached over the substeps.
    """
    c = np.asarray(c)
    if H.shape[1] != c.shape[0]:
        raise ValueError(f"matrix of shape {H.shape} cannot act on vector of length {c.shape[0]}")
    if not np.all(np.isfinite(c)):
        raise ValueError("input vector is not finite")
    tau = cfg.dt / cfg.substeps
    order, last = 0, 0.0
    for _ in range(cfg.substeps):
        c, n, last = _taylor(H, c, tau, cfg.rtol, cfg.max_order)
        order = max(order, n)
    return c, order, last

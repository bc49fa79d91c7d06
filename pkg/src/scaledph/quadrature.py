"""Quadrature rules on the log scale of a positive mixing variable.

Mixtures over a scaling variable are integrated with the trapezoid rule in
``s = log(theta)``. For integrands analytic in a strip around the real axis
the rule converges geometrically, so a modest node count suffices. Nodes
are denser around the bulk of the mixing law and coarser in its tails.
"""

import numpy as np
from scipy.optimize import brentq


def mapped_log_grid(s_lo, s_hi, center, core_halfwidth, far_step, core_step):
    """Trapezoid nodes and weights on ``[s_lo, s_hi]``.

    The map ``s(v) = center + A v - (A - B) c tanh(v / c)`` has slope ``B``
    near ``v = 0`` and ``A`` far from it; unit steps in ``v`` therefore
    give spacing ``core_step`` within roughly ``core_halfwidth`` of
    ``center`` and ``far_step`` outside.

    Returns ``(s, ds)`` with ``sum(g(s) * ds)`` approximating the integral.
    """
    if not s_hi > s_lo:
        raise ValueError("empty integration window")
    A = float(far_step)
    B = min(float(core_step), A)
    center = min(max(center, s_lo), s_hi)
    c = max(core_halfwidth / B, 1e-12)

    def smap(v):
        return center + A * v - (A - B) * c * np.tanh(v / c)

    def dmap(v):
        return A - (A - B) / np.cosh(v / c) ** 2

    # s(v) - center is bounded below by B*v for v > 0, so the root is bracketed.
    v_lo = -brentq(lambda v: smap(-v) - s_lo, 0.0, (center - s_lo) / B + 1.0) \
        if s_lo < center else 0.0
    v_hi = brentq(lambda v: smap(v) - s_hi, 0.0, (s_hi - center) / B + 1.0) \
        if s_hi > center else 0.0
    n = max(int(np.ceil(v_hi - v_lo)), 2)
    v = np.linspace(v_lo, v_hi, n + 1)
    dv = (v_hi - v_lo) / n
    s = smap(v)
    ds = dmap(v) * dv
    ds[0] *= 0.5
    ds[-1] *= 0.5
    return s, ds

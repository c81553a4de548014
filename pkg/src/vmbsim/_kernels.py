"""Compiled inner loops for the collision integrals.

Velocities are handled in index units: lattice node ``i`` has coordinate
``-V_max + i * dv`` and a relative velocity ``z = xi - xi_*`` is an integer
triple ``n``.  For a fixed ``(n, omega)`` the post-collision offsets

    xi'   = xi - d1,        d1 = (n . omega) omega
    xi'_* = xi - d2,        d2 = n - d1

are the same for every output node, so the trilinear weights are constant
and the set of output nodes whose pre- and post-collision partners all lie in
the lattice hull is a box.  Terms outside that box contribute zero and are
counted as truncated.

Two exact symmetries halve the work twice:

* ``omega -> -omega`` leaves ``d1`` and ``d2`` unchanged, so an antipodally
  symmetric quadrature is reduced to one hemisphere with doubled weights;
* swapping ``xi`` and ``xi_*`` maps ``(xi', xi'_*)`` to ``(xi'_*, xi')``, so
  the term computed for ``(xi, xi - n)`` is also the term for
  ``(xi - n, xi)`` and only half of the ``n`` lattice is visited.

The distribution is passed zero-padded by one layer on each side (shape
``(N + 2)^3``) so interpolation stencils touching the hull edge read zeros.
"""

import math

import numpy as np
from numba import njit

HULL_TOL = 1e-9

MODEL_HARD_SPHERE = 0
MODEL_VHS = 1
MODEL_CONSTANT = 2


@njit(cache=True)
def kernel_value(model, alpha, b0, n0, n1, n2, s, dv):
    """``b(z, omega)`` for ``z = n dv`` and ``s = (n . omega)`` in index units."""
    if model == MODEL_HARD_SPHERE:
        return abs(s) * dv
    if model == MODEL_VHS:
        r2 = n0 * n0 + n1 * n1 + n2 * n2
        if r2 == 0.0:
            return 0.0
        return (math.sqrt(r2) * dv) ** (alpha - 1.0) * abs(s) * dv
    return b0


@njit(cache=True)
def _axis_bounds(c, lo, hi, n_max):
    # i + c must lie in [0, n_max], widened by the snap tolerance
    a = math.ceil(-c - HULL_TOL)
    b = math.floor(n_max - c + HULL_TOL)
    if a > lo:
        lo = a
    if b < hi:
        hi = b
    return lo, hi


@njit(cache=True)
def _split(c):
    fl = math.floor(c)
    return int(fl), c - fl


@njit(cache=True)
def _gather(fp, i0, i1, i2, t0, t1, t2):
    # trilinear interpolation with base index (i0, i1, i2) in padded coordinates
    u0 = 1.0 - t0
    u1 = 1.0 - t1
    u2 = 1.0 - t2
    a = u2 * fp[i0, i1, i2] + t2 * fp[i0, i1, i2 + 1]
    b = u2 * fp[i0, i1 + 1, i2] + t2 * fp[i0, i1 + 1, i2 + 1]
    c = u2 * fp[i0 + 1, i1, i2] + t2 * fp[i0 + 1, i1, i2 + 1]
    d = u2 * fp[i0 + 1, i1 + 1, i2] + t2 * fp[i0 + 1, i1 + 1, i2 + 1]
    return u0 * (u1 * a + t1 * b) + t0 * (u1 * c + t1 * d)


@njit(cache=True)
def gain_and_dissipation(fp, nodes, weights, model, alpha, b0, invg, dv, want_d):
    """Gain term and (optionally) entropy dissipation of one velocity slice.

    ``weights`` already include the hemisphere doubling when applicable.
    Returns ``(gain, d, truncated, skipped)`` where ``truncated`` counts
    ``(xi, xi_*, omega)`` terms with a post-collision velocity outside the
    hull and ``skipped`` counts entropy terms with exactly one vanishing
    product.  Both counts run over the node set passed in, so the caller
    doubles them after a hemisphere reduction.
    """
    n = fp.shape[0] - 2
    nk = nodes.shape[0]
    gain = np.zeros((n, n, n))
    dsum = 0.0
    truncated = 0.0
    skipped = 0.0
    vol = dv * dv * dv
    nm = n - 1
    for n0 in range(-nm, n):
        for n1 in range(-nm, n):
            for n2 in range(-nm, n):
                # visit z = 0 and the lexicographically positive half
                if n0 < 0 or (n0 == 0 and (n1 < 0 or (n1 == 0 and n2 < 0))):
                    continue
                zero = n0 == 0 and n1 == 0 and n2 == 0
                mult = 1.0 if zero else 2.0
                # output nodes with xi_* = xi - n on the lattice
                lo0 = max(0, n0)
                hi0 = min(nm, nm + n0)
                lo1 = max(0, n1)
                hi1 = min(nm, nm + n1)
                lo2 = max(0, n2)
                hi2 = min(nm, nm + n2)
                pairs = (hi0 - lo0 + 1) * (hi1 - lo1 + 1) * (hi2 - lo2 + 1)
                for k in range(nk):
                    w0 = nodes[k, 0]
                    w1 = nodes[k, 1]
                    w2 = nodes[k, 2]
                    s = n0 * w0 + n1 * w1 + n2 * w2
                    bw = weights[k] * kernel_value(model, alpha, b0, n0, n1, n2, s, dv) * vol
                    if bw == 0.0:
                        continue
                    c10 = -s * w0
                    c11 = -s * w1
                    c12 = -s * w2
                    c20 = -(n0 + c10)
                    c21 = -(n1 + c11)
                    c22 = -(n2 + c12)
                    a0, e0 = _axis_bounds(c10, lo0, hi0, nm)
                    a0, e0 = _axis_bounds(c20, a0, e0, nm)
                    a1, e1 = _axis_bounds(c11, lo1, hi1, nm)
                    a1, e1 = _axis_bounds(c21, a1, e1, nm)
                    a2, e2 = _axis_bounds(c12, lo2, hi2, nm)
                    a2, e2 = _axis_bounds(c22, a2, e2, nm)
                    inside = 0
                    if a0 <= e0 and a1 <= e1 and a2 <= e2:
                        inside = (e0 - a0 + 1) * (e1 - a1 + 1) * (e2 - a2 + 1)
                    truncated += mult * (pairs - inside)
                    if inside == 0:
                        continue
                    f10, t10 = _split(c10)
                    f11, t11 = _split(c11)
                    f12, t12 = _split(c12)
                    f20, t20 = _split(c20)
                    f21, t21 = _split(c21)
                    f22, t22 = _split(c22)
                    for i0 in range(a0, e0 + 1):
                        j0 = i0 - n0
                        for i1 in range(a1, e1 + 1):
                            j1 = i1 - n1
                            for i2 in range(a2, e2 + 1):
                                j2 = i2 - n2
                                g1 = _gather(fp, i0 + f10 + 1, i1 + f11 + 1, i2 + f12 + 1,
                                             t10, t11, t12)
                                g2 = _gather(fp, i0 + f20 + 1, i1 + f21 + 1, i2 + f22 + 1,
                                             t20, t21, t22)
                                wrel = bw * invg[i0, i1, i2] * invg[j0, j1, j2]
                                prod = g1 * g2
                                term = wrel * prod
                                gain[i0, i1, i2] += term
                                if not zero:
                                    gain[j0, j1, j2] += term
                                if want_d:
                                    pre = fp[i0 + 1, i1 + 1, i2 + 1] * fp[j0 + 1, j1 + 1, j2 + 1]
                                    if prod > 0.0 and pre > 0.0:
                                        dsum += mult * wrel * (prod - pre) * math.log(prod / pre)
                                    elif prod > 0.0 or pre > 0.0:
                                        skipped += mult
    return gain, 0.25 * dsum * vol, truncated, skipped


@njit(cache=True)
def loss_factor(f, a_table, invg, dv):
    """``L(f)(xi) = sum_{xi_*} A(xi - xi_*) f(xi_*) dv^3`` by direct summation.

    ``a_table`` holds ``A`` on the difference lattice, index ``n + N - 1``.
    ``invg`` carries the relativistic weights (ones in classical mode).
    """
    n = f.shape[0]
    out = np.zeros((n, n, n))
    g = f * invg
    vol = dv * dv * dv
    off = n - 1
    for i0 in range(n):
        for i1 in range(n):
            for i2 in range(n):
                acc = 0.0
                for j0 in range(n):
                    for j1 in range(n):
                        for j2 in range(n):
                            gj = g[j0, j1, j2]
                            if gj != 0.0:
                                acc += a_table[i0 - j0 + off, i1 - j1 + off, i2 - j2 + off] * gj
                out[i0, i1, i2] = acc * vol * invg[i0, i1, i2]
    return out


@njit(cache=True)
def trilinear_points(fp, p0, p1, p2, ghost=False):
    """Interpolate a padded slice at fractional index positions.

    Points off the lattice hull give zero.  With ``ghost`` the slice is
    extended by the zero padding instead, so points up to one cell outside
    the hull interpolate towards zero continuously.
    """
    n = fp.shape[0] - 2
    nm = n - 1
    lo = -HULL_TOL
    hi = nm + HULL_TOL
    if ghost:
        lo = -1.0
        hi = float(n)
    m = p0.shape[0]
    out = np.zeros(m)
    for q in range(m):
        a = p0[q]
        b = p1[q]
        c = p2[q]
        if ghost:
            if not (lo < a < hi and lo < b < hi and lo < c < hi):
                continue
        elif a < lo or a > hi or b < lo or b > hi or c < lo or c > hi:
            continue
        fa, ta = _split(a)
        fb, tb = _split(b)
        fc, tc = _split(c)
        out[q] = _gather(fp, fa + 1, fb + 1, fc + 1, ta, tb, tc)
    return out

"""Inverse-branch continuation inside the open 0-tiles.

Each open 0-tile is mapped onto the unit disc by a Mobius map sending its base
point to 0. An inverse branch is continued along a straight segment in disc
coordinates; the step size obeys a Koebe-type rule ``|du| <= k (1 - |u|)`` and
every step is corrected by Newton iteration on ``f^n(x) = target``.
"""

from __future__ import annotations

import numpy as np

from .sphere import RationalMap, chordal_dist, recip

BLACK, WHITE = 0, 1


class BranchAmbiguity(Exception):
    """Inverse branches could not be separated or tracked reliably."""


def mobius(mat, z):
    """Apply a 2x2 Mobius matrix to sphere points (``INF`` allowed)."""
    num, den = mobius_homog(mat, z)
    small = np.abs(num) <= np.abs(den)
    with np.errstate(all="ignore"):
        out = np.where(small, num / np.where(small, den, 1), recip(np.where(small, 1, den / np.where(small, 1, num))))
    return out if out.ndim else complex(out)


def mobius_homog(mat, z):
    """Homogeneous image ``(num, den)`` of ``z`` under ``mat`` without overflow."""
    z = np.asarray(z, dtype=complex)
    big = ~(np.abs(z) <= 1)
    v = np.where(big, recip(np.where(big, z, 1.0)), 0)
    z1 = np.where(big, 1.0, z)
    z2 = np.where(big, v, 1.0)
    (a, b), (c, d) = mat
    return a * z1 + b * z2, c * z1 + d * z2


def to_chart(z):
    z = np.asarray(z, dtype=complex)
    src = ~(np.abs(z) <= 1)
    xi = np.where(src, recip(np.where(src, z, 1.0)), z)
    return xi, src


def from_chart(xi, chart):
    xi = np.asarray(xi, dtype=complex)
    chart = np.asarray(chart, dtype=bool)
    return np.where(chart, recip(np.where(chart, xi, 1.0)), xi)


def chain_eval(f: RationalMap, xi, src, n: int = 1):
    """Chart value, chart and derivative of ``f^n`` starting from ``(xi, src)``."""
    der = np.ones(np.shape(xi), dtype=complex)
    val, chart = xi, src
    for _ in range(n):
        val, chart, d = f.chart_step(val, chart)
        der = der * d
    return val, chart, der


class DiscFrame:
    """Disc coordinates for the two open 0-tiles.

    ``m`` sends the curve to the extended real line with the black 0-tile on
    the upper half-plane.
    """

    def __init__(self, m):
        self.m = np.asarray(m, dtype=complex)
        kb = np.array([[1, -1j], [1, 1j]])
        kw = np.array([[1, 1j], [1, -1j]])
        self.h = np.stack([kb @ self.m, kw @ self.m])
        self.g = np.stack([np.linalg.inv(h) for h in self.h])
        self.base = tuple(complex(mobius(self.g[c], 0.0)) for c in (BLACK, WHITE))

    def to_disc(self, z, color):
        z = np.asarray(z, dtype=complex)
        color = np.broadcast_to(np.asarray(color), z.shape)
        out = np.empty(z.shape, dtype=complex)
        for c in (BLACK, WHITE):
            sel = color == c
            if np.any(sel):
                out[sel] = mobius(self.h[c], z[sel])
        return out if out.ndim else complex(out)

    def target(self, u, color):
        """Homogeneous coordinates of the sphere point with disc coordinate ``u``."""
        u = np.asarray(u, dtype=complex)
        g = self.g[np.asarray(color)]
        return g[..., 0, 0] * u + g[..., 0, 1], g[..., 1, 0] * u + g[..., 1, 1]

    def from_disc(self, u, color):
        z1, z2 = self.target(u, color)
        small = np.abs(z1) <= np.abs(z2)
        with np.errstate(all="ignore"):
            out = np.where(small, z1 / np.where(small, z2, 1), recip(np.where(small, 1, z2 / np.where(small, 1, z1))))
        return out


def newton_to_target(f, x, z1, z2, n=1, tol=1e-12, iters=6):
    """Newton iteration for ``f^n(x) = [z1 : z2]``; returns (x, converged)."""
    x = np.asarray(x, dtype=complex).copy()
    conv = np.zeros(x.shape, dtype=bool)
    for _ in range(iters):
        xi, src = to_chart(x)
        val, dst, der = chain_eval(f, xi, src, n)
        with np.errstate(all="ignore"):
            w = np.where(dst, z2 / z1, z1 / z2)
            step = (val - w) / der
        bad = ~np.isfinite(step)
        step = np.where(bad, 0, step)
        x = from_chart(xi - step, src)
        conv = (np.abs(step) <= tol * (1 + np.abs(xi))) & ~bad
        if np.all(conv):
            break
    return x, conv & np.isfinite(x.real)


def residual(f, x, z1, z2, n=1):
    """Chordal distance between ``f^n(x)`` and the homogeneous target."""
    xi, src = to_chart(x)
    val, dst, _ = chain_eval(f, xi, src, n)
    img = from_chart(val, dst)
    small = np.abs(z1) <= np.abs(z2)
    with np.errstate(all="ignore"):
        tgt = np.where(small, z1 / np.where(small, z2, 1), recip(np.where(small, 1, z2 / np.where(small, 1, z1))))
    return chordal_dist(img, tgt)


def track(f, frame: DiscFrame, x0, u0, u1, color, *, n=1, koebe=0.25, tol=1e-11, min_step=1e-10):
    """Continue ``x0`` (with ``f^n(x0)`` at disc point ``u0``) to disc point ``u1``.

    Returns ``(x, ok)``; ``ok`` is False where the step size collapsed.
    """
    x = np.array(x0, dtype=complex, copy=True).ravel()
    u0 = np.broadcast_to(np.asarray(u0, dtype=complex), x.shape).ravel()
    u1 = np.broadcast_to(np.asarray(u1, dtype=complex), x.shape).ravel()
    color = np.broadcast_to(np.asarray(color), x.shape).ravel()
    span = np.abs(u1 - u0)
    t = np.where(span == 0, 1.0, 0.0)
    scale = np.ones(x.shape)
    ok = np.ones(x.shape, dtype=bool)
    while True:
        idx = np.nonzero((t < 1) & ok)[0]
        if len(idx) == 0:
            break
        ti = t[idx]
        du = u1[idx] - u0[idx]
        ua = u0[idx] + ti * du
        with np.errstate(over="ignore"):
            # subnormal spans overflow to inf and are clamped below
            h = koebe * scale[idx] * (1 - np.abs(ua)) / span[idx]
        h = np.minimum(h, 1 - ti)
        tn = np.where(h >= 1 - ti, 1.0, ti + h)
        z1, z2 = frame.target(u0[idx] + tn * du, color[idx])
        xn, conv = newton_to_target(f, x[idx], z1, z2, n=n, tol=tol)
        acc = idx[conv]
        x[acc] = xn[conv]
        t[acc] = tn[conv]
        scale[acc] = np.minimum(1.0, scale[acc] * 2)
        rej = idx[~conv]
        scale[rej] *= 0.5
        ok[rej[scale[rej] * koebe < min_step]] = False
    # final polish at the endpoint
    z1, z2 = frame.target(u1, color)
    xp, conv = newton_to_target(f, x, z1, z2, n=n, tol=1e-15, iters=4)
    x = np.where(ok, xp, x)
    return x, ok

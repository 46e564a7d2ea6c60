"""Riemann-sphere arithmetic.

Points of the sphere are plain Python/numpy complex numbers; the point at
infinity is ``INF = complex(inf, 0)``. Rational maps are evaluated in two
charts (``z`` when ``|z| <= 1``, ``v = 1/z`` otherwise) so that values near
infinity keep full relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

INF = complex(math.inf, 0.0)

TAU_ROOT = 1e-10
TAU_CLUSTER = 1e-7
TAU_GCD = 1e-9
TAU_ORBIT = 1e-8


class SphereError(Exception):
    pass


class RootFindingError(SphereError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class MalformedMapError(SphereError):
    pass


class NotPostcriticallyFinite(SphereError):
    pass


class UnsupportedMapError(SphereError):
    """Raised for maps outside the supported class (periodic critical points)."""


def is_inf(z):
    z = np.asarray(z)
    return np.isinf(z.real) | np.isinf(z.imag)


def recip(z):
    """Return ``1/z`` on the sphere (``1/0 = INF``, ``1/INF = 0``)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    zero = z == 0
    inf = is_inf(z)
    ok = ~(zero | inf)
    with np.errstate(all="ignore"):
        out[ok] = 1.0 / z[ok]
    out[zero] = INF
    out[inf] = 0.0
    return out if out.ndim else complex(out)


def sphere_coords(z):
    """Unit-sphere embedding matching the chordal metric ``2|z-w|/...``."""
    z = np.asarray(z, dtype=complex)
    inf = is_inf(z)
    big = (np.abs(z) > 1) & ~inf
    zz = np.where(inf | big, 0, z)
    r2 = np.abs(zz) ** 2
    x = np.stack([2 * zz.real / (1 + r2), 2 * zz.imag / (1 + r2), (r2 - 1) / (1 + r2)], axis=-1)
    if np.any(big | inf):
        v = recip(np.where(big, z, 1.0))
        v = np.where(inf, 0, v)
        s2 = np.abs(v) ** 2
        # z = 1/v:  2z/(1+|z|^2) = 2 conj(v)/(1+|v|^2)
        xb = np.stack([2 * v.real / (1 + s2), -2 * v.imag / (1 + s2), (1 - s2) / (1 + s2)], axis=-1)
        x = np.where((big | inf)[..., None], xb, x)
    return x


def from_sphere_coords(x):
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    with np.errstate(all="ignore"):
        north = x3 > 0
        z = np.where(north, 0, (x1 + 1j * x2) / (1 - x3))
        # near the north pole go through 1/z = (x1 - i x2)/(1 + x3)
        v = (x1 - 1j * x2) / (1 + x3)
        z = np.where(north, recip(np.where(north, v, 1.0)), z)
    return z


def chordal_dist(z, w):
    """Chordal distance on the Riemann sphere; values lie in [0, 2]."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zi, wi = is_inf(z), is_inf(w)
    zb = (np.abs(z) > 1) | zi
    wb = (np.abs(w) > 1) | wi
    with np.errstate(all="ignore"):
        zs = np.where(zb, recip(np.where(zb, z, 1.0)), z)
        ws = np.where(wb, recip(np.where(wb, w, 1.0)), w)
        # both small / both big: 2|a - b| / sqrt((1+|a|^2)(1+|b|^2)) is chart invariant
        same = 2 * np.abs(zs - ws)
        # one inverted: |z - w| = |1 - z v| / |v| with v = 1/w
        mixed_zw = 2 * np.abs(1 - zs * ws)
        num = np.where(zb == wb, same, mixed_zw)
        d = num / np.sqrt((1 + np.abs(zs) ** 2) * (1 + np.abs(ws) ** 2))
    d = np.minimum(d, 2.0)
    return d if d.ndim else float(d)


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------


def horner(c, z):
    z = np.asarray(z, dtype=complex)
    r = np.full(z.shape, c[-1], dtype=complex)
    for a in c[-2::-1]:
        r = r * z + a
    return r


def horner_d(c, z):
    """Value and first derivative of the polynomial with coefficients ``c``."""
    z = np.asarray(z, dtype=complex)
    r = np.full(z.shape, c[-1], dtype=complex)
    d = np.zeros(z.shape, dtype=complex)
    for a in c[-2::-1]:
        d = d * z + r
        r = r * z + a
    return r, d


def _trim(c, tol=0.0):
    c = np.asarray(c, dtype=complex)
    n = len(c)
    while n > 1 and abs(c[n - 1]) <= tol:
        n -= 1
    return c[:n].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Complex polynomial, coefficients from lowest to highest degree."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @property
    def degree(self) -> int:
        if len(self.coeffs) == 1 and self.coeffs[0] == 0:
            return -1
        return len(self.coeffs) - 1

    def __call__(self, z):
        return horner(self.coeffs, z)

    def deriv(self) -> "Polynomial":
        if len(self.coeffs) == 1:
            return Polynomial(np.zeros(1))
        return Polynomial(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def padded(self, n: int) -> np.ndarray:
        out = np.zeros(n + 1, dtype=complex)
        out[: len(self.coeffs)] = self.coeffs
        return out

    def __mul__(self, other):
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    def __add__(self, other):
        n = max(len(self.coeffs), len(other.coeffs))
        return Polynomial(self.padded(n - 1) + other.padded(n - 1))

    def __sub__(self, other):
        n = max(len(self.coeffs), len(other.coeffs))
        return Polynomial(self.padded(n - 1) - other.padded(n - 1))

    def scale(self, a) -> "Polynomial":
        return Polynomial(self.coeffs * a)

    def roots(self, **kw) -> np.ndarray:
        return poly_roots(self.coeffs, **kw)


def poly_roots(coeffs, *, tol=1e-15, max_iter=1000, seed=0) -> np.ndarray:
    """All roots (with repetition) by Aberth-Ehrlich simultaneous iteration."""
    c = _trim(coeffs)
    if len(c) == 1:
        if c[0] == 0:
            raise RootFindingError("zero polynomial has no isolated roots")
        return np.zeros(0, dtype=complex)
    nz = 0
    while c[nz] == 0:
        nz += 1
    zeros = np.zeros(nz, dtype=complex)
    c = c[nz:]
    n = len(c) - 1
    if n == 0:
        return zeros
    a = c / c[-1]
    if n == 1:
        return np.concatenate([zeros, [-a[0]]])
    radius = 1.0 + np.max(np.abs(a[:-1]))
    rng = np.random.default_rng(seed)
    theta = 2 * np.pi * (np.arange(n) + rng.random(n) * 0.5) / n + rng.random()
    z = radius * np.exp(1j * theta)
    scale = np.abs(a)
    converged = False
    for _ in range(max_iter):
        p, dp = horner_d(a, z)
        with np.errstate(all="ignore"):
            ratio = p / np.where(dp == 0, 1e-300, dp)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            s = np.sum(1.0 / diff, axis=1)
            w = ratio / (1 - ratio * s)
        w = np.where(np.isfinite(w), w, 0)
        z = z - w
        if np.all(np.abs(w) <= tol * (1 + np.abs(z))):
            converged = True
            break
    resid = np.abs(horner(a, z)) / horner(scale, np.abs(z)).real
    if not converged and np.any(~(resid < 1e-11)):
        raise RootFindingError("Aberth iteration did not converge", residuals=resid)
    return np.concatenate([zeros, z])


def polish_multiple_root(coeffs, z, k, steps=6):
    """Refine an approximate root of multiplicity ``k`` as a simple root of the (k-1)-th derivative."""
    c = np.asarray(coeffs, dtype=complex)
    for _ in range(k - 1):
        c = c[1:] * np.arange(1, len(c))
    if len(c) < 2:
        return z
    z0 = z
    for _ in range(steps):
        v, d = horner_d(c, z)
        if d == 0:
            break
        step = v / d
        z = z - step
        if abs(step) <= 1e-16 * (1 + abs(z)):
            break
    # keep the cluster mean if Newton wandered off
    return complex(z) if abs(z - z0) < TAU_CLUSTER * (1 + abs(z0)) else z0


def cluster_points(points, tol=TAU_CLUSTER):
    """Merge points closer than ``tol`` (chordal); returns (centers, counts)."""
    pts = np.asarray(points, dtype=complex)
    n = len(pts)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        d = chordal_dist(pts[i], pts[i + 1:]) if i + 1 < n else np.zeros(0)
        for j in np.nonzero(np.atleast_1d(d) < tol)[0]:
            parent[find(i)] = find(i + 1 + int(j))
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    centers, counts = [], []
    for idx in groups.values():
        g = pts[idx]
        if np.any(is_inf(g)):
            centers.append(INF)
        else:
            centers.append(complex(np.mean(g)))
        counts.append(len(idx))
    return np.array(centers, dtype=complex), np.array(counts, dtype=int)


# ---------------------------------------------------------------------------
# rational maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RationalMap:
    numerator: Polynomial
    denominator: Polynomial
    name: str = ""
    declared_postcritical: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.denominator.degree < 0:
            raise MalformedMapError("denominator is the zero polynomial")
        if self.degree < 2:
            raise MalformedMapError(f"degree {self.degree} < 2")
        self._check_coprime()

    @classmethod
    def from_coefficients(cls, num: Sequence, den: Sequence, name: str = "", **kw) -> "RationalMap":
        return cls(Polynomial(np.asarray(num, dtype=complex)), Polynomial(np.asarray(den, dtype=complex)), name, **kw)

    @property
    def degree(self) -> int:
        return max(self.numerator.degree, self.denominator.degree)

    def _check_coprime(self):
        if self.numerator.degree < 1 or self.denominator.degree < 1:
            return
        rp = self.numerator.roots()
        rq = self.denominator.roots()
        d = chordal_dist(rp[:, None], rq[None, :])
        if np.min(d) < TAU_GCD:
            raise MalformedMapError("numerator and denominator share a root")

    # chart data: p, q in the z chart; P(v) = v^d p(1/v), Q(v) = v^d q(1/v)
    @cached_property
    def _charts(self):
        d = self.degree
        p = self.numerator.padded(d)
        q = self.denominator.padded(d)
        return p, q, p[::-1].copy(), q[::-1].copy()

    def _chart_values(self, z):
        """(A, B, A', B', src) such that f = A/B in the source chart of ``z``."""
        z = np.asarray(z, dtype=complex)
        big = ~(np.abs(z) <= 1)
        xi = np.where(big, recip(np.where(big, z, 1.0)), z)
        p, q, P, Q = self._charts
        A0, dA0 = horner_d(p, xi)
        B0, dB0 = horner_d(q, xi)
        A1, dA1 = horner_d(P, xi)
        B1, dB1 = horner_d(Q, xi)
        A = np.where(big, A1, A0)
        B = np.where(big, B1, B0)
        dA = np.where(big, dA1, dA0)
        dB = np.where(big, dB1, dB0)
        return A, B, dA, dB, big.astype(np.int8)

    def __call__(self, z):
        A, B, _, _, _ = self._chart_values(z)
        small = np.abs(A) <= np.abs(B)
        with np.errstate(all="ignore"):
            val = np.where(small, A / np.where(small, B, 1), recip(np.where(small, 1, B / np.where(small, 1, A))))
        return val if val.ndim else complex(val)

    def eval(self, z):
        return self(z)

    def chart_step(self, xi, src):
        """Apply f to a point given in chart ``src``.

        Returns ``(value, dst, deriv)``: the image in chart ``dst`` (chosen so
        that ``|value| <= 1``) and the chart-to-chart derivative.
        """
        xi = np.asarray(xi, dtype=complex)
        src = np.asarray(src, dtype=bool)
        p, q, P, Q = self._charts
        A0, dA0 = horner_d(p, xi)
        B0, dB0 = horner_d(q, xi)
        A1, dA1 = horner_d(P, xi)
        B1, dB1 = horner_d(Q, xi)
        A = np.where(src, A1, A0)
        B = np.where(src, B1, B0)
        dA = np.where(src, dA1, dA0)
        dB = np.where(src, dB1, dB0)
        dst = np.abs(A) > np.abs(B)
        with np.errstate(all="ignore"):
            num = np.where(dst, B, A)
            den = np.where(dst, A, B)
            dnum = np.where(dst, dB, dA)
            dden = np.where(dst, dA, dB)
            val = num / den
            der = (dnum * den - num * dden) / den**2
        return val, dst, der

    def chart_derivative(self, z):
        """Derivative of f in the natural charts at ``z`` and ``f(z)``.

        Returns ``(deriv, src_chart, dst_chart)`` with chart 0 = ``z`` and
        chart 1 = ``1/z``.
        """
        z = np.asarray(z, dtype=complex)
        src = ~(np.abs(z) <= 1)
        xi = np.where(src, recip(np.where(src, z, 1.0)), z)
        _, dst, der = self.chart_step(xi, src)
        if der.ndim == 0:
            return complex(der), int(src), int(dst)
        return der, src.astype(int), dst.astype(int)

    def derivative(self, z):
        """Ordinary derivative ``f'(z)`` for finite ``z`` with finite image."""
        z = np.asarray(z, dtype=complex)
        der, src, dst = self.chart_derivative(z)
        xi = np.where(src, recip(np.where(src, z, 1.0)), z)
        val, _, _ = self.chart_step(xi, src.astype(bool) if np.ndim(src) else bool(src))
        with np.errstate(all="ignore"):
            out = np.asarray(der, dtype=complex)
            # source chart v = 1/z: dv/dz = -v^2
            out = np.where(np.asarray(src, bool), -out * xi**2, out)
            # target chart 1/w: dw/d(1/w) = -w^2 = -1/val^2
            out = np.where(np.asarray(dst, bool), -out / val**2, out)
        if np.any(is_inf(z)) or np.any(~np.isfinite(out)):
            raise SphereError("derivative undefined in standard chart (point or image at infinity); use chart_derivative")
        return out if out.ndim else complex(out)

    # -- algebra -----------------------------------------------------------

    def compose(self, g: "RationalMap") -> "RationalMap":
        """The map ``self o g``."""
        d = self.degree
        p, q, _, _ = self._charts
        a, b = g.numerator, g.denominator
        apow = [Polynomial(np.ones(1))]
        bpow = [Polynomial(np.ones(1))]
        for _ in range(d):
            apow.append(apow[-1] * a)
            bpow.append(bpow[-1] * b)
        num = Polynomial(np.zeros(1))
        den = Polynomial(np.zeros(1))
        for k in range(d + 1):
            term = apow[k] * bpow[d - k]
            num = num + term.scale(p[k])
            den = den + term.scale(q[k])
        name = f"{self.name}o{g.name}" if self.name or g.name else ""
        return RationalMap(num, den, name)

    def iterate(self, n: int) -> "RationalMap":
        if n < 1:
            raise ValueError("iterate needs n >= 1")
        out = self
        for _ in range(n - 1):
            out = self.compose(out)
        if n > 1:
            object.__setattr__(out, "name", f"{self.name}^{n}")
        return out

    def orbit(self, z, n: int):
        pts = [np.asarray(z, dtype=complex)]
        for _ in range(n):
            pts.append(np.asarray(self(pts[-1]), dtype=complex))
        return pts

    # -- preimages and critical structure -----------------------------------

    def preimages(self, w, tol_cluster=TAU_CLUSTER):
        """Preimages of ``w`` as ``[(point, multiplicity), ...]`` summing to deg f."""
        d = self.degree
        p, q = self.numerator, self.denominator
        w = complex(w)
        if is_inf(w):
            poly = q
        elif abs(w) <= 1:
            poly = p - q.scale(w)
        else:
            poly = p.scale(1 / w) - q
        if poly.degree < 0:
            raise MalformedMapError("0/0 indeterminacy: preimage equation vanishes identically")
        roots = poly.roots()
        if len(roots):
            centers, counts = cluster_points(roots, tol_cluster)
        else:
            centers, counts = np.zeros(0, complex), np.zeros(0, int)
        out = [
            (polish_multiple_root(poly.coeffs, complex(c), int(k)) if k > 1 else complex(c), int(k))
            for c, k in zip(centers, counts)
        ]
        deficit = d - poly.degree
        if deficit > 0:
            out.append((INF, deficit))
        resid = [chordal_dist(self(x), w) for x, _ in out]
        if resid and max(resid) > 1e-6:
            raise RootFindingError("preimage residuals too large", residuals=resid)
        return out

    @cached_property
    def critical_points(self):
        """``[(point, local_degree), ...]`` with sum(local_degree - 1) = 2d - 2."""
        d = self.degree
        p, q = self.numerator, self.denominator
        wr = p.deriv() * q - p * q.deriv()
        roots = wr.roots() if wr.degree > 0 else np.zeros(0, complex)
        out = []
        if len(roots):
            centers, counts = cluster_points(roots, TAU_CLUSTER)
            out = [
                (polish_multiple_root(wr.coeffs, complex(c), int(k)) if k > 1 else complex(c), int(k) + 1)
                for c, k in zip(centers, counts)
            ]
        deficit = 2 * d - 2 - max(wr.degree, 0)
        if deficit > 0:
            out.append((INF, deficit + 1))
        if sum(k - 1 for _, k in out) != 2 * d - 2:
            raise SphereError("critical point clustering inconsistent with Riemann-Hurwitz")
        return out

    def local_degree(self, x):
        """Local degree at ``x``; vectorized over arrays."""
        x = np.asarray(x, dtype=complex)
        out = np.ones(x.shape, dtype=np.int64)
        for c, k in self.critical_points:
            out = np.where(chordal_dist(c, x) < TAU_CLUSTER * 10, k, out)
        return int(out) if out.ndim == 0 else out

    def postcritical_set(self, budget: int = 64, tol: float = TAU_ORBIT):
        """Forward orbits of the critical values, or NotPostcriticallyFinite."""
        if budget < 1:
            raise ValueError("budget must be >= 1")
        post: list[complex] = []

        def match(z):
            for i, y in enumerate(post):
                if chordal_dist(z, y) < tol:
                    return i
            return None

        for c, _ in self.critical_points:
            z = self(c)
            steps = 0
            while (i := match(z)) is None:
                post.append(complex(z))
                z = self(z)
                steps += 1
                if steps > budget:
                    raise NotPostcriticallyFinite(
                        f"critical orbit from {c} did not close within {budget} steps"
                    )
            if chordal_dist(z, post[i]) > 0 and self._attracting_cycle_through(post[i], post, tol):
                # an orbit converging to an attracting cycle only looks closed
                raise NotPostcriticallyFinite(f"critical orbit from {c} converges to an attracting cycle")
        return post

    def _attracting_cycle_through(self, y, pts, tol) -> bool:
        seen = [complex(y)]
        z = complex(y)
        for _ in range(len(pts) + 1):
            z = complex(self(z))
            for j, w in enumerate(seen):
                if chordal_dist(z, w) < tol:
                    mult = 1.0
                    for x in seen[j:]:
                        mult *= abs(self.chart_derivative(x)[0])
                    return mult < 1
            seen.append(z)
        return False

    @cached_property
    def post(self):
        return self.postcritical_set()

    def check_supported(self, budget: int = 64):
        """Verify PCF and absence of periodic critical points."""
        post = self.postcritical_set(budget)
        for c, _ in self.critical_points:
            z = c
            for _ in range(len(post) + 1):
                z = self(z)
                if chordal_dist(z, c) < TAU_ORBIT:
                    raise UnsupportedMapError(f"critical point {c} is periodic")
        return post


def lattes_f0() -> RationalMap:
    """The flexible Lattes map (z^2+1)^2 / (4 z (z^2-1))."""
    return RationalMap.from_coefficients([1, 0, 2, 0, 1], [0, -4, 0, 4], name="lattes4")

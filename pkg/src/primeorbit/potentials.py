"""Real potentials on the sphere."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sphere import RationalMap, from_sphere_coords, is_inf, recip


def re_bump(z):
    """``Re z / (1 + |z|^2)``, evaluated in the ``1/z`` chart when ``|z| > 1``."""
    z = np.asarray(z, dtype=complex)
    big = ~(np.abs(z) <= 1)
    w = np.where(big, recip(np.where(big, z, 1.0)), z)
    w = np.where(is_inf(z), 0, w)
    return w.real / (1 + np.abs(w) ** 2)


@dataclass(frozen=True, eq=False)
class Potential:
    """Real function on the sphere with Holder metadata."""

    func: Callable
    holder_exponent: float = 1.0
    description: str = ""
    smooth: bool = False
    constant: float | None = field(default=None)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.func(z), dtype=float)
        if out.shape != z.shape:
            out = np.broadcast_to(out, z.shape).copy()
        return out if out.ndim else float(out)

    def check_bounded(self, n: int = 10_000, seed: int = 0) -> float:
        """Sup of |phi| over a random sample of the sphere plus infinity."""
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 3))
        x /= np.linalg.norm(x, axis=1)[:, None]
        z = np.append(from_sphere_coords(x), complex(np.inf, 0))
        v = self(z)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"potential {self.description!r} is not finite on the sphere")
        return float(np.max(np.abs(v)))

    def __str__(self):
        return self.description


def constant(c: float) -> Potential:
    c = float(c)
    return Potential(lambda z: np.full(np.shape(z), c), 1.0, f"constant:{c:g}", True, constant=c)


def sample_potential(amplitude: float = 0.2, offset: float = 1.0) -> Potential:
    """``offset + amplitude * Re z / (1 + |z|^2)``."""
    a, b = float(amplitude), float(offset)
    return Potential(lambda z: b + a * re_bump(z), 1.0, f"sample:{a:g}" + (f",{b:g}" if b != 1 else ""), True)


def coboundary(f: RationalMap, c: float = 1.0, amplitude: float = 0.2) -> Potential:
    """``c + u o f - u`` with ``u = amplitude * Re z / (1 + |z|^2)``."""
    c, a = float(c), float(amplitude)

    def ev(z):
        return c + a * (re_bump(f(z)) - re_bump(z))

    return Potential(ev, 1.0, f"coboundary:{c:g},{a:g}", True)


def iterate_potential(phi: Potential, f: RationalMap, n: int) -> Potential:
    """``S_n phi`` as a potential for the iterate ``f^n``."""
    if n == 1:
        return phi

    def ev(z):
        z = np.asarray(z, dtype=complex)
        s = np.zeros(z.shape)
        for _ in range(n):
            s = s + phi(z)
            z = np.asarray(f(z), dtype=complex)
        return s

    const = None if phi.constant is None else n * phi.constant
    return Potential(ev, phi.holder_exponent, f"S_{n}[{phi.description}]", phi.smooth, constant=const)


def parse_potential(spec: str, f: RationalMap) -> Potential:
    """Parse ``constant:c``, ``sample:a[,offset]`` or ``coboundary:c,b``."""
    name, _, args = str(spec).partition(":")
    vals = [float(x) for x in args.split(",") if x.strip()] if args else []
    if name == "constant":
        return constant(vals[0] if vals else 1.0)
    if name == "sample":
        return sample_potential(*(vals or [0.2]))
    if name == "coboundary":
        return coboundary(f, *(vals or [1.0, 0.2]))
    raise ValueError(f"unknown potential spec {spec!r}")

"""The logarithmic integral, the orbit-counting function and ratio reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from html import escape

import numpy as np
from scipy.integrate import quad

from .orbits import OrbitStore, PositivityCertificate


class CompletenessError(Exception):
    def __init__(self, message, required_nmax):
        super().__init__(message)
        self.required_nmax = required_nmax


def li(y: float) -> float:
    """``Li(y) = int_2^y du / log u`` for ``y >= 2``."""
    y = float(y)
    if not y >= 2:
        raise ValueError(f"Li is defined for y >= 2, got {y}")
    if y == 2:
        return 0.0
    total = 0.0
    a = 2.0
    while a < y:
        b = min(2 * a, y)
        val, _ = quad(lambda u: 1 / math.log(u), a, b, epsabs=0, epsrel=1e-13, limit=200)
        total += val
        a = b
    return total


def li_exp(x: float) -> float:
    """``Li(e^x)``; raises OverflowError once the value leaves the float range."""
    x = float(x)
    if x < math.log(2):
        raise ValueError("Li(e^x) needs e^x >= 2")
    if x > 709:
        raise OverflowError(f"Li(e^{x:g}) exceeds the float range")
    return li(math.exp(x))


def required_nmax(T: float, cert: PositivityCertificate) -> int:
    """Largest period that can carry an orbit of weighted length <= T."""
    if not cert.ok:
        raise CompletenessError("no eventual-positivity certificate", None)
    q = math.floor(T / cert.margin)
    if cert.N == 1:
        return max(q, 0)
    return cert.N * (q + 2)


def certified_t(n_max: int, cert: PositivityCertificate) -> float:
    """Supremum of the T for which periods <= n_max suffice (N = 1 certificates)."""
    if cert.N != 1:
        return (n_max // cert.N - 1) * cert.margin
    return (n_max + 1) * cert.margin


def _lengths(store: OrbitStore):
    return np.sort(np.array([o.birkhoff for o in store.primitive()]))


def pi_count(store: OrbitStore, T: float, cert: PositivityCertificate | None = None) -> int:
    """Number of primitive orbits with weighted length <= T."""
    if cert is not None:
        need = required_nmax(T, cert)
        if need > store.n_max:
            raise CompletenessError(f"pi({T}) needs periods up to N_max = {need}, store has {store.n_max}", need)
    return int(np.searchsorted(_lengths(store), T, side="right"))


@dataclass
class CountReport:
    T: np.ndarray
    pi: np.ndarray
    li: np.ndarray
    ratio: np.ndarray
    secondary: np.ndarray
    s0: float
    slope: float | None
    oscillating: bool
    lattice: bool
    swing: float
    notes: list = field(default_factory=list)

    def rows(self):
        for i in range(len(self.T)):
            yield float(self.T[i]), int(self.pi[i]), float(self.li[i]), float(self.ratio[i]), float(self.secondary[i])

    @property
    def converging(self) -> bool:
        """Last three ratios closer to 1 than the first three."""
        if len(self.ratio) < 6:
            return False
        d = np.abs(self.ratio - 1)
        return bool(np.mean(d[-3:]) < np.mean(d[:3]))


def oscillation_swing(ratio) -> float:
    """Max minus min of the ratio over the second half of the grid."""
    r = np.asarray(ratio)
    h = len(r) // 2
    return float(np.max(r[h:]) - np.min(r[h:])) if len(r) >= 2 else 0.0


def pot_report(store: OrbitStore, s0: float, T_grid, cert: PositivityCertificate | None = None, swing_tol: float = 0.25) -> CountReport:
    """Table of pi(T), Li(e^{s0 T}), their ratio and ``e^{s0 T}/(s0 T)``."""
    T = np.asarray(sorted(T_grid), dtype=float)
    if np.any(s0 * T < math.log(2)):
        raise ValueError("every T must satisfy exp(s0 T) >= 2")
    lengths = _lengths(store)
    if cert is not None:
        need = required_nmax(float(T[-1]), cert)
        if need > store.n_max:
            raise CompletenessError(f"T = {T[-1]} needs N_max = {need}", need)
    pi = np.searchsorted(lengths, T, side="right")
    L = np.array([li_exp(s0 * t) for t in T])
    sec = np.exp(s0 * T) / (s0 * T)
    ratio = pi / L
    diff = pi - L
    pos = diff > 0
    slope = None
    if pos.sum() >= 2:
        slope = float(np.polyfit(T[pos], np.log(diff[pos]), 1)[0])
    avgs = np.array([o.birkhoff / o.period for o in store.primitive()])
    lattice = bool(len(avgs) and np.ptp(avgs) < 1e-7)
    swing = oscillation_swing(ratio)
    # a lattice of lengths makes pi a step function whose ratio to Li never settles
    osc = bool(lattice and swing > swing_tol)
    notes = []
    if osc:
        notes.append(f"non-convergent oscillation: orbit lengths lie on a lattice, ratio swing {swing:.3f}")
    elif lattice:
        notes.append("orbit averages coincide: potential looks co-homologous to a constant")
    elif swing > swing_tol:
        notes.append(f"desk-scale ratio swing {swing:.3f}; orbit lengths are not on a lattice")
    return CountReport(T, pi, L, ratio, sec, float(s0), slope, osc, lattice, swing, notes)


def svg_plot(xs, ys, title: str = "", xlabel: str = "T", ylabel: str = "ratio", ref: float | None = 1.0) -> str:
    """Single-series line plot as a self-contained SVG string."""
    W, H, pad = 640, 400, 50
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0, x1 = float(xs.min()), float(xs.max())
    lo = [ys.min()] + ([ref] if ref is not None else [])
    hi = [ys.max()] + ([ref] if ref is not None else [])
    y0, y1 = float(min(lo)), float(max(hi))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
    ]
    if ref is not None:
        parts.append(f'<line x1="{pad}" y1="{py(ref):.2f}" x2="{W - pad}" y2="{py(ref):.2f}" stroke="gray" stroke-dasharray="4 4"/>')
    parts += [
        f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{pts}"/>',
        f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{H / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{pad - 5}" y="{H - pad}" text-anchor="end" font-family="sans-serif" font-size="10">{y0:.3g}</text>',
        f'<text x="{pad - 5}" y="{pad}" text-anchor="end" font-family="sans-serif" font-size="10">{y1:.3g}</text>',
        f'<text x="{pad}" y="{H - pad + 15}" text-anchor="middle" font-family="sans-serif" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - pad}" y="{H - pad + 15}" text-anchor="middle" font-family="sans-serif" font-size="10">{x1:.3g}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"

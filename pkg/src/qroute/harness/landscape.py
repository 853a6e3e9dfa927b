"""Two-dimensional cost slices through parameter space, with an SVG heatmap."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class LandscapeScan:
    x0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    t1: np.ndarray  # grid coordinates along d1
    t2: np.ndarray
    cost: np.ndarray  # shape (len(t1), len(t2))


def random_directions(k: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal directions in R^k from a QR factorisation of a Gaussian draw."""
    if k < 2:
        raise ValueError("a landscape plane needs at least two parameters")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.normal(size=(k, 2)))
    Q = Q * np.sign(np.diag(R))  # fixes the sign ambiguity of QR
    return Q[:, 0].copy(), Q[:, 1].copy()


def scan(fn, x0, seed, extent: float = np.pi, resolution: int = 101) -> LandscapeScan:
    """Evaluate ``fn`` on ``x0 + a d1 + b d2`` for ``a, b`` in ``[-extent, extent]``.

    A zero extent collapses the grid to the single point ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    d1, d2 = random_directions(x0.size, seed)
    if extent < 0:
        raise ValueError("extent must be non-negative")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if extent == 0 or resolution == 1:
        t = np.zeros(1)
    else:
        t = np.linspace(-extent, extent, resolution)
    cost = np.empty((t.size, t.size))
    for i, a in enumerate(t):
        for j, b in enumerate(t):
            cost[i, j] = fn(x0 + a * d1 + b * d2)
    return LandscapeScan(x0, d1, d2, t, t.copy(), cost)


def write_csv(path, sc: LandscapeScan) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta1", "theta2", "cost"])
        for i, a in enumerate(sc.t1):
            for j, b in enumerate(sc.t2):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(sc.cost[i, j]))])


def _color(u: float) -> str:
    # dark blue (low cost) to pale yellow (high cost)
    lo, hi = np.array([20, 30, 90]), np.array([250, 240, 160])
    r, g, b = (lo + (hi - lo) * u).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def to_svg(sc: LandscapeScan, cell: int = 4, title: str = "") -> str:
    c = sc.cost
    lo, span = float(c.min()), float(np.ptp(c)) or 1.0
    nx, ny = c.shape
    pad = 24
    W, H = nx * cell + 2 * pad, ny * cell + 2 * pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">']
    if title:
        out.append(f'<text x="{pad}" y="{pad - 8}" font-size="12" font-family="sans-serif">{title}</text>')
    for i in range(nx):
        for j in range(ny):
            u = (c[i, j] - lo) / span
            # theta1 runs left to right, theta2 bottom to top
            x, y = pad + i * cell, pad + (ny - 1 - j) * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_color(u)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

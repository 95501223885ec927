"""Zero dynamics, secondary equilibria and sublevel-set estimates of the domain of attraction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import contourpy
import numpy as np
from scipy import ndimage

from . import energy, numdiff
from .errors import DomainError, NotFoundError
from .model import Equilibrium, drift, input_vector

log = logging.getLogger(__name__)


# --- zero dynamics --------------------------------------------------------------------

def zd_current_fixed(x2, eq: Equilibrium, D):
    """Voltage dynamics when the current is held at x1* (input ``u = x2/(x2+1)``)."""
    x2 = np.asarray(x2, dtype=float)
    if np.any(x2 <= 0):
        raise DomainError("x2 must be positive")
    xs = eq.x2_star
    return D * (x2 - xs) / (xs * x2 * (x2 + 1))


def zd_current_fixed_input(x2):
    return x2 / (x2 + 1)


def zd_current_fixed_slope(eq: Equilibrium, D) -> float:
    xs = eq.x2_star
    return D / (xs**2 * (1 + xs))


def zd_voltage_fixed(x1, eq: Equilibrium, D):
    """Current dynamics when the voltage is held at x2*.

    Substituting ``u = 1 - D/(x1 x2*)`` into the model gives
    ``x1' = 1 - D (1 + 1/x2*) / x1 = 1 - x1*/x1``, which vanishes at x1*.
    """
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 <= 0):
        raise DomainError("x1 must be positive")
    return 1 - D * (1 + 1 / eq.x2_star) / x1


def zd_voltage_fixed_input(x1, eq: Equilibrium, D):
    return 1 - D / (x1 * eq.x2_star)


def zd_voltage_fixed_slope(eq: Equilibrium, D) -> float:
    """Slope of :func:`zd_voltage_fixed` at x1*, equal to ``1/x1*`` on the equilibrium set."""
    return D * (1 + 1 / eq.x2_star) / eq.x1_star**2


# --- secondary equilibria -------------------------------------------------------------

def closed_loop_target(x, D, k1, k2):
    """Unclamped closed-loop field ``F_d(x) grad H_d(x)``."""
    return np.einsum("ij...,j...->i...", energy.f_d(x), energy.grad(x, D, k1, k2))


def fd_jacobian(fn, x, rel_step=1e-6) -> np.ndarray:
    """Central-difference Jacobian of a map R^2 -> R^2."""
    return numdiff.jacobian(fn, x, rel_step, richardson=False)


def _newton(fn, x0, tol=1e-12, max_iter=100):
    x = np.asarray(x0, dtype=float)
    fx = np.asarray(fn(x))
    for _ in range(max_iter):
        if np.linalg.norm(fx) <= tol:
            return x, fx
        try:
            dx = np.linalg.solve(fd_jacobian(fn, x), -fx)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-8:
            xn = x + lam * dx
            if xn[0] > 0 and xn[1] > 0:
                fn_x = np.asarray(fn(xn))
                if np.linalg.norm(fn_x) < np.linalg.norm(fx) or lam < 1e-6:
                    break
            lam *= 0.5
        else:
            return None
        x, fx = xn, fn_x
    return (x, fx) if np.linalg.norm(fx) <= tol else None


@dataclass(frozen=True)
class CriticalPoint:
    x: tuple[float, float]
    field_norm: float
    eigenvalues: tuple[complex, complex]

    @property
    def kind(self) -> str:
        re = sorted(e.real for e in self.eigenvalues)
        if re[0] < 0 < re[1]:
            return "saddle"
        if re[1] < 0:
            return "stable"
        if re[0] > 0:
            return "unstable"
        return "degenerate"


def find_equilibria(D, k1, k2, search_box, grid=200, tol=1e-12) -> list[CriticalPoint]:
    """All zeros of the closed-loop field detected by a sign-change scan of the box."""
    (a1, b1), (a2, b2) = search_box
    if not (a1 > 0 and a2 > 0 and b1 > a1 and b2 > a2):
        raise DomainError("search box must lie in the open positive quadrant")
    g1 = np.linspace(a1, b1, grid + 1)
    g2 = np.linspace(a2, b2, grid + 1)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    F = closed_loop_target((X1, X2), D, k1, k2)

    def changes(c):
        corners = np.stack([c[:-1, :-1], c[1:, :-1], c[:-1, 1:], c[1:, 1:]])
        return (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)

    mask = changes(F[0]) & changes(F[1])
    fn = lambda x: closed_loop_target(x, D, k1, k2)
    # One Newton start per cluster of adjacent candidate cells: its smallest-residual cell.
    labels, n = ndimage.label(mask)
    c1 = 0.5 * (g1[:-1] + g1[1:])
    c2 = 0.5 * (g2[:-1] + g2[1:])
    C1, C2 = np.meshgrid(c1, c2, indexing="ij")
    with np.errstate(all="ignore"):
        norm = np.hypot(*closed_loop_target((C1, C2), D, k1, k2))
    norm = np.where(np.isfinite(norm), norm, np.inf)
    starts = ndimage.minimum_position(norm, labels, index=np.arange(1, n + 1)) if n else []
    found: list[CriticalPoint] = []
    for i, j in starts:
        x0 = (c1[i], c2[j])
        res = _newton(fn, x0, tol=tol)
        if res is None:
            continue
        x, fx = res
        if any(np.hypot(x[0] - p.x[0], x[1] - p.x[1]) < 1e-6 for p in found):
            continue
        ev = np.linalg.eigvals(fd_jacobian(fn, x))
        found.append(CriticalPoint((float(x[0]), float(x[1])), float(np.linalg.norm(fx)),
                                   (complex(ev[0]), complex(ev[1]))))
    return found


def default_search_box(eq: Equilibrium, scale: float = 3.0):
    s = scale * max(eq.x1_star, eq.x2_star)
    return (1e-3, eq.x1_star + s), (1e-3, eq.x2_star + s)


def find_saddle(D, k1, k2, search_box=None, *, eq: Equilibrium | None = None, grid=200) -> CriticalPoint:
    """Secondary equilibrium of the closed loop with eigenvalues of opposite sign.

    When ``eq`` is given, points within 1e-3 of it are excluded and the saddle
    nearest to it is returned.
    """
    if search_box is None:
        if eq is None:
            raise DomainError("need a search box or an equilibrium to size one")
        search_box = default_search_box(eq)
    pts = [p for p in find_equilibria(D, k1, k2, search_box, grid=grid) if p.kind == "saddle"]
    if eq is not None:
        pts = [p for p in pts if math.dist(p.x, (eq.x1_star, eq.x2_star)) > 1e-3]
        pts.sort(key=lambda p: math.dist(p.x, (eq.x1_star, eq.x2_star)))
    if not pts:
        raise NotFoundError("no saddle of the closed loop found in the search box")
    return pts[0]


# --- sublevel sets --------------------------------------------------------------------

@dataclass
class SublevelEstimate:
    c_star: float
    saddle: CriticalPoint | None
    limiting_constraint: str  # "saddle_level" or "orthant_boundary"
    h_star: float
    box: tuple[tuple[float, float], tuple[float, float]]
    resolution: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "c_star": self.c_star,
            "h_at_equilibrium": self.h_star,
            "h_at_saddle": self.params.get("h_saddle"),
            "limiting_constraint": self.limiting_constraint,
            "saddle": None if self.saddle is None else {
                "x1": self.saddle.x[0], "x2": self.saddle.x[1],
                "field_norm": self.saddle.field_norm,
                "eigenvalues_real": sorted(e.real for e in self.saddle.eigenvalues),
            },
            "box": {"x1": list(self.box[0]), "x2": list(self.box[1])},
            "grid_resolution": self.resolution,
        }


class SublevelGrid:
    """Grid of H_d values over a box, with component queries around the equilibrium."""

    def __init__(self, eq: Equilibrium, D, k1, k2, box, resolution=400):
        (a1, b1), (a2, b2) = box
        self.eq, self.D, self.k1, self.k2 = eq, D, k1, k2
        self.box = box
        self.g1 = np.linspace(a1, b1, resolution)
        self.g2 = np.linspace(a2, b2, resolution)
        X1, X2 = np.meshgrid(self.g1, self.g2, indexing="ij")
        self.H = energy.hamiltonian((X1, X2), D, k1, k2)
        self.seed = self.index_of((eq.x1_star, eq.x2_star))

    def index_of(self, x):
        i = int(np.argmin(np.abs(self.g1 - x[0])))
        j = int(np.argmin(np.abs(self.g2 - x[1])))
        return i, j

    def component(self, c) -> np.ndarray:
        labels, _ = ndimage.label(self.H <= c)
        lab = labels[self.seed]
        if lab == 0:
            return np.zeros_like(self.H, dtype=bool)
        return labels == lab

    def touches_border(self, comp) -> bool:
        return bool(comp[0, :].any() or comp[-1, :].any() or comp[:, 0].any() or comp[:, -1].any())

    def violation(self, c, forbidden=()) -> str | None:
        """Which constraint the c-component breaks, or None when it is admissible."""
        comp = self.component(c)
        if not comp.any() or self.touches_border(comp):
            return "orthant_boundary"
        if any(comp[idx] for idx in forbidden):
            return "saddle_level"
        return None

    def admissible(self, c, forbidden=()) -> bool:
        return self.violation(c, forbidden) is None


def estimate_domain(eq: Equilibrium, D, k1, k2, grid_resolution=400, *, box=None,
                    saddle: CriticalPoint | None = None, iterations=40) -> SublevelEstimate:
    """Largest sublevel component of H_d around x* that is bounded, inside the open
    quadrant, and below the saddle.

    Bisection on c runs for ``iterations`` halvings; the result is lowered by the
    final bracket width to absorb the one-cell uncertainty of the grid test.
    """
    h_star = float(energy.hamiltonian(eq, D, k1, k2))
    if saddle is None:
        try:
            saddle = find_saddle(D, k1, k2, eq=eq)
        except NotFoundError:
            log.warning("no saddle found; only the quadrant boundary limits the estimate")
            saddle = None
    if box is None:
        if saddle is not None:
            d = math.dist(saddle.x, (eq.x1_star, eq.x2_star))
        else:
            d = max(eq.x1_star, eq.x2_star)
        box = ((max(1e-3, eq.x1_star - 3 * d), eq.x1_star + 3 * d),
               (max(1e-3, eq.x2_star - 3 * d), eq.x2_star + 3 * d))
    grid = SublevelGrid(eq, D, k1, k2, box, grid_resolution)

    forbidden = ()
    h_saddle = None
    if saddle is not None:
        h_saddle = float(energy.hamiltonian(saddle.x, D, k1, k2))
        forbidden = (grid.index_of(saddle.x),)
        upper = h_saddle
    else:
        upper = float(grid.H.max())
    lo, hi = h_star, upper
    limiting = grid.violation(upper, forbidden)
    if limiting is None:
        limiting = "saddle_level"
        lo = upper
        width = (upper - h_star) / 2**iterations
    else:
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            v = grid.violation(mid, forbidden)
            if v is None:
                lo = mid
            else:
                hi, limiting = mid, v
        width = hi - lo
    c_star = lo - width
    return SublevelEstimate(c_star, saddle, limiting, h_star, box, grid_resolution,
                            params={"D": D, "k1": k1, "k2": k2, "h_saddle": h_saddle})


def sublevel_contour(level, eq: Equilibrium, D, k1, k2, box, resolution=400) -> np.ndarray:
    """Closed polyline of ``{H_d = level}`` enclosing the equilibrium, shape (M, 2)."""
    (a1, b1), (a2, b2) = box
    g1 = np.linspace(a1, b1, resolution)
    g2 = np.linspace(a2, b2, resolution)
    X1, X2 = np.meshgrid(g1, g2, indexing="xy")
    H = energy.hamiltonian((X1, X2), D, k1, k2)
    gen = contourpy.contour_generator(g1, g2, H, line_type=contourpy.LineType.Separate)
    xs = (eq.x1_star, eq.x2_star)
    best = None
    for line in gen.lines(level):
        if len(line) < 4 or not np.allclose(line[0], line[-1]):
            continue
        if point_in_polygon(xs, line):
            area = abs(_shoelace(line))
            if best is None or area < best[0]:
                best = (area, line)
    if best is None:
        raise NotFoundError(f"no closed level curve at {level} encloses the equilibrium")
    return best[1]


def _shoelace(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def points_in_polygon(pts, poly) -> np.ndarray:
    """Even-odd rule test for an (N, 2) array of points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, :1], pts[:, 1:]
    px, py = poly[None, :, 0], poly[None, :, 1]
    qx, qy = np.roll(px, -1, axis=1), np.roll(py, -1, axis=1)
    cond = (py > y) != (qy > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = px + (y - py) * (qx - px) / (qy - py)
    return np.count_nonzero(cond & (x < xint), axis=1) % 2 == 1


def point_in_polygon(pt, poly) -> bool:
    return bool(points_in_polygon([pt], poly)[0])


def in_component(pts, estimate: SublevelEstimate, polygon, tol=1e-9) -> np.ndarray:
    """Which of the (N, 2) points lie in the sublevel component bounded by ``polygon``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    D, k1, k2 = (estimate.params[k] for k in ("D", "k1", "k2"))
    ok = (pts[:, 0] > 0) & (pts[:, 1] > 0)
    out = np.zeros(len(pts), dtype=bool)
    if ok.any():
        q = pts[ok]
        out[ok] = (energy.hamiltonian((q[:, 0], q[:, 1]), D, k1, k2) <= estimate.c_star + tol) \
            & points_in_polygon(q, polygon)
    return out


def is_closed_loop_consistent(x, D, k1, k2) -> float:
    """Norm of ``f + g u - F_d grad H_d`` at one point; zero when the synthesis is exact."""
    from .controllers import ida_control

    u = ida_control(x, D, k1, k2)
    return float(np.linalg.norm(drift(x, D) + input_vector(x) * u - closed_loop_target(x, D, k1, k2)))

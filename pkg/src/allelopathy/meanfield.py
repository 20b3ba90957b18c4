"""Mean-field ODE: fixed points, stability, regions, Dulac function, basins.

    u1' = beta1 u1 (1 - u1 - u2) - u1
    u2' = beta2 u2 (1 - u1 - u2) - (1 + gamma u1) u2

Functions take any ``params`` object with ``beta1``, ``beta2`` and ``gamma``
attributes (:class:`~allelopathy.lattice.ModelParams` or :class:`Rates`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from gmpy2 import mpq
from numba import njit
from scipy.integrate import solve_ivp

from .lattice import ConfigError

MARGINAL_TOL = 1e-9
CONVERGE_DIST = 1e-6
CONVERGE_SPEED = 1e-10
RTOL = 1e-10
ATOL = 1e-13


class Rates(NamedTuple):
    beta1: float
    beta2: float
    gamma: float


class DensityPair(NamedTuple):
    u1: float
    u2: float

    def in_simplex(self, tol: float = 0.0) -> bool:
        return self.u1 >= -tol and self.u2 >= -tol and self.u1 + self.u2 <= 1 + tol


def rhs(u, params) -> np.ndarray:
    u1, u2 = u
    b1, b2, g = params.beta1, params.beta2, params.gamma
    free = 1 - u1 - u2
    return np.array([b1 * u1 * free - u1, b2 * u2 * free - (1 + g * u1) * u2])


def jacobian(u, params) -> np.ndarray:
    u1, u2 = u
    b1, b2, g = params.beta1, params.beta2, params.gamma
    return np.array([
        [b1 * (1 - 2 * u1 - u2) - 1, -b1 * u1],
        [-(b2 + g) * u2, b2 * (1 - u1 - 2 * u2) - 1 - g * u1],
    ])


def p12_coordinates(params, exact: bool = False) -> DensityPair | None:
    b1, b2, g = params.beta1, params.beta2, params.gamma
    if g == 0 or b1 == 0:
        return None
    if exact:
        b1, b2, g = mpq(b1), mpq(b2), mpq(g)
    u1 = (b2 / b1 - 1) / g
    return DensityPair(u1, 1 - 1 / b1 - u1)


def _exact_points(b1: mpq, b2: mpq, g: mpq) -> dict:
    zero = mpq(0)
    p12 = None
    if g != 0 and b1 != 0:
        u1 = (b2 / b1 - 1) / g
        p12 = DensityPair(u1, 1 - 1 / b1 - u1)
    return {"p0": DensityPair(zero, zero),
            "p1": DensityPair(1 - 1 / b1, zero) if b1 > 0 else None,
            "p2": DensityPair(zero, 1 - 1 / b2) if b2 > 0 else None,
            "p12": p12}


def _exact_residual(u: DensityPair, b1: mpq, b2: mpq, g: mpq) -> mpq:
    free = 1 - u.u1 - u.u2
    return max(abs(b1 * u.u1 * free - u.u1), abs(b2 * u.u2 * free - (1 + g * u.u1) * u.u2))


def p12_in_simplex(params) -> bool:
    """Interior fixed point lies in the simplex iff beta1 < beta2 < (1 + gamma) beta1 - gamma."""
    b1, b2, g = params.beta1, params.beta2, params.gamma
    return b1 < b2 < (1 + g) * b1 - g


@dataclass
class FixedPoint:
    name: str
    u: DensityPair | None
    in_simplex: bool = False
    eigenvalues: np.ndarray | None = None
    stability: str = "undefined"
    residual: float = math.nan        # max |rhs| at the exact (rational) fixed point
    residual_float: float = math.nan  # max |rhs| evaluated in float64 at the rounded point
    exact: DensityPair | None = None


@dataclass
class FixedPointReport:
    params: object
    points: dict = field(default_factory=dict)
    B0: bool = False
    B1: bool = False
    B2: bool = False
    marginal: bool = False
    predicted: str = "marginal"
    det_p12: float = math.nan          # from the numerical Jacobian at p12
    det_p12_formula: float = math.nan  # -u1 ((1 + gamma) beta1 - gamma - beta2)

    def __getitem__(self, name) -> FixedPoint:
        return self.points[name]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point", "u1", "u2", "in_simplex", "eig1", "eig2", "stability", "residual",
                        "residual_float"])
            for fp in self.points.values():
                if fp.u is None:
                    w.writerow([fp.name, "", "", False, "", "", "undefined", "", ""])
                    continue
                ev = np.sort_complex(fp.eigenvalues.astype(complex))
                w.writerow([fp.name, repr(float(fp.u.u1)), repr(float(fp.u.u2)), fp.in_simplex,
                            _fmt_eig(ev[0]), _fmt_eig(ev[1]), fp.stability, repr(float(fp.residual)),
                            repr(float(fp.residual_float))])
            w.writerow([])
            w.writerow(["B0", "B1", "B2", "marginal", "predicted", "det_p12"])
            w.writerow([self.B0, self.B1, self.B2, self.marginal, self.predicted,
                        repr(float(self.det_p12_formula))])


def _fmt_eig(z: complex) -> str:
    return repr(float(z.real)) if z.imag == 0 else f"{z.real!r}{z.imag:+.17g}j"


def _stability(ev: np.ndarray, tol: float = MARGINAL_TOL) -> str:
    re = np.real(ev)
    if np.any(np.abs(re) <= tol):
        return "marginal"
    if np.all(re < 0):
        return "stable"
    if np.all(re > 0):
        return "unstable"
    return "saddle"


def regions(params, tol: float = MARGINAL_TOL) -> dict:
    b1, b2, g = params.beta1, params.beta2, params.gamma
    edge = (1 + g) * b1 - g
    return {
        "B0": b1 < 1 and b2 < 1,
        "B1": b1 > 1 and b2 < edge,
        "B2": b2 > 1 and b2 > b1,
        "marginal": min(abs(b1 - 1), abs(b2 - 1), abs(b2 - edge), abs(b2 - b1)) <= tol,
    }


def predicted_limit(reg: dict) -> str:
    if reg["marginal"]:
        return "marginal"
    if reg["B0"]:
        return "p0"
    if reg["B1"] and reg["B2"]:
        return "bistable"
    if reg["B1"]:
        return "p1"
    if reg["B2"]:
        return "p2"
    return "unclassified"


def fixed_points(params, exact: bool = True) -> FixedPointReport:
    """The four fixed points, located in exact rational arithmetic and rounded.

    Far outside the simplex (|p12| ~ 1e5 for tiny beta1 or gamma) the rounded
    point cannot have a float64 residual near zero, so both residuals are kept.
    With ``exact=False`` the closed forms are evaluated in floats and
    ``residual`` is the float64 one.
    """
    b1, b2 = params.beta1, params.beta2
    if exact:
        rational = (mpq(b1), mpq(b2), mpq(params.gamma))
        located = _exact_points(*rational)
    else:
        located = {"p0": DensityPair(0.0, 0.0),
                   "p1": DensityPair(1.0 - 1.0 / b1, 0.0) if b1 > 0 else None,
                   "p2": DensityPair(0.0, 1.0 - 1.0 / b2) if b2 > 0 else None,
                   "p12": p12_coordinates(params)}
    report = FixedPointReport(params=params)
    for name, ex in located.items():
        if ex is None:
            report.points[name] = FixedPoint(name, None)
            continue
        u = DensityPair(float(ex.u1), float(ex.u2))
        ev = np.linalg.eigvals(jacobian(u, params))
        inside = p12_in_simplex(params) if name == "p12" else u.in_simplex()
        res_float = float(np.max(np.abs(rhs(u, params))))
        res = float(_exact_residual(ex, *rational)) if exact else res_float
        report.points[name] = FixedPoint(
            name, u, in_simplex=inside, eigenvalues=ev, stability=_stability(ev),
            residual=res, residual_float=res_float, exact=ex if exact else None)
    pts = {k: v.u for k, v in report.points.items()}
    reg = regions(params)
    report.B0, report.B1, report.B2, report.marginal = reg["B0"], reg["B1"], reg["B2"], reg["marginal"]
    report.predicted = predicted_limit(reg)
    p12 = pts["p12"]
    if p12 is not None:
        report.det_p12 = float(np.linalg.det(jacobian(p12, params)))
        g = params.gamma
        report.det_p12_formula = -p12.u1 * ((1 + g) * b1 - g - b2)
    return report


def classify(params) -> FixedPointReport:
    """Fixed points with stability labels, region flags and the predicted limit."""
    return fixed_points(params)


def dulac_divergence(u, params) -> float:
    """Divergence of (F1, F2) / (u1 u2) in the open simplex: -beta1/u2 - beta2/u1."""
    u1, u2 = u
    if u1 <= 0 or u2 <= 0:
        raise ConfigError(f"Dulac divergence needs u1, u2 > 0, got {u}")
    return -params.beta1 / u2 - params.beta2 / u1


def dulac_divergence_fd(u, params, h: float = 1e-5) -> float:
    """Central-difference divergence of (phi F1, phi F2) with phi = 1 / (u1 u2)."""
    u1, u2 = u

    def g(a, b):
        return rhs((a, b), params) / (a * b)

    return float((g(u1 + h, u2)[0] - g(u1 - h, u2)[0]) / (2 * h)
                 + (g(u1, u2 + h)[1] - g(u1, u2 - h)[1]) / (2 * h))


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray            # (n, 2)
    terminal: DensityPair
    nearest: str
    distance: float
    speed: float
    converged: bool
    max_simplex_excess: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u1", "u2"])
            for t, (a, b) in zip(self.t, self.u):
                w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])


def _simplex_excess(u: np.ndarray) -> float:
    return float(max(0.0, -u[:, 0].min(), -u[:, 1].min(), (u[:, 0] + u[:, 1] - 1).max()))


def _nearest(u, report: FixedPointReport):
    best, dist = "none", math.inf
    for name, fp in report.points.items():
        if fp.u is None:
            continue
        d = math.hypot(u[0] - fp.u.u1, u[1] - fp.u.u2)
        if d < dist:
            best, dist = name, d
    return best, dist


def integrate(u0, params, T: float, n_samples: int = 501, rtol: float = RTOL,
              atol: float = ATOL) -> Trajectory:
    """Adaptive Dormand-Prince (order 8) integration on [0, T]."""
    u0 = DensityPair(*u0)
    if not u0.in_simplex():
        raise ConfigError(f"initial densities must lie in the simplex, got {u0}")
    sol = solve_ivp(lambda t, y: rhs(y, params), (0.0, T), np.array(u0, dtype=float),
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    ts = np.linspace(0.0, T, n_samples)
    us = sol.sol(ts).T
    us[-1] = sol.y[:, -1]
    report = fixed_points(params)
    end = DensityPair(*sol.y[:, -1])
    name, dist = _nearest(end, report)
    speed = float(np.max(np.abs(rhs(end, params))))
    return Trajectory(ts, us, end, name, dist, speed,
                      dist < CONVERGE_DIST and speed < CONVERGE_SPEED,
                      _simplex_excess(sol.y.T))


# Dormand-Prince 5(4) coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@njit(cache=True)
def _f(u1, u2, b1, b2, g):
    free = 1.0 - u1 - u2
    return b1 * u1 * free - u1, b2 * u2 * free - (1.0 + g * u1) * u2


@njit(cache=True)
def _dopri_to_fixed_point(u1, u2, b1, b2, g, fps, t_max, rtol, atol, dist_tol, speed_tol,
                          A, B5, B4):
    """Integrate until within dist_tol of a row of ``fps`` with speed below speed_tol.

    Returns (index of the fixed point or -1, time, final u1, final u2, ok flag).
    """
    k1 = np.empty(7)
    k2 = np.empty(7)
    t = 0.0
    h = 1e-3
    for _ in range(10_000_000):
        f1, f2 = _f(u1, u2, b1, b2, g)
        if abs(f1) < speed_tol and abs(f2) < speed_tol:
            for j in range(fps.shape[0]):
                if math.hypot(u1 - fps[j, 0], u2 - fps[j, 1]) < dist_tol:
                    return j, t, u1, u2, True
        if t >= t_max:
            return -1, t, u1, u2, True
        if t + h > t_max:
            h = t_max - t
        k1[0], k2[0] = f1, f2
        for s in range(1, 7):
            a1 = u1
            a2 = u2
            for r in range(s):
                a1 += h * A[s, r] * k1[r]
                a2 += h * A[s, r] * k2[r]
            k1[s], k2[s] = _f(a1, a2, b1, b2, g)
        n1 = u1
        n2 = u2
        e1 = 0.0
        e2 = 0.0
        for s in range(7):
            n1 += h * B5[s] * k1[s]
            n2 += h * B5[s] * k2[s]
            e1 += h * (B5[s] - B4[s]) * k1[s]
            e2 += h * (B5[s] - B4[s]) * k2[s]
        sc1 = atol + rtol * max(abs(u1), abs(n1))
        sc2 = atol + rtol * max(abs(u2), abs(n2))
        err = math.sqrt(0.5 * ((e1 / sc1) ** 2 + (e2 / sc2) ** 2))
        if err <= 1.0:
            t += h
            u1, u2 = n1, n2
            fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
        if h < 1e-14:
            return -1, t, u1, u2, False
    return -1, t, u1, u2, False


def _fp_table(params):
    report = fixed_points(params)
    names = [n for n, fp in report.points.items() if fp.u is not None]
    return names, np.array([tuple(report.points[n].u) for n in names], dtype=float)


def converge(u0, params, t_max: float = 2000.0, rtol: float = RTOL, atol: float = ATOL,
             table=None):
    """(label, time) of the fixed point reached from u0; label 'undecided' if none by t_max."""
    names, fps = _fp_table(params) if table is None else table
    j, t, _, _, ok = _dopri_to_fixed_point(float(u0[0]), float(u0[1]), params.beta1, params.beta2,
                                           params.gamma, fps, t_max, rtol, atol, CONVERGE_DIST,
                                           CONVERGE_SPEED, _A, _B5, _B4)
    if not ok:
        return "step-failure", t
    return (names[j] if j >= 0 else "undecided"), t


@dataclass
class BasinMap:
    params: object
    n: int
    u1: np.ndarray
    u2: np.ndarray
    labels: list
    t_converge: np.ndarray

    def interior(self) -> np.ndarray:
        return (self.u1 > 0) & (self.u2 > 0)

    def area_fraction(self, label: str) -> float:
        """Fraction of interior grid points (axes excluded) whose limit is ``label``."""
        mask = self.interior()
        lab = np.array(self.labels)
        return float(np.count_nonzero(lab[mask] == label) / max(1, mask.sum()))

    def summary(self) -> dict:
        lab = np.array(self.labels)[self.interior()]
        names, counts = np.unique(lab, return_counts=True)
        return {str(k): float(v) / lab.size for k, v in zip(names, counts)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u1", "u2", "label", "t_converge"])
            for a, b, lab, t in zip(self.u1, self.u2, self.labels, self.t_converge):
                w.writerow([repr(float(a)), repr(float(b)), lab, repr(float(t))])


def _basin_block(args):
    params, u1, u2, t_max = args
    table = _fp_table(params)
    out = [converge((a, b), params, t_max, table=table) for a, b in zip(u1, u2)]
    return [lab for lab, _ in out], [t for _, t in out]


def basin_map(params, n: int = 200, t_max: float = 2000.0, workers: int = 1) -> BasinMap:
    """Limit label for every grid point (i/n, j/n) with i + j <= n; cells are split across workers."""
    if n < 1:
        raise ConfigError("grid resolution must be >= 1")
    from .parallel import pmap
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = ii + jj <= n
    u1 = ii[keep] / n
    u2 = jj[keep] / n
    params = Rates(params.beta1, params.beta2, params.gamma)
    blocks = np.array_split(np.arange(u1.size), max(1, min(u1.size, 64)))
    parts = pmap(_basin_block, [(params, u1[b], u2[b], t_max) for b in blocks], workers)
    labels = [lab for part in parts for lab in part[0]]
    times = np.array([t for part in parts for t in part[1]])
    return BasinMap(params, n, u1, u2, labels, times)

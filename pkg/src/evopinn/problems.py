"""Benchmark PDE problems with exact solutions.

Each problem defines residual/boundary/initial operators over an abstract
differentiable field (a network or the analytic solution), a deterministic
uniform sampler reproducing the configured point counts exactly, the
penalized mean-square loss, and relative L2 evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import sympy as sp

from .autonet import FieldJet, normalize_key

TAU = 2.0 * math.pi


@dataclass(frozen=True)
class PointSet:
    name: str
    points: np.ndarray  # treated as immutable once constructed
    aux: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class SampleSet:
    collocation: PointSet
    boundary: Tuple[PointSet, ...]
    initial: Tuple[PointSet, ...]
    test: PointSet


class PdeProblem:
    """Shared machinery; concrete problems fill in operators and samplers."""

    name = ""
    coords: Tuple[str, ...] = ()
    components: Tuple[str, ...] = ()
    lambda_b = 0.0
    lambda_0 = 0.0

    def __init__(self, case):
        if case not in self.cases:
            raise ValueError(f"{self.name} has cases {sorted(self.cases)}, not {case!r}")
        self.case = case
        self._lambdas = {}

    @property
    def key(self):
        return f"{self.name}:{self.case}"

    def coord_symbols(self):
        return sp.symbols(" ".join(self.coords), real=True)

    def exact_exprs(self):
        raise NotImplementedError

    def exact_lambda(self, spec_key):
        """Vectorized exact solution or any of its derivatives ("u", "u_xt", ...)."""
        key = normalize_key(spec_key, self.coords)
        if key not in self._lambdas:
            comp, _, deriv = key.partition("_")
            expr = self.exact_exprs()[comp]
            syms = self.coord_symbols()
            for c in deriv:
                expr = sp.diff(expr, syms[self.coords.index(c)])
            fn = sp.lambdify(syms, expr, modules="numpy")
            self._lambdas[key] = fn
        return self._lambdas[key]

    def exact_at(self, spec_key, points):
        cols = [points[:, i] for i in range(points.shape[1])]
        with np.errstate(all="ignore"):
            out = self.exact_lambda(spec_key)(*cols)
        out = np.asarray(out, dtype=float)
        if out.ndim == 0:
            out = np.full(points.shape[0], float(out))
        return out

    # operator hooks -------------------------------------------------------
    residual_keys: Tuple[str, ...] = ()

    def residual(self, jet, aux):
        raise NotImplementedError

    def boundary_keys(self, name):
        raise NotImplementedError

    def boundary_ops(self, name, jet, aux):
        raise NotImplementedError

    def initial_keys(self, name):
        raise NotImplementedError

    def initial_ops(self, name, jet, aux):
        raise NotImplementedError

    def sample(self) -> SampleSet:
        raise NotImplementedError

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------


def _grid(xs, ts):
    """Cartesian product, x-major then t: rows are (x_i, t_j)."""
    X, T = np.meshgrid(xs, ts, indexing="ij")
    return np.column_stack([X.ravel(), T.ravel()])


class KleinGordon(PdeProblem):
    """u_tt + alpha u_xx + beta u + gamma u^3 = f on [0,1] x (0,1]."""

    name = "klein_gordon"
    cases = {"I": (5, 1.0), "II": (4, 1.0), "III": (6, 1.2)}
    coords = ("x", "t")
    components = ("u",)
    alpha, beta, gamma = -1.0, 0.0, 1.0
    lambda_b = 100.0
    lambda_0 = 100.0
    counts = {"initial": 81, "boundary": 162, "collocation": 3600, "test": 10201}

    def exact_exprs(self):
        x, t = self.coord_symbols()
        freq, cubic = self.cases[self.case]
        return {"u": x * sp.cos(freq * sp.pi * t) + cubic * (x * t) ** 3}

    def source_lambda(self):
        x, t = self.coord_symbols()
        u = self.exact_exprs()["u"]
        f = (sp.diff(u, t, 2) + self.alpha * sp.diff(u, x, 2)
             + self.beta * u + self.gamma * u**3)
        return sp.lambdify((x, t), f, modules="numpy")

    residual_keys = ("u", "u_xx", "u_tt")

    def residual(self, jet, aux):
        u = jet["u"]
        return [jet["u_tt"] + self.alpha * jet["u_xx"] + self.beta * u
                + self.gamma * u * u * u - aux["f"]]

    def boundary_keys(self, name):
        return ("u",)

    def boundary_ops(self, name, jet, aux):
        return [jet["u"] - aux["h"]]

    def initial_keys(self, name):
        return ("u", "u_t")

    def initial_ops(self, name, jet, aux):
        return [jet["u"] - aux["g1"], jet["u_t"] - aux["g2"]]

    def sample(self) -> SampleSet:
        n0 = self.counts["initial"]
        x0 = np.linspace(0.0, 1.0, n0)
        initial_pts = np.column_stack([x0, np.zeros(n0)])
        initial = PointSet("initial", initial_pts, {
            "g1": self.exact_at("u", initial_pts),
            "g2": self.exact_at("u_t", initial_pts),
        })

        tb = np.linspace(0.0, 1.0, n0)
        bpts = np.vstack([
            np.column_stack([np.zeros(n0), tb]),
            np.column_stack([np.ones(n0), tb]),
        ])
        boundary = PointSet("dirichlet", bpts, {"h": self.exact_at("u", bpts)})

        m = 60
        xc = (np.arange(m) + 0.5) / m
        tc = (np.arange(m) + 1.0) / m
        cpts = _grid(xc, tc)
        f = self.source_lambda()
        with np.errstate(all="ignore"):
            fvals = np.asarray(f(cpts[:, 0], cpts[:, 1]), dtype=float)
        collocation = PointSet("collocation", cpts, {"f": fvals})

        xt = np.linspace(0.0, 1.0, 101)
        tt = np.linspace(0.0, 1.0, 101)
        tpts = _grid(xt, tt)
        test = PointSet("test", tpts, {"exact_u": self.exact_at("u", tpts)})
        return SampleSet(collocation, (boundary,), (initial,), test)

    def contains(self, points):
        x, t = points[:, 0], points[:, 1]
        return (x >= 0) & (x <= 1) & (t >= 0) & (t <= 1)


# ---------------------------------------------------------------------------


class Burgers(PdeProblem):
    """u_t + u(u_x + u_y) = alpha (u_xx + u_yy) on an L-shaped domain, t in (0,2]."""

    name = "burgers"
    cases = {"I": 0.1, "II": 0.15, "III": 0.05}
    coords = ("x", "y", "t")
    components = ("u",)
    lambda_b = 100.0
    lambda_0 = 100.0
    counts = {"initial": 721, "boundary": 3720, "collocation": 6000, "test": 100776}
    t_final = 2.0

    @property
    def alpha(self):
        return self.cases[self.case]

    def exact_exprs(self):
        x, y, t = self.coord_symbols()
        return {"u": 1 / (1 + sp.exp((0.5 / self.alpha) * (x + y - t)))}

    residual_keys = ("u", "u_t", "u_x", "u_y", "u_xx", "u_yy")

    def residual(self, jet, aux):
        u = jet["u"]
        return [jet["u_t"] + u * (jet["u_x"] + jet["u_y"])
                - self.alpha * (jet["u_xx"] + jet["u_yy"])]

    def boundary_keys(self, name):
        return ("u",)

    def boundary_ops(self, name, jet, aux):
        return [jet["u"] - aux["h"]]

    def initial_keys(self, name):
        return ("u",)

    def initial_ops(self, name, jet, aux):
        return [jet["u"] - aux["g"]]

    # the spatial domain is [0,1]^2 minus the open-left block [0,0.5) x (0.5,1]
    @staticmethod
    def in_domain(x, y):
        return (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1) & ((x >= 0.5) | (y <= 0.5))

    _PERIMETER = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.5, 1.0), (0.5, 0.5), (0.0, 0.5))

    @classmethod
    def _perimeter_nodes(cls, h=1.0 / 30.0):
        pts = []
        corners = cls._PERIMETER
        for (x0, y0), (x1, y1) in zip(corners, corners[1:] + corners[:1]):
            length = abs(x1 - x0) + abs(y1 - y0)
            steps = round(length / h)
            for s in range(steps):  # segment start included, end belongs to next
                f = s / steps
                pts.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
        return np.array(pts)

    def sample(self) -> SampleSet:
        # initial: 31x31 lattice; the re-entrant edge (y = 0.5, x < 0.5) is left
        # to the boundary set, which keeps the count at the configured 721
        g = np.linspace(0.0, 1.0, 31)
        xx, yy = np.meshgrid(g, g, indexing="ij")
        keep = (xx >= 0.5) | (yy < 0.5)
        init_xy = np.column_stack([xx[keep], yy[keep]])
        initial_pts = np.column_stack([init_xy, np.zeros(len(init_xy))])
        initial = PointSet("initial", initial_pts, {"g": self.exact_at("u", initial_pts)})

        nodes = self._perimeter_nodes()
        times = np.linspace(0.0, self.t_final, 31)
        bpts = np.column_stack([
            np.tile(nodes, (len(times), 1)),
            np.repeat(times, len(nodes)),
        ])
        boundary = PointSet("dirichlet", bpts, {"h": self.exact_at("u", bpts)})

        m = 20
        c = (np.arange(m) + 0.5) / m
        cx, cy = np.meshgrid(c, c, indexing="ij")
        ckeep = (cx > 0.5) | (cy < 0.5)
        cxy = np.column_stack([cx[ckeep], cy[ckeep]])
        ct = self.t_final * (np.arange(m) + 1.0) / m
        cpts = np.column_stack([np.tile(cxy, (m, 1)), np.repeat(ct, len(cxy))])
        collocation = PointSet("collocation", cpts, {})

        gt = np.linspace(0.0, 1.0, 51)
        tx, ty = np.meshgrid(gt, gt, indexing="ij")
        tkeep = (tx >= 0.5) | (ty <= 0.5)
        txy = np.column_stack([tx[tkeep], ty[tkeep]])
        tt = np.linspace(0.0, self.t_final, 51)
        tpts = np.column_stack([np.tile(txy, (len(tt), 1)), np.repeat(tt, len(txy))])
        test = PointSet("test", tpts, {"exact_u": self.exact_at("u", tpts)})
        return SampleSet(collocation, (boundary,), (initial,), test)

    def contains(self, points):
        x, y, t = points[:, 0], points[:, 1], points[:, 2]
        return self.in_domain(x, y) & (t >= 0) & (t <= self.t_final)


# ---------------------------------------------------------------------------


def _apportion(total, weights):
    """Largest-remainder split of `total` proportional to weights; exact."""
    q = total * weights / weights.sum()
    base = np.floor(q).astype(int)
    short = total - int(base.sum())
    order = np.argsort(-(q - base), kind="stable")
    base[order[:short]] += 1
    return base


def _ring_points(radii, counts):
    pts = []
    for r, k in zip(radii, counts):
        if k <= 0:
            continue
        ang = TAU * np.arange(k) / k
        pts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    return np.vstack(pts)


class Lame(PdeProblem):
    """Plane-strain equilibrium on an annulus: clamped inner rim, traction outer rim."""

    name = "lame"
    # case -> (E, mu, q1, q2, a, b)
    cases = {
        "I": (2.1, 0.25, 23.0, 3.0, 1.0, 2.0),
        "II": (2.1, 0.25, 30.0, 2.0, 1.0, 2.0),
        "III": (3.0, 0.3, 23.0, 3.0, 1.0, 2.0),
        "IV": (2.1, 0.25, 23.0, 3.0, 1.2, 1.8),
        "V": (2.1, 0.25, 23.0, 3.0, 0.8, 2.2),
    }
    point_counts = {
        "I": (200, 400, 5740, 23276),
        "II": (200, 400, 5740, 23276),
        "III": (200, 400, 5740, 23276),
        "IV": (200, 300, 4232, 17268),
        "V": (200, 550, 6648, 26944),
    }
    coords = ("x", "y")
    components = ("u", "v")
    lambda_b = 10.0
    lambda_0 = 0.0

    def __init__(self, case):
        super().__init__(case)
        self.E, self.mu, self.q1, self.q2, self.a, self.b = self.cases[case]
        inner, outer, interior, test = self.point_counts[case]
        self.counts = {"inner": inner, "outer": outer,
                       "boundary": inner + outer,
                       "collocation": interior, "test": test}

    @property
    def factor(self):
        return self.E / (1.0 - self.mu**2)

    def displacement_coeffs(self):
        E, mu, q1, q2, a, b = self.E, self.mu, self.q1, self.q2, self.a, self.b
        A = (q1 * (1 - mu**2) * b**2) / (E * (b**2 * (1 + mu) + a**2 * (1 - mu)))
        B = (q2 * (1 + mu) * b**2) / (E * a**2)
        return A, B

    def exact_exprs(self):
        x, y = self.coord_symbols()
        A, B = self.displacement_coeffs()
        shrink = self.a**2 / (x**2 + y**2) - 1
        return {"u": A * shrink * x - B * shrink * y,
                "v": A * shrink * y + B * shrink * x}

    residual_keys = ("u_xx", "u_yy", "u_xy", "v_xx", "v_yy", "v_xy")

    def residual(self, jet, aux):
        c = self.factor
        half_minus = (1.0 - self.mu) / 2.0
        half_plus = (1.0 + self.mu) / 2.0
        return [
            c * (jet["u_xx"] + half_minus * jet["u_yy"] + half_plus * jet["v_xy"]),
            c * (jet["v_yy"] + half_minus * jet["v_xx"] + half_plus * jet["u_xy"]),
        ]

    def boundary_keys(self, name):
        if name == "inner":
            return ("u", "v")
        return ("u_x", "u_y", "v_x", "v_y")

    def boundary_ops(self, name, jet, aux):
        if name == "inner":
            return [jet["u"], jet["v"]]
        c = self.factor
        mu = self.mu
        half = (1.0 - mu) / 2.0
        n1, n2 = aux["n1"], aux["n2"]
        t1 = c * (n1 * (jet["u_x"] + mu * jet["v_y"]) + n2 * half * (jet["u_y"] + jet["v_x"]))
        t2 = c * (n2 * (jet["v_y"] + mu * jet["u_x"]) + n1 * half * (jet["v_x"] + jet["u_y"]))
        return [t1 - aux["h1"], t2 - aux["h2"]]

    def initial_keys(self, name):  # stationary problem
        return ()

    def initial_ops(self, name, jet, aux):
        return []

    def _circle(self, radius, count):
        ang = TAU * np.arange(count) / count
        return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])

    def sample(self) -> SampleSet:
        n_inner, n_outer, n_interior, n_test = self.point_counts[self.case]
        a, b = self.a, self.b

        inner = PointSet("inner", self._circle(a, n_inner), {})
        opts = self._circle(b, n_outer)
        n1, n2 = opts[:, 0] / b, opts[:, 1] / b
        outer = PointSet("outer", opts, {
            "n1": n1, "n2": n2,
            "h1": -self.q1 * n1 + self.q2 * n2,
            "h2": -self.q1 * n2 - self.q2 * n1,
        })

        dr = b - a
        nr = max(1, round(math.sqrt(n_interior * dr / (math.pi * (a + b)))))
        radii = a + (np.arange(nr) + 0.5) * dr / nr
        counts = _apportion(n_interior, radii)
        collocation = PointSet("collocation", _ring_points(radii, counts), {})

        nrt = max(2, round(math.sqrt(n_test * dr / (math.pi * (a + b)))))
        tradii = np.linspace(a, b, nrt)
        tcounts = _apportion(n_test, tradii)
        tpts = _ring_points(tradii, tcounts)
        test = PointSet("test", tpts, {
            "exact_u": self.exact_at("u", tpts),
            "exact_v": self.exact_at("v", tpts),
        })
        return SampleSet(collocation, (inner, outer), (), test)

    def contains(self, points):
        r = np.hypot(points[:, 0], points[:, 1])
        return (r >= self.a - 1e-12) & (r <= self.b + 1e-12)


# ---------------------------------------------------------------------------

PROBLEMS = {"klein_gordon": KleinGordon, "burgers": Burgers, "lame": Lame}


def make_problem(spec: str) -> PdeProblem:
    """Problem selection by name and case, e.g. "klein_gordon:I" or "lame:IV"."""
    name, sep, case = spec.partition(":")
    if not sep or name not in PROBLEMS:
        known = ", ".join(f"{n}:{c}" for n in PROBLEMS for c in PROBLEMS[n].cases)
        raise ValueError(f"unknown problem {spec!r}; expected one of {known}")
    return PROBLEMS[name](case)


_SAMPLES = {}


def samples_for(problem: PdeProblem) -> SampleSet:
    """Deterministic sample set, cached per problem name and case."""
    key = problem.key
    if key not in _SAMPLES:
        _SAMPLES[key] = problem.sample()
    return _SAMPLES[key]


class AnalyticField:
    """The exact solution exposed as a differentiable field (numpy backend)."""

    def __init__(self, problem: PdeProblem):
        self.problem = problem
        self.coords = problem.coords
        self.components = problem.components

    def jet(self, points, want) -> FieldJet:
        entries = {}
        for key in want:
            nkey = normalize_key(key, self.coords)
            entries[nkey] = self.problem.exact_at(nkey, points)
        return FieldJet(entries, self.coords)

    def adapt(self, array):
        return array

    def values(self, points) -> np.ndarray:
        return np.column_stack([self.problem.exact_at(c, points) for c in self.components])


# ---------------------------------------------------------------------------


def _mean_square(values):
    return (values * values).mean()


def loss(problem: PdeProblem, fld, samples: SampleSet):
    """Total and per-term losses: total = L_r + lambda_b L_b + lambda_0 L_0.

    Each operator family contributes the mean of its squared values over its
    point set. Returns backend scalars (torch for networks, numpy otherwise).
    """
    colloc = samples.collocation
    jet = fld.jet(colloc.points, problem.residual_keys)
    aux = {k: fld.adapt(v) for k, v in colloc.aux.items()}
    l_r = sum(_mean_square(r) for r in problem.residual(jet, aux))

    l_b = 0.0
    for ps in samples.boundary:
        jet = fld.jet(ps.points, problem.boundary_keys(ps.name))
        aux = {k: fld.adapt(v) for k, v in ps.aux.items()}
        for op in problem.boundary_ops(ps.name, jet, aux):
            l_b = l_b + _mean_square(op)

    l_0 = 0.0
    for ps in samples.initial:
        jet = fld.jet(ps.points, problem.initial_keys(ps.name))
        aux = {k: fld.adapt(v) for k, v in ps.aux.items()}
        for op in problem.initial_ops(ps.name, jet, aux):
            l_0 = l_0 + _mean_square(op)

    total = l_r + problem.lambda_b * l_b + problem.lambda_0 * l_0
    return total, l_r, l_b, l_0


def relative_l2_error(fld, problem: PdeProblem, samples: SampleSet) -> Dict[str, float]:
    """Per-component ||field - exact||_2 / ||exact||_2 over the test grid."""
    test = samples.test
    pred = fld.values(test.points)
    out = {}
    for i, comp in enumerate(problem.components):
        exact = test.aux[f"exact_{comp}"]
        denom = float(np.linalg.norm(exact))
        if denom == 0.0:
            raise ValueError(f"exact solution has zero L2 norm for component {comp!r}")
        out[comp] = float(np.linalg.norm(pred[:, i] - exact) / denom)
    return out

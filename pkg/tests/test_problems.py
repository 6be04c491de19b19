import math

import numpy as np
import pytest

from evopinn import autonet as an
from evopinn import exprtree as et
from evopinn import genome as gn
from evopinn import problems as pb

ALL_CASES = ["klein_gordon:I", "klein_gordon:II", "klein_gordon:III",
             "burgers:I", "burgers:II", "burgers:III",
             "lame:I", "lame:II", "lame:III", "lame:IV", "lame:V"]


class ZeroField:
    """Field that is identically zero (all derivatives too)."""

    def __init__(self, problem):
        self.problem = problem
        self.coords = problem.coords

    def jet(self, points, want):
        zero = np.zeros(len(points))
        entries = {an.normalize_key(k, self.coords): zero for k in want}
        return an.FieldJet(entries, self.coords)

    def adapt(self, array):
        return array

    def values(self, points):
        return np.zeros((len(points), len(self.problem.components)))


class TestFactory:
    def test_selection_by_name_and_case(self):
        assert pb.make_problem("klein_gordon:I").key == "klein_gordon:I"
        assert pb.make_problem("lame:IV").case == "IV"

    def test_unknown_spec_rejected(self):
        with pytest.raises(ValueError):
            pb.make_problem("heat:I")
        with pytest.raises(ValueError):
            pb.make_problem("klein_gordon:IX")


class TestSamplers:
    @pytest.mark.parametrize("spec", ALL_CASES)
    def test_counts_membership_determinism(self, spec):
        p = pb.make_problem(spec)
        s = p.sample()
        assert len(s.collocation) == p.counts["collocation"]
        assert sum(len(ps) for ps in s.boundary) == p.counts["boundary"]
        assert sum(len(ps) for ps in s.initial) == p.counts.get("initial", 0)
        assert len(s.test) == p.counts["test"]
        assert p.contains(s.collocation.points).all()
        assert p.contains(s.test.points).all()
        again = p.sample()
        assert np.array_equal(s.collocation.points, again.collocation.points)
        assert np.array_equal(s.test.points, again.test.points)

    def test_klein_gordon_grids(self):
        s = pb.make_problem("klein_gordon:I").sample()
        init = s.initial[0].points
        assert np.array_equal(init[:, 0], np.linspace(0, 1, 81))
        assert np.all(init[:, 1] == 0.0)
        assert len(s.test) == 101 * 101

    def test_burgers_excluded_block(self):
        p = pb.make_problem("burgers:I")
        assert not p.in_domain(np.array([0.25]), np.array([0.75]))[0]
        s = p.sample()
        xy = s.collocation.points[:, :2]
        assert p.in_domain(xy[:, 0], xy[:, 1]).all()

    def test_lame_radial_membership(self):
        p = pb.make_problem("lame:V")
        s = p.sample()
        r = np.hypot(s.collocation.points[:, 0], s.collocation.points[:, 1])
        assert np.all((r >= p.a) & (r <= p.b))


class TestSpotValues:
    def test_klein_gordon_source_at_corner(self):
        p = pb.make_problem("klein_gordon:I")
        assert p.source_lambda()(1.0, 0.0) == pytest.approx(1 - 25 * math.pi**2, rel=1e-14)

    def test_klein_gordon_initial_profile(self):
        p = pb.make_problem("klein_gordon:I")
        pts = np.column_stack([np.linspace(0, 1, 11), np.zeros(11)])
        assert p.exact_at("u", pts) == pytest.approx(pts[:, 0])
        assert p.exact_at("u_t", pts) == pytest.approx(np.zeros(11))

    def test_burgers_wave_midpoint(self):
        p = pb.make_problem("burgers:I")
        assert p.exact_at("u", np.array([[0.0, 0.0, 0.0]]))[0] == 0.5

    def test_lame_coefficients(self):
        A, B = pb.make_problem("lame:I").displacement_coeffs()
        assert A == pytest.approx(50 / 7, rel=1e-14)
        assert B == pytest.approx(50 / 7, rel=1e-14)

    def test_lame_clamped_inner_rim(self):
        p = pb.make_problem("lame:I")
        ang = np.linspace(0, 2 * math.pi, 17)
        pts = np.column_stack([p.a * np.cos(ang), p.a * np.sin(ang)])
        assert np.abs(p.exact_at("u", pts)).max() < 1e-14
        assert np.abs(p.exact_at("v", pts)).max() < 1e-14


class TestExactResiduals:
    @pytest.mark.parametrize("spec", ["klein_gordon:I", "burgers:I", "lame:I"])
    def test_pointwise_residual_of_exact_solution(self, spec):
        p = pb.make_problem(spec)
        s = pb.samples_for(p)
        fld = pb.AnalyticField(p)
        idx = np.random.default_rng(0).choice(len(s.collocation), 100, replace=False)
        pts = s.collocation.points[idx]
        jet = fld.jet(pts, p.residual_keys)
        aux = {k: v[idx] for k, v in s.collocation.aux.items()}
        for r in p.residual(jet, aux):
            assert np.abs(r).max() < 1e-10


class TestLoss:
    def test_certification_exact_field(self):
        for spec in ("klein_gordon:I", "burgers:II", "lame:III"):
            p = pb.make_problem(spec)
            s = pb.samples_for(p)
            total, l_r, l_b, l_0 = pb.loss(p, pb.AnalyticField(p), s)
            assert float(total) < 1e-20
            errs = pb.relative_l2_error(pb.AnalyticField(p), p, s)
            assert all(v == 0.0 for v in errs.values())

    def test_decomposition_identity(self):
        p = pb.make_problem("klein_gordon:I")
        s = pb.samples_for(p)
        g = gn.Genome(gn.StructureGene(3, 20, ()), et.parse("tanh(x)"), id="d")
        net = an.build(g, 2, 1)
        theta = an.init_params(net, np.random.default_rng(0))
        fld = an.NetworkField(net, theta, p.coords, p.components)
        total, l_r, l_b, l_0 = pb.loss(p, fld, s)
        assert float(total) == float(l_r + p.lambda_b * l_b + p.lambda_0 * l_0)

    def test_zero_field_initial_term_matches_brute_force(self):
        p = pb.make_problem("klein_gordon:I")
        s = pb.samples_for(p)
        _, _, _, l_0 = pb.loss(p, ZeroField(p), s)
        init = s.initial[0]
        expected = float((init.aux["g1"] ** 2).mean() + (init.aux["g2"] ** 2).mean())
        assert float(l_0) == pytest.approx(expected, rel=1e-15)

    def test_zero_penalty_removes_boundary_sensitivity(self):
        p = pb.make_problem("klein_gordon:I")
        p.lambda_b = 0.0  # instance override of the class default
        s = p.sample()
        total, l_r, l_b, l_0 = pb.loss(p, ZeroField(p), s)
        assert float(total) == float(l_r + p.lambda_0 * l_0)


class TestRelativeL2:
    def test_exact_is_zero(self):
        p = pb.make_problem("lame:I")
        s = pb.samples_for(p)
        errs = pb.relative_l2_error(pb.AnalyticField(p), p, s)
        assert errs == {"u": 0.0, "v": 0.0}

    def test_homogeneity(self):
        p = pb.make_problem("klein_gordon:I")
        s = pb.samples_for(p)

        class Scaled(pb.AnalyticField):
            def values(self, points):
                return 1.01 * super().values(points)

        errs = pb.relative_l2_error(Scaled(p), p, s)
        assert errs["u"] == pytest.approx(0.01, abs=1e-12)

    def test_constant_offset(self):
        p = pb.make_problem("klein_gordon:I")
        s = pb.samples_for(p)
        c = 0.37

        class Shifted(pb.AnalyticField):
            def values(self, points):
                return super().values(points) + c

        exact = s.test.aux["exact_u"]
        expected = c * math.sqrt(len(exact)) / np.linalg.norm(exact)
        errs = pb.relative_l2_error(Shifted(p), p, s)
        assert errs["u"] == pytest.approx(expected, rel=1e-12)

    def test_zero_norm_exact_rejected(self):
        p = pb.make_problem("klein_gordon:I")
        s = pb.samples_for(p)
        doctored = pb.SampleSet(s.collocation, s.boundary, s.initial,
                                pb.PointSet("test", s.test.points,
                                            {"exact_u": np.zeros(len(s.test))}))
        with pytest.raises(ValueError):
            pb.relative_l2_error(pb.AnalyticField(p), p, doctored)


class TestNetworkFieldConsistency:
    def test_residual_on_network_matches_fd_assembly(self):
        # problem operators on a network field vs the same operators assembled
        # from finite differences of the plain forward pass
        p = pb.make_problem("klein_gordon:I")
        g = gn.Genome(gn.StructureGene(4, 20, ((0, 2),)), et.parse("sin(x)"), id="c")
        net = an.build(g, 2, 1)
        theta = an.init_params(net, np.random.default_rng(2))
        fld = an.NetworkField(net, theta, p.coords, p.components)
        pts = np.random.default_rng(3).random((8, 2))
        jet = fld.jet(pts, p.residual_keys)
        f = p.source_lambda()(pts[:, 0], pts[:, 1])
        res_engine = p.residual(jet, {"f": fld.adapt(np.asarray(f))})[0].detach().numpy()

        def u_of(q):
            return fld.values(q)[:, 0]

        h = 1e-4
        ux2 = (u_of(pts + [h, 0]) - 2 * u_of(pts) + u_of(pts - [h, 0])) / h**2
        ut2 = (u_of(pts + [0, h]) - 2 * u_of(pts) + u_of(pts - [0, h])) / h**2
        res_fd = ut2 - ux2 + u_of(pts) ** 3 - f
        assert np.all(np.abs(res_engine - res_fd) <= 1e-5 * np.maximum(np.abs(res_fd), 1.0))

import numpy as np
import pytest
import torch

from evopinn import autonet as an
from evopinn import exprtree as et
from evopinn import genome as gn


def make_genome(layers=4, width=22, shortcuts=(), activation="tanh(x)", gid="g"):
    return gn.Genome(gn.StructureGene(layers, width, tuple(shortcuts)),
                     et.parse(activation), id=gid)


class TestBuild:
    def test_plain_three_layer_shapes(self):
        net = an.build(make_genome(3, 20), 2, 1)
        assert net.layer_dims == ((2, 20), (20, 20), (20, 1))

    def test_invalid_genome_rejected(self):
        bad = gn.Genome(gn.StructureGene(2, 20, ()), et.parse("tanh(x)"))
        with pytest.raises(ValueError):
            an.build(bad, 2, 1)

    def test_unsupported_dims_rejected(self):
        with pytest.raises(ValueError):
            an.build(make_genome(), 5, 1)

    def test_projection_only_for_input_source(self):
        net = an.build(make_genome(5, 24, [(0, 2), (2, 4)]), 2, 1)
        names = [n for n, _, _ in net.layout]
        assert "P2" in names and "P4" not in names
        assert net.slot("P2")[0] == (24, 2)

    def test_param_count_is_structural(self):
        g = make_genome(4, 20, [(0, 2)], "tanh(α*x)")
        net = an.build(g, 2, 1)
        affine = (2 * 20 + 20) + (20 * 20 + 20) * 2 + (20 * 1 + 1)
        assert net.n_params == affine + 20 * 2 + 3  # projection + one act param x3 layers

    def test_baseline_model_builds(self):
        g = make_genome(9, 30, [(0, 2), (2, 4), (4, 6), (6, 8)])
        net = an.build(g, 2, 1)
        assert len(net.layer_dims) == 9


class TestInit:
    def test_kaiming_bounds_and_zero_biases(self):
        net = an.build(make_genome(4, 20), 2, 1)
        theta = an.init_params(net, np.random.default_rng(0))
        for name, shape, off in net.layout:
            size = int(np.prod(shape))
            block = theta[off:off + size]
            if name.startswith("W") or name.startswith("P"):
                bound = np.sqrt(6.0 / shape[1])
                assert np.abs(block).max() <= bound
                assert np.abs(block).max() > 0.5 * bound  # actually spread out
            elif name.startswith("b"):
                assert np.all(block == 0.0)

    def test_activation_params_from_genome(self):
        g = make_genome(4, 20, activation="tanh(α*x)")
        g = gn.Genome(g.structure, et.with_param_values(g.activation, [0.75]), id="g")
        net = an.build(g, 2, 1)
        theta = an.init_params(net, np.random.default_rng(0))
        for k in (1, 2, 3):
            shape, off = net.slot(f"act{k}")
            assert theta[off:off + 1] == pytest.approx([0.75])

    def test_same_seed_same_theta(self):
        net = an.build(make_genome(), 2, 1)
        a = an.init_params(net, np.random.default_rng(42))
        b = an.init_params(net, np.random.default_rng(42))
        assert np.array_equal(a, b)


class TestForwardJet:
    def setup_method(self):
        self.net = an.build(make_genome(4, 22, [(0, 2)], "asinh(x)*cos(x)"), 2, 1)
        self.theta = an.init_params(self.net, np.random.default_rng(3))
        self.pts = np.random.default_rng(4).random((6, 2))

    def test_forward_is_bit_deterministic(self):
        a = an.forward_jet(self.net, self.theta, self.pts, ("u",))["u"]
        b = an.forward_jet(self.net, self.theta, self.pts, ("u",))["u"]
        assert torch.equal(a, b)

    def test_identity_tree_gives_affine_network(self):
        net = an.build(make_genome(4, 20, activation="id(x)"), 2, 1)
        theta = an.init_params(net, np.random.default_rng(1))
        jet = an.forward_jet(net, theta, self.pts, ("u_xx", "u_tt", "u_xt"))
        for key in ("u_xx", "u_tt", "u_xt"):
            assert torch.all(jet[key] == 0.0)

    def test_cross_derivative_is_symmetric(self):
        jet = an.forward_jet(self.net, self.theta, self.pts, ("u_xt", "u_tx"))
        assert jet["u_xt"] is jet["u_tx"]

    def test_first_derivatives_match_fd(self):
        jet = an.forward_jet(self.net, self.theta, self.pts, ("u_x", "u_t"))
        h = 1e-5
        for d, col in (("x", 0), ("t", 1)):
            plus, minus = self.pts.copy(), self.pts.copy()
            plus[:, col] += h
            minus[:, col] -= h
            up = an.forward_jet(self.net, self.theta, plus, ("u",))["u"].detach().numpy()
            um = an.forward_jet(self.net, self.theta, minus, ("u",))["u"].detach().numpy()
            fd = (up - um) / (2 * h)
            got = jet[f"u_{d}"].detach().numpy()
            assert np.all(np.abs(got - fd) <= 1e-6 * np.maximum(np.abs(fd), 1e-3))

    def test_second_derivatives_match_fd_of_first(self):
        jet = an.forward_jet(self.net, self.theta, self.pts, ("u_xx", "u_tt", "u_xt"))
        h = 1e-5
        for key, d, col in (("u_xx", "x", 0), ("u_tt", "t", 1), ("u_xt", "x", 1)):
            plus, minus = self.pts.copy(), self.pts.copy()
            plus[:, col] += h
            minus[:, col] -= h
            jp = an.forward_jet(self.net, self.theta, plus, (f"u_{d}",))[f"u_{d}"].detach().numpy()
            jm = an.forward_jet(self.net, self.theta, minus, (f"u_{d}",))[f"u_{d}"].detach().numpy()
            fd = (jp - jm) / (2 * h)
            got = jet[key].detach().numpy()
            assert np.all(np.abs(got - fd) <= 1e-6 * np.maximum(np.abs(fd), 1e-3))

    def test_two_output_components(self):
        net = an.build(make_genome(4, 20), 2, 2)
        theta = an.init_params(net, np.random.default_rng(5))
        jet = an.forward_jet(net, theta, self.pts, ("u", "v", "v_xy"),
                             coords=("x", "y"), components=("u", "v"))
        assert jet["v_xy"].shape == (6,)


class TestShortcutSemantics:
    def test_zeroed_layers_pass_projected_input(self):
        net = an.build(make_genome(3, 20, [(0, 2)]), 2, 1)
        theta = an.init_params(net, np.random.default_rng(0))
        for name in ("W1", "b1", "W2", "b2"):
            shape, off = net.slot(name)
            theta[off:off + int(np.prod(shape))] = 0.0
        X = np.random.default_rng(1).random((5, 2))
        p_shape, p_off = net.slot("P2")
        P = theta[p_off:p_off + 40].reshape(p_shape)
        w_shape, w_off = net.slot("W3")
        W3 = theta[w_off:w_off + 20].reshape(w_shape)
        b3 = theta[net.slot("b3")[1]]
        got = an.forward_jet(net, theta, X, ("u",))["u"].detach().numpy()
        expect = ((X @ P.T) @ W3.T + b3)[:, 0]
        assert np.allclose(got, expect, rtol=0, atol=1e-14)


class TestParamGradient:
    def setup_method(self):
        self.net = an.build(make_genome(4, 20, [(0, 2)], "α*sin(β*x)"), 2, 1)
        self.theta = an.init_params(self.net, np.random.default_rng(7))
        self.pts = np.random.default_rng(8).random((5, 2))
        self.target = np.random.default_rng(9).random(5)

    def _loss_tensor(self, theta_t):
        jet = an.forward_jet(self.net, theta_t, self.pts, ("u", "u_xx"))
        r = jet["u_xx"] + jet["u"] ** 3
        return ((r - torch.as_tensor(self.target)) ** 2).mean()

    def _loss_float(self, theta_np):
        with torch.no_grad():
            return float(self._loss_tensor(torch.as_tensor(theta_np)))

    def test_matches_finite_differences(self):
        theta_t = torch.tensor(self.theta, requires_grad=True)
        grad = an.param_gradient(self._loss_tensor(theta_t), theta_t)
        rng = np.random.default_rng(10)
        h = 1e-6
        for i in rng.choice(self.net.n_params, size=20, replace=False):
            plus, minus = self.theta.copy(), self.theta.copy()
            plus[i] += h
            minus[i] -= h
            fd = (self._loss_float(plus) - self._loss_float(minus)) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-6 * max(abs(fd), abs(grad[i]), 1e-3)

    def test_dead_path_gradient_is_zero(self):
        # u_x does not depend on the final bias, so its gradient there is 0
        theta_t = torch.tensor(self.theta, requires_grad=True)
        jet = an.forward_jet(self.net, theta_t, self.pts, ("u_x",))
        grad = an.param_gradient(jet["u_x"].sum(), theta_t)
        shape, off = self.net.slot("b4")
        assert np.all(grad[off:off + shape[0]] == 0.0)

    def test_doubling_loss_doubles_gradient(self):
        theta_t = torch.tensor(self.theta, requires_grad=True)
        g1 = an.param_gradient(self._loss_tensor(theta_t), theta_t)
        theta_t2 = torch.tensor(self.theta, requires_grad=True)
        g2 = an.param_gradient(2.0 * self._loss_tensor(theta_t2), theta_t2)
        assert np.array_equal(2.0 * g1, g2)

    def test_nonfinite_loss_raises_early_stop_signal(self):
        theta_t = torch.tensor(self.theta, requires_grad=True)
        bad = self._loss_tensor(theta_t) * torch.tensor(float("inf"))
        with pytest.raises(FloatingPointError):
            an.param_gradient(bad, theta_t)


class TestNestedDifferentiation:
    def test_mixed_partial_cross_check(self):
        # d/dtheta of u_x (engine) equals d/dx of du/dtheta (finite differences)
        net = an.build(make_genome(3, 20, activation="tanh(x)"), 2, 1)
        theta = an.init_params(net, np.random.default_rng(11))
        pt = np.array([[0.4, 0.6]])
        theta_t = torch.tensor(theta, requires_grad=True)
        ux = an.forward_jet(net, theta_t, pt, ("u_x",))["u_x"][0]
        engine = an.param_gradient(ux, theta_t)

        def theta_grad_of_u(points):
            tt = torch.tensor(theta, requires_grad=True)
            u = an.forward_jet(net, tt, points, ("u",))["u"][0]
            return an.param_gradient(u, tt)

        h = 1e-5
        fd = (theta_grad_of_u(pt + [[h, 0.0]]) - theta_grad_of_u(pt - [[h, 0.0]])) / (2 * h)
        err = np.abs(engine - fd)
        assert np.all(err <= 1e-5 * np.maximum(np.abs(engine), 1e-3))

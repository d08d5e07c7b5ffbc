import json

import numpy as np
import pytest

from conftest import affine_net, constant_net
from marginnet.embedding import (EmbeddingQuery, contour_grid, default_query, export_contour_grid,
                                 verify_droop_region, verify_power_region, verify_region)
from marginnet.milp import Threshold, forward_layers, unit_layers
from marginnet.sampling import Hypercube

H = Hypercube()


def droop_at(unit_anchor):
    """Droop query whose anchor sits at the given unit coordinates of the droop pair."""
    x = H.from_unit(np.r_[0.5, 0.5, unit_anchor])
    return EmbeddingQuery("droop", tuple(x[:2]), tuple(x[2:]))


class TestQuery:
    def test_dims(self):
        q = default_query("droop")
        assert q.free_dims == (2, 3) and q.fixed_dims == (0, 1)
        assert np.allclose(q.unit_anchor(H), 0.5)
        assert default_query("power").free_dims == (0, 1)

    @pytest.mark.parametrize("kw", [dict(free="both"), dict(fixed=(1.0,)), dict(delta=0)])
    def test_invalid(self, kw):
        base = dict(free="droop", fixed=(1.0, 0.0), anchor=(37.5, 25.0))
        with pytest.raises(ValueError):
            EmbeddingQuery(**{**base, **kw})

    def test_outside_box(self):
        q = EmbeddingQuery("droop", (1.0, 0.0), (1e4, 25.0))
        with pytest.raises(ValueError):
            q.unit_anchor(H)

    def test_wrong_entry_point(self):
        with pytest.raises(ValueError):
            verify_power_region(constant_net(10.0), default_query("droop"))
        with pytest.raises(ValueError):
            verify_droop_region(constant_net(10.0), default_query("power"))


class TestRegion:
    def test_constant_net(self):
        cert = verify_region(constant_net(10.0), default_query("droop"))
        assert cert.status == "infeasible_in_box" and cert.region_radius == 1.0

    def test_infeasible_anchor(self):
        cert = verify_region(constant_net(2.0), default_query("droop"))
        assert cert.status == "infeasible_anchor" and cert.region_radius == 0.0
        assert cert.extra["anchor_prediction"] == 2.0

    def test_linear_droop(self):
        # prediction 10 - 7 u3 over the droop pair, anchor u3 = 0.5: crossing at u3 = 6.75 / 7
        net = affine_net([0, 0, -7.0, 0], 10.0)
        cert = verify_droop_region(net, droop_at([0.5, 0.5]))
        assert cert.status == "certified"
        assert cert.epsilon_star == pytest.approx(6.75 / 7 - 0.5, abs=1e-6)
        assert np.allclose(cert.witness[:2], 0.5)

    def test_power_dims_ignored_by_droop_query(self):
        # the net depends only on the fixed power pair, so no crossing is reachable
        net = affine_net([-7.0, 0, 0, 0], 10.0)
        cert = verify_droop_region(net, droop_at([0.5, 0.5]))
        assert cert.status == "infeasible_in_box"

    def test_boundary_anchor(self):
        net = affine_net([0, 0, 0, -7.0], 10.0)
        cert = verify_region(net, droop_at([0.0, 0.0]))
        assert cert.epsilon_star == pytest.approx(6.75 / 7, abs=1e-6)

    @pytest.mark.parametrize("free", ["droop", "power"])
    def test_soundness(self, trained_net, free):
        layers = unit_layers(trained_net)
        q = default_query(free)
        cert = verify_region(trained_net, q, layers=layers)
        if cert.status not in ("certified", "infeasible_in_box"):
            pytest.skip(f"status {cert.status}")
        r = cert.region_radius
        u0 = q.unit_anchor(trained_net.cube)
        rng = np.random.default_rng(0)
        U = np.tile(u0, (100_000, 1))
        i, j = q.free_dims
        U[:, [i, j]] = np.clip(u0[[i, j]] + rng.uniform(-r, r, (100_000, 2)) * (1 - 1e-9), 0, 1)
        assert not np.any(q.threshold.crossed(forward_layers(layers, U)))
        if cert.status == "certified":
            w = cert.witness
            assert np.allclose(w[list(q.fixed_dims)], u0[list(q.fixed_dims)])
            assert forward_layers(layers, w)[0] <= q.threshold.value + 1e-6

    def test_dense_grid_soundness(self, trained_net):
        """No grid point closer than the certified radius is unacceptable."""
        layers = unit_layers(trained_net)
        q = default_query("droop")
        cert = verify_region(trained_net, q, layers=layers)
        u, v, pred, ok = contour_grid(trained_net, q, 201, layers)
        u0 = q.unit_anchor(trained_net.cube)
        dist = np.maximum(np.abs(u - u0[2]), np.abs(v - u0[3]))
        assert np.all(ok[dist < cert.region_radius - 1e-9])
        if cert.status == "certified":
            # the grid never finds a crossing much closer than the exact optimum
            bad = dist[~ok]
            assert bad.size == 0 or bad.min() >= cert.epsilon_star - 1e-9


class TestGrid:
    def test_resolution_two(self):
        u, v, pred, ok = contour_grid(constant_net(10.0), default_query("droop"), 2)
        assert u.tolist() == [0, 0, 1, 1] and v.tolist() == [0, 1, 0, 1]
        assert np.all(pred == 10.0) and np.all(ok)
        with pytest.raises(ValueError):
            contour_grid(constant_net(10.0), default_query("droop"), 1)

    def test_fixed_order(self):
        """Fixed coordinates land on the right dimensions."""
        net = affine_net([1.0, 2.0, 0, 0], 5.0)
        q = EmbeddingQuery("droop", tuple(H.from_unit([0.25, 0.75, 0, 0])[:2]), (37.5, 25.0))
        _, _, pred, _ = contour_grid(net, q, 3)
        assert np.allclose(pred, 5.0 + 0.25 + 1.5)

    def test_export(self, tmp_path):
        net = affine_net([0, 0, -7.0, 0], 10.0)
        q = droop_at([0.5, 0.5])
        cert = verify_region(net, q)
        export_contour_grid(net, q, 5, tmp_path / "g.csv", cert, tmp_path / "c.json")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "u,v,zeta_hat,acceptable" and len(lines) == 26
        d = json.loads((tmp_path / "c.json").read_text())
        assert d["change_point"]["u"] == pytest.approx(6.75 / 7, abs=1e-6)
        assert d["free"] == "droop" and Threshold("le", 3.25).value == d["threshold"]

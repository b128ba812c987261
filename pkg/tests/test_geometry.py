import math

import numpy as np
import pytest

from boundarylab import geometry as geo
from boundarylab.errors import (
    ChartRangeError,
    DegenerateInput,
    InvalidEpsilon,
    PointOutsideChart,
)


def test_ambient_to_chart_disk_examples():
    dom = geo.DomainModel()
    c = geo.ambient_to_chart(geo.AmbientPoint(0.9, 0.0), dom)
    assert c.y == pytest.approx(0.0) and c.z == pytest.approx(0.1)
    c = geo.ambient_to_chart(geo.AmbientPoint(0.0, 1.0), dom)
    assert c.y == pytest.approx(math.pi / 2) and c.z == pytest.approx(0.0)


def test_ambient_to_chart_annulus_inner():
    dom = geo.DomainModel(kind=geo.DomainKind.ANNULUS, inner_radius=0.4,
                          chart_radius=0.25)
    p = geo.AmbientPoint(0.5 * math.cos(1.0), 0.5 * math.sin(1.0))
    c = geo.ambient_to_chart(p, dom, geo.BoundaryComponent.INNER)
    assert c.y == pytest.approx(1.0)
    assert c.z == pytest.approx(0.1)


def test_outside_chart_raises():
    dom = geo.DomainModel()
    with pytest.raises(PointOutsideChart):
        geo.ambient_to_chart(geo.AmbientPoint(0.2, 0.0), dom)


def test_chart_to_ambient_examples():
    dom = geo.DomainModel()
    p = geo.chart_to_ambient(geo.ChartPoint(0.0, 0.0), dom)
    assert (p.x1, p.x2) == pytest.approx((1.0, 0.0))
    p = geo.chart_to_ambient(geo.ChartPoint(math.pi, 0.2), dom)
    assert (p.x1, p.x2) == pytest.approx((-0.8, 0.0), abs=1e-15)
    with pytest.raises(ChartRangeError):
        geo.chart_to_ambient(geo.ChartPoint(0.0, 0.6), dom)


def test_chart_roundtrip_random():
    dom = geo.DomainModel()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        y = rng.uniform(0, 2 * math.pi)
        z = rng.uniform(0, dom.chart_radius * 0.999)
        c = geo.ChartPoint(y, z)
        back = geo.ambient_to_chart(geo.chart_to_ambient(c, dom), dom)
        assert abs(back.y - c.y) < 1e-12 and abs(back.z - c.z) < 1e-12


def test_disk_height_plus_radius_is_one():
    dom = geo.DomainModel()
    rng = np.random.default_rng(8)
    for _ in range(200):
        p = geo.chart_to_ambient(
            geo.ChartPoint(rng.uniform(0, 6.28), rng.uniform(0, 0.49)), dom)
        c = geo.ambient_to_chart(p, dom)
        assert c.z + p.radius == pytest.approx(1.0, abs=1e-14)


def test_rescale_examples_and_roundtrip():
    c = geo.ChartPoint(1.0, 0.05)
    r = geo.rescale(c, 0.1)
    assert r.zz == pytest.approx(0.5)
    assert geo.rescale(c, 1.0).zz == c.z  # identity at eps = 1
    rng = np.random.default_rng(9)
    for _ in range(1000):
        c = geo.ChartPoint(rng.uniform(0, 6.28), rng.uniform(0, 0.5))
        eps = rng.uniform(0.01, 1.0)
        back = geo.unrescale(geo.rescale(c, eps), eps)
        assert abs(back.z - c.z) <= 1e-15 and back.y == c.y
    with pytest.raises(InvalidEpsilon):
        geo.rescale(c, 0.0)
    with pytest.raises(InvalidEpsilon):
        geo.unrescale(geo.RescaledPoint(0.0, 1.0), -1.0)


def test_rescale_linear_in_height():
    eps = 0.25
    z1, z2 = 0.11, 0.23
    s = geo.rescale(geo.ChartPoint(0.3, z1 + z2), eps).zz
    assert s == pytest.approx(geo.rescale(geo.ChartPoint(0.3, z1), eps).zz
                              + geo.rescale(geo.ChartPoint(0.3, z2), eps).zz)


def test_log_map():
    assert geo.log_map(geo.RescaledPoint(0.2, 1.0))[1] == pytest.approx(0.0)
    assert geo.log_map(geo.RescaledPoint(0.2, math.e ** 2))[1] == pytest.approx(2.0)
    with pytest.raises(DegenerateInput):
        geo.log_map(geo.RescaledPoint(0.2, 0.0))


def test_wrap_angle_canonical():
    assert geo.wrap_angle(2 * math.pi) == pytest.approx(0.0)
    assert geo.wrap_angle(-0.1) == pytest.approx(2 * math.pi - 0.1)
    arr = geo.wrap_angle(np.array([7.0, -7.0]))
    assert np.all((arr >= 0) & (arr < 2 * math.pi))


def test_annulus_chart_overlap_rejected():
    with pytest.raises(ChartRangeError):
        geo.DomainModel(kind=geo.DomainKind.ANNULUS, inner_radius=0.4,
                        chart_radius=0.4)


def test_circle_calculus_identities():
    # grad/hess of the coordinate functions against finite differences
    rng = np.random.default_rng(10)
    x = rng.uniform(0.3, 0.9, size=(50, 2))
    eh = 1e-6
    for fn, grad, hess in ((lambda p: 1 - np.linalg.norm(p, axis=-1),
                            geo.grad_z, geo.hess_z),
                           (lambda p: np.arctan2(p[..., 1], p[..., 0]),
                            geo.grad_y, geo.hess_y)):
        g = grad(x)
        for k in range(2):
            dp = np.zeros(2)
            dp[k] = eh
            num = (fn(x + dp) - fn(x - dp)) / (2 * eh)
            assert np.max(np.abs(num - g[:, k])) < 1e-6
        h = hess(x)
        for k in range(2):
            dp = np.zeros(2)
            dp[k] = eh
            num = (grad(x + dp) - grad(x - dp)) / (2 * eh)
            assert np.max(np.abs(num - h[:, :, k])) < 1e-5

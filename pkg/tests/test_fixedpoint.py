import csv
import json
import time
import warnings

import numpy as np
import pytest

from affinity_lb import DomainError
from affinity_lb.fixedpoint import (
    SWEEP_HEADER,
    TABLE2_LAMBDAS,
    TABLE2_MU2S,
    d1_star,
    d1_star_table,
    local_stability,
    metrics,
    no_queueing_fixed_points,
    queueing_fixed_point,
    queueing_fixed_point_qbar,
    report,
    switch_fraction,
    write_d1_star_csv,
    write_sweep_csv,
    x_tilde,
)
from affinity_lb.fluid import FluidState, drift


def test_queueing_fixed_point_values():
    q = queueing_fixed_point(3, 0.8, 1.0, 0.5)
    noncum = q[:-1] - q[1:]
    assert noncum[:3] == pytest.approx([0.40, 0.4704, 0.1283], abs=5e-5)
    q2 = queueing_fixed_point(2, 0.8, 1.0, 0.5)
    assert q2[0] == 1
    assert q2[1:4] == pytest.approx([0.6, 0.216, 0.6 ** 7], rel=1e-14)


@pytest.mark.parametrize("d,lam,mu2", [(2, 0.7, 0.5), (3, 0.8, 0.5), (5, 0.9, 1 / 3), (1, 0.6, 0.2)])
# d1 = 1 has a geometric tail, so the truncation row is excluded there
def test_queueing_fixed_point_is_stationary(d, lam, mu2):
    qbar = queueing_fixed_point_qbar(d, lam, 1.0, mu2, imax=14)
    rows = slice(None) if d > 1 else slice(0, -1)
    assert np.abs(drift(FluidState(qbar, d, lam, 1.0, mu2))[rows]).max() < 1e-10
    rho = (lam - mu2) / (1 - mu2)
    assert qbar[1, 1] == pytest.approx(rho)


def test_queueing_fixed_point_domain():
    with pytest.raises(DomainError):
        queueing_fixed_point(3, 0.5, 1.0, 0.5)
    with pytest.raises(DomainError):
        queueing_fixed_point(3, 1.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        queueing_fixed_point(3, 0.8, 0.5, 0.5)


def test_d1_star_examples_and_table(tmp_path):
    assert d1_star(0.8, 1.0, 0.5) == 18
    assert d1_star(0.9, 1.0, 1 / 3) == 54
    assert d1_star(0.4, 1.0, 1 / 3) == 3
    t0 = time.perf_counter()
    table = dict(d1_star_table())
    assert time.perf_counter() - t0 < 1.0
    assert table[0.5] == [None, None, 5, 9, 18, 46]
    assert table[1 / 3] == [3, 5, 7, 12, 22, 54]
    path = tmp_path / "t2.csv"
    write_d1_star_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["mu2", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"]
    assert rows[1] == ["0.5", "/", "/", "5", "9", "18", "46"]


@pytest.mark.parametrize("mu2", TABLE2_MU2S)
@pytest.mark.parametrize("lam", TABLE2_LAMBDAS)
def test_root_count_switches_at_d1_star(lam, mu2):
    if lam <= mu2:
        return
    ds = d1_star(lam, 1.0, mu2)
    for d in range(2, ds + 40):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            n = len(no_queueing_fixed_points(d, lam, 1.0, mu2))
        assert n == (2 if d >= ds else 0), d


def test_no_queueing_roots_at_d25():
    pts = no_queueing_fixed_points(25, 0.8, 1.0, 0.5)
    assert len(pts) == 2
    hi, lo = pts
    assert hi.stable and hi.alpha_plus < 0
    assert lo.stability == "unstable" and lo.alpha_plus > 0
    assert lo.x == pytest.approx(0.930, abs=5e-4) and lo.q00 == pytest.approx(0.070, abs=5e-4)
    assert hi.q00 == pytest.approx(0.1966, abs=5e-5)
    for p in pts:
        assert p.alpha_minus < 0 and p.alpha_minus < p.alpha_plus
        assert sum(p.triple) == pytest.approx(1.0, abs=1e-10)
        assert np.abs(drift(FluidState(p.qbar(), 25, 0.8))).max() < 1e-10


def test_no_queueing_root_count_below_threshold():
    assert no_queueing_fixed_points(3, 0.8, 1.0, 0.5) == []


def test_low_load_has_single_idle_fixed_point():
    pts = no_queueing_fixed_points(4, 0.3, 1.0, 0.5)
    assert len(pts) == 1 and pts[0].stable
    assert np.abs(drift(FluidState(pts[0].qbar(), 4, 0.3))).max() < 1e-10
    d1 = no_queueing_fixed_points(1, 0.3, 1.0, 0.5)
    assert len(d1) == 1
    assert np.abs(drift(FluidState(d1[0].qbar(), 1, 0.3))).max() < 1e-10


def test_stability_matches_numerical_jacobian():
    lam, mu1, mu2, d = 0.8, 1.0, 0.5, 25

    def f(z):
        q00, q10 = z
        q01 = 1 - q00 - q10
        p2 = (1 - q00) ** d
        return np.array([mu1 * q10 + mu2 * q01 - lam, lam * (1 - p2) - mu1 * q10])

    for p in no_queueing_fixed_points(d, lam, mu1, mu2):
        z = np.array([p.q00, p.q10])
        h = 1e-7
        J = np.column_stack([(f(z + h * e) - f(z - h * e)) / (2 * h) for e in np.eye(2)])
        ev = np.sort(np.linalg.eigvals(J).real)
        assert ev == pytest.approx([p.alpha_minus, p.alpha_plus], abs=1e-6)


def test_tangent_case_is_inconclusive():
    d, lam, mu1, mu2 = 25, 0.8, 1.0, 0.5
    xt = x_tilde(d, lam, mu1, mu2)
    am, ap, verdict = local_stability((1 - xt, 0, 0), d, lam, mu1, mu2)
    assert abs(ap) < 1e-12 and verdict == "inconclusive"


def test_switch_fraction_examples():
    assert switch_fraction(0.8, 1.0, 0.5) == 0.25
    assert switch_fraction(0.5 + 1e-12, 1.0, 0.5) == pytest.approx(1.0, abs=1e-9)
    m = metrics(3, 0.8, 1.0, 0.5)
    assert m.switch_fraction == 0.25
    assert (m.lam - m.tilde_lambda) / m.lam == pytest.approx(0.25, abs=1e-15)


def test_metrics_closed_forms():
    m = metrics(3, 0.8, 1.0, 0.5)
    assert m.EQ_ra == pytest.approx(3.2, abs=1e-12)
    assert m.EQ_II == pytest.approx(0.6)
    rho = 0.6
    brute = sum(rho ** ((3 ** i - 1) // 2) for i in range(1, 30))
    assert m.EQ_cm == pytest.approx(brute, abs=1e-15)
    assert m.EQ_jsq == pytest.approx(sum(0.8 ** ((3 ** (i + 1) - 1) // 2) for i in range(1, 30)))
    # Little's law and the type mixture close
    assert m.lam * m.EW == pytest.approx(m.EQ_cm, abs=1e-12)
    assert m.EQ_cm == pytest.approx(m.EQ_I + m.EQ_II, abs=1e-12)
    mix = (m.tilde_lambda * m.EW_I + (m.lam - m.tilde_lambda) * m.EW_II) / m.lam
    assert mix == pytest.approx(m.EW, abs=1e-12)
    assert m.var_ra == pytest.approx(0.8 ** 2 * (1 + 0.8 - 0.8 ** 2) / 0.2 ** 2, rel=1e-9)
    assert m.var_cm > 0 and m.var_jsq > 0


def test_metrics_limit_near_mu2():
    m = metrics(3, 0.5 + 1e-9, 1.0, 0.5)
    assert m.EQ_II == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(DomainError):
        metrics(3, 1.2, 1.0, 0.5)


def test_report_json_and_sweep(tmp_path):
    r = report(25, 0.8)
    data = r.to_json()
    assert set(data) == {"params", "queueing_fp", "no_queueing_fps", "d1_star", "x_tilde",
                         "metrics"}
    assert data["d1_star"] == 18 and len(data["no_queueing_fps"]) == 2
    r.write(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["params"]["d1"] == 25
    low = report(3, 0.3).to_json()
    assert low["metrics"] is None and low["queueing_fp"] == []
    write_sweep_csv(tmp_path / "s.csv", 3, [0.6, 0.7])
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == SWEEP_HEADER and len(rows) == 3
    assert float(rows[1][3]) == pytest.approx(0.36 / 0.4)

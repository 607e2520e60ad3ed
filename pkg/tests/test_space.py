import json
import math

import numpy as np
import pytest

from homspace import (CertificationError, FormatError, ParameterError,
                      generate_space, geometry_report, load_space, save_space)
from homspace.space import (certify_a0, default_radius_grid,
                            load_space_document, space_to_document)


def test_grid1d_metric_a0_is_one():
    sp = generate_space("grid1d", size=3)
    assert sp.a0 == 1.0
    assert sp.a0_method == "exhaustive"
    assert sp.diam == 1.0


def test_snowflake_a0_two():
    # d(x,y) = |x-y|^2 on {0, 0.5, 1}: the triple (0, 0.5, 1) attains
    # 1 / (0.25 + 0.25) = 2
    sp = generate_space("snowflake_power", size=3, exponent=2.0)
    assert sp.a0 == pytest.approx(2.0, abs=1e-14)
    a0, method, triple = certify_a0(sp.dist)
    assert a0 == pytest.approx(2.0, abs=1e-14)
    assert sorted(triple) == [0, 1, 2]


def test_one_point_space_degenerate():
    sp = generate_space("circle", size=1)
    assert sp.n == 1 and sp.a0 == 1.0 and sp.diam == 0.0
    assert math.isinf(sp.min_gap)


def test_invalid_params():
    with pytest.raises(ParameterError):
        generate_space("grid1d", size=0)
    with pytest.raises(ParameterError):
        generate_space("snowflake_power", size=5, exponent=0.0)
    with pytest.raises(ParameterError):
        generate_space("warp", size=5)


def test_uniform_measure_normalized():
    sp = generate_space("grid2d", size=5)
    assert sp.total_mass == pytest.approx(1.0, rel=1e-15)


def test_quasi_triangle_holds_exhaustively(grid65):
    d = grid65.dist
    n = grid65.n
    for j in range(n):
        denom = d[:, j][:, None] + d[j, :][None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denom > 0, d / denom, 0.0)
        assert ratio.max() <= grid65.a0 * (1 + 1e-12)


def test_ball_monotone(grid65):
    v1 = grid65.ball_measure(0.1)
    v2 = grid65.ball_measure(0.2)
    assert np.all(v2 >= v1)
    assert np.all(v1 > 0)


def test_v_table_matches_direct(grid65):
    v = grid65.v_table()
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y = rng.integers(grid65.n, size=2)
        direct = grid65.weight[grid65.dist[x] < grid65.dist[x, y]].sum()
        assert v[x, y] == pytest.approx(direct, rel=1e-12, abs=1e-14)


def test_v_symmetry_ratio_reported(grid65):
    r = grid65.v_symmetry_ratio()
    assert 1.0 <= r < 10.0


def test_geometry_single_point():
    sp = generate_space("circle", size=1)
    rep = geometry_report(sp, [0.5])
    assert rep.c_mu == 1.0 and rep.omega == 0.0


def test_geometry_grid1d_band(grid257):
    # dyadic radii above the quantization scale; boundary effects push the
    # doubling ratio slightly above 2
    rep = geometry_report(grid257, default_radius_grid(grid257))
    assert 1.0 <= rep.omega <= 1.25
    assert rep.q_global == pytest.approx(1.0, abs=0.1)
    assert rep.q_global <= rep.omega + 0.25
    assert rep.c_global is not None and rep.c_global > 0


def test_geometry_grid2d_band():
    sp = generate_space("grid2d", size=33)
    rep = geometry_report(sp, default_radius_grid(sp))
    assert 2.0 <= rep.omega <= 2.4
    assert rep.q_global == pytest.approx(2.0, abs=0.35)


def test_geometry_deterministic(grid65):
    grid = default_radius_grid(grid65)
    a = geometry_report(grid65, grid)
    b = geometry_report(grid65, grid)
    assert a == b


def test_geometry_reverse_doubling(grid65):
    rep = geometry_report(grid65, default_radius_grid(grid65),
                          fit_reverse=True)
    assert rep.kappa is not None
    assert 0.0 <= rep.kappa <= rep.omega + 0.25


def test_radius_grid_rejects_bad(grid65):
    with pytest.raises(ParameterError):
        geometry_report(grid65, [])
    with pytest.raises(ParameterError):
        geometry_report(grid65, [0.2, 0.1])


# -- document I/O ------------------------------------------------------------

def test_document_roundtrip(tmp_path, grid65):
    path = tmp_path / "space.json"
    save_space(grid65, str(path))
    back = load_space(str(path))
    assert np.array_equal(back.dist, grid65.dist)
    assert np.array_equal(back.weight, grid65.weight)
    assert back.a0 == grid65.a0


def test_two_point_document_valid():
    sp = load_space_document({"n": 2, "dist": [1.0], "weights": [1.0, 1.0]})
    assert sp.n == 2 and sp.a0 == 1.0


def test_asymmetric_document_rejected():
    doc = {"n": 2, "dist": [[0.0, 1.0], [2.0, 0.0]], "weights": [1.0, 1.0]}
    with pytest.raises(FormatError, match="asymmetric"):
        load_space_document(doc)


def test_bad_weight_rejected():
    with pytest.raises(FormatError, match="not positive"):
        load_space_document({"n": 2, "dist": [1.0], "weights": [1.0, 0.0]})


def test_declared_a0_violation_names_triple():
    snow = generate_space("snowflake_power", size=3, exponent=2.0)
    doc = space_to_document(snow)
    doc["a0"] = 1.0
    with pytest.raises(CertificationError) as err:
        load_space_document(doc)
    assert sorted(err.value.triple) == [0, 1, 2]


def test_document_float_roundtrip_exact(tmp_path):
    sp = generate_space("grid1d", size=7, measure="custom",
                        weights=[0.1, 0.2, 0.3, 0.1, 0.1, 0.1, 0.1])
    path = tmp_path / "s.json"
    save_space(sp, str(path))
    with open(path) as fh:
        doc = json.load(fh)
    back = load_space_document(doc)
    assert np.array_equal(back.weight, sp.weight)
    assert np.array_equal(back.dist, sp.dist)


def test_sampled_certification_flag():
    sp = generate_space("grid1d", size=600, a0_cap=128)
    assert sp.a0_method == "sampled"
    assert sp.a0 == pytest.approx(1.0, abs=1e-12)


def test_binary_tree_space():
    sp = generate_space("graph", size=31)
    assert sp.diam == 1.0
    assert sp.a0 == 1.0  # shortest-path metrics are metrics


def test_sierpinski_point_count():
    # level L gasket has 3(3^L + 1)/2 distinct vertices
    sp = generate_space("sierpinski_level", level=3)
    assert sp.n == 3 * (3 ** 3 + 1) // 2


from hypothesis import given, settings
from hypothesis import strategies as st


@settings(max_examples=20, deadline=None)
@given(a=st.floats(min_value=1.1, max_value=2.0))
def test_snowflake_a0_formula_property(a):
    # on a grid with midpoints, the worst triple is (x, midpoint, z) and the
    # quasi-triangle constant of d = |x-y|^a is exactly 2^(a-1)
    sp = generate_space("snowflake_power", size=9, exponent=a)
    assert sp.a0 == pytest.approx(2.0 ** (a - 1.0), rel=1e-12)

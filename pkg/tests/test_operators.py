import numpy as np
import pytest

from homspace import (Field, IllConditionedFrameError, ParameterError,
                      RangeError, analyze, apply_level, frame_operator,
                      generate_space, hl_maximal, reconstruct)
from homspace.operators import mu_dot


def test_field_validation(grid65):
    with pytest.raises(ParameterError):
        Field(grid65, np.zeros(3))
    with pytest.raises(ParameterError):
        Field(grid65, np.full(grid65.n, np.nan))


def test_apply_level_matches_naive_loop(pipe65, rng):
    st = pipe65.stack
    sp = st.space
    f = Field(sp, rng.standard_normal(sp.n))
    k = st.k_min + 3
    got = apply_level(st, k, f).values
    want = np.zeros(sp.n)
    for x in range(sp.n):
        acc = 0.0
        for y in range(sp.n):
            acc += st.q[k][x, y] * f.values[y] * sp.weight[y]
        want[x] = acc
    assert np.max(np.abs(got - want)) <= 1e-13


def test_apply_level_range_error(pipe65):
    f = Field(pipe65.space, np.zeros(pipe65.space.n))
    with pytest.raises(RangeError):
        apply_level(pipe65.stack, pipe65.stack.k_max + 1, f)


# -- maximal operator ----------------------------------------------------------

def test_maximal_constant(grid65):
    f = Field(grid65, np.full(grid65.n, -2.0))
    assert np.allclose(hl_maximal(grid65, f).values, 2.0, atol=1e-15)


def test_maximal_dominates_pointwise(grid65, rng):
    for _ in range(20):
        f = Field(grid65, rng.standard_normal(grid65.n))
        m = hl_maximal(grid65, f).values
        assert np.all(m >= np.abs(f.values) - 1e-15)


def test_maximal_sublinear_homogeneous(grid65, rng):
    f = rng.standard_normal(grid65.n)
    g = rng.standard_normal(grid65.n)
    mf = hl_maximal(grid65, Field(grid65, f)).values
    mg = hl_maximal(grid65, Field(grid65, g)).values
    mfg = hl_maximal(grid65, Field(grid65, f + g)).values
    assert np.all(mfg <= mf + mg + 1e-12)
    mcf = hl_maximal(grid65, Field(grid65, -3.0 * f)).values
    assert np.allclose(mcf, 3.0 * mf, rtol=1e-12)


def test_maximal_indicator_endpoint():
    sp = generate_space("grid1d", size=1025)
    x = np.linspace(0, 1, 1025)
    f = Field(sp, (x <= 0.5).astype(float))
    m = hl_maximal(sp, f)
    assert abs(m.values[-1] - 0.5) <= 2.0 / 1025


def test_maximal_matches_brute_force(rng):
    sp = generate_space("grid1d", size=33)
    f = Field(sp, rng.standard_normal(sp.n))
    m = hl_maximal(sp, f).values
    g = np.abs(f.values) * sp.weight
    for x in range(sp.n):
        best = 0.0
        for r in np.unique(sp.dist[x]) + 1e-12:
            mask = sp.dist[x] < r
            best = max(best, g[mask].sum() / sp.weight[mask].sum())
        assert m[x] == pytest.approx(best, rel=1e-12)


# -- coefficients and frame -----------------------------------------------------

def test_analyze_matches_direct_sampling(pipe65, rng):
    st, cubes = pipe65.stack, pipe65.cubes
    sp = st.space
    f = Field(sp, rng.standard_normal(sp.n))
    grid = analyze(st, cubes, f)
    for k in st.levels():
        g = st.apply(k, f.values)
        lc = grid.levels[k]
        assert np.max(np.abs(lc.value - g[lc.y_index])) <= 1e-13
        total = sum(lc.weight)
        assert total == pytest.approx(sp.total_mass, rel=1e-12)


def test_analyze_constant_homogeneous_zero(pipe65):
    sp = pipe65.space
    f = Field(sp, np.ones(sp.n))
    grid = analyze(pipe65.stack, pipe65.cubes, f)
    for lc in grid.levels.values():
        assert np.max(np.abs(lc.value)) <= 1e-10


def test_analyze_inhom_averages(pipe65_inhom, rng):
    st, cubes = pipe65_inhom.stack, pipe65_inhom.cubes
    sp = st.space
    f = Field(sp, rng.standard_normal(sp.n))
    grid = analyze(st, cubes, f)
    for k in range(0, st.n_low + 1):
        lc = grid.levels[k]
        assert lc.average is not None
        g = st.apply(k, f.values)
        _, _, _, _, sub_assign = cubes.sample_arrays(k)
        i = 0
        mem = np.nonzero(sub_assign == i)[0]
        direct = (g[mem] * sp.weight[mem]).sum() / sp.weight[mem].sum()
        assert lc.average[i] == pytest.approx(direct, rel=1e-12)


def test_grid_rows_export(pipe65, rng):
    f = Field(pipe65.space, rng.standard_normal(pipe65.space.n))
    rows = analyze(pipe65.stack, pipe65.cubes, f).rows()
    assert len(rows) > 0
    k, alpha, m, y, val, wgt = rows[0]
    assert isinstance(alpha, int) and wgt > 0


def test_frame_operator_symmetric(pipe65, rng):
    sp = pipe65.space
    f = rng.standard_normal(sp.n)
    g = rng.standard_normal(sp.n)
    sf = frame_operator(pipe65.stack, pipe65.cubes, Field(sp, f)).values
    sg = frame_operator(pipe65.stack, pipe65.cubes, Field(sp, g)).values
    assert mu_dot(sp, sf, g) == pytest.approx(mu_dot(sp, f, sg), rel=1e-10)


def test_frame_operator_symmetric_inhom(pipe65_inhom, rng):
    sp = pipe65_inhom.space
    f = rng.standard_normal(sp.n)
    g = rng.standard_normal(sp.n)
    sf = frame_operator(pipe65_inhom.stack, pipe65_inhom.cubes,
                        Field(sp, f)).values
    sg = frame_operator(pipe65_inhom.stack, pipe65_inhom.cubes,
                        Field(sp, g)).values
    assert mu_dot(sp, sf, g) == pytest.approx(mu_dot(sp, f, sg), rel=1e-10)


def test_frame_annihilates_constants(pipe65):
    sp = pipe65.space
    sf = frame_operator(pipe65.stack, pipe65.cubes,
                        Field(sp, np.ones(sp.n))).values
    assert np.max(np.abs(sf)) <= 1e-10


def test_reconstruct_band_limited(pipe257, rng):
    st, cubes = pipe257.stack, pipe257.cubes
    sp = st.space
    g = rng.standard_normal(sp.n)
    j = st.k_min + 4
    f = Field(sp, st.apply(j, g))
    rf, rep = reconstruct(st, cubes, f, tol=1e-6, maxiter=200)
    assert rep.converged and rep.iterations <= 200
    err = np.sqrt(mu_dot(sp, rf.values - f.values, rf.values - f.values)
                  / mu_dot(sp, f.values, f.values))
    assert err <= 1e-6
    assert rep.frame_lower is not None and rep.frame_lower > 0


def test_reconstruct_constant_gives_zero(pipe65):
    sp = pipe65.space
    f = Field(sp, np.full(sp.n, 4.2))
    rf, rep = reconstruct(pipe65.stack, pipe65.cubes, f)
    assert rep.converged
    assert np.max(np.abs(rf.values)) <= 1e-10


def test_reconstruct_linear(pipe65, rng):
    st, cubes = pipe65.stack, pipe65.cubes
    sp = st.space
    f = Field(sp, st.apply(st.k_min + 3, rng.standard_normal(sp.n)))
    g = Field(sp, st.apply(st.k_min + 4, rng.standard_normal(sp.n)))
    combo = Field(sp, 2.0 * f.values - 0.5 * g.values)
    rf, _ = reconstruct(st, cubes, f, tol=1e-10, maxiter=400)
    rg, _ = reconstruct(st, cubes, g, tol=1e-10, maxiter=400)
    rc, _ = reconstruct(st, cubes, combo, tol=1e-10, maxiter=400)
    lhs = rc.values
    rhs = 2.0 * rf.values - 0.5 * rg.values
    scale = np.max(np.abs(lhs)) or 1.0
    assert np.max(np.abs(lhs - rhs)) / scale <= 1e-6


def test_reconstruct_point_mass_residual(pipe257):
    sp = pipe257.space
    v = np.zeros(sp.n)
    v[sp.n // 2] = 1.0
    f = Field(sp, v)
    rf, rep = reconstruct(pipe257.stack, pipe257.cubes, f, tol=1e-2,
                          maxiter=400)
    assert rep.relative_residual <= 1e-2


def test_reconstruct_nonconvergence_raises(pipe65, rng):
    f = Field(pipe65.space,
              pipe65.stack.apply(pipe65.stack.k_min + 3,
                                 rng.standard_normal(pipe65.space.n)))
    with pytest.raises(IllConditionedFrameError):
        reconstruct(pipe65.stack, pipe65.cubes, f, tol=1e-14, maxiter=2)


def test_analyze_j0_zero_samples_at_centers(grid65):
    from homspace import build_pipeline
    pipe = build_pipeline(grid65, j0=0)
    st, cubes = pipe.stack, pipe.cubes
    rng = np.random.default_rng(8)
    f = Field(grid65, rng.standard_normal(grid65.n))
    grid = analyze(st, cubes, f)
    for k in st.levels():
        g = st.apply(k, f.values)
        lc = grid.levels[k]
        centers = cubes.levels[k].centers
        assert np.array_equal(lc.y_index, centers)
        assert np.max(np.abs(lc.value - g[centers])) == 0.0


def test_analyze_sampler_mismatch(pipe65, rng):
    f = Field(pipe65.space, rng.standard_normal(pipe65.space.n))
    with pytest.raises(RangeError, match="sampler"):
        analyze(pipe65.stack, pipe65.cubes, f, sampler="seeded_random")
    analyze(pipe65.stack, pipe65.cubes, f, sampler="center")


def test_frame_rayleigh_floor_on_band_limited(pipe65, rng):
    # power-iteration-style oracle: Rayleigh quotients of S on band-limited
    # probes stay above a positive floor
    st, cubes = pipe65.stack, pipe65.cubes
    sp = st.space
    floor = np.inf
    for j in (st.k_min + 3, st.k_min + 4, st.k_min + 5):
        f = st.apply(j, rng.standard_normal(sp.n))
        sf = frame_operator(st, cubes, Field(sp, f)).values
        floor = min(floor, mu_dot(sp, sf, f) / mu_dot(sp, f, f))
    assert floor > 0.01

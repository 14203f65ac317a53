import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import data_path
from kleinian import orbit
from kleinian.orbit import (
    FrontierOverflowError,
    GroupConfigError,
    IncompleteCountError,
    InsufficientDataError,
    PackingCount,
    build_spec,
    count,
    fit_delta,
    load_group,
    orbit_enumerate,
    sl2_row_count,
    smoothed_count,
)
from kleinian.quad_space import standard_form
from oracles import descartes_bends, schottky_rows

Q_TOL = 1e-9
ROOT = [-1, 2, 2, 3]


def write_config(tmp_path, cfg, name="g.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def test_apollonian_config(apollonian):
    assert apollonian.n == 2 and apollonian.mode == "integer"
    # reflections are involutions, so inverse closure adds nothing
    assert len(apollonian.generators) == 4
    Q = standard_form(2, exact=True).gram
    bases = [np.array(v, dtype=object) for v in apollonian.base_vectors]
    for i, g in enumerate(apollonian.generators):
        assert all(x == 0 for x in (g @ Q @ g.T - Q).ravel())
        moved = [j for j, v in enumerate(bases) if any(a != b for a, b in zip(v @ g, v))]
        assert moved == [i]


@pytest.mark.parametrize("T,expected", [(1.0, 1), (2.5, 3), (3.5, 5)])
def test_small_counts(apollonian, T, expected):
    assert count(orbit_enumerate(apollonian, T), T) == expected


@pytest.mark.parametrize("T", [3.5, 10.0, 30.0, 100.0])
def test_matches_descartes_oracle(apollonian, T):
    pc = orbit_enumerate(apollonian, T)
    assert pc.bends == [float(b) for b in descartes_bends(ROOT, T)]


def test_margin_one_still_complete_at_small_T(apollonian):
    pc = orbit_enumerate(apollonian, 100.0, margin=1.0)
    assert pc.bends == [float(b) for b in descartes_bends(ROOT, 100.0)]


def test_float_mode_agrees():
    spec = load_group(data_path("apollonian_float.json"))
    assert spec.mode == "float"
    pc = orbit_enumerate(spec, 200.0)
    assert pc.bends == [float(b) for b in descartes_bends(ROOT, 200.0)]


def test_vectors_on_hyperboloid(apollonian):
    pc = orbit_enumerate(apollonian, 500.0, keep_vectors=True)
    Q = np.asarray(standard_form(2).gram, dtype=float)
    v = pc.vectors.astype(float)
    assert np.abs(np.einsum("ij,jk,ik->i", v, Q, v) - 1).max() == 0.0
    assert len(v) == len(pc.bends)


def test_bounded_packing_geometry(apollonian):
    # every circle lies in the outer unit disk: |center| + radius <= R, so
    # |bz| <= R b - 1 and the chart coordinate w = (|bz| - 1) / b stays in [-1/b, R)
    R = apollonian.containing_radius()
    assert R == pytest.approx(1.0)
    pc = orbit_enumerate(apollonian, 2000.0, keep_vectors=True)
    v = pc.vectors.astype(float)
    inner = v[v[:, 0] > 0]
    b, bz = inner[:, 0], np.linalg.norm(inner[:, 1:3], axis=1)
    assert np.all(bz <= R * b - 1 + 1e-9)
    w = (bz - 1) / b
    assert np.all(np.abs(w) < R)


def test_identity_only_orbit(tmp_path):
    cfg = {"n": 2, "mode": "integer", "generators": [["1", "0", "0", "0", "0", "1", "0", "0",
                                                       "0", "0", "1", "0", "0", "0", "0", "1"]],
           "base_vector": ["2", "1", "0", "0"]}
    pc = orbit_enumerate(load_group(write_config(tmp_path, cfg)), 10.0)
    assert pc.bends == [2.0]


def test_involution_orbit_has_at_most_two_points(apollonian):
    g = apollonian.generators[1]
    spec = build_spec(2, [g], [["3", "0", "2", "1"]], mode="integer")
    pc = orbit_enumerate(spec, 1e6)
    assert len(pc.bends) <= 2


def test_duplicate_base_vectors_counted_once(apollonian):
    spec = build_spec(2, apollonian.generators, [["2", "1", "0", "0"], ["2", "1", "0", "0"]], mode="integer")
    single = build_spec(2, apollonian.generators, [["2", "1", "0", "0"]], mode="integer")
    assert orbit_enumerate(spec, 50.0).bends == orbit_enumerate(single, 50.0).bends


def test_inverse_closure_adds_inverses():
    g = np.array([[2, -1, 1, 1], [2, -1, 2, 2], [-2, 2, -1, -2], [1, -1, 1, 2]], dtype=object)
    h = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [-8, 0, -1, 0], [16, 0, 4, 1]], dtype=object)
    spec = build_spec(2, [g @ h], [["-1", "0", "0", "1"]], mode="integer")
    assert len(spec.generators) == 2
    prod = spec.generators[0] @ spec.generators[1]
    assert all(x == (1 if i == j else 0) for (i, j), x in np.ndenumerate(prod))


def test_malformed_row_names_line(tmp_path):
    text = """{
  "n": 2,
  "mode": "integer",
  "generators": [
    [["1", "0", "0", "0"],
     ["0", "1", "0"],
     ["0", "0", "1", "0"],
     ["0", "0", "0", "1"]]
  ],
  "base_vector": ["2", "1", "0", "0"]
}
"""
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(GroupConfigError) as info:
        load_group(str(path))
    assert info.value.line == 6
    assert "line 6" in str(info.value)


def test_bad_entry_names_line(tmp_path):
    text = '{\n "n": 2,\n "generators": [\n  [["1", "0", "0", "0"],\n   ["0", "x/2", "0", "0"],\n' \
           '   ["0", "0", "1", "0"],\n   ["0", "0", "0", "1"]]\n ],\n "base_vector": [2, 1, 0, 0]\n}\n'
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(GroupConfigError) as info:
        load_group(str(path))
    assert info.value.line == 5


def test_invalid_json_names_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "n": 2,\n "generators": [\n}\n')
    with pytest.raises(GroupConfigError) as info:
        load_group(str(path))
    assert info.value.line == 4


def test_non_orthogonal_generator_reports_residual(tmp_path):
    cfg = {"n": 2, "mode": "float", "generators": [[2, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]],
           "base_vector": [2, 1, 0, 0]}
    with pytest.raises(GroupConfigError, match="residual"):
        load_group(write_config(tmp_path, cfg))
    cfg["mode"] = "integer"
    with pytest.raises(GroupConfigError, match="does not preserve Q"):
        load_group(write_config(tmp_path, cfg))


def test_bad_base_vector(tmp_path):
    cfg = {"n": 2, "generators": [], "base_vector": [1, 0, 0, 0]}
    with pytest.raises(GroupConfigError, match="Q ="):
        load_group(write_config(tmp_path, cfg))


def test_count_semantics():
    pc = PackingCount([1.0, 2.0, 2.0, 5.0], horizon=6.0, words_explored=0)
    assert count(pc, 2.0) == 1 and count(pc, 2.0000001) == 3
    assert count(pc, 6.0) == 4
    with pytest.raises(IncompleteCountError):
        count(pc, 6.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_count_monotone(a, b):
    pc = PackingCount([float(x) for x in descartes_bends(ROOT, 100.0)], 100.0, 0)
    lo, hi = sorted((a, b))
    assert count(pc, lo) <= count(pc, hi)


def test_max_depth_lowers_horizon(apollonian):
    pc = orbit_enumerate(apollonian, 1000.0, max_depth=3)
    assert not pc.complete and pc.horizon < 1000.0
    assert all(b < pc.horizon for b in pc.bends)
    full = orbit_enumerate(apollonian, 1000.0)
    assert pc.bends == [b for b in full.bends if b < pc.horizon]


def test_determinism_across_workers(apollonian, monkeypatch):
    ref = orbit_enumerate(apollonian, 2000.0, workers=1, keep_vectors=True)
    for w in (2, 8):
        pc = orbit_enumerate(apollonian, 2000.0, workers=w, keep_vectors=True)
        assert pc.bends == ref.bends and np.array_equal(pc.vectors, ref.vectors)
    monkeypatch.setenv("KLEINIAN_THREADS", "4")
    assert orbit.worker_count() == 4
    assert orbit_enumerate(apollonian, 2000.0).bends == ref.bends


def test_x_cutoff_for_unbounded(apollonian):
    spec = build_spec(2, apollonian.generators, [[str(x) for x in v] for v in apollonian.base_vectors],
                      mode="integer", bounded=False, X=3.0)
    pc = orbit_enumerate(spec, 200.0, keep_vectors=True)
    assert np.all(np.linalg.norm(pc.vectors[:, 1:3].astype(float), axis=1) < 3.0)
    assert 0 < len(pc.bends) < len(descartes_bends(ROOT, 200.0))


def test_fit_synthetic_exponent():
    # bends m^(2/3): N(T) = #{m >= 1 : m < T^1.5} = floor(T^1.5) off the integers
    bends = np.arange(1, 20000 ** 1.5 // 1) ** (2 / 3)
    pc = PackingCount(bends.tolist(), 20000.0, 0)
    assert count(pc, 30.5) == int(30.5 ** 1.5)
    fit = fit_delta(pc, 100.0, 10000.0, 40)
    assert fit.slope == pytest.approx(1.5, abs=0.01)
    assert 0.999 < fit.r_squared <= 1


def test_fit_degenerate_and_insufficient():
    pc = PackingCount([1.0] * 50, 1000.0, 0)
    fit = fit_delta(pc, 10.0, 100.0, 10)
    assert fit.degenerate and np.isnan(fit.r_squared)
    with pytest.raises(InsufficientDataError):
        fit_delta(PackingCount([1.0] * 5, 1000.0, 0), 10.0, 100.0)
    with pytest.raises(IncompleteCountError):
        fit_delta(pc, 10.0, 2000.0)


def test_smoothed_count_limits(apollonian):
    pc = orbit_enumerate(apollonian, 500.0)
    T = 57.3
    assert smoothed_count(pc, T, 1e-4).value == count(pc, T)
    with pytest.raises(IncompleteCountError):
        smoothed_count(pc, 499.0, 0.1)
    with pytest.raises(ValueError):
        smoothed_count(pc, 50.0, 0.6)
    logs = np.log(T) + 1e-4 * np.arange(-1, 2)
    vals = [smoothed_count(pc, np.exp(x), 0.1).value for x in logs]
    second = (vals[0] - 2 * vals[1] + vals[2]) / 1e-8
    assert np.isfinite(second) and abs(second) < 1e5


def test_sl2_identity_and_diagonal():
    assert sl2_row_count([[[1, 0], [0, 1]]], 5.0) == 1
    diag = [[["2", "0"], ["0", "1/2"]]]
    for depth in (1, 4, 7):
        # rows (0, 2^-k) for |k| <= depth; norm 4^-k < 10 iff k >= -1
        expected = sum(1 for k in range(-depth, depth + 1) if 4.0 ** (-k) < 10)
        assert sl2_row_count(diag, 10.0, max_depth=depth) == expected
    with pytest.raises(FrontierOverflowError):
        sl2_row_count(diag, 10.0, max_levels=50)
    with pytest.raises(ValueError):
        sl2_row_count([[[2, 0], [0, 2]]], 5.0)


@pytest.mark.parametrize("T", [10.0, 1e3, 1e5])
def test_sl2_schottky_matches_word_oracle(T):
    gens = json.loads(open(data_path("schottky_sl2.json")).read())["generators"]
    assert sl2_row_count(gens, T) == len(schottky_rows(gens, T, 12))


def test_sl2_float_entries():
    gens = [[[3.0, 4.0], [2.0, 3.0]], [[3.0, 1.0], [8.0, 3.0]]]
    ints = [[[3, 4], [2, 3]], [[3, 1], [8, 3]]]
    assert sl2_row_count(gens, 1e4) == sl2_row_count(ints, 1e4)

import numpy as np
import pytest

import mixdd

SMALL = '{"case": {"kind": "bimaterial", "nx": 26, "ny": 8}, "partition": {"type": "slab", "n": 3}}'


def test_generate_case_shapes():
    case = mixdd.generate_case(SMALL)
    assert case["kind"] == "bimaterial"
    assert case["nodes"].shape[1] == 2
    assert case["elements"].shape[1] == 3
    assert len(case["element_owner"]) == case["elements"].shape[0]
    assert set(case["element_owner"]) == {0, 1, 2}
    assert np.all(np.diff(case["load_factors"]) > 0)


def test_solve_reports_every_increment():
    out = mixdd.solve(SMALL, impedance="two-scale")
    run = out["runs"][0]
    assert run["strategy"] == "two-scale"
    assert run["error"] == ""
    counts = [inc["cumulated_krylov"] for inc in run["increments"]]
    assert counts == sorted(counts)
    assert out["csv"].splitlines()[0] == "increment,strategy,cumulated_krylov,cumulated_global_newton"


def test_nks_matches_mixed_displacement():
    mixed = mixdd.solve(SMALL, impedance="lumped")["runs"][0]["increments"][-1]["displacement"]
    nks = mixdd.solve(SMALL, impedance="nks")["runs"][0]["increments"][-1]["displacement"]
    assert np.linalg.norm(mixed - nks) <= 1e-4 * np.linalg.norm(nks)


def test_linbench_exact_complement_is_sharp():
    csv = mixdd.linbench(SMALL.replace('"partition": {"type": "slab", "n": 3}', '"linbench": {"subdomains": [3]}'))
    rows = [line.split(",") for line in csv.splitlines()[1:]]
    exact = [int(r[2]) for r in rows if r[1] == "exact-complement"]
    assert exact == [2]


def test_gain_percent():
    assert mixdd.gain_percent(1514, 1772) == 15


def test_bad_config_raises():
    with pytest.raises(mixdd.ConfigError):
        mixdd.generate_case('{"case": {"kind": "sphere"}}')
    with pytest.raises(mixdd.Error):
        mixdd.solve(SMALL, impedance="cubic")

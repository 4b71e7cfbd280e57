"""Smoke test for the pylocdep extension module."""

import json
import math

import pylocdep


def main():
    model = pylocdep.Model(json.dumps({"kind": "iid", "n": 3, "base": "rademacher"}))
    assert len(model) == 3 and model.is_enumerable()

    atoms = model.exact_enumerate()
    assert abs(sum(p for _, p in atoms) - 1.0) < 1e-12

    dist = model.distance()
    assert dist["mode"] == "exact"
    assert abs(dist["ks"] - 0.21814856917461349) < 1e-12

    terms = model.r_terms()
    assert abs(terms["r3"]["value"] - 1 / math.sqrt(3)) < 1e-12
    bound = model.bound_2_1()
    assert abs(bound["value"] - 6.851) < 1e-3

    system = pylocdep.NeighborhoodSystem.lattice([12], 1).closure_extend()
    assert system.kappa_stats()["kappa_nc"] == 11
    assert system.level() == "LD4*"

    report = pylocdep.run_experiment(json.dumps({
        "schema": 1,
        "model": {"kind": "iid", "n": 3, "base": "rademacher"},
        "theorems": ["2.1"],
        "replicates": 1000,
        "seed": 7,
    }))
    assert report["all_pass"] and report["theorems"][0]["verdict"]["pass"]

    try:
        pylocdep.run_experiment(json.dumps({"schema": 1, "model": {"kind": "iid", "n": 3, "base": "rademacher"},
                                            "replicates": 0, "seed": 1}))
    except ValueError as e:
        assert "replicates" in str(e)
    else:
        raise AssertionError("replicates=0 accepted")

    assert 0.0 <= pylocdep.stein_solution(0.0, 0.1, 0.5) <= 1.0
    assert pylocdep.smoothed_indicator(0.0, 1.0, 0.5) == 0.5
    print("smoke test passed, pylocdep", pylocdep.__version__)


if __name__ == "__main__":
    main()

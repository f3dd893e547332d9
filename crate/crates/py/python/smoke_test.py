"""Smoke test for the hees extension module. Run after `pip install -e crates/py`."""

import math

import hees


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    q = hees.QuadraticProblem.sphere(3)
    assert q.dim == 3
    assert close(q([1.0, 1.0, 1.0]), 1.5)

    g = hees.compute_g_pair(16.0, 1.0, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    assert close(g[0][0], 0.5) and close(g[1][1], 2.0) and close(g[2][2], 1.0)
    assert close(hees.predicted_trace_reduction(16.0, 1.0), 9.0)

    rng = hees.RngStream(7)
    block = rng.sample_orthogonal(4)
    for i in range(4):
        for j in range(i):
            assert abs(sum(a * b for a, b in zip(block[i], block[j]))) < 1e-10
    assert hees.RngStream(7).split(1).uniform() == hees.RngStream(7).split(1).uniform()

    assert close(hees.condition_number([[4.0, 0.0], [0.0, 1.0]]), 4.0)
    assert close(hees.normalized_trace_distance([[2.0, 0.0], [0.0, 0.5]], [[1.0, 0.0], [0.0, 1.0]]), 0.5)
    assert close(hees.QuadraticProblem.sphere(2).f_mu([1.0, 0.0]), math.sqrt(math.pi), 1e-12)

    e = hees.QuadraticProblem.ellipsoid(5, 1e4, seed=3)
    trace = hees.run("one_plus_four", e, [1.0] * 5, 1500, seed=1)
    f = trace["f_m"]
    assert len(f) == 1500
    assert all(b <= a for a, b in zip(f, f[1:]))
    assert f[-1] < 1e-10 * f[0]

    cfg = "algorithm=he_es\nproblem=ellipsoid\nd=4\ncondition=100\nbudget=20\nseeds=3,1,2\n"
    assert hees.validate_config(cfg) == "he_es"
    runs = hees.run_config(cfg, threads=2)
    assert [seed for seed, _ in runs] == [3, 1, 2]
    assert runs == hees.run_config(cfg, threads=1)
    med = hees.aggregate_median(cfg, "f_m")
    assert len(med) == 20 and med[0][0] == 1

    try:
        hees.validate_config("budget=0")
    except ValueError as err:
        assert "budget" in str(err)
    else:
        raise AssertionError("invalid config accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()

"""Quick end-to-end check of the pymfdgp extension module."""

import math
import os
import tempfile

import pymfdgp


def main():
    # exact GP: interpolates its training data
    xs = [[i / 6.0] for i in range(7)]
    ys = [math.sin(6.0 * x[0]) for x in xs]
    gp = pymfdgp.GaussianProcess.condition(xs, ys, [0.3], 1.0, noise_variance=1e-10)
    means, variances = gp.predict(xs)
    assert max(abs(m - y) for m, y in zip(means, ys)) < 1e-6
    assert all(v >= 0.0 for v in variances)
    fitted = pymfdgp.GaussianProcess.fit(xs, ys, noise_variance=1e-8, seed=1)
    assert fitted.log_marginal_likelihood() >= gp.log_marginal_likelihood() - 1e-9
    draws = fitted.sample_posterior([[0.1], [0.5]], 4, seed=3)
    assert len(draws) == 4 and len(draws[0]) == 2

    # two-level deep GP on the Forrester family
    grid = [[i / 7.0] for i in range(8)]
    levels = [
        (grid, [pymfdgp.forrester(x[0], 1)[0] for x in grid]),
        (grid[::2], [pymfdgp.forrester(x[0], 5)[0] for x in grid[::2]]),
    ]
    model = pymfdgp.DeepGp.train(levels, seed=2)
    assert model.num_levels == 2 and model.dim == 1
    per_level = model.predict_all_levels([0.4], seed=5)
    assert len(per_level) == 2 and all(s >= 0.0 for _, s in per_level)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again = pymfdgp.DeepGp.load(path)
        assert again.predict_level([0.4], 2, seed=5) == model.predict_level([0.4], 2, seed=5)

    # fidelity choice and tanks-in-series
    assert pymfdgp.choose_level([1.0, 1.0], [1.0, 1.0]) == 2
    theta = [0.01 * i for i in range(601)]
    e = [pymfdgp.tanks_in_series(10.0, t) for t in theta]
    n_tanks, _ = pymfdgp.fit_tanks_in_series(theta, e)
    assert abs(n_tanks - 10.0) < 0.1, n_tanks
    curve_theta, curve_e, cost = pymfdgp.reactor_simulate([15.0, 2.5, 6.0, 0.5], 1, seed=0)
    assert len(curve_theta) == len(curve_e) and cost > 0.0

    try:
        pymfdgp.forrester(0.5, 9)
    except ValueError:
        pass
    else:
        raise AssertionError("level 9 should be rejected")

    # short campaign: the ledger adds up
    result = pymfdgp.run_campaign("forrester5", n_initial=1, budget=40.0, seed=7)
    spent = sum(r["cost"] for r in result["records"])
    assert abs(spent - result["budget_spent"]) < 1e-9
    assert result["incumbent"] is not None
    print("pymfdgp smoke test passed:", len(result["records"]), "evaluations, best y =",
          round(result["incumbent"]["y"], 4))


if __name__ == "__main__":
    main()

import numpy as np
import pytest

from pm25map.kriging import (
    KrigingError, VariogramModel, empirical_variogram, fit_variogram,
    krige_predict, krige_solve, kriging_grid_search,
)


class TestVariogramModel:
    def test_zero_at_origin(self):
        for kind in ("spherical", "exponential", "gaussian"):
            vm = VariogramModel(kind, nugget=0.3, psill=1.0, range_=5.0)
            assert vm(0.0) == 0.0

    def test_nugget_applies_above_zero(self):
        vm = VariogramModel("spherical", nugget=0.3, psill=1.0, range_=5.0)
        assert vm(1e-9) > 0.3 - 1e-12

    def test_spherical_reaches_sill_at_range(self):
        vm = VariogramModel("spherical", 0.1, 0.9, 4.0)
        assert np.isclose(vm(4.0), 1.0)
        assert np.isclose(vm(100.0), 1.0)

    def test_effective_range_95_percent(self):
        for kind in ("exponential", "gaussian"):
            vm = VariogramModel(kind, 0.0, 2.0, 6.0)
            assert np.isclose(vm(6.0), 2.0 * (1.0 - np.exp(-3.0)))

    def test_monotone_nondecreasing(self):
        h = np.linspace(0.01, 20, 200)
        for kind in ("spherical", "exponential", "gaussian"):
            g = VariogramModel(kind, 0.2, 1.5, 7.0)(h)
            assert np.all(np.diff(g) >= -1e-12)

    def test_bad_parameters(self):
        with pytest.raises(KrigingError):
            VariogramModel("spherical", -0.1, 1.0, 1.0)
        with pytest.raises(KrigingError):
            VariogramModel("cubic", 0.0, 1.0, 1.0)


class TestEmpiricalVariogram:
    def test_constant_field(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.random((40, 2)) * 10, np.full(40, 3.0)])
        for _, g, _ in empirical_variogram(pts):
            assert g == 0.0

    def test_two_points(self):
        pts = [(0.0, 0.0, 0.0), (1.0, 0.0, 2.0)]
        out = empirical_variogram(pts, n_bins=1, max_dist=2.0)
        assert len(out) == 1
        assert out[0][1] == 2.0 and out[0][2] == 1

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        xy = rng.random((25, 2)) * 5
        pts = np.column_stack([xy, xy[:, 0]])
        n_bins, max_dist = 6, 4.0
        out = empirical_variogram(pts, n_bins=n_bins, max_dist=max_dist)
        edges = np.linspace(0.0, max_dist, n_bins + 1)
        sums = np.zeros(n_bins)
        cnts = np.zeros(n_bins, dtype=int)
        for i in range(25):
            for j in range(i + 1, 25):
                d = np.hypot(*(xy[i] - xy[j]))
                if d > max_dist:
                    continue
                b = min(np.searchsorted(edges[1:-1], d, side="right"),
                        n_bins - 1)
                sums[b] += 0.5 * (pts[i, 2] - pts[j, 2]) ** 2
                cnts[b] += 1
        want = [( (edges[b] + edges[b + 1]) / 2, sums[b] / cnts[b], cnts[b])
                for b in range(n_bins) if cnts[b] > 0]
        assert len(out) == len(want)
        for (la, ga, ca), (lb, gb, cb) in zip(out, want):
            assert abs(la - lb) < 1e-12 and abs(ga - gb) < 1e-9 and ca == cb

    def test_semivariance_grows_for_trend_field(self):
        xs = np.arange(10, dtype=float)
        pts = [(x, 0.0, x) for x in xs]
        out = empirical_variogram(pts, n_bins=4, max_dist=9.0)
        gammas = [g for _, g, _ in out]
        assert all(b > a for a, b in zip(gammas, gammas[1:]))

    def test_coincident_points_rejected(self):
        with pytest.raises(KrigingError):
            empirical_variogram([(1.0, 1.0, 0.0), (1.0, 1.0, 2.0)])


class TestFitVariogram:
    def test_recovers_spherical(self):
        truth = VariogramModel("spherical", 0.0, 1.0, 10.0)
        lags = np.linspace(0.5, 14.0, 12)
        emp = [(l, float(truth(l)), 50) for l in lags]
        fit = fit_variogram(emp, "spherical")
        assert abs(fit.nugget - 0.0) < 1e-3
        assert abs(fit.psill - 1.0) < 1e-3
        assert abs(fit.range_ - 10.0) < 1e-2

    def test_flat_bins_pure_nugget_limit(self):
        emp = [(l, 0.8, 20) for l in (1.0, 2.0, 3.0, 4.0)]
        fit = fit_variogram(emp, "exponential")
        total = fit.nugget + fit.psill * (1 - np.exp(-3 * 4.0 / fit.range_))
        assert abs(fit.nugget + fit.psill - 0.8) < 0.05 or abs(total - 0.8) < 0.05

    def test_gaussian_effective_range_property(self):
        truth = VariogramModel("gaussian", 0.1, 0.9, 5.0)
        lags = np.linspace(0.3, 8.0, 14)
        emp = [(l, float(truth(l)), 30) for l in lags]
        fit = fit_variogram(emp, "gaussian")
        # gaussian curve reaches 1 - exp(-3) ~ 95% of the sill at h = range
        want = fit.nugget + (1.0 - np.exp(-3.0)) * fit.psill
        assert abs(float(fit(fit.range_)) - want) < 1e-9
        assert abs(float(fit(fit.range_)) - (fit.nugget + 0.95 * fit.psill)) \
            < 0.01

    def test_too_few_bins(self):
        with pytest.raises(KrigingError):
            fit_variogram([(1.0, 0.5, 3), (2.0, 0.6, 3)], "spherical")


VG = VariogramModel("spherical", 0.0, 1.0, 5.0)


def _dense_oracle(samples, vg, target):
    """Independent construction and solve of the augmented system."""
    pts = np.asarray(samples, float)
    m = len(pts)
    A = np.zeros((m + 1, m + 1))
    for i in range(m):
        for j in range(m):
            h = np.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
            A[i, j] = vg(h)
        A[i, m] = A[m, i] = 1.0
    b = np.zeros(m + 1)
    for i in range(m):
        b[i] = vg(np.hypot(target[0] - pts[i, 0], target[1] - pts[i, 1]))
    b[m] = 1.0
    sol = np.linalg.solve(A, b)
    w, mu = sol[:m], sol[m]
    return float(w @ pts[:, 2]), w, float(w @ b[:m] + mu)


class TestKrigePredict:
    def _samples(self, n=12, seed=2):
        rng = np.random.default_rng(seed)
        xy = rng.random((n, 2)) * 8
        v = np.sin(xy[:, 0]) + 0.3 * xy[:, 1]
        return np.column_stack([xy, v])

    def test_weights_sum_to_one(self):
        s = self._samples()
        sols = krige_solve(s, VG, [(1.0, 1.0), (4.0, 2.5), (7.0, 7.0)],
                           full=True)
        for sol in sols:
            assert abs(sol.weights.sum() - 1.0) < 1e-10

    def test_zero_nugget_exact_at_samples(self):
        s = self._samples()
        out = krige_predict(s, VG, s[:, :2])
        assert np.max(np.abs(out[:, 0] - s[:, 2])) < 1e-8
        assert np.max(np.abs(out[:, 1])) < 1e-8

    def test_single_sample(self):
        sols = krige_solve([(2.0, 3.0, 7.5)], VG, [(0.0, 0.0)], full=True)
        assert sols[0].value == 7.5
        assert np.allclose(sols[0].weights, [1.0])

    def test_three_sample_dense_oracle(self):
        s = np.array([(0.0, 0.0, 1.0), (3.0, 0.0, 2.0), (0.0, 4.0, 4.0)])
        target = (1.0, 1.0)
        sols = krige_solve(s, VG, [target], full=True)
        val, w, var = _dense_oracle(s, VG, target)
        assert abs(sols[0].value - val) < 1e-9
        assert np.max(np.abs(sols[0].weights - w)) < 1e-9
        assert abs(sols[0].variance - var) < 1e-9

    def test_constant_field_reproduced(self):
        rng = np.random.default_rng(3)
        s = np.column_stack([rng.random((10, 2)) * 5, np.full(10, 42.0)])
        out = krige_predict(s, VG, rng.random((20, 2)) * 5)
        assert np.max(np.abs(out[:, 0] - 42.0)) < 1e-8

    def test_variance_nonnegative(self):
        s = self._samples(n=15, seed=4)
        out = krige_predict(s, VG, np.random.default_rng(5).random((30, 2)) * 8)
        assert np.all(out[:, 1] >= -1e-9)

    def test_duplicate_locations_averaged(self):
        s = [(0.0, 0.0, 2.0), (0.0, 0.0, 4.0), (1.0, 1.0, 6.0)]
        with pytest.warns(UserWarning):
            out = krige_predict(s, VG, [(0.0, 0.0)])
        assert abs(out[0, 0] - 3.0) < 1e-8


class TestGridSearchKinds:
    def test_single_candidate_returned(self):
        rng = np.random.default_rng(6)
        xy = rng.random((30, 2)) * 6
        v = np.cos(xy[:, 0]) + xy[:, 1] * 0.2
        s = np.column_stack([xy, v])
        kind, model, results = kriging_grid_search(s, kinds=("exponential",))
        assert kind == "exponential"
        assert model.kind == "exponential"
        assert set(results) == {"exponential"}

    def test_tie_breaks_to_declaration_order(self):
        rng = np.random.default_rng(7)
        xy = rng.random((25, 2)) * 6
        s = np.column_stack([xy, np.full(25, 5.0) + 1e-15 * xy[:, 0]])
        kind, _, results = kriging_grid_search(
            s, kinds=("spherical", "exponential", "gaussian"))
        ok = [k for k in ("spherical", "exponential", "gaussian")
              if k in results]
        # constant field: all kinds trivially exact, first fitted kind wins
        assert kind == ok[0]

    def test_spherical_process_mostly_selected(self):
        wins = 0
        reps = 20
        n = 80
        for seed in range(reps):
            rng = np.random.default_rng(seed)
            xy = rng.random((n, 2)) * 10
            truth = VariogramModel("spherical", 0.0, 1.0, 2.5)
            d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
            cov = 1.0 - truth(d)
            cov[np.arange(n), np.arange(n)] = 1.0
            L = np.linalg.cholesky(cov + 1e-8 * np.eye(n))
            v = L @ rng.standard_normal(n)
            kind, _, _ = kriging_grid_search(np.column_stack([xy, v]),
                                             seed=seed)
            wins += kind == "spherical"
        assert wins > reps / 2

    def test_not_enough_samples(self):
        with pytest.raises(KrigingError):
            kriging_grid_search([(0.0, 0.0, 1.0), (1.0, 0.0, 2.0)],
                                cv_folds=5)

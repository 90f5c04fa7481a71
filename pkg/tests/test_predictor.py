import numpy as np
import pytest

from kinrom.discretization import gauss_legendre
from kinrom.errors import ConditioningError, InsufficientData, InvalidArgument
from kinrom.hybrid import build_bundle
from kinrom.partition import uniform_partition
from kinrom.pod import reconstruct
from kinrom.predictor import (
    PredictionReport,
    RbfInterpolator,
    evaluate,
    interpolate_1d,
    interpolate_rbf,
    predict,
)

from .oracles import natural_cubic_spline_eval
from .test_partition import synthetic_matrix


class TestSpline:
    def test_knot_reproduction(self):
        rng = np.random.default_rng(0)
        params = np.linspace(0.0, 2.0, 7)
        coords = rng.standard_normal((4, 7))
        for j, mu in enumerate(params):
            np.testing.assert_allclose(
                interpolate_1d(coords, params, mu), coords[:, j], atol=1e-12
            )

    def test_affine_coordinates_reproduced_exactly(self):
        params = np.linspace(1.0, 3.0, 9)
        coords = np.vstack([2.0 * params - 1.0, -0.5 * params + 4.0])
        for mu in (1.37, 2.0, 2.99):
            np.testing.assert_allclose(
                interpolate_1d(coords, params, mu),
                [2.0 * mu - 1.0, -0.5 * mu + 4.0],
                rtol=1e-13,
            )

    def test_matches_tridiagonal_oracle(self):
        rng = np.random.default_rng(1)
        params = np.sort(rng.uniform(0.0, 5.0, 11))
        coords = np.sin(params)[None, :] + 0.1 * rng.standard_normal((3, 11))
        for mu in rng.uniform(params[0], params[-1], 20):
            mine = interpolate_1d(coords, params, mu)
            oracle = np.array(
                [natural_cubic_spline_eval(params, coords[k], mu) for k in range(3)]
            )
            np.testing.assert_allclose(mine, oracle, atol=1e-10)

    def test_single_parameter_rejected(self):
        with pytest.raises(InsufficientData):
            interpolate_1d(np.ones((2, 1)), np.array([1.0]), 1.0)

    def test_linear_fallback_for_few_parameters(self):
        params = np.array([0.0, 1.0])
        coords = np.array([[0.0, 2.0]])
        np.testing.assert_allclose(interpolate_1d(coords, params, 0.25), [0.5])
        params3 = np.array([0.0, 1.0, 2.0])
        coords3 = np.array([[0.0, 2.0, 4.0]])
        np.testing.assert_allclose(interpolate_1d(coords3, params3, 1.5), [3.0])


class TestRbf:
    def test_kernel_vanishes_at_zero_distance(self):
        interp = RbfInterpolator(np.array([0.0, 1.0]))
        assert interp.kernel[0, 0] == 0.0 and interp.kernel[1, 1] == 0.0

    def test_two_point_worked_example(self):
        params = np.array([0.0, 1.0])
        values = np.array([[0.0, 1.0]])
        interp = RbfInterpolator(params)
        w = interp.weights(values)
        np.testing.assert_allclose(w, [[1.0, 0.0]], atol=1e-15)
        np.testing.assert_allclose(interp.interpolate(values, 0.5), [0.03125], atol=1e-15)

    def test_knot_reproduction(self):
        rng = np.random.default_rng(2)
        params = rng.uniform(0, 1, size=(6, 2))
        values = rng.standard_normal((3, 6))
        for j in range(6):
            got = interpolate_rbf(values, params, params[j])
            np.testing.assert_allclose(got, values[:, j], atol=1e-10)

    def test_duplicate_parameters_rejected(self):
        with pytest.raises(InvalidArgument):
            RbfInterpolator(np.array([1.0, 1.0]))

    def test_ill_conditioned_kernel_reported(self):
        params = np.array([0.0, 1.0, 1.0 + 1e-13])
        with pytest.raises(ConditioningError) as exc_info:
            RbfInterpolator(params)
        assert exc_info.value.condition_number is not None


@pytest.fixture(scope="module")
def pod_bundle():
    s = synthetic_matrix([10, 4], [8, 8], n_params=5, n_h=64, seed=3)
    part = uniform_partition(16.0, 2, s.times)
    return s, build_bundle(s, part, 1e-6, method="uniform-2")


class TestPredict:
    def test_training_parameter_reproduces_interval_reconstruction(self, pod_bundle):
        s, bundle = pod_bundle
        t = float(s.times[3])
        for jp, mu in enumerate(s.params):
            f, _ = predict(bundle, t, float(mu))
            m = bundle.maps[0]
            col = jp * 8 + 3
            direct = reconstruct(m.basis, m.coords[:, col], bundle.mean_offset)
            np.testing.assert_allclose(f, direct, atol=1e-10)

    def test_zero_rank_interval_returns_mean(self):
        s = synthetic_matrix([4], [8], n_params=4, n_h=32, seed=4)
        zeroed = type(s)(np.zeros_like(s.data), s.times, s.params, s.mean_offset + 1.5)
        part = uniform_partition(8.0, 1, zeroed.times)
        bundle = build_bundle(zeroed, part, 1e-4)
        f, _ = predict(bundle, float(s.times[2]), 1.0)
        np.testing.assert_array_equal(f, zeroed.mean_offset)

    def test_boundary_time_belongs_to_left_interval(self, pod_bundle):
        s, bundle = pod_bundle
        split_time = float(s.times[7])  # last sample of interval 0: (0, b] owns b
        assert bundle.interval_of_time(split_time) == 0
        assert bundle.interval_of_time(float(s.times[8])) == 1

    def test_off_grid_time_rejected(self, pod_bundle):
        _, bundle = pod_bundle
        with pytest.raises(InvalidArgument):
            predict(bundle, 3.1415, 1.0)

    def test_rho_computed_with_quadrature(self, pod_bundle):
        s, bundle = pod_bundle
        quad = gauss_legendre(4)  # n_h = 64 = 4 velocities x 16 dofs
        f, rho = predict(bundle, float(s.times[0]), 2.0, quad=quad)
        np.testing.assert_allclose(rho, quad.average(f.reshape(4, 16)), atol=1e-14)


class TestEvaluate:
    def test_exact_references_give_zero_errors(self, pod_bundle):
        s, bundle = pod_bundle
        times = s.times[:4]
        mus = s.params[:2]
        refs = np.empty((2, 4, s.n_dofs))
        for ip, mu in enumerate(mus):
            for it, t in enumerate(times):
                refs[ip, it] = predict(bundle, float(t), float(mu))[0]
        report = evaluate(bundle, refs, times, mus, quad=gauss_legendre(4))
        assert all(r["e_f"] == 0.0 for r in report.scored)
        assert report.e_f_mean == 0.0 and report.e_rho_mean == 0.0

    def test_homogeneous_scaling_gives_exact_relative_error(self, pod_bundle):
        s, bundle = pod_bundle
        t = float(s.times[1])
        mu = float(s.params[0])
        pred = predict(bundle, t, mu)[0]
        refs = (pred / 1.01)[None, None, :]
        report = evaluate(bundle, refs, np.array([t]), np.array([mu]))
        np.testing.assert_allclose(report.rows[0]["e_f"], 0.01, rtol=1e-12)

    def test_zero_reference_skipped_and_flagged(self, pod_bundle):
        s, bundle = pod_bundle
        t = float(s.times[0])
        refs = np.zeros((1, 1, s.n_dofs))
        report = evaluate(bundle, refs, np.array([t]), np.array([1.0]))
        assert report.rows[0]["skipped"]
        assert len(report.scored) == 0

    def test_aggregates_are_arithmetic_means(self, pod_bundle):
        s, bundle = pod_bundle
        times = s.times[:3]
        mus = np.array([0.5, 2.5])
        rng = np.random.default_rng(5)
        refs = rng.uniform(0.5, 1.0, size=(2, 3, s.n_dofs))
        report = evaluate(bundle, refs, times, mus)
        np.testing.assert_allclose(
            report.e_f_mean, np.mean([r["e_f"] for r in report.scored]), rtol=1e-15
        )
        assert all(r["e_f"] >= 0 for r in report.scored)

    def test_out_of_hull_flagged(self, pod_bundle):
        s, bundle = pod_bundle
        t = float(s.times[0])
        refs = np.ones((1, 1, s.n_dofs))
        report = evaluate(bundle, refs, np.array([t]), np.array([s.params.max() + 1.0]))
        assert report.rows[0]["out_of_hull"]

    def test_scaling_invariance_of_errors(self):
        # Scaling the training data and references together leaves the
        # relative errors unchanged.
        s = synthetic_matrix([6], [8], n_params=5, n_h=32, seed=6)
        scale = 3.7
        scaled = type(s)(scale * s.data, s.times, s.params, scale * s.mean_offset)
        part = uniform_partition(8.0, 1, s.times)
        b1 = build_bundle(s, part, 1e-6)
        b2 = build_bundle(scaled, part, 1e-6)
        rng = np.random.default_rng(7)
        refs = rng.uniform(1.0, 2.0, size=(1, 2, s.n_dofs))
        times = s.times[:2]
        mus = np.array([1.3])
        r1 = evaluate(b1, refs, times, mus)
        r2 = evaluate(b2, scale * refs, times, mus)
        np.testing.assert_allclose(
            [r["e_f"] for r in r1.scored], [r["e_f"] for r in r2.scored], rtol=1e-9
        )

    def test_csv_outputs(self, pod_bundle, tmp_path):
        s, bundle = pod_bundle
        refs = np.ones((1, 2, s.n_dofs))
        report = evaluate(bundle, refs, s.times[:2], np.array([1.0]))
        rows_csv = tmp_path / "rows.csv"
        summary_csv = tmp_path / "summary.csv"
        report.write_rows_csv(rows_csv)
        report.write_summary_csv(summary_csv, bundle)
        header = rows_csv.read_text().splitlines()[0]
        assert header.split(",") == [
            "t_test", "mu_test", "interval", "e_f", "e_rho",
            "online_us", "out_of_hull", "skipped",
        ]
        assert "E_f" in summary_csv.read_text()

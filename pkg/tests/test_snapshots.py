import numpy as np
import pytest

from kinrom.errors import EmptySliceError, FormatError, UnsupportedVersion
from kinrom.fom import ProblemSpec
from kinrom.snapshots import SnapshotMatrix, generate, load, save, slice_time_interval


def _tiny_spec(n_el=4, n_v=2, final_time=1.0, dt=0.125):
    return ProblemSpec(
        domain=(0.0, 1.0),
        n_elements=n_el,
        n_velocities=n_v,
        sigma_s=lambda x, mu: 0.2,
        sigma_a=lambda x, mu: 0.1,
        source=lambda x: 0.5,
        inflow_left=lambda t, mu: mu,
        inflow_right=lambda t, mu: 0.0,
        initial=lambda x, v: 0.0,
        final_time=final_time,
        dt=dt,
    )


@pytest.fixture(scope="module")
def small_matrix():
    spec = _tiny_spec()
    times = [k * spec.dt for k in range(1, 9)]
    return generate(spec, [1.0, 2.0, 3.0], times)


class TestGenerate:
    def test_shapes_and_column_identity(self, small_matrix):
        s = small_matrix
        assert s.data.shape == (16, 24)
        assert s.n_times == 8 and s.n_params == 3
        # Column (j*n_t + i) must be the run for params[j] at times[i].
        spec = _tiny_spec()
        from kinrom.fom import run

        states = run(spec, 2.0, [s.times[3]])
        np.testing.assert_allclose(
            s.data[:, 1 * 8 + 3] + s.mean_offset, states[0].values, rtol=0, atol=1e-14
        )

    def test_centered_columns_sum_to_zero(self, small_matrix):
        s = small_matrix
        total = s.data.sum(axis=1)
        assert np.linalg.norm(total) <= 1e-10 * np.linalg.norm(s.data)

    def test_mean_consistency(self, small_matrix):
        s = small_matrix
        raw = s.data + s.mean_offset[:, None]
        scale = np.abs(raw).max()
        np.testing.assert_allclose(
            raw.mean(axis=1), s.mean_offset, rtol=0, atol=1e-13 * max(scale, 1.0)
        )

    def test_single_parameter_single_time(self):
        spec = _tiny_spec()
        s = generate(spec, [1.5], [0.5])
        assert s.data.shape[1] == 1
        np.testing.assert_array_equal(s.data[:, 0], 0.0)
        assert np.linalg.norm(s.mean_offset) > 0

    def test_threaded_generation_matches_serial(self):
        spec = _tiny_spec()
        times = [k * spec.dt for k in range(1, 5)]
        serial = generate(spec, [1.0, 2.0], times, threads=1)
        threaded = generate(spec, [1.0, 2.0], times, threads=2)
        np.testing.assert_array_equal(serial.data, threaded.data)


class TestSlice:
    def test_half_open_selection(self, small_matrix):
        s = small_matrix
        sub = slice_time_interval(s, (0.25, 0.5))
        np.testing.assert_array_equal(sub.times, [0.375, 0.5])
        assert sub.data.shape[1] == 2 * 3
        np.testing.assert_array_equal(sub.mean_offset, s.mean_offset)
        np.testing.assert_array_equal(sub.data[:, 0], s.data[:, 2])

    def test_full_range_is_identity(self, small_matrix):
        s = small_matrix
        sub = slice_time_interval(s, (0.0, 1.0))
        np.testing.assert_array_equal(sub.data, s.data)

    def test_empty_interval_rejected(self, small_matrix):
        with pytest.raises(EmptySliceError):
            slice_time_interval(small_matrix, (5.0, 6.0))

    def test_expected_column_count_per_parameter(self, small_matrix):
        sub = slice_time_interval(small_matrix, (0.0, 0.5))
        assert sub.data.shape[1] // sub.n_params == int((small_matrix.times <= 0.5).sum())


class TestRoundTrip:
    def test_save_load_bit_exact(self, small_matrix, tmp_path):
        p = tmp_path / "snap.bin"
        save(small_matrix, p)
        back = load(p)
        np.testing.assert_array_equal(back.data, small_matrix.data)
        np.testing.assert_array_equal(back.mean_offset, small_matrix.mean_offset)
        np.testing.assert_array_equal(back.times, small_matrix.times)
        np.testing.assert_array_equal(back.params, small_matrix.params)

    def test_wrong_magic_rejected(self, small_matrix, tmp_path):
        p = tmp_path / "snap.bin"
        save(small_matrix, p)
        blob = bytearray(p.read_bytes())
        blob[:4] = b"XXXX"
        p.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load(p)

    def test_future_version_rejected(self, small_matrix, tmp_path):
        p = tmp_path / "snap.bin"
        save(small_matrix, p)
        blob = bytearray(p.read_bytes())
        blob[4:8] = (2).to_bytes(4, "little")
        p.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersion):
            load(p)

    def test_truncated_payload_reports_offset(self, small_matrix, tmp_path):
        p = tmp_path / "snap.bin"
        save(small_matrix, p)
        blob = p.read_bytes()
        p.write_bytes(blob[: len(blob) - 16])
        with pytest.raises(FormatError) as exc_info:
            load(p)
        assert exc_info.value.offset is not None

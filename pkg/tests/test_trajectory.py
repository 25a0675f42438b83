"""Tests for trajectory containers, Hankel assembly, and excitation checks."""

from fractions import Fraction

import numpy as np
import pytest

from deepchub.trajectory import (
    HankelBlocks,
    PEDiagnostic,
    SignalDims,
    Trajectory,
    WindowTooLong,
    build_hankel,
    check_persistent_excitation,
    load_trajectory,
    partition_hankel,
    save_trajectory,
)
from deepchub.validation import DimensionMismatch


def exact_rank(M) -> int:
    """Rank over the rationals by Gaussian elimination (oracle, no tolerances)."""
    rows = [[Fraction(x).limit_denominator(10**12) for x in row] for row in np.asarray(M, dtype=float)]
    rank = 0
    n_cols = len(rows[0]) if rows else 0
    pivot_row = 0
    for col in range(n_cols):
        pivot = next((r for r in range(pivot_row, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[pivot_row], rows[pivot] = rows[pivot], rows[pivot_row]
        pv = rows[pivot_row][col]
        for r in range(pivot_row + 1, len(rows)):
            if rows[r][col] != 0:
                factor = rows[r][col] / pv
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[pivot_row])]
        pivot_row += 1
        rank += 1
        if pivot_row == len(rows):
            break
    return rank


def naive_hankel(w, L):
    """Reference double-loop Hankel construction."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.shape[0] == 1 and w.size > w.shape[1]:
        w = w.T
    if w.ndim == 1:
        w = w[:, None]
    T, c = w.shape
    H = np.zeros((L * c, T - L + 1))
    for j in range(T - L + 1):
        for t in range(L):
            H[t * c:(t + 1) * c, j] = w[j + t]
    return H


class TestBuildHankel:
    def test_matches_naive_construction(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            T = int(rng.integers(4, 30))
            c = int(rng.integers(1, 5))
            L = int(rng.integers(1, T + 1))
            w = rng.normal(size=(T, c))
            np.testing.assert_array_equal(build_hankel(w, L), naive_hankel(w, L))

    def test_scalar_signal_shape(self):
        H = build_hankel(np.arange(10.0), 3)
        assert H.shape == (3, 8)
        np.testing.assert_array_equal(H[:, 0], [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(H[:, -1], [7.0, 8.0, 9.0])

    def test_column_is_flattened_window(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(15, 3))
        H = build_hankel(w, 4)
        np.testing.assert_array_equal(H[:, 5], w[5:9].ravel())

    def test_shift_structure(self):
        # Consecutive columns overlap by L-1 blocks.
        rng = np.random.default_rng(2)
        w = rng.normal(size=(20, 2))
        L, c = 6, 2
        H = build_hankel(w, L)
        np.testing.assert_array_equal(H[: (L - 1) * c, 1:], H[c:, :-1])

    def test_window_too_long(self):
        with pytest.raises(WindowTooLong):
            build_hankel(np.arange(5.0), 6)

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            build_hankel(np.arange(5.0), 0)


class TestPersistentExcitation:
    def test_prbs_order_three_rank_matches_exact_oracle(self):
        # +-1 sequence, m=1: compare the numerical rank with exact
        # Gaussian elimination over the rationals.
        rng = np.random.default_rng(7)
        bits = rng.integers(0, 2, size=40)
        w = (2.0 * bits - 1.0)[:, None]
        for L in (1, 2, 3, 5):
            H = build_hankel(w, L)
            diag = check_persistent_excitation(w, L, n_bound=1)
            assert diag.rank == exact_rank(H)

    def test_gaussian_noise_is_exciting(self):
        rng = np.random.default_rng(3)
        m, L, n_bound = 2, 4, 3
        T = (m + 1) * (L + n_bound) - 1
        w = rng.normal(size=(T, m))
        diag = check_persistent_excitation(w, L, n_bound=n_bound)
        assert diag.is_exciting
        assert diag.rank == diag.required_rank == L * m
        assert diag.length_actual == diag.length_required == T

    def test_length_bound_enforced(self):
        rng = np.random.default_rng(4)
        m, L, n_bound = 2, 4, 3
        T = (m + 1) * (L + n_bound) - 2  # one sample short
        w = rng.normal(size=(T, m))
        diag = check_persistent_excitation(w, L, n_bound=n_bound)
        assert not diag.is_exciting
        assert "length" in diag.reason

    def test_constant_signal_not_exciting(self):
        w = np.ones((200, 1))
        diag = check_persistent_excitation(w, 2, n_bound=1)
        assert not diag.is_exciting
        assert diag.rank == 1

    def test_periodic_signal_rank_capped_at_period(self):
        # A signal with period 4 cannot be exciting of order > 4.
        base = np.array([0.3, -1.2, 0.8, 2.0])
        w = np.tile(base, 50)[:, None]
        diag = check_persistent_excitation(w, 5, n_bound=1)
        assert not diag.is_exciting
        assert diag.rank == 4

    def test_monotone_in_order(self):
        # Exciting of order L implies exciting of every order below L.
        rng = np.random.default_rng(5)
        for seed in range(5):
            w = np.random.default_rng(seed).normal(size=(60, 2))
            upper = 6
            diag_hi = check_persistent_excitation(w, upper, n_bound=2)
            if not diag_hi.is_exciting:
                continue
            for L in range(1, upper):
                assert check_persistent_excitation(w, L, n_bound=2).is_exciting

    def test_window_longer_than_data_returns_verdict(self):
        diag = check_persistent_excitation(np.ones((3, 1)), 10, n_bound=1)
        assert not diag.is_exciting
        assert diag.rank == 0
        assert "shorter" in diag.reason


class TestPartitionHankel:
    def test_block_shapes_full_scale(self):
        # Hub-sized data set: 22 inputs, 7 outputs, 4416 samples.
        rng = np.random.default_rng(6)
        traj = Trajectory(u=rng.normal(size=(4416, 22)), y=rng.normal(size=(4416, 7)))
        blocks = partition_hankel(traj, T_ini=30, T_f=24)
        assert blocks.n_cols == 4416 - 54 + 1 == 4363
        assert blocks.U_p.shape == (30 * 22, 4363)
        assert blocks.Y_p.shape == (30 * 7, 4363)
        assert blocks.U_f.shape == (24 * 22, 4363)
        assert blocks.Y_f.shape == (24 * 7, 4363)
        assert blocks.stacked().shape == (54 * 29, 4363)

    def test_partition_consistent_with_full_hankel(self):
        rng = np.random.default_rng(8)
        traj = Trajectory(u=rng.normal(size=(30, 2)), y=rng.normal(size=(30, 3)))
        blocks = partition_hankel(traj, T_ini=4, T_f=3)
        np.testing.assert_array_equal(
            np.vstack([blocks.U_p, blocks.U_f]), build_hankel(traj.u, 7)
        )
        np.testing.assert_array_equal(
            np.vstack([blocks.Y_p, blocks.Y_f]), build_hankel(traj.y, 7)
        )

    def test_column_is_a_trajectory_window(self):
        # Every Hankel column must reproduce a contiguous slice of the data.
        rng = np.random.default_rng(9)
        traj = Trajectory(u=rng.normal(size=(25, 2)), y=rng.normal(size=(25, 1)))
        blocks = partition_hankel(traj, T_ini=3, T_f=2)
        j = 7
        np.testing.assert_array_equal(blocks.U_p[:, j], traj.u[j:j + 3].ravel())
        np.testing.assert_array_equal(blocks.U_f[:, j], traj.u[j + 3:j + 5].ravel())
        np.testing.assert_array_equal(blocks.Y_f[:, j], traj.y[j + 3:j + 5].ravel())

    def test_too_short_raises(self):
        traj = Trajectory(u=np.ones((5, 1)), y=np.ones((5, 1)))
        with pytest.raises(WindowTooLong):
            partition_hankel(traj, T_ini=3, T_f=3)


class TestTrajectoryContainer:
    def test_mismatched_lengths_rejected(self):
        with pytest.raises(DimensionMismatch):
            Trajectory(u=np.ones((5, 1)), y=np.ones((4, 1)))

    def test_dims(self):
        traj = Trajectory(u=np.ones((5, 3)), y=np.ones((5, 2)))
        assert traj.dims == SignalDims(m=3, p=2)
        assert traj.length == 5

    def test_non_finite_rejected(self):
        u = np.ones((5, 1))
        u[2] = np.nan
        with pytest.raises(ValueError):
            Trajectory(u=u, y=np.ones((5, 1)))


class TestCsvRoundTrip:
    def test_bitwise_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        traj = Trajectory(
            u=rng.normal(size=(17, 3)), y=rng.normal(size=(17, 2)), sample_time=1.0
        )
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path, input_units=["kW"] * 3, output_units=["degC", "V"])
        back = load_trajectory(path)
        np.testing.assert_array_equal(back.u, traj.u)
        np.testing.assert_array_equal(back.y, traj.y)
        assert back.sample_time == traj.sample_time

    def test_header_layout(self, tmp_path):
        traj = Trajectory(u=np.zeros((2, 2)), y=np.zeros((2, 1)))
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,u_1,u_2,y_1"

    def test_sidecar_units(self, tmp_path):
        import json

        traj = Trajectory(u=np.zeros((2, 1)), y=np.zeros((2, 1)))
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path, input_units=["A"], output_units=["V"])
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        assert meta["input_units"] == ["A"]
        assert meta["output_units"] == ["V"]
        assert meta["sample_time_hours"] == 1.0

"""Harness tests: scenario round-trip, collection, episodes, metrics, reports."""

import copy
import numpy as np
import pytest

from deepchub.controller import ComfortSchedule, DeepcController
from deepchub.harness import (
    CollectionResult,
    ComparisonReport,
    EpisodeLog,
    MetricsReport,
    MissingPredictions,
    NotExciting,
    ScenarioConfig,
    ScenarioMismatch,
    collect_data,
    compare_report,
    compute_prediction_error,
    compute_violation_metrics,
    load_scenario,
    run_episode,
    save_scenario,
)
from deepchub.layout import HubLayout

LAYOUT = HubLayout()


# ---------------------------------------------------------------------------
# shared fixtures: one desk collection and one short paired episode set
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_cfg():
    return ScenarioConfig(horizon_days=2)


@pytest.fixture(scope="module")
def desk_collection(desk_cfg):
    return collect_data(desk_cfg)


@pytest.fixture(scope="module")
def deepc_log(desk_cfg, desk_collection):
    return run_episode(desk_cfg, "deepc", data=desk_collection)


@pytest.fixture(scope="module")
def rbc_log(desk_cfg):
    return run_episode(desk_cfg, "rbc")


def _hand_log(y, hours=None, u=None, price=None, predictions=None,
              controller="rbc", meta=None):
    """Minimal EpisodeLog around explicit measurement rows."""
    y = np.asarray(y, dtype=float)
    H = y.shape[0]
    if hours is None:
        # hour-of-day 10: the following hour is occupied
        hours = 10 + 24 * np.arange(H)
    hours = np.asarray(hours)
    if u is None:
        u = np.zeros((H, LAYOUT.m))
    if price is None:
        price = np.zeros(H)
    base_meta = {"capacity_nominal": 160.0, "sample_time": 1.0,
                 "kw_per_amp": 0.066}
    base_meta.update(meta or {})
    return EpisodeLog(
        controller=controller, hours=hours, u=np.asarray(u, dtype=float),
        y=y, soc=np.full(H, 0.5), capacity=np.full(H, 160.0),
        cycles=np.zeros(H), price=np.asarray(price, dtype=float),
        statuses=["rbc"] * H, solve_time=np.zeros(H),
        predictions=predictions, meta=base_meta, layout=LAYOUT,
    )


def _inside_rows(H):
    """H output rows fully inside the occupied comfort band."""
    y = np.zeros((H, LAYOUT.p))
    y[:, LAYOUT.zone_temps] = 23.0
    y[:, LAYOUT.voltage] = 65.0
    return y


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------


class TestScenarioConfig:
    def test_defaults_validate(self):
        ScenarioConfig().validate()

    def test_paper_scale_lengths(self):
        cfg = ScenarioConfig.paper_scale()
        cfg.validate()
        assert cfg.T_d == 4416
        assert cfg.horizon_days == 365
        assert cfg.deepc.T_ini == 30
        assert (cfg.tariff_day, cfg.tariff_night) == (0.27, 0.18)

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            ScenarioConfig(horizon_days=0).validate()

    def test_collection_must_cover_one_window(self):
        with pytest.raises(ValueError):
            ScenarioConfig(T_d=30).validate()

    def test_warmup_must_cover_initial_window(self):
        with pytest.raises(ValueError):
            ScenarioConfig(warmup_hours=4).validate()

    def test_soc_guards_ordered(self):
        with pytest.raises(ValueError):
            ScenarioConfig(collect_soc_guards=(0.7, 0.3)).validate()

    def test_yaml_round_trip(self, tmp_path):
        cfg = ScenarioConfig(seed=7, horizon_days=3, tariff_day=0.31,
                             collect_soc_guards=(0.3, 0.6))
        path = tmp_path / "scenario.yaml"
        save_scenario(cfg, path)
        loaded = load_scenario(path)
        assert loaded == cfg

    def test_yaml_round_trip_nested_overrides(self, tmp_path):
        cfg = ScenarioConfig.paper_scale(seed=3)
        path = tmp_path / "scenario.yaml"
        save_scenario(cfg, path)
        loaded = load_scenario(path)
        assert loaded == cfg
        assert loaded.deepc.T_ini == 30

    def test_load_rejects_invalid(self, tmp_path):
        cfg = ScenarioConfig()
        path = tmp_path / "scenario.yaml"
        save_scenario(cfg, path)
        text = path.read_text().replace("horizon_days: 10", "horizon_days: 0")
        path.write_text(text)
        with pytest.raises(ValueError):
            load_scenario(path)

    def test_fingerprint_fields(self):
        fp = ScenarioConfig(seed=5).fingerprint()
        assert fp["seed"] == 5
        assert set(fp) == {"name", "seed", "start_day", "horizon_days", "T_d"}


# ---------------------------------------------------------------------------
# data collection
# ---------------------------------------------------------------------------


class TestCollectData:
    def test_full_scale_lengths(self):
        # full-scale collection: 4416 hours, 4416 - (30 + 24) + 1 columns
        coll = collect_data(ScenarioConfig.paper_scale())
        assert coll.trajectory.u.shape[0] == 4416
        assert coll.blocks.U_p.shape[1] == 4363
        assert coll.blocks.Y_f.shape[1] == 4363
        assert coll.pe.is_exciting

    def test_short_collection_rank_oracle(self):
        # the excitation verdict must agree with a brute-force rank of the
        # explicitly assembled control-channel Hankel matrix
        cfg = ScenarioConfig(T_d=1200)
        coll = collect_data(cfg)
        assert coll.pe.is_exciting
        assert coll.pe.order == cfg.deepc.T_ini + cfg.deepc.T_f
        U = coll.trajectory.u[:, : LAYOUT.n_controls]
        depth = coll.pe.order
        cols = U.shape[0] - depth + 1
        hankel = np.empty((depth * LAYOUT.n_controls, cols))
        for k in range(depth):
            hankel[k * LAYOUT.n_controls:(k + 1) * LAYOUT.n_controls] = \
                U[k: k + cols].T
        assert np.linalg.matrix_rank(hankel) == coll.pe.rank
        assert coll.pe.rank == depth * LAYOUT.n_controls

    def test_same_seed_is_bitwise_identical(self, desk_cfg, desk_collection):
        again = collect_data(desk_cfg)
        assert np.array_equal(again.trajectory.u, desk_collection.trajectory.u)
        assert np.array_equal(again.trajectory.y, desk_collection.trajectory.y)

    def test_seed_changes_data(self, desk_cfg, desk_collection):
        cfg = copy.deepcopy(desk_cfg)
        cfg.seed = desk_cfg.seed + 1
        other = collect_data(cfg)
        assert not np.array_equal(other.trajectory.u,
                                  desk_collection.trajectory.u)

    def test_no_dither_fails_excitation(self):
        cfg = ScenarioConfig(T_d=1200)
        with pytest.raises(NotExciting):
            collect_data(cfg, dither=False)

    def test_no_dither_without_gate_reports_verdict(self):
        cfg = ScenarioConfig(T_d=1200)
        coll = collect_data(cfg, dither=False, require_pe=False)
        assert not coll.pe.is_exciting
        assert coll.trajectory.u.shape[0] == 1200

    def test_battery_stays_within_clamp(self, desk_collection):
        i_b = desk_collection.trajectory.u[:, LAYOUT.battery]
        assert np.all(np.abs(i_b) <= 22.0 + 1e-12)

    def test_prbs_seeds_recorded(self, desk_collection):
        seeds = desk_collection.prbs_seeds
        assert len(seeds["radiators"]) == 5
        assert len(seeds["blinds"]) == 4


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------


class TestRunEpisode:
    def test_one_day_rbc_has_24_records(self):
        log = run_episode(ScenarioConfig(horizon_days=1), "rbc")
        assert log.n_hours == 24
        assert len(log.statuses) == 24
        assert np.all(np.abs(log.u[:, LAYOUT.battery]) <= 22.0 + 1e-12)

    def test_unknown_controller_rejected(self):
        with pytest.raises(ValueError):
            run_episode(ScenarioConfig(horizon_days=1), "mpc")

    def test_deepc_requires_collection(self):
        with pytest.raises(ValueError):
            run_episode(ScenarioConfig(horizon_days=1), "deepc")

    def test_runtime_recorded(self, rbc_log):
        assert rbc_log.meta["runtime_seconds"] > 0.0

    def test_rbc_replays_bitwise(self, desk_cfg, rbc_log):
        again = run_episode(desk_cfg, "rbc")
        assert again.csv_text() == rbc_log.csv_text()

    def test_deepc_replays_bitwise(self, desk_cfg, desk_collection, deepc_log):
        again = run_episode(desk_cfg, "deepc", data=desk_collection)
        assert again.csv_text() == deepc_log.csv_text()
        assert np.array_equal(again.predictions, deepc_log.predictions,
                              equal_nan=True)

    def test_deepc_steps_solve(self, deepc_log):
        assert all(s == "Optimal" for s in deepc_log.statuses)
        assert np.all(np.isfinite(deepc_log.predictions))

    def test_applied_input_equals_plan_first_step(self, desk_cfg,
                                                  desk_collection,
                                                  monkeypatch):
        # receding-horizon contract: the logged input row is element 0 of the
        # plan computed at that step
        first_inputs = []
        original = DeepcController.plan

        def recording_plan(self, *args, **kwargs):
            plan = original(self, *args, **kwargs)
            first_inputs.append(plan.first_input().copy())
            return plan

        monkeypatch.setattr(DeepcController, "plan", recording_plan)
        cfg = copy.deepcopy(desk_cfg)
        cfg.horizon_days = 1
        log = run_episode(cfg, "deepc", data=desk_collection)
        assert len(first_inputs) == log.n_hours
        for t, u0 in enumerate(first_inputs):
            assert np.array_equal(log.u[t, : LAYOUT.n_controls], u0)

    def test_hours_are_absolute(self, desk_cfg, rbc_log):
        start = desk_cfg.start_day * 24
        assert rbc_log.hours[0] == start
        assert rbc_log.hours[-1] == start + rbc_log.n_hours - 1

    def test_save_load_round_trip(self, deepc_log, tmp_path):
        out = tmp_path / "episode"
        deepc_log.save(out)
        loaded = EpisodeLog.load(out)
        assert loaded.csv_text() == deepc_log.csv_text()
        assert np.array_equal(loaded.predictions, deepc_log.predictions,
                              equal_nan=True)
        assert loaded.controller == "deepc"

    def test_rbc_save_has_no_predictions(self, rbc_log, tmp_path):
        out = tmp_path / "episode"
        rbc_log.save(out)
        assert not (out / "predictions.npz").exists()
        loaded = EpisodeLog.load(out)
        assert loaded.predictions is None


# ---------------------------------------------------------------------------
# prediction error
# ---------------------------------------------------------------------------


class TestPredictionError:
    def test_rbc_log_raises(self, rbc_log):
        with pytest.raises(MissingPredictions):
            compute_prediction_error(rbc_log)

    def test_exact_predictions_give_zero(self):
        H, T_f = 30, 6
        y = _inside_rows(H)
        y[:, LAYOUT.zone_temps] += 0.01 * np.arange(H)[:, None]
        predictions = np.full((H, T_f, LAYOUT.p), np.nan)
        for t in range(H):
            for k in range(T_f):
                if t + k < H:
                    predictions[t, k] = y[t + k]
        log = _hand_log(y, predictions=predictions, controller="deepc")
        eps = compute_prediction_error(log)
        assert eps.max_room == pytest.approx(0.0, abs=1e-12)
        assert eps.max_voltage == pytest.approx(0.0, abs=1e-12)

    def test_constant_bias_is_reported_exactly(self):
        H, T_f = 30, 6
        y = _inside_rows(H)
        predictions = np.full((H, T_f, LAYOUT.p), np.nan)
        for t in range(H):
            for k in range(T_f):
                if t + k < H:
                    predictions[t, k] = y[t + k]
                    predictions[t, k, LAYOUT.zone_temps] += 0.5
        log = _hand_log(y, predictions=predictions, controller="deepc")
        eps = compute_prediction_error(log)
        assert eps.rooms == pytest.approx(0.5 * np.ones((T_f, 5)))
        assert eps.voltage == pytest.approx(np.zeros(T_f))

    def test_fallback_rows_are_skipped(self):
        H, T_f = 20, 4
        y = _inside_rows(H)
        predictions = np.full((H, T_f, LAYOUT.p), np.nan)
        for t in range(H):
            for k in range(T_f):
                if t + k < H:
                    predictions[t, k] = y[t + k]
        predictions[3] = np.nan  # a held step stores no plan
        log = _hand_log(y, predictions=predictions, controller="deepc")
        eps = compute_prediction_error(log)
        assert np.all(np.isfinite(eps.rooms))
        assert eps.max_room == pytest.approx(0.0, abs=1e-12)

    def test_closed_loop_error_is_finite(self, deepc_log):
        eps = compute_prediction_error(deepc_log)
        assert eps.rooms.shape == (24, 5)
        assert np.all(np.isfinite(eps.rooms))
        assert np.all(np.isfinite(eps.voltage))


# ---------------------------------------------------------------------------
# violation metrics
# ---------------------------------------------------------------------------


class TestViolationMetrics:
    def test_fully_inside_band_is_clean(self):
        log = _hand_log(_inside_rows(20))
        rep = compute_violation_metrics(log)
        assert rep.lbv_per_room_hour == 0.0
        assert rep.ubv_per_room_hour == 0.0
        assert rep.pct_lbv == 0.0
        assert rep.pct_ubv == 0.0
        assert rep.cost == 0.0

    def test_single_violation_in_100_room_hours(self):
        # 20 hours x 5 rooms = 100 room-hours; one room-hour 0.5 degC below
        # the occupied bound gives pct 1% and magnitude 0.5
        y = _inside_rows(20)
        y[4, LAYOUT.zone_temps.start + 2] = 20.5
        log = _hand_log(y)
        rep = compute_violation_metrics(log)
        assert rep.pct_lbv == pytest.approx(1.0)
        assert rep.lbv_per_room_hour == pytest.approx(0.5)
        assert rep.pct_ubv == 0.0

    def test_upper_violation_uses_occupied_bound(self):
        y = _inside_rows(10)
        y[0, LAYOUT.zone_temps] = 26.0
        rep = compute_violation_metrics(_hand_log(y))
        assert rep.pct_ubv == pytest.approx(10.0)
        assert rep.ubv_per_room_hour == pytest.approx(1.0)

    def test_unoccupied_band_applies_at_night(self):
        # measurement for the step applied at hour 23 is read at hour 0,
        # inside the unoccupied window, so 15 degC is not a violation
        y = _inside_rows(1)
        y[0, LAYOUT.zone_temps] = 15.0
        rep = compute_violation_metrics(_hand_log(y, hours=np.array([23])))
        assert rep.pct_lbv == 0.0

    def test_cost_dot_product(self):
        # hand-built 3-hour log: grid power (1, 2, 0) kW at prices
        # (0.2, 0.2, 0.3) costs 0.6
        y = _inside_rows(3)
        u = np.zeros((3, LAYOUT.m))
        u[:, LAYOUT.heat_pump] = (1.0, 2.0, 0.0)
        log = _hand_log(y, u=u, price=(0.2, 0.2, 0.3))
        rep = compute_violation_metrics(log)
        assert rep.cost == pytest.approx(0.6)

    def test_battery_discharge_offsets_cost(self):
        # p_grid = u_h - 0.066 * i_b: discharging 10 A for one hour at 0.2
        # offsets 0.66 kWh of the heat pump draw
        y = _inside_rows(1)
        u = np.zeros((1, LAYOUT.m))
        u[0, LAYOUT.heat_pump] = 2.0
        u[0, LAYOUT.battery] = 10.0
        log = _hand_log(y, u=u, price=(0.2,))
        rep = compute_violation_metrics(log)
        assert rep.cost == pytest.approx(0.2 * (2.0 - 0.66))

    def test_room_permutation_invariance(self):
        rng = np.random.default_rng(3)
        y = _inside_rows(40)
        y[:, LAYOUT.zone_temps] += rng.normal(0.0, 2.0, size=(40, 5))
        log = _hand_log(y)
        base = compute_violation_metrics(log)
        perm = rng.permutation(5)
        y2 = y.copy()
        y2[:, LAYOUT.zone_temps] = y[:, LAYOUT.zone_temps][:, perm]
        swapped = compute_violation_metrics(_hand_log(y2))
        assert swapped.pct_lbv == pytest.approx(base.pct_lbv)
        assert swapped.pct_ubv == pytest.approx(base.pct_ubv)
        assert swapped.lbv_per_room_hour == pytest.approx(base.lbv_per_room_hour)
        assert swapped.ubv_per_room_hour == pytest.approx(base.ubv_per_room_hour)
        assert swapped.cost == pytest.approx(base.cost)

    def test_percentages_bounded(self, deepc_log, rbc_log):
        for log in (deepc_log, rbc_log):
            rep = compute_violation_metrics(log)
            assert 0.0 <= rep.pct_lbv <= 100.0
            assert 0.0 <= rep.pct_ubv <= 100.0
            assert rep.lbv_per_room_hour >= 0.0
            assert rep.ubv_per_room_hour >= 0.0

    def test_capacity_loss_from_log(self):
        y = _inside_rows(3)
        log = _hand_log(y)
        log.capacity = np.array([160.0, 159.8, 159.2])
        log.cycles = np.array([0.0, 0.5, 1.5])
        rep = compute_violation_metrics(log)
        assert rep.cycles == pytest.approx(1.5)
        assert rep.capacity_loss_pct == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# comparison report
# ---------------------------------------------------------------------------


def _paired_reports(deepc_log, rbc_log):
    return (compute_violation_metrics(deepc_log),
            compute_violation_metrics(rbc_log))


class TestCompareReport:
    def test_identical_reports_have_unit_ratios(self, rbc_log):
        rep = compute_violation_metrics(rbc_log)
        cmp = compare_report(rep, rep)
        for name, ratio in cmp.ratios.items():
            assert ratio == pytest.approx(1.0), name

    def test_mismatched_scenarios_rejected(self, desk_cfg, rbc_log):
        cfg = copy.deepcopy(desk_cfg)
        cfg.seed = desk_cfg.seed + 1
        other = run_episode(cfg, "rbc")
        with pytest.raises(ScenarioMismatch):
            compare_report(compute_violation_metrics(other),
                           compute_violation_metrics(rbc_log))

    def test_reference_footer_rendered(self, deepc_log, rbc_log):
        d, r = _paired_reports(deepc_log, rbc_log)
        text = compare_report(d, r).to_text()
        assert "5909.8" in text
        assert "5961.7" in text
        assert "not directly comparable" in text

    def test_to_csv(self, deepc_log, rbc_log, tmp_path):
        d, r = _paired_reports(deepc_log, rbc_log)
        path = tmp_path / "compare.csv"
        compare_report(d, r).to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "metric,deepc,rbc,ratio"
        assert len(lines) == 8

    def test_zero_denominator_ratio(self, rbc_log):
        rep = compute_violation_metrics(rbc_log)
        clean = copy.deepcopy(rep)
        clean.pct_ubv = 0.0
        clean.ubv_per_room_hour = 0.0
        dirty = copy.deepcopy(rep)
        dirty.pct_ubv = 1.0
        cmp = compare_report(dirty, clean)
        assert cmp.ratios["pct_ubv"] == float("inf")
        cmp2 = compare_report(clean, clean)
        assert cmp2.ratios["pct_ubv"] == 1.0

import json

import numpy as np
import pytest

from mpolstm import mpo, weightio
from mpolstm.training import SweepReport, TrialResult
from mpolstm.weightio import ExperimentConfig, IntegrityError, WeightFileError


def random_operator(rng, bond=3):
    plan = mpo.uniform_plan((2, 3), (3, 2), bond)
    return mpo.random_operator(plan, rng, 0.1)


class TestWeightFileRoundTrip:
    def test_mpo_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        op = random_operator(rng)
        path = tmp_path / "w.mpow"
        weightio.save_weights(path, {"u": op})
        back = weightio.load_weights(path)["u"]
        assert back.plan == op.plan
        for a, b in zip(back.cores, op.cores):
            assert a.tobytes() == b.tobytes()

    def test_mixed_bundle_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        bundle = {
            "dense_w": rng.standard_normal((6, 4)),
            "op": random_operator(rng),
            "bias": rng.standard_normal(8),
        }
        path = tmp_path / "bundle.mpow"
        weightio.save_weights(path, bundle)
        back = weightio.load_weights(path)
        assert list(back) == list(bundle)
        assert back["dense_w"].tobytes() == bundle["dense_w"].tobytes()
        assert back["bias"].tobytes() == bundle["bias"].tobytes()
        for a, b in zip(back["op"].cores, bundle["op"].cores):
            assert a.tobytes() == b.tobytes()

    def test_file_bytes_stable_across_saves(self, tmp_path):
        rng = np.random.default_rng(2)
        bundle = {"w": rng.standard_normal((5, 5))}
        p1, p2 = tmp_path / "a.mpow", tmp_path / "b.mpow"
        weightio.save_weights(p1, bundle)
        weightio.save_weights(p2, bundle)
        assert p1.read_bytes() == p2.read_bytes()

    def test_many_random_round_trips(self, tmp_path):
        rng = np.random.default_rng(3)
        path = tmp_path / "loop.mpow"
        for trial in range(25):
            bundle = {"a": rng.standard_normal((3, 7)),
                      "b": random_operator(rng, bond=int(rng.integers(1, 5)))}
            weightio.save_weights(path, bundle)
            back = weightio.load_weights(path)
            assert back["a"].tobytes() == bundle["a"].tobytes()
            for x, y in zip(back["b"].cores, bundle["b"].cores):
                assert x.tobytes() == y.tobytes()


class TestWeightFileCorruption:
    def test_flipped_payload_byte_rejected(self, tmp_path):
        path = tmp_path / "w.mpow"
        weightio.save_weights(path, {"w": np.arange(16.0).reshape(4, 4)})
        raw = bytearray(path.read_bytes())
        raw[-20] ^= 0xFF  # inside the payload
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            weightio.load_weights(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "w.mpow"
        weightio.save_weights(path, {"w": np.arange(16.0).reshape(4, 4)})
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(IntegrityError):
            weightio.load_weights(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "w.mpow"
        weightio.save_weights(path, {"w": np.zeros((2, 2))})
        raw = bytearray(path.read_bytes())
        raw[:4] = b"JUNK"
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            weightio.load_weights(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "w.mpow"
        weightio.save_weights(path, {"w": np.zeros((2, 2))})
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # version field, little-endian low byte
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFileError):
            weightio.load_weights(path)

    def test_missing_file_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            weightio.load_weights(tmp_path / "absent.mpow")


class TestExperimentConfig:
    def test_round_trip_through_json(self, tmp_path):
        cfg = ExperimentConfig()
        path = tmp_path / "cfg.json"
        weightio.save_config(cfg, path)
        back = weightio.load_config(path)
        assert back == cfg

    def test_factor_product_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(n_x=10, input_factors=(2, 2, 2, 2))

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(methods=("dense", "quantize"))

    def test_partial_dict_uses_defaults(self):
        cfg = ExperimentConfig.from_dict({"task": {"seq_len": 9}})
        assert cfg.seq_len == 9
        assert cfg.n_h == ExperimentConfig().n_h


def make_report():
    rows = [
        TrialResult(rate=5.0, method="mpo", metric=0.97, parameter_count=4160,
                    ratio_actual=4.92, seed=1, wall_time=3.3),
        TrialResult(rate=5.0, method="dense", metric=0.98, parameter_count=20480,
                    ratio_actual=1.0, seed=0, wall_time=2.2),
        TrialResult(rate=25.0, method="mpo", metric=float("nan"),
                    parameter_count=736, ratio_actual=27.8, seed=0,
                    wall_time=1.0),
    ]
    return SweepReport(rows=rows)


class TestReports:
    def test_empty_report_is_header_only_csv(self, tmp_path):
        path = tmp_path / "r.csv"
        weightio.emit_report(SweepReport(), "csv", path)
        lines = path.read_text().strip().splitlines()
        assert lines == ["rate,method,metric,params,ratio_actual,seed,wall_time"]

    def test_single_row_round_trip(self, tmp_path):
        path = tmp_path / "r.csv"
        report = SweepReport(rows=[make_report().rows[1]])
        weightio.emit_report(report, "csv", path)
        (row,) = weightio.load_report(path)
        assert row["rate"] == 5.0
        assert row["method"] == "dense"
        assert row["metric"] == 0.98
        assert row["params"] == 20480
        assert row["seed"] == 0

    def test_rows_sorted_rate_method_seed(self, tmp_path):
        path = tmp_path / "r.csv"
        weightio.emit_report(make_report(), "csv", path)
        rows = weightio.load_report(path)
        keys = [(r["rate"], r["method"], r["seed"]) for r in rows]
        assert keys == sorted(keys)

    def test_csv_and_json_carry_identical_values(self, tmp_path):
        report = make_report()
        csv_path = tmp_path / "r.csv"
        json_path = tmp_path / "r.json"
        weightio.emit_report(report, "csv", csv_path)
        weightio.emit_report(report, "json", json_path)
        assert weightio.load_report(csv_path) == weightio.load_report(json_path)

    def test_timing_zeroed_by_default(self, tmp_path):
        path = tmp_path / "r.json"
        weightio.emit_report(make_report(), "json", path)
        assert all(r["wall_time"] == 0.0 for r in json.loads(path.read_text()))

    def test_timing_kept_on_request(self, tmp_path):
        path = tmp_path / "r.json"
        weightio.emit_report(make_report(), "json", path, include_timing=True)
        times = {r["wall_time"] for r in json.loads(path.read_text())}
        assert times == {3.3, 2.2, 1.0}

    def test_failed_trial_metric_is_null(self, tmp_path):
        path = tmp_path / "r.json"
        weightio.emit_report(make_report(), "json", path)
        rows = json.loads(path.read_text())
        assert rows[-1]["metric"] is None

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            weightio.emit_report(make_report(), "xml", tmp_path / "r.xml")

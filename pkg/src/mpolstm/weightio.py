"""Persistence: a bit-exact binary weight format, experiment configs, and reports.

Weight files hold named dense matrices and operator chains in one flat
little-endian layout:

    magic "MPOW" | version u32 | entry count u32
    per entry: name (u16 length + utf-8) | kind u8 (0 dense, 1 mpo)
               dense -> ndim u8, extents u32[ndim]
               mpo   -> n u8, input factors u32[n], output factors u32[n],
                        bonds u32[n+1]
    payload: float64 arrays in entry order (chain cores in chain order)
    trailer: crc32 u32 of the payload bytes

Files are written atomically (temp file + rename); loading verifies magic,
version, and CRC, so a round-trip is bitwise and corruption is rejected.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np

from . import mpo
from .tasks import SyntheticTask
from .training import METHODS, SweepReport, TrialResult

__all__ = [
    "WeightFileError",
    "IntegrityError",
    "save_weights",
    "load_weights",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "emit_report",
    "load_report",
    "REPORT_COLUMNS",
]

MAGIC = b"MPOW"
FORMAT_VERSION = 1
_KIND_DENSE = 0
_KIND_MPO = 1


class WeightFileError(Exception):
    """Malformed or unsupported weight file."""


class IntegrityError(WeightFileError):
    """Checksum, magic, or truncation failure."""


def _pack_entry_header(name: str, value) -> bytes:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"entry name too long: {name!r}")
    head = struct.pack("<H", len(raw)) + raw
    if isinstance(value, mpo.MpoOperator):
        plan = value.plan
        n = plan.n_cores
        head += struct.pack("<BB", _KIND_MPO, n)
        head += struct.pack(f"<{n}I", *plan.input_factors)
        head += struct.pack(f"<{n}I", *plan.output_factors)
        head += struct.pack(f"<{n + 1}I", *plan.bond_dims)
    else:
        arr = np.asarray(value)
        head += struct.pack("<BB", _KIND_DENSE, arr.ndim)
        head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head


def _payload_arrays(value):
    if isinstance(value, mpo.MpoOperator):
        return list(value.cores)
    return [np.asarray(value, dtype=np.float64)]


def save_weights(path, bundle: dict) -> None:
    """Write a name -> (dense array | MpoOperator) bundle atomically."""
    header = io.BytesIO()
    header.write(MAGIC)
    header.write(struct.pack("<II", FORMAT_VERSION, len(bundle)))
    payload = io.BytesIO()
    for name, value in bundle.items():
        header.write(_pack_entry_header(name, value))
        for arr in _payload_arrays(value):
            payload.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = payload.getvalue()
    blob = header.getvalue() + body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mpow-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IntegrityError("truncated weight file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path) -> dict:
    """Read a bundle back; raises IntegrityError on corruption."""
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data)
    if rd.take(4) != MAGIC:
        raise IntegrityError("bad magic; not a weight file")
    version, n_entries = rd.unpack("<II")
    if version != FORMAT_VERSION:
        raise WeightFileError(f"unsupported format version {version}")

    entries = []
    try:
        for _ in range(n_entries):
            (name_len,) = rd.unpack("<H")
            name = rd.take(name_len).decode("utf-8")
            kind, n = rd.unpack("<BB")
            if kind == _KIND_DENSE:
                shape = rd.unpack(f"<{n}I")
                entries.append((name, kind, shape))
            elif kind == _KIND_MPO:
                in_f = rd.unpack(f"<{n}I")
                out_f = rd.unpack(f"<{n}I")
                bonds = rd.unpack(f"<{n + 1}I")
                entries.append((name, kind, mpo.MpoPlan(in_f, out_f, bonds)))
            else:
                raise WeightFileError(f"unknown entry kind {kind}")
    except (UnicodeDecodeError, ValueError) as exc:
        # inconsistent metadata means the header bytes are damaged
        raise IntegrityError(f"malformed entry table: {exc}") from exc

    payload_len = len(data) - rd.pos - 4
    if payload_len < 0:
        raise IntegrityError("truncated weight file")
    body = rd.take(payload_len)
    (crc,) = rd.unpack("<I")
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise IntegrityError("payload checksum mismatch")

    bundle: dict = {}
    cursor = 0

    def take_array(shape) -> np.ndarray:
        nonlocal cursor
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if cursor + nbytes > len(body):
            raise IntegrityError("payload shorter than the entry table promises")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=cursor)
        cursor += nbytes
        return np.ascontiguousarray(arr.astype(np.float64).reshape(shape))

    for name, kind, meta in entries:
        if kind == _KIND_DENSE:
            bundle[name] = take_array(meta)
        else:
            cores = [take_array(meta.core_shape(k)) for k in range(meta.n_cores)]
            bundle[name] = mpo.MpoOperator(meta, cores)
    if cursor != len(body):
        raise IntegrityError("payload longer than the entry table promises")
    return bundle


# ---------------------------------------------------------------------------
# experiment configuration

@dataclass
class ExperimentConfig:
    n_x: int = 16
    n_h: int = 64
    input_factors: tuple[int, ...] = (2, 2, 2, 2)
    hidden_factors: tuple[int, ...] = (4, 2, 2, 4)
    rates: tuple[float, ...] = (5.0, 25.0, 100.0)
    methods: tuple[str, ...] = ("dense", "mpo", "pruning")
    task_kind: str = "classification"
    seq_len: int = 20
    snr_db: float = 10.0
    task_seed: int = 7777
    n_train: int = 2000
    n_test: int = 500
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 12
    retrain_epochs: int = 12
    clip_norm: float = 5.0

    def __post_init__(self):
        self.input_factors = tuple(int(f) for f in self.input_factors)
        self.hidden_factors = tuple(int(f) for f in self.hidden_factors)
        self.rates = tuple(float(r) for r in self.rates)
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.validate()

    def validate(self):
        if int(np.prod(self.input_factors)) != self.n_x:
            raise ValueError(f"input factors {self.input_factors} do not "
                             f"multiply to n_x={self.n_x}")
        if int(np.prod(self.hidden_factors)) != self.n_h:
            raise ValueError(f"hidden factors {self.hidden_factors} do not "
                             f"multiply to n_h={self.n_h}")
        if len(self.input_factors) != len(self.hidden_factors):
            raise ValueError("input and hidden factor lists must have equal "
                             "length (one pair per chain core)")
        if any(r < 1 for r in self.rates):
            raise ValueError("rates must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; valid: {METHODS}")
        if self.task_kind not in ("classification", "regression"):
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.retrain_epochs < 0:
            raise ValueError("batch_size must be >= 1 and epoch counts >= 0")

    def task(self) -> SyntheticTask:
        return SyntheticTask(kind=self.task_kind, seq_len=self.seq_len,
                             input_dim=self.n_x, seed=self.task_seed,
                             snr_db=self.snr_db)

    def to_dict(self) -> dict:
        return {
            "dims": {"n_x": self.n_x, "n_h": self.n_h},
            "factors": {"input": list(self.input_factors),
                        "hidden": list(self.hidden_factors)},
            "rates": list(self.rates),
            "methods": list(self.methods),
            "task": {"kind": self.task_kind, "seq_len": self.seq_len,
                     "snr_db": self.snr_db, "seed": self.task_seed,
                     "n_train": self.n_train, "n_test": self.n_test},
            "seeds": list(self.seeds),
            "optimizer": {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                          "eps": self.eps, "batch_size": self.batch_size,
                          "epochs": self.epochs, "retrain_epochs": self.retrain_epochs,
                          "clip_norm": self.clip_norm},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        dims = raw.get("dims", {})
        factors = raw.get("factors", {})
        task = raw.get("task", {})
        opt = raw.get("optimizer", {})
        kwargs = {}
        for key, value in [
            ("n_x", dims.get("n_x")), ("n_h", dims.get("n_h")),
            ("input_factors", factors.get("input")),
            ("hidden_factors", factors.get("hidden")),
            ("rates", raw.get("rates")), ("methods", raw.get("methods")),
            ("task_kind", task.get("kind")), ("seq_len", task.get("seq_len")),
            ("snr_db", task.get("snr_db")), ("task_seed", task.get("seed")),
            ("n_train", task.get("n_train")), ("n_test", task.get("n_test")),
            ("seeds", raw.get("seeds")),
            ("lr", opt.get("lr")), ("beta1", opt.get("beta1")),
            ("beta2", opt.get("beta2")), ("eps", opt.get("eps")),
            ("batch_size", opt.get("batch_size")), ("epochs", opt.get("epochs")),
            ("retrain_epochs", opt.get("retrain_epochs")),
            ("clip_norm", opt.get("clip_norm")),
        ]:
            if value is not None:
                kwargs[key] = value
        return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# reports

REPORT_COLUMNS = ("rate", "method", "metric", "params", "ratio_actual",
                  "seed", "wall_time")


def _row_values(row: TrialResult, include_timing: bool):
    wall = row.wall_time if include_timing else 0.0
    return {
        "rate": row.rate,
        "method": row.method,
        "metric": row.metric if np.isfinite(row.metric) else None,
        "params": row.parameter_count,
        "ratio_actual": row.ratio_actual if np.isfinite(row.ratio_actual) else None,
        "seed": row.seed,
        "wall_time": wall,
    }


def emit_report(report: SweepReport, fmt: str, path,
                include_timing: bool = False) -> None:
    """Write a sweep report as CSV or JSON with a stable row order.

    Timing is volatile, so wall_time is written as 0.0 unless
    ``include_timing`` is set; everything else is deterministic and two
    serial runs of the same config produce byte-identical files.
    """
    rows = [_row_values(r, include_timing) for r in report.sorted_rows()]
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for row in rows:
                writer.writerow(["" if row[c] is None else repr(row[c])
                                 if isinstance(row[c], float) else str(row[c])
                                 for c in REPORT_COLUMNS])
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, allow_nan=False)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}; use 'csv' or 'json'")


def load_report(path) -> list[dict]:
    """Parse a report back into row dictionaries (used for round-trip checks)."""
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append({
                "rate": float(rec["rate"]),
                "method": rec["method"],
                "metric": float(rec["metric"]) if rec["metric"] else None,
                "params": int(rec["params"]),
                "ratio_actual": float(rec["ratio_actual"]) if rec["ratio_actual"] else None,
                "seed": int(rec["seed"]),
                "wall_time": float(rec["wall_time"]),
            })
    return rows

"""Raw accelerometry ingestion, second-level segmentation and train/test splits.

Raw files are delimited text with one row per sample. A :class:`Schema` maps
the file's column names onto the fields the pipeline needs, so differently
laid out datasets load through the same code path.
"""
from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DataError, IngestionError

logger = logging.getLogger(__name__)

MAGIC = b"GPRT"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class RawSample:
    subject_id: str
    t: int
    x: float
    y: float
    z: float


@dataclass
class RawStream:
    """All samples of one subject, stored column-wise and sorted by (session, t)."""

    subject_id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    session: np.ndarray | None = None
    activity: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.t)

    def samples(self) -> Iterator[RawSample]:
        for t, x, y, z in zip(self.t, self.x, self.y, self.z):
            yield RawSample(self.subject_id, int(t), float(x), float(y), float(z))

    @classmethod
    def from_samples(cls, samples: Sequence[RawSample]) -> "RawStream":
        if not samples:
            raise DataError("cannot build a stream from zero samples")
        ids = {s.subject_id for s in samples}
        if len(ids) != 1:
            raise DataError(f"samples mix subjects {sorted(ids)}")
        arr = np.array([(s.t, s.x, s.y, s.z) for s in samples], dtype=np.float64)
        return cls(samples[0].subject_id, arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2], arr[:, 3])


@dataclass(frozen=True)
class Schema:
    """Column mapping for a delimited accelerometry file.

    ``subject=None`` takes the subject id from the file name stem. ``time_unit``
    is ``"index"`` (integer sample index) or ``"seconds"`` (converted with
    ``rate``). ``keep_activities`` filters rows on the activity column.
    """

    time: str = "t"
    x: str = "x"
    y: str = "y"
    z: str = "z"
    subject: str | None = "subject"
    session: str | None = None
    activity: str | None = None
    keep_activities: tuple[str, ...] | None = None
    time_unit: str = "index"
    rate: float = 100.0
    delimiter: str | None = None

    def __post_init__(self):
        if self.time_unit not in ("index", "seconds"):
            raise ConfigError(f"time_unit must be 'index' or 'seconds', got {self.time_unit!r}")
        if self.rate <= 0:
            raise ConfigError("sampling rate must be positive")


#: PhysioNet "accelerometry-walk-climb-drive" raw files, left wrist, walking only.
IU_SCHEMA = Schema(
    time="time_s", x="lw_x", y="lw_y", z="lw_z", subject=None,
    activity="activity", keep_activities=("1",), time_unit="seconds",
)


@dataclass
class IngestReport:
    files: int = 0
    rows: int = 0
    rejected: int = 0
    rejected_examples: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"files": self.files, "rows": self.rows, "rejected": self.rejected,
                "rejected_examples": list(self.rejected_examples)}


def _delimited_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".csv", ".tsv", ".txt"))
        if not files:
            raise IngestionError(f"no delimited files in {path}")
        return files
    if not path.exists():
        raise IngestionError(f"{path} does not exist")
    return [path]


def _read_table(file: Path, schema: Schema) -> pd.DataFrame:
    sep = schema.delimiter
    if sep is None:
        sep = "\t" if file.suffix.lower() == ".tsv" else ","
    try:
        df = pd.read_csv(file, sep=sep, dtype=str, skipinitialspace=True, keep_default_na=False)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {file}: {exc}") from exc
    df.columns = [c.strip() for c in df.columns]
    needed = [schema.time, schema.x, schema.y, schema.z]
    needed += [c for c in (schema.subject, schema.session, schema.activity) if c is not None]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise IngestionError(f"{file}: columns {missing} not found (have {list(df.columns)})")
    return df


def load_accelerometry(path, schema: Schema = Schema()) -> tuple[dict[str, RawStream], IngestReport]:
    """Read one file or a directory of files into per-subject sample streams.

    Rows whose time index or any acceleration is not a finite number are
    rejected and counted in the report; a repeated (subject, session, t) key
    raises :class:`IngestionError`.
    """
    report = IngestReport()
    frames = []
    for file in _delimited_files(Path(path)):
        df = _read_table(file, schema)
        report.files += 1
        report.rows += len(df)
        out = pd.DataFrame({
            "subject": df[schema.subject].str.strip() if schema.subject else file.stem,
            "session": df[schema.session].str.strip() if schema.session else "",
            "activity": df[schema.activity].str.strip() if schema.activity else "",
        })
        num = {c: pd.to_numeric(df[col], errors="coerce")
               for c, col in (("t", schema.time), ("x", schema.x), ("y", schema.y), ("z", schema.z))}
        for c, values in num.items():
            out[c] = values
        bad = ~np.isfinite(out[["t", "x", "y", "z"]].to_numpy(dtype=float)).all(axis=1)
        if bad.any():
            report.rejected += int(bad.sum())
            for idx in np.flatnonzero(bad)[: 5 - len(report.rejected_examples)]:
                report.rejected_examples.append(f"{file.name}:{idx + 2}")
            out = out[~bad]
        if schema.keep_activities is not None:
            out = out[out["activity"].isin(schema.keep_activities)]
        frames.append(out)

    data = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    if report.rejected:
        logger.warning("rejected %d malformed rows (e.g. %s)", report.rejected,
                       ", ".join(report.rejected_examples))
    streams: dict[str, RawStream] = {}
    if data.empty:
        return streams, report

    if schema.time_unit == "seconds":
        data["t"] = np.rint(data["t"].to_numpy() * schema.rate)
    data["t"] = data["t"].astype(np.int64)
    dup = data.duplicated(["subject", "session", "t"], keep=False)
    if dup.any():
        row = data[dup].iloc[0]
        key = (row["subject"], row["t"]) if not schema.session else (row["subject"], row["session"], row["t"])
        raise IngestionError(f"duplicate sample key {key}")

    data = data.sort_values(["subject", "session", "t"], kind="mergesort")
    for sid, g in data.groupby("subject", sort=True):
        streams[str(sid)] = RawStream(
            subject_id=str(sid),
            t=g["t"].to_numpy(np.int64),
            x=g["x"].to_numpy(np.float64),
            y=g["y"].to_numpy(np.float64),
            z=g["z"].to_numpy(np.float64),
            session=g["session"].to_numpy(str) if schema.session else None,
            activity=g["activity"].to_numpy(str) if schema.activity else None,
        )
    return streams, report


def load_zju(root, sensor: str = "1", sessions: Iterable[str] = ("1", "2")) -> tuple[dict[str, RawStream], IngestReport]:
    """Read the ZJU-GaitAcc directory tree.

    Expected layout: ``session_<n>/subj_<id>/rec_<r>/<sensor>.txt`` where each
    sensor file holds three comma-separated lines (x, y, z) and an optional
    ``useful.txt`` gives the labelled ``start,end`` sample range. Each record
    becomes its own bout: records are placed on the time axis with a gap so
    segmentation never joins them.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"{root} is not a directory")
    report = IngestReport()
    per_subject: dict[str, list[tuple[str, np.ndarray]]] = {}
    for sess in sessions:
        sdir = root / f"session_{sess}"
        if not sdir.is_dir():
            raise IngestionError(f"missing {sdir}")
        for subj in sorted(sdir.glob("subj_*")):
            sid = subj.name.split("_", 1)[1].lstrip("0") or "0"
            for rec in sorted(subj.glob("rec_*"), key=lambda p: int(p.name.split("_")[1])):
                file = rec / f"{sensor}.txt"
                if not file.exists():
                    continue
                report.files += 1
                try:
                    lines = [ln for ln in file.read_text().splitlines() if ln.strip()]
                    xyz = np.array([[float(v) for v in ln.split(",") if v.strip()] for ln in lines[:3]])
                except ValueError as exc:
                    report.rejected += 1
                    report.rejected_examples.append(f"{file}: {exc}")
                    continue
                if xyz.ndim != 2 or xyz.shape[0] != 3:
                    report.rejected += 1
                    report.rejected_examples.append(f"{file}: expected 3 equal-length lines")
                    continue
                useful = rec / "useful.txt"
                if useful.exists():
                    lo, hi = (int(float(v)) for v in useful.read_text().replace("\n", ",").split(",")[:2])
                    xyz = xyz[:, lo:hi]
                report.rows += xyz.shape[1]
                per_subject.setdefault(sid, []).append((sess, xyz))
    streams = {}
    for sid in sorted(per_subject, key=subject_sort_key):
        t, x, y, z, session = [], [], [], [], []
        offset = 0
        for sess, xyz in per_subject[sid]:
            n = xyz.shape[1]
            t.append(np.arange(offset, offset + n))
            x.append(xyz[0]); y.append(xyz[1]); z.append(xyz[2])
            session.append(np.full(n, sess))
            offset += n + 1  # gap separates records
        streams[sid] = RawStream(sid, np.concatenate(t), np.concatenate(x), np.concatenate(y),
                                 np.concatenate(z), session=np.concatenate(session))
    return streams, report


def subject_sort_key(subject_id: str):
    """Natural ordering: numeric ids sort numerically, others lexically after them."""
    return (0, int(subject_id), "") if subject_id.isdigit() else (1, 0, subject_id)


def vector_magnitude(x, y, z):
    """Euclidean norm of tri-axial acceleration. Works on scalars or arrays."""
    x, y, z = (np.asarray(a, dtype=np.float64) for a in (x, y, z))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise DataError("vector magnitude of non-finite acceleration")
    out = np.sqrt(x * x + y * y + z * z)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SecondFrame:
    subject_id: str
    j: int
    v: np.ndarray
    session: str | None = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 1 or len(v) < 2:
            raise DataError("a frame needs at least 2 samples")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DataError(f"frame {self.subject_id}/{self.j} has negative or non-finite magnitudes")
        if self.j < 1:
            raise DataError("second index j is 1-based")
        object.__setattr__(self, "v", v)

    @property
    def S(self) -> int:
        return len(self.v)


@dataclass
class SubjectSeries:
    subject_id: str
    frames: list[SecondFrame]

    @property
    def J(self) -> int:
        return len(self.frames)

    @property
    def S(self) -> int | None:
        return self.frames[0].S if self.frames else None

    def matrix(self) -> np.ndarray:
        """Frames stacked as a (J, S) array."""
        if not self.frames:
            return np.empty((0, 0))
        return np.vstack([f.v for f in self.frames])

    def sessions(self) -> list[str | None]:
        return [f.session for f in self.frames]


def _bout_starts(stream: RawStream) -> np.ndarray:
    """Indices where a new bout begins: a time gap or a session/activity change."""
    n = len(stream)
    brk = np.zeros(n, dtype=bool)
    if n:
        brk[0] = True
        brk[1:] |= np.diff(stream.t) != 1
        for labels in (stream.session, stream.activity):
            if labels is not None:
                brk[1:] |= labels[1:] != labels[:-1]
    return np.flatnonzero(brk)


def segment_seconds(stream, S: int = 100, trim: int = 0) -> SubjectSeries:
    """Cut a sample stream into consecutive non-overlapping frames of ``S`` samples.

    Each bout (run of consecutive sample indices with constant session and
    activity labels) is segmented on its own and its trailing partial frame is
    dropped. ``trim`` removes that many samples from both ends of every bout
    before segmentation.
    """
    if S < 2:
        raise ConfigError(f"S must be at least 2, got {S}")
    if trim < 0:
        raise ConfigError("trim must be non-negative")
    if not isinstance(stream, RawStream):
        stream = list(stream)
        if not stream:
            return SubjectSeries("", [])
        stream = RawStream.from_samples(stream)
    if len(stream) == 0:
        return SubjectSeries(stream.subject_id, [])
    if np.any(np.diff(stream.t) <= 0) and stream.session is None:
        raise DataError(f"stream for {stream.subject_id} is not strictly increasing in t")

    vm = vector_magnitude(stream.x, stream.y, stream.z)
    starts = _bout_starts(stream)
    ends = np.append(starts[1:], len(stream))
    frames: list[SecondFrame] = []
    for a, b in zip(starts, ends):
        a, b = a + trim, b - trim
        n_full = max(b - a, 0) // S
        for k in range(n_full):
            lo = a + k * S
            sess = None if stream.session is None else str(stream.session[lo])
            frames.append(SecondFrame(stream.subject_id, len(frames) + 1, vm[lo:lo + S], sess))
    return SubjectSeries(stream.subject_id, frames)


def series_from_signal(subject_id: str, v, S: int = 100, session: str | None = None) -> SubjectSeries:
    """Segment an already computed magnitude signal (single bout)."""
    v = np.asarray(v, dtype=np.float64)
    J = len(v) // S
    frames = [SecondFrame(subject_id, j + 1, v[j * S:(j + 1) * S], session) for j in range(J)]
    return SubjectSeries(subject_id, frames)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    seed: int = 0
    mode: str = "within-session"
    train_session: str = "1"
    test_session: str = "2"

    def __post_init__(self):
        if self.mode not in ("within-session", "cross-session"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if self.mode == "within-session" and not 0 < self.train_fraction < 1:
            raise ConfigError("within-session split needs 0 < train_fraction < 1")


def subject_seed(seed: int, subject_id: str) -> np.random.SeedSequence:
    """Per-subject substream: independent of processing order and parallelism."""
    h = int.from_bytes(hashlib.sha256(subject_id.encode()).digest()[:8], "little")
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, h])


def stratified_split(series: Sequence[SubjectSeries], spec: SplitSpec) -> tuple[list[SubjectSeries], list[SubjectSeries]]:
    """Split every subject's seconds into train and test sets.

    Within-session: ``max(1, floor(train_fraction * J))`` randomly chosen
    seconds per subject go to training, the rest to testing. Cross-session:
    frames from ``spec.train_session`` train and frames from
    ``spec.test_session`` test. Frames keep their original ``j`` and are
    returned in ascending ``j`` order.
    """
    train, test = [], []
    for s in series:
        if spec.mode == "cross-session":
            tr = [f for f in s.frames if f.session == spec.train_session]
            te = [f for f in s.frames if f.session == spec.test_session]
        else:
            if s.J < 2:
                raise DataError(f"subject {s.subject_id} has J={s.J} < 2 seconds; cannot split")
            n_train = max(1, math.floor(spec.train_fraction * s.J))
            rng = np.random.default_rng(subject_seed(spec.seed, s.subject_id))
            chosen = np.zeros(s.J, dtype=bool)
            chosen[rng.permutation(s.J)[:n_train]] = True
            tr = [f for f, c in zip(s.frames, chosen) if c]
            te = [f for f, c in zip(s.frames, chosen) if not c]
        train.append(SubjectSeries(s.subject_id, tr))
        test.append(SubjectSeries(s.subject_id, te))
    return train, test


# -- canonical intermediate store -------------------------------------------------

def write_series_csv(path, series: Sequence[SubjectSeries]) -> None:
    S = _common_S(series)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["subject", "session", "j"] + [f"v{s}" for s in range(1, S + 1)]) + "\n")
        for ser in series:
            for f in ser.frames:
                vals = ",".join(repr(float(a)) for a in f.v)
                fh.write(f"{ser.subject_id},{f.session or ''},{f.j},{vals}\n")


def read_series_csv(path) -> list[SubjectSeries]:
    df = pd.read_csv(path, dtype={"subject": str, "session": str}, keep_default_na=False,
                     float_precision="round_trip")
    vcols = [c for c in df.columns if c.startswith("v")]
    out = []
    for sid, g in df.groupby("subject", sort=False):
        frames = [SecondFrame(str(sid), int(j), row, sess or None)
                  for j, sess, row in zip(g["j"], g["session"], g[vcols].to_numpy(np.float64))]
        out.append(SubjectSeries(str(sid), frames))
    return out


def write_series_binary(path, series: Sequence[SubjectSeries]) -> None:
    """Binary container: ``GPRT``, version byte, then little-endian records.

    Header: ``<4s B I I`` (magic, version, S, n_records). Each record:
    ``<H`` + utf-8 subject id, ``<H`` + utf-8 session (empty when absent),
    ``<I`` second index j, then ``S`` float64 magnitudes.
    """
    S = _common_S(series)
    n = sum(s.J for s in series)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sBII", MAGIC, FORMAT_VERSION, S, n))
        for ser in series:
            sid = ser.subject_id.encode()
            for f in ser.frames:
                sess = (f.session or "").encode()
                fh.write(struct.pack("<H", len(sid)) + sid + struct.pack("<H", len(sess)) + sess)
                fh.write(struct.pack("<I", f.j))
                fh.write(np.asarray(f.v, dtype="<f8").tobytes())


def read_series_binary(path) -> list[SubjectSeries]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise DataError(f"{path}: not a GPRT container")
    magic, version, S, n = struct.unpack_from("<4sBII", buf, 0)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    pos = struct.calcsize("<4sBII")
    by_subject: dict[str, list[SecondFrame]] = {}
    for _ in range(n):
        (ls,) = struct.unpack_from("<H", buf, pos); pos += 2
        sid = buf[pos:pos + ls].decode(); pos += ls
        (le,) = struct.unpack_from("<H", buf, pos); pos += 2
        sess = buf[pos:pos + le].decode() or None; pos += le
        (j,) = struct.unpack_from("<I", buf, pos); pos += 4
        v = np.frombuffer(buf, dtype="<f8", count=S, offset=pos).astype(np.float64); pos += 8 * S
        by_subject.setdefault(sid, []).append(SecondFrame(sid, j, v, sess))
    return [SubjectSeries(sid, fr) for sid, fr in by_subject.items()]


def save_series(path, series: Sequence[SubjectSeries]) -> None:
    if str(path).endswith(".csv"):
        write_series_csv(path, series)
    else:
        write_series_binary(path, series)


def load_series(path) -> list[SubjectSeries]:
    if not Path(path).exists():
        raise DataError(f"{path} does not exist")
    return read_series_csv(path) if str(path).endswith(".csv") else read_series_binary(path)


def _common_S(series: Sequence[SubjectSeries]) -> int:
    sizes = {f.S for s in series for f in s.frames}
    if len(sizes) > 1:
        raise DataError(f"frames of mixed length {sorted(sizes)}")
    return sizes.pop() if sizes else 0

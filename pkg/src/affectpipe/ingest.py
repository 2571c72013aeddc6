"""Parsing of frames/labels/manifest files into Sessions.

File formats (all UTF-8, line-delimited, comma-separated):

* frames file -- one frame per line:
  ``session_id,time_s,modality,confidence,x1,y1,...,xN,yN[,au1..au17]``
  with ``modality`` one of ``face``/``body``, N = 68 for face rows (which
  must also carry the 17 AU fields) and N = 25 for body rows.
* labels file -- change-point records ``time_s,raw_label``; a label applies
  to every frame from its timestamp until the next record (forward fill).
* manifest file -- JSON: ``{"entries": [{"infant_id", "session_id",
  "frames", "labels"}, ...]}``; paths are resolved relative to the manifest.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    AU_COUNT,
    BODY_POINT_COUNT,
    CONFIDENCE_THRESHOLD,
    FACE_POINT_COUNT,
    BIN_WIDTH_S,
    FrameRecord,
    Modality,
    Session,
    bin_frames,
)
from .errors import (
    ConfigError,
    MissingFramesError,
    MissingLabelsError,
    PointCountError,
    SchemaError,
)

logger = logging.getLogger(__name__)

_FACE_FIELDS = 4 + FACE_POINT_COUNT * 2 + AU_COUNT   # 157
_BODY_FIELDS = 4 + BODY_POINT_COUNT * 2              # 54


@dataclass
class ManifestEntry:
    infant_id: str
    session_id: str
    frames_path: Path
    labels_path: Path


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]

    def __post_init__(self):
        ids = [e.session_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ConfigError("manifest session_ids are not unique")


def _parse_numeric_block(rows: list[list[str]], line_nos: list[int],
                         width: int) -> np.ndarray:
    """Bulk-convert the numeric fields of same-width rows to float64.

    The bulk conversion is the fast path; when it fails, rows are re-scanned
    one by one so the error names the offending line.
    """
    if not rows:
        return np.empty((0, width - 3))
    numeric = [r[1:2] + r[3:] for r in rows]
    try:
        arr = np.asarray(numeric, dtype=np.float64)
    except ValueError:
        for ln, row in zip(line_nos, numeric):
            for tok in row:
                try:
                    float(tok)
                except ValueError:
                    raise SchemaError(ln, f"non-numeric field {tok!r}") from None
        raise
    bad = ~np.isfinite(arr)
    if bad.any():
        i = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise SchemaError(line_nos[i], "non-finite numeric field")
    return arr


def parse_frames(path: str | Path) -> list[FrameRecord]:
    """Parse a frames file, in file order.

    Raises:
        SchemaError: a malformed line (field count, modality, numeric fields).
        PointCountError: a row whose field count does not match its modality.
    """
    path = Path(path)
    face_rows, face_lines = [], []
    body_rows, body_lines = [], []
    order = []  # (modality, index within its block) per input line
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 4:
                raise SchemaError(line_no, f"expected at least 4 fields, got {len(parts)}")
            modality = parts[2]
            if modality == Modality.FACE.value:
                if len(parts) != _FACE_FIELDS:
                    raise PointCountError(
                        line_no,
                        f"face row needs {_FACE_FIELDS} fields "
                        f"({FACE_POINT_COUNT} points + {AU_COUNT} AUs), got {len(parts)}")
                order.append((Modality.FACE, len(face_rows)))
                face_rows.append(parts)
                face_lines.append(line_no)
            elif modality == Modality.BODY.value:
                if len(parts) != _BODY_FIELDS:
                    raise PointCountError(
                        line_no,
                        f"body row needs {_BODY_FIELDS} fields "
                        f"({BODY_POINT_COUNT} points), got {len(parts)}")
                order.append((Modality.BODY, len(body_rows)))
                body_rows.append(parts)
                body_lines.append(line_no)
            else:
                raise SchemaError(line_no, f"unknown modality {modality!r}")

    face_num = _parse_numeric_block(face_rows, face_lines, _FACE_FIELDS)
    body_num = _parse_numeric_block(body_rows, body_lines, _BODY_FIELDS)

    records = []
    for modality, i in order:
        if modality is Modality.FACE:
            sid, num, ln = face_rows[i][0], face_num[i], face_lines[i]
            points = num[2: 2 + FACE_POINT_COUNT * 2].reshape(FACE_POINT_COUNT, 2)
            aus = num[2 + FACE_POINT_COUNT * 2:]
        else:
            sid, num, ln = body_rows[i][0], body_num[i], body_lines[i]
            points = num[2:].reshape(BODY_POINT_COUNT, 2)
            aus = None
        time_s, confidence = num[0], num[1]
        if time_s < 0:
            raise SchemaError(ln, f"negative time {time_s}")
        if not 0.0 <= confidence <= 1.0:
            raise SchemaError(ln, f"confidence {confidence} outside [0, 1]")
        records.append(FrameRecord(
            session_id=sid, time_s=float(time_s), modality=modality,
            confidence=float(confidence), points=points, aus=aus))
    return records


def parse_labels(path: str | Path) -> list[tuple[float, str]]:
    """Parse a labels file of ``time_s,raw_label`` change points."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise SchemaError(line_no, f"expected 2 fields, got {len(parts)}")
            try:
                t = float(parts[0])
            except ValueError:
                raise SchemaError(line_no, f"non-numeric time {parts[0]!r}") from None
            if not math.isfinite(t) or t < 0:
                raise SchemaError(line_no, f"bad label time {parts[0]!r}")
            out.append((t, parts[1]))
    if any(b[0] < a[0] for a, b in zip(out, out[1:])):
        raise SchemaError(0, "label change points are not time-sorted")
    return out


def join_labels(frames: Sequence[FrameRecord],
                labels: Sequence[tuple[float, str]]) -> list[FrameRecord]:
    """Forward-fill label change points onto frames by timestamp.

    Frames earlier than the first change point stay unlabeled (and therefore
    bin to EXCLUDED).
    """
    if not labels:
        return list(frames)
    times = np.array([t for t, _ in labels])
    out = []
    for f in frames:
        i = int(np.searchsorted(times, f.time_s, side="right")) - 1
        raw = labels[i][1] if i >= 0 else ""
        out.append(FrameRecord(f.session_id, f.time_s, f.modality, f.confidence,
                               f.points, f.aus, raw))
    return out


def load_session(entry: ManifestEntry,
                 confidence_threshold: float = CONFIDENCE_THRESHOLD) -> Session:
    """Load one manifest entry into a binned Session.

    Raises:
        MissingFramesError / MissingLabelsError: a required file is absent;
            the caller reports the session as excluded.
    """
    if not entry.frames_path.exists():
        raise MissingFramesError(f"{entry.session_id}: {entry.frames_path} not found")
    if not entry.labels_path.exists():
        raise MissingLabelsError(f"{entry.session_id}: {entry.labels_path} not found")
    frames = parse_frames(entry.frames_path)
    for f in frames:
        if f.session_id != entry.session_id:
            raise SchemaError(0, f"frames file carries session_id {f.session_id!r}, "
                                 f"manifest says {entry.session_id!r}")
    labeled = join_labels(frames, parse_labels(entry.labels_path))
    bins = bin_frames(labeled, confidence_threshold=confidence_threshold)
    return Session(session_id=entry.session_id, infant_id=entry.infant_id, bins=bins)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) != {"entries"}:
        raise ConfigError("manifest must be a JSON object with a single 'entries' key")
    entries = []
    for i, e in enumerate(raw["entries"]):
        if set(e) != {"infant_id", "session_id", "frames", "labels"}:
            raise ConfigError(f"manifest entry {i} has wrong keys: {sorted(e)}")
        entries.append(ManifestEntry(
            infant_id=e["infant_id"], session_id=e["session_id"],
            frames_path=path.parent / e["frames"],
            labels_path=path.parent / e["labels"]))
    return DatasetManifest(entries=entries)


def load_dataset(manifest: DatasetManifest,
                 confidence_threshold: float = CONFIDENCE_THRESHOLD,
                 ) -> tuple[list[Session], list[tuple[str, str]]]:
    """Load every loadable session; report the rest as excluded.

    Returns (sessions, exclusions) where exclusions holds
    (session_id, reason) pairs for entries whose files were missing.
    Excluded sessions never reach folds, samples, or metrics.
    """
    sessions, exclusions = [], []
    for entry in manifest.entries:
        try:
            sessions.append(load_session(entry, confidence_threshold))
        except (MissingFramesError, MissingLabelsError) as exc:
            logger.warning("excluding session %s: %s", entry.session_id, exc)
            exclusions.append((entry.session_id, str(exc)))
    return sessions, exclusions


def write_session(session: Session, frames_path: str | Path,
                  labels_path: str | Path) -> None:
    """Serialize a binned Session back to the frames/labels formats.

    Each bin becomes one face and one body frame at the bin start time, so
    re-loading reproduces the Session exactly (binning an already-regular
    stream is idempotent). EXCLUDED bins serialize with the label code
    ``excluded``, which maps back to EXCLUDED.
    """
    def fmt(v) -> str:
        return repr(float(v))  # shortest decimal that round-trips exactly

    with open(frames_path, "w", encoding="utf-8") as fh:
        for b in session.bins:
            t = fmt(b.bin_index * BIN_WIDTH_S)
            face_nums = [fmt(b.face_conf)]
            face_nums += [fmt(v) for v in b.face_points.reshape(-1)]
            face_nums += [fmt(v) for v in b.face_aus]
            fh.write(f"{session.session_id},{t},face," + ",".join(face_nums) + "\n")
            body_nums = [fmt(b.body_conf)]
            body_nums += [fmt(v) for v in b.body_points.reshape(-1)]
            fh.write(f"{session.session_id},{t},body," + ",".join(body_nums) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        prev = None
        for b in session.bins:
            code = b.label.name.lower()
            if code != prev:
                fh.write(f"{fmt(b.bin_index * BIN_WIDTH_S)},{code}\n")
                prev = code

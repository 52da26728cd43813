"""Readers and writers for every external file the toolkit touches.

Formats
-------
scores      JSON-lines, one ``PairScore`` per line, keys = field names.
pairs       JSON-lines with ``class_name``, ``pair_id``, ``good``, ``bad``.
fixture     CSV with header ``class,cusum,ruptures,correct,pattern``.
corpus      plain UTF-8 text, one sentence per line.
WMAT        b"WMAT", uint32 LE rows, uint32 LE cols, rows*cols float64 LE
            values in row-major order.
checkpoints ``step_<t>/layer_<l>/<q|k|v|o>.wmat`` (``.csv`` also accepted).
reports     JSON (``{"table", "columns", "rows"}``) or CSV; floats are
            written with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import re
import struct
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .spectral import KINDS, WeightMatrix
from .trajectory import PairScore, TrajectoryCategory

PATTERNS = {
    "early_correct": TrajectoryCategory.CES,
    "late_separation": TrajectoryCategory.CLS,
    "early_erroneous": TrajectoryCategory.EES,
}
FIXTURE_HEADER = ["class", "cusum", "ruptures", "correct", "pattern"]
WMAT_MAGIC = b"WMAT"


def bundled(name: str) -> Path:
    """Path of a data file shipped inside the package."""
    return Path(str(resources.files("gramtraj") / "data" / name))


# -- scores -------------------------------------------------------------------

_SCORE_FIELDS = [f.name for f in fields(PairScore)]
_SCORE_TYPES = {
    "class_name": str, "pair_id": int, "checkpoint_step": int,
    "nll_good": float, "n_tokens_good": int, "nll_bad": float, "n_tokens_bad": int,
}


def _typed(value, kind, where):
    if kind is str:
        if not isinstance(value, str):
            raise ValidationError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(value, bool):
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ValidationError(f"{where}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_score_line(line: str, lineno: int) -> PairScore:
    where = f"line {lineno}"
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{where}: malformed JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    if set(obj) != set(_SCORE_FIELDS):
        missing = sorted(set(_SCORE_FIELDS) - set(obj))
        extra = sorted(set(obj) - set(_SCORE_FIELDS))
        raise ValidationError(f"{where}: bad keys (missing {missing}, unexpected {extra})")
    values = {k: _typed(obj[k], _SCORE_TYPES[k], f"{where}, {k}") for k in _SCORE_FIELDS}
    try:
        return PairScore(**values)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def read_scores(path) -> list[PairScore]:
    """Validated scores; the whole file is rejected on the first bad record."""
    records = []
    first_seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = parse_score_line(line, lineno)
            if rec.key in first_seen:
                raise ValidationError(
                    f"duplicate (class, pair, step) {rec.key} on lines "
                    f"{first_seen[rec.key]} and {lineno}",
                    module="io", subject=rec.class_name,
                )
            first_seen[rec.key] = lineno
            records.append(rec)
    return records


def write_scores(records: Iterable[PairScore], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")


def read_pairs(path) -> dict[str, list[tuple[str, str]]]:
    """Minimal-pair sentences grouped by class, ordered by pair_id."""
    by_class = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = (str(obj["class_name"]), int(obj["pair_id"]), str(obj["good"]), str(obj["bad"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"line {lineno}: malformed pair record ({exc})") from None
            by_class.setdefault(rec[0], []).append(rec[1:])
    out = {}
    for name in sorted(by_class):
        items = sorted(by_class[name])
        ids = [i for i, _, _ in items]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{name}: duplicate pair_id in pairs file", subject=name)
        out[name] = [(g, b) for _, g, b in items]
    return out


# -- fixture ------------------------------------------------------------------


@dataclass(frozen=True)
class FixtureChangePoints:
    class_name: str
    cusum_step: int
    ruptures_step: int
    correct_direction: bool
    pattern: str

    @property
    def category(self) -> TrajectoryCategory:
        return PATTERNS[self.pattern]

    @property
    def direction_consistent(self) -> bool:
        # correct-side patterns must end with the good sentences preferred
        return self.pattern == "early_erroneous" or self.correct_direction


def _parse_bool(text, where):
    t = text.strip().lower()
    if t in ("yes", "true", "1"):
        return True
    if t in ("no", "false", "0"):
        return False
    raise ValidationError(f"{where}: not a yes/no value: {text!r}")


def read_fixture_changepoints(path) -> list[FixtureChangePoints]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != FIXTURE_HEADER:
            raise ValidationError(f"fixture header must be {','.join(FIXTURE_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, 2):
            if not row or not "".join(row).strip():
                continue
            where = f"line {lineno}"
            if len(row) != 5:
                raise ValidationError(f"{where}: expected 5 fields, got {len(row)}")
            name, cusum, rupt, correct, pattern = (c.strip() for c in row)
            if pattern not in PATTERNS:
                raise ValidationError(f"{where}: unknown pattern label {pattern!r}", subject=name)
            try:
                rec = FixtureChangePoints(name, int(cusum), int(rupt),
                                          _parse_bool(correct, where), pattern)
            except ValueError as exc:
                raise ValidationError(f"{where}: {exc}", subject=name) from None
            out.append(rec)
    return out


def write_fixture_changepoints(records: Sequence[FixtureChangePoints], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIXTURE_HEADER)
        for r in records:
            w.writerow([r.class_name, r.cusum_step, r.ruptures_step,
                        "Yes" if r.correct_direction else "No", r.pattern])


def read_name_map(path=None) -> dict[str, str]:
    """Fixture class name -> canonical BLiMP paradigm name."""
    path = path or bundled("blimp_name_map.csv")
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["fixture_name"]: row["canonical_name"] for row in csv.DictReader(fh)}


# -- weight matrices --------------------------------------------------------


def write_wmat(matrix, path) -> None:
    a = np.ascontiguousarray(np.asarray(matrix, dtype="<f8"))
    if a.ndim != 2:
        raise ValidationError("WMAT holds 2-D matrices only")
    with open(path, "wb") as fh:
        fh.write(WMAT_MAGIC + struct.pack("<II", *a.shape) + a.tobytes(order="C"))


def read_wmat(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != WMAT_MAGIC:
        raise ValidationError(f"{path}: missing WMAT magic")
    if len(raw) < 12:
        raise ValidationError(f"{path}: truncated header")
    rows, cols = struct.unpack("<II", raw[4:12])
    expected = 12 + 8 * rows * cols
    if len(raw) != expected or rows < 1 or cols < 1:
        raise ValidationError(f"{path}: size {len(raw)} does not match {rows}x{cols} payload")
    a = np.frombuffer(raw, dtype="<f8", offset=12).reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{path}: non-finite entries")
    return a


def read_matrix_csv(path) -> np.ndarray:
    a = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return a


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    return read_matrix_csv(path) if path.suffix == ".csv" else read_wmat(path)


_STEP_RE = re.compile(r"^step_(\d+)$")
_LAYER_RE = re.compile(r"^layer_(\d+)$")


def load_checkpoints(root):
    """Scan a checkpoint tree.

    Returns ``(matrices, gaps)``: ``matrices[(step, layer, kind)]`` is a
    ``WeightMatrix``; ``gaps`` lists ``(step, layer, kind)`` triples missing
    from a layer directory that holds at least one projection.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"checkpoint directory not found: {root}")
    matrices = {}
    gaps = []
    for step_dir in sorted(root.iterdir()):
        m = _STEP_RE.match(step_dir.name)
        if not (m and step_dir.is_dir()):
            continue
        step = int(m.group(1))
        for layer_dir in sorted(step_dir.iterdir()):
            lm = _LAYER_RE.match(layer_dir.name)
            if not (lm and layer_dir.is_dir()):
                continue
            layer = int(lm.group(1))
            for kind in KINDS:
                found = None
                for ext in (".wmat", ".csv"):
                    p = layer_dir / f"{kind.lower()}{ext}"
                    if p.exists():
                        found = p
                        break
                if found is None:
                    gaps.append((step, layer, kind))
                    continue
                matrices[(step, layer, kind)] = WeightMatrix(layer, kind, step, read_matrix(found))
    if not matrices:
        raise ValidationError(f"{root}: no step_<t>/layer_<l>/<kind>.wmat files found")
    return matrices, sorted(gaps)


# -- reports ------------------------------------------------------------------


@dataclass
class Table:
    name: str
    columns: list
    rows: list  # list of lists, aligned with columns

    def records(self):
        return [dict(zip(self.columns, r)) for r in self.rows]


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)  # "inf", "nan" as strings; JSON has no literal for them
    return v


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_table(table: Table, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "table": table.name,
            "columns": list(table.columns),
            "rows": [[_json_value(v) for v in row] for row in table.rows],
        }
        return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_csv_value(v) for v in row])
        return buf.getvalue()
    raise ValidationError(f"unknown report format {fmt!r}")


def write_report(table: Table, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    text = render_table(table, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _csv_parse(text):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_report(path) -> Table:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        return Table(doc["table"], doc["columns"], doc["rows"])
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty CSV report")
    return Table(path.stem, rows[0], [[_csv_parse(c) for c in r] for r in rows[1:]])

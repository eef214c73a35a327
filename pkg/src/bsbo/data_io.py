"""Fitness datasets, the blocky synthetic landscape, and report writers."""

from __future__ import annotations

import csv
import json
import logging
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .constraint_space import GroundSet

logger = logging.getLogger(__name__)

MISSING_POLICIES = ("impute", "drop-from-ground-truth-max")


class DataError(ValueError):
    """Malformed or unreadable dataset."""


@dataclass
class FitnessTable:
    ground: GroundSet
    values: np.ndarray
    missing: np.ndarray
    metadata: dict = field(default_factory=dict)
    missing_policy: str = "impute"

    def __post_init__(self):
        n = self.ground.library_size
        if self.values.shape != (n,) or self.missing.shape != (n,):
            raise DataError(f"fitness table must cover all {n} items of the library")
        if not np.all(np.isfinite(self.values[~self.missing])):
            raise DataError("non-missing fitness values must be finite")
        if self.missing_policy not in MISSING_POLICIES:
            raise DataError(f"unknown missing policy {self.missing_policy!r}")

    def __len__(self) -> int:
        return self.values.size

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    def lookup(self, indices) -> np.ndarray:
        return self.values[np.asarray(indices, dtype=np.int64)]

    def global_max(self) -> float:
        if self.missing_policy == "drop-from-ground-truth-max" and (~self.missing).any():
            return float(self.values[~self.missing].max())
        return float(self.values.max())

    def wild_type(self):
        wt = self.metadata.get("wild_type")
        if wt is None:
            return self.ground.item_from_index(0)
        return tuple(wt) if isinstance(wt, (list, tuple)) else self.ground.parse_sequence(wt)

    def sequence(self, index: int) -> str:
        return format_item(self.ground.item_from_index(int(index)))


def format_item(item) -> str:
    return "".join(item) if all(len(s) == 1 for s in item) else "-".join(item)


def _sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def _read_rows(path: Path, value_column: str = "fitness"):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "sequence" not in header or value_column not in header:
            raise DataError(f"{path}: header must contain 'sequence' and '{value_column}', got {header}")
        i_seq, i_val = header.index("sequence"), header.index(value_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                value = float(row[i_val])
            except ValueError:
                raise DataError(f"{path}:{lineno}: fitness {row[i_val]!r} is not a number") from None
            if not np.isfinite(value):
                raise DataError(f"{path}:{lineno}: fitness must be finite")
            rows.append((lineno, row[i_seq].strip(), value))
    return rows


def infer_ground(sequences) -> GroundSet:
    lengths = {len(s) for s in sequences}
    if len(lengths) != 1:
        raise DataError(f"sequences have inconsistent lengths {sorted(lengths)}")
    (length,) = lengths
    return GroundSet(tuple(tuple(sorted({s[i] for s in sequences})) for i in range(length)))


def read_metadata(path) -> dict:
    side = _sidecar(Path(path))
    if not side.exists():
        return {}
    try:
        return json.loads(side.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse metadata sidecar {side}: {exc}") from exc


def load_dataset(path, format: str = "csv", ground: GroundSet | None = None,
                 impute: float = 0.0, missing_policy: str = "impute",
                 log1p: bool = False) -> FitnessTable:
    """Read a full-factorial ``sequence,fitness`` CSV.

    Alphabets come from ``ground``, else the ``<name>.meta.json`` sidecar,
    else the symbols observed at each position. Unlisted sequences are
    marked missing and set to ``impute``.
    """
    if format != "csv":
        raise DataError(f"unsupported dataset format {format!r}")
    path = Path(path)
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: no data rows")
    meta = read_metadata(path)
    if ground is None:
        ground = GroundSet.from_json(meta) if "alphabets" in meta else infer_ground([r[1] for r in rows])
    values = np.full(ground.library_size, float(impute))
    missing = np.ones(ground.library_size, dtype=bool)
    for lineno, seq, value in rows:
        if len(seq) != ground.n_sites:
            raise DataError(f"{path}:{lineno}: sequence {seq!r} has length {len(seq)}, expected {ground.n_sites}")
        try:
            idx = ground.item_index(ground.parse_sequence(seq))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        values[idx] = value
        missing[idx] = False
    n_missing = int(missing.sum())
    if n_missing:
        logger.warning("%s: %d sequences missing, imputed as %g", path, n_missing, impute)
    if log1p:
        if np.any(values <= -1):
            raise DataError(f"{path}: log1p transform needs fitness > -1")
        values = np.log1p(values)
    metadata = {"source": str(path), "units": meta.get("units", "fitness"),
                "imputed": n_missing, "log1p": log1p}
    if "wild_type" in meta:
        metadata["wild_type"] = meta["wild_type"]
    return FitnessTable(ground, values, missing, metadata, missing_policy)


def save_dataset(table: FitnessTable, path) -> list[Path]:
    """Write the non-missing rows plus a metadata sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence", "fitness"])
        for idx in np.flatnonzero(~table.missing):
            writer.writerow([table.sequence(idx), repr(float(table.values[idx]))])
    meta = table.ground.to_json()
    if table.metadata.get("wild_type") is not None:
        wt = table.metadata["wild_type"]
        meta["wild_type"] = wt if isinstance(wt, str) else format_item(wt)
    side = _sidecar(path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [path, side]


# synthetic landscape

@dataclass(frozen=True)
class Block:
    row: int
    col: int
    height: int
    width: int
    level: float


DEFAULT_BLOCK_SHAPES = ((4, 4, 1.0), (3, 6, 0.7), (5, 2, 0.5))


@dataclass(frozen=True)
class SyntheticSpec:
    alphabet_size: int = 26
    blocks: tuple[Block, ...] | None = None
    background: float = 0.0
    seed: int = 0

    def resolved_blocks(self) -> tuple[Block, ...]:
        """Explicit blocks, or the default shapes at seeded non-touching positions."""
        if self.blocks is not None:
            return tuple(self.blocks)
        rng = np.random.default_rng(self.seed)
        k = self.alphabet_size
        placed: list[Block] = []
        for h, w, level in DEFAULT_BLOCK_SHAPES:
            for _ in range(10_000):
                b = Block(int(rng.integers(0, k - h + 1)), int(rng.integers(0, k - w + 1)), h, w, level)
                if all(not _overlap(b, o, margin=1) for o in placed):
                    placed.append(b)
                    break
            else:
                raise DataError("could not place default synthetic blocks; enlarge the alphabet")
        return tuple(placed)

    def to_json(self) -> dict:
        d = asdict(self)
        d["blocks"] = [asdict(b) for b in self.resolved_blocks()]
        return d


def _overlap(a: Block, b: Block, margin: int = 0) -> bool:
    return not (
        a.row + a.height + margin <= b.row or b.row + b.height + margin <= a.row
        or a.col + a.width + margin <= b.col or b.col + b.width + margin <= a.col
    )


def synthetic_ground(alphabet_size: int = 26) -> GroundSet:
    symbols = list(string.ascii_uppercase) + list(string.ascii_lowercase) + list(string.digits)
    if alphabet_size > len(symbols):
        raise DataError(f"alphabet size {alphabet_size} exceeds {len(symbols)} single-character symbols")
    return GroundSet.uniform(2, symbols[:alphabet_size])


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> FitnessTable:
    """Two-site landscape: rectangles of constant fitness on a flat background."""
    k = spec.alphabet_size
    blocks = spec.resolved_blocks()
    if not blocks or all(b.level == spec.background for b in blocks):
        raise DataError("synthetic landscape needs at least one non-background block")
    for i, b in enumerate(blocks):
        if b.height < 1 or b.width < 1 or b.row < 0 or b.col < 0 or b.row + b.height > k or b.col + b.width > k:
            raise DataError(f"block {i} lies outside the {k}x{k} grid")
        for other in blocks[:i]:
            if _overlap(b, other):
                raise DataError(f"block {i} overlaps an earlier block")
    grid = np.full((k, k), float(spec.background))
    for b in blocks:
        grid[b.row:b.row + b.height, b.col:b.col + b.width] = b.level
    ground = synthetic_ground(k)
    meta = {"source": "synthetic", "units": "fitness", "spec": spec.to_json(),
            "wild_type": format_item(ground.item_from_index(0))}
    return FitnessTable(ground, grid.ravel(), np.zeros(k * k, dtype=bool), meta)


# reports

REPORT_FILES = ("report.json", "per_round_batches.csv", "ecdf.csv", "regret.csv", "reference_lines.csv")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_report(report, out_dir) -> list[Path]:
    """Write the JSON report and plot-ready CSVs; returns the file paths.

    ``report`` is a campaign report object or its ``to_json()`` dict. Round 0
    (the initial design) appears in the batch and ECDF files but not in the
    regret curve.
    """
    data = report if isinstance(report, dict) else report.to_json()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / name for name in REPORT_FILES]
        paths[0].write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        rounds = data.get("rounds", [])
        _write_csv(paths[1], ["round", "item", "fitness"],
                   [(r["round"], seq, repr(f)) for r in rounds for seq, f in zip(r["batch"], r["fitness"])])
        ecdf_rows = []
        for r in rounds:
            vals = sorted(r["fitness"])
            m = len(vals)
            ecdf_rows += [(r["round"], repr(v), repr((i + 1) / m)) for i, v in enumerate(vals)]
        _write_csv(paths[2], ["round", "fitness", "cumulative_fraction"], ecdf_rows)
        _write_csv(paths[3], ["round", "best", "regret"],
                   [(r["round"], repr(r["best_so_far"]), repr(r["regret"])) for r in rounds if r["round"] > 0])
        refs = data.get("reference_lines", {})
        _write_csv(paths[4], ["reference", "sequence", "fitness"],
                   [(name, ref["sequence"], repr(ref["fitness"])) for name, ref in sorted(refs.items())])
    except OSError as exc:
        raise OSError(f"writing report to {out}: {exc}") from exc
    return paths


def load_report(out_dir) -> dict:
    return json.loads((Path(out_dir) / REPORT_FILES[0]).read_text(encoding="utf-8"))

"""Click-record file format and structured result documents.

A record file holds one comma-separated line per *heralded* trial::

    # dlcz-lab-records format_version=1 kind=entangle mode=I config_hash=... seed=7 ...
    trial_index,herald,mode,phase_index,click_2a,click_2b
    118,0,I,10,0,1
    ...
    # end n_records=214

``herald`` is 0 for a D1a herald and 1 for D1b; ``mode`` is S (separate
readout) or I (interfering readout); ``phase_index`` indexes the fringe
phase list carried in the header (always 0 in S mode).  Unheralded trials
and discarded double-herald trials produce no line; their counts live in
the run summary document.

The first line carries the provenance needed to interpret and reproduce
the file (format version, config hash, seed, trial counts, phase list);
the final ``# end`` line makes silent truncation detectable: a reader that
does not find it, or finds a mismatched count, raises RecordFormatError.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Optional

import numpy as np

from .errors import RecordFormatError

FORMAT_VERSION = 1
_MAGIC = "dlcz-lab-records"
_COLUMNS = "trial_index,herald,mode,phase_index,click_2a,click_2b"


@dataclass(frozen=True)
class TrialRecord:
    """One write/read trial.

    ``herald`` is None when no usable herald fired (no readout performed,
    clicks are False); 0 and 1 tag D1a and D1b heralds.
    """

    trial_index: int
    herald: Optional[int]
    readout_mode: str  # "S" | "I"
    phase_index: int
    click_2a: bool
    click_2b: bool


@dataclass(frozen=True)
class RecordHeader:
    """Provenance line of a record file."""

    kind: str  # "entangle"
    mode: str  # "S" | "I"
    config_hash: str
    seed: int
    n_trials: int
    batch_size: int
    theta: float
    storage_time: float
    phases: tuple[float, ...]
    format_version: int = FORMAT_VERSION

    def to_line(self) -> str:
        phase_field = ";".join(repr(p) for p in self.phases)
        parts = [
            f"# {_MAGIC}",
            f"format_version={self.format_version}",
            f"kind={self.kind}",
            f"mode={self.mode}",
            f"config_hash={self.config_hash}",
            f"seed={self.seed}",
            f"n_trials={self.n_trials}",
            f"batch_size={self.batch_size}",
            f"theta={self.theta!r}",
            f"storage_time={self.storage_time!r}",
            f"phases={phase_field}",
        ]
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str, origin: str) -> "RecordHeader":
        tokens = line.strip().split()
        if len(tokens) < 2 or tokens[0] != "#" or tokens[1] != _MAGIC:
            raise RecordFormatError(f"{origin}: not a {_MAGIC} file (bad first line)")
        fields: dict[str, str] = {}
        for token in tokens[2:]:
            key, sep, value = token.partition("=")
            if not sep:
                raise RecordFormatError(f"{origin}: malformed header token {token!r}")
            fields[key] = value
        try:
            version = int(fields["format_version"])
            if version != FORMAT_VERSION:
                raise RecordFormatError(
                    f"{origin}: unsupported format_version {version} (reader supports {FORMAT_VERSION})"
                )
            phases = tuple(
                float(tok) for tok in fields["phases"].split(";") if tok
            )
            return cls(
                kind=fields["kind"],
                mode=fields["mode"],
                config_hash=fields["config_hash"],
                seed=int(fields["seed"]),
                n_trials=int(fields["n_trials"]),
                batch_size=int(fields["batch_size"]),
                theta=float(fields["theta"]),
                storage_time=float(fields["storage_time"]),
                phases=phases,
                format_version=version,
            )
        except KeyError as exc:
            raise RecordFormatError(f"{origin}: header missing field {exc}") from exc
        except ValueError as exc:
            raise RecordFormatError(f"{origin}: bad header value ({exc})") from exc


@dataclass(frozen=True)
class RecordSet:
    """All heralded trials of one run, as column arrays."""

    header: RecordHeader
    trial_index: np.ndarray  # int64
    herald: np.ndarray  # int8: 0 = D1a, 1 = D1b
    phase_index: np.ndarray  # int32
    click_2a: np.ndarray  # bool
    click_2b: np.ndarray  # bool

    def __post_init__(self) -> None:
        n = len(self.trial_index)
        for name in ("herald", "phase_index", "click_2a", "click_2b"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has mismatched length")

    def __len__(self) -> int:
        return len(self.trial_index)

    def iter_records(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield TrialRecord(
                trial_index=int(self.trial_index[i]),
                herald=int(self.herald[i]),
                readout_mode=self.header.mode,
                phase_index=int(self.phase_index[i]),
                click_2a=bool(self.click_2a[i]),
                click_2b=bool(self.click_2b[i]),
            )


def write_records(path: str, records: RecordSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        dump_records(handle, records)


def dump_records(handle: io.TextIOBase, records: RecordSet) -> None:
    handle.write(records.header.to_line() + "\n")
    handle.write(_COLUMNS + "\n")
    mode = records.header.mode
    for i in range(len(records)):
        handle.write(
            f"{records.trial_index[i]},{records.herald[i]},{mode},"
            f"{records.phase_index[i]},{int(records.click_2a[i])},{int(records.click_2b[i])}\n"
        )
    handle.write(f"# end n_records={len(records)}\n")


def read_records(path: str) -> RecordSet:
    with open(path, "r", encoding="utf-8") as handle:
        return load_records(handle, origin=os.path.basename(path))


def load_records(handle: io.TextIOBase, origin: str = "<records>") -> RecordSet:
    header_line = handle.readline()
    if not header_line:
        raise RecordFormatError(f"{origin}: empty file")
    header = RecordHeader.from_line(header_line, origin)
    columns_line = handle.readline().strip()
    if columns_line != _COLUMNS:
        raise RecordFormatError(
            f"{origin}: unexpected column header {columns_line!r} (want {_COLUMNS!r})"
        )

    trial_index: list[int] = []
    herald: list[int] = []
    phase_index: list[int] = []
    click_2a: list[int] = []
    click_2b: list[int] = []
    end_count: Optional[int] = None
    for lineno, line in enumerate(handle, start=3):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].split()
            if tokens and tokens[0] == "end":
                try:
                    end_count = int(dict(t.partition("=")[::2] for t in tokens[1:])["n_records"])
                except (KeyError, ValueError) as exc:
                    raise RecordFormatError(f"{origin}:{lineno}: malformed end line") from exc
                break
            raise RecordFormatError(f"{origin}:{lineno}: unexpected comment line {line!r}")
        parts = line.split(",")
        if len(parts) != 6:
            raise RecordFormatError(f"{origin}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            trial_index.append(int(parts[0]))
            h = int(parts[1])
            phase = int(parts[3])
            a = int(parts[4])
            b = int(parts[5])
        except ValueError as exc:
            raise RecordFormatError(f"{origin}:{lineno}: bad field ({exc})") from exc
        if parts[2] != header.mode:
            raise RecordFormatError(
                f"{origin}:{lineno}: record mode {parts[2]!r} disagrees with header {header.mode!r}"
            )
        if h not in (0, 1) or a not in (0, 1) or b not in (0, 1):
            raise RecordFormatError(f"{origin}:{lineno}: field out of range in {line!r}")
        if not 0 <= phase < max(len(header.phases), 1):
            raise RecordFormatError(f"{origin}:{lineno}: phase_index {phase} out of range")
        herald.append(h)
        phase_index.append(phase)
        click_2a.append(a)
        click_2b.append(b)

    if end_count is None:
        raise RecordFormatError(
            f"{origin}: missing '# end' line — file is truncated or was not closed"
        )
    if end_count != len(trial_index):
        raise RecordFormatError(
            f"{origin}: end line says {end_count} records but {len(trial_index)} were read"
        )
    return RecordSet(
        header=header,
        trial_index=np.asarray(trial_index, dtype=np.int64),
        herald=np.asarray(herald, dtype=np.int8),
        phase_index=np.asarray(phase_index, dtype=np.int32),
        click_2a=np.asarray(click_2a, dtype=bool),
        click_2b=np.asarray(click_2b, dtype=bool),
    )


def records_to_bytes(records: RecordSet) -> bytes:
    buffer = io.StringIO()
    dump_records(buffer, records)
    return buffer.getvalue().encode("utf-8")


def write_document(path: str, document: Mapping[str, Any]) -> None:
    """Write a structured key-value result document (JSON, sorted keys)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(json_safe(dict(document)), handle, sort_keys=True, indent=2, allow_nan=False)
        handle.write("\n")


def read_document(path: str) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def json_safe(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [json_safe(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value

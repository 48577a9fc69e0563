"""Record-file round trips and malformed-input rejection."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlcz_lab import records
from dlcz_lab.errors import RecordFormatError
from dlcz_lab.records import (
    RecordHeader,
    RecordSet,
    load_records,
    read_records,
    records_to_bytes,
    write_records,
)


def make_set(n=5, mode="I", n_phases=4, seed=0):
    rng = np.random.default_rng(seed)
    phases = tuple(2 * np.pi * k / n_phases for k in range(n_phases)) if mode == "I" else ()
    header = RecordHeader(
        kind="entangle",
        mode=mode,
        config_hash="deadbeefcafe0123",
        seed=seed,
        n_trials=1000,
        batch_size=256,
        theta=0.25,
        storage_time=2e-7,
        phases=phases,
    )
    return RecordSet(
        header=header,
        trial_index=np.sort(rng.choice(1000, size=n, replace=False)).astype(np.int64),
        herald=rng.integers(0, 2, size=n).astype(np.int8),
        phase_index=(
            rng.integers(0, n_phases, size=n) if mode == "I" else np.zeros(n, int)
        ).astype(np.int32),
        click_2a=rng.integers(0, 2, size=n).astype(bool),
        click_2b=rng.integers(0, 2, size=n).astype(bool),
    )


def round_trip(original: RecordSet) -> RecordSet:
    text = records_to_bytes(original).decode("utf-8")
    return load_records(io.StringIO(text))


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(0, 40),
    mode=st.sampled_from(["S", "I"]),
    seed=st.integers(0, 2**16),
)
def test_round_trip_preserves_everything(n, mode, seed):
    original = make_set(n=n, mode=mode, seed=seed)
    again = round_trip(original)
    assert again.header == original.header
    np.testing.assert_array_equal(again.trial_index, original.trial_index)
    np.testing.assert_array_equal(again.herald, original.herald)
    np.testing.assert_array_equal(again.phase_index, original.phase_index)
    np.testing.assert_array_equal(again.click_2a, original.click_2a)
    np.testing.assert_array_equal(again.click_2b, original.click_2b)


def test_file_round_trip(tmp_path):
    original = make_set(n=17)
    path = tmp_path / "records.csv"
    write_records(str(path), original)
    again = read_records(str(path))
    assert again.header == original.header
    assert len(again) == 17
    # byte form is exactly what landed on disk
    assert path.read_bytes() == records_to_bytes(original)


def test_header_phase_list_round_trips_exactly():
    header = make_set(mode="I", n_phases=7).header
    parsed = RecordHeader.from_line(header.to_line(), "<test>")
    assert parsed.phases == header.phases  # repr round-trip, bit exact


def test_iter_records_matches_columns():
    rs = make_set(n=3)
    out = list(rs.iter_records())
    assert [r.trial_index for r in out] == rs.trial_index.tolist()
    assert all(r.readout_mode == "I" for r in out)


def truncate_lines(text: str, keep: int) -> str:
    return "\n".join(text.splitlines()[:keep]) + "\n"


def test_missing_end_line_is_truncation():
    text = records_to_bytes(make_set(n=6)).decode()
    clipped = truncate_lines(text, 6)  # drop trailer + last rows
    with pytest.raises(RecordFormatError, match="truncated"):
        load_records(io.StringIO(clipped))


def test_end_count_mismatch():
    text = records_to_bytes(make_set(n=6)).decode()
    lines = text.splitlines()
    del lines[4]  # remove one record, keep the trailer
    with pytest.raises(RecordFormatError, match="end line says 6 records but 5"):
        load_records(io.StringIO("\n".join(lines) + "\n"))


def test_partial_last_line():
    text = records_to_bytes(make_set(n=6)).decode()
    clipped = text.splitlines()[:5]
    clipped[-1] = clipped[-1].rsplit(",", 2)[0]  # cut mid-record
    with pytest.raises(RecordFormatError, match="expected 6 fields"):
        load_records(io.StringIO("\n".join(clipped) + "\n"))


def test_rejects_wrong_magic_and_version():
    with pytest.raises(RecordFormatError, match="bad first line"):
        load_records(io.StringIO("# some-other-format v1\n"))
    with pytest.raises(RecordFormatError, match="empty file"):
        load_records(io.StringIO(""))
    text = records_to_bytes(make_set(n=1)).decode()
    bumped = text.replace("format_version=1", "format_version=99")
    with pytest.raises(RecordFormatError, match="unsupported format_version 99"):
        load_records(io.StringIO(bumped))


def test_rejects_bad_column_header():
    text = records_to_bytes(make_set(n=1)).decode()
    lines = text.splitlines()
    lines[1] = "trial,who,knows"
    with pytest.raises(RecordFormatError, match="unexpected column header"):
        load_records(io.StringIO("\n".join(lines) + "\n"))


def test_rejects_mode_disagreement_and_range():
    text = records_to_bytes(make_set(n=2, mode="S")).decode()
    with pytest.raises(RecordFormatError, match="disagrees with header"):
        load_records(io.StringIO(text.replace(",S,", ",I,", 1)))

    rs = make_set(n=1, mode="I", n_phases=4)
    lines = records_to_bytes(rs).decode().splitlines()
    fields = lines[2].split(",")
    fields[3] = "11"  # phase_index beyond the 4-entry header list
    lines[2] = ",".join(fields)
    with pytest.raises(RecordFormatError, match="phase_index 11 out of range"):
        load_records(io.StringIO("\n".join(lines) + "\n"))

    fields[3] = "0"
    fields[1] = "2"  # herald out of range
    lines[2] = ",".join(fields)
    with pytest.raises(RecordFormatError, match="out of range"):
        load_records(io.StringIO("\n".join(lines) + "\n"))


def test_rejects_non_integer_field():
    text = records_to_bytes(make_set(n=1)).decode()
    lines = text.splitlines()
    fields = lines[2].split(",")
    fields[0] = "three"
    lines[2] = ",".join(fields)
    with pytest.raises(RecordFormatError, match="bad field"):
        load_records(io.StringIO("\n".join(lines) + "\n"))


def test_error_messages_carry_origin_and_line(tmp_path):
    path = tmp_path / "clicks.csv"
    text = records_to_bytes(make_set(n=3)).decode()
    path.write_text(truncate_lines(text, 4))
    with pytest.raises(RecordFormatError, match="clicks.csv"):
        read_records(str(path))


def test_document_round_trip(tmp_path):
    doc = {
        "format_version": 1,
        "nested": {"array": np.arange(3), "flag": np.bool_(True)},
        "value": np.float64(0.5),
        "count": np.int64(7),
    }
    path = tmp_path / "doc.json"
    records.write_document(str(path), doc)
    again = records.read_document(str(path))
    assert again == {
        "format_version": 1,
        "nested": {"array": [0, 1, 2], "flag": True},
        "value": 0.5,
        "count": 7,
    }
    # deterministic bytes (sorted keys, trailing newline)
    first = path.read_bytes()
    records.write_document(str(path), doc)
    assert path.read_bytes() == first


def test_json_safe_handles_non_finite():
    assert records.json_safe(float("nan")) == "nan"
    assert records.json_safe(float("inf")) == "inf"
    assert records.json_safe(-float("inf")) == "-inf"
    assert records.json_safe((1, 2)) == [1, 2]

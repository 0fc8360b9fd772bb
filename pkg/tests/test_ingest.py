"""Ingestion: hashing, the CSV reader's empty/zero-length distinction,
header handling, Parquet and workbook imports."""
import datetime as dt
import io
import zipfile

import pytest

from crosswalk.ingest import (
    DuplicateHeaderError,
    EmptyFileError,
    IngestError,
    IngestOptions,
    ParseFailure,
    generate_field_names,
    hash_bytes,
    hash_file,
    ingest_source,
    read_csv_text,
    supported_formats,
    write_csv_text,
)
from crosswalk.tabular import Table

# Published BLAKE2b-512 digests for the empty string and "abc".
BLAKE2B_EMPTY = (
    "786a02f742015903c6c6fd852552d272912f4740e15847618a86e217f71f5419"
    "d25e1031afee585313896444934eb04b903a685b1448b755d56f701afe9be2ce"
)
BLAKE2B_ABC = (
    "ba80a53f981c4d0d6a2797b69f12f6e94c212f14685ac4b74b12bb6fdbffa2d1"
    "7d87c5392aab792dc252d5de4533cc9518d38aa8dbf1925ab92386edd4009923"
)


def test_hash_bytes_known_answers():
    assert hash_bytes(b"") == BLAKE2B_EMPTY
    assert hash_bytes(b"abc") == BLAKE2B_ABC
    assert len(hash_bytes(b"anything")) == 128


def test_hash_file_matches_hash_bytes(tmp_path):
    p = tmp_path / "data.bin"
    p.write_bytes(b"abc" * 100_000)
    assert hash_file(p) == hash_bytes(b"abc" * 100_000)


# ----------------------------------------------------------------------
# CSV reading

def test_unquoted_empty_is_none_but_quoted_empty_is_text():
    rows = read_csv_text('a,,c\nx,"",z\n')
    assert rows[0] == ["a", None, "c"]
    assert rows[1] == ["x", "", "z"]


def test_quotes_commas_and_newlines_round_trip():
    rows = read_csv_text('"a,b","line1\nline2","say ""hi"""\n')
    assert rows == [["a,b", "line1\nline2", 'say "hi"']]


def test_crlf_and_bare_cr_both_end_rows():
    assert read_csv_text("a,b\r\nc,d\re,f\n") == [
        ["a", "b"], ["c", "d"], ["e", "f"],
    ]


def test_no_trailing_newline_keeps_last_row():
    assert read_csv_text("a,b\nc,d") == [["a", "b"], ["c", "d"]]


def test_stray_quote_inside_unquoted_field_is_literal():
    assert read_csv_text('it"s,fine\n') == [['it"s', "fine"]]


def test_text_after_closing_quote_is_an_error_with_position():
    with pytest.raises(ParseFailure) as err:
        read_csv_text('"abc"def\n')
    assert err.value.byte_offset == 5
    assert err.value.row == 0


def test_unterminated_quote_reports_row():
    with pytest.raises(ParseFailure) as err:
        read_csv_text('a,b\n"unclosed\n')
    assert err.value.row == 1


def test_write_csv_distinguishes_empty_from_zero_length():
    t = Table.build([("a", [None, ""]), ("b", ["x", "y"])])
    text = write_csv_text(t)
    assert text == 'a,b\n,x\n"",y\n'
    # and the reader inverts it
    rows = read_csv_text(text)
    assert rows[1] == [None, "x"]
    assert rows[2] == ["", "y"]


def test_csv_writer_quotes_only_when_needed():
    t = Table.build([("v", ["plain", "with,comma", 'with"quote', "two\nlines"])])
    lines = write_csv_text(t).split("\n")
    assert lines[1] == "plain"
    assert lines[2] == '"with,comma"'
    assert lines[3] == '"with""quote"'


# ----------------------------------------------------------------------
# ingest options and assembly

def test_header_row_and_no_header_are_mutually_exclusive():
    with pytest.raises(IngestError):
        IngestOptions(header_row=0, no_header=True)


def test_generated_names_and_bad_count():
    assert generate_field_names(3) == ["column_0", "column_1", "column_2"]
    assert generate_field_names(2, "f") == ["f_0", "f_1"]
    with pytest.raises(ValueError):
        generate_field_names(0)


def test_ingest_csv_basic(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("name,age\nalice,34\nbob,\n", "utf-8")
    [(table, record)] = ingest_source(p)
    assert table.column_names == ["name", "age"]
    assert table.cells("age") == ("34", None)
    assert record.digest == hash_file(p)
    assert record.row_count == 2
    assert record.column_count == 2
    assert record.format == "csv"


def test_ingest_never_guesses_types(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b,c\n1,2.5,true\n", "utf-8")
    [(table, _)] = ingest_source(p)
    assert table.row_at(0) == ("1", "2.5", "true")


def test_empty_file_is_an_error(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_bytes(b"")
    with pytest.raises(EmptyFileError):
        ingest_source(p)


def test_duplicate_headers_rejected(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("a,b,a\n1,2,3\n", "utf-8")
    with pytest.raises(DuplicateHeaderError, match="'a'"):
        ingest_source(p)


def test_no_header_generates_positional_names(tmp_path):
    p = tmp_path / "raw.csv"
    p.write_text("1,2\n3,4\n", "utf-8")
    [(table, _)] = ingest_source(p, IngestOptions(no_header=True))
    assert table.column_names == ["column_0", "column_1"]
    assert table.row_count == 2


def test_header_below_junk_requires_explicit_skip(tmp_path):
    p = tmp_path / "j.csv"
    p.write_text("junk\nalso junk\nname,age\nalice,34\n", "utf-8")
    with pytest.raises(IngestError, match="skip_rows=2"):
        ingest_source(p, IngestOptions(header_row=2))
    [(table, _)] = ingest_source(p, IngestOptions(header_row=2, skip_rows=2))
    assert table.column_names == ["name", "age"]
    assert table.cells("name") == ("alice",)


def test_short_rows_pad_long_rows_error(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b,c\n1,2\n", "utf-8")
    [(table, _)] = ingest_source(p)
    assert table.row_at(0) == ("1", "2", None)
    p.write_text("a,b\n1,2,3\n", "utf-8")
    with pytest.raises(ParseFailure, match="expected 2"):
        ingest_source(p)


def test_bom_is_stripped_from_first_header(tmp_path):
    p = tmp_path / "b.csv"
    p.write_bytes("﻿name,age\nx,1\n".encode("utf-8"))
    [(table, _)] = ingest_source(p)
    assert table.column_names == ["name", "age"]


def test_row_labels_count_from_zero(tmp_path, extract_csv):
    [(table, _)] = ingest_source(extract_csv)
    assert table.row_labels == tuple(range(6))


def test_unknown_extension_refused(tmp_path):
    p = tmp_path / "data.xls"
    p.write_bytes(b"x")
    with pytest.raises(IngestError, match="expected one of"):
        ingest_source(p)


# ----------------------------------------------------------------------
# Parquet

def test_parquet_round_trip_is_text_or_empty(tmp_path):
    pa = pytest.importorskip("pyarrow")
    import pyarrow.parquet as pq

    arrow = pa.table({
        "n": pa.array([1, None, 3], pa.int64()),
        "f": pa.array([1.5, 2.0, None], pa.float64()),
        "s": pa.array(["x", "", None], pa.string()),
        "b": pa.array([True, False, None], pa.bool_()),
        "d": pa.array([dt.date(2020, 1, 2), None, dt.date(1999, 12, 31)]),
    })
    p = tmp_path / "t.parquet"
    pq.write_table(arrow, p)
    [(table, record)] = ingest_source(p)
    assert record.format == "parquet"
    assert table.cells("n") == ("1", None, "3")
    assert table.cells("f") == ("1.5", "2.0", None)
    assert table.cells("s") == ("x", "", None)
    assert table.cells("b") == ("true", "false", None)
    assert table.cells("d") == ("2020-01-02", None, "1999-12-31")


def test_parquet_nested_columns_are_refused(tmp_path):
    pa = pytest.importorskip("pyarrow")
    import pyarrow.parquet as pq

    arrow = pa.table({"ok": [1], "nested": [[1, 2]]})
    p = tmp_path / "n.parquet"
    pq.write_table(arrow, p)
    with pytest.raises(ParseFailure, match="nested"):
        ingest_source(p)


# ----------------------------------------------------------------------
# XLSX (optional capability, stdlib reader)

def _sheet_xml(rows: list[list[object]]) -> bytes:
    """Build worksheet XML with inline strings / numbers / booleans."""
    ns = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"
    body = []
    for r, row in enumerate(rows, start=1):
        cells = []
        for c, value in enumerate(row):
            if value is None:
                continue
            col = ""
            n = c + 1
            while n:
                n, rem = divmod(n - 1, 26)
                col = chr(ord("A") + rem) + col
            ref = f"{col}{r}"
            if isinstance(value, bool):
                cells.append(f'<c r="{ref}" t="b"><v>{1 if value else 0}</v></c>')
            elif isinstance(value, (int, float)):
                cells.append(f'<c r="{ref}"><v>{value}</v></c>')
            else:
                cells.append(
                    f'<c r="{ref}" t="inlineStr"><is><t>{value}</t></is></c>'
                )
        body.append(f'<row r="{r}">{"".join(cells)}</row>')
    return (
        f'<?xml version="1.0"?><worksheet xmlns="{ns}">'
        f'<sheetData>{"".join(body)}</sheetData></worksheet>'
    ).encode()


def make_xlsx(path, sheets: dict[str, list[list[object]]]) -> None:
    main = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"
    rel = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
    pkg = "http://schemas.openxmlformats.org/package/2006/relationships"
    sheet_tags = "".join(
        f'<sheet name="{name}" sheetId="{i}" r:id="rId{i}"/>'
        for i, name in enumerate(sheets, start=1)
    )
    rels = "".join(
        f'<Relationship Id="rId{i}" Type="{rel}/worksheet" '
        f'Target="worksheets/sheet{i}.xml"/>'
        for i in range(1, len(sheets) + 1)
    )
    with zipfile.ZipFile(path, "w") as z:
        z.writestr("[Content_Types].xml",
                   '<?xml version="1.0"?><Types xmlns="http://schemas.'
                   'openxmlformats.org/package/2006/content-types"/>')
        z.writestr("xl/workbook.xml",
                   f'<?xml version="1.0"?><workbook xmlns="{main}" '
                   f'xmlns:r="{rel}"><sheets>{sheet_tags}</sheets></workbook>')
        z.writestr("xl/_rels/workbook.xml.rels",
                   f'<?xml version="1.0"?><Relationships xmlns="{pkg}">'
                   f'{rels}</Relationships>')
        for i, rows in enumerate(sheets.values(), start=1):
            z.writestr(f"xl/worksheets/sheet{i}.xml", _sheet_xml(rows))


needs_xlsx = pytest.mark.skipif(
    "xlsx" not in supported_formats(), reason="xlsx capability disabled"
)


@needs_xlsx
def test_xlsx_each_sheet_is_its_own_table(tmp_path):
    p = tmp_path / "book.xlsx"
    make_xlsx(p, {
        "Rates": [["ref", "amount"], ["A1", 100], ["A2", 250.5]],
        "Voids": [["ref", "since"], ["B9", "01/04/2020"]],
    })
    pairs = ingest_source(p)
    assert [rec.sheet_name for _, rec in pairs] == ["Rates", "Voids"]
    rates, voids = pairs[0][0], pairs[1][0]
    assert rates.column_names == ["ref", "amount"]
    assert rates.cells("amount") == ("100", "250.5")
    assert voids.cells("since") == ("01/04/2020",)
    # both sheets share the file digest
    assert pairs[0][1].digest == pairs[1][1].digest


@needs_xlsx
def test_xlsx_sheet_selection_and_gaps(tmp_path):
    p = tmp_path / "book.xlsx"
    make_xlsx(p, {"Only": [["a", "b", "c"], ["x", None, True]]})
    [(table, record)] = ingest_source(p, IngestOptions(sheet_name="Only"))
    assert record.sheet_name == "Only"
    assert table.row_at(0) == ("x", None, "true")
    with pytest.raises(IngestError, match="no sheet"):
        ingest_source(p, IngestOptions(sheet_name="Missing"))


def test_xlsx_capability_flag(tmp_path, monkeypatch):
    p = tmp_path / "book.xlsx"
    make_xlsx(p, {"S": [["a"], ["1"]]})
    monkeypatch.setenv("CROSSWALK_DISABLE_XLSX", "1")
    assert "xlsx" not in supported_formats()
    with pytest.raises(IngestError, match="not enabled"):
        ingest_source(p)

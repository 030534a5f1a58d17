import numpy as np
import pytest

from copulafactor.data import MarginKind, MarginSpec, MixedDataMatrix
from copulafactor.errors import InputError
from copulafactor.gibbs import McmcConfig, run_chain
from copulafactor.io import (
    ARCHIVE_MAGIC,
    decode_archive,
    encode_archive,
    infer_margin,
    ingest_csv,
    load_perisk,
    parse_margin,
    read_archive,
    read_margin_spec,
    read_table,
    write_archive,
    write_margin_spec,
    write_table,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestPerisk:
    def test_shape_and_margins(self):
        data = load_perisk()
        assert (data.n, data.p) == (62, 5)
        kinds = [m.kind for m in data.margins]
        assert kinds == [MarginKind.BINARY, MarginKind.CONTINUOUS, MarginKind.ORDINAL,
                         MarginKind.ORDINAL, MarginKind.CONTINUOUS]
        assert data.margins[2].levels == 6 and data.margins[3].levels == 6

    def test_counts(self):
        data = load_perisk()
        bmp = data.values[:, data.labels.index("Black.Mkt.Premium")]
        assert np.sum(bmp == 0) == 14
        # the bundled file has 28 countries with an independent judiciary
        assert np.sum(data.values[:, 0] == 2) == 28
        assert len(data.row_labels) == 62


class TestIngestion:
    def test_missing_cells(self, tmp_path):
        path = write(tmp_path, "a,b\n1.5,1\n,2\n2.5,NA\n3.5,1\n")
        data = ingest_csv(path)
        assert np.isnan(data.values[1, 0]) and np.isnan(data.values[2, 1])
        assert data.margins[1].kind is MarginKind.BINARY

    def test_ragged_row(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n3\n")
        with pytest.raises(InputError, match="row 3"):
            ingest_csv(path)

    def test_unparseable_cell_location(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n3,x\n")
        with pytest.raises(InputError, match=r"row 3, column 'b'"):
            ingest_csv(path)

    def test_constant_column(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2.5\n1,3.5\n1,4.5\n")
        with pytest.raises(InputError):
            ingest_csv(path)

    def test_non_integer_ordinal(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2.5\n2,3.5\n3.5,4.5\n")
        with pytest.raises(InputError, match=r"row 4, column 'a'"):
            ingest_csv(path, {"a": "ordinal"})

    def test_inference_and_recoding(self, tmp_path):
        path = write(tmp_path, "x,y,z\n0,10,0.5\n5,20,1.25\n0,30,2.5\n5,10,3.75\n")
        data = ingest_csv(path)
        assert [m.kind for m in data.margins] == [MarginKind.BINARY, MarginKind.ORDINAL, MarginKind.CONTINUOUS]
        np.testing.assert_array_equal(data.values[:, 0], [1, 2, 1, 2])
        np.testing.assert_array_equal(data.values[:, 1], [1, 2, 3, 1])

    def test_no_inference(self, tmp_path):
        path = write(tmp_path, "x,y\n0,10\n5,20\n0,30\n")
        data = ingest_csv(path, infer=False)
        assert all(m.kind is MarginKind.CONTINUOUS for m in data.margins)

    def test_declared_levels_too_few(self, tmp_path):
        path = write(tmp_path, "x,y\n1,1.5\n2,2.5\n3,3.5\n")
        with pytest.raises(InputError):
            ingest_csv(path, {"x": "ordinal:2"})

    def test_unknown_spec_column(self, tmp_path):
        path = write(tmp_path, "x,y\n1,1.5\n2,2.5\n")
        with pytest.raises(InputError, match="unknown"):
            ingest_csv(path, {"w": "binary"})

    def test_duplicate_header(self, tmp_path):
        with pytest.raises(InputError, match="duplicate"):
            ingest_csv(write(tmp_path, "x,x\n1,2\n2,3\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            ingest_csv(tmp_path / "nope.csv")

    def test_index_column(self, tmp_path):
        path = write(tmp_path, "id,x,y\nA,1,1.5\nB,2,2.5\nC,1,0.5\n")
        data = ingest_csv(path, index_col="id")
        assert data.row_labels == ["A", "B", "C"] and data.labels == ["x", "y"]

    def test_infer_margin_rules(self):
        assert infer_margin(np.array([0.3, 0.7, 0.3])).kind is MarginKind.BINARY
        assert infer_margin(np.arange(1.0, 16.0)).kind is MarginKind.ORDINAL
        assert infer_margin(np.arange(1.0, 17.0)).kind is MarginKind.CONTINUOUS


class TestMarginSpecs:
    def test_parse(self):
        assert parse_margin("ordinal:4").levels == 4
        assert parse_margin("Binary").kind is MarginKind.BINARY
        with pytest.raises(InputError):
            parse_margin("weird")
        with pytest.raises(InputError):
            parse_margin("binary:3")
        with pytest.raises(InputError):
            parse_margin("ordinal")

    def test_file_round_trip(self, tmp_path, small_mixed):
        path = tmp_path / "margins.txt"
        write_margin_spec(path, small_mixed)
        spec = read_margin_spec(path)
        assert list(spec) == small_mixed.labels
        assert [parse_margin(v).kind for v in spec.values()] == [m.kind for m in small_mixed.margins]

    def test_comments_and_errors(self, tmp_path):
        path = write(tmp_path, "# header\nx: binary  # note\n\n", "m.txt")
        assert read_margin_spec(path) == {"x": "binary"}
        bad = write(tmp_path, "x binary\n", "bad.txt")
        with pytest.raises(InputError, match="bad.txt:1"):
            read_margin_spec(bad)


@pytest.fixture(scope="module")
def short_draws():
    rng = np.random.default_rng(3)
    Y = rng.standard_normal((30, 3))
    Y[:, 2] = (Y[:, 2] > 0) + 1.0
    data = MixedDataMatrix(Y, [MarginSpec.continuous("a"), MarginSpec.continuous("b"), MarginSpec.binary("c")])
    return run_chain(data, McmcConfig(iterations=20, burnin=0, thin=2, k=1, seed=1), keep_scores=True)


class TestArchive:
    def test_round_trip_bytes(self, tmp_path, short_draws):
        a, b = tmp_path / "a.cfd", tmp_path / "b.cfd"
        write_archive(a, short_draws)
        back = read_archive(a)
        write_archive(b, back)
        assert a.read_bytes() == b.read_bytes()
        np.testing.assert_array_equal(back.loadings, short_draws.loadings)
        np.testing.assert_array_equal(back.scores, short_draws.scores)
        assert back.labels == list(short_draws.labels)

    def test_bad_magic(self, short_draws):
        blob = encode_archive(short_draws)
        with pytest.raises(InputError, match="magic"):
            decode_archive(b"X" * len(ARCHIVE_MAGIC) + blob[len(ARCHIVE_MAGIC):])

    def test_truncated(self, short_draws):
        blob = encode_archive(short_draws)
        with pytest.raises(InputError):
            decode_archive(blob[:-8])
        with pytest.raises(InputError):
            decode_archive(blob[: len(ARCHIVE_MAGIC) + 2])


class TestTables:
    def test_round_trip(self, tmp_path):
        rows = [{"name": "a", "value": 0.1 + 0.2}, {"name": "b", "value": 1e-300, "extra": 3}]
        path = tmp_path / "t.tsv"
        write_table(path, rows)
        back = read_table(path)
        assert float(back[0]["value"]) == 0.1 + 0.2
        assert float(back[1]["value"]) == 1e-300
        assert back[0]["extra"] == "" and back[1]["extra"] == "3"

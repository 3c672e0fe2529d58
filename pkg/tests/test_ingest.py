import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm
from scipy.stats import t as t_dist

from fash.errors import DataError, InvalidArgumentError
from fash.ingest import adjust_se, read_long_csv, write_csv, write_long_csv, write_manifest, write_table
from fash.likelihood import ObservationUnit


class TestAdjustSe:
    def test_large_df_limit(self):
        assert adjust_se(1.0, 0.5, 1e9) == pytest.approx(0.5, rel=1e-6)

    def test_zero_estimate_analytic_limit(self):
        want = 1.0 * norm.pdf(0.0) / t_dist.pdf(0.0, 14)
        assert adjust_se(0.0, 1.0, 14) == pytest.approx(want, rel=1e-12)
        # the defining identity approaches the same value for a tiny estimate
        nearby = adjust_se(1e-6, 1.0, 14)
        assert nearby == pytest.approx(want, rel=1e-5)

    def test_round_trip_identity(self):
        adjusted = adjust_se(1.0, 0.5, 14)
        assert norm.cdf(1.0 / adjusted) == pytest.approx(t_dist.cdf(2.0, 14), abs=1e-10)

    def test_round_trip_identity_grid(self):
        for ratio in (0.05, 0.3, 1.0, 2.5, 6.0):
            for nu in (3.0, 5.0, 14.0, 30.0, 120.0):
                se = 0.7
                beta = ratio * se
                adjusted = adjust_se(beta, se, nu)
                lhs = norm.sf(beta / adjusted)
                rhs = t_dist.sf(beta / se, nu)
                assert lhs == pytest.approx(rhs, abs=1e-10)
                assert adjusted > se

    def test_sign_symmetry(self):
        assert adjust_se(-1.3, 0.4, 9) == adjust_se(1.3, 0.4, 9)

    @given(
        beta=st.floats(-20.0, 20.0),
        se=st.floats(0.01, 5.0),
        nu=st.floats(2.5, 500.0),
    )
    @settings(max_examples=150, deadline=None)
    def test_always_inflates(self, beta, se, nu):
        assert adjust_se(beta, se, nu) > se

    def test_continuity_at_zero(self):
        for nu in (3.0, 14.0, 50.0):
            se = 0.8
            gap = abs(adjust_se(1e-7 * se, se, nu) - adjust_se(0.0, se, nu))
            assert gap < 1e-6 * se

    def test_invalid_df(self):
        with pytest.raises(InvalidArgumentError):
            adjust_se(1.0, 0.5, 2.0)
        with pytest.raises(InvalidArgumentError):
            adjust_se(1.0, 0.0, 10.0)


def toy_dataset():
    return [
        ObservationUnit("geneA", [0.0, 1.0, 2.0], [0.1, -0.2, np.pi], [0.5, 0.25, 1.0 / 3.0]),
        ObservationUnit("geneB", [0.5, 1.5], [1e-9, 2.0], [0.1, 0.9]),
    ]


class TestReadWrite:
    def test_round_trip_exact(self, tmp_path):
        dataset = toy_dataset()
        path = write_long_csv(tmp_path / "data.csv", dataset)
        loaded = read_long_csv(path)
        assert [u.id for u in loaded] == ["geneA", "geneB"]
        for a, b in zip(dataset, loaded):
            np.testing.assert_array_equal(a.times, b.times)
            np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
            np.testing.assert_array_equal(a.se, b.se)

    def test_trailing_newline(self, tmp_path):
        path = write_long_csv(tmp_path / "data.csv", toy_dataset())
        assert path.read_bytes().endswith(b"\n")

    def test_order_invariance(self, tmp_path):
        src = tmp_path / "shuffled.csv"
        src.write_text(
            "unit,t,beta_hat,se\n"
            "a,2.0,0.3,0.5\n"
            "b,0.0,0.1,0.2\n"
            "a,0.0,0.1,0.5\n"
            "a,1.0,0.2,0.5\n"
        )
        units = read_long_csv(src)
        assert [u.id for u in units] == ["a", "b"]
        np.testing.assert_array_equal(units[0].times, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(units[0].beta_hat, [0.1, 0.2, 0.3])

    def test_duplicate_pair_reports_line(self, tmp_path):
        src = tmp_path / "dup.csv"
        src.write_text("unit,t,beta_hat,se\na,1.0,0.1,0.5\na,1.0,0.2,0.5\n")
        with pytest.raises(DataError, match=":3"):
            read_long_csv(src)

    def test_nonpositive_se_reports_line(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("unit,t,beta_hat,se\na,1.0,0.1,0.0\n")
        with pytest.raises(DataError, match=":2"):
            read_long_csv(src)

    def test_empty_and_missing(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(DataError, match="empty"):
            read_long_csv(empty)
        header_only = tmp_path / "header.csv"
        header_only.write_text("unit,t,beta_hat,se\n")
        with pytest.raises(DataError, match="no data rows"):
            read_long_csv(header_only)
        with pytest.raises(DataError, match="not found"):
            read_long_csv(tmp_path / "nope.csv")

    def test_bad_header(self, tmp_path):
        src = tmp_path / "head.csv"
        src.write_text("id,time,beta,sd\na,1.0,0.1,0.5\n")
        with pytest.raises(DataError, match="header"):
            read_long_csv(src)

    def test_non_numeric_field(self, tmp_path):
        src = tmp_path / "nan.csv"
        src.write_text("unit,t,beta_hat,se\na,1.0,abc,0.5\n")
        with pytest.raises(DataError, match=":2"):
            read_long_csv(src)

    def test_df_column_applies_adjustment(self, tmp_path):
        src = tmp_path / "df.csv"
        src.write_text("unit,t,beta_hat,se,df\na,0.0,1.0,0.5,14\na,1.0,0.5,0.5,\n")
        adjusted = read_long_csv(src)[0]
        raw = read_long_csv(src, apply_df_adjustment=False)[0]
        assert adjusted.se[0] == pytest.approx(adjust_se(1.0, 0.5, 14))
        assert adjusted.se[1] == raw.se[1] == 0.5  # blank df passes through
        assert raw.se[0] == 0.5

    def test_df_too_small_rejected(self, tmp_path):
        src = tmp_path / "dfbad.csv"
        src.write_text("unit,t,beta_hat,se,df\na,0.0,1.0,0.5,2\n")
        with pytest.raises(DataError, match="df"):
            read_long_csv(src)

    def test_seventeen_digit_round_trip(self, tmp_path):
        values = [np.pi, 1.0 / 3.0, 0.1, 1e-15, 123456.789012345678, np.nextafter(1.0, 2.0)]
        path = write_csv(tmp_path / "vals.csv", ["x"], ([v] for v in values))
        lines = path.read_text().strip().splitlines()[1:]
        assert [float(s) for s in lines] == values

    def test_write_table(self, tmp_path):
        rows = [{"a": 1, "b": 0.5}, {"a": 2, "b": 1.5}]
        path = write_table(tmp_path / "t.csv", rows)
        assert path.read_text() == "a,b\n1,0.5\n2,1.5\n"
        with pytest.raises(InvalidArgumentError):
            write_table(tmp_path / "e.csv", [])

    def test_manifest_round_trip(self, tmp_path):
        import json

        payload = {"seed": 3, "grid": np.array([0.0, 1.0]), "value": np.float64(0.25)}
        path = write_manifest(tmp_path / "m.json", payload)
        text = path.read_text()
        assert text.endswith("\n")
        loaded = json.loads(text)
        assert loaded == {"seed": 3, "grid": [0.0, 1.0], "value": 0.25}

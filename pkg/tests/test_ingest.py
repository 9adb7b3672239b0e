"""Ingest pipeline: schema detection, parsing, dedupe, outlier flagging."""

import numpy as np
import pandas as pd
import pytest

from survbias import ingest, store
from survbias.errors import EmptyFile, SchemaUnrecognized

OLD_HEADER = ("SYMBOL,SERIES,OPEN,HIGH,LOW,CLOSE,LAST,PREVCLOSE,"
              "TOTTRDQTY,TOTTRDVAL,TIMESTAMP,TOTALTRADES,ISIN")


def old_row(symbol, close, date="01-SEP-2016", series="EQ", qty=1000,
            open_=None, high=None, low=None, isin="INE000A01001"):
    open_ = close if open_ is None else open_
    high = max(open_, close) if high is None else high
    low = min(open_, close) if low is None else low
    val = close * qty
    return (f"{symbol},{series},{open_},{high},{low},{close},{close},"
            f"{close},{qty},{val},{date},10,{isin}")


def write_old_file(path, rows):
    path.write_text("\n".join([OLD_HEADER] + rows) + "\n")
    return path


class TestDetectSchema:
    def test_old_generation_header(self):
        header = ["SYMBOL", "SERIES", "CLOSE", "TOTTRDQTY", "TIMESTAMP"]
        mapping = ingest.detect_schema(header)
        assert mapping["SYMBOL"] == "SYMBOL"
        assert mapping["DATE"] == "TIMESTAMP"
        assert mapping["CLOSE"] == "CLOSE"
        assert mapping["TOTTRDQTY"] == "TOTTRDQTY"
        assert mapping["OPEN"] is None
        assert mapping["ISIN"] is None

    def test_udiff_generation_header(self):
        header = ["TckrSymb", "ClsPric", "TtlTradgVol", "TradDt", "SctySrs"]
        mapping = ingest.detect_schema(header)
        assert mapping["SYMBOL"] == "TckrSymb"
        assert mapping["CLOSE"] == "ClsPric"
        assert mapping["TOTTRDQTY"] == "TtlTradgVol"
        assert mapping["DATE"] == "TradDt"
        assert mapping["SERIES"] == "SctySrs"

    def test_unknown_header_rejected(self):
        with pytest.raises(SchemaUnrecognized):
            ingest.detect_schema(["FOO", "BAR"])

    def test_missing_close_rejected(self):
        with pytest.raises(SchemaUnrecognized):
            ingest.detect_schema(["SYMBOL", "SERIES", "TIMESTAMP"])

    def test_every_canonical_field_present_or_none(self):
        mapping = ingest.detect_schema(["SYMBOL", "CLOSE"])
        assert set(mapping) == set(ingest.CANONICAL_FIELDS)

    def test_unknown_extra_columns_ignored(self):
        header = ["SYMBOL", "CLOSE", "TIMESTAMP", "TOTALTRADES", "JUNKCOL"]
        mapping = ingest.detect_schema(header)
        assert mapping["SYMBOL"] == "SYMBOL"
        assert "JUNKCOL" not in mapping.values()

    def test_case_and_separator_insensitive(self):
        mapping = ingest.detect_schema(["tckr_symb", "Cls Pric", "trad dt"])
        assert mapping["SYMBOL"] == "tckr_symb"
        assert mapping["CLOSE"] == "Cls Pric"
        assert mapping["DATE"] == "trad dt"


class TestDateParsing:
    @pytest.mark.parametrize("raw", [
        "01-SEP-2016", "01-Sep-2016", "20160901", "2016-09-01", "01/09/2016",
    ])
    def test_formats_agree(self, raw):
        parsed = ingest.parse_dates(pd.Series([raw]))
        assert parsed.iloc[0] == pd.Timestamp("2016-09-01")

    def test_day_first_for_slashed(self):
        parsed = ingest.parse_dates(pd.Series(["02/01/2020"]))
        assert parsed.iloc[0] == pd.Timestamp("2020-01-02")

    def test_garbage_is_nat(self):
        parsed = ingest.parse_dates(pd.Series(["not-a-date", "", None]))
        assert parsed.isna().all()

    def test_mixed_formats_in_one_column(self):
        parsed = ingest.parse_dates(
            pd.Series(["01-SEP-2016", "20160902", "2016-09-05"]))
        assert list(parsed.dt.day) == [1, 2, 5]


class TestInferDateHint:
    def test_classic_name(self):
        hint = ingest.infer_date_hint("cm01SEP2016bhav.csv")
        assert hint == pd.Timestamp("2016-09-01")

    def test_udiff_name(self):
        hint = ingest.infer_date_hint(
            "BhavCopy_NSE_CM_0_0_0_20240708_F_0000.csv")
        assert hint == pd.Timestamp("2024-07-08")

    def test_iso_name(self):
        assert ingest.infer_date_hint("sec_bhavdata_full_2021-03-31.csv") == \
            pd.Timestamp("2021-03-31")

    def test_no_date_in_name(self):
        assert ingest.infer_date_hint("prices.csv") is None


class TestParseFile:
    def test_round_trip_basic(self, tmp_path):
        f = write_old_file(tmp_path / "cm01SEP2016bhav.csv", [
            old_row("AAA", 100.0), old_row("BBB", 50.5),
        ])
        raw = ingest.scan_raw_file(f)
        result = ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))
        assert result.raw_rows == 2
        assert result.skipped_rows == 0
        assert list(result.frame["SYMBOL"]) == ["AAA", "BBB"]
        assert list(result.frame["DATE"].unique()) == [pd.Timestamp("2016-09-01")]
        assert list(result.frame.columns) == store.STORE_COLUMNS

    def test_bad_rows_skipped_and_counted(self, tmp_path):
        f = write_old_file(tmp_path / "cm01SEP2016bhav.csv", [
            old_row("AAA", 100.0),
            "BBB,EQ,1,1,1,0,0,0,10,0,01-SEP-2016,1,X",       # close == 0
            "CCC,EQ,1,1,1,-5,0,0,10,0,01-SEP-2016,1,X",      # negative close
            "DDD,EQ,1,1,1,abc,0,0,10,0,01-SEP-2016,1,X",     # non-numeric
            "EEE,EQ,1,1,1,5,5,5,10,50,31-XXX-2016,1,X",      # bad date
            "FFF,EQ,10,8,9,10,10,10,10,100,01-SEP-2016,1,X", # high < open
        ])
        raw = ingest.scan_raw_file(f)
        result = ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))
        assert result.raw_rows == 6
        assert result.skipped_rows == 5
        assert list(result.frame["SYMBOL"]) == ["AAA"]

    def test_all_rows_bad_raises(self, tmp_path):
        f = write_old_file(tmp_path / "cm01SEP2016bhav.csv", [
            "AAA,EQ,1,1,1,zz,0,0,10,0,01-SEP-2016,1,X",
        ])
        raw = ingest.scan_raw_file(f)
        with pytest.raises(EmptyFile):
            ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))

    def test_header_only_file_raises(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text(OLD_HEADER + "\n")
        raw = ingest.scan_raw_file(f)
        with pytest.raises(EmptyFile):
            ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))

    def test_missing_date_column_uses_filename_hint(self, tmp_path):
        f = tmp_path / "cm02SEP2016bhav.csv"
        f.write_text("SYMBOL,SERIES,CLOSE,TOTTRDQTY\nAAA,EQ,10,100\n")
        raw = ingest.scan_raw_file(f)
        result = ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))
        assert result.frame["DATE"].iloc[0] == pd.Timestamp("2016-09-02")

    def test_missing_series_defaults_to_equity(self, tmp_path):
        f = tmp_path / "cm02SEP2016bhav.csv"
        f.write_text("SYMBOL,CLOSE,TOTTRDQTY\nAAA,10,100\n")
        raw = ingest.scan_raw_file(f)
        result = ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))
        assert result.frame["SERIES"].iloc[0] == "EQ"

    def test_missing_value_column_falls_back_to_close_times_qty(self, tmp_path):
        f = tmp_path / "cm02SEP2016bhav.csv"
        f.write_text("SYMBOL,SERIES,CLOSE,TOTTRDQTY,TIMESTAMP\n"
                     "AAA,EQ,10,100,02-SEP-2016\n")
        raw = ingest.scan_raw_file(f)
        result = ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))
        assert result.frame["TOTTRDVAL"].iloc[0] == pytest.approx(1000.0)

    def test_udiff_file_parses(self, tmp_path):
        f = tmp_path / "BhavCopy_NSE_CM_0_0_0_20240708_F_0000.csv"
        f.write_text(
            "TradDt,BizDt,Sgmt,TckrSymb,SctySrs,OpnPric,HghPric,LwPric,"
            "ClsPric,TtlTradgVol,TtlTrfVal,ISIN\n"
            "2024-07-08,2024-07-08,CM,AAA,EQ,9.5,10.5,9.0,10.0,100,1000,"
            "INE000A01001\n")
        raw = ingest.scan_raw_file(f)
        result = ingest.parse_file(raw, ingest.detect_schema(raw.header_fields))
        row = result.frame.iloc[0]
        assert row["SYMBOL"] == "AAA"
        assert row["DATE"] == pd.Timestamp("2024-07-08")
        assert row["CLOSE"] == pytest.approx(10.0)
        assert row["TOTTRDQTY"] == pytest.approx(100)


class TestFilterAndDedupe:
    def test_filter_equity(self):
        df = pd.DataFrame({
            "SERIES": ["EQ", "BE", "EQ", "SM", "N1"],
            "SYMBOL": list("ABCDE"),
        })
        kept = ingest.filter_equity(df)
        assert list(kept["SYMBOL"]) == ["A", "C"]

    def test_dedupe_first_wins(self):
        df = pd.DataFrame({
            "DATE": pd.to_datetime(["2020-01-01"] * 3),
            "SYMBOL": ["AAA", "AAA", "BBB"],
            "SERIES": ["EQ"] * 3,
            "CLOSE": [10.0, 12.0, 5.0],
        })
        deduped, conflicts = ingest.dedupe(df)
        assert len(deduped) == 2
        assert deduped.loc[deduped["SYMBOL"] == "AAA", "CLOSE"].iloc[0] == 10.0
        assert conflicts == 1

    def test_dedupe_identical_rows_not_conflicts(self):
        df = pd.DataFrame({
            "DATE": pd.to_datetime(["2020-01-01"] * 2),
            "SYMBOL": ["AAA"] * 2,
            "SERIES": ["EQ"] * 2,
            "CLOSE": [10.0, 10.0],
        })
        deduped, conflicts = ingest.dedupe(df)
        assert len(deduped) == 1
        assert conflicts == 0


def make_history(closes, symbol="AAA", start="2020-01-01"):
    dates = pd.bdate_range(start, periods=len(closes))
    return pd.DataFrame({
        "DATE": dates,
        "SYMBOL": symbol,
        "SERIES": "EQ",
        "OPEN": closes, "HIGH": closes, "LOW": closes, "CLOSE": closes,
        "TOTTRDQTY": 1000.0,
        "TOTTRDVAL": np.asarray(closes) * 1000.0,
        "ISIN": "",
        "OUTLIER": 0,
    })


class TestFlagOutliers:
    def test_hundredfold_jump_flagged(self):
        closes = [100.0] * 29 + [10000.0]
        flagged = ingest.flag_outliers(make_history(closes))
        assert flagged["OUTLIER"].iloc[-1] == 1
        assert flagged["OUTLIER"].iloc[:-1].sum() == 0
        # flagged records stay in the store
        assert len(flagged) == 30

    def test_constant_series_spike_flagged_despite_zero_std(self):
        # trailing std is exactly 0, any deviation must still trip the flag
        closes = [100.0] * 10 + [101.0]
        flagged = ingest.flag_outliers(make_history(closes))
        assert flagged["OUTLIER"].iloc[-1] == 1

    def test_first_two_observations_never_flagged(self):
        flagged = ingest.flag_outliers(make_history([1.0, 100000.0]))
        assert flagged["OUTLIER"].sum() == 0

    def test_window_excludes_current_observation(self):
        # if the current close leaked into its own window the deviation
        # would shrink; a clean jump after 29 steady days must flag
        closes = [50.0] * 29 + [5000.0]
        flagged = ingest.flag_outliers(make_history(closes))
        assert flagged["OUTLIER"].iloc[-1] == 1

    def test_noisy_series_not_flagged(self):
        rng = np.random.default_rng(7)
        closes = 100.0 + rng.normal(0, 1, size=200).cumsum()
        closes = np.maximum(closes, 1.0)
        flagged = ingest.flag_outliers(make_history(closes))
        assert flagged["OUTLIER"].sum() == 0

    def test_per_symbol_windows_independent(self):
        a = make_history([100.0] * 29 + [10000.0], symbol="AAA")
        b = make_history([100.0] * 30, symbol="BBB")
        flagged = ingest.flag_outliers(pd.concat([a, b], ignore_index=True))
        by_symbol = flagged.groupby("SYMBOL")["OUTLIER"].sum()
        assert by_symbol["AAA"] == 1
        assert by_symbol["BBB"] == 0


class TestIngestDirectory:
    def write_archive(self, tmp_path, n_days=5):
        dates = pd.bdate_range("2016-09-01", periods=n_days)
        for d in dates:
            name = f"cm{d.strftime('%d%b%Y').upper()}bhav.csv"
            rows = [
                old_row("AAA", 100.0, date=d.strftime("%d-%b-%Y")),
                old_row("BBB", 50.0, date=d.strftime("%d-%b-%Y")),
                old_row("CCC", 20.0, date=d.strftime("%d-%b-%Y"), series="BE"),
            ]
            write_old_file(tmp_path / name, rows)
        return dates

    def test_accounting_identity(self, tmp_path):
        self.write_archive(tmp_path)
        frame, stats = ingest.ingest_directory(tmp_path)
        assert stats.accounting_balanced()
        assert stats.raw_rows == 15
        assert stats.non_equity_rows == 5
        assert stats.retained_rows == 10
        assert stats.retained_rows == len(frame)

    def test_output_sorted_by_date_then_symbol(self, tmp_path):
        self.write_archive(tmp_path)
        frame, _ = ingest.ingest_directory(tmp_path)
        key = frame[["DATE", "SYMBOL"]].apply(tuple, axis=1)
        assert list(key) == sorted(key)

    def test_duplicates_across_rows_counted(self, tmp_path):
        rows = [old_row("AAA", 100.0), old_row("AAA", 100.0),
                old_row("AAA", 120.0)]
        write_old_file(tmp_path / "cm01SEP2016bhav.csv", rows)
        frame, stats = ingest.ingest_directory(tmp_path)
        assert len(frame) == 1
        assert stats.duplicate_rows == 2
        assert stats.conflicting_duplicates == 1
        assert stats.accounting_balanced()

    def test_empty_directory_raises_with_dir_name(self, tmp_path):
        with pytest.raises(EmptyFile, match=str(tmp_path)):
            ingest.ingest_directory(tmp_path)

    def test_one_bad_file_recorded_not_fatal(self, tmp_path):
        self.write_archive(tmp_path)
        (tmp_path / "cm09SEP2016bhav.csv").write_text(OLD_HEADER + "\n")
        frame, stats = ingest.ingest_directory(tmp_path)
        assert stats.files_parsed == 5
        assert "cm09SEP2016bhav.csv" in stats.files_failed
        assert len(frame) == 10

    def test_majority_schema_failure_aborts(self, tmp_path):
        write_old_file(tmp_path / "cm01SEP2016bhav.csv", [old_row("AAA", 1.0)])
        for i in range(2):
            (tmp_path / f"junk{i}.csv").write_text("FOO,BAR\n1,2\n")
        with pytest.raises(SchemaUnrecognized):
            ingest.ingest_directory(tmp_path)

    def test_minority_schema_failure_tolerated(self, tmp_path):
        self.write_archive(tmp_path)
        (tmp_path / "junk.csv").write_text("FOO,BAR\n1,2\n")
        frame, stats = ingest.ingest_directory(tmp_path)
        assert stats.files_parsed == 5
        assert any("schema" in v for v in stats.files_failed.values())

    def test_stats_serializable(self, tmp_path):
        import json
        self.write_archive(tmp_path)
        _, stats = ingest.ingest_directory(tmp_path)
        blob = json.dumps(stats.to_dict())
        assert json.loads(blob)["accounting_balanced"] is True

    def test_store_round_trip(self, tmp_path):
        self.write_archive(tmp_path)
        frame, _ = ingest.ingest_directory(tmp_path)
        out = tmp_path / "store.csv"
        store.save_store(frame, out)
        loaded = store.load_store(out)
        assert len(loaded) == len(frame)
        assert list(loaded.columns) == store.STORE_COLUMNS
        pd.testing.assert_series_equal(loaded["CLOSE"], frame["CLOSE"])

    def test_reingest_idempotent(self, tmp_path):
        self.write_archive(tmp_path)
        frame, _ = ingest.ingest_directory(tmp_path)
        out1 = tmp_path / "s1.csv"
        out2 = tmp_path / "s2.csv"
        store.save_store(frame, out1)
        frame2, _ = ingest.ingest_directory(tmp_path)
        store.save_store(frame2, out2)
        assert out1.read_bytes() == out2.read_bytes()

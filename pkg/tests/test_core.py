import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixforge.core import (
    ColumnSchema,
    Dataset,
    FunnelSegment,
    ScalePair,
    infer_cadence,
    load_dataset,
    max_abs_scale,
    save_dataset,
)
from mixforge.errors import (
    CadenceError,
    DomainError,
    ParameterError,
    ScaleError,
    SchemaError,
)


def weekly_dates(n, start=dt.date(2020, 1, 6)):
    return tuple(start + dt.timedelta(weeks=i) for i in range(n))


def make_dataset(spend, target, cadence="weekly"):
    spend = np.atleast_2d(np.asarray(spend, dtype=float))
    if spend.shape[0] == 1 and len(target) > 1:
        spend = spend.T
    names = tuple(f"ch{i}" for i in range(spend.shape[1]))
    dates = weekly_dates(len(target))
    return Dataset(
        dates=dates, spend=spend, target=np.asarray(target, float),
        channel_names=names, cadence=cadence,
    )


class TestDatasetValidation:
    def test_valid_roundtrip_of_fields(self):
        d = make_dataset([[1.0, 2.0], [3.0, 4.0]], [5.0, 6.0])
        assert d.n_periods == 2 and d.n_channels == 2
        assert d.channel_index("ch1") == 1

    def test_single_row_is_cadence_error(self):
        with pytest.raises(CadenceError):
            Dataset(
                dates=(dt.date(2020, 1, 6),),
                spend=np.array([[1.0]]),
                target=np.array([1.0]),
                channel_names=("tv",),
                cadence="weekly",
            )

    def test_negative_spend_is_domain_error(self):
        with pytest.raises(DomainError):
            make_dataset([[1.0], [-1.0]], [1.0, 2.0])

    def test_gap_in_dates(self):
        dates = (dt.date(2020, 1, 6), dt.date(2020, 1, 13), dt.date(2020, 1, 27))
        with pytest.raises(CadenceError):
            Dataset(
                dates=dates,
                spend=np.ones((3, 1)),
                target=np.ones(3),
                channel_names=("tv",),
                cadence="weekly",
            )

    def test_nonfinite_target_rejected(self):
        with pytest.raises(DomainError):
            make_dataset([[1.0], [1.0]], [1.0, np.nan])

    def test_spend_is_immutable(self):
        d = make_dataset([[1.0], [2.0]], [1.0, 2.0])
        with pytest.raises(ValueError):
            d.spend[0, 0] = 9.0

    def test_window_slice(self):
        d = make_dataset([[1.0], [2.0], [3.0], [4.0]], [1.0, 2.0, 3.0, 4.0])
        w = d.window(1, 3)
        assert w.n_periods == 2
        assert w.dates[0] == d.dates[1]
        np.testing.assert_array_equal(w.target, [2.0, 3.0])

    def test_next_dates_continue_grid(self):
        d = make_dataset([[1.0], [2.0]], [1.0, 2.0])
        nxt = d.next_dates(2)
        assert nxt[0] - d.dates[-1] == dt.timedelta(weeks=1)
        assert nxt[1] - nxt[0] == dt.timedelta(weeks=1)


class TestInferCadence:
    def test_weekly(self):
        assert infer_cadence(list(weekly_dates(4))) == "weekly"

    def test_daily(self):
        base = dt.date(2020, 1, 1)
        assert infer_cadence([base + dt.timedelta(days=i) for i in range(4)]) == "daily"

    def test_duplicate_dates(self):
        base = dt.date(2020, 1, 1)
        with pytest.raises(CadenceError):
            infer_cadence([base, base, base + dt.timedelta(days=1)])

    def test_mixed_cadence_rejected(self):
        base = dt.date(2020, 1, 1)
        with pytest.raises(CadenceError):
            infer_cadence([base, base + dt.timedelta(days=1), base + dt.timedelta(days=8)])


class TestMaxAbsScale:
    def test_direct_evaluation(self):
        d = make_dataset([[2.0], [4.0], [1.0]], [10.0, 20.0, 40.0])
        scaled, scales = max_abs_scale(d)
        np.testing.assert_allclose(scaled.spend[:, 0], [0.5, 1.0, 0.25])
        np.testing.assert_allclose(scaled.target, [0.25, 0.5, 1.0])
        assert scales.spend_scales[0] == 4.0
        assert scales.target_scale == 40.0

    def test_already_unit_column_unchanged(self):
        d = make_dataset([[0.5], [1.0]], [0.3, 1.0])
        scaled, scales = max_abs_scale(d)
        np.testing.assert_array_equal(scaled.spend, d.spend)
        assert scales.spend_scales[0] == 1.0

    def test_all_zero_column_names_channel(self):
        d = make_dataset([[0.0, 1.0], [0.0, 2.0]], [1.0, 2.0])
        with pytest.raises(ScaleError, match="ch0"):
            max_abs_scale(d)

    @given(
        arrays(
            np.float64,
            st.tuples(st.integers(2, 30), st.integers(1, 4)),
            elements=st.floats(0, 1e9),
        )
    )
    @settings(max_examples=50)
    def test_scaled_max_is_one_and_rescale_inverts(self, spend):
        # make every column and the target nonzero
        spend = spend + 1e-3
        target = spend.sum(axis=1) + 1.0
        d = make_dataset(spend, target)
        scaled, scales = max_abs_scale(d)
        np.testing.assert_allclose(np.abs(scaled.spend).max(axis=0), 1.0, rtol=1e-15)
        assert np.abs(scaled.target).max() == pytest.approx(1.0, rel=1e-15)
        back = scaled.spend * scales.spend_scales
        np.testing.assert_allclose(back, d.spend, rtol=1e-14)
        np.testing.assert_allclose(
            scales.rescale_target(scaled.target), d.target, rtol=1e-14
        )

    def test_scale_pair_rejects_nonpositive(self):
        with pytest.raises(ScaleError):
            ScalePair(spend_scales=np.array([0.0]), target_scale=1.0)


class TestLoadDataset:
    SCHEMA = ColumnSchema(date="week", target="policies", channels=("tv", "search"))

    def write_csv(self, tmp_path, rows, header="week,tv,search,policies"):
        path = tmp_path / "data.csv"
        path.write_text(header + "\n" + "\n".join(rows) + "\n")
        return path

    def test_weekly_file(self, tmp_path):
        rows = [
            f"{d.isoformat()},{10 + i},{5 + i},{100 + i}"
            for i, d in enumerate(weekly_dates(130))
        ]
        d = load_dataset(self.write_csv(tmp_path, rows), self.SCHEMA)
        assert d.n_periods == 130 and d.n_channels == 2
        assert d.cadence == "weekly"

    def test_unsorted_rows_are_sorted(self, tmp_path):
        dates = weekly_dates(3)
        rows = [
            f"{dates[2].isoformat()},1,1,3",
            f"{dates[0].isoformat()},1,1,1",
            f"{dates[1].isoformat()},1,1,2",
        ]
        d = load_dataset(self.write_csv(tmp_path, rows), self.SCHEMA)
        np.testing.assert_array_equal(d.target, [1.0, 2.0, 3.0])

    def test_missing_column_is_schema_error(self, tmp_path):
        rows = ["2020-01-06,1,100"]
        path = self.write_csv(tmp_path, rows, header="week,tv,policies")
        with pytest.raises(SchemaError, match="search"):
            load_dataset(path, self.SCHEMA)

    def test_single_row_is_cadence_error(self, tmp_path):
        path = self.write_csv(tmp_path, ["2020-01-06,1,1,100"])
        with pytest.raises(CadenceError):
            load_dataset(path, self.SCHEMA)

    def test_negative_spend_is_domain_error(self, tmp_path):
        dates = weekly_dates(3)
        rows = [f"{d.isoformat()},1,{s},10" for d, s in zip(dates, (1, -1, 1))]
        with pytest.raises(DomainError):
            load_dataset(self.write_csv(tmp_path, rows), self.SCHEMA)

    def test_duplicate_date_is_cadence_error(self, tmp_path):
        rows = ["2020-01-06,1,1,1", "2020-01-06,1,1,2", "2020-01-13,1,1,3"]
        with pytest.raises(CadenceError):
            load_dataset(self.write_csv(tmp_path, rows), self.SCHEMA)

    def test_save_load_roundtrip(self, tmp_path):
        d = make_dataset([[1.25, 2.5], [3.0, 0.125]], [7.5, 8.25])
        path = tmp_path / "out.csv"
        save_dataset(d, path)
        schema = ColumnSchema(date="date", target="target", channels=d.channel_names)
        back = load_dataset(path, schema)
        np.testing.assert_array_equal(back.spend, d.spend)
        np.testing.assert_array_equal(back.target, d.target)
        assert back.dates == d.dates


class TestFunnelSegment:
    def test_upper_carryover_centered_above_lower(self):
        upper = FunnelSegment("upper")
        lower = FunnelSegment("lower")
        assert upper.carryover_prior_mean > lower.carryover_prior_mean

    def test_unknown_label_rejected(self):
        with pytest.raises(ParameterError):
            FunnelSegment("sideways")

    def test_custom_priors_kept(self):
        seg = FunnelSegment("mid", carryover_prior=(3.0, 5.0))
        assert seg.carryover_prior == (3.0, 5.0)
        assert seg.saturation_prior is not None

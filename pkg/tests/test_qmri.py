import numpy as np
import pytest

from tistack import (InputError, IRAcquisition, MultiTISpec, QMaps, ValidationError,
                     Volume, fit_pd_t1, fit_qmaps, ir_signal, multi_ti_count,
                     null_ti, synth_multi_ti, synth_ti)
from tistack.volume import Intent

ACQ_LONG = IRAcquisition(tr=4000.0, ti=1400.0)
ACQ_SHORT = IRAcquisition(tr=4000.0, ti=400.0)


def make_qmaps(pd, t1, tr=4000.0, valid=None):
    pd = np.asarray(pd, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    if valid is None:
        valid = np.ones(pd.shape, dtype=np.uint8)
    return QMaps(pd=Volume(pd), t1=Volume(t1), tr=tr,
                 valid_mask=Volume(valid, intent=Intent.LABEL))


class TestIrSignal:
    def test_t1_zero_limit_returns_pd(self):
        assert ir_signal(1000.0, 0.0, ACQ_LONG) == pytest.approx(1000.0)

    def test_zero_pd_gives_zero(self):
        assert ir_signal(0.0, 1234.0, ACQ_SHORT) == 0.0

    def test_reference_values(self):
        assert ir_signal(100.0, 1000.0, ACQ_LONG) == pytest.approx(
            52.51217110055213, abs=1e-9)
        assert ir_signal(100.0, 1000.0, ACQ_SHORT) == pytest.approx(
            -32.23244531825445, abs=1e-9)

    def test_linear_in_pd(self):
        base = ir_signal(1.0, 800.0, ACQ_LONG)
        assert ir_signal(7.5, 800.0, ACQ_LONG) == pytest.approx(7.5 * base, rel=1e-12)

    def test_strictly_increasing_in_ti(self):
        tis = np.linspace(50.0, 3950.0, 80)
        vals = [ir_signal(10.0, 900.0, IRAcquisition(tr=4000.0, ti=t)) for t in tis]
        assert np.all(np.diff(vals) > 0)

    def test_vectorized_matches_scalar(self):
        pd = np.array([[[10.0, 20.0]]])
        t1 = np.array([[[500.0, 0.0]]])
        out = ir_signal(pd, t1, ACQ_LONG)
        assert out[0, 0, 0] == pytest.approx(ir_signal(10.0, 500.0, ACQ_LONG))
        assert out[0, 0, 1] == pytest.approx(20.0)


class TestNullTi:
    def test_reference_value(self):
        assert null_ti(1000.0, 4000.0) == pytest.approx(674.9972526421355, abs=1e-6)

    def test_infinite_tr_closed_form(self):
        assert null_ti(1000.0, np.inf) == pytest.approx(1000.0 * np.log(2.0), abs=1e-6)

    def test_defining_property(self):
        for t1 in (300.0, 1000.0, 2500.0):
            ti = null_ti(t1, 4000.0)
            assert abs(ir_signal(123.0, t1, IRAcquisition(tr=4000.0, ti=ti))) < 1e-9 * 123.0

    def test_nonpositive_t1_rejected(self):
        with pytest.raises(ValidationError):
            null_ti(0.0, 4000.0)


class TestFitPdT1:
    def test_forward_round_trip(self):
        yl = ir_signal(100.0, 1000.0, ACQ_LONG)
        ys = ir_signal(100.0, 1000.0, ACQ_SHORT)
        pd, t1, ok = fit_pd_t1(yl, ys, ACQ_LONG, ACQ_SHORT)
        assert ok
        assert pd == pytest.approx(100.0, rel=1e-4)
        assert t1 == pytest.approx(1000.0, rel=1e-4)

    def test_zero_signals_flagged_invalid(self):
        pd, t1, ok = fit_pd_t1(0.0, 0.0, ACQ_LONG, ACQ_SHORT)
        assert not ok and pd == 0.0 and t1 == 0.0

    def test_nonfinite_inputs_flagged_invalid(self):
        _, _, ok = fit_pd_t1(np.nan, 1.0, ACQ_LONG, ACQ_SHORT)
        assert not ok

    def test_grid_recovery_within_tenth_percent(self):
        for pd_true in (50.0, 100.0, 150.0):
            for t1_true in (300.0, 800.0, 1500.0, 3000.0):
                yl = ir_signal(pd_true, t1_true, ACQ_LONG)
                ys = ir_signal(pd_true, t1_true, ACQ_SHORT)
                pd, t1, ok = fit_pd_t1(yl, ys, ACQ_LONG, ACQ_SHORT)
                assert ok
                assert abs(pd - pd_true) / pd_true < 1e-3
                assert abs(t1 - t1_true) / t1_true < 1e-3

    def test_same_tis_rejected(self):
        with pytest.raises(ValidationError):
            fit_pd_t1(1.0, 2.0, ACQ_LONG, ACQ_LONG)

    def test_different_tr_rejected(self):
        with pytest.raises(ValidationError):
            fit_pd_t1(1.0, 2.0, ACQ_LONG, IRAcquisition(tr=5000.0, ti=400.0))


class TestFitQmaps:
    def _forward(self, pd, t1):
        return (Volume(ir_signal(pd, t1, ACQ_LONG)),
                Volume(ir_signal(pd, t1, ACQ_SHORT)))

    def test_phantom_round_trip(self):
        rng = np.random.default_rng(5)
        pd = rng.uniform(50, 150, size=(6, 6, 6))
        t1 = rng.uniform(200, 4000, size=(6, 6, 6))
        mprage, fgatir = self._forward(pd, t1)
        q = fit_qmaps(mprage, fgatir, ACQ_LONG, ACQ_SHORT)
        assert np.all(q.valid_mask.data == 1)
        assert np.max(np.abs(q.pd.data - pd) / pd) < 1e-3
        assert np.max(np.abs(q.t1.data - t1) / t1) < 1e-3

    def test_all_zero_inputs_all_invalid(self):
        q = fit_qmaps(Volume(np.zeros((3, 3, 3))), Volume(np.zeros((3, 3, 3))),
                      ACQ_LONG, ACQ_SHORT)
        assert np.all(q.valid_mask.data == 0)
        assert np.all(q.pd.data == 0) and np.all(q.t1.data == 0)

    def test_single_voxel_matches_scalar_fit(self):
        yl = ir_signal(80.0, 1200.0, ACQ_LONG)
        ys = ir_signal(80.0, 1200.0, ACQ_SHORT)
        q = fit_qmaps(Volume(np.full((1, 1, 1), yl)), Volume(np.full((1, 1, 1), ys)),
                      ACQ_LONG, ACQ_SHORT)
        pd, t1, ok = fit_pd_t1(yl, ys, ACQ_LONG, ACQ_SHORT)
        assert ok
        assert q.pd.data[0, 0, 0] == pytest.approx(pd, rel=1e-9)
        assert q.t1.data[0, 0, 0] == pytest.approx(t1, rel=1e-9)

    def test_mask_restricts_fitting(self):
        pd = np.full((4, 4, 4), 100.0)
        t1 = np.full((4, 4, 4), 900.0)
        mprage, fgatir = self._forward(pd, t1)
        mask = np.zeros((4, 4, 4), dtype=np.uint8)
        mask[:2] = 1
        q = fit_qmaps(mprage, fgatir, ACQ_LONG, ACQ_SHORT,
                      brain_mask=Volume(mask, intent=Intent.LABEL))
        assert np.all(q.valid_mask.data[:2] == 1)
        assert np.all(q.valid_mask.data[2:] == 0)
        assert np.all(q.pd.data[2:] == 0)

    def test_threads_change_nothing(self):
        rng = np.random.default_rng(11)
        pd = rng.uniform(50, 150, size=(5, 5, 5))
        t1 = rng.uniform(200, 4000, size=(5, 5, 5))
        mprage, fgatir = self._forward(pd, t1)
        q1 = fit_qmaps(mprage, fgatir, ACQ_LONG, ACQ_SHORT, threads=1)
        q4 = fit_qmaps(mprage, fgatir, ACQ_LONG, ACQ_SHORT, threads=4)
        assert np.array_equal(q1.pd.data, q4.pd.data)
        assert np.array_equal(q1.t1.data, q4.t1.data)
        assert np.array_equal(q1.valid_mask.data, q4.valid_mask.data)

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            fit_qmaps(Volume(np.zeros((3, 3, 3))), Volume(np.zeros((4, 3, 3))),
                      ACQ_LONG, ACQ_SHORT)

    def test_noise_calibration_median_t1_error(self):
        rng = np.random.default_rng(42)
        n = 10_000
        pd = np.full((n, 1, 1), 100.0)
        t1 = rng.uniform(300, 3000, size=(n, 1, 1))
        yl = ir_signal(pd, t1, ACQ_LONG) + rng.normal(0, 1.0, size=pd.shape)
        ys = ir_signal(pd, t1, ACQ_SHORT) + rng.normal(0, 1.0, size=pd.shape)
        q = fit_qmaps(Volume(yl), Volume(ys), ACQ_LONG, ACQ_SHORT)
        ok = q.valid_mask.data == 1
        rel = np.abs(q.t1.data[ok] - t1[ok]) / t1[ok]
        assert np.median(rel) < 0.05


class TestSynth:
    def test_synth_at_acquisition_tis_reproduces_inputs(self):
        rng = np.random.default_rng(9)
        pd = rng.uniform(50, 150, size=(5, 5, 5))
        t1 = rng.uniform(200, 4000, size=(5, 5, 5))
        mprage = Volume(ir_signal(pd, t1, ACQ_LONG))
        fgatir = Volume(ir_signal(pd, t1, ACQ_SHORT))
        q = fit_qmaps(mprage, fgatir, ACQ_LONG, ACQ_SHORT)
        back_long = synth_ti(q, 1400.0)
        back_short = synth_ti(q, 400.0)
        scale = np.maximum(np.abs(mprage.data), 1e-12)
        assert np.max(np.abs(back_long.data - mprage.data) / scale) < 5e-3
        scale = np.maximum(np.abs(fgatir.data), 1e-12)
        assert np.max(np.abs(back_short.data - fgatir.data) / scale) < 5e-3

    def test_invalid_voxels_synthesize_zero(self):
        q = make_qmaps([[[100.0, 0.0]]], [[[900.0, 0.0]]],
                       valid=np.array([[[1, 0]]], dtype=np.uint8))
        out = synth_ti(q, 700.0)
        assert out.data[0, 0, 1] == 0.0
        assert out.data[0, 0, 0] != 0.0

    def test_ti_out_of_range_rejected(self):
        q = make_qmaps([[[1.0]]], [[[900.0]]])
        with pytest.raises(ValidationError):
            synth_ti(q, 0.0)
        with pytest.raises(ValidationError):
            synth_ti(q, 4000.0)

    def test_monotone_in_ti(self):
        q = make_qmaps([[[100.0]]], [[[1100.0]]])
        v500 = synth_ti(q, 500.0).data[0, 0, 0]
        v600 = synth_ti(q, 600.0).data[0, 0, 0]
        v700 = synth_ti(q, 700.0).data[0, 0, 0]
        assert v500 < v600 < v700


class TestMultiTi:
    def test_default_spec_yields_51_channels(self):
        spec = MultiTISpec()
        assert spec.count == 51
        assert multi_ti_count(spec) == 51
        q = make_qmaps(np.full((2, 2, 2), 100.0), np.full((2, 2, 2), 1000.0))
        out = synth_multi_ti(q, spec)
        assert out.dims == (2, 2, 2, 51)

    def test_channel_zero_equals_single_synth(self):
        q = make_qmaps(np.full((2, 2, 2), 90.0), np.full((2, 2, 2), 700.0))
        out = synth_multi_ti(q, MultiTISpec())
        single = synth_ti(q, 400.0)
        assert np.array_equal(out.data[..., 0], single.data)

    def test_profiles_strictly_increasing(self):
        rng = np.random.default_rng(21)
        q = make_qmaps(rng.uniform(50, 150, (4, 4, 4)), rng.uniform(200, 4000, (4, 4, 4)))
        out = synth_multi_ti(q, MultiTISpec())
        assert np.all(np.diff(out.data, axis=-1) > 0)

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            MultiTISpec(ti_start=1400, ti_end=400, ti_step=20)
        with pytest.raises(ValidationError):
            MultiTISpec(ti_start=400, ti_end=1400, ti_step=0)
        with pytest.raises(ValidationError):
            MultiTISpec(ti_start=400, ti_end=1400, ti_step=19)


class TestQMapsInvariants:
    def test_invalid_voxels_must_be_zeroed(self):
        with pytest.raises(ValidationError):
            make_qmaps([[[5.0]]], [[[900.0]]], valid=np.array([[[0]]], dtype=np.uint8))

    def test_valid_t1_outside_fit_bounds_rejected(self):
        with pytest.raises(ValidationError):
            make_qmaps([[[5.0]]], [[[0.5]]])
        with pytest.raises(ValidationError):
            make_qmaps([[[5.0]]], [[[20000.0]]])

    def test_acquisition_validation(self):
        with pytest.raises(ValidationError):
            IRAcquisition(tr=4000.0, ti=4000.0)
        with pytest.raises(ValidationError):
            IRAcquisition(tr=4000.0, ti=0.0)

"""Inversion-recovery signal model, two-point PD/T1 mapping, multi-TI synthesis.

The signal model for an IR acquisition at inversion time TI and repetition
time TR is

    I = PD * (1 - 2*exp(-TI/T1) + exp(-TR/T1))

which is signed: tissue with a long T1 is still inverted (negative) at a
short TI. Synthesis keeps the sign; acquired magnitude images differ from
synthetic ones below the null point.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import NumericalError, ValidationError
from .volume import Intent, Volume, check_same_grid

T1_MIN = 1.0
T1_MAX = 10000.0
T1_TOL = 1e-4


@dataclass(frozen=True)
class IRAcquisition:
    """Timing of one inversion-recovery acquisition, in ms."""

    tr: float
    ti: float

    def __post_init__(self):
        if not (0 < self.ti < self.tr):
            raise ValidationError(f"need 0 < ti < tr, got ti={self.ti}, tr={self.tr}")


@dataclass(frozen=True)
class MultiTISpec:
    """Uniform TI sweep; the default covers 400..1400 ms in 20 ms steps."""

    ti_start: float = 400.0
    ti_end: float = 1400.0
    ti_step: float = 20.0

    def __post_init__(self):
        if not self.ti_start < self.ti_end:
            raise ValidationError("ti_start must be < ti_end")
        if self.ti_step <= 0:
            raise ValidationError("ti_step must be positive")
        span = (self.ti_end - self.ti_start) / self.ti_step
        if abs(span - round(span)) > 1e-9:
            raise ValidationError(
                f"TI range {self.ti_start}..{self.ti_end} is not divisible by step {self.ti_step}"
            )

    @property
    def count(self) -> int:
        return int(round((self.ti_end - self.ti_start) / self.ti_step)) + 1

    def values(self) -> np.ndarray:
        return self.ti_start + self.ti_step * np.arange(self.count)


@dataclass(frozen=True)
class QMaps:
    """Paired PD/T1 parameter maps plus the TR that produced them."""

    pd: Volume
    t1: Volume
    tr: float
    valid_mask: Volume

    def __post_init__(self):
        check_same_grid(self.pd, self.t1, ("pd", "t1"))
        check_same_grid(self.pd, self.valid_mask, ("pd", "valid_mask"))
        invalid = self.valid_mask.data == 0
        if np.any(self.pd.data[invalid] != 0) or np.any(self.t1.data[invalid] != 0):
            raise ValidationError("voxels with valid_mask = 0 must have pd = t1 = 0")
        t1v = self.t1.data[~invalid]
        if t1v.size and (t1v.min() < T1_MIN * (1 - 1e-9)
                         or t1v.max() > T1_MAX * (1 + 1e-9)):
            raise ValidationError(
                f"valid voxels must have t1 in [{T1_MIN}, {T1_MAX}] ms"
            )


def ir_signal(pd, t1, acq: IRAcquisition):
    """Signed IR signal; t1 = 0 is handled as its limit (both exponentials vanish)."""
    pd = np.asarray(pd, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    with np.errstate(divide="ignore"):
        factor = np.where(
            t1 > 0,
            1.0 - 2.0 * np.exp(-acq.ti / np.where(t1 > 0, t1, 1.0))
            + np.exp(-acq.tr / np.where(t1 > 0, t1, 1.0)),
            1.0,
        )
    out = pd * factor
    return float(out) if out.ndim == 0 else out


def null_ti(t1: float, tr: float) -> float:
    """TI at which the IR signal crosses zero, by bracketed root-finding.

    For finite tr the signal is negative as TI -> 0 and positive at TI = tr,
    so a bracket always exists on (0, tr). tr = inf is accepted and brackets
    around the asymptotic zero at t1*ln(2).
    """
    if t1 <= 0:
        raise ValidationError(f"t1 must be positive, got {t1}")
    upper = 100.0 * t1 if np.isinf(tr) else tr * (1.0 - 1e-12)
    lo, hi = 1e-9 * t1, upper
    acq_tr = tr

    def signal(ti):
        e_tr = 0.0 if np.isinf(acq_tr) else np.exp(-acq_tr / t1)
        return 1.0 - 2.0 * np.exp(-ti / t1) + e_tr

    if signal(lo) * signal(hi) > 0:
        raise NumericalError(f"no zero crossing for t1={t1}, tr={tr}")
    return float(brentq(signal, lo, hi, xtol=1e-12, rtol=8.9e-16))


def fit_pd_t1(
    i_long: float,
    i_short: float,
    acq_long: IRAcquisition,
    acq_short: IRAcquisition,
    t1_bounds: tuple[float, float] = (T1_MIN, T1_MAX),
) -> tuple[float, float, bool]:
    """Two-point (pd, t1) estimate for a single voxel.

    Degenerate inputs (zero signal, non-finite values) and bound-hitting
    minimizers return (0, 0, False) rather than raising: a whole-volume fit
    must never abort on one voxel.
    """
    _check_acquisitions(acq_long, acq_short)
    pd, t1, valid = _kernels.fit_ir_two_point(
        np.array([i_long], dtype=np.float64),
        np.array([i_short], dtype=np.float64),
        acq_long.ti,
        acq_short.ti,
        acq_long.tr,
        t1_bounds[0],
        t1_bounds[1],
        T1_TOL,
    )
    return float(pd[0]), float(t1[0]), bool(valid[0])


def _check_acquisitions(acq_long: IRAcquisition, acq_short: IRAcquisition) -> None:
    if acq_long.tr != acq_short.tr:
        raise ValidationError(
            f"acquisitions must share TR, got {acq_long.tr} and {acq_short.tr}"
        )
    if acq_long.ti == acq_short.ti:
        raise ValidationError("acquisitions must differ in TI")


def fit_qmaps(
    mprage: Volume,
    fgatir: Volume,
    acq_mprage: IRAcquisition,
    acq_fgatir: IRAcquisition,
    brain_mask: Volume | None = None,
    t1_bounds: tuple[float, float] = (T1_MIN, T1_MAX),
    threads: int = 1,
) -> QMaps:
    """Voxelwise PD/T1 fit over a volume pair, restricted to the mask."""
    _check_acquisitions(acq_mprage, acq_fgatir)
    check_same_grid(mprage, fgatir, ("mprage", "fgatir"))
    if brain_mask is not None:
        check_same_grid(mprage, brain_mask, ("mprage", "brain_mask"))

    shape = mprage.spatial_dims
    y_long = np.ascontiguousarray(mprage.data, dtype=np.float64).ravel()
    y_short = np.ascontiguousarray(fgatir.data, dtype=np.float64).ravel()
    if brain_mask is not None:
        in_mask = np.ascontiguousarray(brain_mask.data).ravel() > 0
    else:
        in_mask = np.ones(y_long.size, dtype=bool)

    idx = np.flatnonzero(in_mask)
    pd_flat = np.zeros(y_long.size)
    t1_flat = np.zeros(y_long.size)
    valid_flat = np.zeros(y_long.size, dtype=np.uint8)

    def run(sel):
        return _kernels.fit_ir_two_point(
            y_long[sel], y_short[sel],
            acq_mprage.ti, acq_fgatir.ti, acq_mprage.tr,
            t1_bounds[0], t1_bounds[1], T1_TOL,
        )

    if threads <= 1 or idx.size < 2:
        results = [(idx, run(idx))] if idx.size else []
    else:
        chunks = np.array_split(idx, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(c, pool.submit(run, c)) for c in chunks if c.size]
        results = [(c, f.result()) for c, f in futures]

    for sel, (pd, t1, valid) in results:
        pd_flat[sel] = pd
        t1_flat[sel] = t1
        valid_flat[sel] = valid

    return QMaps(
        pd=mprage.with_data(pd_flat.reshape(shape)),
        t1=mprage.with_data(t1_flat.reshape(shape)),
        tr=acq_mprage.tr,
        valid_mask=mprage.with_data(valid_flat.reshape(shape), intent=Intent.LABEL),
    )


def synth_ti(q: QMaps, ti: float) -> Volume:
    """Synthesize one signed T1-weighted image at the given TI; invalid voxels are 0."""
    if not (0 < ti < q.tr):
        raise ValidationError(f"ti must lie in (0, {q.tr}), got {ti}")
    acq = IRAcquisition(tr=q.tr, ti=ti)
    img = ir_signal(q.pd.data, q.t1.data, acq)
    img = np.where(q.valid_mask.data > 0, img, 0.0)
    return q.pd.with_data(img, intent=Intent.INTENSITY)


def synth_multi_ti(q: QMaps, spec: MultiTISpec = MultiTISpec()) -> Volume:
    """Synthesize the TI sweep as one 4D volume, channel k at ti_start + k*step."""
    channels = [synth_ti(q, ti).data for ti in spec.values()]
    stack = np.stack(channels, axis=-1)
    return q.pd.with_data(stack, intent=Intent.INTENSITY)


def multi_ti_count(spec: MultiTISpec) -> int:
    return spec.count

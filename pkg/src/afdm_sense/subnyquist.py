"""Discrete-time emulation of the de-chirp sub-Nyquist sensing receiver.

Multiplying the received frame by the conjugate zero-th chirp carrier
turns the pilot response into a signal whose DFT occupies exactly the
observation index set.  When that set is one circular interval of length
at most K, keeping every (n / K)-th sample folds the spectrum without
collision, so a K-point DFT recovers the observed samples at a fraction
of the full rate.  K is rounded up to the smallest divisor of the frame
length no smaller than the observation count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .daft_core import AfdmParams, _chirp_tables
from .sensing_model import PilotScheme, observation_index_set

__all__ = [
    "RadarConfig",
    "RateInfo",
    "DecimationPlan",
    "sampling_rate",
    "decimation_plan",
    "dechirp_decimate_receive",
]


@dataclass(frozen=True)
class RadarConfig:
    """Physical sampling constants for a sensing deployment."""

    bandwidth_hz: float
    n: int
    cpp_len: int = 0
    include_cpp_in_duration: bool = False

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_hz}")
        if self.n <= 0 or self.cpp_len < 0:
            raise ValueError("frame length must be positive and prefix length >= 0")

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.bandwidth_hz

    @property
    def frame_duration_s(self) -> float:
        samples = self.n + (self.cpp_len if self.include_cpp_in_duration else 0)
        return samples * self.sample_period_s

    @property
    def cpp_duration_s(self) -> float:
        return self.cpp_len * self.sample_period_s

    def max_delay_s(self, l_taps: int) -> float:
        return (l_taps - 1) * self.sample_period_s


class RateInfo(NamedTuple):
    f_s_hz: float
    compression_ratio: float


def sampling_rate(n_pilots: int, l_taps: int, chirp_num: int, cfg: RadarConfig) -> RateInfo:
    """Minimal de-chirped sampling rate and its ratio to the bandwidth.

    The rate is ``n_pilots ((l_taps - 1) chirp_num + 1) / T`` with ``T``
    taken from ``cfg``; the ratio is always quoted against the
    prefix-free frame duration, i.e. equals
    ``n_pilots ((l_taps - 1) chirp_num + 1) / n``.
    """
    if n_pilots < 1 or l_taps < 1 or chirp_num < 1:
        raise ValueError("n_pilots, l_taps and chirp_num must all be >= 1")
    per_frame = n_pilots * ((l_taps - 1) * chirp_num + 1)
    return RateInfo(
        f_s_hz=per_frame / cfg.frame_duration_s,
        compression_ratio=per_frame / cfg.n,
    )


class DecimationPlan(NamedTuple):
    n_observed: int
    k_points: int
    decimation: int
    effective_rate_hz: float | None
    formula_rate_hz: float | None


def decimation_plan(
    scheme: PilotScheme,
    params: AfdmParams,
    l_taps: int,
    q_max: int,
    cfg: RadarConfig | None = None,
) -> DecimationPlan:
    """Choose the folded DFT size for a contiguous observation set.

    K is the smallest divisor of the frame length that is at least the
    observation count; the emulated receiver then keeps one sample in
    every n / K.
    """
    if not scheme.contiguous:
        raise ValueError("sub-Nyquist reception requires a contiguous observation set")
    indices = observation_index_set(scheme, params, l_taps, q_max)
    n = params.n
    k_points = next(k for k in range(len(indices), n + 1) if n % k == 0)
    eff = form = None
    if cfg is not None:
        eff = k_points / cfg.frame_duration_s
        form = sampling_rate(scheme.n_pilots, l_taps, params.chirp_num, cfg).f_s_hz
    return DecimationPlan(
        n_observed=len(indices),
        k_points=k_points,
        decimation=n // k_points,
        effective_rate_hz=eff,
        formula_rate_hz=form,
    )


def dechirp_decimate_receive(
    r,
    scheme: PilotScheme,
    params: AfdmParams,
    l_taps: int,
    q_max: int,
    cfg: RadarConfig | None = None,
    frame=None,
) -> np.ndarray:
    """Recover the observed samples from a decimated de-chirped frame.

    Accepts the received frame with or without its prefix.  The frame must
    be pilot-only; passing the transmitted frame via ``frame`` enables
    that check.  Returns the same vector, in the same sorted order, that
    full-rate demodulation followed by index gathering would produce.
    """
    r = np.asarray(r, dtype=np.complex128)
    n = params.n
    if r.shape == (n + params.cpp_len,):
        r = r[params.cpp_len :]
    elif r.shape != (n,):
        raise ValueError(
            f"received frame must have {n} or {n + params.cpp_len} samples, got {r.shape}"
        )
    if frame is not None:
        frame = np.asarray(frame, dtype=np.complex128)
        allowed = np.zeros(n, dtype=bool)
        allowed[np.asarray(scheme.positions) % n] = True
        if np.any(np.abs(frame[~allowed]) > 0):
            raise ValueError("data symbols present: the folded band would be corrupted")
    indices = observation_index_set(scheme, params, l_taps, q_max)
    plan = decimation_plan(scheme, params, l_taps, q_max, cfg)
    k_points, step = plan.k_points, plan.decimation
    folded = indices % k_points
    if len(np.unique(folded)) != len(indices):
        raise ValueError("observation set folds with collisions at this rate")
    first, second = _chirp_tables(params)
    dechirped = first * r
    spectrum = np.fft.fft(dechirped[::step])
    return second[indices] * (step / np.sqrt(n)) * spectrum[folded]

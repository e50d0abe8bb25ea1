"""Synthetic stand-ins for the two benchmark processes.

The real benchmark files come from a public identification database and
must be fetched by the user, so the package also ships physically
motivated surrogates with the same shape and character:

* ``synthesize_cstr``: an exothermic continuous stirred tank reactor
  (the classic coolant-flow benchmark model).  One piecewise-constant
  input (coolant flow, L/min), two outputs (product concentration and
  reactor temperature), 7500 samples at 10 per minute.  The reference
  dataset is itself the output of such a simulation.
* ``synthesize_winding``: a simplified three-reel web winding rig.
  Five continuously varying inputs (three reel speeds, two motor
  current setpoints), two outputs (web tensions, with measurement
  noise), 2500 samples at 10 per second.

Both are deterministic per seed.  Dynamics are integrated with
fixed-step RK4 at a fraction of the sampling interval; the winding
inputs evolve at sub-sample resolution so they genuinely vary between
samples (which is what makes linear input interpolation worthwhile
there, while the reactor's piecewise-constant input does not).
"""

from __future__ import annotations

import math

import numpy as np

from .data import TimeSeries

__all__ = ["synthesize_cstr", "synthesize_winding", "write_daisy_file", "SYNTH_KINDS"]

SYNTH_KINDS = ("cstr", "winding")

# Reactor constants (per-minute units): feed rate over volume, feed
# concentration, feed/coolant inlet temperatures, Arrhenius pair,
# exothermic heat release and coolant heat removal coefficients.  The
# overall rate scale slows the transients so the sampling rate is high
# relative to signal changes, as in the reference recordings.
_CSTR_QV = 1.0
_CSTR_CAF = 1.0
_CSTR_TF = 350.0
_CSTR_TCF = 350.0
_CSTR_K0 = 7.2e10
_CSTR_ER = 1.0e4
_CSTR_HEAT = 1.44e13
_CSTR_COOL = 0.01
_CSTR_SAT = 700.0
_CSTR_RATE = 0.3


def _cstr_deriv(ca: float, temp: float, qc: float):
    arrhenius = math.exp(-_CSTR_ER / temp)
    rate = _CSTR_K0 * ca * arrhenius
    dca = _CSTR_QV * (_CSTR_CAF - ca) - rate
    dtemp = (
        _CSTR_QV * (_CSTR_TF - temp)
        + _CSTR_HEAT * ca * arrhenius
        + _CSTR_COOL * qc * (1.0 - math.exp(-_CSTR_SAT / qc)) * (_CSTR_TCF - temp)
    )
    return _CSTR_RATE * dca, _CSTR_RATE * dtemp


def synthesize_cstr(seed: int = 0, n_samples: int = 7500) -> TimeSeries:
    """Exothermic reactor driven by a piecewise-constant coolant flow.

    The coolant flow holds each level for 3 to 8 minutes, drawn
    uniformly from [99, 107] L/min; outputs are the product
    concentration (mol/L) and reactor temperature (K), sampled at
    10 per minute.  The trajectory starts after a settling period at
    the nominal flow.  The record spans many hours, so the time column
    is written in hours.
    """
    rng = np.random.default_rng(seed)
    dt = 0.1  # sampling interval, minutes
    n_sub = 10
    dt_sub = dt / n_sub

    def advance(ca, temp, qc, steps):
        for _ in range(steps):
            k1a, k1t = _cstr_deriv(ca, temp, qc)
            k2a, k2t = _cstr_deriv(ca + 0.5 * dt_sub * k1a, temp + 0.5 * dt_sub * k1t, qc)
            k3a, k3t = _cstr_deriv(ca + 0.5 * dt_sub * k2a, temp + 0.5 * dt_sub * k2t, qc)
            k4a, k4t = _cstr_deriv(ca + dt_sub * k3a, temp + dt_sub * k3t, qc)
            ca += (dt_sub / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            temp += (dt_sub / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        return ca, temp

    # Settle onto the nominal operating point before recording.
    ca, temp = 0.1, 438.5
    ca, temp = advance(ca, temp, 103.41, 60 * n_sub)

    qc_levels = []
    while len(qc_levels) < n_samples:
        hold = int(rng.integers(30, 81))  # 3 to 8 minutes
        level = float(rng.uniform(99.0, 107.0))
        qc_levels.extend([level] * hold)
    qc = np.asarray(qc_levels[:n_samples])

    t = np.arange(n_samples) * (dt / 60.0)  # hours
    outputs = np.empty((n_samples, 2))
    for n in range(n_samples):
        outputs[n] = (ca, temp)
        ca, temp = advance(ca, temp, qc[n], n_sub)
    return TimeSeries(t=t, x=qc.reshape(-1, 1), y=outputs)


# Winding rig constants: tension gain per speed difference, tension gain
# per motor current, base and speed-dependent damping, inter-span
# coupling, and the relative output measurement noise.
_WIND_GAIN_S = 6.0
_WIND_GAIN_I = 2.0
_WIND_DAMP0 = 1.5
_WIND_DAMP_S = 0.8
_WIND_COUPLE = 0.5
_WIND_NOISE_Y = 0.12
_WIND_NOISE_X = 0.02


def _smooth_noise(rng, n: int, dt: float, tau: float,
                  tau_drift: float = 10.0) -> np.ndarray:
    """Band-limited noise: twice low-pass filtered, slow drift removed.

    Removing the sub-(1/tau_drift) band keeps short windows of the
    signal statistically alike, so the train/validation/test thirds see
    the same process.  Normalized to unit std.
    """
    white = rng.normal(size=n)
    alpha = dt / tau
    beta = dt / tau_drift
    sig = np.empty(n)
    state1 = 0.0
    state2 = 0.0
    drift = 0.0
    for i in range(n):
        state1 += alpha * (white[i] - state1)
        state2 += alpha * (state1 - state2)
        drift += beta * (state2 - drift)
        sig[i] = state2 - drift
    sig -= sig.mean()
    std = sig.std()
    return sig / std if std > 0 else sig


def synthesize_winding(seed: int = 0, n_samples: int = 2500) -> TimeSeries:
    """Three-reel winding rig with two web tension outputs.

    Inputs are the three reel speeds and the two motor current
    setpoints, smooth band-limited signals generated at sub-sample
    resolution.  Tensions respond to speed differences across each web
    span and to the currents, with speed-dependent damping and a soft
    coupling between the spans.  Recorded outputs carry measurement
    noise; recorded inputs a smaller amount.  Sampled at 0.1 s.
    """
    rng = np.random.default_rng(seed)
    dt = 0.1  # sampling interval, seconds
    n_sub = 5
    dt_sub = dt / n_sub
    total_sub = n_samples * n_sub

    sig = [_smooth_noise(rng, total_sub, dt_sub, tau=0.8) for _ in range(5)]
    s1 = 1.0 + 0.25 * sig[0]
    s2 = 1.0 + 0.25 * sig[1]
    s3 = 1.0 + 0.25 * sig[2]
    i1 = 0.5 + 0.3 * sig[3]
    i3 = 0.5 + 0.3 * sig[4]

    def deriv(t1, t2, m):
        dt1 = (
            _WIND_GAIN_S * (s2[m] - s1[m])
            + _WIND_GAIN_I * i1[m]
            - (_WIND_DAMP0 + _WIND_DAMP_S * s2[m]) * t1
            + _WIND_COUPLE * math.tanh(t2 - t1)
        )
        dt2 = (
            _WIND_GAIN_S * (s3[m] - s2[m])
            + _WIND_GAIN_I * i3[m]
            - (_WIND_DAMP0 + _WIND_DAMP_S * s3[m]) * t2
            + _WIND_COUPLE * math.tanh(t1 - t2)
        )
        return dt1, dt2

    t1, t2 = 0.3, 0.3
    tensions = np.empty((n_samples, 2))
    for n in range(n_samples):
        tensions[n] = (t1, t2)
        base = n * n_sub
        for m in range(n_sub):
            idx = base + m
            k1a, k1b = deriv(t1, t2, idx)
            k2a, k2b = deriv(t1 + 0.5 * dt_sub * k1a, t2 + 0.5 * dt_sub * k1b, idx)
            k3a, k3b = deriv(t1 + 0.5 * dt_sub * k2a, t2 + 0.5 * dt_sub * k2b, idx)
            k4a, k4b = deriv(t1 + dt_sub * k3a, t2 + dt_sub * k3b, idx)
            t1 += (dt_sub / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            t2 += (dt_sub / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)

    sample_idx = np.arange(n_samples) * n_sub
    inputs = np.column_stack([s1[sample_idx], s2[sample_idx], s3[sample_idx],
                              i1[sample_idx], i3[sample_idx]])
    inputs = inputs + _WIND_NOISE_X * inputs.std(axis=0) * rng.normal(size=inputs.shape)
    outputs = tensions + _WIND_NOISE_Y * tensions.std(axis=0) * rng.normal(
        size=tensions.shape
    )
    t = np.arange(n_samples) * dt
    return TimeSeries(t=t, x=inputs, y=outputs)


def write_daisy_file(kind: str, series: TimeSeries, path) -> None:
    """Write a surrogate series in the raw layout of its preset.

    cstr: columns (time, coolant flow, concentration, temperature);
    winding: the five inputs then the two outputs, no time column.
    """
    with open(path, "w") as fh:
        if kind == "cstr":
            fh.write("# surrogate cstr: t qc Ca T\n")
            for i in range(len(series)):
                fh.write(
                    f"{series.t[i]:.10f} {series.x[i, 0]:.8f} "
                    f"{series.y[i, 0]:.10f} {series.y[i, 1]:.8f}\n"
                )
        elif kind == "winding":
            fh.write("# surrogate winding: S1 S2 S3 I1 I3 T1 T2\n")
            for i in range(len(series)):
                row = [*series.x[i], *series.y[i]]
                fh.write(" ".join(f"{v:.10f}" for v in row) + "\n")
        else:
            raise ValueError(f"unknown surrogate kind {kind!r}")

"""Free-induction-decay magnetometry: forward model and field extraction.

A sample polarized along z (or y) precesses about the applied field and
is read out by Faraday rotation; the probe angle follows

    theta_z(t) = (g1/B^2) * (Bz^2 + (Bx^2+By^2) cos(w) E(t)) * f0
    theta_y(t) = (g1/B^2) * (By*Bz (1 - cos(w) E(t)) + Bx*B sin(w) E(t)) * f0

with w = gamma*B*t and a Gaussian dephasing envelope E(t) =
exp(-t^2/T2^2) that damps only the oscillatory terms.  Jointly fitting
both traces recovers the field vector, T2, and the initial polarization
f0 (assumed equal for the two preparations).

The model is invariant under the simultaneous sign flip of (By, Bz), so
the fit returns the Bz >= 0 representative and lists the equivalent
mirror solution.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.optimize

from .errors import EstimationError, FitError, SchemaError
from .spins import GYROMAGNETIC_RATIO

PARAM_NAMES = ("bx", "by", "bz", "t2", "f0")

FID_CSV_COLUMNS = ("t_us", "theta_rad", "branch")

# Default synthetic-trace sampling: resolves a ~10 kHz Larmor line and a
# sub-millisecond envelope.
DEFAULT_SAMPLING_S = 0.5e-6
DEFAULT_DURATION_S = 1.5e-3


@dataclass(frozen=True)
class FidSample:
    """One FID point: time (s) and Faraday angle (rad)."""

    t: float
    theta: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be non-negative")


@dataclass(frozen=True)
class FieldEstimate:
    """Fitted field vector with dephasing time and polarization.

    ``flags`` names parameters (or issues) the data could not
    constrain; ``equivalent_solutions`` lists field vectors that fit the
    data exactly as well (sign degeneracy of the model).
    """

    b: np.ndarray
    t2: float
    f0: float
    residual_norm: float
    covariance: np.ndarray
    param_names: tuple = PARAM_NAMES
    flags: tuple = ()
    equivalent_solutions: tuple = ()

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)


def fid_signal(
    t,
    b,
    init_axis: str,
    f0: float,
    g1: float,
    t2: float,
    gamma: float = GYROMAGNETIC_RATIO,
):
    """Faraday-rotation FID signal, radians.  Vectorized over ``t``.

    ``init_axis`` selects the preparation: "z" or "y".  The zero-field
    limit is the constant g1*f0 for the z branch and 0 for the y branch.
    """
    if init_axis not in ("z", "y"):
        raise ValueError("init_axis must be 'z' or 'y'")
    if t2 <= 0:
        raise ValueError("t2 must be positive")
    t = np.asarray(t, dtype=float)
    bx, by, bz = (float(v) for v in np.asarray(b, dtype=float))
    b_mag = math.sqrt(bx**2 + by**2 + bz**2)
    if b_mag == 0.0:
        value = np.full_like(t, g1 * f0 if init_axis == "z" else 0.0)
        return value if value.ndim else float(value)
    envelope = np.exp(-(t**2) / t2**2)
    omega = gamma * b_mag * t
    cos_e = np.cos(omega) * envelope
    if init_axis == "z":
        value = (g1 / b_mag**2) * (bz**2 + (bx**2 + by**2) * cos_e) * f0
    else:
        sin_e = np.sin(omega) * envelope
        value = (g1 / b_mag**2) * (by * bz * (1.0 - cos_e) + bx * b_mag * sin_e) * f0
    return value if value.ndim else float(value)


def t2_from_gradient(sigma_cloud: float, gradient: float, gamma: float = GYROMAGNETIC_RATIO) -> float:
    """Dephasing time 1/(sigma * gamma * dB/dz) of a cloud in a gradient.

    A vanishing gradient or cloud width returns ``inf`` (no dephasing).
    """
    if sigma_cloud < 0 or gradient < 0:
        raise ValueError("sigma_cloud and gradient must be non-negative")
    denom = sigma_cloud * gamma * gradient
    return math.inf if denom == 0.0 else 1.0 / denom


def _as_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    ts, thetas = [], []
    for s in samples:
        if isinstance(s, FidSample):
            ts.append(s.t)
            thetas.append(s.theta)
        else:
            t, theta = s
            ts.append(float(t))
            thetas.append(float(theta))
    return np.asarray(ts), np.asarray(thetas)


def _fft_larmor_frequency(t: np.ndarray, theta: np.ndarray) -> float:
    """Angular frequency of the dominant spectral line (rad/s), 0 if flat."""
    if len(t) < 8:
        return 0.0
    order = np.argsort(t)
    t, theta = t[order], theta[order]
    dt = float(np.median(np.diff(t)))
    if dt <= 0:
        return 0.0
    detrended = theta - theta.mean()
    spectrum = np.abs(np.fft.rfft(detrended))
    freqs = np.fft.rfftfreq(len(t), dt)
    if len(spectrum) < 3:
        return 0.0
    k = 1 + int(np.argmax(spectrum[1:]))
    if spectrum[k] < 1e-9 * max(np.max(np.abs(theta)), 1e-300):
        return 0.0
    # Parabolic refinement of the peak bin.
    if 1 <= k < len(spectrum) - 1:
        a, b_, c = spectrum[k - 1], spectrum[k], spectrum[k + 1]
        denom = a - 2 * b_ + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        return 2 * math.pi * (freqs[k] + shift * (freqs[1] - freqs[0]))
    return 2 * math.pi * freqs[k]


def _envelope_t2(t: np.ndarray, osc: np.ndarray, duration: float) -> float:
    """Log-fit of the oscillation envelope: |osc| ~ exp(-t^2/T2^2)."""
    amp = np.abs(osc)
    big = amp > 0.2 * amp.max() if amp.max() > 0 else np.zeros(len(t), bool)
    if big.sum() < 4:
        return duration / 2.0
    slope = np.polyfit(t[big] ** 2, np.log(amp[big]), 1)[0]
    if slope >= 0:
        return duration / 2.0
    return float(1.0 / math.sqrt(-slope))


def _initial_guess(tz, thz, ty, thy, g1, gamma, duration):
    f0 = 0.0
    if len(tz):
        f0 = thz[np.argmin(tz)] / g1
    if f0 == 0.0 and len(ty):
        f0 = float(np.max(np.abs(thy))) / g1
    if f0 == 0.0:
        f0 = 1.0

    omega = _fft_larmor_frequency(ty, thy) if len(ty) else 0.0
    if omega == 0.0 and len(tz):
        omega = _fft_larmor_frequency(tz, thz)
    b_mag = omega / gamma if omega > 0 else 1e-3

    # Direction cosines from the non-decaying levels of each branch.
    nz2 = 0.5
    if len(tz):
        tail = tz > 0.75 * tz.max()
        if tail.sum() >= 4:
            nz2 = float(np.mean(thz[tail])) / (g1 * f0)
    nz2 = min(max(nz2, 1e-6), 1.0)
    nz = math.sqrt(nz2)

    ny = 0.0
    if len(ty):
        tail = ty > 0.75 * ty.max()
        if tail.sum() >= 4:
            ny = float(np.mean(thy[tail])) / (g1 * f0) / nz
    ny = min(max(ny, -math.sqrt(1.0 - nz2)), math.sqrt(1.0 - nz2))
    nx = math.sqrt(max(1.0 - nz2 - ny**2, 0.0))

    t2 = duration / 2.0
    if len(tz):
        osc = thz - g1 * f0 * nz2
        t2 = _envelope_t2(tz, osc, duration)

    if nx > 0 and len(ty) and omega > 0:
        env = np.exp(-(ty**2) / t2**2)
        quad = float(np.sum((thy - thy.mean()) * np.sin(omega * ty) * env))
        if quad < 0:
            nx = -nx

    return np.array([nx * b_mag, ny * b_mag, nz * b_mag, t2, f0])


def fit_fid(
    z_samples,
    y_samples,
    g1: float,
    gamma: float = GYROMAGNETIC_RATIO,
) -> FieldEstimate:
    """Joint damped least-squares fit of both FID branches.

    Free parameters: (Bx, By, Bz, T2, f0), with the two preparations
    sharing the polarization magnitude f0.  Initial guesses come from
    the FFT line position, the non-decaying signal levels, and an
    envelope log-fit.  Parameters the data leave unconstrained (zero
    Jacobian column, e.g. the transverse split for a z-branch-only
    data set) are reported in ``flags``.
    """
    tz, thz = _as_samples(z_samples)
    ty, thy = _as_samples(y_samples)
    n_total = len(tz) + len(ty)
    if n_total < 8:
        raise EstimationError("need at least 8 FID samples to constrain 5 parameters")
    duration = max(tz.max() if len(tz) else 0.0, ty.max() if len(ty) else 0.0)
    if duration <= 0:
        raise EstimationError("FID samples must span a positive time range")

    x0 = _initial_guess(tz, thz, ty, thy, g1, gamma, duration)

    def residuals(p):
        bx, by, bz, t2, f0 = p
        b = (bx, by, bz)
        out = []
        if len(tz):
            out.append(fid_signal(tz, b, "z", f0, g1, abs(t2) or 1e-30, gamma) - thz)
        if len(ty):
            out.append(fid_signal(ty, b, "y", f0, g1, abs(t2) or 1e-30, gamma) - thy)
        return np.concatenate(out)

    scale = np.array([1e-3, 1e-3, 1e-3, max(duration / 2, 1e-9), max(abs(x0[4]), 1.0)])
    result = scipy.optimize.least_squares(
        residuals, x0=x0, method="lm", x_scale=scale, xtol=1e-15, ftol=1e-15, max_nfev=20000
    )
    if not result.success:
        raise FitError(
            f"FID fit did not converge: {result.message} "
            f"(final residual norm {np.linalg.norm(result.fun):.3g})"
        )

    params = result.x.copy()
    params[3] = abs(params[3])  # model depends on T2^2 only

    flags = []
    # Identifiability checks use the Jacobian per natural parameter
    # scale, so mG-sized fields and spin-sized amplitudes compare fairly.
    jac_scaled = result.jac * scale[None, :]
    col_norms = np.linalg.norm(jac_scaled, axis=0)
    ref = max(col_norms.max(), 1e-300)
    for name, cn in zip(PARAM_NAMES, col_norms):
        if cn < 1e-9 * ref:
            flags.append(f"unconstrained:{name}")
    sv = np.linalg.svd(jac_scaled, compute_uv=False)
    if sv[-1] < 1e-9 * sv[0]:
        flags.append("degenerate_geometry")

    dof = n_total - len(params)
    sigma2 = 2.0 * result.cost / dof if dof > 0 else 0.0
    jtj = result.jac.T @ result.jac
    cov = sigma2 * np.linalg.pinv(jtj, rcond=1e-12)

    # Canonical sign representative: Bz >= 0 (the model is invariant
    # under flipping both By and Bz).
    bx, by, bz = params[0], params[1], params[2]
    if bz < 0 or (bz == 0 and by < 0):
        by, bz = -by, -bz
    b = np.array([bx, by, bz])
    mirror = np.array([bx, -by, -bz])

    return FieldEstimate(
        b=b,
        t2=float(params[3]),
        f0=float(params[4]),
        residual_norm=float(np.linalg.norm(result.fun)),
        covariance=cov,
        flags=tuple(flags),
        equivalent_solutions=(tuple(float(v) for v in mirror),),
    )


# ---------------------------------------------------------------------------
# file formats


def read_fid_csv(path) -> tuple[list[FidSample], list[FidSample]]:
    """Read FID samples (columns t_us, theta_rad, branch) into (z, y) lists."""
    path = Path(path)
    z_samples: list[FidSample] = []
    y_samples: list[FidSample] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty FID file") from None
        if tuple(header) != FID_CSV_COLUMNS:
            raise SchemaError(f"{path}: bad columns {header}, expected {list(FID_CSV_COLUMNS)}")
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{i}: expected 3 fields")
            try:
                sample = FidSample(t=float(row[0]) * 1e-6, theta=float(row[1]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{i}: {exc}") from None
            branch = row[2].strip()
            if branch == "z":
                z_samples.append(sample)
            elif branch == "y":
                y_samples.append(sample)
            else:
                raise SchemaError(f"{path}:{i}: branch must be 'z' or 'y', got {branch!r}")
    return z_samples, y_samples


def write_estimate_json(path, estimate: FieldEstimate) -> None:
    """Write a field estimate as JSON (fields in mG, times in us)."""
    payload = {
        "bx_mG": estimate.b[0] * 1e3,
        "by_mG": estimate.b[1] * 1e3,
        "bz_mG": estimate.b[2] * 1e3,
        "t2_us": estimate.t2 * 1e6,
        "f0_spins": estimate.f0,
        "residual_norm": estimate.residual_norm,
        "param_names": list(estimate.param_names),
        "covariance": [[float(v) for v in row] for row in estimate.covariance],
        "flags": list(estimate.flags),
        "equivalent_solutions_mG": [
            [v * 1e3 for v in sol] for sol in estimate.equivalent_solutions
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

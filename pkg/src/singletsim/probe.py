"""Faraday-rotation QND measurement model.

A linearly polarized pulse of n_photons photons picks up a polarization
rotation phi = g1 * F_z from the on-axis collective spin component, so a
shot-noise-limited polarimeter reads F_z with noise

    sigma_ro = 1 / (g1 * sqrt(b * n_photons))     [spins]

where b in (0, 1] is a single scalar detection-efficiency factor that
scales the information rate (equivalently inflates the readout variance
by 1/b).  Conditioning a Gaussian prior on such a measurement is a
one-row Kalman update; for a thermal state it reduces the measured
component's variance by 1/(1 + zeta_eff) with

    zeta = (2/3) g1^2 n_photons n_atoms,     zeta_eff = b * zeta.

The measurement leaves the measured spin component itself untouched
(QND): only the estimator's uncertainty shrinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError
from .spins import CollectiveSpinState, MagneticField, apply_rotation

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ProbeConfig:
    """Probe-pulse parameters.

    Attributes
    ----------
    g1 : float
        Vector (Faraday) coupling, radians per spin.
    g2 : float
        Tensor coupling, radians per spin.  Only enters the diagnostic
        ``tensor_angle``; it is never applied to the state.
    n_photons : float
        Photons per pulse.
    pulse_duration : float
        Pulse length tau, seconds.
    efficiency : float
        Detection-efficiency factor b in (0, 1].
    readout_noise_override : float or None
        If set, use this readout sigma (spins) instead of the
        shot-noise formula.  Lets the measured sensitivity of a real
        apparatus be plugged in directly.
    light_backaction : bool
        If True, ``simulate_pulse`` adds the per-pulse rotation noise of
        the probe light about z (angle std g1*sqrt(n_photons)/2).  Off
        by default: with an unpolarized ensemble it is second order.
    """

    g1: float = 9.0e-8
    g2: float = -4.1e-9
    n_photons: float = 2.8e8
    pulse_duration: float = 1e-6
    efficiency: float = 0.75
    readout_noise_override: float | None = None
    light_backaction: bool = False

    def __post_init__(self):
        if self.g1 <= 0:
            raise ValueError("g1 must be positive")
        if self.n_photons <= 0:
            raise ValueError("n_photons must be positive")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if self.pulse_duration < 0:
            raise ValueError("pulse_duration must be non-negative")
        if self.readout_noise_override is not None and self.readout_noise_override < 0:
            raise ValueError("readout_noise_override must be non-negative")


@dataclass(frozen=True)
class PulseOutcome:
    """One probe pulse: measured spin value and the rotation it caused.

    ``rotation_angle`` is g1 * measured_value by construction.
    ``component_label`` names the initial-frame component this pulse
    addresses under the stroboscopic schedule.
    """

    measured_value: float
    component_label: str = "z"
    rotation_angle: float = 0.0
    backaction_angle: float = 0.0


def readout_noise_sigma(probe: ProbeConfig) -> float:
    """Readout sensitivity in spins (standard deviation per pulse)."""
    if probe.readout_noise_override is not None:
        return probe.readout_noise_override
    return 1.0 / (probe.g1 * math.sqrt(probe.efficiency * probe.n_photons))


def snr(probe: ProbeConfig, n_atoms: float) -> float:
    """Ideal measurement SNR zeta = (2/3) g1^2 n_photons n_atoms.

    The detection efficiency is excluded; the effective SNR is
    ``probe.efficiency * snr(probe, n_atoms)``.
    """
    if n_atoms < 0:
        raise ValueError("n_atoms must be non-negative")
    return (2.0 / 3.0) * probe.g1**2 * probe.n_photons * n_atoms


def simulate_pulse(
    state: CollectiveSpinState,
    probe: ProbeConfig,
    rng: np.random.Generator,
    true_z: float | None = None,
    component_label: str = "z",
) -> tuple[PulseOutcome, CollectiveSpinState]:
    """Simulate one QND pulse reading the lab-z spin component.

    The measured value is true_z + eps with eps ~ N(0, sigma_ro^2).  If
    ``true_z`` is not supplied it is drawn from the state's Gaussian;
    trajectory-level simulations pass the deterministically propagated
    sample instead.  The returned state is the Kalman-conditioned
    posterior (gain K = cov e_z / (e_z' cov e_z + sigma_ro^2)).
    """
    sigma = readout_noise_sigma(probe)
    var_z = float(state.cov[2, 2])

    if true_z is None:
        true_z = float(state.mean[2])
        if var_z > 0.0:
            # Marginal draw of the z component only.
            true_z += math.sqrt(var_z) * rng.standard_normal()

    total = var_z + sigma**2
    if total == 0.0:
        outcome = PulseOutcome(true_z, component_label, probe.g1 * true_z)
        return outcome, state

    measured = true_z + sigma * rng.standard_normal()

    gain = state.cov @ E_Z / total
    mean = state.mean + gain * (measured - state.mean[2])
    cov = state.cov - np.outer(gain, state.cov[2])
    cov = 0.5 * (cov + cov.T)
    posterior = CollectiveSpinState(mean, cov, state.n_atoms, state.f)

    backaction = 0.0
    if probe.light_backaction:
        backaction = probe.g1 * math.sqrt(probe.n_photons) / 2.0 * rng.standard_normal()
        c, s = math.cos(backaction), math.sin(backaction)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        posterior = apply_rotation(posterior, rz)

    outcome = PulseOutcome(measured, component_label, probe.g1 * measured, backaction)
    return outcome, posterior


def predicted_conditional_covariance(prep_cov, probe: ProbeConfig) -> np.ndarray:
    """Measured-space covariance of a spin readout conditioned on a prior one.

    For a preparation covariance S and per-pulse readout variance s^2,
    both three-component readouts have covariance S + s^2 I and share
    the atomic part S, so the second conditioned on the first is

        (S + s^2 I) - S (S + s^2 I)^{-1} S.

    Subtracting the readout floor 3 s^2 from its trace leaves the Kalman
    posterior of the atomic state; for a thermal state that trace is
    2 n_atoms / (1 + zeta_eff).
    """
    s2 = readout_noise_sigma(probe) ** 2
    prep = np.asarray(prep_cov, dtype=float)
    total = prep + s2 * np.eye(3)
    cond = total - prep @ np.linalg.solve(total, prep)
    return 0.5 * (cond + cond.T)


def tensor_angle(probe: ProbeConfig) -> float:
    """Alignment-to-orientation rotation angle from the tensor coupling.

    theta = arctan(g2 * S_x / 2) with S_x = n_photons / 2.  Computed as
    a diagnostic only; the simulation never applies it.
    """
    return math.atan(probe.g2 * probe.n_photons / 4.0)


def intra_pulse_angle(field: MagneticField, tau: float) -> float:
    """Spin precession angle gamma*|B|*tau accumulated during one pulse."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return field.gyromagnetic_ratio * field.magnitude * tau


def danm_estimate(phi: float, probe: ProbeConfig, f: float = 1.0) -> float:
    """Atom number from the rotation angle of a fully pumped sample.

    Inverts phi = g1 * f * N_A.
    """
    if f == 0:
        raise ValueError("f must be non-zero")
    return phi / (probe.g1 * f)


def calibrate_g1(pairs, f: float = 1.0) -> tuple[float, float]:
    """Least-squares calibration of g1 from (phi, n_atoms) pairs.

    Fits the through-origin slope of phi against f * n_atoms.  Returns
    (slope, standard error of the slope).
    """
    data = np.asarray(list(pairs), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 2:
        raise CalibrationError("need at least 2 (phi, n_atoms) pairs")
    phi = data[:, 0]
    x = f * data[:, 1]
    if np.all(x == x[0]):
        raise CalibrationError("all n_atoms identical: slope is unconstrained")
    sxx = float(x @ x)
    if sxx == 0.0:
        raise CalibrationError("rank-deficient input: all n_atoms are zero")
    slope = float(x @ phi) / sxx
    resid = phi - slope * x
    dof = len(phi) - 1
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return slope, stderr

"""Full-experiment orchestration: preparation, stroboscopic probing, campaigns.

One *sequence* prepares a spin sample and probes it with six pulses
spaced by a third of the Larmor period: the lab-z readout then visits
the initial-frame components (z, y, x) once per Larmor period, giving
two three-component measurements f1 and f2 of the same sample.  A
*campaign* repeats sequences over trap-loading cycles with geometric
atom loss and appends no-atom reference shots at the end of each cycle.

The sampled true spin vector is a concrete 3-vector drawn at
preparation and propagated deterministically through the rotations;
pulse outcomes are that vector's lab-z component plus readout noise.
Campaigns are deterministic given the master seed: each cycle derives
an independent random substream from (master_seed, cycle_id), so results
do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .errors import EstimationError, SchemaError
from .probe import ProbeConfig, readout_noise_sigma, simulate_pulse
from .spins import (
    CollectiveSpinState,
    MagneticField,
    add_technical_noise,
    apply_rotation,
    covariance_factor,
    larmor_period,
    larmor_rotation_matrix,
    make_tss,
)

COMPONENTS = ("z", "y", "x")

DATASET_COLUMNS = (
    "cycle_id",
    "seq_index",
    "is_reference",
    "n_atoms",
    "f1_z",
    "f1_y",
    "f1_x",
    "f2_z",
    "f2_y",
    "f2_x",
)


def _zeros33() -> np.ndarray:
    return np.zeros((3, 3))


def _zeros3() -> np.ndarray:
    return np.zeros(3)


@dataclass(frozen=True)
class SequenceConfig:
    """Configuration of one six-pulse stroboscopic sequence.

    ``prep_noise_cov`` is atomic technical noise added to the thermal
    covariance at preparation (only when atoms are present); it may be
    indefinite as long as the total stays PSD.  ``detector_noise_cov``
    is correlated detection-system noise: one 3-vector drawn per shot
    and added to both rounds' readouts, so it inflates the measured
    covariances and cross-covariance equally and cancels under
    conditioning.  ``period_diffusion`` (spins^2) is an isotropic random
    walk of the true spin between the two rounds, modelling imperfect
    QND repeatability.
    """

    field: MagneticField
    probe: ProbeConfig
    n_pulses: int = 6
    pulses_per_period: int = 3
    prep_noise_cov: np.ndarray = field(default_factory=_zeros33)
    prep_mean_offset: np.ndarray = field(default_factory=_zeros3)
    detector_noise_cov: np.ndarray = field(default_factory=_zeros33)
    period_diffusion: float = 0.0
    intra_pulse_rotation: bool = False

    def __post_init__(self):
        if self.pulses_per_period != 3 or self.n_pulses != 2 * self.pulses_per_period:
            raise ValueError(
                "the stroboscopic schedule requires pulses_per_period=3 and "
                "n_pulses=6 (two rounds of z, y, x)"
            )
        prep = np.asarray(self.prep_noise_cov, dtype=float)
        det = np.asarray(self.detector_noise_cov, dtype=float)
        offset = np.asarray(self.prep_mean_offset, dtype=float)
        if prep.shape != (3, 3) or det.shape != (3, 3) or offset.shape != (3,):
            raise ValueError("noise covariances must be 3x3 and the offset a 3-vector")
        if self.period_diffusion < 0:
            raise ValueError("period_diffusion must be non-negative")
        for arr in (prep, det, offset):
            arr.setflags(write=False)
        object.__setattr__(self, "prep_noise_cov", prep)
        object.__setattr__(self, "prep_mean_offset", offset)
        object.__setattr__(self, "detector_noise_cov", det)

    @property
    def has_detector_noise(self) -> bool:
        return bool(np.any(self.detector_noise_cov != 0.0))


@dataclass(frozen=True)
class ShotRecord:
    """One state preparation: two 3-component spin measurements.

    ``f1`` and ``f2`` hold the first- and second-round readouts in the
    fixed component order (z, y, x); ``components`` records that order
    so the analysis never re-derives the pulse schedule.
    """

    f1: np.ndarray
    f2: np.ndarray
    n_atoms: float
    is_reference: bool = False
    cycle_id: int = 0
    seq_index: int = 0
    components: tuple = COMPONENTS

    def __post_init__(self):
        f1 = np.asarray(self.f1, dtype=float)
        f2 = np.asarray(self.f2, dtype=float)
        if f1.shape != (3,) or f2.shape != (3,):
            raise ValueError("f1 and f2 must be 3-vectors")
        if self.is_reference and self.n_atoms != 0:
            raise ValueError("reference shots must have n_atoms = 0")
        f1.setflags(write=False)
        f2.setflags(write=False)
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f2", f2)


@dataclass(frozen=True)
class CampaignConfig:
    """Trap-loading campaign structure.

    Atom numbers start each cycle at ``initial_atoms`` jittered by a
    uniform +/- ``atom_jitter`` fraction, then decay geometrically by
    ``loss_fraction`` per sequence.
    """

    n_cycles: int = 602
    sequences_per_cycle: int = 12
    loss_fraction: float = 0.15
    initial_atoms: float = 1.5e6
    reference_shots_per_cycle: int = 2
    master_seed: int = 0
    atom_jitter: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.loss_fraction < 1.0:
            raise ValueError("loss_fraction must be in [0, 1)")
        if self.n_cycles < 1 or self.sequences_per_cycle < 1:
            raise ValueError("n_cycles and sequences_per_cycle must be positive")
        if self.initial_atoms < 0:
            raise ValueError("initial_atoms must be non-negative")
        if self.reference_shots_per_cycle < 0:
            raise ValueError("reference_shots_per_cycle must be non-negative")
        if not 0.0 <= self.atom_jitter < 1.0:
            raise ValueError("atom_jitter must be in [0, 1)")


def prepare_state(cfg: SequenceConfig, n_atoms: float) -> CollectiveSpinState:
    """Thermal state plus configured technical noise (atoms only)."""
    state = make_tss(n_atoms)
    if n_atoms > 0:
        state = add_technical_noise(
            state, cfg.prep_noise_cov, cfg.prep_mean_offset, require_psd=False
        )
    return state


def run_sequence(
    cfg: SequenceConfig,
    n_atoms: float,
    rng: np.random.Generator,
    cycle_id: int = 0,
    seq_index: int = 0,
    is_reference: bool = False,
) -> ShotRecord:
    """Simulate one preparation followed by six stroboscopic pulses.

    The true spin vector is sampled once from the prepared Gaussian and
    rotated by a third of a Larmor period between pulses; each pulse
    reads its lab-z component through ``simulate_pulse``, which also
    advances the Kalman estimator state.
    """
    state = prepare_state(cfg, n_atoms)
    spin = state.mean + covariance_factor(state.cov) @ rng.standard_normal(3)

    detector = np.zeros(3)
    if cfg.has_detector_noise:
        detector = covariance_factor(cfg.detector_noise_cov) @ rng.standard_normal(3)

    t_step = larmor_period(cfg.field) / cfg.pulses_per_period
    r_step = larmor_rotation_matrix(cfg.field, t_step)
    r_mid = None
    if cfg.intra_pulse_rotation:
        r_mid = larmor_rotation_matrix(cfg.field, cfg.probe.pulse_duration / 2.0)

    readings = []
    for k in range(cfg.n_pulses):
        if k > 0:
            spin = r_step @ spin
            state = apply_rotation(state, r_step)
        if k == cfg.pulses_per_period and cfg.period_diffusion > 0.0:
            spin = spin + np.sqrt(cfg.period_diffusion) * rng.standard_normal(3)
            state = CollectiveSpinState(
                state.mean,
                state.cov + cfg.period_diffusion * np.eye(3),
                state.n_atoms,
                state.f,
            )
        label = COMPONENTS[k % cfg.pulses_per_period]
        if r_mid is None:
            meas_state, true_z = state, float(spin[2])
        else:
            meas_state, true_z = apply_rotation(state, r_mid), float((r_mid @ spin)[2])
        outcome, posterior = simulate_pulse(
            meas_state,
            cfg.probe,
            rng,
            true_z=true_z + detector[k % cfg.pulses_per_period],
            component_label=label,
        )
        if r_mid is not None:
            posterior = apply_rotation(posterior, r_mid.T)
        state = posterior
        readings.append(outcome.measured_value)

    return ShotRecord(
        f1=np.array(readings[:3]),
        f2=np.array(readings[3:]),
        n_atoms=n_atoms,
        is_reference=is_reference,
        cycle_id=cycle_id,
        seq_index=seq_index,
    )


def simulate_shots(
    cfg: SequenceConfig,
    n_atoms: float,
    n_shots: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized batch of independent sequences at fixed atom number.

    Returns (f1, f2) arrays of shape (n_shots, 3) with components in the
    usual (z, y, x) order.  Statistically identical to ``run_sequence``
    called n_shots times (shot-matched given the same generator, since
    the per-shot draw layout is the same).  The light back-action flag
    is not supported on this path.
    """
    if cfg.probe.light_backaction:
        raise ValueError("simulate_shots does not support light_backaction")
    state = prepare_state(cfg, n_atoms)
    factor = covariance_factor(state.cov)
    sigma = readout_noise_sigma(cfg.probe)
    diffusion = cfg.period_diffusion > 0.0

    cols = 3 + (3 if cfg.has_detector_noise else 0) + 6 + (3 if diffusion else 0)
    z = rng.standard_normal((n_shots, cols))
    i = 3
    spin = state.mean + z[:, :3] @ factor.T
    detector = np.zeros((n_shots, 3))
    if cfg.has_detector_noise:
        detector = z[:, i : i + 3] @ covariance_factor(cfg.detector_noise_cov).T
        i += 3
    eps1 = sigma * z[:, i : i + 3]
    i += 3
    walk = None
    if diffusion:
        walk = np.sqrt(cfg.period_diffusion) * z[:, i : i + 3]
        i += 3
    eps2 = sigma * z[:, i : i + 3]

    t_step = larmor_period(cfg.field) / cfg.pulses_per_period
    r_step = larmor_rotation_matrix(cfg.field, t_step)
    r_mid = np.eye(3)
    if cfg.intra_pulse_rotation:
        r_mid = larmor_rotation_matrix(cfg.field, cfg.probe.pulse_duration / 2.0)

    f1 = np.empty((n_shots, 3))
    f2 = np.empty((n_shots, 3))
    for k in range(6):
        if k > 0:
            spin = spin @ r_step.T
        if k == 3 and walk is not None:
            spin = spin + walk
        value = (spin @ r_mid.T)[:, 2] if cfg.intra_pulse_rotation else spin[:, 2]
        value = value + detector[:, k % 3]
        if k < 3:
            f1[:, k] = value + eps1[:, k]
        else:
            f2[:, k - 3] = value + eps2[:, k - 3]
    return f1, f2


def _run_cycle(
    campaign: CampaignConfig, seq_cfg: SequenceConfig, cycle_id: int
) -> list[ShotRecord]:
    """All shots of one loading cycle, on its own random substream."""
    seed = np.random.SeedSequence(campaign.master_seed, spawn_key=(cycle_id,))
    rng = np.random.default_rng(seed)
    n0 = campaign.initial_atoms * (1.0 + campaign.atom_jitter * rng.uniform(-1.0, 1.0))
    records = []
    for s in range(campaign.sequences_per_cycle):
        n_atoms = n0 * (1.0 - campaign.loss_fraction) ** s
        records.append(run_sequence(seq_cfg, n_atoms, rng, cycle_id, s))
    for j in range(campaign.reference_shots_per_cycle):
        records.append(
            run_sequence(
                seq_cfg,
                0.0,
                rng,
                cycle_id,
                campaign.sequences_per_cycle + j,
                is_reference=True,
            )
        )
    return records


def run_campaign(
    campaign: CampaignConfig, seq_cfg: SequenceConfig, workers: int = 1
) -> list[ShotRecord]:
    """Simulate a full campaign; cycles may be evaluated in parallel.

    Output is identical for any worker count: each cycle uses the
    substream (master_seed, cycle_id) and records are assembled in
    cycle order.
    """
    cycle_ids = range(campaign.n_cycles)
    if workers <= 1:
        per_cycle = [_run_cycle(campaign, seq_cfg, c) for c in cycle_ids]
    else:
        task = partial(_run_cycle, campaign, seq_cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_cycle = list(pool.map(task, cycle_ids, chunksize=8))
    return [rec for cycle in per_cycle for rec in cycle]


@dataclass(frozen=True)
class ReferenceNoise:
    """Read-out noise estimated from no-atom reference shots.

    ``gamma0``/``v0`` come from the second-round vectors (the round the
    witness is evaluated on); the first-round estimates are kept for
    cross-checks.
    """

    gamma0: np.ndarray
    gamma0_first: np.ndarray
    v0: float
    v0_first: float
    n_reference: int


def reference_variance(records) -> ReferenceNoise:
    """Covariance of the reference (no-atom) shots and its trace."""
    from .analysis import sample_covariance

    refs = [r for r in records if r.is_reference]
    if len(refs) < 2:
        raise EstimationError("need at least 2 reference shots")
    f1 = np.array([r.f1 for r in refs])
    f2 = np.array([r.f2 for r in refs])
    gamma0 = sample_covariance(f2)
    gamma0_first = sample_covariance(f1)
    return ReferenceNoise(
        gamma0=gamma0,
        gamma0_first=gamma0_first,
        v0=float(np.trace(gamma0)),
        v0_first=float(np.trace(gamma0_first)),
        n_reference=len(refs),
    )


def write_dataset(path, records) -> None:
    """Write shots as CSV with the fixed column schema."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.cycle_id,
                    r.seq_index,
                    int(r.is_reference),
                    repr(float(r.n_atoms)),
                    *(repr(float(v)) for v in r.f1),
                    *(repr(float(v)) for v in r.f2),
                ]
            )


def read_dataset(path) -> list[ShotRecord]:
    """Read a shot CSV written by ``write_dataset``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty dataset file") from None
        if tuple(header) != DATASET_COLUMNS:
            raise SchemaError(
                f"{path}: bad columns {header}, expected {list(DATASET_COLUMNS)}"
            )
        records = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DATASET_COLUMNS):
                raise SchemaError(f"{path}:{i}: expected {len(DATASET_COLUMNS)} fields")
            try:
                is_ref = row[2].strip() in ("1", "True", "true")
                records.append(
                    ShotRecord(
                        f1=np.array([float(v) for v in row[4:7]]),
                        f2=np.array([float(v) for v in row[7:10]]),
                        n_atoms=float(row[3]),
                        is_reference=is_ref,
                        cycle_id=int(row[0]),
                        seq_index=int(row[1]),
                    )
                )
            except ValueError as exc:
                raise SchemaError(f"{path}:{i}: {exc}") from None
    return records

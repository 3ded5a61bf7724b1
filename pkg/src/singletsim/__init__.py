"""Monte Carlo simulation and analysis of stroboscopic QND spin probing.

An unpolarized cold-atom ensemble is modelled as a Gaussian collective
spin; Faraday-rotation pulses read its components stroboscopically at
one third of the Larmor period; repeated vector measurements are
analyzed for conditional-variance spin squeezing and entanglement.
"""

from .analysis import (
    AnalysisOptions,
    AnalysisResult,
    ConditionalCovariance,
    CovarianceReport,
    FitResult,
    WitnessResult,
    analyze_dataset,
    conditional_covariance,
    conditional_variance_scalar,
    correlation_matrix,
    cutoff_scan,
    fit_noise_scaling,
    fit_snr_model,
    residual_polarization,
    sample_covariance,
    select_shots,
    squeezing_parameter,
)
from .config import RunConfig, config_from_dict, config_to_dict, load_config
from .errors import (
    CalibrationError,
    ConfigError,
    EstimationError,
    FitError,
    SchemaError,
)
from .magnetometry import (
    FidSample,
    FieldEstimate,
    fid_signal,
    fit_fid,
    read_fid_csv,
    t2_from_gradient,
)
from .probe import (
    ProbeConfig,
    PulseOutcome,
    calibrate_g1,
    danm_estimate,
    intra_pulse_angle,
    predicted_conditional_covariance,
    readout_noise_sigma,
    simulate_pulse,
    snr,
    tensor_angle,
)
from .sequence import (
    CampaignConfig,
    ReferenceNoise,
    SequenceConfig,
    ShotRecord,
    read_dataset,
    reference_variance,
    run_campaign,
    run_sequence,
    simulate_shots,
    write_dataset,
)
from .spins import (
    GYROMAGNETIC_RATIO,
    CollectiveSpinState,
    MagneticField,
    PhysicalConstants,
    add_technical_noise,
    apply_rotation,
    larmor_period,
    larmor_rotation_matrix,
    make_tss,
    optical_depth,
)

__version__ = "0.1.0"

import math

import numpy as np
import pytest

from singletsim import MagneticField, ProbeConfig, SequenceConfig

# 16.9 mG along [1,1,1]: T_L = 85 us with the default gyromagnetic ratio.
FIELD_111 = np.ones(3) * 16.9e-3 / math.sqrt(3.0)

# Supplementary input covariance at N_A = 1.4e6 (spins^2).
GAMMA1_PAPER = (
    np.array(
        [
            [1.90, 1.10, 1.10],
            [1.10, 1.40, 0.81],
            [1.10, 0.81, 1.30],
        ]
    )
    * 1e6
)


@pytest.fixture
def field():
    return MagneticField(FIELD_111)


@pytest.fixture
def probe_ideal():
    """Quoted coupling constants with ideal detection (b = 1)."""
    return ProbeConfig(efficiency=1.0)


@pytest.fixture
def probe_paper():
    """Quoted coupling constants with the fitted efficiency b = 0.75."""
    return ProbeConfig()


@pytest.fixture
def seq_ideal(field, probe_ideal):
    return SequenceConfig(field=field, probe=probe_ideal)


def schur_trace(f1, f2):
    """Empirical conditional-covariance trace of two vector measurements."""
    from singletsim import conditional_covariance, sample_covariance

    c6 = sample_covariance(np.hstack([f1, f2]))
    return conditional_covariance(c6[:3, :3], c6[3:, 3:], c6[:3, 3:]).trace

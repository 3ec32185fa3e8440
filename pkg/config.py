#!/usr/bin/env python3
"""
Configuration settings for the curved Born lattice simulator
Handles numerical tolerances, capacity limits and logging profiles
"""

import logging


class Config:
    """Base configuration class"""

    # Numerical tolerances
    HERMITIAN_TOL = 1e-12
    UNITARY_TOL = 1e-12
    NORM_TOL = 1e-12
    PSD_TOL = 1e-10
    CONCENTRATION_TOL = 1e-10
    ISOMETRY_TOL = 1e-11
    FACTORIZATION_TOL = 1e-11
    FS_VIOLATION_TOL = 1e-8
    PRUNE_TOL = 1e-14
    PROBABILITY_TOL = 1e-10
    RECONSTRUCTION_NEG_TOL = 1e-9

    # Capacity limits
    MAX_DENSE_DIM = 2 ** 15           # d^n for any stored state or density operator
    MAX_DENSE_OPERATOR_DIM = 4096     # side length of dense verifier operators
    MAX_EVENT_SITES = 24              # materialisation limit for events
    MAX_OUTCOME_BITS = 20             # r * (K - kappa + 1)

    # Execution
    DEFAULT_WORKERS = 1
    DEFAULT_FS_TRIALS = 4

    # Output
    CSV_FLOAT_FORMAT = '.16e'
    RESULT_FILE = 'result.json'
    SWEEP_FILE = 'sweep.csv'
    REPORT_FILE = 'report.json'

    # Logging settings
    LOG_LEVEL = 'INFO'
    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s %(message)s'


class DevelopmentConfig(Config):
    """Development configuration"""

    LOG_LEVEL = 'DEBUG'
    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s [%(pathname)s:%(lineno)d] %(message)s'


class TestingConfig(Config):
    """Testing configuration"""

    LOG_LEVEL = 'WARNING'


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(config_name: str = None) -> type:
    """Get configuration class by name"""
    if config_name is None:
        config_name = 'default'

    return config.get(config_name, Config)


def configure_logging(level: str = None, config_name: str = None) -> None:
    """Configure the root logger from a configuration profile"""
    profile = get_config(config_name)
    logging.basicConfig(
        level=getattr(logging, (level or profile.LOG_LEVEL).upper(), logging.INFO),
        format=profile.LOG_FORMAT
    )

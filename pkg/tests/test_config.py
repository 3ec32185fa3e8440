"""
Unit tests for runtime settings
"""

import logging

import pytest

from config import Config, DevelopmentConfig, TestingConfig, configure_logging, get_config


@pytest.mark.unit
class TestConfig:
    """Test configuration profiles"""

    def test_profiles(self):
        assert get_config() is Config
        assert get_config('testing') is TestingConfig
        assert get_config('development') is DevelopmentConfig
        assert get_config('unknown') is Config

    def test_limits(self):
        assert Config.MAX_DENSE_DIM == 2 ** 15
        assert Config.MAX_OUTCOME_BITS == 20
        assert TestingConfig.PSD_TOL == Config.PSD_TOL

    def test_configure_logging(self, mocker):
        basic = mocker.patch('config.logging.basicConfig')
        configure_logging(config_name='testing')
        assert basic.call_args.kwargs['level'] == logging.WARNING
        configure_logging('debug')
        assert basic.call_args.kwargs['level'] == logging.DEBUG

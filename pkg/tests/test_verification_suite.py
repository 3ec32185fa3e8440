"""
Tests for the axiom and theorem suites
"""

import pytest

from experiment_config import parse_config
from verification_suite import SuiteSelectionError, run_axioms, run_suite


def axiom_config(**model):
    return parse_config({
        'name': 'axioms',
        'n_sites': 3,
        'model': model,
        'surface': {'generator': 'flat', 'layer': 1},
        'partition': {'ranges': [[0, 2]]},
        'suite': {'cut_high': 1, 'fs_trials': 1, 'exhaustive_max_sites': 3,
                  'expect_failure': model.get('defect', 'none') != 'none'},
    })


@pytest.mark.unit
class TestSuiteSelection:
    """Test suite names"""

    @pytest.mark.parametrize("suite", ['', 'everything', 'AXIOMS'])
    def test_unknown_suite(self, suite):
        with pytest.raises(SuiteSelectionError, match="suite must be one of axioms, theorem, all"):
            run_suite(axiom_config(), suite)


@pytest.mark.integration
class TestAxiomSuite:
    """Test the axiom checks on lawful and defective dynamics"""

    def test_free_model_passes(self):
        report = run_suite(axiom_config(), 'axioms')
        assert report.passed
        assert report.exit_code == 0
        assert [check.name for check in report.checks] == [
            'interaction_locality', 'finite_speed', 'vacuum_stability', 'local_vacuum_stability',
        ]
        assert report.checks[0].details['cases'] > 0

    def test_interacting_model_passes(self):
        config = axiom_config(theta=0.3, theta_y=0.5, coupling=0.7, phase=0.2, interacting=True)
        assert all(check.passed for check in run_axioms(config.build_model(), 3, config.suite))

    @pytest.mark.negative
    def test_nonlocal_phase_fails_locality_only(self):
        report = run_suite(axiom_config(theta=0.4, defect='nonlocal'), 'axioms')
        assert report.failures() == ['interaction_locality']
        assert report.exit_code == 1

    @pytest.mark.negative
    def test_vacuum_creation_fails_stability_and_speed(self):
        report = run_suite(axiom_config(theta=0.4, defect='vacuum_creation'), 'axioms')
        assert 'vacuum_stability' in report.failures()
        assert 'finite_speed' in report.failures()
        assert 'interaction_locality' not in report.failures()
        assert report.to_dict()['passed'] is False


@pytest.mark.theorem
@pytest.mark.slow
class TestTheoremSuite:
    """Test the detection-theorem comparisons on a small experiment"""

    def test_theorem_checks_pass(self, experiment_data):
        report = run_suite(parse_config(experiment_data), 'theorem')
        assert report.passed, report.failures()
        names = {check.name for check in report.checks}
        assert {'sequential_vs_closed', 'normalization', 'bracket', 'auxiliary_rho',
                'reconstruction', 'convergence_sweep'} <= names
        assert report.exploratory == {}

    def test_operator_checks_and_exploratory(self, experiment_data):
        experiment_data['n_sites'] = 3
        experiment_data['partition'] = {'sites': [[0], [1, 2]]}
        experiment_data['m'] = 1
        experiment_data['suite']['m_values'] = [2, 1]
        experiment_data['suite']['double_detection'] = True
        report = run_suite(parse_config(experiment_data), 'all')
        assert report.passed, report.failures()
        names = [check.name for check in report.checks]
        assert 'projector_inequalities' in names
        assert 'projection_sandwich' in names
        assert report.exploratory['double_detection']['exploratory'] is True

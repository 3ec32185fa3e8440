"""
Unit tests for experiment file parsing and validation
"""

import copy
from pathlib import Path

import pytest

from detection_protocol import DetectionRun
from experiment_config import ConfigValidationError, ExperimentConfig, load_config, parse_config
from fock_hilbert import DensityOp, QuantumState, born_distribution
from qca_dynamics import Defect


def with_changes(data, **changes):
    updated = copy.deepcopy(data)
    for dotted, value in changes.items():
        target = updated
        *path, last = dotted.split('__')
        for key in path:
            target = target[key]
        target[last] = value
    return updated


@pytest.mark.unit
class TestParsing:
    """Test valid experiment files"""

    def test_minimal_defaults(self):
        config = parse_config({
            'n_sites': 3,
            'surface': {'generator': 'flat', 'layer': 2},
            'partition': {'ranges': [[0, 1]]},
        })
        assert config.name == 'experiment'
        assert config.m == 1
        assert config.suite.m_values == [4, 2, 1]
        assert config.build_model().defect is Defect.NONE
        assert config.build_surface().layers == (2, 2, 2)

    def test_full_experiment(self, experiment_data):
        config = parse_config(experiment_data)
        assert isinstance(config, ExperimentConfig)
        assert config.build_surface().layers == (1, 2, 3, 4)
        assert config.build_partition().to_dict() == {'patches': [[0, 1], [2, 3]]}
        assert isinstance(config.build_initial(), QuantumState)

    def test_m_values_sorted_and_unique(self, experiment_data):
        config = parse_config(with_changes(experiment_data, suite__m_values=[1, 4, 2, 4]))
        assert config.suite.m_values == [4, 2, 1]

    def test_build_run(self, experiment_data):
        config = parse_config(experiment_data)
        run = config.build_run()
        assert isinstance(run, DetectionRun)
        assert run.m == 2
        assert run.check_isometry
        assert config.build_run(m=1).decomposition.K == 4

    def test_negative_controls_skip_isometry_check(self, experiment_data):
        data = with_changes(experiment_data, model__defect='vacuum_creation', suite__expect_failure=True)
        run = parse_config(data).build_run()
        assert run.model.defect is Defect.VACUUM_CREATION
        assert not run.check_isometry

    def test_single_particle(self):
        config = parse_config({
            'n_sites': 4,
            'initial': {'kind': 'single_particle', 'site': 2, 'spin': 'down'},
            'surface': {'layers': [2, 2, 3, 3]},
            'partition': {'sites': [[1, 2]]},
        })
        assert born_distribution(config.build_initial()) == {0b0100: 1.0}

    def test_product_state_amplitudes(self):
        config = parse_config({
            'n_sites': 2,
            'initial': {'kind': 'product', 'local_vectors': {'0': [[0.0, 1.0], 1, 0]}},
            'surface': {'generator': 'flat', 'layer': 1},
            'partition': {'ranges': [[0, 1]]},
        })
        distribution = born_distribution(config.build_initial())
        assert distribution[0] == pytest.approx(0.5)
        assert distribution[1] == pytest.approx(0.5)

    def test_mixed_random_state(self, experiment_data):
        data = with_changes(experiment_data, initial={'kind': 'random', 'seed': 1, 'mixed_rank': 2})
        assert isinstance(parse_config(data).build_initial(), DensityOp)


@pytest.mark.unit
class TestValidationErrors:
    """Test field-named validation errors"""

    def test_missing_surface(self):
        with pytest.raises(ConfigValidationError, match="surface: Field required"):
            parse_config({'n_sites': 3, 'partition': {'ranges': [[0, 1]]}})

    def test_unknown_field(self, experiment_data):
        data = with_changes(experiment_data, bogus=1)
        with pytest.raises(ConfigValidationError, match="bogus: Extra inputs are not permitted"):
            parse_config(data)

    def test_not_a_cut(self, experiment_data):
        data = with_changes(experiment_data, surface={'layers': [1, 1, 2, 2]})
        with pytest.raises(ConfigValidationError, match="surface: not a brickwork cut at sites 1-2"):
            parse_config(data)

    def test_wrong_layer_count(self, experiment_data):
        data = with_changes(experiment_data, surface={'layers': [1, 2, 3]})
        with pytest.raises(ConfigValidationError, match="surface: 3 layers for 4 sites"):
            parse_config(data)

    def test_two_surface_sources(self, experiment_data):
        data = with_changes(experiment_data, surface={'layers': [1, 2, 3, 4], 'generator': 'flat'})
        with pytest.raises(ConfigValidationError, match="exactly one of layers or generator"):
            parse_config(data)

    def test_overlapping_patches(self, experiment_data):
        data = with_changes(experiment_data, partition={'sites': [[0, 1], [1, 2]]})
        with pytest.raises(ConfigValidationError, match="partition: partition not disjoint"):
            parse_config(data)

    def test_patch_outside_lattice(self, experiment_data):
        data = with_changes(experiment_data, partition={'sites': [[3, 4]]})
        with pytest.raises(ConfigValidationError, match="partition: patch 1 has sites outside"):
            parse_config(data)

    def test_dense_capacity(self):
        with pytest.raises(ConfigValidationError, match="n_sites: dense dimension 6\\^7"):
            parse_config({
                'n_sites': 7,
                'model': {'interacting': True, 'coupling': 0.5},
                'surface': {'generator': 'flat', 'layer': 1},
                'partition': {'ranges': [[0, 1]]},
            })

    def test_outcome_record_size(self):
        with pytest.raises(ConfigValidationError, match="partition: outcome record needs 81 bits at m=1"):
            parse_config({
                'n_sites': 9,
                'surface': {'generator': 'staircase', 'offset': 1},
                'partition': {'sites': [[x] for x in range(9)]},
            })

    def test_site_outside_lattice(self, experiment_data):
        data = with_changes(experiment_data, initial={'kind': 'single_particle', 'site': 4})
        with pytest.raises(ConfigValidationError, match="initial.site: 4 outside lattice"):
            parse_config(data)

    def test_random_without_seed(self, experiment_data):
        data = with_changes(experiment_data, initial={'kind': 'random'})
        with pytest.raises(ConfigValidationError, match="random state needs a seed"):
            parse_config(data)

    def test_coupling_needs_interaction(self, experiment_data):
        data = with_changes(experiment_data, model={'coupling': 0.3})
        with pytest.raises(ConfigValidationError, match="coupling and theta_y need interacting=true"):
            parse_config(data)

    def test_bad_spin(self, experiment_data):
        data = with_changes(experiment_data, initial={'kind': 'single_particle', 'site': 0, 'spin': 'left'})
        with pytest.raises(ConfigValidationError, match="initial.spin must be 'up' or 'down'"):
            parse_config(data)

    def test_non_positive_m_values(self, experiment_data):
        data = with_changes(experiment_data, suite__m_values=[2, 0])
        with pytest.raises(ConfigValidationError, match="suite.m_values must be positive"):
            parse_config(data)


@pytest.mark.unit
class TestLoadConfig:
    """Test reading experiment files from disk"""

    def test_load(self, write_config, experiment_data):
        config = load_config(write_config(experiment_data))
        assert config.name == 'coin-staircase'

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigValidationError, match="config: cannot read"):
            load_config(f"{temp_dir}/absent.json")

    def test_invalid_json(self, write_config):
        with pytest.raises(ConfigValidationError, match="config: invalid JSON at line 2, column"):
            load_config(write_config('{\n  "n_sites": ,\n}'))

    def test_top_level_array(self, write_config):
        with pytest.raises(ConfigValidationError, match="top level must be a JSON object"):
            load_config(write_config('[1, 2]'))


CONFIG_DIR = Path(__file__).parent.parent / 'configs'


@pytest.mark.unit
class TestShippedConfigs:
    """Every example experiment in configs/ validates"""

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob('*.json')), ids=lambda p: p.stem)
    def test_loads(self, path):
        config = load_config(path)
        assert config.suite.expect_failure == path.stem.startswith('negative_')
        assert config.build_run().decomposition.K >= 1

import pytest

from lpqe.errors import ConfigError
from lpqe.session.config import Config
from lpqe.utils.click import apply_overrides
from lpqe.utils.common import dump_dict_to_file
from lpqe.utils.states import GradScale, HeadKind, RegimeKind, RoundingMode


def defaulted(data=None):
    config = Config(data=data or {})
    config.init()
    return config


class TestDefaults:

    def test_values(self):
        config = defaulted()
        assert config.get_attr('regime.kind') == RegimeKind.ALPT.value
        assert config.get_attr('regime.bits') == 8
        assert config.get_attr('regime.rounding') == RoundingMode.STOCHASTIC.value
        assert config.get_attr('model.head') == HeadKind.FM.value
        assert config.get_attr('optim.lr') == 0.001
        assert config.get_attr('optim.delta_weight_decay') == config.get_attr('optim.weight_decay')
        assert config.validate()

    def test_given_values_survive(self):
        config = defaulted({'regime': {'bits': 4}, 'optim': {'weight_decay': 0.0}})
        assert config.get_attr('regime.bits') == 4
        assert config.get_attr('regime.rounding') == RoundingMode.STOCHASTIC.value
        assert config.get_attr('optim.delta_weight_decay') == 0.0

    def test_missing_key(self):
        assert defaulted().get_attr('regime.nope.deeper') is None


class TestValidate:

    @pytest.mark.parametrize('key, value', [
        ('regime.kind', 'int4'),
        ('regime.bits', 1),
        ('regime.bits', 8.0),
        ('regime.rounding', 'nearest'),
        ('regime.grad_scale', 'all'),
        ('optim.name', 'rmsprop'),
        ('optim.lr', 0),
        ('optim.delta_lr', -1e-5),
        ('train.batch_size', True),
        ('train.seed', -1),
        ('data.kind', 'parquet'),
        ('lab.regimes', ['fp', 'alpt']),
        ('lab.target', 'half'),
    ])
    def test_rejects(self, key, value):
        config = defaulted()
        config.set_attr(key, value)
        with pytest.raises(ConfigError):
            config.validate()

    def test_zero_step_size_rate_is_valid(self):
        config = defaulted({'optim': {'delta_lr': 0}})
        assert config.validate()


class TestOverrides:

    def test_apply(self):
        config = defaulted()
        count = apply_overrides(config, {'regime.bits': 4, 'model.dim': None, 'lab.regimes': ('fp',),
                                         'optim.milestones': ()})
        assert count == 2
        assert config.get_attr('regime.bits') == 4
        assert config.get_attr('lab.regimes') == ['fp']
        assert config.get_attr('model.dim') == 16

    def test_typed_settings(self):
        config = defaulted({'regime': {'grad_scale': 'dq'}})
        settings = config.get_regime_settings()
        assert settings.grad_scale is GradScale.DQ
        assert settings.kind is RegimeKind.ALPT
        assert config.get_model_config(7).n_fields == 7
        assert config.get_problem_spec().n_params == 1000
        assert config.get_problem_spec().target_on_grid


class TestRunId:

    def test_stable_and_sensitive(self):
        assert defaulted().get_run_id() == defaulted().get_run_id()
        assert defaulted().get_run_id() != defaulted({'regime': {'bits': 4}}).get_run_id()

    def test_ignores_output_and_debug(self):
        moved = defaulted({'output': {'dir': 'elsewhere'}, 'debug': True})
        assert moved.get_run_id() == defaulted().get_run_id()

    def test_manifest_run_section_is_dropped(self, tmp_path):
        path = str(tmp_path / 'manifest.yml')
        config = defaulted()
        manifest = dict(config.get())
        manifest['run'] = {'version': '0.3.0', 'run_id': config.get_run_id()}
        assert Config(data=manifest).get_run_id() == config.get_run_id()
        assert dump_dict_to_file(path, manifest)
        assert Config(config_file=path).get_attr('run') is None


class TestFile:

    def test_dump_and_load(self, tmp_path):
        path = str(tmp_path / 'experiment.yml')
        config = defaulted({'regime': {'kind': 'lpt'}})
        assert config.dump(path)
        loaded = Config(config_file=path)
        assert loaded.get_attr('regime.kind') == 'lpt'
        assert loaded.get_run_id() == config.get_run_id()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            Config(config_file=str(tmp_path / 'nope.yml'))

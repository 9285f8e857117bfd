import io
import json
import os

import click
import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from lpqe.errors import ConfigError, InvalidParameterError, NumericFailure, StaleTapeError
from lpqe.lpqe import lpqe
from lpqe.session.session import Session
from lpqe.utils.click import exit_on_failure


def invoke(*args):
    return CliRunner().invoke(lpqe, list(args), obj=Session())


@pytest.fixture(scope='module')
def prepared_dir(tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp('prepared'))
    result = invoke('preprocess', '--kind', 'synth', '--synth-fields', '3', '--synth-vocab', '40',
                    '--synth-samples', '400', '--seed', '3', '--out', out_dir)
    assert result.exit_code == 0, result.output
    return out_dir


class TestRoot:

    def test_version(self):
        result = invoke('--version')
        assert result.exit_code == 0
        assert 'lpqe version' in result.output

    def test_help_without_command(self):
        result = invoke()
        assert result.exit_code == 0
        assert 'synth-lab' in result.output

    def test_prefix_alias(self):
        result = invoke('boun', '-T', '10')
        assert result.exit_code == 0, result.output


class TestInit:

    def test_writes_template(self, tmp_path):
        out_file = str(tmp_path / 'experiment.yml')
        assert invoke('init', '--out', out_file).exit_code == 0
        with open(out_file) as in_f:
            assert yaml.safe_load(in_f)['regime']['kind'] == 'alpt'

    def test_refuses_to_overwrite(self, tmp_path):
        out_file = str(tmp_path / 'experiment.yml')
        invoke('init', '--out', out_file)
        assert invoke('init', '--out', out_file).exit_code == 2
        assert invoke('init', '--out', out_file, '--force').exit_code == 0


class TestBounds:

    def test_csv_to_stdout(self):
        result = invoke('bounds', '-D', '1', '-G', '2', '--eta', '1', '--delta', '0.01', '-T', '100', '-T', '1000')
        assert result.exit_code == 0, result.output
        table = pd.read_csv(io.StringIO(result.output))
        assert list(table['T']) == [100, 1000]
        assert set(table['T0']) == {400}
        assert (table['theorem2'] >= table['theorem1']).all()

    def test_derived_range(self, tmp_path):
        out_file = str(tmp_path / 'bounds.csv')
        assert invoke('bounds', '--out', out_file).exit_code == 0
        assert len(pd.read_csv(out_file)) == 3

    def test_zero_delta_needs_range(self):
        assert invoke('bounds', '--delta', '0').exit_code == 2


class TestPreprocessAndShow:

    def test_outputs(self, prepared_dir):
        for name in ('raw.csv', 'train.lpqd', 'validation.lpqd', 'test.lpqd', 'vocab.json'):
            assert os.path.isfile(os.path.join(prepared_dir, name))

    def test_show_vocab(self, prepared_dir):
        result = invoke('show', 'vocab', os.path.join(prepared_dir, 'vocab.json'), '--full')
        assert result.exit_code == 0, result.output
        assert '"per_field"' in result.output

    def test_input_required(self, tmp_path):
        assert invoke('preprocess', '--kind', 'csv', '--out', str(tmp_path)).exit_code == 2

    def test_data_section_of_config(self, tmp_path):
        config_file = str(tmp_path / 'experiment.yml')
        data_dir = str(tmp_path / 'data')
        with open(config_file, 'w') as out_f:
            yaml.safe_dump({'data': {'path': data_dir, 'kind': 'synth', 'log_base': '2',
                                     'synth': {'n_fields': 2, 'vocab_size': 20, 'n_samples': 300}},
                            'model': {'dim': 4}, 'train': {'epochs': 1, 'batch_size': 64}}, out_f)
        result = invoke('preprocess', '--config', config_file)
        assert result.exit_code == 0, result.output
        with open(os.path.join(data_dir, 'vocab.json')) as in_f:
            assert len(json.load(in_f)['fields']) == 2
        trained = invoke('train', '--config', config_file, '--out', str(tmp_path / 'run'))
        assert trained.exit_code == 0, trained.output

    def test_out_or_data_path_required(self):
        assert invoke('preprocess', '--kind', 'synth').exit_code == 2


class TestTrain:

    def test_small_run(self, prepared_dir, tmp_path):
        out_dir = str(tmp_path / 'run')
        result = invoke('train', '--data', prepared_dir, '--dim', '4', '--epochs', '2', '--batch-size', '64',
                        '--lr', '0.01', '--out', out_dir)
        assert result.exit_code == 0, result.output
        for name in ('summary.md', 'metrics.jsonl', 'embeddings.lpqe'):
            assert os.path.isfile(os.path.join(out_dir, name))
        shown = invoke('show', 'checkpoint', os.path.join(out_dir, 'embeddings.lpqe'))
        assert shown.exit_code == 0, shown.output
        assert '"layout": "feature"' in shown.output

    def test_replay_from_manifest(self, prepared_dir, tmp_path):
        first_dir, second_dir = str(tmp_path / 'first'), str(tmp_path / 'second')
        result = invoke('train', '--data', prepared_dir, '--regime', 'lpt', '--rounding', 'dr', '--dim', '4',
                        '--epochs', '2', '--batch-size', '64', '--delta-init', '0.002', '--out', first_dir)
        assert result.exit_code == 0, result.output
        replay = invoke('train', '--config', os.path.join(first_dir, 'manifest.yml'), '--out', second_dir)
        assert replay.exit_code == 0, replay.output
        with open(os.path.join(first_dir, 'metrics.jsonl')) as first:
            with open(os.path.join(second_dir, 'metrics.jsonl')) as second:
                assert first.read() == second.read()

    def test_invalid_config_file(self, tmp_path):
        config_file = str(tmp_path / 'bad.yml')
        with open(config_file, 'w') as out_f:
            yaml.safe_dump({'regime': {'kind': 'int4'}}, out_f)
        result = invoke('train', '--config', config_file, '--out', str(tmp_path / 'run'))
        assert result.exit_code == 2

    def test_missing_data_directory(self, tmp_path):
        result = invoke('train', '--data', str(tmp_path / 'nope'), '--out', str(tmp_path / 'run'))
        assert result.exit_code == 2

    def test_every_section_has_flags(self, tmp_path):
        out_dir = str(tmp_path / 'run')
        result = invoke('train', '--synth-fields', '2', '--synth-vocab', '20', '--synth-samples', '300',
                        '--synth-signal', '1.5', '--threshold', '2', '--init-scale', '0.02', '--bias', '0.1',
                        '--delta-optimizer', 'sgd', '--delta-weight-decay', '0', '--milestone', '1',
                        '--factor', '0.5', '--dim', '4', '--epochs', '2', '--batch-size', '64', '--out', out_dir)
        assert result.exit_code == 0, result.output
        with open(os.path.join(out_dir, 'manifest.yml')) as in_f:
            manifest = yaml.safe_load(in_f)
        assert manifest['data']['synth'] == {'n_fields': 2, 'vocab_size': 20, 'n_samples': 300, 'signal': 1.5}
        assert manifest['data']['threshold'] == 2
        assert manifest['regime']['init_scale'] == 0.02
        assert manifest['model']['bias'] == 0.1
        assert manifest['optim']['delta_optimizer'] == 'sgd'
        assert manifest['optim']['delta_weight_decay'] == 0.0
        assert manifest['optim']['milestones'] == [1]
        assert manifest['optim']['factor'] == 0.5

    def test_bad_flag_value(self, tmp_path):
        assert invoke('train', '--bits', '1', '--out', str(tmp_path)).exit_code == 2


class TestSynthLab:

    def test_small_lab(self, tmp_path):
        out_dir = str(tmp_path / 'lab')
        result = invoke('synth-lab', '--n-params', '50', '-T', '100', '--seeds', '2', '--out', out_dir)
        assert result.exit_code == 0, result.output
        for name in ('summary.md', 'bounds.jsonl'):
            assert os.path.isfile(os.path.join(out_dir, name))


class TestExitOnFailure:

    @staticmethod
    def run(error):
        @click.command()
        @exit_on_failure
        def failing():
            raise error
        return CliRunner().invoke(failing, [])

    @pytest.mark.parametrize('error, code', [
        (StaleTapeError("tape recorded at generation 1, model is at 2"), 4),
        (NumericFailure("loss is nan"), 3),
        (ConfigError("missing data.path"), 2),
        (InvalidParameterError("delta must be positive"), 2),
    ])
    def test_exit_codes(self, error, code):
        assert self.run(error).exit_code == code

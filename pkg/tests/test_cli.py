import json
import os

import pytest

from cli.config import RunConfig, load_config, save_config
from cli.main import UsageError, default_out_dir, parse_args, run
from icnn.network import IcnnNet, icnn_to_dict
from storage import utils as storage
from utils import constant
from utils.errors import ConfigError

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')


def test_config_round_trip(tmp_path):
    config = load_config(os.path.join(CONFIGS, 'toy_search.json'))
    assert config.qlearn.max_episodes == 15
    assert config.qlearn.minibatch_size == 4 and config.qlearn.min_buffer_size == 2
    assert config.structure.fixed_indicators == {'2': [[1]]}
    path = save_config(config, str(tmp_path / 'config.json'))
    assert load_config(path) == config
    assert RunConfig.from_dict(RunConfig().to_dict()) == RunConfig()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'version': 1, 'qlearn': {'gama': 0.9}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'verison': 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'version': constant.CONFIG_VERSION + 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'qlearn': {'gamma': 1.5}})
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"version": ')
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_shipped_configs_load():
    for name in ('syn1', 'syn2', 'pow', 'mas', 'toy_search'):
        config = load_config(os.path.join(CONFIGS, f'{name}.json'))
        assert config.constraints.build().max_factors_per_neuron >= 1


def test_parse_args():
    command, positional, options = parse_args(['probe', 'sweep', '--model', 'm.json', '--data', 'd.csv',
                                               '--grid', '-2..2', '--loglevel', 'debug'])
    assert (command, positional) == ('probe', 'sweep')
    assert options['grid'] == [-2.0, -1.0, 0.0, 1.0, 2.0]
    _, positional, options = parse_args(['gen-data', 'syn1', '--seed', '7', '--snr', '40', '--outputs', '1,3'])
    assert positional == 'syn1'
    assert options['seed'] == 7 and options['snr'] == 40.0 and options['outputs'] == [1, 3]


@pytest.mark.parametrize('argv', [
    [],
    ['train'],
    ['gen-data'],
    ['gen-data', 'bogus'],
    ['gen-data', 'syn1', '--seed', 'abc'],
    ['fit', '--model', 'm.json'],
    ['probe', 'segment'],
    ['eval', '--model', 'm.json', '--data', 'd.csv', 'extra'],
    ['search', '--config', 'c.json', '--loglevel', 'loud'],
])
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        parse_args(argv)
    assert run(argv) == constant.EXIT_USAGE


def test_default_out_dir():
    path = default_out_dir('search')
    assert path.startswith('output') and path.endswith('search')


def test_gen_fit_eval(tmp_path):
    data_dir = str(tmp_path / 'data')
    assert run(['gen-data', 'toy', '--seed', '7', '--n', '50', '--out', data_dir]) == 0
    train_csv = os.path.join(data_dir, 'toy_train.csv')
    test_csv = os.path.join(data_dir, 'toy_test.csv')
    meta = storage.read_json(os.path.join(data_dir, 'toy_train.meta.json'))
    assert meta['n_inputs'] == 2 and meta['n_outputs'] == 1
    assert meta['library'] == ['id', 'square', 'cos']

    fit_dir = str(tmp_path / 'fit')
    assert run(['fit', '--model', os.path.join(CONFIGS, 'toy_structure.json'), '--data', train_csv,
                '--epochs', '0', '--init', '3', '--out', fit_dir]) == 0
    report = storage.read_json(os.path.join(fit_dir, 'fit_report.json'))
    assert report['loss'] == pytest.approx(report['initial_loss'])
    assert report['parameters'] == [3.0, 3.0]
    assert report['equation'] == 'y1 = 3.000*x1^2*cos(3.000*x2)'
    assert report['converged'] is False

    eval_dir = str(tmp_path / 'eval')
    assert run(['eval', '--model', os.path.join(fit_dir, 'model.json'), '--data', test_csv, '--train', train_csv,
                '--out', eval_dir]) == 0
    with open(os.path.join(eval_dir, 'report.json')) as f:
        result = json.load(f)
    # coefficient exact, cos weight 3 against 2.5
    assert result['e_c_percent'] == pytest.approx(10.0)
    assert result['nrmse_test'] is not None


def test_segment_probe(tmp_path):
    target = storage.write_json_atomic(icnn_to_dict(IcnnNet(3, seed=4)), str(tmp_path / 'qnet.json'))
    out = str(tmp_path / 'probe')
    assert run(['probe', 'segment', '--target', target, '--n', '300', '--out', out]) == 0
    result = storage.read_json(os.path.join(out, 'segment.json'))
    assert result['violations'] == {'qnet': 0}


def test_missing_inputs_exit_with_config_error(tmp_path):
    model = os.path.join(CONFIGS, 'toy_structure.json')
    assert run(['fit', '--model', model, '--data', str(tmp_path / 'nope.csv'), '--out', str(tmp_path)]) == \
        constant.EXIT_CONFIG
    assert run(['eval', '--model', model, '--data', str(tmp_path / 'nope.csv'), '--out', str(tmp_path)]) == \
        constant.EXIT_CONFIG
    assert run(['search', '--config', str(tmp_path / 'nope.json'), '--out', str(tmp_path)]) == constant.EXIT_CONFIG


def test_malformed_csv_exits_with_config_error(tmp_path):
    bad = tmp_path / 'bad.csv'
    bad.write_text('x1,x2,y1\n1.0,1.5,2.0\n1.2,abc,2.1\n')
    model = os.path.join(CONFIGS, 'toy_structure.json')
    assert run(['fit', '--model', model, '--data', str(bad), '--out', str(tmp_path / 'fit')]) == \
        constant.EXIT_CONFIG
    assert run(['eval', '--model', model, '--data', str(bad), '--out', str(tmp_path / 'eval')]) == \
        constant.EXIT_CONFIG


def test_toy_search_reports_greedy_actions(tmp_path):
    data_dir = str(tmp_path / 'data')
    assert run(['gen-data', 'toy', '--seed', '7', '--n', '60', '--out', data_dir]) == 0
    doc = storage.read_json(os.path.join(CONFIGS, 'toy_search.json'))
    doc['data'] = {'train_path': os.path.join(data_dir, 'toy_train.csv'),
                   'test_path': os.path.join(data_dir, 'toy_test.csv')}
    doc['qlearn'].update(max_episodes=4, q_epochs=3, r_epochs=3, minimizer_steps=30, polish_epochs=20)
    doc['train'] = {'epochs': 20}
    config_path = storage.write_json_atomic(doc, str(tmp_path / 'search.json'))
    out = str(tmp_path / 'search')
    assert run(['search', '--config', config_path, '--out', out]) == 0
    report = storage.read_json(os.path.join(out, 'report.json'))
    assert set(report['greedy_actions']) == {'1'}
    bits = report['greedy_actions']['1']
    assert len(bits) == 6 and 1 <= bits.count('1') <= 3
    assert report['aborted_episodes'] == 0

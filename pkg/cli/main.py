"""
python3 ./main.py gen-data syn1 --seed 7 --out data/syn1 --logfile log/2026-10-18-gen-syn1.txt

python3 ./main.py gen-data syn1 --seed 7 --snr 100 --n 500 --out data/syn1-snr100-n500

python3 ./main.py gen-data toy --seed 7 --out data/toy

python3 ./main.py search --config ../configs/syn1.json --out output/2026-10-18/syn1 \
--logfile log/2026-10-18-search-syn1.txt

python3 ./main.py fit --model ../configs/toy_structure.json --data data/toy/toy_train.csv --init 3 --epochs 5000

python3 ./main.py probe sweep --model ../configs/toy_structure.json --data data/toy/toy_train.csv --grid -10..10

python3 ./main.py probe segment --target output/2026-10-18/syn1/snapshots/episode_0010.json --n 10000

python3 ./main.py probe region --model output/2026-10-18/toy/model.json --data data/toy/toy_train.csv --at-optimum

python3 ./main.py eval --model output/2026-10-18/syn1/model.json --data data/syn1/syn1_test.csv
"""
from dataclasses import replace
import getopt
import logging
import os
import sys

import numpy as np
import pandas as pd
import torch

sys.path.append('../')

from cli.config import RunConfig, load_config, save_config
from convexity_probe import probes
from datasets import generators
from datasets.io import load_dataset, save_dataset
from icnn.network import icnn_field, icnn_from_dict, icnn_to_dict
from local_net import network
from local_net.equation import extract_equation
from local_net.training import fit, zero_gradient_slots
from metrics.metrics import metric_report, nrmse
from q_learning.agent import run_search
from q_learning.oracle import greedy_decode
from search_mdp.encoding import SearchSpace, action_bits
from storage import utils as storage
from utils import constant
from utils import utils
from utils.errors import (ConfigError, ConsistencyError, DegenerateError, DomainError, EpisodeAborted, ShapeError,
                          StructureError)

COMMANDS = ('gen-data', 'search', 'fit', 'probe', 'eval')
PROBE_KINDS = ('sweep', 'segment', 'region', 'second-deriv')
REGION_DIRECTIONS = 100
SECOND_DERIV_DIRECTIONS = 10

usage = '''main.py <command> [options]
  gen-data <syn1|syn2|pow|mas|toy> [--seed N] [--snr DB] [--n N] [--nodes M] [--outputs 1,2] [--out DIR]
  search --config <config.json> [--seed N] [--out DIR]
  fit --model <model.json> --data <train.csv> [--test <test.csv>] [--config <config.json>]
      [--epochs N] [--lr LR] [--init W0] [--optimizer gd|bfgs] [--out DIR]
  probe sweep --model <model.json> --data <train.csv> [--grid -10..10] [--epochs N] [--out DIR]
  probe segment --target <icnn.json> [--n 10000] [--seed N] [--box-hi 1.0] [--out DIR]
  probe region --model <model.json> --data <train.csv> [--n 100] [--seed N] [--at-optimum] [--out DIR]
  probe second-deriv --model <model.json> --data <train.csv> [--n 10] [--seed N] [--out DIR]
  eval --model <model.json> --data <test.csv> [--train <train.csv>] [--out DIR]
common: --logfile <log_file> --loglevel <debug|info|warning|error|fatal>'''

LONG_OPTIONS = ['config=', 'seed=', 'snr=', 'out=', 'grid=', 'n=', 'nodes=', 'outputs=', 'model=', 'data=', 'test=',
                'train=', 'target=', 'epochs=', 'lr=', 'init=', 'optimizer=', 'box-hi=', 'at-optimum', 'logfile=',
                'loglevel=']


class UsageError(Exception):
    pass


def default_out_dir(command):
    return os.path.join('output', utils.get_date_str_today(), command)


def save_model(structure, weights, path):
    return storage.write_json_atomic({'structure': network.structure_to_dict(structure),
                                      'weights': None if weights is None else network.weights_to_dict(weights)}, path)


def load_model(path):
    """
    (structure, weights or None) from a model file or a bare structure file.
    """
    if not os.path.isfile(path):
        raise ConfigError(f'model file not found: {path}')
    try:
        d = storage.read_json(path)
    except ValueError as e:
        raise ConfigError(f'{path} is not valid JSON: {e}')
    if 'structure' not in d:
        return network.structure_from_dict(d), None
    weights = d.get('weights')
    return network.structure_from_dict(d['structure']), None if weights is None else network.weights_from_dict(weights)


def build_space(config, train):
    library = config.structure.library or train.meta.get('library')
    if library is None:
        raise ConfigError('no symbol library in the config or the dataset meta')
    n_outputs = train.Y.shape[1]
    mult = config.structure.mult_neurons or n_outputs * constant.MULT_NEURONS_PER_OUTPUT
    fixed = config.structure.fixed_indicators
    template = network.standard_structure(library, train.X.shape[1], mult, n_outputs,
                                          z_mult=fixed.get('1'), z_sum=fixed.get('2'))
    return SearchSpace(template, tuple(config.structure.searched_stages))


def cmd_gen_data(name, seed, snr, out_dir, n=None, nodes=None, outputs=None):
    if name in (constant.SYN1, constant.SYN2):
        samples = n or constant.SYN_SAMPLES
        train, test = generators.gen_syn(1 if name == constant.SYN1 else 2, samples, samples, seed)
    elif name == constant.TOY:
        samples = n or constant.TOY_SAMPLES
        train, test = generators.gen_toy(samples, samples, seed)
    elif name == constant.POW:
        spec = generators.random_power_spec(nodes or constant.POW_NODES, seed)
        total = 2 * n if n else constant.POW_TOTAL_SAMPLES
        train, test = generators.split_dataset(generators.gen_power(spec, total, seed=seed))
    else:
        spec = generators.random_massdamper_spec(nodes or constant.MAS_NODES, seed)
        train, test = generators.split_dataset(generators.gen_massdamper(spec, seed))
        if n and n < train.n:
            train = generators.subsample(train, n, seed)
    train = generators.add_noise(train, snr, seed + 1)
    test = generators.add_noise(test, snr, seed + 2)
    if outputs:
        train = generators.select_outputs(train, outputs)
        test = generators.select_outputs(test, outputs)
    train_path = save_dataset(train, os.path.join(out_dir, f'{name}_train.csv'))
    test_path = save_dataset(test, os.path.join(out_dir, f'{name}_test.csv'))
    print('Train data written to', train_path)
    print('Test data written to', test_path)
    return train_path, test_path


def greedy_actions(result, space, config):
    """
    Stage -> indicator bits of the epsilon = 0 decode of the final Q network.
    """
    try:
        _, actions = greedy_decode(result.qnet, space, result.constraints, config.qlearn, seed=config.seeds.search)
    except EpisodeAborted as e:
        logging.error(f'Greedy decode of the final Q network failed: {e}')
        return None
    return {str(k): action_bits(a, *space.stage_shape(k)) for k, a in actions.items()}


def cmd_search(config, out_dir):
    train = load_dataset(config.data.train_path)
    test = load_dataset(config.data.test_path) if config.data.test_path else None
    space = build_space(config, train)
    result = run_search(config.qlearn, space, train.X, train.Y, config.train, config.constraints.build(),
                        seed=config.seeds.search)

    episodes = pd.DataFrame([log.to_row() for log in result.logs])
    storage.write_csv_atomic(episodes, os.path.join(out_dir, 'episodes.csv'))
    timing = pd.DataFrame({'episode': [log.episode for log in result.logs],
                           'seconds': [log.seconds for log in result.logs]})
    storage.write_csv_atomic(timing, os.path.join(out_dir, 'timing.csv'))
    for snapshot in result.snapshots:
        storage.write_json_atomic(dict(snapshot, n_s=space.n_s),
                                  os.path.join(out_dir, 'snapshots', f'episode_{snapshot["episode"]:04d}.json'))
    storage.write_json_atomic(icnn_to_dict(result.qnet), os.path.join(out_dir, 'qnet.json'))
    storage.write_json_atomic(icnn_to_dict(result.rnet), os.path.join(out_dir, 'rnet.json'))
    save_config(config, os.path.join(out_dir, 'config.json'))
    if result.best_structure is None:
        raise DegenerateError(f'every one of {len(result.logs)} episodes was aborted, no structure to report')

    structure, weights = result.best_structure, result.best_weights
    save_model(structure, weights, os.path.join(out_dir, 'model.json'))
    equation = extract_equation(structure, weights)
    storage.write_text_atomic(equation.to_text() + '\n', os.path.join(out_dir, 'equations.txt'))
    report = metric_report(equation, network.forward(structure, weights, train.X), train.Y,
                           None if test is None else network.forward(structure, weights, test.X),
                           None if test is None else test.Y, true_eq=train.truth)
    report_dict = dict(report.to_dict(), best_episode=result.best_episode, best_reward=result.best_reward,
                       best_nrmse=result.best_nrmse, final_loss=result.final_loss,
                       stopped_episode=result.stopped_episode, structure=network.describe(structure),
                       greedy_actions=greedy_actions(result, space, config),
                       aborted_episodes=sum(1 for log in result.logs if log.aborted),
                       frozen_paths=sorted(list(p) for p in result.constraints.frozen_paths))
    # written last: a failed run leaves no report behind
    storage.write_json_atomic(report_dict, os.path.join(out_dir, 'report.json'))
    print(equation.to_text())
    return report_dict


def cmd_fit(model_path, data_path, train_cfg, out_dir, test_path=''):
    structure, _ = load_model(model_path)
    train = load_dataset(data_path)
    initial = network.init_weights(structure, train_cfg.init_value)
    initial_loss = network.loss_value(structure, initial, train.X, train.Y)
    zero_slots = zero_gradient_slots(structure, initial, train.X, train.Y)
    weights, loss = fit(structure, train_cfg, train.X, train.Y)
    converged = bool(np.isfinite(loss) and loss <= constant.FIT_LOSS_TOL)
    if not converged:
        logging.error(f'fit did not converge: loss {loss:.6g}, {len(zero_slots)} parameters with zero '
                      f'gradient at w0={train_cfg.init_value}')
    equation = extract_equation(structure, weights)
    report = {
        'initial_loss': initial_loss,
        'loss': loss,
        'converged': converged,
        'init_value': train_cfg.init_value,
        'epochs': train_cfg.epochs,
        'optimizer': train_cfg.optimizer,
        'zero_gradient_slots': [[k, list(idx) if isinstance(idx, tuple) else idx] for k, idx in zero_slots],
        'parameters': network.weights_to_vector(structure, weights).tolist(),
        'equation': equation.to_text(),
        'equation_terms': equation.to_json(),
        'nrmse_train': nrmse(network.forward(structure, weights, train.X), train.Y),
    }
    if test_path:
        test = load_dataset(test_path)
        report['nrmse_test'] = nrmse(network.forward(structure, weights, test.X), test.Y)
    save_model(structure, weights, os.path.join(out_dir, 'model.json'))
    storage.write_json_atomic(report, os.path.join(out_dir, 'fit_report.json'))
    print(equation.to_text())
    print('Final loss:', loss, 'converged' if converged else 'NOT converged')
    return report


def _model_with_weights(model_path):
    structure, weights = load_model(model_path)
    if weights is None:
        raise ConfigError(f'{model_path} holds a structure without weights')
    return structure, weights


def _load_icnns(target_path):
    if not os.path.isfile(target_path):
        raise ConfigError(f'ICNN file not found: {target_path}')
    d = storage.read_json(target_path)
    if 'qnet' in d:
        return {'qnet': icnn_from_dict(d['qnet']), 'rnet': icnn_from_dict(d['rnet'])}, d.get('n_s', 1)
    return {os.path.splitext(os.path.basename(target_path))[0]: icnn_from_dict(d)}, 1


def cmd_probe(kind, options, train_cfg, seed, out_dir, threads):
    if kind == 'segment':
        nets, n_s = _load_icnns(options['target'])
        n_triples = options.get('n') or constant.SEGMENT_TRIPLES
        box_hi = options.get('box_hi', 1.0)
        violations = {}
        for name, net in nets.items():
            lower, upper = np.zeros(net.input_dim), np.full(net.input_dim, box_hi)
            violations[name] = probes.segment_convexity_test(icnn_field(net, n_s), lower, upper, n_triples,
                                                             constant.SEGMENT_TOL, seed)
            print(f'{name}: {violations[name]} violations in {n_triples} triples')
        result = {'target': options['target'], 'n_triples': n_triples, 'tol': constant.SEGMENT_TOL,
                  'box': [0.0, box_hi], 'violations': violations}
        storage.write_json_atomic(result, os.path.join(out_dir, 'segment.json'))
        return result

    train = load_dataset(options['data'])
    if kind == 'sweep':
        structure, _ = load_model(options['model'])
        df = probes.init_sweep(structure, train.X, train.Y, options.get('grid', constant.SWEEP_GRID), train_cfg,
                               threads)
        storage.write_csv_atomic(df, os.path.join(out_dir, 'sweep.csv'))
        print(df.to_string(index=False))
        return df

    structure, weights = _model_with_weights(options['model'])
    if kind == 'region':
        if options.get('at_optimum'):
            weights, loss = fit(structure, train_cfg, train.X, train.Y, init_weights=weights)
            logging.info(f'Refit to the optimum: loss {loss:.6g}')
        estimate = probes.estimate_region(structure, weights, train.X, train.Y,
                                          options.get('n') or REGION_DIRECTIONS, seed)
        result = estimate.to_dict()
        storage.write_json_atomic(result, os.path.join(out_dir, 'region.json'))
        print('eta:', estimate.eta, 'membership:', estimate.membership)
        return result

    df = probes.probe_table(structure, weights, train.X, train.Y, options.get('n') or SECOND_DERIV_DIRECTIONS, seed)
    storage.write_csv_atomic(df, os.path.join(out_dir, 'probe.csv'))
    return df


def cmd_eval(model_path, data_path, out_dir, train_path=''):
    structure, weights = _model_with_weights(model_path)
    data = load_dataset(data_path)
    equation = extract_equation(structure, weights)
    if train_path:
        train = load_dataset(train_path)
        report = metric_report(equation, network.forward(structure, weights, train.X), train.Y,
                               network.forward(structure, weights, data.X), data.Y, true_eq=data.truth)
    else:
        report = metric_report(equation, network.forward(structure, weights, data.X), data.Y, true_eq=data.truth)
    result = dict(report.to_dict(), dataset=data_path)
    storage.write_json_atomic(result, os.path.join(out_dir, 'report.json'))
    print(equation.to_text())
    return result


def _number(opt, arg, kind):
    try:
        return kind(arg)
    except ValueError:
        raise UsageError(f'{opt} expects a number, got {arg}')


def parse_args(argv):
    """
    (command, positional, options) from argv; UsageError on anything malformed.
    """
    if len(argv) == 0 or argv[0] not in COMMANDS:
        raise UsageError('missing or unknown command')
    command, rest = argv[0], argv[1:]
    positional = None
    if command in ('gen-data', 'probe'):
        if len(rest) == 0 or rest[0].startswith('-'):
            raise UsageError(f'{command} needs a {"dataset name" if command == "gen-data" else "probe kind"}')
        positional, rest = rest[0], rest[1:]
        valid = constant.DATASET_NAMES if command == 'gen-data' else PROBE_KINDS
        if positional not in valid:
            raise UsageError(f'{positional} is not one of {list(valid)}')
    try:
        opts, args = getopt.getopt(rest, 'h', LONG_OPTIONS)
    except getopt.GetoptError as e:
        raise UsageError(str(e))
    if len(args) > 0:
        raise UsageError(f'unexpected arguments {args}')
    options = {'loglevel': logging.INFO}
    for opt, arg in opts:
        if opt == '-h':
            raise UsageError('')
        elif opt in ('--seed', '--n', '--nodes', '--epochs'):
            options[opt[2:]] = _number(opt, arg, int)
        elif opt in ('--snr', '--lr', '--init', '--box-hi'):
            options[opt[2:].replace('-', '_')] = _number(opt, arg, float)
        elif opt == '--grid':
            try:
                options['grid'] = utils.parse_grid(arg)
            except ValueError as e:
                raise UsageError(str(e))
        elif opt == '--outputs':
            options['outputs'] = [_number(opt, x, int) for x in arg.split(',') if x.strip() != '']
        elif opt == '--at-optimum':
            options['at_optimum'] = True
        elif opt == '--loglevel':
            options['loglevel'] = utils.get_log_level_from_str(arg)
            if options['loglevel'] is None:
                raise UsageError(f'unknown log level {arg}')
        else:
            options[opt[2:]] = arg
    required = {'search': ['config'], 'fit': ['model', 'data'], 'eval': ['model', 'data'],
                'segment': ['target'], 'sweep': ['model', 'data'], 'region': ['model', 'data'],
                'second-deriv': ['model', 'data']}.get(positional if command == 'probe' else command, [])
    missing = [f'--{r}' for r in required if not options.get(r)]
    if len(missing) > 0:
        raise UsageError(f'missing {" ".join(missing)}')
    return command, positional, options


def _train_config(config, options):
    overrides = {name: options[key] for key, name in (('epochs', 'epochs'), ('lr', 'learning_rate'),
                                                      ('init', 'init_value'), ('optimizer', 'optimizer'))
                 if key in options}
    return replace(config.train, **overrides)


def dispatch(command, positional, options):
    config = load_config(options['config']) if options.get('config') else RunConfig()
    out_dir = options.get('out') or config.output_dir or default_out_dir(positional or command)
    threads = utils.get_thread_count()
    torch.set_num_threads(threads)
    logging.info(f'{command} {positional or ""}: output to {out_dir}, {threads} threads')
    if command == 'gen-data':
        return cmd_gen_data(positional, options.get('seed', config.seeds.data), options.get('snr'), out_dir,
                            options.get('n'), options.get('nodes'), options.get('outputs'))
    if command == 'search':
        if 'seed' in options:
            config = replace(config, seeds=replace(config.seeds, search=options['seed']))
        return cmd_search(config, out_dir)
    if command == 'fit':
        return cmd_fit(options['model'], options['data'], _train_config(config, options), out_dir,
                       options.get('test', ''))
    if command == 'probe':
        return cmd_probe(positional, options, _train_config(config, options),
                         options.get('seed', config.seeds.probe), out_dir, threads)
    return cmd_eval(options['model'], options['data'], out_dir, options.get('train', ''))


def run(argv):
    """
    Parse, configure logging, dispatch. Returns the process exit code.
    """
    try:
        command, positional, options = parse_args(argv)
    except UsageError as e:
        print(usage)
        if str(e):
            print(e, file=sys.stderr)
        return constant.EXIT_USAGE

    logging.basicConfig(format='%(asctime)s %(levelname)s %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S',
                        level=options['loglevel'],
                        filemode='w',
                        filename=options.get('logfile') or None)
    try:
        dispatch(command, positional, options)
    except ConsistencyError as e:
        logging.error(f'Consistency check failed: {e}')
        print(f'consistency check failed: {e}', file=sys.stderr)
        return constant.EXIT_PROBE
    except (ConfigError, DomainError, StructureError, ShapeError, DegenerateError, EpisodeAborted,
            FileNotFoundError, ValueError) as e:
        logging.error(f'{command} failed: {e}')
        print(f'{command} failed: {e}', file=sys.stderr)
        return constant.EXIT_CONFIG
    return constant.EXIT_OK


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))

"""Command-line interface: convert, fetch, train, extend, evaluate and detect."""

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional

from intentspace import (argparsing, checkpoint, config, data, evaluation, netreq, training,
                         unseen)
from intentspace.errors import (ConfigError, EvalError, IntentSpaceError, NumericError,
                                PathError, UnsupportedFormError)
from intentspace.model import BasisForm, IntentSpaceModel, ScorerKind, SpaceMode


def _load_intent_space(path: str) -> IntentSpaceModel:
    model = checkpoint.load(path)
    if not isinstance(model, IntentSpaceModel):
        raise UnsupportedFormError(f'{path} holds a baseline model')
    return model


def _split_examples(corpus: evaluation.Corpus, split: str, labels: Optional[list[str]] = None,
                    ) -> list:
    dataset = corpus.dataset.split(split)
    if labels is not None:
        dataset = dataset.restrict(labels)
    if not len(dataset):
        raise EvalError(f'no {split} sentences to evaluate')
    return corpus.encode(dataset)


def _stem(path: str) -> str:
    return path[:-len('.json')] if path.endswith('.json') else path


def cmd_convert(args: argparse.Namespace) -> int:
    if args.format == 'snips':
        dataset = data.load_snips(args.source, args.validation_per_intent)
    elif args.test:
        dataset = data.load_atis(args.source, args.test)
    else:
        dataset = data.load_atis(*data.find_atis_files(args.source))
    data.save_jsonl(dataset, args.out)

    counts = {s: dataset.split(s).counts() for s in data.SPLITS}
    width = max(len(label) for label in dataset.labels)
    print(f'{"intent":<{width}} ' + ' '.join(f'{s:>6}' for s in data.SPLITS))
    for label in dataset.labels:
        print(f'{label:<{width}} ' + ' '.join(f'{counts[s][label]:>6}' for s in data.SPLITS))
    print(f'{"total":<{width}} ' + ' '.join(f'{sum(counts[s].values()):>6}'
                                             for s in data.SPLITS))
    return 0


def cmd_fetch(args: argparse.Namespace) -> int:
    try:
        base = netreq.fetch_snips(args.dest)
    except netreq.exceptions.RequestException as e:
        logging.error('Download failed: %s', e)
        return PathError.exit_code
    print(base)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = config.load_config(args.config, args.set)
    config.check_paths(cfg)
    corpus = evaluation.load_corpus(cfg)
    part = evaluation.partition(corpus, cfg.split.unseen, cfg, cfg.split.seen)
    model, history = evaluation.train_model(corpus, part.seen_train, part.seen_valid, cfg)

    run_dir = config.run_directory(cfg)
    os.makedirs(run_dir, exist_ok=True)
    checkpoint.save(model, os.path.join(run_dir, 'checkpoint.json'))
    training.write_history(os.path.join(run_dir, 'history.csv'), history)
    if isinstance(model, IntentSpaceModel):
        evaluation.export_coordinates(model, os.path.join(run_dir, 'coordinates.csv'))
    results = {'train_accuracy': evaluation.accuracy(model, corpus.encode(part.seen_train))}
    if len(part.seen_valid):
        results['valid_accuracy'] = evaluation.accuracy(model, corpus.encode(part.seen_valid))
    config.write_manifest(run_dir, cfg, 'train', {'results': results})
    logging.info('Results: %s', results)
    print(run_dir)
    return 0


def cmd_add_intent(args: argparse.Namespace) -> int:
    overrides = list(args.set)
    if args.epsilon is not None:
        overrides.append(f'training.epsilon={args.epsilon}')
    if args.zeta is not None:
        overrides.append(f'training.zeta={args.zeta}')
    cfg = config.load_config(args.config, overrides)
    config.check_paths(cfg)
    model = _load_intent_space(args.checkpoint)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)),
                                   'extended-' + '-'.join(args.intent) + '.json')
    if os.path.abspath(out) == os.path.abspath(args.checkpoint):
        raise ConfigError('the extended model cannot replace its input checkpoint')

    corpus = evaluation.load_corpus(cfg)
    part = evaluation.partition(corpus, args.intent, cfg, model.labels)
    ext, history = evaluation.extend_model(model, corpus, part, args.intent, cfg,
                                           cfg.split.unseen_sentences, args.omega)
    checkpoint.save(ext, out)
    training.write_history(_stem(out) + '.history.csv', history)

    unchanged = checkpoint.tensor_diff(model, ext)
    report = {
        'base_checkpoint': os.path.abspath(args.checkpoint),
        'new_intents': list(args.intent),
        'epsilon': cfg.training.epsilon,
        'zeta': cfg.training.zeta,
        'omega': cfg.model.omega if args.omega is None else args.omega,
        'unchanged': unchanged,
        'all_unchanged': all(unchanged.values()),
    }
    with open(_stem(out) + '.report.json', 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2)
        f.write('\n')
    if not report['all_unchanged']:
        logging.error('Existing tensors changed: %s',
                      ', '.join(n for n, same in unchanged.items() if not same))
        return NumericError.exit_code
    print(out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = config.load_config(args.config, args.set)
    config.check_paths(cfg)
    model = checkpoint.load(args.checkpoint)
    corpus = evaluation.load_corpus(cfg)
    labels = model.labels if args.known_only else None
    examples = _split_examples(corpus, args.split, labels)
    added = model.labels[model.seen_count:] if isinstance(model, IntentSpaceModel) else []
    report = evaluation.evaluate(model, examples, args.unseen or added)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text + '\n')
    else:
        print(text)
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = config.load_config(args.config, args.set)
    config.check_paths(cfg)
    model = _load_intent_space(args.checkpoint)
    corpus = evaluation.load_corpus(cfg)
    examples = _split_examples(corpus, args.split)

    out = open(args.out, 'w', newline='', encoding='utf-8') if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator='\n')
        w.writerow(('text', 'intent', 'measure', 'value', 'threshold', 'decision'))
        for ex in examples:
            if args.rho is not None:
                result = unseen.detect_by_entropy(model, ex.inputs, args.rho)
            else:
                result = unseen.detect_by_coordinates(model, ex.inputs, args.distance,
                                                      args.steps)
            w.writerow((ex.text, ex.intent, result.measure, repr(result.value),
                        repr(result.threshold), result.decision.value))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_roc(args: argparse.Namespace) -> int:
    cfg = config.load_config(args.config, args.set)
    config.check_paths(cfg)
    model = _load_intent_space(args.checkpoint)
    corpus = evaluation.load_corpus(cfg)
    examples = _split_examples(corpus, args.split)
    known = set(model.labels[:model.seen_count])
    unseen_labels = args.unseen or sorted({ex.intent for ex in examples} - known)
    curve = unseen.roc_curve(model, examples, unseen_labels)

    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    unseen.write_roc_csv(os.path.join(out_dir, 'roc.csv'), curve)
    summary = {'auc': curve.auc, 'unseen': unseen_labels, 'positives': curve.positives,
               'negatives': curve.negatives, 'split': args.split}
    with open(os.path.join(out_dir, 'roc.json'), 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2)
        f.write('\n')
    print(f'AUC {curve.auc:.4f}')
    return 0


def cmd_export_coords(args: argparse.Namespace) -> int:
    evaluation.export_coordinates(_load_intent_space(args.checkpoint), args.out)
    return 0


def cmd_grad_check(args: argparse.Namespace) -> int:
    results = training.random_gradient_check(args.seed, BasisForm(args.form),
                                             SpaceMode(args.mode), ScorerKind(args.scorer))
    failed = False
    for block, error in results.items():
        ok = error < training.GRAD_CHECK_TOLERANCE
        failed = failed or not ok
        print(f'{block:<12} {error:.3g} {"ok" if ok else "FAILED"}')
    return NumericError.exit_code if failed else 0


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = config.load_config(args.config, args.set)
    config.check_paths(cfg)
    corpus = evaluation.load_corpus(cfg)
    kwargs = {}
    if args.unseen:
        if args.name in ('table1', 'table3'):
            if len(args.unseen) != 1:
                raise ConfigError(f'{args.name} takes exactly one --unseen intent')
            kwargs['unseen'] = args.unseen[0]
        elif args.name == 'table2':
            kwargs['intents'] = args.unseen
        elif args.name == 'two-intents':
            kwargs['unseen'] = tuple(args.unseen)
    if args.sizes is not None:
        if args.name != 'table3':
            raise ConfigError('--sizes only applies to table3')
        kwargs['sizes'] = args.sizes
    report = evaluation.EXPERIMENTS[args.name](corpus, cfg, **kwargs)

    run_dir = config.run_directory(cfg)
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, f'{args.name}.json')
    evaluation.write_report(path, report)
    config.write_manifest(run_dir, cfg, f'experiment {args.name}')
    print(path)
    return 0


def _add_config_args(parser: argparse.ArgumentParser):
    parser.add_argument(
        'config',
        type=argparsing.ExpandUserPath('file'),
        help='YAML run configuration')
    parser.add_argument(
        '--set',
        action='append',
        default=[],
        type=argparsing.override,
        metavar='SECTION.KEY=VALUE',
        help='Override a configuration value (may be repeated)')


def _add_checkpoint_arg(parser: argparse.ArgumentParser):
    parser.add_argument(
        '--checkpoint',
        required=True,
        type=argparsing.ExpandUserPath('file'),
        help='Model checkpoint file')


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Intent-space classifier with addition and detection of unseen intents')
    parser.add_argument(
        '-v',
        '--verbose',
        action='store_true',
        help='Enable verbose logging')
    parser.add_argument(
        '--debug',
        action='store_true',
        help='Enable debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('convert', help='Convert SNIPS or ATIS data to JSON Lines')
    p.add_argument('format', choices=('snips', 'atis'), help='Source layout')
    p.add_argument(
        'source',
        type=argparsing.ExpandUserPath(),
        help='SNIPS benchmark directory, ATIS directory or ATIS train file')
    p.add_argument('out', help='JSON Lines file to write')
    p.add_argument(
        '--test',
        type=argparsing.ExpandUserPath('file'),
        help='ATIS test file when source is the train file')
    p.add_argument(
        '--validation-per-intent',
        type=int,
        default=100,
        help='SNIPS training sentences per intent moved to the validation split')
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser('fetch', help='Download the SNIPS benchmark files')
    p.add_argument('dest', help='Directory to download into')
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser('train', help='Train on the seen intents')
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('add-intent', help='Add unseen intents to a trained model')
    _add_config_args(p)
    _add_checkpoint_arg(p)
    p.add_argument(
        '--intent',
        action='append',
        required=True,
        help='Intent to add (may be repeated to add several at once)')
    p.add_argument(
        '--omega',
        action=argparse.BooleanOptionalAction,
        default=None,
        help='Also estimate expansion matrices for the new intents')
    p.add_argument('--epsilon', type=float, help='Weight of the rank-preservation term')
    p.add_argument('--zeta', type=float, help='Weight of the coordinate regulariser')
    p.add_argument('--out', help='Extended checkpoint to write')
    p.set_defaults(func=cmd_add_intent)

    p = sub.add_parser('eval', help='Report accuracies')
    _add_config_args(p)
    _add_checkpoint_arg(p)
    p.add_argument('--split', choices=data.SPLITS, default='test', help='Split to evaluate')
    p.add_argument('--unseen', action='append', help='Intent to report as unseen')
    p.add_argument(
        '--known-only',
        action='store_true',
        help='Skip sentences of intents the model does not have')
    p.add_argument('--out', help='Report file to write instead of printing')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('detect', help='Flag sentences of unseen intents')
    _add_config_args(p)
    _add_checkpoint_arg(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument('--rho', type=float, help='Entropy threshold')
    group.add_argument(
        '--distance',
        type=float,
        help='Coordinate distance threshold (estimates coordinates per sentence)')
    p.add_argument(
        '--steps',
        type=int,
        default=unseen.ESTIMATE_STEPS,
        help='Gradient steps for coordinate estimation')
    p.add_argument('--split', choices=data.SPLITS, default='test', help='Split to examine')
    p.add_argument('--out', help='CSV file to write instead of printing')
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser('roc', help='Entropy ROC curve for unseen-intent detection')
    _add_config_args(p)
    _add_checkpoint_arg(p)
    p.add_argument('--split', choices=data.SPLITS, default='test', help='Split to examine')
    p.add_argument('--unseen', action='append', help='Intent counted as unseen')
    p.add_argument('--out-dir', help='Directory for roc.csv and roc.json')
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser('export-coords', help='Write the coordinate matrix as CSV')
    _add_checkpoint_arg(p)
    p.add_argument('out', help='CSV file to write')
    p.set_defaults(func=cmd_export_coords)

    p = sub.add_parser('grad-check', help='Check analytic gradients on a random model')
    p.add_argument('--seed', type=int, default=0, help='Random seed')
    p.add_argument('--form', choices=[f.value for f in BasisForm],
                   default=BasisForm.FULL_MATRIX.value, help='Basis form')
    p.add_argument('--mode', choices=[m.value for m in SpaceMode],
                   default=SpaceMode.SIMPLEX.value, help='Coordinate space')
    p.add_argument('--scorer', choices=[s.value for s in ScorerKind],
                   default=ScorerKind.SHARED.value, help='Scorer kind')
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser('experiment', help='Run a complete experiment')
    _add_config_args(p)
    p.add_argument('name', choices=sorted(evaluation.EXPERIMENTS), help='Experiment to run')
    p.add_argument('--unseen', action='append', help='Intent(s) to hold out')
    p.add_argument('--sizes', type=int, nargs='+', help='Unseen sentence counts for table3')
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO if args.verbose else logging.WARNING,
        format='%(filename)s: %(message)s')
    try:
        return args.func(args)
    except IntentSpaceError as e:
        logging.error('%s', e)
        return e.exit_code
    except OSError as e:
        logging.error('%s', e)
        return PathError.exit_code


if __name__ == '__main__':
    sys.exit(main())

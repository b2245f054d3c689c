"""
Shared plumbing of the pruning management commands.
"""

import json
import logging
import math
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ..conf import pruning_settings
from ..datasets import load_dataset, split_validation
from ..engine import TrainConfig
from ..exceptions import ExitCode, PruningError, exit_code_for
from ..manifest import build_manifest, record_run, write_manifest
from ..sweep import SweepConfig

logger = logging.getLogger(__name__)


class RunResult:
    """
    What a command did, for its run manifest.

    Attributes:
    - artifact: primary output file (the manifest is written next to it)
    - inputs / outputs: paths read and written
    - seed: seed of the run
    """

    def __init__(self, artifact=None, inputs=(), outputs=(), seed=None):
        self.artifact = artifact
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.seed = seed


class PruningCommand(BaseCommand):
    """
    Base class: validate options with ``form_class``, run, write the manifest.

    Subclasses implement ``run(options)`` returning a ``RunResult``. Library
    errors become ``CommandError`` with the exit code of ``exit_code_for``.
    """

    form_class = None

    def handle(self, *args, **options):
        form = self.form_class(data={key: value for key, value in options.items() if value is not None})
        if not form.is_valid():
            raise CommandError(self.format_errors(form), returncode=ExitCode.USAGE)
        # blank optional text fields mean "not given"
        options = {key: None if value == '' else value for key, value in form.cleaned_data.items()}
        try:
            result = self.run(options)
        except (PruningError, OSError, ValueError) as exc:
            logger.debug("%s failed", self.command_name, exc_info=True)
            raise CommandError(str(exc), returncode=exit_code_for(exc)) from exc
        self.finish(options, result)

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    @staticmethod
    def format_errors(form):
        lines = []
        for field, errors in form.errors.items():
            prefix = '' if field == '__all__' else f"--{field.replace('_', '-')}: "
            lines.extend(f"{prefix}{error}" for error in errors)
        return '; '.join(lines)

    def run(self, options):
        raise NotImplementedError('subclasses of PruningCommand must provide a run() method')

    def finish(self, options, result):
        if result is None:
            return
        artifact = result.artifact or self.default_artifact(options)
        seed = result.seed if result.seed is not None else pruning_settings()['DEFAULT_SEED']
        manifest = build_manifest(self.command_name, snapshot(options), seed, result.inputs, result.outputs)
        if artifact:
            write_manifest(manifest, artifact)
        record_run(manifest)

    def default_artifact(self, options):
        """``<model>.<command>`` for runs without an output file, so the manifest lands next to the model."""

        return f"{options['model']}.{self.command_name}" if options.get('model') else None

    def write_json(self, payload, path=None):
        """Print ``payload`` as JSON and optionally save it to ``path``."""

        text = json.dumps(payload, indent=2, sort_keys=True)
        self.stdout.write(text)
        if path:
            Path(path).write_text(text + '\n', encoding='utf-8')
        return path


def snapshot(options):
    """JSON-ready copy of cleaned options (criteria, kinds and infinite thresholds as strings)."""

    def plain(value):
        if isinstance(value, (frozenset, set)):
            return sorted(value)
        if isinstance(value, (list, tuple)):
            return [plain(item) for item in value]
        if hasattr(value, 'spec'):
            return value.spec
        if isinstance(value, float) and not math.isfinite(value):
            return str(value)
        return value

    return {key: plain(value) for key, value in options.items()}


def add_training_arguments(parser):
    parser.add_argument('--epochs', type=int, help="passes over the training data")
    parser.add_argument('--learning-rate', type=float, help="SGD step size")
    parser.add_argument('--momentum', type=float, help="SGD momentum in [0, 1)")
    parser.add_argument('--batch-size', type=int, help="samples per update")
    parser.add_argument('--seed', type=int, help="seed of initialization, shuffling and dropout")
    parser.add_argument('--no-dropout', action='store_true', help="disable dropout layers while training")


def add_sweep_arguments(parser):
    parser.add_argument('--model', required=True, help="CPMF model file")
    parser.add_argument('--data', required=True, help="dataset spec, e.g. mnist:/data/mnist")
    parser.add_argument('--kinds', help="prunable layer kinds: conv, dense or both (default)")
    parser.add_argument('--mode', help="static (default) or progressive")
    parser.add_argument('--max-gap', type=float, help="largest acceptable metric gap between samples")
    parser.add_argument('--max-evals', type=int, help="threshold evaluation budget")
    parser.add_argument('--t-min', type=float, help="lower end of the threshold domain")
    parser.add_argument('--t-max', type=float, help="upper end of the threshold domain")
    parser.add_argument('--metric', help="accuracy (default) or negative_loss")
    parser.add_argument('--per-class', type=int, help="validation samples per class")
    parser.add_argument('--workers', type=int, help="threads evaluating thresholds")
    parser.add_argument('--seed', type=int, help="seed of the validation subset")
    parser.add_argument('--x-axis', help="filters (default) or parameters")


def train_config(options):
    return TrainConfig.from_settings(
        learning_rate=options.get('learning_rate'),
        momentum=options.get('momentum'),
        epochs=options.get('epochs'),
        batch_size=options.get('batch_size'),
        seed=options.get('seed'),
        dropout=False if options.get('no_dropout') else None,
    )


def sweep_config(options, criterion):
    t_min, t_max = options.get('t_min'), options.get('t_max')
    return SweepConfig.from_settings(
        criterion,
        mode=options.get('mode') or None,
        prunable_kinds=options.get('kinds'),
        threshold_domain=(t_min, t_max) if t_min is not None else None,
        max_gap=options.get('max_gap'),
        max_evals=options.get('max_evals'),
        metric=options.get('metric') or None,
        per_class=options.get('per_class'),
        subset_seed=options.get('seed'),
        workers=options.get('workers'),
    )


def x_axis(options):
    return options.get('x_axis') or pruning_settings()['SWEEP']['x_axis']


def split_training_data(spec):
    """(train, validation) parts of a dataset's training split."""

    conf = pruning_settings()
    return split_validation(load_dataset(spec, 'train'), conf['VALIDATION_FRACTION'], conf['SPLIT_SEED'])


def validation_subset(spec, config):
    """Class-balanced subset of the validation part used by sweeps."""

    _, validation = split_training_data(spec)
    return config.validation_subset(validation)

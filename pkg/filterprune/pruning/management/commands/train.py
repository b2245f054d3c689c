import csv
from pathlib import Path

from ...architectures import from_spec, load_spec
from ...engine import evaluate, train
from ...forms import TrainForm
from ...storage import load, save
from ..base import PruningCommand, RunResult, add_training_arguments, split_training_data, train_config


def write_history(history, path):
    """Per-epoch CSV: ``epoch,loss,accuracy``."""

    with Path(path).open('w', newline='', encoding='utf-8') as stream:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(('epoch', 'loss', 'accuracy'))
        for epoch, metric in enumerate(history, start=1):
            writer.writerow((epoch, repr(metric.mean_loss), repr(metric.top1_accuracy)))
    return path


class Command(PruningCommand):
    help = "Train a model (new from --arch, or continued from --model) and save it as CPMF."
    form_class = TrainForm

    def add_arguments(self, parser):
        parser.add_argument('--arch', help="builtin:<A|B|C> or JSON architecture file")
        parser.add_argument('--model', help="CPMF model to continue training")
        parser.add_argument('--data', required=True, help="dataset spec, e.g. mnist:/data/mnist")
        parser.add_argument('--output', required=True, help="CPMF file to write")
        parser.add_argument('--history', help="per-epoch CSV (default <output>.history.csv)")
        add_training_arguments(parser)

    def run(self, options):
        config = train_config(options)
        train_data, validation = split_training_data(options['data'])
        if options['arch']:
            spec = load_spec(options['arch'], train_data.image_shape, train_data.class_count)
            model = from_spec(spec, seed=config.seed)
            inputs = [] if options['arch'].startswith('builtin:') else [options['arch']]
        else:
            model = load(options['model'])
            inputs = [options['model']]

        history = train(model, train_data, config)
        metric = evaluate(model, validation.batches(config.batch_size))
        output = save(model, options['output'])
        history_path = write_history(history, options['history'] or f"{output}.history.csv")

        self.stdout.write(self.style.SUCCESS(
            f"Trained {len(history)} epochs; validation accuracy {metric.top1_accuracy:.4f}, "
            f"loss {metric.mean_loss:.4f}. Saved {output}"
        ))
        return RunResult(artifact=output, inputs=inputs, outputs=[output, history_path], seed=config.seed)

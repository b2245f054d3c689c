from ...datasets import load_dataset
from ...engine import evaluate
from ...forms import EvaluateForm
from ...storage import load
from ..base import PruningCommand, RunResult


class Command(PruningCommand):
    help = "Top-1 accuracy and mean cross-entropy of a model on a dataset split, as JSON."
    form_class = EvaluateForm

    def add_arguments(self, parser):
        parser.add_argument('--model', required=True, help="CPMF model file")
        parser.add_argument('--data', required=True, help="dataset spec, e.g. mnist:/data/mnist")
        parser.add_argument('--split', help="train or test (default)")
        parser.add_argument('--batch-size', type=int, help="samples per forward pass")
        parser.add_argument('--output', help="JSON file of the metric")

    def run(self, options):
        model = load(options['model'])
        dataset = load_dataset(options['data'], options['split'] or 'test')
        metric = evaluate(model, dataset.batches(options['batch_size'] or 256))
        self.write_json(metric.to_dict(), options['output'])
        outputs = [options['output']] if options['output'] else []
        return RunResult(artifact=options['output'], inputs=[options['model']], outputs=outputs)

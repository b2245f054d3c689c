from ...flops import flops_reduction, model_flops
from ...forms import FlopsForm
from ...storage import load
from ..base import PruningCommand, RunResult


class Command(PruningCommand):
    help = "FLOPs per layer and in total, optionally with the reduction against a baseline model."
    form_class = FlopsForm

    def add_arguments(self, parser):
        parser.add_argument('--model', required=True, help="CPMF model file")
        parser.add_argument('--baseline', help="CPMF model to compare against (e.g. before pruning)")
        parser.add_argument('--output', help="JSON file of the report")

    def run(self, options):
        report = model_flops(load(options['model']))
        payload = report.to_dict()
        inputs = [options['model']]
        if options['baseline']:
            baseline = model_flops(load(options['baseline']))
            payload['baseline_total'] = baseline.total
            payload['reduction'] = flops_reduction(baseline, report)
            inputs.append(options['baseline'])
        self.write_json(payload, options['output'])
        outputs = [options['output']] if options['output'] else []
        return RunResult(artifact=options['output'], inputs=inputs, outputs=outputs)

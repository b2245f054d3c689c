from ...forms import SweepForm
from ...storage import load
from ...sweep import auc, build_curve
from ..base import PruningCommand, RunResult, add_sweep_arguments, sweep_config, validation_subset, x_axis


class Command(PruningCommand):
    help = "Sample the threshold curve of one criterion and report its AUC; writes the curve as CSV."
    form_class = SweepForm

    def add_arguments(self, parser):
        add_sweep_arguments(parser)
        parser.add_argument('--criterion', required=True, help="criterion spec, e.g. std:rank")
        parser.add_argument('--output', required=True, help="CSV file of the curve")

    def run(self, options):
        model = load(options['model'])
        config = sweep_config(options, options['criterion'])
        curve = build_curve(model, validation_subset(options['data'], config), config)
        axis = x_axis(options)
        output = curve.to_csv(options['output'], axis)
        area = auc(curve, axis)
        style = self.style.SUCCESS if curve.converged else self.style.WARNING
        self.stdout.write(style(
            f"{config.criterion.spec}: AUC {area:.4f} from {curve.evaluations} thresholds"
            f"{'' if curve.converged else ' (gap target not reached)'}"
        ))
        return RunResult(artifact=output, inputs=[options['model']], outputs=[output], seed=config.subset_seed)

from ...conf import pruning_settings
from ...forms import CompareForm
from ...storage import load
from ...sweep import compare_criteria, compare_layer_selections
from ..base import PruningCommand, RunResult, add_sweep_arguments, sweep_config, validation_subset, x_axis


class Command(PruningCommand):
    help = ("Rank criteria by the AUC of their threshold curves on one model, or with --layer-selection "
            "compare pruning conv, dense and both layer kinds.")
    form_class = CompareForm

    def add_arguments(self, parser):
        add_sweep_arguments(parser)
        parser.add_argument('--criteria', help="comma separated criterion specs (default: the four built-ins)")
        parser.add_argument('--layer-selection', action='store_true',
                            help="compare layer kinds at their plateau thresholds instead")
        parser.add_argument('--criterion', help="criterion of the layer-selection comparison (default std)")
        parser.add_argument('--drop-tolerance', type=float, help="plateau tolerance of the layer selection")
        parser.add_argument('--output', help="JSON file of the table")

    def run(self, options):
        model = load(options['model'])
        if options['layer_selection']:
            return self.compare_layers(model, options)
        configs = [sweep_config(options, criterion) for criterion in options['criteria']]
        data = validation_subset(options['data'], configs[0])
        rows = compare_criteria(model, data, configs, x_axis(options), workers=configs[0].workers)
        for row in rows:
            marker = '*' if row.best else ' '
            self.stdout.write(f"{marker} {row.criterion:<20} {row.auc:.4f}")
        self.write_json({'ranking': [row.to_dict() for row in rows]}, options['output'])
        return self.result(options, configs[0])

    def compare_layers(self, model, options):
        config = sweep_config(options, options['criterion'])
        tolerance = options['drop_tolerance']
        if tolerance is None:
            tolerance = pruning_settings()['SWEEP']['drop_tolerance']
        rows = compare_layer_selections(model, validation_subset(options['data'], config), config, tolerance)
        for row in rows:
            self.stdout.write(f"{row.kinds:<6} pruned {row.fraction_pruned:.2%} "
                              f"metric {row.metric:.4f} FLOPs -{row.flops_reduction:.2%}")
        self.write_json({'layer_selection': [row.to_dict() for row in rows]}, options['output'])
        return self.result(options, config)

    @staticmethod
    def result(options, config):
        outputs = [options['output']] if options['output'] else []
        return RunResult(artifact=options['output'], inputs=[options['model']], outputs=outputs,
                         seed=config.subset_seed)

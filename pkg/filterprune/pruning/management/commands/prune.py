from pathlib import Path

from ...criteria import ApplicationMode
from ...forms import PruneForm
from ...pruner import PruneConfig, prune
from ...storage import load, save
from ..base import PruningCommand, RunResult


class Command(PruningCommand):
    help = "Remove filters scoring below a threshold and save the pruned model plus a JSON report."
    form_class = PruneForm

    def add_arguments(self, parser):
        parser.add_argument('--model', required=True, help="CPMF model file (left untouched)")
        parser.add_argument('--output', required=True, help="CPMF file of the pruned model")
        parser.add_argument('--criterion', required=True, help="criterion spec, e.g. std:rank")
        parser.add_argument('--threshold', required=True,
                            help="filters scoring below it are removed; write infinities as --threshold=-inf "
                                 "or --threshold=inf")
        parser.add_argument('--kinds', help="prunable layer kinds: conv, dense or both (default)")
        parser.add_argument('--mode', help="static (default) or progressive")
        parser.add_argument('--report', help="JSON report path (default <output>.report.json)")
        parser.add_argument('--prune-output-layer', action='store_true',
                            help="allow pruning the classifier head")

    def run(self, options):
        model = load(options['model'])
        config = PruneConfig(criterion=options['criterion'], threshold=options['threshold'],
                             mode=options['mode'] or ApplicationMode.STATIC, prunable_kinds=options['kinds'],
                             protect_output_layer=not options['prune_output_layer'])
        report = prune(model, config)
        output = save(model, options['output'])
        report_path = Path(options['report'] or f"{output}.report.json")
        report_path.write_text(report.to_json(indent=2, sort_keys=True) + '\n', encoding='utf-8')
        self.stdout.write(self.style.SUCCESS(
            f"Removed {report.filters_removed} of {report.filters_before} filters "
            f"({report.fraction_removed:.2%}); FLOPs {report.flops_before} -> {report.flops_after}"
        ))
        return RunResult(artifact=output, inputs=[options['model']], outputs=[output, report_path])

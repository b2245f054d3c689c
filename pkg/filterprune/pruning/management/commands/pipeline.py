from pathlib import Path

from ...conf import pruning_settings
from ...engine import evaluate, train
from ...flops import flops_reduction, model_flops
from ...forms import PipelineForm
from ...pruner import prune
from ...storage import load, save
from ...sweep import auc, build_curve, plateau_threshold
from ..base import (PruningCommand, RunResult, add_sweep_arguments, add_training_arguments, split_training_data,
                    sweep_config, train_config, x_axis)


class Command(PruningCommand):
    help = ("Sweep thresholds, prune at the plateau threshold and retrain, for one or more rounds; "
            "writes the final model, per-round curves and reports, and a summary JSON.")
    form_class = PipelineForm

    def add_arguments(self, parser):
        add_sweep_arguments(parser)
        # --seed comes with the sweep arguments and seeds retraining too
        parser.add_argument('--epochs', type=int, help="retraining epochs per round")
        parser.add_argument('--learning-rate', type=float, help="SGD step size")
        parser.add_argument('--momentum', type=float, help="SGD momentum in [0, 1)")
        parser.add_argument('--batch-size', type=int, help="samples per update")
        parser.add_argument('--no-dropout', action='store_true', help="disable dropout layers while training")
        parser.add_argument('--criterion', required=True, help="criterion spec, e.g. std:rank")
        parser.add_argument('--output', required=True, help="CPMF file of the final model")
        parser.add_argument('--rounds', type=int, help="sweep/prune/retrain rounds (default 1)")
        parser.add_argument('--drop-tolerance', type=float, help="plateau tolerance")

    def run(self, options):
        model = load(options['model'])
        train_data, validation = split_training_data(options['data'])
        sweep = sweep_config(options, options['criterion'])
        training = train_config(options)
        subset = sweep.validation_subset(validation)
        tolerance = options['drop_tolerance']
        if tolerance is None:
            tolerance = pruning_settings()['SWEEP']['drop_tolerance']
        axis = x_axis(options)
        output = Path(options['output'])
        original_flops = model_flops(model).total
        baseline = evaluate(model, validation)
        outputs, rounds = [], []

        for number in range(1, (options['rounds'] or 1) + 1):
            curve = build_curve(model, subset, sweep)
            outputs.append(curve.to_csv(output.with_name(f"{output.name}.round{number}.curve.csv"), axis))
            sample = plateau_threshold(curve, tolerance)
            report = prune(model, sweep.prune_config(sample.threshold))
            report_path = output.with_name(f"{output.name}.round{number}.report.json")
            report_path.write_text(report.to_json(indent=2, sort_keys=True) + '\n', encoding='utf-8')
            outputs.append(report_path)
            history = train(model, train_data, training)
            metric = evaluate(model, validation)
            rounds.append({
                'round': number,
                'auc': auc(curve, axis),
                'threshold': sample.threshold,
                'fraction_pruned': report.fraction_removed,
                'filters_removed': report.filters_removed,
                'retrain_history': [epoch.to_dict() for epoch in history],
                'validation': metric.to_dict(),
            })
            self.stdout.write(
                f"Round {number}: threshold {sample.threshold:.6g}, pruned {report.fraction_removed:.2%}, "
                f"validation accuracy {metric.top1_accuracy:.4f}"
            )

        save(model, output)
        final_flops = model_flops(model).total
        summary = {
            'criterion': sweep.criterion.spec,
            'baseline_validation': baseline.to_dict(),
            'rounds': rounds,
            'flops_before': original_flops,
            'flops_after': final_flops,
            'flops_reduction': flops_reduction(original_flops, final_flops),
            'filters': {str(index): count for index, count in model.filter_counts().items()},
        }
        summary_path = output.with_name(f"{output.name}.summary.json")
        self.write_json(summary, summary_path)
        self.stdout.write(self.style.SUCCESS(f"Saved {output}"))
        return RunResult(artifact=output, inputs=[options['model']],
                         outputs=[output, *outputs, summary_path], seed=training.seed)

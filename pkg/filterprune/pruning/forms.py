"""
Option validation of the management commands.

Every command binds its parsed options to one of these forms; form errors
are usage errors (exit code 2).
"""

import math
from pathlib import Path

from django import forms

from .architectures import BUILTIN_PREFIX, builtin_layers
from .criteria import ApplicationMode, get_criterion
from .datasets import parse_dataset_spec
from .exceptions import KindError
from .pruner import parse_kinds
from .sweep import METRICS, X_AXES

MODE_CHOICES = [(mode.value, mode.value) for mode in ApplicationMode]
METRIC_CHOICES = [(metric, metric) for metric in METRICS]
X_AXIS_CHOICES = [(axis, axis) for axis in X_AXES]
SPLIT_CHOICES = [('train', 'train'), ('test', 'test')]


def _criterion(value):
    try:
        return get_criterion(value)
    except KindError as exc:
        raise forms.ValidationError(str(exc)) from exc


def _kinds(value):
    try:
        return parse_kinds(value or 'both')
    except ValueError as exc:
        raise forms.ValidationError(str(exc)) from exc


def _dataset(value):
    try:
        parse_dataset_spec(value)
    except ValueError as exc:
        raise forms.ValidationError(str(exc)) from exc
    return value


class TrainingOptionsForm(forms.Form):
    """
    SGD hyperparameters shared by train and pipeline.

    Fields left empty fall back to ``PRUNING['TRAIN']``.
    """

    epochs = forms.IntegerField(required=False, min_value=0)
    learning_rate = forms.FloatField(required=False, min_value=0.0)
    momentum = forms.FloatField(required=False, min_value=0.0)
    batch_size = forms.IntegerField(required=False, min_value=1)
    seed = forms.IntegerField(required=False, min_value=0)
    no_dropout = forms.BooleanField(required=False)

    def clean_momentum(self):
        momentum = self.cleaned_data['momentum']
        if momentum is not None and momentum >= 1.0:
            raise forms.ValidationError("momentum must be below 1")
        return momentum


class TrainForm(TrainingOptionsForm):
    """
    Options of ``train``.

    Fields:
    - arch: ``builtin:<A|B|C>`` or path of a JSON architecture spec
    - model: CPMF file to continue training instead of ``arch``
    - data: dataset spec (``mnist:<dir>`` or ``cifar10:<dir>``)
    - output: CPMF file to write
    - history: per-epoch CSV (defaults to ``<output>.history.csv``)
    """

    arch = forms.CharField(required=False)
    model = forms.CharField(required=False)
    data = forms.CharField()
    output = forms.CharField()
    history = forms.CharField(required=False)

    def clean_arch(self):
        arch = self.cleaned_data['arch']
        if arch.startswith(BUILTIN_PREFIX):
            try:
                builtin_layers(arch[len(BUILTIN_PREFIX):])
            except KindError as exc:
                raise forms.ValidationError(str(exc)) from exc
        return arch

    def clean_data(self):
        return _dataset(self.cleaned_data['data'])

    def clean(self):
        cleaned_data = super().clean()
        if bool(cleaned_data.get('arch')) == bool(cleaned_data.get('model')):
            raise forms.ValidationError("give exactly one of --arch and --model")
        if cleaned_data.get('model') and cleaned_data.get('output') and \
                Path(cleaned_data['model']).resolve() == Path(cleaned_data['output']).resolve():
            raise forms.ValidationError("--output must not overwrite the input model")
        return cleaned_data


class EvaluateForm(forms.Form):
    model = forms.CharField()
    data = forms.CharField()
    split = forms.ChoiceField(choices=SPLIT_CHOICES, required=False)
    batch_size = forms.IntegerField(required=False, min_value=1)
    output = forms.CharField(required=False)

    def clean_data(self):
        return _dataset(self.cleaned_data['data'])


class SweepOptionsForm(forms.Form):
    """
    Threshold sweep options shared by sweep, compare and pipeline.

    Fields left empty fall back to ``PRUNING['SWEEP']``.

    Methods:
        clean(): t_min and t_max come together and in increasing order
    """

    model = forms.CharField()
    data = forms.CharField()
    kinds = forms.CharField(required=False)
    mode = forms.ChoiceField(choices=MODE_CHOICES, required=False)
    max_gap = forms.FloatField(required=False, min_value=0.0)
    max_evals = forms.IntegerField(required=False, min_value=2)
    t_min = forms.FloatField(required=False)
    t_max = forms.FloatField(required=False)
    metric = forms.ChoiceField(choices=METRIC_CHOICES, required=False)
    per_class = forms.IntegerField(required=False, min_value=1)
    workers = forms.IntegerField(required=False, min_value=1)
    seed = forms.IntegerField(required=False, min_value=0)
    x_axis = forms.ChoiceField(choices=X_AXIS_CHOICES, required=False)

    def clean_data(self):
        return _dataset(self.cleaned_data['data'])

    def clean_kinds(self):
        return _kinds(self.cleaned_data['kinds'])

    def clean_max_gap(self):
        max_gap = self.cleaned_data['max_gap']
        if max_gap is not None and max_gap <= 0:
            raise forms.ValidationError("max-gap must be positive")
        return max_gap

    def clean(self):
        cleaned_data = super().clean()
        t_min, t_max = cleaned_data.get('t_min'), cleaned_data.get('t_max')
        if (t_min is None) != (t_max is None):
            raise forms.ValidationError("give both --t-min and --t-max or neither")
        if t_min is not None and not t_min < t_max:
            raise forms.ValidationError("--t-min must be below --t-max")
        return cleaned_data


class SweepForm(SweepOptionsForm):
    criterion = forms.CharField()
    output = forms.CharField()

    def clean_criterion(self):
        return _criterion(self.cleaned_data['criterion'])


class CompareForm(SweepOptionsForm):
    """
    Options of ``compare``.

    Fields:
    - criteria: comma separated criterion specs (criterion ranking)
    - layer_selection: compare conv / dense / both instead of criteria
    - criterion: criterion of the layer-selection comparison
    - drop_tolerance: plateau tolerance of the layer-selection comparison
    - output: JSON file of the table
    """

    criteria = forms.CharField(required=False)
    layer_selection = forms.BooleanField(required=False)
    criterion = forms.CharField(required=False)
    drop_tolerance = forms.FloatField(required=False, min_value=0.0)
    output = forms.CharField(required=False)

    def clean_criteria(self):
        value = self.cleaned_data['criteria'] or 'std,range,mean_abs,max_abs'
        criteria = [_criterion(part) for part in value.split(',') if part.strip()]
        if len({criterion.spec for criterion in criteria}) != len(criteria):
            raise forms.ValidationError("criteria must not repeat")
        return criteria

    def clean_criterion(self):
        return _criterion(self.cleaned_data['criterion'] or 'std')


class PruneForm(forms.Form):
    """
    Options of ``prune``.

    The threshold is parsed by hand so that ``-inf`` and ``inf`` are accepted.
    """

    model = forms.CharField()
    output = forms.CharField()
    criterion = forms.CharField()
    threshold = forms.CharField()
    kinds = forms.CharField(required=False)
    mode = forms.ChoiceField(choices=MODE_CHOICES, required=False)
    report = forms.CharField(required=False)
    prune_output_layer = forms.BooleanField(required=False)

    def clean_criterion(self):
        return _criterion(self.cleaned_data['criterion'])

    def clean_kinds(self):
        return _kinds(self.cleaned_data['kinds'])

    def clean_threshold(self):
        try:
            threshold = float(self.cleaned_data['threshold'])
        except ValueError as exc:
            raise forms.ValidationError("threshold must be a number, -inf or inf") from exc
        if math.isnan(threshold):
            raise forms.ValidationError("threshold must not be NaN")
        return threshold

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('model') and cleaned_data.get('output') and \
                Path(cleaned_data['model']).resolve() == Path(cleaned_data['output']).resolve():
            raise forms.ValidationError("--output must not overwrite the input model")
        return cleaned_data


class FlopsForm(forms.Form):
    model = forms.CharField()
    baseline = forms.CharField(required=False)
    output = forms.CharField(required=False)


class PipelineForm(SweepOptionsForm, TrainingOptionsForm):
    """
    Options of ``pipeline``: sweep, prune at the plateau threshold, retrain,
    repeated ``rounds`` times.
    """

    criterion = forms.CharField()
    output = forms.CharField()
    rounds = forms.IntegerField(required=False, min_value=1)
    drop_tolerance = forms.FloatField(required=False, min_value=0.0)

    def clean_criterion(self):
        return _criterion(self.cleaned_data['criterion'])

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('model') and cleaned_data.get('output') and \
                Path(cleaned_data['model']).resolve() == Path(cleaned_data['output']).resolve():
            raise forms.ValidationError("--output must not overwrite the input model")
        return cleaned_data

# path: src/qhj_app/forms.py
"""
Validation of ScenarioConfig JSON documents. Each nested section has its own
form; cross-field rules live in clean(). Any failure is raised as ConfigError
carrying the collected form errors.
"""
import dataclasses
import json
import logging
from pathlib import Path

from django import forms

from .fields import EQUATIONS, SCHEMES, FieldError, Grid, PhysicalConstants
from .solvers import (
    INITIAL_KINDS,
    POTENTIAL_KINDS,
    SOLVERS,
    ConfigError,
    InitialStateSpec,
    PotentialSpec,
    ScenarioConfig,
)
from .utils import get_setting

logger = logging.getLogger(__name__)


def _number_list(value, name, length=None, positive=False):
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise forms.ValidationError(f"{name} must be a list of numbers")
    if length is not None and len(value) != length:
        raise forms.ValidationError(f"{name} must have {length} entries, got {len(value)}")
    if positive and any(v <= 0 for v in value):
        raise forms.ValidationError(f"{name} entries must be positive")
    return [float(v) for v in value]


class GridForm(forms.Form):
    dim = forms.IntegerField(required=False, min_value=1, max_value=2)
    points = forms.JSONField()
    extent = forms.JSONField()

    def clean(self):
        cleaned_data = super().clean()
        points, extent = cleaned_data.get('points'), cleaned_data.get('extent')
        if points is None or extent is None:
            return cleaned_data
        if not isinstance(points, list) or not isinstance(extent, list):
            raise forms.ValidationError("points and extent must be lists")
        dim = cleaned_data.get('dim') or len(points)
        if len(points) != dim:
            raise forms.ValidationError(f"Grid dim {dim} does not match {len(points)} point counts")
        try:
            cleaned_data['grid'] = Grid(tuple(points), tuple(tuple(e) for e in extent))
        except (FieldError, TypeError, ValueError) as exc:
            raise forms.ValidationError(str(exc))
        return cleaned_data


class ConstantsForm(forms.Form):
    hbar = forms.FloatField(required=False)
    m = forms.FloatField(required=False)
    m0 = forms.FloatField(required=False)
    c_light = forms.FloatField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        try:
            cleaned_data['constants'] = PhysicalConstants.from_settings(
                **{name: cleaned_data.get(name) for name in ('hbar', 'm', 'm0', 'c_light')}
            )
        except FieldError as exc:
            raise forms.ValidationError(str(exc))
        return cleaned_data


class PotentialForm(forms.Form):
    kind = forms.ChoiceField(choices=[(k, k) for k in POTENTIAL_KINDS])
    omega = forms.FloatField(required=False)
    values = forms.JSONField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        kind = cleaned_data.get('kind')
        omega = cleaned_data.get('omega')
        if kind == 'harmonic' and (omega is None or omega <= 0):
            raise forms.ValidationError("A harmonic potential needs omega > 0")
        values = None
        if kind == 'custom':
            values = tuple(_number_list(cleaned_data.get('values'), 'Custom potential values'))
        if kind:
            cleaned_data['potential'] = PotentialSpec(kind, omega if omega is not None else 1.0, values)
        return cleaned_data


class InitialStateForm(forms.Form):
    kind = forms.ChoiceField(choices=[(k, k) for k in INITIAL_KINDS])
    params = forms.JSONField(required=False)
    real = forms.JSONField(required=False)
    imag = forms.JSONField(required=False)
    dt_real = forms.JSONField(required=False)
    dt_imag = forms.JSONField(required=False)

    def _complex_samples(self, real_name, imag_name, required):
        real, imag = self.cleaned_data.get(real_name), self.cleaned_data.get(imag_name)
        if real is None and imag is None and not required:
            return None
        real = _number_list(real, real_name)
        imag = _number_list(imag, imag_name, length=len(real))
        return tuple(complex(r, i) for r, i in zip(real, imag))

    def clean(self):
        cleaned_data = super().clean()
        kind = cleaned_data.get('kind')
        params = cleaned_data.get('params') or {}
        if not isinstance(params, dict):
            raise forms.ValidationError("params must be an object")
        if kind == 'free-gaussian':
            sigma0 = params.get('sigma0', 1.0)
            for value in sigma0 if isinstance(sigma0, list) else [sigma0]:
                if not isinstance(value, (int, float)) or value <= 0:
                    raise forms.ValidationError("free-gaussian needs sigma0 > 0")
        if kind in ('harmonic-ground', 'harmonic-coherent'):
            omega = params.get('omega', 1.0)
            for value in omega if isinstance(omega, list) else [omega]:
                if not isinstance(value, (int, float)) or value <= 0:
                    raise forms.ValidationError(f"{kind} needs omega > 0")
        if kind is None:
            return cleaned_data
        values = derivative = None
        if kind == 'sampled':
            values = self._complex_samples('real', 'imag', required=True)
            derivative = self._complex_samples('dt_real', 'dt_imag', required=False)
        cleaned_data['initial_state'] = InitialStateSpec(kind, params, values, derivative)
        return cleaned_data


class ScenarioForm(forms.Form):
    name = forms.CharField(required=False)
    description = forms.CharField(required=False)
    solver = forms.ChoiceField(choices=[(s, s) for s in SOLVERS], required=False)
    dt = forms.FloatField()
    steps = forms.IntegerField(min_value=1)
    output_stride = forms.IntegerField(min_value=1, required=False)
    scheme = forms.ChoiceField(choices=[(s, s) for s in SCHEMES], required=False)
    mask_threshold = forms.FloatField(required=False)
    checks = forms.JSONField(required=False)
    vector_potential = forms.JSONField(required=False)

    def clean_dt(self):
        dt = self.cleaned_data['dt']
        if not dt > 0:
            raise forms.ValidationError("dt must be positive")
        return dt

    def clean_mask_threshold(self):
        threshold = self.cleaned_data.get('mask_threshold')
        if threshold is not None and not 0 <= threshold < 1:
            raise forms.ValidationError("mask_threshold must lie in [0, 1)")
        return threshold

    def clean_checks(self):
        checks = self.cleaned_data.get('checks') or {}
        if not isinstance(checks, dict):
            raise forms.ValidationError("checks must map equation ids to tolerances")
        for equation, tolerance in checks.items():
            if equation not in EQUATIONS:
                raise forms.ValidationError(f"Unknown equation '{equation}' in checks")
            if not isinstance(tolerance, (int, float)) or tolerance <= 0:
                raise forms.ValidationError(f"Tolerance for '{equation}' must be positive")
        return {k: float(v) for k, v in checks.items()}

    def clean(self):
        cleaned_data = super().clean()
        steps = cleaned_data.get('steps')
        stride = cleaned_data.get('output_stride') or get_setting('QHJ_OUTPUT_STRIDE', 10)
        if steps is not None and steps % stride:
            raise forms.ValidationError(f"steps ({steps}) must be a multiple of output_stride ({stride})")
        cleaned_data['output_stride'] = stride
        return cleaned_data


def _section(form_class, data, name, errors):
    if not isinstance(data, dict):
        errors[name] = [f"Section '{name}' must be an object"]
        return None
    form = form_class(data)
    if not form.is_valid():
        errors[name] = form.errors.get_json_data()
        return None
    return form.cleaned_data


def scenario_from_dict(data):
    """Validate a ScenarioConfig document and build the config."""
    if not isinstance(data, dict):
        raise ConfigError("Scenario must be a JSON object")
    errors = {}
    grid = _section(GridForm, data.get('grid'), 'grid', errors)
    constants = _section(ConstantsForm, data.get('constants', {}), 'constants', errors)
    potential = _section(PotentialForm, data.get('potential', {'kind': 'free'}), 'potential', errors)
    initial = _section(InitialStateForm, data.get('initial_state'), 'initial_state', errors)
    top = _section(ScenarioForm, {k: v for k, v in data.items() if k in ScenarioForm.base_fields}, 'scenario', errors)
    if errors:
        raise ConfigError(f"Invalid scenario: {json.dumps(errors, sort_keys=True)}", errors)

    grid = grid['grid']
    size = grid.points[0] * (grid.points[1] if grid.dim == 2 else 1)
    vector_potential = top.get('vector_potential')
    if vector_potential is not None:
        if not isinstance(vector_potential, list) or len(vector_potential) != grid.dim:
            raise ConfigError(f"vector_potential needs {grid.dim} components")
        try:
            vector_potential = tuple(tuple(_number_list(c, 'vector_potential component', size)) for c in vector_potential)
        except forms.ValidationError as exc:
            raise ConfigError(f"Invalid vector_potential: {' '.join(exc.messages)}")
    for name, samples in (('initial_state', initial['initial_state'].values), ('potential', potential['potential'].values)):
        if samples is not None and len(samples) != size:
            raise ConfigError(f"{name} has {len(samples)} samples, the grid has {size} points")

    config = ScenarioConfig(
        grid=grid,
        constants=constants['constants'],
        potential=potential['potential'],
        initial_state=initial['initial_state'],
        dt=top['dt'],
        steps=top['steps'],
        output_stride=top['output_stride'],
        solver=top.get('solver') or 'tdse',
        scheme=top.get('scheme') or get_setting('QHJ_DERIVATIVE_SCHEME', 'spectral'),
        mask_threshold=top['mask_threshold'] if top.get('mask_threshold') is not None else get_setting('QHJ_MASK_THRESHOLD', 1e-6),
        checks=top.get('checks') or {},
        name=top.get('name') or '',
        description=top.get('description') or '',
        vector_potential=vector_potential,
    )
    if config.solver == 'kg' and config.initial_state.kind not in ('kg-plane-wave', 'sampled'):
        raise ConfigError(f"Klein-Gordon scenarios need a kg-plane-wave or sampled initial state, got '{config.initial_state.kind}'")
    if config.solver == 'tdse' and config.initial_state.kind == 'kg-plane-wave':
        raise ConfigError("kg-plane-wave is a Klein-Gordon initial state")
    return config


def load_scenario(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ConfigError(f"Cannot read scenario {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Scenario {path} is not valid JSON: {exc}")
    config = scenario_from_dict(data)
    if not config.name:
        config = dataclasses.replace(config, name=path.stem)
    logger.info(f"Loaded scenario '{config.name}' ({config.solver}, grid {config.grid.points}, {config.steps} steps)")
    return config

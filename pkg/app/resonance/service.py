from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigurationError, NumericalError, ValidationError

from . import asymptotics, kernels, storage
from .eigenbasis import load_custom_shape, orthonormality_defect
from .field import aperture_mismatch, axis_profile, enhancement_exponents, field_sample, solve_incident
from .kernels import GramSet, GramSettings, build_gram_set, cross_gram
from .matching import assemble_full_system, smallest_singular_value, truncation_report
from .models import (
    Hole,
    HoleShape,
    SearchBox,
    SlabConfig,
    SweepRow,
    complex_to_list,
    fabry_perot_order,
)
from .solver import (
    count_roots_in_disk,
    expand_parities,
    find_resonances,
    resonance_sweep,
    rouche_disk,
    truncation_shift,
)


LOGGER = logging.getLogger(__name__)
SCHEMA_VERSION = 1
COMMANDS = ('eigen', 'gram', 'det', 'solve', 'asym', 'field', 'sweep', 'verify')
REGIME_LIMIT = 0.2
SEPARATION_FACTOR = 10.0
SHAPE_DIAMETERS = {'square': math.sqrt(2.0), 'disk': 2.0 / math.sqrt(math.pi)}


@dataclass
class RunConfig:
    command: str = 'solve'
    l: float = 1.0
    h: float = 0.01
    holes: Tuple[Dict[str, Any], ...] = ({'center': [0.0, 0.0], 'shape': 'square'},)
    M: Optional[int] = None
    parity: str = 'even'
    m_range: Tuple[int, int] = (1, 1)
    quad_order: Optional[int] = None
    quad_levels: Optional[int] = None
    tol_quad: Optional[float] = None
    threads: Optional[int] = None
    box: Dict[str, float] = field(default_factory=lambda: SearchBox().to_dict())
    h_values: Tuple[float, ...] = ()
    k0: Optional[float] = None
    points: Tuple[Tuple[float, float, float], ...] = ()
    k_grid: Optional[Dict[str, List[float]]] = None
    M_list: Tuple[int, ...] = ()
    profile: Optional[str] = None
    json_out: Optional[str] = None
    csv_out: Optional[str] = None

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any], defaults: Optional[Mapping[str, Any]] = None) -> 'RunConfig':
        if not isinstance(payload, Mapping):
            raise ConfigurationError('Configuration must be a JSON object', field='config')
        known = {item.name for item in fields(cls)}
        for key in payload:
            if key not in known:
                raise ConfigurationError(f'Unknown configuration key: {key}', field=key)
        values: Dict[str, Any] = {}
        for key, value in payload.items():
            if value is None:
                continue
            values[key] = _coerce(key, value)
        config = cls(**values)
        config.apply_defaults(defaults or {})
        config.validate()
        return config

    def apply_defaults(self, defaults: Mapping[str, Any]) -> None:
        if self.M is None:
            self.M = int(defaults.get('SLABRES_MODES', 20))
        if self.quad_order is None:
            self.quad_order = int(defaults.get('SLABRES_QUAD_ORDER', 12))
        if self.quad_levels is None:
            self.quad_levels = int(defaults.get('SLABRES_QUAD_LEVELS', 3))
        if self.tol_quad is None:
            self.tol_quad = float(defaults.get('SLABRES_TOL_QUAD', 1e-6))
        if self.threads is None:
            self.threads = int(defaults.get('SLABRES_THREADS') or os.cpu_count() or 1)

    def validate(self) -> None:
        _require(self.command in COMMANDS, 'command', f'must be one of {", ".join(COMMANDS)}')
        _require(self.l > 0, 'l', 'must be positive')
        _require(0 < self.h < REGIME_LIMIT, 'h', f'must satisfy 0 < h < {REGIME_LIMIT}')
        _require(self.M >= 1, 'M', 'must be at least 1')
        _require(self.parity in ('even', 'odd', 'both'), 'parity', 'must be even, odd or both')
        _require(len(self.holes) >= 1, 'holes', 'must list at least one hole')
        for hole in self.holes:
            _require(isinstance(hole, Mapping) and set(hole) <= {'center', 'shape'}, 'holes',
                     'entries take only center and shape')
            center = hole.get('center')
            _require(isinstance(center, (list, tuple)) and len(center) == 2, 'holes', 'center must be [x, y]')
            shape = hole.get('shape', 'square')
            _require(isinstance(shape, (str, Mapping)), 'holes', 'shape must be a name or a table')
        lo, hi = self.m_range
        _require(1 <= lo <= hi, 'm_range', 'must be [lo, hi] with 1 <= lo <= hi')
        _require(hi * self.h < REGIME_LIMIT, 'm_range', f'needs m h < {REGIME_LIMIT}')
        _require(self.quad_order >= 1, 'quad_order', 'must be at least 1')
        _require(self.quad_levels >= 0, 'quad_levels', 'must be non-negative')
        _require(self.tol_quad > 0, 'tol_quad', 'must be positive')
        _require(self.threads >= 1, 'threads', 'must be at least 1')
        box = self.search_box()
        _require(box.eps0 > 0 and box.K > box.eps0 and box.im_depth > 0, 'box', 'needs 0 < eps0 < K and im_depth > 0')
        for value in self.h_values:
            _require(0 < value < REGIME_LIMIT, 'h_values', f'entries must satisfy 0 < h < {REGIME_LIMIT}')
        if self.k0 is not None:
            _require(box.eps0 < self.k0 < box.K, 'k0', 'must lie inside (eps0, K)')
        for point in self.points:
            _require(len(point) == 3, 'points', 'entries must be [x1, x2, x3]')
        if self.k_grid is not None:
            for axis in ('re', 'im'):
                spec = self.k_grid.get(axis)
                _require(isinstance(spec, (list, tuple)) and len(spec) == 3 and int(spec[2]) >= 1, 'k_grid',
                         f'{axis} must be [lo, hi, count]')
        _require(list(self.M_list) == sorted(self.M_list) and all(value >= 1 for value in self.M_list),
                 'M_list', 'must ascend from 1')
        _require(self.profile in (None, 'axis'), 'profile', 'only "axis" is supported')
        self._validate_separation()

    def _validate_separation(self) -> None:
        centers = [tuple(float(value) for value in hole['center']) for hole in self.holes]
        diameters = [SHAPE_DIAMETERS.get(_shape_name(hole.get('shape', 'square')), 0.0) for hole in self.holes]
        limit = SEPARATION_FACTOR * max((self.h, *self.h_values)) * max(diameters)
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                distance = math.hypot(centers[i][0] - centers[j][0], centers[i][1] - centers[j][1])
                _require(distance > limit, 'holes',
                         f'holes {i + 1} and {j + 1} are {distance:.6g} apart, need > {limit:.6g}')

    def search_box(self) -> SearchBox:
        return SearchBox.from_dict(self.box)

    def parities(self) -> Tuple[str, ...]:
        return expand_parities(self.parity)

    def m_values(self) -> List[int]:
        return list(range(self.m_range[0], self.m_range[1] + 1))

    def slab_config(self, h: Optional[float] = None, parity: Optional[str] = None) -> SlabConfig:
        holes = tuple(
            Hole(center=(float(hole['center'][0]), float(hole['center'][1])), shape=_parse_shape(hole.get('shape', 'square')))
            for hole in self.holes
        )
        return SlabConfig(
            l=self.l,
            h=self.h if h is None else h,
            holes=holes,
            M=self.M,
            parity=parity or self.parities()[0],
            box=self.search_box(),
        )

    def gram_settings(self, defaults: Optional[Mapping[str, Any]] = None) -> GramSettings:
        defaults = defaults or {}
        return GramSettings(
            quad_order=self.quad_order,
            quad_levels=self.quad_levels,
            tol_quad=self.tol_quad,
            taylor_terms=int(defaults.get('SLABRES_TAYLOR_TERMS', kernels.DEFAULT_TAYLOR_TERMS)),
            cache_dir=defaults.get('SLABRES_CACHE_DIR'),
        )

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['holes'] = [dict(hole) for hole in self.holes]
        payload['m_range'] = list(self.m_range)
        payload['h_values'] = list(self.h_values)
        payload['points'] = [list(point) for point in self.points]
        payload['M_list'] = list(self.M_list)
        return payload


@dataclass
class ResultDocument:
    command: str
    config: Dict[str, Any]
    payload: Dict[str, Any]
    gram_keys: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    csv_header: Optional[Sequence[str]] = None
    csv_rows: List[List[Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema_version': self.schema_version,
            'command': self.command,
            'config': self.config,
            'gram_keys': sorted(set(self.gram_keys)),
            'payload': self.payload,
            'timings': self.timings,
        }


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    defaults: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    payload: Dict[str, Any] = {}
    if path:
        document = storage.load_document(path)
        if document is None:
            raise ConfigurationError(f'Cannot read configuration file {path}', field='config')
        payload.update(document)
    for key, value in (overrides or {}).items():
        if value is not None and value != ():
            payload[key] = value
    return RunConfig.from_dict(payload, defaults)


def run_command(run_config: RunConfig, defaults: Optional[Mapping[str, Any]] = None) -> ResultDocument:
    drivers: Dict[str, Callable[[RunConfig, GramSettings], ResultDocument]] = {
        'eigen': run_eigen,
        'gram': run_gram,
        'det': run_det,
        'solve': run_solve,
        'asym': run_asym,
        'field': run_field,
        'sweep': run_sweep,
        'verify': run_verify,
    }
    settings = run_config.gram_settings(defaults)
    start_time = time.perf_counter()
    document = drivers[run_config.command](run_config, settings)
    document.timings['total'] = time.perf_counter() - start_time
    LOGGER.info('slabres command=%s timing total=%.3fs', run_config.command, document.timings['total'])
    return document


def run_eigen(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    slab = run_config.slab_config()
    bases = kernels.hole_bases(slab, settings)
    payload = {
        'holes': [
            dict(basis.to_dict(), orthonormality_defect=orthonormality_defect(basis))
            for basis in bases
        ],
    }
    return _document(run_config, payload)


def run_gram(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    slab = run_config.slab_config()
    grams = build_gram_set(slab, settings)
    holes = []
    for single in grams.singles:
        s0 = single.s0
        constants = asymptotics.alpha_constant(single.basis, single, min(slab.M, single.mode_count)) \
            if single.mode_count >= 2 else None
        holes.append({
            'shape': single.basis.shape.to_dict(),
            'key': single.key,
            'estimate': single.estimate,
            's0_00': float(s0[0, 0]),
            's0_min_eigenvalue': float(np.linalg.eigvalsh(s0).min()),
            's0': s0.tolist(),
            'constants': None if constants is None else constants.to_dict(),
        })
    payload: Dict[str, Any] = {'holes': holes}
    if run_config.M_list:
        k = complex(fabry_perot_order(run_config.m_range[0], slab.parity) * math.pi / slab.l)
        payload['truncation'] = truncation_report(slab, grams, k, run_config.M_list)
    return _document(run_config, payload, grams.keys)


def run_det(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    """det(reduced) on a grid of complex k."""
    slab = run_config.slab_config()
    grams = build_gram_set(slab, settings)
    grid = run_config.k_grid or _default_grid(slab, run_config.m_range[0])
    re_values = np.linspace(*_grid_axis(grid['re']))
    im_values = np.linspace(*_grid_axis(grid['im']))
    rows = []
    for re_k in re_values:
        for im_k in im_values:
            system = assemble_full_system(slab, grams, complex(re_k, im_k))
            sigma = smallest_singular_value(system)
            rows.append([repr(float(re_k)), repr(float(im_k)), repr(abs(system.determinant)),
                         repr(math.log10(sigma) if sigma > 0 else -math.inf)])
    payload = {'parity': slab.parity, 'points': len(rows)}
    return _document(run_config, payload, grams.keys,
                     csv_header=('re_k', 'im_k', 'abs_det', 'log10_sigma_min'), csv_rows=rows)


def run_solve(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    slab = run_config.slab_config()
    grams = build_gram_set(slab, settings)
    constants = asymptotics.shape_constants(grams, slab.M)
    resonances = find_resonances(
        slab, grams, run_config.m_values(), run_config.parities(), constants, run_config.threads,
    )
    resonances = [replace(item, truncation_shift=truncation_shift(slab, grams, item)) for item in resonances]
    payload = {'resonances': [resonance.to_dict() for resonance in resonances]}
    rows = [
        [resonance.parity, resonance.m, resonance.order, resonance.branch, repr(resonance.k.real),
         repr(resonance.k.imag), repr(resonance.Q), repr(resonance.residual), repr(resonance.truncation_shift)]
        for resonance in resonances
    ]
    return _document(run_config, payload, grams.keys,
                     csv_header=('parity', 'm', 'order', 'branch', 're_k', 'im_k', 'Q', 'residual', 'truncation_shift'),
                     csv_rows=rows)


def run_asym(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    slab = run_config.slab_config()
    grams = build_gram_set(slab, settings)
    constants = asymptotics.shape_constants(grams, slab.M)
    predictions = []
    for parity in run_config.parities():
        for m in run_config.m_values():
            for prediction in asymptotics.multi_hole_asymptotic(constants, slab.centers, slab.l, slab.h, m, parity):
                entry = prediction.to_dict()
                entry.update({'m': m, 'parity': parity, 'order': fabry_perot_order(m, parity)})
                predictions.append(entry)
    payload = {
        'constants': [item.to_dict() for item in constants],
        'predictions': predictions,
    }
    return _document(run_config, payload, grams.keys)


def run_field(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    slab = run_config.slab_config()
    if run_config.h_values:
        result = enhancement_exponents(slab, run_config.h_values, run_config.m_range[0], settings, slab.parity)
        rows = [[repr(row['h']), repr(row['k0']), repr(row['b0']), repr(row['interior']),
                 repr(row['near_aperture']), repr(row['control_b0']), repr(row['control_interior'])]
                for row in result['rows']]
        return _document(run_config, result, csv_header=(
            'h', 'k0', 'b0', 'interior', 'near_aperture', 'control_b0', 'control_interior'), csv_rows=rows)

    grams = build_gram_set(slab, settings)
    k0 = run_config.k0
    if k0 is None:
        constants = asymptotics.shape_constants(grams, slab.M)
        k0 = asymptotics.multi_hole_asymptotic(
            constants, slab.centers, slab.l, slab.h, run_config.m_range[0], slab.parity,
        )[0].k.real
    solutions = [
        solve_incident(run_config.slab_config(parity=parity), grams, k0, parity)
        for parity in run_config.parities()
    ]
    samples = []
    for point in run_config.points:
        parts = [field_sample(solution, slab, point) for solution in solutions]
        value = sum(part.value for part in parts)
        samples.append({
            'point': list(point),
            'value': complex_to_list(value),
            'abs': abs(value),
            'tail_bound': sum(part.tail_bound for part in parts),
            'hole': parts[0].hole,
        })
    payload: Dict[str, Any] = {
        'k0': k0,
        'solutions': [solution.to_dict() for solution in solutions],
        'samples': samples,
        'aperture_mismatch': aperture_mismatch(slab, grams, solutions),
    }
    csv_header = None
    rows: List[List[Any]] = []
    if run_config.profile == 'axis':
        csv_header = ('x3', 'abs_u')
        rows = [[repr(x3), repr(value)] for x3, value in axis_profile(solutions, slab)]
    return _document(run_config, payload, grams.keys, csv_header=csv_header, csv_rows=rows)


def run_sweep(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    slab = run_config.slab_config()
    h_values = list(run_config.h_values) or [run_config.h]
    rows = resonance_sweep(slab, h_values, run_config.m_values(), run_config.parities(), settings,
                           run_config.threads)
    payload = {'rows': [row.to_dict() for row in rows]}
    return _document(run_config, payload, csv_header=SweepRow.CSV_HEADER, csv_rows=[row.csv_row() for row in rows])


def run_verify(run_config: RunConfig, settings: GramSettings) -> ResultDocument:
    checks = verify(run_config, settings)
    payload = {
        'passed': all(check.passed for check in checks),
        'checks': [check.to_dict() for check in checks],
    }
    return _document(run_config, payload)


def verify(run_config: RunConfig, settings: GramSettings) -> List[CheckResult]:
    """Structural invariants of every stage; each check records failure instead of raising."""
    state: Dict[str, Any] = {}
    checks: List[CheckResult] = []
    for name, check in VERIFY_CHECKS:
        start_time = time.perf_counter()
        try:
            passed, detail = check(run_config, settings, state)
        except (NumericalError, ValidationError, np.linalg.LinAlgError) as exc:
            passed, detail = False, {'error': f'{type(exc).__name__}: {exc}'}
        detail['seconds'] = round(time.perf_counter() - start_time, 3)
        checks.append(CheckResult(name=name, passed=bool(passed), detail=detail))
        LOGGER.info('slabres verify check=%s passed=%s', name, passed)
    return checks


def write_outputs(document: ResultDocument, json_out: Optional[str], csv_out: Optional[str]) -> None:
    if json_out:
        storage.save_document(json_out, document.to_dict())
    if csv_out and document.csv_header is not None:
        storage.save_csv(csv_out, document.csv_header, document.csv_rows)


def _check_orthonormality(run_config, settings, state):
    slab = run_config.slab_config()
    bases = kernels.hole_bases(slab, settings)
    state['bases'] = bases
    defects = [orthonormality_defect(basis) for basis in bases]
    return max(defects) < 1e-8, {'defects': defects}


def _grams(run_config, settings, state) -> GramSet:
    if 'grams' not in state:
        slab = run_config.slab_config()
        state['grams'] = build_gram_set(slab, settings, state.get('bases'))
    return state['grams']


def _check_s0(run_config, settings, state):
    grams = _grams(run_config, settings, state)
    detail = {'asymmetry': [], 'min_eigenvalue': [], 'estimate': []}
    passed = True
    for single in grams.singles:
        s0 = single.s0
        asymmetry = float(np.max(np.abs(s0 - s0.T)))
        smallest = float(np.linalg.eigvalsh(s0).min())
        detail['asymmetry'].append(asymmetry)
        detail['min_eigenvalue'].append(smallest)
        detail['estimate'].append(single.estimate)
        passed = passed and asymmetry <= 1e-14 * float(np.max(np.abs(s0))) and smallest > 0
    return passed, detail


def _check_symmetry(run_config, settings, state):
    grams = _grams(run_config, settings, state)
    slab = run_config.slab_config()
    k = complex(fabry_perot_order(run_config.m_range[0], slab.parity) * math.pi / slab.l, -1e-3)
    worst = 0.0
    for j in range(grams.hole_count):
        d = grams.d(j, k * slab.h)
        worst = max(worst, float(np.max(np.abs(d - d.T))) / float(np.max(np.abs(d))))
    reciprocity = 0.0
    if grams.hole_count > 1:
        layout = grams.layout
        first = grams.singles[0].basis
        second = grams.singles[1].basis
        forward = cross_gram(layout, first, second, 0, 1, k)
        backward = cross_gram(layout, second, first, 1, 0, k)
        reciprocity = float(np.max(np.abs(forward - backward.T))) / float(np.max(np.abs(forward)))
    return worst <= 1e-12 and reciprocity <= 1e-12, {'d_asymmetry': worst, 'cross_reciprocity': reciprocity}


def _check_alpha(run_config, settings, state):
    grams = _grams(run_config, settings, state)
    slab = run_config.slab_config()
    constants = asymptotics.shape_constants(grams, slab.M)
    state['constants'] = constants
    single = grams.singles[0]
    witnesses = asymptotics.alpha_witnesses(single.basis, single.s0, min(slab.M, single.mode_count))
    passed = all(item.alpha >= 0 for item in constants) and all(value > 0 for value in witnesses)
    return passed, {'alpha': [item.alpha for item in constants], 'witnesses': witnesses}


def _check_resonances(run_config, settings, state):
    grams = _grams(run_config, settings, state)
    slab = run_config.slab_config()
    constants = state.get('constants') or asymptotics.shape_constants(grams, slab.M)
    resonances = find_resonances(slab, grams, run_config.m_values(), run_config.parities(), constants,
                                 run_config.threads)
    state['resonances'] = resonances
    counts = []
    passed = len(resonances) == slab.N * len(run_config.m_values()) * len(run_config.parities())
    for parity in run_config.parities():
        for m in run_config.m_values():
            center, radius = rouche_disk(slab, m, parity)
            count = count_roots_in_disk(slab, grams, center, radius, parity)
            counts.append({'parity': parity, 'm': m, 'count': count})
            passed = passed and count == slab.N
    for resonance in resonances:
        order = resonance.order
        passed = passed and resonance.k.imag < 0 and \
            abs(resonance.k * slab.l - order * math.pi) <= math.sqrt(slab.h) and resonance.residual < 1e-10
    return passed, {'counts': counts, 'resonances': [item.to_dict() for item in resonances]}


def _check_schur(run_config, settings, state):
    grams = _grams(run_config, settings, state)
    slab = run_config.slab_config()
    ratios = []
    for resonance in state.get('resonances', []):
        at_root = assemble_full_system(slab, grams, resonance.k, resonance.parity)
        away = assemble_full_system(slab, grams, (resonance.order + 0.5) * math.pi / slab.l - 1e-3j, resonance.parity)
        ratios.append(smallest_singular_value(at_root) / smallest_singular_value(away))
    return bool(ratios) and max(ratios) < 1e-8, {'sigma_ratio': ratios}


def _check_rescaling(run_config, settings, state):
    resonances = state.get('resonances') or []
    if not resonances:
        return False, {'error': 'no resonances to rescale'}
    scale = 2.0
    scaled = replace(
        run_config,
        l=run_config.l * scale,
        h=run_config.h * scale,
        holes=tuple({'center': [value * scale for value in hole['center']], 'shape': hole.get('shape', 'square')}
                    for hole in run_config.holes),
        m_range=(resonances[0].m, resonances[0].m),
        parity=resonances[0].parity,
    )
    if scaled.h >= REGIME_LIMIT:
        return False, {'error': 'rescaled h leaves the regime'}
    slab = scaled.slab_config()
    grams = build_gram_set(slab, settings)
    constants = asymptotics.shape_constants(grams, slab.M)
    rescaled = find_resonances(slab, grams, [resonances[0].m], [resonances[0].parity], constants)
    reference = [item for item in resonances if item.m == resonances[0].m and item.parity == resonances[0].parity]
    errors = [abs(item.k * scale - ref.k) / abs(ref.k) for item, ref in zip(rescaled, reference)]
    return bool(errors) and max(errors) <= 1e-10, {'relative_error': errors, 'scale': scale}


def _check_asymptotics(run_config, settings, state):
    slab = run_config.slab_config()
    parity = run_config.parities()[0]
    m = run_config.m_range[0]
    if slab.N == 1:
        h_values = [run_config.h, run_config.h / 2.0, run_config.h / 4.0]
        rows = resonance_sweep(slab, h_values, [m], [parity], settings)
        ratios = [row.error_ratio for row in rows if row.error_ratio is not None]
        passed = bool(ratios) and all(5.0 <= ratio <= 12.0 for ratio in ratios)
        return passed, {'errors': [row.error for row in rows], 'error_ratios': ratios}
    resonances = [item for item in state.get('resonances', []) if item.m == m and item.parity == parity]
    grams = _grams(run_config, settings, state)
    constants = state.get('constants') or asymptotics.shape_constants(grams, slab.M)
    predictions = asymptotics.multi_hole_asymptotic(constants, slab.centers, slab.l, slab.h, m, parity)
    direct = [item.k for item in resonances]
    predicted = [item.k for item in predictions]
    direct_split = max(direct, key=lambda k: k.real) - min(direct, key=lambda k: k.real) if len(direct) > 1 else 0.0
    predicted_split = max(predicted, key=lambda k: k.real) - min(predicted, key=lambda k: k.real)
    mismatch = abs(abs(direct_split) - abs(predicted_split)) / max(abs(predicted_split), 1e-300)
    return len(direct) == slab.N and mismatch <= 0.2, {
        'direct_splitting': abs(direct_split),
        'predicted_splitting': abs(predicted_split),
        'relative_mismatch': mismatch,
    }


def _check_determinism(run_config, settings, state):
    first = run_solve(replace(run_config, command='solve'), settings).to_dict()['payload']
    # the second run must rebuild every table, not reuse the first one's
    kernels.clear_memo()
    second = run_solve(replace(run_config, command='solve'), replace(settings, cache_dir=None)).to_dict()['payload']
    return first == second, {'resonances': len(first['resonances']), 'rebuilt_tables': True}


VERIFY_CHECKS = (
    ('orthonormality', _check_orthonormality),
    ('s0_symmetric_positive', _check_s0),
    ('complex_symmetry', _check_symmetry),
    ('alpha_positive', _check_alpha),
    ('resonances_and_counts', _check_resonances),
    ('schur_equivalence', _check_schur),
    ('rescaling', _check_rescaling),
    ('asymptotic_agreement', _check_asymptotics),
    ('determinism', _check_determinism),
)


def _document(run_config: RunConfig, payload: Dict[str, Any], gram_keys: Sequence[str] = (),
              csv_header: Optional[Sequence[str]] = None, csv_rows: Optional[List[List[Any]]] = None) -> ResultDocument:
    return ResultDocument(
        command=run_config.command,
        config=run_config.to_dict(),
        payload=payload,
        gram_keys=list(gram_keys),
        csv_header=csv_header,
        csv_rows=csv_rows or [],
    )


def _default_grid(slab: SlabConfig, m: int) -> Dict[str, List[float]]:
    center, radius = rouche_disk(slab, m, slab.parity)
    return {
        're': [center.real - radius, center.real + radius, 21],
        'im': [-radius, -radius / 100.0, 11],
    }


def _grid_axis(spec: Sequence[float]) -> Tuple[float, float, int]:
    return float(spec[0]), float(spec[1]), int(spec[2])


def _shape_name(shape: Any) -> str:
    if isinstance(shape, Mapping):
        return str(shape.get('kind', 'custom'))
    return str(shape)


def _parse_shape(shape: Any) -> HoleShape:
    if isinstance(shape, Mapping):
        if 'source' in shape and 'table' not in shape:
            return load_custom_shape(shape['source'])
        return HoleShape.from_dict(shape)
    if shape in ('square', 'disk'):
        return HoleShape(kind=shape)
    return load_custom_shape(str(shape))


def _require(condition: bool, name: str, message: str) -> None:
    if not condition:
        raise ConfigurationError(f'{name}: {message}', field=name)


def _coerce(key: str, value: Any) -> Any:
    try:
        if key in ('l', 'h', 'tol_quad', 'k0'):
            return float(value)
        if key in ('M', 'quad_order', 'quad_levels', 'threads'):
            if isinstance(value, bool) or int(value) != float(value):
                raise ValueError(value)
            return int(value)
        if key == 'm_range':
            if isinstance(value, (int, float)):
                return (int(value), int(value))
            lo, hi = value
            return (int(lo), int(hi))
        if key == 'holes':
            return tuple(value)
        if key == 'h_values':
            return tuple(float(item) for item in value)
        if key == 'M_list':
            return tuple(int(item) for item in value)
        if key == 'points':
            return tuple(tuple(float(item) for item in point) for point in value)
        if key == 'box':
            return dict(value)
        if key == 'k_grid':
            return {axis: list(spec) for axis, spec in dict(value).items()}
        if key in ('command', 'parity', 'profile', 'json_out', 'csv_out'):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f'{key}: cannot interpret {value!r}', field=key) from exc
    return value

"""Forced problem under a normally incident plane wave and the field in the holes."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigurationError, DomainError

from . import asymptotics
from .kernels import GramSet, GramSettings, build_gram_set
from .matching import assemble_full_system, axial_wavenumbers, forcing_vector, parity_factors
from .models import FieldSample, IncidentSolution, Seed, SlabConfig, fabry_perot_order
from .solver import find_resonance


LOGGER = logging.getLogger(__name__)
SINGULAR_CONDITION = 1e12


def solve_incident(
    config: SlabConfig,
    grams: GramSet,
    k0: float,
    parity: Optional[str] = None,
) -> IncidentSolution:
    parity = parity or config.parity
    k0 = float(k0)
    if not config.box.eps0 < k0 < config.box.K:
        raise DomainError(f'k0={k0!r} must lie in ({config.box.eps0}, {config.box.K})')
    system = assemble_full_system(config, grams, k0, parity)
    rhs = forcing_vector(config, system)
    condition = float(np.linalg.cond(system.full))
    if condition > SINGULAR_CONDITION:
        LOGGER.warning('slabres incident system near-singular k0=%r parity=%s cond=%.3e', k0, parity, condition)
    solution = np.linalg.solve(system.full, rhs)
    residual = float(np.linalg.norm(system.full @ solution - rhs) / np.linalg.norm(rhs))
    holes = system.hole_count
    return IncidentSolution(
        k0=k0,
        parity=parity,
        b0=solution[:holes].copy(),
        a=solution[holes:].reshape(holes, system.mode_count),
        forcing=config.h,
        residual=residual,
        condition=condition,
        bases=[single.basis for single in grams.singles],
    )


def field_sample(solution: IncidentSolution, config: SlabConfig, point: Sequence[float]) -> FieldSample:
    """Field at a point of a hole; x3 in [-l, 0], the lower half by reflection."""
    x1, x2, x3 = (float(value) for value in point)
    if not -config.l <= x3 <= 0.0:
        raise DomainError(f'x3={x3!r} lies outside the slab (-{config.l}, 0)')
    sign = 1.0
    if x3 < -0.5 * config.l:
        x3 = -config.l - x3
        sign = 1.0 if solution.parity == 'even' else -1.0

    hole, local = _locate(solution, config, x1, x2)
    basis = solution.bases[hole]
    eigenvalues = basis.eigenvalues
    s = axial_wavenumbers(solution.k0, eigenvalues, config.h)
    coefficients = np.empty(eigenvalues.size, dtype=complex)
    coefficients[0] = solution.b0[hole]
    coefficients[1:] = solution.a[hole] / eigenvalues[1:] ** 0.25
    modes = basis.evaluate(local)[0] / config.h
    upper = np.exp(1j * s * (x3 + config.l))
    lower = np.exp(-1j * s * x3)
    axial = upper + lower if solution.parity == 'even' else upper - lower
    terms = coefficients * modes * axial
    tail = float(abs(terms[-1])) if terms.size > 1 else 0.0
    return FieldSample(
        point=(x1, x2, float(point[2])),
        value=complex(sign * np.sum(terms)),
        tail_bound=tail,
        hole=hole + 1,
    )


def evaluate_field(solution: IncidentSolution, config: SlabConfig, point: Sequence[float]) -> complex:
    return field_sample(solution, config, point).value


def evaluate_total_field(
    solutions: Sequence[IncidentSolution],
    config: SlabConfig,
    point: Sequence[float],
) -> complex:
    """u = u_even + u_odd."""
    return complex(sum(evaluate_field(solution, config, point) for solution in solutions))


def aperture_mismatch(
    config: SlabConfig,
    grams: GramSet,
    solutions: Sequence[IncidentSolution],
) -> float:
    """Gap between the two sides of the upper aperture trace of u = sum of the parity solutions.

    Inside hole i the trace at x3 = 0 has mode coefficients b_m (e^{i s_m l} +- 1);
    from the half space it is the forcing minus the single layer of the aperture
    fluxes of every hole. Both are summed over the solutions and compared in max
    norm, relative to the hole-side trace.
    """
    if not solutions:
        raise ConfigurationError('aperture_mismatch needs at least one solution', field='parity')
    k0 = solutions[0].k0
    if any(solution.k0 != k0 for solution in solutions):
        raise ConfigurationError('Parity solutions must share k0', field='k0')
    eps = k0 * config.h
    holes = grams.hole_count
    inner = None
    outer = None
    for solution in solutions:
        traces = []
        fluxes = []
        for j in range(holes):
            eigenvalues = grams.singles[j].basis.eigenvalues
            s = axial_wavenumbers(k0, eigenvalues, config.h)
            own, coupled = parity_factors(s, config.l, solution.parity)
            b = np.empty(eigenvalues.size, dtype=complex)
            b[0] = solution.b0[j]
            b[1:] = solution.a[j] / eigenvalues[1:] ** 0.25
            traces.append(own * b)
            fluxes.append(1j * config.h * s * coupled * b)
        exterior = []
        for i in range(holes):
            value = np.zeros_like(traces[i])
            value[0] = solution.forcing
            for j in range(holes):
                block = grams.d(i, eps) if i == j else grams.cross(i, j, k0)
                value -= block @ fluxes[j]
            exterior.append(value)
        inner = np.array(traces) if inner is None else inner + np.array(traces)
        outer = np.array(exterior) if outer is None else outer + np.array(exterior)
    scale = max(float(np.max(np.abs(inner))), 1e-300)
    return float(np.max(np.abs(inner - outer))) / scale


def axis_profile(
    solutions: Sequence[IncidentSolution],
    config: SlabConfig,
    hole: int = 0,
    count: int = 64,
) -> List[Tuple[float, float]]:
    """(x3, |u|) along the axis of a hole, midpoints of `count` cells over (-l, 0)."""
    center = config.centers[hole]
    profile = []
    for index in range(count):
        x3 = -config.l * (index + 0.5) / count
        profile.append((x3, abs(evaluate_total_field(solutions, config, (center[0], center[1], x3)))))
    return profile


def enhancement_exponents(
    config_template: SlabConfig,
    h_values: Sequence[float],
    m: int,
    settings: Optional[GramSettings] = None,
    parity: Optional[str] = None,
) -> Dict[str, object]:
    """Log-log slopes of |b0| and |u| against h at the resonant frequency of each h."""
    h_values = [float(value) for value in h_values]
    if len(h_values) < 3:
        raise ConfigurationError('At least three h values are needed for a slope fit', field='h_values')
    if any(later >= earlier for earlier, later in zip(h_values, h_values[1:])):
        raise ConfigurationError('h values must decrease', field='h_values')
    parity = parity or config_template.parity
    order = fabry_perot_order(m, parity)
    center = config_template.centers[0]
    rows = []
    for h in h_values:
        start_time = time.perf_counter()
        config = replace(config_template, h=h, parity=parity)
        grams = build_gram_set(config, settings)
        constants = asymptotics.shape_constants(grams, config.M)
        prediction = asymptotics.multi_hole_asymptotic(constants, config.centers, config.l, h, m, parity)[0]
        seed = Seed(m=m, parity=parity, branch=1, k=prediction.k)
        resonance = find_resonance(config, grams, seed, parity)
        interior_point = (center[0], center[1], -0.25 * config.l)
        near_point = (center[0], center[1], -h ** 1.5 * config.l)
        resonant = solve_incident(config, grams, resonance.k.real, parity)
        control = solve_incident(config, grams, (order + 0.5) * math.pi / config.l, parity)
        rows.append({
            'h': h,
            'k0': resonance.k.real,
            'k_resonance': [resonance.k.real, resonance.k.imag],
            'b0': abs(resonant.b0[0]),
            'interior': abs(evaluate_field(resonant, config, interior_point)),
            'near_aperture': abs(evaluate_field(resonant, config, near_point)),
            'control_b0': abs(control.b0[0]),
            'control_interior': abs(evaluate_field(control, config, interior_point)),
            'residual': max(resonant.residual, control.residual),
        })
        LOGGER.info(
            'slabres enhancement h=%s k0=%r b0=%.6g interior=%.6g timing total=%.3fs',
            h, resonance.k.real, rows[-1]['b0'], rows[-1]['interior'], time.perf_counter() - start_time,
        )
    return {
        'm': m,
        'parity': parity,
        'slope_b0': _slope(rows, 'b0'),
        'slope_interior': _slope(rows, 'interior'),
        'slope_near_aperture': _slope(rows, 'near_aperture'),
        'control_slope_b0': _slope(rows, 'control_b0'),
        'control_slope_interior': _slope(rows, 'control_interior'),
        'rows': rows,
    }


def _slope(rows: List[Dict[str, object]], key: str) -> float:
    log_h = np.log([row['h'] for row in rows])
    log_value = np.log([row[key] for row in rows])
    return float(np.polyfit(log_h, log_value, 1)[0])


def _locate(solution: IncidentSolution, config: SlabConfig, x1: float, x2: float) -> Tuple[int, np.ndarray]:
    for index, (center, basis) in enumerate(zip(config.centers, solution.bases)):
        local = np.array([[(x1 - center[0]) / config.h, (x2 - center[1]) / config.h]])
        if bool(basis.contains(local)[0]):
            return index, local
    raise DomainError(f'Point ({x1!r}, {x2!r}) lies outside every hole')

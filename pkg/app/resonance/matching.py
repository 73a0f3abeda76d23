"""Truncated matching system for the slab with N holes.

In hole j the field is sum_m b_m,j phi_m,j(x; h) [e^{i s_m (x3 + l)} +- e^{-i s_m x3}]
(+ for even, - for odd). Matching the aperture trace with the half-space
single layer gives, for every hole i and mode m',

    (e^{i s_m' l} +- 1) b_m',i + sum_j sum_m i h s_m (e^{i s_m l} -+ 1) D^ij_m'm b_m,j = f_m',i

with D^ii = d(kh) and D^ij the cross-hole block. Higher modes are carried as
a_m = lambda_m^{1/4} b_m and their rows are divided by (e^{i s_m' l} +- 1) and
multiplied by lambda_m'^{1/4}, so the a-block is I - P up to O(eps).
"""
from __future__ import annotations

import cmath
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.exceptions import ConfigurationError, IllConditionedError

from .kernels import GramSet
from .models import DispersionSystem, SlabConfig, complex_to_list


LOGGER = logging.getLogger(__name__)
CONDITION_LIMIT = 1e8
WEIGHT_FLOOR = 1e-14


def axial_wavenumber(k: complex, lambda_m: float, h: float) -> complex:
    """s = sqrt(k^2 - lambda/h^2) on the branch Im s >= 0, ties to Re s >= 0."""
    k = complex(k)
    if lambda_m == 0:
        return k
    s = cmath.sqrt(k * k - lambda_m / (h * h))
    if s.imag < 0 or (s.imag == 0 and s.real < 0):
        s = -s
    return s


def axial_wavenumbers(k: complex, eigenvalues: np.ndarray, h: float) -> np.ndarray:
    k = complex(k)
    s = np.sqrt(k * k - np.asarray(eigenvalues, dtype=float) / (h * h) + 0j)
    flip = (s.imag < 0) | ((s.imag == 0) & (s.real < 0))
    s = np.where(flip, -s, s)
    s[np.asarray(eigenvalues) == 0] = k
    return s


def parity_factors(s: np.ndarray, l: float, parity: str):
    """(own, coupled): the trace factor e^{isl} +- 1 and the flux factor e^{isl} -+ 1."""
    phase = np.exp(1j * s * l)
    if parity == 'even':
        return phase + 1.0, phase - 1.0
    if parity == 'odd':
        return phase - 1.0, phase + 1.0
    raise ConfigurationError(f'Unknown parity: {parity}', field='parity')


def assemble_full_system(
    config: SlabConfig,
    grams: GramSet,
    k: complex,
    parity: Optional[str] = None,
) -> DispersionSystem:
    parity = parity or config.parity
    k = complex(k)
    holes = grams.hole_count
    if holes != config.N:
        raise ConfigurationError(f'Gram set has {holes} holes, configuration has {config.N}', field='holes')
    size = grams.singles[0].mode_count + 1
    if any(single.mode_count + 1 != size for single in grams.singles):
        raise ConfigurationError('All holes must carry the same number of modes', field='M')

    eps = k * config.h
    rows_scale = []
    columns = []
    diagonals = []
    for j in range(holes):
        eigenvalues = grams.singles[j].basis.eigenvalues
        s = axial_wavenumbers(k, eigenvalues, config.h)
        own, coupled = parity_factors(s, config.l, parity)
        if size > 1 and np.min(np.abs(own[1:])) < WEIGHT_FLOOR:
            raise IllConditionedError(
                f'Near-singular parity weight in hole {j + 1}: |e^(isl) +- 1| = {np.min(np.abs(own[1:])):.3e}',
                condition=np.inf,
            )
        quarter = np.ones(size)
        quarter[1:] = eigenvalues[1:] ** 0.25
        beta = 1j * config.h * s * coupled
        columns.append(beta / quarter)
        scale = np.ones(size, dtype=complex)
        scale[1:] = quarter[1:] / own[1:]
        rows_scale.append(scale)
        diagonals.append(own / quarter)

    dimension = holes * size
    raw = np.zeros((dimension, dimension), dtype=complex)
    for i in range(holes):
        block_rows = slice(i * size, (i + 1) * size)
        for j in range(holes):
            block = grams.d(i, eps) if i == j else grams.cross(i, j, k)
            raw[block_rows, j * size:(j + 1) * size] = block * columns[j][None, :]
        raw[block_rows, block_rows] += np.diag(diagonals[i])
        raw[block_rows, :] *= rows_scale[i][:, None]

    order = _unknown_order(holes, size)
    full = raw[np.ix_(order, order)]
    reduced, condition = _schur_reduce(full, holes)
    return DispersionSystem(
        k=k,
        parity=parity,
        full=full,
        reduced=reduced,
        a_condition=condition,
        hole_count=holes,
        mode_count=size - 1,
    )


def reduced_dispersion(config: SlabConfig, grams: GramSet, k: complex, parity: Optional[str] = None) -> np.ndarray:
    system = assemble_full_system(config, grams, k, parity)
    if system.a_condition >= CONDITION_LIMIT:
        raise IllConditionedError(
            f'Higher-mode block is ill-conditioned at k={complex(k)!r}: cond={system.a_condition:.3e}',
            condition=system.a_condition,
        )
    return system.reduced


def dispersion_determinant(config: SlabConfig, grams: GramSet, k: complex, parity: Optional[str] = None) -> complex:
    return complex(np.linalg.det(reduced_dispersion(config, grams, k, parity)))


def smallest_singular_value(system: DispersionSystem) -> float:
    return float(np.linalg.svd(system.full, compute_uv=False)[-1])


def forcing_vector(config: SlabConfig, system: DispersionSystem) -> np.ndarray:
    """Normal incidence: b_ref = h in every b-row, zero in the a-rows."""
    rhs = np.zeros(system.full.shape[0], dtype=complex)
    rhs[:system.hole_count] = config.h
    return rhs


def truncation_report(
    config: SlabConfig,
    grams: GramSet,
    k: complex,
    M_list: Sequence[int],
    parity: Optional[str] = None,
) -> List[Dict[str, object]]:
    if list(M_list) != sorted(M_list):
        raise ConfigurationError('M_list must be ascending', field='M_list')
    available = grams.singles[0].mode_count
    rows: List[Dict[str, object]] = []
    previous: Optional[np.ndarray] = None
    for M in M_list:
        if M > available:
            raise ConfigurationError(f'Truncation M={M} exceeds the {available} modes assembled', field='M_list')
        system = assemble_full_system(config, grams.truncated(M), k, parity)
        cauchy = None if previous is None else float(np.max(np.abs(system.reduced - previous)))
        rows.append({
            'M': M,
            'a_condition': system.a_condition,
            'reduced': [[complex_to_list(value) for value in row] for row in system.reduced],
            'cauchy': cauchy,
        })
        LOGGER.info('slabres truncation M=%s cond=%.3e cauchy=%s', M, system.a_condition, cauchy)
        previous = system.reduced
    return rows


def _unknown_order(holes: int, size: int) -> List[int]:
    """b_0,j first, then a_m,j hole by hole."""
    order = [j * size for j in range(holes)]
    for j in range(holes):
        order.extend(j * size + m for m in range(1, size))
    return order


def _schur_reduce(full: np.ndarray, holes: int):
    if full.shape[0] == holes:
        return full.copy(), 1.0
    a_bb = full[:holes, :holes]
    a_ba = full[:holes, holes:]
    a_ab = full[holes:, :holes]
    a_aa = full[holes:, holes:]
    condition = float(np.linalg.cond(a_aa))
    try:
        eliminated = np.linalg.solve(a_aa, a_ab)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError('Higher-mode block is singular', condition=np.inf) from exc
    return a_bb - a_ba @ eliminated, condition

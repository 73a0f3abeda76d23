from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigurationError, ContourError, DomainError, OutOfRegimeError, RootNotFoundError

from . import asymptotics
from .kernels import GramSet, GramSettings, build_gram_set
from .matching import dispersion_determinant
from .models import Resonance, Seed, ShapeConstants, SlabConfig, SweepRow, fabry_perot_order


LOGGER = logging.getLogger(__name__)
MAX_ITERATIONS = 50
STEP_TOLERANCE = 1e-12
RESIDUAL_TOLERANCE = 1e-10
DIFFERENCE_STEP = 1e-7
DEPTH_FACTOR = 10.0
CONTOUR_START = 64
CONTOUR_LIMIT = 4096
CONTOUR_PHASE_STEP = math.pi / 4.0
CONTOUR_FLOOR = 1e-3
CONTOUR_PERTURBATIONS = (1.0, 1.1, 0.9)
REGIME_LIMIT = 0.2


def expand_parities(parity: str) -> Tuple[str, ...]:
    if parity == 'both':
        return ('even', 'odd')
    if parity in ('even', 'odd'):
        return (parity,)
    raise ConfigurationError(f'Unknown parity: {parity}', field='parity')


def fabry_perot_seeds(
    config: SlabConfig,
    m_range: Iterable[int],
    constants: Optional[Sequence[ShapeConstants]] = None,
    parities: Optional[Sequence[str]] = None,
) -> List[Seed]:
    """One seed per (parity, m, branch), from the closed forms when constants are given."""
    parities = parities or expand_parities(config.parity)
    seeds: List[Seed] = []
    for parity in parities:
        for m in m_range:
            if m < 1 or m * config.h >= REGIME_LIMIT:
                raise ConfigurationError(f'm={m} is outside 1 <= m, m h < {REGIME_LIMIT}', field='m_range')
            candidates = _predicted_seeds(config, constants, m, parity)
            for seed in candidates:
                if not config.box.contains(seed.k):
                    LOGGER.warning(
                        'slabres seed skipped m=%s parity=%s branch=%s k=%r outside search box',
                        m, parity, seed.branch, seed.k,
                    )
                    continue
                seeds.append(seed)
    return seeds


def find_resonance(
    config: SlabConfig,
    grams: GramSet,
    seed: Seed,
    parity: Optional[str] = None,
    found: Sequence[complex] = (),
) -> Resonance:
    """Damped Newton on det(reduced)(k) / prod (k - k_found) from the seed."""
    parity = parity or seed.parity
    start_time = time.perf_counter()

    def determinant(k: complex) -> complex:
        return dispersion_determinant(config, grams, k, parity)

    def deflated(k: complex) -> complex:
        value = determinant(k)
        for root in found:
            value /= (k - root)
        return value

    k = complex(seed.k)
    trajectory = [k]
    converged = False
    for iteration in range(1, MAX_ITERATIONS + 1):
        value, slope = _value_and_slope(deflated, k)
        if slope == 0:
            raise RootNotFoundError(f'Flat determinant at k={k!r}', trajectory=trajectory)
        step = -value / slope
        damping = 1.0
        candidate = k + step
        while damping > 1.0 / 1024:
            candidate = k + damping * step
            if abs(deflated(candidate)) < abs(value):
                break
            damping *= 0.5
        else:
            candidate = k + step
        moved = abs(candidate - k)
        k = candidate
        trajectory.append(k)
        if moved < STEP_TOLERANCE * abs(k):
            converged = True
            break
    if not converged:
        raise RootNotFoundError(
            f'Newton did not converge in {MAX_ITERATIONS} iterations from {seed.k!r}', trajectory=trajectory,
        )

    value, slope = _value_and_slope(determinant, k)
    residual = abs(value) / max(abs(slope) * abs(k), 1e-300)
    if residual >= RESIDUAL_TOLERANCE:
        raise RootNotFoundError(f'Residual {residual:.3e} too large at k={k!r}', trajectory=trajectory)
    _check_root(config, k, seed.order, trajectory)
    resonance = Resonance(
        k=k,
        parity=parity,
        m=seed.m,
        order=seed.order,
        branch=seed.branch,
        Q=quality_factor(k),
        residual=residual,
        provenance='direct',
        M=grams.singles[0].mode_count,
    )
    LOGGER.info(
        'slabres resonance found m=%s parity=%s branch=%s k=%r iterations=%s residual=%.2e timing total=%.3fs',
        seed.m, parity, seed.branch, k, len(trajectory) - 1, residual, time.perf_counter() - start_time,
    )
    return resonance


def find_resonances(
    config: SlabConfig,
    grams: GramSet,
    m_range: Iterable[int],
    parities: Optional[Sequence[str]] = None,
    constants: Optional[Sequence[ShapeConstants]] = None,
    threads: int = 1,
) -> List[Resonance]:
    """All branches for every (parity, m), deflating roots already found in the same disk."""
    seeds = fabry_perot_seeds(config, m_range, constants, parities)
    groups: Dict[Tuple[str, int], List[Seed]] = {}
    for seed in seeds:
        groups.setdefault((seed.parity, seed.m), []).append(seed)

    def solve_group(group: List[Seed]) -> List[Resonance]:
        roots: List[Resonance] = []
        for seed in group:
            roots.append(find_resonance(config, grams, seed, seed.parity, [root.k for root in roots]))
        roots.sort(key=lambda item: (item.k.real, item.k.imag))
        return [replace(root, branch=branch) for branch, root in enumerate(roots, start=1)]

    keys = list(groups)
    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            solved = list(executor.map(lambda key: solve_group(groups[key]), keys))
    else:
        solved = [solve_group(groups[key]) for key in keys]
    return [root for group in solved for root in group]


def truncation_shift(config: SlabConfig, grams: GramSet, resonance: Resonance) -> Optional[float]:
    """|k_M - k_{M/2}| / |k|, the root re-solved with half the modes from where it converged.

    The higher-mode series converges algebraically (the aperture flux is singular
    at the edge), so this is a self-convergence report rather than an error bound.
    """
    coarse_modes = grams.singles[0].mode_count // 2
    if coarse_modes < 1:
        return None
    seed = Seed(m=resonance.m, parity=resonance.parity, branch=resonance.branch, k=resonance.k)
    try:
        coarse = find_resonance(config, grams.truncated(coarse_modes), seed, resonance.parity)
    except RootNotFoundError as exc:
        LOGGER.warning('slabres truncation shift unavailable m=%s parity=%s: %s', resonance.m, resonance.parity, exc)
        return None
    shift = abs(resonance.k - coarse.k) / abs(resonance.k)
    LOGGER.info(
        'slabres truncation shift m=%s parity=%s branch=%s M=%s coarse=%s shift=%.3e',
        resonance.m, resonance.parity, resonance.branch, resonance.M, coarse_modes, shift,
    )
    return shift


def count_roots_in_disk(
    config: SlabConfig,
    grams: GramSet,
    center: complex,
    radius: float,
    parity: Optional[str] = None,
) -> int:
    """Winding number of det(reduced) around the circle |k - center| = radius."""
    parity = parity or config.parity
    center = complex(center)
    for factor in CONTOUR_PERTURBATIONS:
        current = radius * factor
        try:
            count = _winding_number(config, grams, center, current, parity)
        except _NearRoot:
            LOGGER.info('slabres contour near a root center=%r radius=%.6g, perturbing', center, current)
            continue
        LOGGER.info('slabres contour count center=%r radius=%.6g parity=%s roots=%s', center, current, parity, count)
        return count
    raise ContourError(f'Contour around {center!r} passes too close to a root after {len(CONTOUR_PERTURBATIONS)} tries')


def rouche_disk(config: SlabConfig, m: int, parity: str) -> Tuple[complex, float]:
    """Center n pi / l and radius h^(1/2) / l of the disk holding the m-th resonances."""
    order = fabry_perot_order(m, parity)
    return complex(order * math.pi / config.l), math.sqrt(config.h) / config.l


def quality_factor(k: complex) -> float:
    k = complex(k)
    if k.imag >= 0:
        raise DomainError(f'Quality factor needs Im k < 0, got {k!r}')
    return -k.real / (2.0 * k.imag)


def resonance_sweep(
    config_template: SlabConfig,
    h_values: Sequence[float],
    m_range: Iterable[int],
    parity_set: Sequence[str],
    settings: Optional[GramSettings] = None,
    threads: int = 1,
) -> List[SweepRow]:
    m_values = list(m_range)

    def run(h: float) -> List[SweepRow]:
        start_time = time.perf_counter()
        config = replace(config_template, h=h)
        grams = build_gram_set(config, settings)
        constants = asymptotics.shape_constants(grams, config.M)
        rows = []
        for parity in parity_set:
            for m in m_values:
                group_start = time.perf_counter()
                predictions = asymptotics.multi_hole_asymptotic(constants, config.centers, config.l, h, m, parity)
                roots = find_resonances(config, grams, [m], [parity], constants)
                order = fabry_perot_order(m, parity)
                for root, prediction in zip(roots, predictions):
                    rows.append(SweepRow(
                        h=h,
                        m=m,
                        parity=parity,
                        branch=root.branch,
                        k_direct=root.k,
                        k_asymptotic=prediction.k,
                        error=abs(root.k - prediction.k),
                        Q_direct=root.Q,
                        Q_scaled=root.Q * 2.0 * order * (h / config.l) ** 2,
                        runtime=time.perf_counter() - group_start,
                    ))
        LOGGER.info('slabres sweep h=%s rows=%s timing total=%.3fs', h, len(rows), time.perf_counter() - start_time)
        return rows

    if threads > 1 and len(h_values) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            per_h = list(executor.map(run, h_values))
    else:
        per_h = [run(h) for h in h_values]

    rows = [row for chunk in per_h for row in chunk]
    rows.sort(key=lambda row: (parity_set.index(row.parity), row.m, row.branch))
    previous: Dict[Tuple[str, int, int], SweepRow] = {}
    for row in rows:
        key = (row.parity, row.m, row.branch)
        earlier = previous.get(key)
        if earlier is not None and row.error > 0 and earlier.h != row.h:
            row.error_ratio = earlier.error / row.error
            row.order_fit = math.log(row.error_ratio) / math.log(earlier.h / row.h)
        previous[key] = row
    return rows


def _predicted_seeds(
    config: SlabConfig,
    constants: Optional[Sequence[ShapeConstants]],
    m: int,
    parity: str,
) -> List[Seed]:
    if constants is not None:
        try:
            predictions = asymptotics.multi_hole_asymptotic(
                constants, config.centers, config.l, config.h, m, parity,
            )
            return [Seed(m=m, parity=parity, branch=item.branch, k=item.k) for item in predictions]
        except OutOfRegimeError as exc:
            LOGGER.warning('slabres seed fallback m=%s parity=%s: %s', m, parity, exc)
    order = fabry_perot_order(m, parity)
    eps = order * math.pi * config.h / config.l
    k = (order * math.pi - 1j * eps * eps / math.pi) / config.l
    return [Seed(m=m, parity=parity, branch=branch, k=k) for branch in range(1, config.N + 1)]


def _value_and_slope(function: Callable[[complex], complex], k: complex) -> Tuple[complex, complex]:
    step = DIFFERENCE_STEP * abs(k)
    value = function(k)
    slope = (function(k + step) - function(k - step)) / (2.0 * step)
    return value, slope


def _check_root(config: SlabConfig, k: complex, order: int, trajectory: List[complex]) -> None:
    kl = k * config.l
    if k.imag >= 0:
        raise RootNotFoundError(f'Spurious root with Im k >= 0: {k!r}', trajectory=trajectory)
    if abs(kl - order * math.pi) > math.sqrt(config.h):
        raise RootNotFoundError(f'Root {k!r} left the disk |kl - {order} pi| <= h^(1/2)', trajectory=trajectory)
    eps = order * math.pi * config.h / config.l
    if not -DEPTH_FACTOR * eps * eps < kl.imag < 0:
        raise RootNotFoundError(f'Root {k!r} is deeper than the search depth', trajectory=trajectory)


class _NearRoot(Exception):
    pass


def _winding_number(config: SlabConfig, grams: GramSet, center: complex, radius: float, parity: str) -> int:
    def values_at(angles: np.ndarray) -> np.ndarray:
        return np.array([
            dispersion_determinant(config, grams, center + radius * np.exp(1j * angle), parity)
            for angle in angles
        ])

    count = CONTOUR_START
    values = values_at(2.0 * math.pi * np.arange(count) / count)
    while True:
        magnitude = np.abs(values)
        if magnitude.min() < CONTOUR_FLOOR * magnitude.max():
            raise _NearRoot()
        increments = np.angle(np.roll(values, -1) / values)
        if np.max(np.abs(increments)) < CONTOUR_PHASE_STEP:
            return int(round(float(np.sum(increments)) / (2.0 * math.pi)))
        if count * 2 > CONTOUR_LIMIT:
            raise ContourError(f'Phase of det not resolved with {count} contour nodes')
        midpoints = values_at(2.0 * math.pi * (np.arange(count) + 0.5) / count)
        merged = np.empty(2 * count, dtype=complex)
        merged[0::2] = values
        merged[1::2] = midpoints
        values = merged
        count *= 2

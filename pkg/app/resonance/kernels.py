"""Gram matrices of the half-space kernel e^{ikr}/(2 pi r) in the Neumann bases.

Single-hole blocks are computed once on the unit shape as moment tables

    G_n[m', m] = (1/2pi) int int phi_m'(y) phi_m(x) |x - y|^(n-1) dy dx,

so that d(eps) = sum_n (i eps)^n / n! G_n. G_0 is the static Gram s0 and
G_1 = (1/2pi) (int phi_m')(int phi_m). Cross-hole blocks have a smooth kernel
and are evaluated directly at each k.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigurationError, OutOfRegimeError, QuadratureError

from . import quadrature, storage
from .eigenbasis import build_eigenbasis
from .models import EigenBasis, HoleLayout, HoleShape, SlabConfig


LOGGER = logging.getLogger(__name__)
DEFAULT_TAYLOR_TERMS = 16
DEFAULT_TOL_QUAD = 1e-6
MAX_REFINEMENTS = 2
CHUNK_ENTRIES = 2_000_000
SEPARATION_FACTOR = 10.0

_MEMO: Dict[str, 'SingleHoleGram'] = {}
_MEMO_LOCK = threading.Lock()


@dataclass(frozen=True)
class GramSettings:
    quad_order: int = 12
    quad_levels: int = 3
    tol_quad: float = DEFAULT_TOL_QUAD
    taylor_terms: int = DEFAULT_TAYLOR_TERMS
    cache_dir: Optional[str] = None

    @classmethod
    def from_mapping(cls, mapping) -> 'GramSettings':
        return cls(
            quad_order=int(mapping.get('SLABRES_QUAD_ORDER', cls.quad_order)),
            quad_levels=int(mapping.get('SLABRES_QUAD_LEVELS', cls.quad_levels)),
            tol_quad=float(mapping.get('SLABRES_TOL_QUAD', cls.tol_quad)),
            taylor_terms=int(mapping.get('SLABRES_TAYLOR_TERMS', cls.taylor_terms)),
            cache_dir=mapping.get('SLABRES_CACHE_DIR'),
        )


@dataclass
class SingleHoleGram:
    basis: EigenBasis
    moments: np.ndarray
    key: str
    estimate: float

    @property
    def s0(self) -> np.ndarray:
        return self.moments[0]

    @property
    def mode_count(self) -> int:
        return self.basis.mode_count

    def truncated(self, mode_count: int) -> 'SingleHoleGram':
        size = mode_count + 1
        return SingleHoleGram(
            basis=self.basis.truncated(mode_count),
            moments=self.moments[:, :size, :size],
            key=self.key,
            estimate=self.estimate,
        )

    def d(self, eps: complex) -> np.ndarray:
        _check_eps(eps)
        return np.tensordot(_taylor_coefficients(eps, self.moments.shape[0]), self.moments, axes=1)

    def remainder(self, eps: complex) -> np.ndarray:
        _check_eps(eps)
        coefficients = _taylor_coefficients(eps, self.moments.shape[0])
        return np.tensordot(coefficients[1:], self.moments[1:], axes=1)

    def r0(self, eps: complex) -> np.ndarray:
        _check_eps(eps)
        if eps == 0:
            raise OutOfRegimeError('r0 requires eps != 0')
        terms = self.moments.shape[0]
        coefficients = np.zeros(terms, dtype=complex)
        coefficients[2] = -0.5
        step = 1j * complex(eps)
        for n in range(3, terms):
            coefficients[n] = coefficients[n - 1] * step / n
        return np.tensordot(coefficients[2:], self.moments[2:], axes=1)


@dataclass
class GramSet:
    """Single-hole blocks per hole plus the cross-hole kernel on a layout."""

    singles: List[SingleHoleGram]
    layout: HoleLayout
    _cross_cache: Dict[Tuple[int, int, complex], np.ndarray] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def hole_count(self) -> int:
        return len(self.singles)

    @property
    def keys(self) -> List[str]:
        return [single.key for single in self.singles]

    def s0(self, j: int) -> np.ndarray:
        return self.singles[j].s0

    def d(self, j: int, eps: complex) -> np.ndarray:
        return self.singles[j].d(eps)

    def remainder(self, j: int, eps: complex) -> np.ndarray:
        return self.singles[j].remainder(eps)

    def r0(self, j: int, eps: complex) -> np.ndarray:
        return self.singles[j].r0(eps)

    def cross(self, i: int, j: int, k: complex) -> np.ndarray:
        k = complex(k)
        if i > j:
            return self.cross(j, i, k).T
        cache_key = (i, j, k)
        with self._lock:
            cached = self._cross_cache.get(cache_key)
        if cached is not None:
            return cached
        block = cross_gram(self.layout, self.singles[i].basis, self.singles[j].basis, i, j, k)
        with self._lock:
            if len(self._cross_cache) > 512:
                self._cross_cache.clear()
            self._cross_cache[cache_key] = block
        return block

    def truncated(self, mode_count: int) -> 'GramSet':
        return GramSet(
            singles=[single.truncated(mode_count) for single in self.singles],
            layout=self.layout,
        )

    def with_layout(self, layout: HoleLayout) -> 'GramSet':
        return GramSet(singles=self.singles, layout=layout)


def s0_gram(basis: EigenBasis, settings: Optional[GramSettings] = None) -> np.ndarray:
    return single_hole_gram(basis, settings).s0.copy()


def d_matrix(basis: EigenBasis, eps: complex, settings: Optional[GramSettings] = None) -> np.ndarray:
    return single_hole_gram(basis, settings).d(eps)


def r0_gram(basis: EigenBasis, eps: complex, settings: Optional[GramSettings] = None) -> np.ndarray:
    return single_hole_gram(basis, settings).r0(eps)


def cross_gram(
    layout: HoleLayout,
    basis_i: EigenBasis,
    basis_j: EigenBasis,
    i: int,
    j: int,
    k: complex,
) -> np.ndarray:
    """Block d^{ij}[m', m] = (h/2pi) int int e^{ikR}/R phi_m',i(x) phi_m,j(y).

    R = |D_i + h x - D_j - h y|; x runs over hole i, y over hole j.
    """
    if i == j:
        raise ConfigurationError('cross_gram requires distinct holes', field='holes')
    diameter = max(basis_i.diameter, basis_j.diameter)
    distance = layout.distance(i, j)
    if distance <= SEPARATION_FACTOR * layout.h * diameter:
        raise ConfigurationError(
            f'Holes {i + 1} and {j + 1} are too close: |C| = {distance:.6g} <= {SEPARATION_FACTOR:g} h diam',
            field='holes',
        )
    h = layout.h
    rule_i = basis_i.smooth_rule
    rule_j = basis_j.smooth_rule
    offset = np.asarray(layout.centers[i], dtype=float) - np.asarray(layout.centers[j], dtype=float)
    delta = offset[None, None, :] + h * (rule_i.nodes[:, None, :] - rule_j.nodes[None, :, :])
    separation = np.hypot(delta[..., 0], delta[..., 1])
    kernel = np.exp(1j * complex(k) * separation) / separation
    values_i = basis_i.evaluate(rule_i.nodes) * rule_i.weights[:, None]
    values_j = basis_j.evaluate(rule_j.nodes) * rule_j.weights[:, None]
    return (h / (2.0 * math.pi)) * (values_i.T @ kernel @ values_j)


def single_hole_gram(basis: EigenBasis, settings: Optional[GramSettings] = None) -> SingleHoleGram:
    settings = settings or GramSettings()
    descriptor = {
        'shape': basis.shape.descriptor(),
        'modes': basis.mode_count,
        'quad_order': basis.rule.order,
        'quad_nodes': basis.rule.size,
        'inner_order': settings.quad_order,
        'taylor_terms': settings.taylor_terms,
        'tol_quad': settings.tol_quad,
    }
    key = storage.content_key(descriptor)
    with _MEMO_LOCK:
        cached = _MEMO.get(key)
    if cached is not None:
        return cached
    # a larger table with the same quadrature holds this one as its leading block
    with _MEMO_LOCK:
        for other in _MEMO.values():
            if other.basis.shape.descriptor() == basis.shape.descriptor() and \
                    other.basis.mode_count > basis.mode_count and \
                    other.basis.rule.order == basis.rule.order and \
                    other.basis.rule.size == basis.rule.size and \
                    other.moments.shape[0] == settings.taylor_terms:
                return other.truncated(basis.mode_count)

    if settings.cache_dir:
        loaded = storage.load_gram_tables(settings.cache_dir, key)
        if loaded is not None:
            moments, estimate = loaded
            gram = SingleHoleGram(basis=basis, moments=moments, key=key, estimate=estimate)
            LOGGER.info('slabres gram cache hit shape=%s modes=%s key=%s', basis.shape.kind, basis.mode_count, key)
            with _MEMO_LOCK:
                _MEMO[key] = gram
            return gram

    start_time = time.perf_counter()
    moments, estimate, inner_order = _converged_moments(basis, settings)
    elapsed = time.perf_counter() - start_time
    gram = SingleHoleGram(basis=basis, moments=moments, key=key, estimate=estimate)
    LOGGER.info(
        'slabres gram built shape=%s modes=%s order=%s inner=%s terms=%s estimate=%.2e timing total=%.3fs',
        basis.shape.kind, basis.mode_count, basis.rule.order, inner_order, settings.taylor_terms,
        estimate, elapsed,
    )
    if settings.cache_dir:
        storage.save_gram_tables(settings.cache_dir, key, moments, estimate)
    with _MEMO_LOCK:
        _MEMO[key] = gram
    return gram


def clear_memo() -> None:
    with _MEMO_LOCK:
        _MEMO.clear()


def build_gram_set(
    config: SlabConfig,
    settings: Optional[GramSettings] = None,
    bases: Optional[Sequence[EigenBasis]] = None,
) -> GramSet:
    settings = settings or GramSettings()
    if bases is None:
        bases = hole_bases(config, settings)
    singles = [single_hole_gram(basis, settings) for basis in bases]
    layout = HoleLayout(centers=tuple(config.centers), h=config.h, box=config.box)
    validate_layout(layout, bases)
    return GramSet(singles=singles, layout=layout)


def hole_bases(config: SlabConfig, settings: Optional[GramSettings] = None) -> List[EigenBasis]:
    settings = settings or GramSettings()
    built: Dict[str, EigenBasis] = {}
    bases = []
    for hole in config.holes:
        key = storage.content_key(hole.shape.descriptor())
        if key not in built:
            built[key] = build_eigenbasis(hole.shape, config.M, settings.quad_order, settings.quad_levels)
        bases.append(built[key])
    return bases


def validate_layout(layout: HoleLayout, bases: Sequence[EigenBasis]) -> None:
    diameter = max((basis.diameter for basis in bases), default=1.0)
    if layout.min_distance <= SEPARATION_FACTOR * layout.h * diameter:
        raise ConfigurationError(
            f'Hole separation {layout.min_distance:.6g} must exceed {SEPARATION_FACTOR:g} h diam '
            f'= {SEPARATION_FACTOR * layout.h * diameter:.6g}',
            field='holes',
        )


def _check_eps(eps: complex) -> None:
    if abs(eps) >= 1.0:
        raise OutOfRegimeError(f'|eps| must be below 1, got {abs(eps):.6g}')


def _taylor_coefficients(eps: complex, terms: int) -> np.ndarray:
    coefficients = np.empty(terms, dtype=complex)
    coefficients[0] = 1.0
    step = 1j * complex(eps)
    for n in range(1, terms):
        coefficients[n] = coefficients[n - 1] * step / n
    return coefficients


def _converged_moments(basis: EigenBasis, settings: GramSettings) -> Tuple[np.ndarray, float, int]:
    if basis.shape.kind == 'custom':
        return _nodal_moments(basis, settings.taylor_terms), 0.0, 0
    inner_order = settings.quad_order
    estimate = math.inf
    for _ in range(MAX_REFINEMENTS + 1):
        fine_order = inner_order + max(4, inner_order // 2)
        coarse = _singular_moments(basis, inner_order, 1)[0]
        moments = _singular_moments(basis, fine_order, settings.taylor_terms)
        scale = max(float(np.max(np.abs(moments[0]))), 1e-300)
        estimate = float(np.max(np.abs(moments[0] - coarse))) / scale
        if estimate <= settings.tol_quad:
            return moments, estimate, fine_order
        LOGGER.info(
            'slabres gram refine shape=%s inner=%s estimate=%.2e tol=%.1e',
            basis.shape.kind, inner_order, estimate, settings.tol_quad,
        )
        inner_order = fine_order
    raise QuadratureError(
        f'Singular quadrature did not reach tolerance {settings.tol_quad:g}: estimate {estimate:.3e}',
        estimate=estimate,
    )


def _singular_moments(basis: EigenBasis, inner_order: int, terms: int) -> np.ndarray:
    if basis.shape.kind == 'square':
        moments = _square_moments(basis, inner_order, terms)
    elif basis.shape.kind == 'disk':
        moments = _disk_moments(basis, inner_order, terms)
    else:
        raise ConfigurationError(f'No singular rule for shape {basis.shape.kind}', field='shape')
    moments /= 2.0 * math.pi
    moments = 0.5 * (moments + moments.transpose(0, 2, 1))
    if terms > 1:
        integrals = basis.evaluate(basis.rule.nodes).T @ basis.rule.weights
        moments[1] = np.outer(integrals, integrals) / (2.0 * math.pi)
    return moments


def _apex_projections(apexes: np.ndarray, rule, evaluate, size: int, terms: int) -> List[np.ndarray]:
    """Inner integrals sum_b w rho^n f_m(y_b) for every apex, shape (na, size, terms).

    `rule(apexes)` returns (points, weights, rho); `evaluate(points)` returns
    one or more (npoints, size) arrays, each projected separately.
    """
    count = apexes.shape[0]
    per_apex = rule(apexes[:1])[1].shape[1]
    chunk = max(1, CHUNK_ENTRIES // (per_apex * max(size, terms)))
    results: List[List[np.ndarray]] = []
    for start in range(0, count, chunk):
        points, weights, rho = rule(apexes[start:start + chunk])
        batch, inner_count = weights.shape
        powers = np.empty((batch, inner_count, terms))
        powers[..., 0] = weights
        for n in range(1, terms):
            powers[..., n] = powers[..., n - 1] * rho
        evaluated = evaluate(points.reshape(-1, 2))
        if isinstance(evaluated, np.ndarray):
            evaluated = (evaluated,)
        results.append([
            np.matmul(values.reshape(batch, inner_count, size).transpose(0, 2, 1), powers)
            for values in evaluated
        ])
    return [np.concatenate([part[index] for part in results]) for index in range(len(results[0]))]


def _square_moments(basis: EigenBasis, inner_order: int, terms: int) -> np.ndarray:
    """Apexes in the open first quadrant only; the reflections x1 -> -x1 and
    x2 -> -x2 multiply mode (p, q) by (-1)^p and (-1)^q."""
    nodes = basis.rule.nodes
    quadrant = (nodes[:, 0] > 0) & (nodes[:, 1] > 0)
    apexes = nodes[quadrant]
    size = basis.mode_count + 1
    outer = basis.evaluate(apexes) * basis.rule.weights[quadrant][:, None]

    def rule(centers):
        return quadrature.polygon_singular_rule(centers, quadrature.SQUARE_VERTICES, inner_order)

    inner = _apex_projections(apexes, rule, basis.evaluate, size, terms)[0]
    moments = np.einsum('ap,amn->npm', outer, inner)
    p_index = np.array([label[0] for label in basis.labels])
    q_index = np.array([label[1] for label in basis.labels])
    mask = ((p_index[:, None] + p_index[None, :]) % 2 == 0) & ((q_index[:, None] + q_index[None, :]) % 2 == 0)
    return 4.0 * moments * mask[None, :, :]


def _disk_moments(basis: EigenBasis, inner_order: int, terms: int) -> np.ndarray:
    """Apexes on the positive x1 axis only; rotating the apex by beta turns
    phi_m into phi_m cos(n beta) + phi_m' sin(n beta), phi_m' the quarter-turned mode."""
    nodes = basis.rule.nodes
    radii_all = np.hypot(nodes[:, 0], nodes[:, 1])
    angle_count = int(np.sum(np.isclose(radii_all, radii_all[0], rtol=0.0, atol=1e-14)))
    radial_count = nodes.shape[0] // angle_count
    radii = radii_all.reshape(radial_count, angle_count)[:, 0]
    angles = np.arctan2(nodes[:angle_count, 1], nodes[:angle_count, 0])
    size = basis.mode_count + 1
    outer = (basis.evaluate(nodes) * basis.rule.weights[:, None]).reshape(radial_count, angle_count, size)
    apexes = np.column_stack([radii, np.zeros_like(radii)])

    def rule(centers):
        return quadrature.disk_singular_rule(centers, inner_order)

    straight, turned = _apex_projections(apexes, rule, basis.polar_evaluator, size, terms)
    orders = basis.angular_orders
    phase = angles[:, None] * orders[None, :]
    outer_cos = np.einsum('iap,am->ipm', outer, np.cos(phase))
    outer_sin = np.einsum('iap,am->ipm', outer, np.sin(phase))
    return np.einsum('ipm,imn->npm', outer_cos, straight) + np.einsum('ipm,imn->npm', outer_sin, turned)


def _nodal_moments(basis: EigenBasis, terms: int) -> np.ndarray:
    """Moments for tabulated shapes: node-to-node sums with an equal-area self-cell."""
    nodes = basis.rule.nodes
    weights = basis.rule.weights
    values = basis.evaluate(nodes) * weights[:, None]
    distance = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    np.fill_diagonal(distance, 1.0)
    size = values.shape[1]
    moments = np.zeros((terms, size, size))
    kernel = 1.0 / distance
    np.fill_diagonal(kernel, 2.0 * np.sqrt(math.pi / weights))
    for n in range(terms):
        if n == 1:
            kernel_n = np.ones_like(distance)
        else:
            kernel_n = kernel if n == 0 else distance ** (n - 1)
            if n >= 2:
                kernel_n = kernel_n.copy()
                np.fill_diagonal(kernel_n, 0.0)
        moments[n] = values.T @ kernel_n @ values / (2.0 * math.pi)
    LOGGER.warning('slabres gram for tabulated shape uses a low-order self-cell rule; tolerance not certified')
    return 0.5 * (moments + moments.transpose(0, 2, 1))

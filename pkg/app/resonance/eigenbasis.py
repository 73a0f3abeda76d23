from __future__ import annotations

import json
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize, spatial, special

from app.exceptions import ConfigurationError, DomainError, NumericalError

from . import quadrature
from .models import EigenBasis, HoleShape, QuadratureRule


LOGGER = logging.getLogger(__name__)
DEFAULT_QUAD_ORDER = 12
DEFAULT_QUAD_LEVELS = 3
SMOOTH_ORDER = 10
ROOT_TOLERANCE = 1e-12
INSIDE_SLACK = 1e-12
TABLE_TOLERANCE = 1e-8


def bessel_prime_roots(n: int, count: int) -> List[float]:
    """Strictly increasing positive roots of J_n'."""
    if n < 0 or count < 1:
        raise ValueError('bessel_prime_roots requires n >= 0 and count >= 1')
    estimates = special.jnp_zeros(n, count)
    roots: List[float] = []

    def derivative(x: float) -> float:
        return float(special.jvp(n, x))

    for index, estimate in enumerate(estimates):
        half_width = 0.25
        if index > 0:
            half_width = min(half_width, 0.5 * (estimate - estimates[index - 1]))
        lower = max(estimate - half_width, 1e-8)
        upper = estimate + half_width
        if derivative(lower) * derivative(upper) > 0:
            raise NumericalError(f'No sign change of J_{n}\' around {estimate!r}')
        root = optimize.brentq(derivative, lower, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        if abs(derivative(root)) >= ROOT_TOLERANCE:
            raise NumericalError(f'Root of J_{n}\' not resolved: residual={derivative(root)!r}')
        roots.append(float(root))
    return roots


def build_eigenbasis(
    shape: HoleShape,
    mode_count: int,
    quad_order: int = DEFAULT_QUAD_ORDER,
    quad_levels: int = DEFAULT_QUAD_LEVELS,
) -> EigenBasis:
    if mode_count < 1:
        raise ConfigurationError('mode_count must be at least 1', field='M')
    if shape.kind == 'square':
        basis = _square_basis(mode_count, quad_order, quad_levels)
    elif shape.kind == 'disk':
        basis = _disk_basis(mode_count, quad_order, quad_levels)
    elif shape.kind == 'custom':
        basis = _custom_basis(shape, mode_count)
    else:
        raise ConfigurationError(f'Unknown shape kind: {shape.kind}', field='shape')
    LOGGER.debug(
        'slabres eigenbasis built shape=%s modes=%s lambda_max=%.6g nodes=%s',
        shape.kind, mode_count, basis.eigenvalues[-1], basis.rule.size,
    )
    return basis


def scaled_mode(basis: EigenBasis, m: int, h: float, center, aperture_point) -> float:
    """Value of phi_m(.; h) = h^-1 phi_m((x - D)/h) at a point of the aperture."""
    if not 0 <= m <= basis.mode_count:
        raise DomainError(f'Mode index out of range: {m}')
    local = (np.asarray(aperture_point, dtype=float) - np.asarray(center, dtype=float)) / h
    local = local.reshape(1, 2)
    if not bool(basis.contains(local)[0]):
        raise DomainError('Point lies outside the aperture')
    return float(basis.evaluate(local)[0, m]) / h


def orthonormality_defect(basis: EigenBasis) -> float:
    values = basis.evaluate(basis.rule.nodes)
    gram = values.T @ (basis.rule.weights[:, None] * values)
    return float(np.max(np.abs(gram - np.eye(basis.mode_count + 1))))


def load_custom_shape(path: str) -> HoleShape:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f'Cannot read custom shape {path}: {exc}', field='shape') from exc
    if not isinstance(payload, dict):
        raise ConfigurationError(f'Custom shape {path} is not a JSON object', field='shape')
    return HoleShape(kind='custom', table=payload, source=path)


def _square_pairs(mode_count: int) -> List[Tuple[int, int]]:
    bound = int(math.ceil(math.sqrt(mode_count + 1))) + 1
    while True:
        pairs = [(p, q) for p in range(bound + 1) for q in range(bound + 1)]
        pairs.sort(key=lambda pq: (pq[0] ** 2 + pq[1] ** 2, pq[1], pq[0]))
        chosen = pairs[:mode_count + 1]
        largest = chosen[-1][0] ** 2 + chosen[-1][1] ** 2
        if largest < (bound + 1) ** 2:
            return chosen
        bound *= 2


def _square_basis(mode_count: int, quad_order: int, quad_levels: int) -> EigenBasis:
    pairs = _square_pairs(mode_count)
    eigenvalues = np.array([math.pi ** 2 * (p * p + q * q) for p, q in pairs])
    p_index = np.array([p for p, _ in pairs])
    q_index = np.array([q for _, q in pairs])
    top = int(max(p_index.max(), q_index.max()))
    orders = np.arange(top + 1)

    def line_modes(x: np.ndarray) -> np.ndarray:
        values = math.sqrt(2.0) * np.cos(np.pi * orders[None, :] * (x[:, None] + 0.5))
        values[:, 0] = 1.0
        return values

    def evaluator(points: np.ndarray) -> np.ndarray:
        along_x = line_modes(points[:, 0])
        along_y = line_modes(points[:, 1])
        return along_x[:, p_index] * along_y[:, q_index]

    def contains(points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(points) <= 0.5 + INSIDE_SLACK, axis=1)

    return EigenBasis(
        shape=HoleShape(kind='square'),
        mode_count=mode_count,
        eigenvalues=eigenvalues,
        labels=[(p, q) for p, q in pairs],
        rule=quadrature.square_rule(quad_order, quad_levels),
        smooth_rule=quadrature.square_smooth_rule(max(SMOOTH_ORDER, top + 6)),
        evaluator=evaluator,
        contains=contains,
        diameter=math.sqrt(2.0),
    )


def _disk_modes(mode_count: int) -> List[Tuple[float, int, int, int]]:
    """(root, n, s, trig) with trig 0 = cos, 1 = sin, sorted by (lambda, n, trig)."""
    orders = max(4, int(math.sqrt(mode_count)) + 2)
    per_order = max(2, int(math.sqrt(mode_count)) + 2)
    while True:
        modes = [(0.0, 0, 0, 0)]
        for n in range(orders + 1):
            for s, root in enumerate(bessel_prime_roots(n, per_order), start=1):
                modes.append((root, n, s, 0))
                if n > 0:
                    modes.append((root, n, s, 1))
        modes.sort(key=lambda item: (item[0], item[1], item[3]))
        chosen = modes[:mode_count + 1]
        largest = chosen[-1][0]
        next_order = bessel_prime_roots(orders + 1, 1)[0]
        last_roots = [bessel_prime_roots(n, per_order)[-1] for n in range(orders + 1)]
        if largest < next_order and largest < min(last_roots):
            return chosen
        orders *= 2
        per_order *= 2


def _disk_basis(mode_count: int, quad_order: int, quad_levels: int) -> EigenBasis:
    radius = quadrature.DISK_RADIUS
    modes = _disk_modes(mode_count)
    eigenvalues = np.array([(root / radius) ** 2 for root, _, _, _ in modes])
    radial_nodes, radial_weights = quadrature.gauss_on(0.0, radius, 64)
    norms = []
    for root, n, _, _ in modes:
        if root == 0.0:
            norms.append(1.0)
            continue
        radial = np.sum(radial_weights * radial_nodes * special.jv(n, root * radial_nodes / radius) ** 2)
        angular = math.pi if n > 0 else 2.0 * math.pi
        norms.append(math.sqrt(radial * angular))
    norms_array = np.array(norms)
    n_index = np.array([n for _, n, _, _ in modes])
    roots = np.array([root for root, _, _, _ in modes])
    is_sine = np.array([trig == 1 for _, _, _, trig in modes])
    top = int(n_index.max())

    def polar_parts(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r = np.hypot(points[:, 0], points[:, 1])
        theta = np.arctan2(points[:, 1], points[:, 0])
        radial = special.jv(n_index[None, :], roots[None, :] * r[:, None] / radius) / norms_array[None, :]
        angle = n_index[None, :] * theta[:, None]
        cosine = np.cos(angle)
        sine = np.sin(angle)
        values = radial * np.where(is_sine[None, :], sine, cosine)
        # phi evaluated a quarter period further round: cos -> -sin, sin -> cos
        turned = radial * np.where(is_sine[None, :], cosine, -sine)
        return values, turned

    def evaluator(points: np.ndarray) -> np.ndarray:
        return polar_parts(points)[0]

    def contains(points: np.ndarray) -> np.ndarray:
        return np.hypot(points[:, 0], points[:, 1]) <= radius + INSIDE_SLACK

    return EigenBasis(
        shape=HoleShape(kind='disk'),
        mode_count=mode_count,
        eigenvalues=eigenvalues,
        labels=[(n, s, trig) for _, n, s, trig in modes],
        rule=quadrature.disk_rule(quad_order, quad_levels, angular_degree=2 * top),
        smooth_rule=quadrature.disk_rule(max(SMOOTH_ORDER, top + 6), 0, angular_degree=2 * top, graded=False),
        evaluator=evaluator,
        contains=contains,
        diameter=2.0 * radius,
        angular_orders=n_index.astype(float),
        polar_evaluator=polar_parts,
    )


def _custom_basis(shape: HoleShape, mode_count: int) -> EigenBasis:
    table = shape.table
    if not isinstance(table, dict) or 'eigenvalues' not in table or 'mode_values' not in table:
        raise ConfigurationError('Custom shape requires an eigenpair table', field='shape')
    try:
        eigenvalues = np.asarray(table['eigenvalues'], dtype=float)
        nodes = np.asarray(table['quadrature']['nodes'], dtype=float)
        weights = np.asarray(table['quadrature']['weights'], dtype=float)
        values = np.asarray(table['mode_values'], dtype=float)
        area = float(table.get('area', weights.sum()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f'Malformed custom shape table: {exc}', field='shape') from exc
    if eigenvalues.size < mode_count + 1:
        raise ConfigurationError(
            f'Custom shape provides {eigenvalues.size} eigenpairs, {mode_count + 1} requested',
            field='M',
        )
    if values.shape != (nodes.shape[0], eigenvalues.size):
        values = values.T
    if nodes.ndim != 2 or nodes.shape[1] != 2 or values.shape != (nodes.shape[0], eigenvalues.size):
        raise ConfigurationError('Custom shape node and mode tables disagree', field='shape')
    if area <= 0 or np.any(weights <= 0):
        raise ConfigurationError('Custom shape area and weights must be positive', field='shape')
    leading = eigenvalues[:mode_count + 1]
    if leading[0] != 0.0 or leading[1] <= 0.0 or np.any(np.diff(leading) < 0):
        raise ConfigurationError('Custom eigenvalues must satisfy 0 = lambda_0 < lambda_1 <= ...', field='shape')
    if abs(float(weights.sum()) - area) > TABLE_TOLERANCE * area:
        raise ConfigurationError(
            f'Custom quadrature weights sum to {float(weights.sum()):.12g}, area is {area:.12g}', field='shape',
        )

    # rescale to unit area
    scale = math.sqrt(area)
    nodes = nodes / scale
    weights = weights / area
    values = values[:, :mode_count + 1] * scale
    eigenvalues = eigenvalues[:mode_count + 1] * area
    if not np.allclose(values[:, 0], values[0, 0]):
        raise ConfigurationError('Custom shape mode 0 must be constant', field='shape')
    if spatial.Delaunay(nodes).find_simplex(np.zeros((1, 2)))[0] < 0:
        raise ConfigurationError('Custom shape does not contain the origin of its frame', field='shape')
    LOGGER.warning(
        'slabres custom shape source=%s area_scale=%.6g uses tabulated nodes only', shape.source, scale,
    )
    rule = QuadratureRule(nodes=nodes, weights=weights, order=0)

    def lookup(points: np.ndarray) -> np.ndarray:
        distance = np.linalg.norm(points[:, None, :] - nodes[None, :, :], axis=2)
        nearest = np.argmin(distance, axis=1)
        if np.any(distance[np.arange(points.shape[0]), nearest] > 1e-9):
            raise DomainError('Custom shape modes are tabulated at quadrature nodes only')
        return values[nearest]

    def contains(points: np.ndarray) -> np.ndarray:
        distance = np.linalg.norm(points[:, None, :] - nodes[None, :, :], axis=2)
        return distance.min(axis=1) <= 1e-9

    spread = nodes.max(axis=0) - nodes.min(axis=0)
    basis = EigenBasis(
        shape=shape,
        mode_count=mode_count,
        eigenvalues=eigenvalues,
        labels=[(index,) for index in range(mode_count + 1)],
        rule=rule,
        smooth_rule=rule,
        evaluator=lookup,
        contains=contains,
        diameter=float(np.hypot(*spread)),
        area_scale=scale,
    )
    defect = orthonormality_defect(basis)
    if defect > TABLE_TOLERANCE:
        raise ConfigurationError(f'Custom modes are not orthonormal under their quadrature: defect {defect:.3e}', field='shape')
    return basis

"""Quadrature rules on the unit cross-sections.

Outer rules are composite Gauss-Legendre rules on panels graded toward the
boundary. Singular rules integrate y -> f(y) |x - y|^(n-1) for a fixed node x:
the shape is split into pieces with apex x and each piece is mapped with
y = x + t (b - x), which cancels the 1/|x - y| factor. The tangential variable
is stretched with u = d sinh(tau), d the distance from x to the edge, so
nodes close to the boundary keep their accuracy.
"""
from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .models import QuadratureRule


GRADING_RATIO = 0.15
CENTRAL_PANELS = 4
SQUARE_VERTICES = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
DISK_RADIUS = 1.0 / math.sqrt(math.pi)


def gauss_on(a: float, b: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    points, weights = leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (points + 1.0), half * weights


def composite_gauss(breakpoints: Sequence[float], order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        panel_nodes, panel_weights = gauss_on(a, b, order)
        nodes.append(panel_nodes)
        weights.append(panel_weights)
    return np.concatenate(nodes), np.concatenate(weights)


def graded_breakpoints(a: float, b: float, levels: int, lower: bool = True, upper: bool = True) -> List[float]:
    """Panel ends on [a, b], refined geometrically toward the requested ends."""
    length = b - a
    span = 0.5 * length if (lower and upper) else length
    inner_lo = a + span * GRADING_RATIO if lower and levels > 0 else a
    inner_hi = b - span * GRADING_RATIO if upper and levels > 0 else b
    points = [a]
    if lower and levels > 0:
        points.extend(a + span * GRADING_RATIO ** level for level in range(levels, 1, -1))
    points.extend(np.linspace(inner_lo, inner_hi, CENTRAL_PANELS + 1).tolist())
    if upper and levels > 0:
        points.extend(b - span * GRADING_RATIO ** level for level in range(2, levels + 1))
    points.append(b)
    return sorted(set(points))


def square_rule(order: int, levels: int) -> QuadratureRule:
    line_nodes, line_weights = composite_gauss(graded_breakpoints(-0.5, 0.5, levels), order)
    xs, ys = np.meshgrid(line_nodes, line_nodes, indexing='ij')
    wx, wy = np.meshgrid(line_weights, line_weights, indexing='ij')
    nodes = np.column_stack([xs.ravel(), ys.ravel()])
    return QuadratureRule(nodes=nodes, weights=(wx * wy).ravel(), order=order)


def square_smooth_rule(order: int) -> QuadratureRule:
    line_nodes, line_weights = composite_gauss(np.linspace(-0.5, 0.5, CENTRAL_PANELS + 1), order)
    xs, ys = np.meshgrid(line_nodes, line_nodes, indexing='ij')
    wx, wy = np.meshgrid(line_weights, line_weights, indexing='ij')
    return QuadratureRule(
        nodes=np.column_stack([xs.ravel(), ys.ravel()]),
        weights=(wx * wy).ravel(),
        order=order,
    )


def disk_rule(order: int, levels: int, angular_degree: int, graded: bool = True) -> QuadratureRule:
    """Polar rule: radial Gauss panels times a uniform angular rule.

    The angular rule integrates trigonometric polynomials up to
    `angular_degree` exactly.
    """
    if graded:
        breakpoints = graded_breakpoints(0.0, DISK_RADIUS, levels, lower=False, upper=True)
    else:
        breakpoints = np.linspace(0.0, DISK_RADIUS, 3)
    radii, radial_weights = composite_gauss(breakpoints, order)
    angle_count = max(4 * order, angular_degree + 8)
    angles = (np.arange(angle_count) + 0.5) * (2.0 * math.pi / angle_count)
    rr, tt = np.meshgrid(radii, angles, indexing='ij')
    ww = np.outer(radial_weights * radii, np.full(angle_count, 2.0 * math.pi / angle_count))
    nodes = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    return QuadratureRule(nodes=nodes, weights=ww.ravel(), order=order)


def _stretched_nodes(
    lower: np.ndarray,
    upper: np.ndarray,
    dist: np.ndarray,
    order: int,
    panels: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss nodes in tau = asinh(u / d) for u in [lower, upper].

    Panel ends are uniform in u; each panel is a Gauss panel in tau.
    Returns (tau, tau_weights) of shape (na, panels * order).
    """
    xi, xi_weights = gauss_on(0.0, 1.0, order)
    fractions = np.linspace(0.0, 1.0, panels + 1)
    u_breaks = lower[:, None] + (upper - lower)[:, None] * fractions[None, :]
    tau_breaks = np.arcsinh(u_breaks / dist[:, None])
    start = tau_breaks[:, :-1]
    width = tau_breaks[:, 1:] - start
    tau = start[:, :, None] + width[:, :, None] * xi[None, None, :]
    tau_weights = width[:, :, None] * xi_weights[None, None, :]
    na = lower.shape[0]
    return tau.reshape(na, -1), tau_weights.reshape(na, -1)


def polygon_singular_rule(
    centers: np.ndarray,
    vertices: np.ndarray,
    order: int,
    panels: int = CENTRAL_PANELS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular rule for a convex polygon, vectorized over apex nodes.

    Returns (points, weights, rho) with shapes (na, nb, 2), (na, nb), (na, nb)
    such that the integral of f(y) |x_a - y|^(n-1) over the polygon is
    sum_b weights[a, b] * rho[a, b] ** n * f(points[a, b]).
    """
    centers = np.atleast_2d(centers)
    na = centers.shape[0]
    t_nodes, t_weights = gauss_on(0.0, 1.0, order)
    points_parts = []
    weight_parts = []
    rho_parts = []
    for index in range(len(vertices)):
        v1 = vertices[index]
        v2 = vertices[(index + 1) % len(vertices)]
        edge = v2 - v1
        edge_length = float(np.linalg.norm(edge))
        tangent = edge / edge_length
        along = (centers - v1) @ tangent
        foot = v1 + along[:, None] * tangent
        dist = np.maximum(np.linalg.norm(centers - foot, axis=1), 1e-300)
        tau, tau_weights = _stretched_nodes(-along, edge_length - along, dist, order, panels)
        u = dist[:, None] * np.sinh(tau)
        edge_points = foot[:, None, :] + u[:, :, None] * tangent[None, None, :]
        chord = edge_points - centers[:, None, :]
        chord_length = dist[:, None] * np.cosh(tau)
        points = centers[:, None, None, :] + t_nodes[None, None, :, None] * chord[:, :, None, :]
        # dy / |y - x| = d dtau dt
        weights = dist[:, None, None] * tau_weights[:, :, None] * t_weights[None, None, :]
        rho = t_nodes[None, None, :] * chord_length[:, :, None]
        points_parts.append(points.reshape(na, -1, 2))
        weight_parts.append(weights.reshape(na, -1))
        rho_parts.append(rho.reshape(na, -1))
    return (
        np.concatenate(points_parts, axis=1),
        np.concatenate(weight_parts, axis=1),
        np.concatenate(rho_parts, axis=1),
    )


def disk_singular_rule(
    centers: np.ndarray,
    order: int,
    radius: float = DISK_RADIUS,
    panels: int = CENTRAL_PANELS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular rule for the disk, vectorized over apex nodes.

    In a frame rotated so the apex sits at (r0, 0) the boundary is
    b(psi) = radius (cos psi, sin psi). The arc |psi| <= pi/2 facing the apex
    uses sigma = 2 sqrt(radius r0) sin(psi/2), for which
    |b - x| = sqrt(d^2 + sigma^2), stretched like a polygon edge. The back
    arcs use plain Gauss panels in psi.
    """
    centers = np.atleast_2d(centers)
    na = centers.shape[0]
    r0 = np.maximum(np.hypot(centers[:, 0], centers[:, 1]), 1e-14)
    theta0 = np.arctan2(centers[:, 1], centers[:, 0])
    gap = radius - r0
    scale = np.sqrt(radius * r0)
    t_nodes, t_weights = gauss_on(0.0, 1.0, order)

    sigma_max = 2.0 * scale * math.sin(math.pi / 4.0)
    tau, tau_weights = _stretched_nodes(-sigma_max, sigma_max, gap, order, panels)
    sigma = gap[:, None] * np.sinh(tau)
    front_psi = 2.0 * np.arcsin(np.clip(sigma / (2.0 * scale[:, None]), -1.0, 1.0))
    dpsi_dtau = gap[:, None] * np.cosh(tau) / (scale[:, None] * np.cos(0.5 * front_psi))
    front_weights = tau_weights * dpsi_dtau

    back_nodes, back_weights = composite_gauss([math.pi / 2.0, 3.0 * math.pi / 4.0, math.pi], order)
    back_psi = np.concatenate([back_nodes, -back_nodes])
    back_w = np.concatenate([back_weights, back_weights])
    psi = np.concatenate([front_psi, np.broadcast_to(back_psi, (na, back_psi.size))], axis=1)
    psi_weights = np.concatenate([front_weights, np.broadcast_to(back_w, (na, back_w.size))], axis=1)

    cx = radius * np.cos(psi) - r0[:, None]
    cy = radius * np.sin(psi)
    chord_length = np.hypot(cx, cy)
    # |det(b - x, b'(psi))| / |b - x|
    factor = radius * (radius - r0[:, None] * np.cos(psi)) / chord_length
    local_x = r0[:, None, None] + t_nodes[None, None, :] * cx[:, :, None]
    local_y = t_nodes[None, None, :] * cy[:, :, None]
    cos0 = np.cos(theta0)[:, None, None]
    sin0 = np.sin(theta0)[:, None, None]
    points = np.stack([cos0 * local_x - sin0 * local_y, sin0 * local_x + cos0 * local_y], axis=-1)
    weights = (factor * psi_weights)[:, :, None] * t_weights[None, None, :]
    rho = t_nodes[None, None, :] * chord_length[:, :, None]
    return points.reshape(na, -1, 2), weights.reshape(na, -1), rho.reshape(na, -1)

"""Closed-form resonance predictions for small apertures.

Everything here is driven by two numbers per shape: s0_11 = (S0 1, 1) and
alpha, which collects the coupling of the constant mode to the higher modes.
With them

    Pi(eps) = (-s0_11 + alpha) i eps + eps^2 / (2 pi),

and a single hole has kl = k_m - 2i Pi - 4 Pi (Pi - eps^2/(2 pi)) / k_m up to
O(eps^3), eps = k_m h / l, for both parities.
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

from app.exceptions import ConfigurationError, DomainError, IllConditionedError, OutOfRegimeError

from .kernels import GramSet, SingleHoleGram
from .models import BranchPrediction, CouplingMatrix, EigenBasis, Point, ShapeConstants, fabry_perot_order, parity_of_order


LOGGER = logging.getLogger(__name__)
REGIME_LIMIT = 0.2
CONDITION_LIMIT = 1e8
TIE_TOLERANCE = 1e-12


def alpha_constant(
    basis: EigenBasis,
    grams: Union[GramSet, SingleHoleGram],
    M: Optional[int] = None,
    hole: int = 0,
) -> ShapeConstants:
    s0 = grams.s0(hole) if isinstance(grams, GramSet) else grams.s0
    available = min(basis.mode_count, s0.shape[0] - 1)
    M = available if M is None else M
    if M < 2 or M > available:
        raise ConfigurationError(f'alpha needs 2 <= M <= {available}, got {M}', field='M')
    eigenvalues = basis.eigenvalues
    alpha = _alpha(s0, eigenvalues, M)
    coarse = _alpha(s0, eigenvalues, max(1, M // 2))
    convergence = abs(alpha - coarse) / max(abs(alpha), 1e-300)
    return ShapeConstants(
        s0_11=float(s0[0, 0]),
        alpha=alpha,
        M_used=M,
        alpha_convergence=convergence,
    )


def alpha_witnesses(basis: EigenBasis, s0: np.ndarray, M: int, count: int = 5, seed: int = 0) -> List[float]:
    """<(I - P)^-1 w, w> for random real w; positive when I - P is positive definite."""
    system = _coupling_system(s0, basis.eigenvalues, M)
    generator = np.random.default_rng(seed)
    values = []
    for _ in range(count):
        w = generator.standard_normal(M)
        values.append(float(np.linalg.solve(system, w) @ w))
    return values


def shape_constants(grams: GramSet, M: Optional[int] = None) -> List[ShapeConstants]:
    constants: List[ShapeConstants] = []
    computed = {}
    for single in grams.singles:
        if single.key not in computed:
            computed[single.key] = alpha_constant(single.basis, single, M)
        constants.append(computed[single.key])
    return constants


def pi_function(constants: ShapeConstants, eps: complex) -> complex:
    eps = complex(eps)
    if abs(eps) >= 1.0:
        raise OutOfRegimeError(f'Pi(eps) needs |eps| < 1, got {abs(eps):.6g}')
    return (-constants.s0_11 + constants.alpha) * 1j * eps + eps * eps / (2.0 * math.pi)


def fabry_perot_point(m: int, parity: str) -> float:
    """k_m l: (2m - 1) pi for even modes, 2m pi for odd ones."""
    return fabry_perot_order(m, parity) * math.pi


def single_hole_asymptotic(constants: ShapeConstants, l: float, h: float, m: int, parity: str) -> complex:
    k_m = fabry_perot_point(m, parity)
    eps = _regime_eps(k_m, l, h)
    pi_m = pi_function(constants, eps)
    kl = k_m - 2j * pi_m - 4.0 * pi_m * (pi_m - eps * eps / (2.0 * math.pi)) / k_m
    return kl / l


def coupling_matrix(centers: Sequence[Point], k: complex) -> CouplingMatrix:
    k = complex(k)
    if k == 0:
        raise ConfigurationError('coupling matrix needs k != 0', field='k')
    count = len(centers)
    # a lone hole has no coupling at all
    entries = np.zeros((0, 0) if count == 1 else (count, count), dtype=complex)
    for i in range(count):
        for j in range(i + 1, count):
            distance = math.hypot(centers[i][0] - centers[j][0], centers[i][1] - centers[j][1])
            if distance == 0.0:
                raise ConfigurationError(f'Holes {i + 1} and {j + 1} share a center', field='holes')
            value = np.exp(1j * k * distance) / (2.0 * math.pi * k * distance)
            entries[i, j] = value
            entries[j, i] = value
    return CouplingMatrix(entries=entries, k=k, centers=[tuple(center) for center in centers])


def multi_hole_asymptotic(
    constants: Sequence[ShapeConstants],
    centers: Sequence[Point],
    l: float,
    h: float,
    m: int,
    parity: Optional[str] = None,
) -> List[BranchPrediction]:
    """One prediction per branch, sorted by Re k.

    Without `parity`, m is the Fabry-Perot order n (k_m l = n pi) and the
    parity follows from it; with `parity`, m is the per-parity index.
    """
    if len(constants) != len(centers):
        raise ConfigurationError('One set of shape constants per hole is required', field='holes')
    if parity is None:
        order = m
        parity = parity_of_order(order)
    else:
        order = fabry_perot_order(m, parity)
    k_m = order * math.pi
    eps = _regime_eps(k_m, l, h)
    count = len(centers)
    if count == 1:
        k = single_hole_asymptotic(constants[0], l, h, _index(order, parity), parity)
        pi_m = pi_function(constants[0], eps)
        return [BranchPrediction(
            branch=1,
            k=k,
            eigenvalue=-2.0 * pi_m,
            remark_k=k,
            coupling_im=0.0,
            q_leading=q_leading(order, h / l),
        )]

    pis = np.array([pi_function(item, eps) for item in constants])
    coupling = coupling_matrix(centers, k_m / l).entries
    taken: List[int] = []
    predictions: List[BranchPrediction] = []
    for j in range(count):
        shifted = (k_m - 2j * pis[j]) / l * h
        uncoupled = -2.0 * np.array([pi_function(item, shifted) for item in constants])
        perturbed = np.diag(uncoupled) + 2j * eps * eps * coupling
        eigenvalues = _descending_real(np.linalg.eigvals(perturbed))
        target = -2.0 * pis[j]
        distances = np.abs(eigenvalues - target)
        ranked = [index for index in np.argsort(distances, kind='stable') if index not in taken]
        chosen = ranked[0]
        if len(ranked) > 1 and abs(distances[ranked[1]] - distances[chosen]) < TIE_TOLERANCE * max(1.0, abs(target)):
            LOGGER.warning(
                'slabres asymptotics degenerate branch m=%s parity=%s branch=%s eigenvalues=%r',
                order, parity, j + 1, [eigenvalues[ranked[0]], eigenvalues[ranked[1]]],
            )
        taken.append(chosen)
        eigenvalue = complex(eigenvalues[chosen])
        mu = (eigenvalue - uncoupled[j]) / (2j * eps * eps)
        coupling_im = float((2.0 * mu).imag)
        predictions.append(BranchPrediction(
            branch=j + 1,
            k=(k_m + 1j * eigenvalue) / l,
            eigenvalue=eigenvalue,
            coupling_im=coupling_im,
            q_leading=_optional_q(order, h / l, coupling_im),
        ))
    predictions.sort(key=lambda item: (item.k.real, item.k.imag))

    if all(item == constants[0] for item in constants):
        remark = _remark_predictions(constants[0], coupling, eps, k_m, l)
        for branch, (prediction, remark_k) in enumerate(zip(predictions, remark), start=1):
            prediction.branch = branch
            prediction.remark_k = remark_k
            if abs(prediction.k - remark_k) * l > 10.0 * eps ** 3:
                LOGGER.warning(
                    'slabres asymptotics selector mismatch m=%s branch=%s theorem=%r remark=%r',
                    order, branch, prediction.k, remark_k,
                )
    else:
        for branch, prediction in enumerate(predictions, start=1):
            prediction.branch = branch
    return predictions


def q_leading(m: int, h: float, lambda_j_im: Optional[float] = None) -> float:
    """Leading quality factor 1 / ((2 + 2 pi Im lambda_j) m h^2); lambda_j_im is
    the imaginary part of an eigenvalue of 2 M_N, absent for a single hole."""
    if m < 1 or h <= 0:
        raise DomainError(f'q_leading needs m >= 1 and h > 0, got m={m}, h={h}')
    denominator = 2.0 + 2.0 * math.pi * (lambda_j_im or 0.0)
    if denominator <= 0:
        raise OutOfRegimeError(f'Coupling too strong for the leading Q law: denominator={denominator:.6g}')
    return 1.0 / (denominator * m * h * h)


def _optional_q(order: int, h: float, lambda_j_im: float) -> Optional[float]:
    try:
        return q_leading(order, h, lambda_j_im)
    except OutOfRegimeError:
        return None


def _remark_predictions(constants: ShapeConstants, coupling: np.ndarray, eps: float, k_m: float, l: float) -> List[complex]:
    """Identical holes: Pi_j = Pi(eps) - i eps^2 mu_j, mu_j eigenvalues of M_N by descending real part."""
    pi_m = pi_function(constants, eps)
    values = []
    for mu in _descending_real(np.linalg.eigvals(coupling)):
        pi_j = pi_m - 1j * eps * eps * mu
        kl = k_m - 2j * pi_j - 4.0 * pi_j * (pi_m - eps * eps / (2.0 * math.pi)) / k_m
        values.append(complex(kl / l))
    return sorted(values, key=lambda value: (value.real, value.imag))


def _descending_real(values: np.ndarray) -> np.ndarray:
    return values[np.lexsort((-values.imag, -values.real))]


def _regime_eps(k_m: float, l: float, h: float) -> float:
    if l <= 0 or h <= 0:
        raise DomainError(f'l and h must be positive, got l={l}, h={h}')
    eps = k_m * h / l
    if eps >= REGIME_LIMIT:
        raise OutOfRegimeError(f'eps_m = {eps:.6g} is outside the small-aperture regime (< {REGIME_LIMIT})')
    return eps


def _index(order: int, parity: str) -> int:
    return (order + 1) // 2 if parity == 'even' else order // 2


def _coupling_system(s0: np.ndarray, eigenvalues: np.ndarray, M: int) -> np.ndarray:
    quarter = eigenvalues[1:M + 1] ** 0.25
    return np.eye(M) + quarter[:, None] * s0[1:M + 1, 1:M + 1] * quarter[None, :]


def _alpha(s0: np.ndarray, eigenvalues: np.ndarray, M: int) -> float:
    system = _coupling_system(s0, eigenvalues, M)
    condition = float(np.linalg.cond(system))
    if condition >= CONDITION_LIMIT:
        raise IllConditionedError(f'I - P is ill-conditioned at M={M}: cond={condition:.3e}', condition=condition)
    vector = eigenvalues[1:M + 1] ** 0.25 * s0[0, 1:M + 1]
    solution = np.linalg.solve(system, vector)
    return float(solution @ vector)

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np


PARITIES = ('even', 'odd')
SHAPE_KINDS = ('square', 'disk', 'custom')
Point = Tuple[float, float]


def complex_to_list(value: complex) -> List[float]:
    value = complex(value)
    return [value.real, value.imag]


def complex_from_list(payload: Union[Sequence[float], complex, float]) -> complex:
    if isinstance(payload, (int, float, complex)):
        return complex(payload)
    return complex(float(payload[0]), float(payload[1]))


def fabry_perot_order(m: int, parity: str) -> int:
    """Integer n with k_m l = n pi for the m-th point of the given parity."""
    if parity == 'even':
        return 2 * m - 1
    if parity == 'odd':
        return 2 * m
    raise ValueError(f'Unknown parity: {parity}')


def parity_of_order(order: int) -> str:
    return 'even' if order % 2 == 1 else 'odd'


@dataclass(frozen=True)
class HoleShape:
    kind: str
    table: Optional[dict] = field(default=None, compare=False, repr=False)
    source: Optional[str] = None

    def descriptor(self) -> Dict[str, object]:
        payload: Dict[str, object] = {'kind': self.kind}
        if self.kind == 'custom':
            payload['table'] = self.table
        return payload

    def to_dict(self) -> Dict[str, object]:
        if self.kind == 'custom' and self.source:
            return {'kind': 'custom', 'source': self.source}
        return self.descriptor()

    @classmethod
    def from_dict(cls, payload: Union[str, dict]) -> 'HoleShape':
        if isinstance(payload, str):
            return cls(kind=payload)
        return cls(
            kind=payload.get('kind', ''),
            table=payload.get('table'),
            source=payload.get('source'),
        )


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    def to_dict(self) -> Dict[str, object]:
        return {
            'nodes': self.nodes.tolist(),
            'weights': self.weights.tolist(),
            'order': self.order,
        }


@dataclass
class EigenBasis:
    shape: HoleShape
    mode_count: int
    eigenvalues: np.ndarray
    labels: List[Tuple[int, ...]]
    rule: QuadratureRule
    smooth_rule: QuadratureRule
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    contains: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    diameter: float = 1.0
    area_scale: float = 1.0
    # disk only: angular order per mode and (phi, quarter-turned phi) pairs
    angular_orders: Optional[np.ndarray] = None
    polar_evaluator: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = field(default=None, repr=False)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Mode values at unit-frame points, shape (npoints, mode_count + 1)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.evaluator(points)

    def truncated(self, mode_count: int) -> 'EigenBasis':
        if mode_count > self.mode_count:
            raise ValueError('Cannot extend a basis by truncation')
        full = self.evaluator
        polar = None
        if self.polar_evaluator is not None:
            full_polar = self.polar_evaluator

            def polar(points):
                values, turned = full_polar(points)
                return values[:, :mode_count + 1], turned[:, :mode_count + 1]

        return EigenBasis(
            shape=self.shape,
            mode_count=mode_count,
            eigenvalues=self.eigenvalues[:mode_count + 1].copy(),
            labels=self.labels[:mode_count + 1],
            rule=self.rule,
            smooth_rule=self.smooth_rule,
            evaluator=lambda points: full(points)[:, :mode_count + 1],
            contains=self.contains,
            diameter=self.diameter,
            area_scale=self.area_scale,
            angular_orders=None if self.angular_orders is None else self.angular_orders[:mode_count + 1].copy(),
            polar_evaluator=polar,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            'shape': self.shape.to_dict(),
            'mode_count': self.mode_count,
            'eigenvalues': self.eigenvalues.tolist(),
            'labels': [list(label) for label in self.labels],
            'quadrature_order': self.rule.order,
            'quadrature_nodes': self.rule.size,
            'area_scale': self.area_scale,
        }


@dataclass(frozen=True)
class Hole:
    center: Point
    shape: HoleShape

    def to_dict(self) -> Dict[str, object]:
        return {'center': list(self.center), 'shape': self.shape.to_dict()}


@dataclass(frozen=True)
class SearchBox:
    eps0: float = 1e-3
    K: float = 200.0
    im_depth: float = 10.0

    def contains(self, k: complex) -> bool:
        return k.real > 0 and k.imag < 0 and self.eps0 < abs(k) < self.K

    def to_dict(self) -> Dict[str, float]:
        return {'eps0': self.eps0, 'K': self.K, 'im_depth': self.im_depth}

    @classmethod
    def from_dict(cls, payload: dict) -> 'SearchBox':
        return cls(
            eps0=float(payload.get('eps0', cls.eps0)),
            K=float(payload.get('K', cls.K)),
            im_depth=float(payload.get('im_depth', cls.im_depth)),
        )


@dataclass(frozen=True)
class SlabConfig:
    l: float
    h: float
    holes: Tuple[Hole, ...]
    M: int
    parity: str = 'even'
    box: SearchBox = SearchBox()

    @property
    def N(self) -> int:
        return len(self.holes)

    @property
    def centers(self) -> List[Point]:
        return [hole.center for hole in self.holes]

    def to_dict(self) -> Dict[str, object]:
        return {
            'l': self.l,
            'h': self.h,
            'holes': [hole.to_dict() for hole in self.holes],
            'M': self.M,
            'parity': self.parity,
            'box': self.box.to_dict(),
        }


@dataclass(frozen=True)
class HoleLayout:
    centers: Tuple[Point, ...]
    h: float
    box: SearchBox = SearchBox()

    def distance(self, i: int, j: int) -> float:
        xi, yi = self.centers[i]
        xj, yj = self.centers[j]
        return math.hypot(xi - xj, yi - yj)

    @property
    def min_distance(self) -> float:
        count = len(self.centers)
        if count < 2:
            return math.inf
        return min(self.distance(i, j) for i in range(count) for j in range(i + 1, count))


@dataclass
class DispersionSystem:
    k: complex
    parity: str
    full: np.ndarray
    reduced: np.ndarray
    a_condition: float
    hole_count: int
    mode_count: int

    @property
    def determinant(self) -> complex:
        return complex(np.linalg.det(self.reduced))


@dataclass
class Resonance:
    k: complex
    parity: str
    m: int
    order: int
    branch: int
    Q: float
    residual: float
    provenance: str
    M: int
    truncation_shift: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            'k': complex_to_list(self.k),
            'parity': self.parity,
            'm': self.m,
            'order': self.order,
            'branch': self.branch,
            'Q': self.Q,
            'residual': self.residual,
            'provenance': self.provenance,
            'M': self.M,
            'truncation_shift': self.truncation_shift,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'Resonance':
        return cls(
            k=complex_from_list(payload['k']),
            parity=payload['parity'],
            m=int(payload['m']),
            order=int(payload['order']),
            branch=int(payload.get('branch', 1)),
            Q=float(payload['Q']),
            residual=float(payload.get('residual', 0.0)),
            provenance=payload.get('provenance', 'direct'),
            M=int(payload.get('M', 0)),
            truncation_shift=payload.get('truncation_shift'),
        )


@dataclass(frozen=True)
class Seed:
    m: int
    parity: str
    branch: int
    k: complex

    @property
    def order(self) -> int:
        return fabry_perot_order(self.m, self.parity)


@dataclass(frozen=True)
class ShapeConstants:
    s0_11: float
    alpha: float
    M_used: int
    alpha_convergence: float

    def to_dict(self) -> Dict[str, float]:
        return {
            's0_11': self.s0_11,
            'alpha': self.alpha,
            'M_used': self.M_used,
            'alpha_convergence': self.alpha_convergence,
        }


@dataclass
class CouplingMatrix:
    entries: np.ndarray
    k: complex
    centers: List[Point]


@dataclass
class BranchPrediction:
    branch: int
    k: complex
    eigenvalue: complex
    remark_k: Optional[complex] = None
    coupling_im: float = 0.0
    q_leading: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        payload: Dict[str, object] = {
            'branch': self.branch,
            'k': complex_to_list(self.k),
            'eigenvalue': complex_to_list(self.eigenvalue),
            'coupling_im': self.coupling_im,
        }
        if self.remark_k is not None:
            payload['remark_k'] = complex_to_list(self.remark_k)
        if self.q_leading is not None:
            payload['q_leading'] = self.q_leading
        return payload


@dataclass
class IncidentSolution:
    k0: float
    parity: str
    b0: np.ndarray
    a: np.ndarray
    forcing: float
    residual: float
    condition: float
    bases: List[EigenBasis] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            'k0': self.k0,
            'parity': self.parity,
            'b0': [complex_to_list(value) for value in self.b0],
            'a_norm': [float(np.linalg.norm(row)) for row in self.a],
            'forcing': self.forcing,
            'residual': self.residual,
            'condition': self.condition,
        }


@dataclass
class FieldSample:
    point: Tuple[float, float, float]
    value: complex
    tail_bound: float
    hole: int

    def to_dict(self) -> Dict[str, object]:
        return {
            'point': list(self.point),
            'value': complex_to_list(self.value),
            'abs': abs(self.value),
            'tail_bound': self.tail_bound,
            'hole': self.hole,
        }


@dataclass
class SweepRow:
    h: float
    m: int
    parity: str
    branch: int
    k_direct: complex
    k_asymptotic: complex
    error: float
    Q_direct: float
    Q_scaled: float
    runtime: float
    error_ratio: Optional[float] = None
    order_fit: Optional[float] = None

    CSV_HEADER = (
        'h', 'm', 'parity', 'branch', 're_k_direct', 'im_k_direct',
        're_k_asymptotic', 'im_k_asymptotic', 'error', 'Q_direct',
        'Q_2mh2', 'error_ratio', 'order_fit', 'runtime',
    )

    def csv_row(self) -> List[object]:
        return [
            repr(self.h), self.m, self.parity, self.branch,
            repr(self.k_direct.real), repr(self.k_direct.imag),
            repr(self.k_asymptotic.real), repr(self.k_asymptotic.imag),
            repr(self.error), repr(self.Q_direct), repr(self.Q_scaled),
            '' if self.error_ratio is None else repr(self.error_ratio),
            '' if self.order_fit is None else repr(self.order_fit),
            '%.3f' % self.runtime,
        ]

    def to_dict(self) -> Dict[str, object]:
        return {
            'h': self.h,
            'm': self.m,
            'parity': self.parity,
            'branch': self.branch,
            'k_direct': complex_to_list(self.k_direct),
            'k_asymptotic': complex_to_list(self.k_asymptotic),
            'error': self.error,
            'Q_direct': self.Q_direct,
            'Q_2mh2': self.Q_scaled,
            'error_ratio': self.error_ratio,
            'order_fit': self.order_fit,
        }

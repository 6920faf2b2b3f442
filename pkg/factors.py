"""
Room and Wall nodes as factors over plane variables, and a small
Levenberg-damped Gauss-Newton solver for the resulting scene factor graph.

Planes are optimized as (theta, d) with n = (cos theta, sin theta) and
n·x + d = 0, so normals stay unit length without constraints.

Every room/wall factor is built on the midline of an anti-parallel plane
pair (a, b):

    u = (n_a - n_b) / r,   s = (d_b - d_a) / r,   r = |n_a - n_b|

so points x on the midline satisfy u·x = s. A 4-plane room maps to
f = sum over its two pairs of s·u; a 2-plane room or wall projects its
anchor p onto the midline, f = p - (u·p - s)·u. The residual is
estimate - f, weighted by the factor's information matrix.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DegenerateRoomError, InvalidArgumentError, SingularSystemError
from geometry import PlaneFeature, PlaneObservation, flatten_to_feature

logger = logging.getLogger(__name__)

PAIR_DOT_MAX = -0.7
ROOM2_DOT_MAX = -math.cos(math.radians(25.0))
WALL_DOT_MAX = -0.9
LAMBDA_MIN = 1e-12


@dataclass(frozen=True)
class PlaneParam:
    theta: float
    d: float

    @classmethod
    def from_feature(cls, plane: PlaneFeature) -> "PlaneParam":
        return cls(math.atan2(plane.normal[1], plane.normal[0]), plane.offset)

    @property
    def normal(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def normal_perp(self) -> np.ndarray:
        """d(normal)/d(theta)"""
        return np.array([-math.sin(self.theta), math.cos(self.theta)])


PlaneLike = Union[PlaneFeature, PlaneParam]


def _param(plane: PlaneLike) -> PlaneParam:
    return plane if isinstance(plane, PlaneParam) else PlaneParam.from_feature(plane)


@dataclass(frozen=True)
class FactorEval:
    """Residual and its Jacobians: w.r.t. the estimate (2x2) and each plane's (theta, d) (2x2)"""
    residual: np.ndarray
    jac_estimate: np.ndarray
    jac_planes: Tuple[np.ndarray, ...]


def room_center(plane_ids: Sequence[str], planes: Mapping[str, PlaneFeature]) -> np.ndarray:
    """Mean of the member planes' centroids"""
    if not plane_ids:
        raise InvalidArgumentError("room_center needs at least one plane")
    missing = [pid for pid in plane_ids if pid not in planes]
    if missing:
        raise InvalidArgumentError(f"unknown plane ids {missing}")
    return np.mean([planes[pid].centroid for pid in plane_ids], axis=0)


class _Midline:
    """Midline of one anti-parallel pair with its derivatives"""

    def __init__(self, a: PlaneParam, b: PlaneParam, dot_max: float = PAIR_DOT_MAX):
        na, nb = a.normal, b.normal
        dot = float(na @ nb)
        if dot >= dot_max:
            raise DegenerateRoomError(f"plane normals are not anti-parallel (n_a·n_b = {dot:.3f})")
        v = na - nb
        self.r = float(np.linalg.norm(v))
        self.u = v / self.r
        self.s = (b.d - a.d) / self.r
        self.du_dv = (np.eye(2) - np.outer(self.u, self.u)) / self.r
        self.dv_dtheta = (a.normal_perp, -b.normal_perp)

    def plane_jacobians(self, df_dv: np.ndarray, df_dda: np.ndarray, df_ddb: np.ndarray):
        ja = np.column_stack([df_dv @ self.dv_dtheta[0], df_dda])
        jb = np.column_stack([df_dv @ self.dv_dtheta[1], df_ddb])
        return ja, jb

    def offset_point(self):
        """s·u with its Jacobians"""
        f = self.s * self.u
        df_dv = (self.s / self.r) * (np.eye(2) - 2.0 * np.outer(self.u, self.u))
        return f, self.plane_jacobians(df_dv, -self.u / self.r, self.u / self.r)

    def project(self, p: np.ndarray):
        """Orthogonal projection of p onto the midline with its Jacobians"""
        q = float(self.u @ p) - self.s
        f = p - q * self.u
        dq_dv = p @ self.du_dv + (self.s / self.r) * self.u
        df_dv = -(np.outer(self.u, dq_dv) + q * self.du_dv)
        return f, self.plane_jacobians(df_dv, -self.u / self.r, self.u / self.r)


def pair_room_planes(params: Sequence[PlaneParam], ids: Optional[Sequence[str]] = None) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Split four planes into two anti-parallel pairs, starting from the most negative normal dot"""
    if len(params) != 4:
        raise DegenerateRoomError(f"a 4-plane room needs 4 planes, got {len(params)}")
    keys = list(ids) if ids is not None else list(range(4))
    normals = [p.normal for p in params]
    candidates = []
    for i in range(4):
        for j in range(i + 1, 4):
            candidates.append((float(normals[i] @ normals[j]), tuple(sorted((keys[i], keys[j]))), (i, j)))
    _, _, first = min(candidates)
    second = tuple(k for k in range(4) if k not in first)
    for i, j in (first, second):
        dot = float(normals[i] @ normals[j])
        if dot >= PAIR_DOT_MAX:
            raise DegenerateRoomError(f"no anti-parallel pairing (best complement dot = {dot:.3f})")
    return first, second


def _room4_f(params: Sequence[PlaneParam], ids=None):
    jac = [None] * 4
    f = np.zeros(2)
    for i, j in pair_room_planes(params, ids):
        fp, (ja, jb) = _Midline(params[i], params[j]).offset_point()
        f = f + fp
        jac[i], jac[j] = ja, jb
    return f, jac


def residual_room4(center, planes: Sequence[PlaneLike], ids: Optional[Sequence[str]] = None) -> FactorEval:
    params = [_param(p) for p in planes]
    if ids is None and all(isinstance(p, PlaneFeature) for p in planes):
        ids = [p.id for p in planes]
    f, jac = _room4_f(params, ids)
    return FactorEval(np.asarray(center, dtype=float) - f, np.eye(2), tuple(-j for j in jac))


def _projected(estimate, a: PlaneParam, b: PlaneParam, p, dot_max: float) -> FactorEval:
    f, (ja, jb) = _Midline(a, b, dot_max).project(np.asarray(p, dtype=float))
    return FactorEval(np.asarray(estimate, dtype=float) - f, np.eye(2), (-ja, -jb))


def residual_room2(center, plane_a: PlaneLike, plane_b: PlaneLike, anchor) -> FactorEval:
    return _projected(center, _param(plane_a), _param(plane_b), anchor, PAIR_DOT_MAX)


def residual_wall(center, plane_a: PlaneLike, plane_b: PlaneLike, anchor=None) -> FactorEval:
    """Same contract as residual_room2; the anchor defaults to the mean of the two centroids"""
    if anchor is None:
        if not (isinstance(plane_a, PlaneFeature) and isinstance(plane_b, PlaneFeature)):
            raise InvalidArgumentError("residual_wall needs an anchor when given plane parameters")
        anchor = (np.asarray(plane_a.centroid) + np.asarray(plane_b.centroid)) / 2.0
    return _projected(center, _param(plane_a), _param(plane_b), anchor, PAIR_DOT_MAX)


def _check_information(information) -> np.ndarray:
    lam = np.eye(2) if information is None else np.asarray(information, dtype=float)
    if lam.shape != (2, 2) or not np.allclose(lam, lam.T):
        raise InvalidArgumentError("information matrix must be symmetric 2x2")
    if np.min(np.linalg.eigvalsh(lam)) <= 0:
        raise InvalidArgumentError("information matrix must be positive definite")
    return lam


@dataclass(frozen=True, eq=False)
class RoomNode4:
    id: str
    center: np.ndarray
    plane_ids: Tuple[str, str, str, str]
    information: np.ndarray = field(default_factory=lambda: np.eye(2))

    def evaluate(self, center, params: Sequence[PlaneParam]) -> FactorEval:
        return residual_room4(center, params, self.plane_ids)


@dataclass(frozen=True, eq=False)
class RoomNode2:
    id: str
    center: np.ndarray
    plane_ids: Tuple[str, str]
    anchor: np.ndarray
    information: np.ndarray = field(default_factory=lambda: np.eye(2))

    def evaluate(self, center, params: Sequence[PlaneParam]) -> FactorEval:
        return residual_room2(center, params[0], params[1], self.anchor)


@dataclass(frozen=True, eq=False)
class WallNode:
    id: str
    center: np.ndarray
    plane_ids: Tuple[str, str]
    anchor: np.ndarray
    information: np.ndarray = field(default_factory=lambda: np.eye(2))

    def evaluate(self, center, params: Sequence[PlaneParam]) -> FactorEval:
        return residual_wall(center, params[0], params[1], self.anchor)


SceneNode = Union[RoomNode4, RoomNode2, WallNode]


def _wrap_angle(a: float) -> float:
    wrapped = math.remainder(a, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True, eq=False)
class PlanePriorFactor:
    """Anchors one plane's (theta, d) to its measured value"""
    plane_id: str
    measured: PlaneParam
    information: np.ndarray = field(default_factory=lambda: np.eye(2))

    def residual(self, current: PlaneParam) -> np.ndarray:
        return np.array([_wrap_angle(current.theta - self.measured.theta), current.d - self.measured.d])


def _whitener(information: np.ndarray) -> np.ndarray:
    """L^T with information = L L^T, so that |L^T r|^2 = r^T information r"""
    return np.linalg.cholesky(information).T


@dataclass(frozen=True, eq=False)
class SceneFactorGraph:
    planes: Tuple[PlaneFeature, ...]
    plane_params: Tuple[PlaneParam, ...]
    nodes: Tuple[SceneNode, ...]
    priors: Tuple[PlanePriorFactor, ...] = ()

    @property
    def plane_index(self) -> Dict[str, int]:
        return {p.id: i for i, p in enumerate(self.planes)}

    @classmethod
    def from_detections(cls, planes: Sequence[PlaneFeature],
                        rooms: Sequence[Tuple[str, Sequence[str]]] = (),
                        walls: Sequence[Tuple[str, Sequence[str]]] = (),
                        prior_weight: float = 1.0,
                        information: Optional[np.ndarray] = None,
                        strict: bool = False) -> "SceneFactorGraph":
        """Room/wall nodes initialized at centroid means, plus one prior per plane"""
        plane_map = {p.id: p for p in planes}
        lam = _check_information(information)
        nodes: List[SceneNode] = []

        for node_id, ids in rooms:
            try:
                nodes.append(cls._room_node(node_id, tuple(ids), plane_map, lam))
            except DegenerateRoomError as e:
                if strict:
                    raise
                logger.warning("skipping room %s: %s", node_id, e)
        for node_id, ids in walls:
            try:
                nodes.append(cls._wall_node(node_id, tuple(ids), plane_map, lam))
            except DegenerateRoomError as e:
                if strict:
                    raise
                logger.warning("skipping wall %s: %s", node_id, e)

        priors = ()
        if prior_weight > 0:
            prior_info = prior_weight * np.eye(2)
            priors = tuple(PlanePriorFactor(p.id, PlaneParam.from_feature(p), prior_info) for p in planes)
        return cls(tuple(planes), tuple(PlaneParam.from_feature(p) for p in planes), tuple(nodes), priors)

    @staticmethod
    def _room_node(node_id, ids, plane_map, lam) -> SceneNode:
        center = room_center(ids, plane_map)
        if len(ids) == 4:
            # validates the pairing up front
            pair_room_planes([PlaneParam.from_feature(plane_map[i]) for i in ids], ids)
            return RoomNode4(node_id, center, ids, lam)
        if len(ids) == 2:
            _require_dot(plane_map[ids[0]], plane_map[ids[1]], ROOM2_DOT_MAX, f"room {node_id}")
            return RoomNode2(node_id, center, ids, center.copy(), lam)
        raise DegenerateRoomError(f"room {node_id} has {len(ids)} planes, expected 2 or 4")

    @staticmethod
    def _wall_node(node_id, ids, plane_map, lam) -> WallNode:
        if len(ids) != 2:
            raise DegenerateRoomError(f"wall {node_id} has {len(ids)} planes, expected 2")
        center = room_center(ids, plane_map)
        _require_dot(plane_map[ids[0]], plane_map[ids[1]], WALL_DOT_MAX, f"wall {node_id}")
        return WallNode(node_id, center, ids, center.copy(), lam)

    # state vector: [theta_0, d_0, theta_1, d_1, ..., cx_0, cy_0, cx_1, cy_1, ...]
    def state(self) -> np.ndarray:
        plane_part = [v for p in self.plane_params for v in (p.theta, p.d)]
        node_part = [v for node in self.nodes for v in node.center]
        return np.array(plane_part + node_part, dtype=float)

    def _unpack(self, x: np.ndarray) -> Tuple[List[PlaneParam], List[np.ndarray]]:
        n = len(self.planes)
        params = [PlaneParam(float(x[2 * i]), float(x[2 * i + 1])) for i in range(n)]
        centers = [x[2 * n + 2 * k: 2 * n + 2 * k + 2] for k in range(len(self.nodes))]
        return params, centers

    def with_state(self, x: np.ndarray) -> "SceneFactorGraph":
        params, centers = self._unpack(x)
        nodes = tuple(replace(node, center=np.array(c, dtype=float)) for node, c in zip(self.nodes, centers))
        return replace(self, plane_params=tuple(params), nodes=nodes)

    def linearize(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked whitened residual and Jacobian at state x"""
        params, centers = self._unpack(x)
        index = self.plane_index
        n_planes = len(self.planes)
        rows_r, rows_j = [], []

        for k, (node, center) in enumerate(zip(self.nodes, centers)):
            idx = [index[pid] for pid in node.plane_ids]
            ev = node.evaluate(center, [params[i] for i in idx])
            jac = np.zeros((2, x.size))
            col = 2 * n_planes + 2 * k
            jac[:, col:col + 2] = ev.jac_estimate
            for i, jp in zip(idx, ev.jac_planes):
                jac[:, 2 * i:2 * i + 2] += jp
            white = _whitener(node.information)
            rows_r.append(white @ ev.residual)
            rows_j.append(white @ jac)

        for prior in self.priors:
            i = index[prior.plane_id]
            jac = np.zeros((2, x.size))
            jac[:, 2 * i:2 * i + 2] = np.eye(2)
            white = _whitener(prior.information)
            rows_r.append(white @ prior.residual(params[i]))
            rows_j.append(white @ jac)

        if not rows_r:
            return np.zeros(0), np.zeros((0, x.size))
        return np.concatenate(rows_r), np.vstack(rows_j)

    def cost(self, x: Optional[np.ndarray] = None) -> float:
        """Sum of squared Mahalanobis residual norms"""
        r, _ = self.linearize(self.state() if x is None else x)
        return float(r @ r)

    def refined_planes(self) -> List[PlaneFeature]:
        """Current plane estimates, with the measured endpoints projected onto them"""
        out = []
        for plane, param in zip(self.planes, self.plane_params):
            n = param.normal
            obs = PlaneObservation(plane.id, plane.endpoints, (float(n[0]), float(n[1])), param.d)
            out.append(flatten_to_feature(obs))
        return out


def _require_dot(a: PlaneFeature, b: PlaneFeature, dot_max: float, what: str):
    dot = float(np.dot(a.normal, b.normal))
    if dot >= dot_max:
        raise DegenerateRoomError(f"{what}: planes {a.id}, {b.id} are not anti-parallel (dot = {dot:.3f})")


@dataclass(frozen=True)
class RefineConfig:
    max_iters: int = 50
    damping: float = 1e-6
    step_tol: float = 1e-10
    max_damping: float = 1e8

    def __post_init__(self):
        if self.max_iters < 0:
            raise InvalidArgumentError("max_iters must be >= 0")
        if not self.damping > 0 or not self.max_damping >= self.damping:
            raise InvalidArgumentError("need 0 < damping <= max_damping")
        if not self.step_tol > 0:
            raise InvalidArgumentError("step_tol must be > 0")


@dataclass
class RefineResult:
    graph: SceneFactorGraph
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    cost_history: List[float] = field(default_factory=list)


def _solve_damped(hessian: np.ndarray, gradient: np.ndarray, lam: float) -> Optional[np.ndarray]:
    try:
        step = np.linalg.solve(hessian + lam * np.eye(hessian.shape[0]), -gradient)
    except np.linalg.LinAlgError:
        return None
    return step if np.all(np.isfinite(step)) else None


def refine(graph: SceneFactorGraph, config: RefineConfig = RefineConfig()) -> RefineResult:
    """Levenberg-damped Gauss-Newton; only cost-decreasing steps are accepted"""
    x = graph.state()
    r, jac = graph.linearize(x)
    cost = float(r @ r)
    initial_cost = cost
    history = [cost]
    lam = config.damping
    iterations = 0
    converged = x.size == 0

    while not converged and iterations < config.max_iters:
        hessian = jac.T @ jac
        gradient = jac.T @ r
        step = _solve_damped(hessian, gradient, lam)
        while step is None:
            lam *= 10.0
            if lam > config.max_damping:
                cond = float(np.linalg.cond(hessian))
                raise SingularSystemError("normal equations stay singular after damping", cond, lam)
            step = _solve_damped(hessian, gradient, lam)

        if float(np.linalg.norm(step)) < config.step_tol:
            converged = True
            break

        candidate = x + step
        r_new, jac_new = graph.linearize(candidate)
        new_cost = float(r_new @ r_new)
        if new_cost <= cost:
            x, r, jac, cost = candidate, r_new, jac_new, new_cost
            iterations += 1
            history.append(cost)
            lam = max(lam / 10.0, LAMBDA_MIN)
        else:
            lam *= 10.0
            if lam > config.max_damping:
                logger.warning("refine: damping exceeded %.1e without a cost decrease", config.max_damping)
                break

    logger.info("refine: cost %.6e -> %.6e in %d iterations (converged=%s)",
                initial_cost, cost, iterations, converged)
    return RefineResult(graph.with_state(x), initial_cost, cost, iterations, converged, history)

"""Optimization-based implicit Euler stepper and static untangler.

Each frame minimizes

    inertia + gravity + stretching + bending + body collision + friction
    + lambda1 * repulsion + lambda2 * contour loss

over garment positions. The minimizer is found by gradient descent with
Armijo backtracking, where the descent direction is preconditioned by a
fixed sparse matrix (lumped mass over dt^2, a spring Laplacian and a diagonal
contact-curvature estimate). Contours, node classes, correspondences and body
contacts are rebuilt at iteration 0 and every ``graph_refresh_every``
iterations and stay frozen in between. The contour loss is re-evaluated with
a fresh intersection test at every trial point, so its value always refers to
the actual geometry.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bvh import build_bvh
from .collision import (DEFAULT_BODY_EPS, DEFAULT_CLOTH_EPS, CorrespondenceSet, IntersectionSet,
                        detect_intersections, nearest_body_faces)
from .energy import (MaterialParams, bending_energy, body_collision_energy, dihedral_angles,
                     friction_contacts, friction_energy, gravity_energy, inertia_energy,
                     repulsion_curvature, repulsion_energy, repulsion_frame, stretching_energy)
from .graph import GraphConfig, build_input_graph
from .icloss import IcGradientMode, ic_gradient, ic_loss_value

log = logging.getLogger(__name__)

ENERGY_TERMS = ("stretch", "bend", "inertia", "gravity", "body", "repulsion", "friction")


class NonFiniteState(FloatingPointError):
    """Raised when positions or gradients stop being finite."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SimulationError(RuntimeError):
    """Wraps a step failure with the frame index where it happened."""

    def __init__(self, frame, cause):
        super().__init__(f"frame {frame}: {cause}")
        self.frame = frame
        self.cause = cause


class Ablation(enum.Enum):
    OURS = "ours"
    FULL_GRADIENT = "full-gradient"
    NO_IC_LOSS = "no-ic-loss"
    ONLY_REPULSIVE = "only-repulsive"

    @classmethod
    def parse(cls, value) -> "Ablation":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("_", "-"))


class ResolveStatus(enum.Enum):
    RESOLVED = "Resolved"
    UNRESOLVED = "Unresolved"


@dataclass
class SolverConfig:
    """Solver settings.

    ``lambda1`` and ``lambda2`` are tuned for SI units with the default
    material; ``resolve_regularization`` is the diagonal added to the
    preconditioner when no inertia term is present (static untangling), and
    ``resolve_max_step`` caps how far any vertex moves in one untangling
    iteration, since nothing else bounds the step there. With
    ``resolve_monotone`` an untangling trial that raises the intersection
    count is shrunk like an uphill one, unless the step is already below
    ``guard_freeze_below``.
    With ``keep_intersection_free``, a trial point that would introduce
    intersections into an intersection-free iterate is rejected and the step
    shrinks. Below ``guard_freeze_below`` the vertices around the new
    intersections are held still for that step instead and the trial is
    repeated at the same length.
    """

    dt: float = 1.0 / 30.0
    lambda1: float = 1e6
    lambda2: float = 100.0
    max_inner_iters: int = 40
    graph_refresh_every: int = 8
    grad_tolerance: float = 1e-5
    shrink: float = 0.5
    armijo: float = 1e-4
    max_halvings: int = 20
    ic_mode: IcGradientMode = IcGradientMode.TRANSLATIONAL_ONLY
    xi: float = 0.001
    eps_cloth: float = DEFAULT_CLOTH_EPS
    eps_body: float = DEFAULT_BODY_EPS
    ablation: Ablation = Ablation.OURS
    pinned: tuple = ()
    resolve_max_iters: int = 600
    resolve_patience: int = 120
    resolve_regularization: float = 1.0
    resolve_max_step: float = 0.01
    resolve_monotone: bool = True
    resolve_inertia: bool = False
    keep_intersection_free: bool = True
    guard_freeze_below: float = 1e-3
    record_wall_time: bool = False
    material: MaterialParams = field(default_factory=MaterialParams)

    def __post_init__(self):
        self.ic_mode = IcGradientMode.parse(self.ic_mode)
        self.ablation = Ablation.parse(self.ablation)
        self.pinned = tuple(int(i) for i in self.pinned)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0.0 < self.armijo < 1.0:
            raise ValueError("armijo constant must lie in (0, 1)")
        if min(self.xi, self.eps_cloth, self.eps_body, self.resolve_max_step) <= 0:
            raise ValueError("xi, eps_cloth, eps_body and resolve_max_step must be positive")
        if min(self.lambda1, self.lambda2, self.resolve_regularization) < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.graph_refresh_every < 1 or self.max_inner_iters < 0 or self.max_halvings < 1 \
                or self.resolve_max_iters < 0 or self.resolve_patience < 1:
            raise ValueError("iteration counts must be positive")

    @property
    def classify(self) -> bool:
        return self.ablation is not Ablation.ONLY_REPULSIVE

    @property
    def uses_ic(self) -> bool:
        return self.ablation in (Ablation.OURS, Ablation.FULL_GRADIENT) and self.lambda2 > 0

    @property
    def effective_ic_mode(self) -> IcGradientMode:
        return IcGradientMode.FULL if self.ablation is Ablation.FULL_GRADIENT else self.ic_mode


@dataclass
class StatsRecord:
    frame: int
    intersecting_pairs: int
    ic_loss: float
    energies: dict[str, float]
    inner_iters: int
    wall_time_ms: float = 0.0
    graph_refreshes: int = 0
    line_search_stalls: int = 0


@dataclass
class SimState:
    positions: np.ndarray
    prev_positions: np.ndarray
    velocities: np.ndarray
    frame_index: int = 0
    body_positions: np.ndarray | None = None
    stats: list[StatsRecord] = field(default_factory=list)

    @classmethod
    def at_rest(cls, positions, body_positions=None) -> "SimState":
        x = np.array(positions, dtype=np.float64)
        bx = None if body_positions is None else np.array(body_positions, dtype=np.float64)
        return cls(x, x.copy(), np.zeros_like(x), 0, bx)


@dataclass
class ResolveResult:
    state: SimState
    status: ResolveStatus
    trajectory: list[int]
    iterations: int


@dataclass
class _Window:
    """Quantities frozen between two graph refreshes."""

    corr: CorrespondenceSet
    frame: tuple | None
    body: object
    friction: object
    solve: object


class _Problem:
    """Objective, gradient and preconditioner for one minimization."""

    def __init__(self, mesh, config: SolverConfig, x_prev, velocities=None, body_mesh=None,
                 body_x=None, body_prev_x=None, dynamic=True):
        self.mesh = mesh
        self.cfg = config
        self.p = config.material
        self.x_prev = np.asarray(x_prev, dtype=np.float64)
        self.v = np.zeros_like(self.x_prev) if velocities is None else np.asarray(velocities, dtype=np.float64)
        self.dynamic = dynamic
        self.body_mesh = body_mesh if body_mesh is not None and body_mesh.n_faces else None
        self.body_x = body_x
        self.body_prev_x = body_prev_x if body_prev_x is not None else body_x
        self.body_bvh = build_bvh(self.body_mesh, body_x) if self.body_mesh is not None else None
        self.rest_lengths = mesh.rest_lengths()
        self.rest_angles = dihedral_angles(mesh, mesh.positions) if len(mesh.hinges) else np.zeros(0)
        self.mass = mesh.vertex_mass
        self.pinned = np.zeros(mesh.n_vertices, dtype=bool)
        if config.pinned:
            self.pinned[np.asarray(config.pinned)] = True
        self.window: _Window | None = None
        self.refreshes = 0
        lap = self._laplacian()
        if dynamic:
            base = sp.diags(self.mass / config.dt ** 2)
        else:
            base = sp.diags(np.full(mesh.n_vertices, config.resolve_regularization))
        self.base = (base + self.p.stretch_stiffness * lap).tocsr()

    def _laplacian(self):
        n = self.mesh.n_vertices
        e = self.mesh.edges
        if len(e) == 0:
            return sp.csr_matrix((n, n))
        w = np.ones(len(e))
        adj = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                                        np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n))
        deg = np.asarray(adj.sum(axis=1)).ravel()
        return (sp.diags(deg) - adj).tocsr()

    def zone(self, intersections) -> np.ndarray:
        """Vertices of the given intersecting faces plus their one-ring."""
        faces = self.mesh.faces
        core = np.zeros(self.mesh.n_vertices, dtype=bool)
        core[faces[intersections.face_a]] = True
        core[faces[intersections.face_b]] = True
        e = self.mesh.edges
        ring = core.copy()
        ring[e[core[e[:, 0]], 1]] = True
        ring[e[core[e[:, 1]], 0]] = True
        return ring

    # graph refresh -------------------------------------------------------

    def refresh(self, x, d_prev_positions):
        cfg = self.cfg
        gcfg = GraphConfig(cfg.eps_cloth, cfg.eps_body, cfg.classify)
        graph = build_input_graph(self.mesh, x, d_prev_positions, None, None, gcfg)
        corr = graph.repulsive
        frame = repulsion_frame(corr, x, self.mesh.faces) if len(corr) else None
        body = None
        if self.body_mesh is not None:
            body = nearest_body_faces(x, self.body_mesh, self.body_x, self.body_bvh, cfg.eps_body)
        fric = None
        if self.dynamic and self.p.friction_coeff > 0:
            fric = friction_contacts(corr, x, self.mesh.faces, cfg.xi, body, self.body_mesh, self.body_x,
                                     self.body_prev_x, self.p.body_margin)
        curv = cfg.lambda1 * repulsion_curvature(corr, x, self.mesh.faces, cfg.xi)
        if body is not None and len(body):
            d = np.einsum("ij,ij->i", x[body.nodes] - body.anchor, body.normals)
            h = 6.0 * self.p.body_collision_stiffness * np.maximum(self.p.body_margin - d, 0.0)
            curv += np.bincount(body.nodes, weights=h, minlength=len(x))
        if fric is not None and len(fric):
            c = self.p.friction_coeff * self.p.friction_stiffness
            curv += c * np.bincount(fric.cloth_node, minlength=len(x))
            curv += c * np.bincount(fric.body_node, minlength=len(x))
        mat = (self.base + sp.diags(curv)).tolil()
        for i in np.flatnonzero(self.pinned):
            mat.rows[i], mat.data[i] = [i], [1.0]
        mat = mat.tocsc()
        if self.pinned.any():
            keep = sp.diags((~self.pinned).astype(float))
            mat = (keep @ mat @ keep + sp.diags(self.pinned.astype(float))).tocsc()
        self.window = _Window(corr, frame, body, fric, splu(mat).solve)
        self.refreshes += 1
        return graph

    # objective -----------------------------------------------------------

    def terms(self, x, with_grad=True):
        """Per-term values, total gradient (or None), the fresh intersection set
        and the weighted contour-loss gradient (or None) included in the total."""
        cfg, p, mesh, w = self.cfg, self.p, self.mesh, self.window
        vals: dict[str, float] = {}
        grad = np.zeros_like(x) if with_grad else None

        def add(name, res, weight=1.0):
            vals[name] = res[0]
            if with_grad:
                grad[...] += weight * res[1]

        add("stretch", stretching_energy(mesh, x, p, self.rest_lengths))
        add("bend", bending_energy(mesh, x, p, self.rest_angles))
        if self.dynamic:
            add("inertia", inertia_energy(self.mass, x, self.x_prev, self.v, cfg.dt))
            add("gravity", gravity_energy(self.mass, x, p.gravity))
        elif cfg.resolve_inertia:
            add("inertia", inertia_energy(self.mass, x, self.x_prev, self.v, cfg.dt))
        if self.body_mesh is not None and w.body is not None:
            add("body", body_collision_energy(x, self.body_mesh, self.body_x, p, w.body))
        if len(w.corr):
            add("repulsion", repulsion_energy(w.corr, x, mesh.faces, cfg.xi, w.frame), cfg.lambda1)
        if w.friction is not None:
            add("friction", friction_energy(w.friction, x, self.x_prev, mesh.faces, p))
        inter = detect_intersections(mesh, x)
        ic = ic_loss_value(inter)
        vals["ic"] = ic
        g_ic = None
        if with_grad and cfg.uses_ic and len(inter):
            g_ic = cfg.lambda2 * ic_gradient(inter, x, mesh, cfg.effective_ic_mode).gradient
            grad += g_ic
        return vals, grad, inter, g_ic

    def physical(self, vals) -> float:
        """Objective without the contour loss."""
        t = sum(v for k, v in vals.items() if k not in ("repulsion", "ic"))
        return t + self.cfg.lambda1 * vals.get("repulsion", 0.0)

    def total(self, vals) -> float:
        t = self.physical(vals)
        if self.cfg.uses_ic:
            t += self.cfg.lambda2 * vals["ic"]
        return t


@dataclass
class _MinimizeResult:
    x: np.ndarray
    vals: dict
    inter: IntersectionSet
    iters: int
    stalls: int
    trajectory: list[int]


def _check_finite(x, g, it):
    if not np.all(np.isfinite(x)) or (g is not None and not np.all(np.isfinite(g))):
        bad_x = np.flatnonzero(~np.isfinite(x).all(axis=1))
        raise NonFiniteState(f"non-finite state at inner iteration {it}",
                             {"iteration": it, "bad_vertices": bad_x[:20].tolist()})


def _minimize(problem: _Problem, x0, max_iters, prev_for_graph, stop_when_clean=False, patience=None,
              max_step=None, monotone=False):
    """Preconditioned descent with Armijo backtracking and periodic graph refresh.

    ``prev_for_graph`` returns the positions used for ``d_prev`` at a refresh.
    With ``stop_when_clean`` the loop ends as soon as no intersection is left,
    or after ``patience`` iterations without a new lowest count. ``max_step``
    bounds the largest vertex displacement of a single iteration, and with
    ``monotone`` long steps may not raise the intersection count.
    """
    cfg = problem.cfg
    x = np.array(x0, dtype=np.float64)
    problem.refresh(x, prev_for_graph(x))
    vals, g, inter, g_ic = problem.terms(x)
    f = problem.physical(vals)
    trajectory = [len(inter)]
    stalls = 0
    it = 0
    step = 1.0
    while it < max_iters:
        if stop_when_clean:
            if len(inter) == 0:
                break
            if patience is not None and len(trajectory) > patience and \
                    min(trajectory[-patience:]) >= min(trajectory[:-patience]):
                break
        if it > 0 and it % cfg.graph_refresh_every == 0:
            problem.refresh(x, prev_for_graph(x))
            vals, g, inter, g_ic = problem.terms(x)
            f = problem.physical(vals)
        _check_finite(x, g, it)
        g[problem.pinned] = 0.0
        if not stop_when_clean and np.max(np.abs(g), initial=0.0) < cfg.grad_tolerance:
            break
        d = np.column_stack([problem.window.solve(g[:, c]) for c in range(3)])
        d = -d
        d[problem.pinned] = 0.0
        slope = float(np.sum(g * d))
        it += 1
        if slope >= 0:
            stalls += 1
            trajectory.append(len(inter))
            continue
        # warm start from the last accepted step, allowing it to grow back to 1
        alpha = min(1.0, step / cfg.shrink)
        if max_step is not None:
            alpha = min(alpha, max_step / max(float(np.max(np.abs(d))), 1e-300))
        accepted = False
        guard = cfg.keep_intersection_free and len(inter) == 0
        for _ in range(cfg.max_halvings):
            xt = x + alpha * d
            vt, _, it_inter, _ = problem.terms(xt, with_grad=False)
            if guard and len(it_inter):
                # a step that tangles the cloth is rejected like an uphill one;
                # once the step is already short the offending region is held
                # still instead so the rest of the cloth can keep moving
                if alpha < cfg.guard_freeze_below:
                    d[problem.zone(it_inter)] = 0.0
                    slope = float(np.sum(g * d))
                    if slope >= 0:
                        break
                else:
                    alpha *= cfg.shrink
                continue
            if monotone and len(it_inter) > len(inter) and alpha >= cfg.guard_freeze_below:
                alpha *= cfg.shrink
                continue
            # the contour-loss gradient is a surrogate, so it acts as a constant
            # force over the step rather than being judged by the loss value
            ft = problem.physical(vt)
            if g_ic is not None:
                ft += float(np.sum(g_ic * (xt - x)))
            if np.isfinite(ft) and ft <= f + cfg.armijo * alpha * slope:
                accepted = True
                break
            alpha *= cfg.shrink
        if accepted:
            step = alpha
            x = xt
            vals, g, inter, g_ic = problem.terms(x)
            f = problem.physical(vals)
            log.debug("iteration %d: step %.3g, objective %.9g, %d intersecting pairs", it, alpha,
                      problem.total(vals), len(inter))
        else:
            stalls += 1
            step = 1.0
            log.debug("line search stalled at iteration %d", it)
        trajectory.append(len(inter))
    return _MinimizeResult(x, vals, inter, it, stalls, trajectory)


def step_frame(state: SimState, garment_mesh, body_mesh=None, body_positions=None,
               config: SolverConfig | None = None) -> SimState:
    """Advance one implicit Euler step; returns a new state with stats appended."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    x_prev = np.asarray(state.positions, dtype=np.float64)
    _check_finite(x_prev, state.velocities, 0)
    body_prev = state.body_positions if state.body_positions is not None else body_positions
    problem = _Problem(garment_mesh, cfg, x_prev, state.velocities, body_mesh, body_positions, body_prev)
    res = _minimize(problem, x_prev, cfg.max_inner_iters, lambda _x: x_prev)
    x = res.x
    _check_finite(x, None, res.iters)
    v = (x - x_prev) / cfg.dt
    energies = {k: float(res.vals.get(k, 0.0)) for k in ENERGY_TERMS}
    wall = (time.perf_counter() - t0) * 1e3 if cfg.record_wall_time else 0.0
    rec = StatsRecord(state.frame_index, len(res.inter), float(res.vals["ic"]), energies, res.iters,
                      wall, problem.refreshes, res.stalls)
    bx = None if body_positions is None else np.array(body_positions, dtype=np.float64)
    return SimState(x, x_prev, v, state.frame_index + 1, bx, state.stats + [rec])


def resolve_static(state: SimState, garment_mesh, body_mesh=None, body_positions=None,
                   config: SolverConfig | None = None) -> ResolveResult:
    """Untangle a static configuration by minimizing stretching, bending,
    repulsion and the contour loss until no intersecting pair remains.

    Correspondence ``d_prev`` values are measured at the positions where each
    refresh window starts.
    """
    cfg = config or SolverConfig()
    x0 = np.asarray(state.positions, dtype=np.float64)
    _check_finite(x0, None, 0)
    problem = _Problem(garment_mesh, cfg, x0, None, body_mesh, body_positions, body_positions, dynamic=False)
    res = _minimize(problem, x0, cfg.resolve_max_iters, lambda x: x.copy(), stop_when_clean=True,
                    patience=cfg.resolve_patience, max_step=cfg.resolve_max_step,
                    monotone=cfg.resolve_monotone)
    status = ResolveStatus.RESOLVED if res.trajectory[-1] == 0 else ResolveStatus.UNRESOLVED
    out = SimState(res.x, x0, np.zeros_like(res.x), state.frame_index, state.body_positions, list(state.stats))
    return ResolveResult(out, status, res.trajectory, res.iters)


def simulate_sequence(garment_mesh, initial_positions, body_mesh, body_sequence, config: SolverConfig | None = None,
                      sink=None, dump=None, dump_every: int = 0) -> list[StatsRecord]:
    """Step once per body frame.

    ``sink(record)`` receives each record as it is produced and
    ``dump(frame, positions)`` is called every ``dump_every`` frames.
    """
    cfg = config or SolverConfig()
    frames = list(body_sequence) if body_sequence is not None else []
    first_body = frames[0] if frames and body_mesh is not None else None
    state = SimState.at_rest(initial_positions, first_body)
    records = []
    for i, bx in enumerate(frames):
        try:
            state = step_frame(state, garment_mesh, body_mesh, bx if body_mesh is not None else None, cfg)
        except (NonFiniteState, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
            raise SimulationError(i, exc) from exc
        rec = state.stats[-1]
        records.append(rec)
        if sink is not None:
            sink(rec)
        if dump is not None and dump_every > 0 and i % dump_every == 0:
            dump(i, state.positions)
    return records


def config_fields() -> list[str]:
    return [f.name for f in fields(SolverConfig) if f.name != "material"]

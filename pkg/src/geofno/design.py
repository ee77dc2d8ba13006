"""Gradient-based shape optimization through a frozen trained surrogate.

A DesignProblem bundles a box-bounded parameter vector, a differentiable
geometry builder, a field predictor (the frozen model, or an analytic map
in verification problems) and a weighted objective.  optimize_design runs
projected Adam on the parameters with full backpropagation through
objective -> predictor -> builder; verify_design re-solves the final
geometry with a reference solver and reports the surrogate-vs-solver gap.
"""

from __future__ import annotations

import numpy as np

from . import model as M
from . import synthetic as SY
from . import tensor as T
from .errors import DimensionError, DivergenceError, GeometryError
from .geometry import Geometry, POINT_CLOUD
from .tensor import AdamState, Tape, Tensor


class DesignProblem:
    def __init__(self, initial, lower, upper, builder, predictor, objective):
        self.initial = np.atleast_1d(np.asarray(initial, dtype=float))
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), self.initial.shape)
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), self.initial.shape)
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise GeometryError("design bounds must be finite")
        self.builder = builder
        self.predictor = predictor
        self.objective = objective

    def evaluate(self, theta):
        """Objective value at a parameter vector, without gradients."""
        t = Tensor(np.asarray(theta, dtype=float))
        geo = self.builder(t)
        field = self.predictor(geo)
        return float(self.objective(field, geo).data)


class DesignTrace:
    def __init__(self):
        self.theta = []
        self.objective = []
        self.grad_norm = []

    def __len__(self):
        return len(self.objective)

    def to_text(self):
        lines = ["# iter objective grad_norm theta..."]
        for i, (o, g, th) in enumerate(zip(self.objective, self.grad_norm, self.theta)):
            row = " ".join(f"{v:.10e}" for v in np.atleast_1d(th))
            lines.append(f"{i} {o:.10e} {g:.10e} {row}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------ boundary integral

def polyline_normals(points):
    """Outward normals (for counterclockwise traversal) and arc weights of a
    closed ordered polyline, via central-difference tangents."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise GeometryError("need an ordered closed polyline of >= 3 planar points")
    tang = 0.5 * (np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0))
    ds = np.hypot(tang[:, 0], tang[:, 1])
    if (ds < 1e-14).any():
        raise GeometryError("degenerate boundary: repeated consecutive points")
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=-1) / ds[:, None]
    return normals, ds


def boundary_functional(field, normals, arc_weights, component):
    """Discrete pressure-normal quadrature sum_i field_i n_i Ds_i along one axis."""
    field = T.as_tensor(field)
    normals = np.asarray(normals, dtype=float)
    arc_weights = np.asarray(arc_weights, dtype=float)
    if (arc_weights <= 0).any():
        raise GeometryError("arc weights must be positive")
    if normals.shape[0] != arc_weights.shape[0]:
        raise DimensionError("normals and arc weights disagree")
    if field.shape[0] != normals.shape[0]:
        raise DimensionError("field rows do not match the boundary points")
    w = normals[:, component] * arc_weights
    flat = T.reshape(field, (field.shape[0],))
    return T.sum_(T.mul(flat, Tensor(w)))


# ---------------------------------------------------------------- optimization

def optimize_design(problem, steps=100, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
    """Projected Adam descent on the design parameters; the model is frozen.

    Returns (trace, theta_final).  The trace records theta, objective and
    gradient norm per iteration.
    """
    theta = np.clip(problem.initial.copy(), problem.lower, problem.upper)
    t_param = Tensor(theta, requires_grad=True)
    state = AdamState([t_param])
    trace = DesignTrace()
    for it in range(steps):
        with Tape() as tape:
            geo = problem.builder(t_param)
            field = problem.predictor(geo)
            obj = problem.objective(field, geo)
        val = float(obj.data)
        if not np.isfinite(val):
            raise DivergenceError(f"objective diverged at iteration {it} "
                                  f"(theta {t_param.data})")
        tape.backward(obj)
        g = t_param.grad if t_param.grad is not None else np.zeros_like(theta)
        trace.theta.append(t_param.data.copy())
        trace.objective.append(val)
        trace.grad_norm.append(float(np.linalg.norm(g)))
        (new_t,), state = T.adam_step([t_param], [g], state, lr, beta1, beta2, eps)
        t_param = Tensor(np.clip(new_t.data, problem.lower, problem.upper),
                         requires_grad=True)
    return trace, t_param.data.copy()


def brute_force_scan(problem, index, num=101):
    """Objective on a uniform grid over one parameter axis (others fixed at
    the initial vector); returns (grid values, objectives, argbest)."""
    grid = np.linspace(problem.lower[index], problem.upper[index], num)
    vals = np.empty(num)
    for i, g in enumerate(grid):
        theta = problem.initial.copy()
        theta[index] = g
        vals[i] = problem.evaluate(theta)
    return grid, vals, int(np.argmin(vals))


def verify_design(problem, theta, solver_objective):
    """Report surrogate vs reference-solver objective at a design point."""
    surrogate = problem.evaluate(theta)
    solver = float(solver_objective(np.asarray(theta, dtype=float)))
    gap = abs(surrogate - solver)
    return {"surrogate": surrogate, "solver": solver, "gap": gap,
            "rel_gap": gap / max(abs(solver), 1e-30)}


# ------------------------------------------------- synthetic design problem

def freeze_model(model):
    for p in model.params.values():
        p.requires_grad = False
    return model


def make_annulus_design_problem(model, syn_cfg, lower=-0.2, upper=0.2,
                                initial=0.0, sign=-1.0):
    """One-parameter slice of the synthetic family: the parameter is the
    inner-boundary radius offset; the objective is sign * mean predicted
    field (sign=-1 maximizes the mean).
    """
    freeze_model(model)
    ti, ri = SY._cloud_indices(syn_cfg)
    nt, nr = len(ti), len(ri)
    theta_ang = 2 * np.pi * ti / syn_cfg.n_theta
    rho = ri / (syn_cfg.n_radial - 1)
    ang = np.repeat(theta_ang, nr)
    rr = np.tile(rho, nt)
    scale = syn_cfg.unit_scale()
    n_pts = nt * nr
    n_coeff = 2 * (1 + 2 * syn_cfg.boundary_modes)
    inner_const_pos = 1 + 2 * syn_cfg.boundary_modes

    def builder(t_param):
        # r_in = inner_base*(1 + theta), r_out = outer_base; both star-free
        r_in = T.mul(T.add(t_param, 1.0), syn_cfg.inner_base)
        r = T.add(T.mul(r_in, Tensor(1.0 - rr)), Tensor(rr * syn_cfg.outer_base))
        px = T.add(T.mul(r, Tensor(scale * np.cos(ang))), 0.5)
        py = T.add(T.mul(r, Tensor(scale * np.sin(ang))), 0.5)
        pts = T.concat([T.reshape(px, (n_pts, 1)), T.reshape(py, (n_pts, 1))], axis=1)
        lead = np.zeros(inner_const_pos)
        trail = np.zeros(n_coeff - inner_const_pos - 1)
        dp = T.concat([Tensor(lead), T.reshape(t_param, (1,)), Tensor(trail)], axis=0)
        return Geometry(POINT_CLOUD, pts, design_params=dp)

    fields = Tensor(np.ones((n_pts, 1)))

    def predictor(geo):
        return M.forward_pointcloud(model, geo, fields)

    def objective(field, geo):
        return T.mul(T.mean(field), sign)

    return DesignProblem(initial, lower, upper, builder, predictor, objective)


def annulus_solver_objective(syn_cfg, sign=-1.0):
    """Reference objective: solve the final geometry and average the exact
    field at the same cloud points the surrogate sees."""
    def solve_at(theta):
        outer = np.zeros(1 + 2 * syn_cfg.boundary_modes)
        inner = np.zeros(1 + 2 * syn_cfg.boundary_modes)
        inner[0] = float(np.atleast_1d(theta)[0])
        rec = SY.make_sample(syn_cfg, outer, inner)
        return sign * float(rec.outputs.mean())
    return solve_at

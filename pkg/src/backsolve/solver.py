"""Regularized least-squares solve of the backward heat problem.

Builds the SPD normal operator

    S v = Bt G_Y B v + (end trace)t M (end trace) v
        + reg_epsilon^2 (start trace)t M (start trace) v,

its right-hand side from the volume source and the end-time data, and
minimizes with a preconditioned Krylov iteration stopped on the lifted
residual r(G_X r). Error reporting compares against manufactured solutions.
"""

from __future__ import annotations

import math
import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    FEField,
    _cell_rule,
    fe_gradients_on_cells,
    fe_values_on_cells,
    integrate_squared,
    load_vector_f,
    quad_points_physical,
    space_load,
    space_mass,
)
from .mesh import (
    SpatialMesh,
    TimeMesh,
    cell_volumes,
    refine_uniform,
    uniform_time_mesh,
    unit_interval_mesh,
    unit_square_initial,
)
from .quadrature import gauss_1d_for_degree
from .operators import (
    TEST_TIME,
    TRIAL_SPACE,
    KroneckerOperator,
    assemble_B,
    test_space_spec,
    trace_operator,
)
from .oracle import mode_perturbation, random_perturbation
from .precond import RieszPreconditioner, make_G_X, make_G_Y
from .solutions import ManufacturedSolution, get_solution

DEFAULT_QUAD_ORDER = 5

# Safety factor applied to the automatic stopping threshold; see
# solve_backward for why the nominal scale alone stops too early.
STOPPING_SAFETY = 0.1


@dataclass
class LeastSquaresSystem:
    """SPD normal operator of the regularized least-squares functional."""

    b_op: KroneckerOperator
    g_y: RieszPreconditioner
    trace_end: KroneckerOperator
    trace_start: KroneckerOperator
    mass_x: object
    reg_epsilon: float
    f_load: np.ndarray
    g_load: np.ndarray
    g_sq: float
    rhs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rhs = self.b_op.apply_transpose(
            self.g_y.apply(self.f_load)
        ) + self.trace_end.apply_transpose(self.g_load)

    @property
    def n(self) -> int:
        return self.b_op.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.b_op.apply_transpose(self.g_y.apply(self.b_op.apply(v)))
        z_end = self.trace_end.apply(v)
        out += self.trace_end.apply_transpose(self.mass_x @ z_end)
        if self.reg_epsilon != 0.0:
            z0 = self.trace_start.apply(v)
            out += self.reg_epsilon**2 * self.trace_start.apply_transpose(
                self.mass_x @ z0
            )
        return out

    def functional(self, v: np.ndarray) -> float:
        """Value of the least-squares functional at trial coefficients v."""
        res = self.b_op.apply(v) - self.f_load
        val = float(res @ self.g_y.apply(res))
        z_end = self.trace_end.apply(v)
        val += float(z_end @ (self.mass_x @ z_end) - 2.0 * z_end @ self.g_load)
        val += self.g_sq
        z0 = self.trace_start.apply(v)
        val += self.reg_epsilon**2 * float(z0 @ (self.mass_x @ z0))
        return val


@dataclass
class SolveReport:
    iterations: int
    residual_history: np.ndarray  # r(G_X r) per iteration, first entry at x=0
    stopping_value: float
    threshold: float
    epsilon: float
    wall_time: float
    converged: bool
    variant: str


@dataclass
class ErrorReport:
    l2_slices: dict  # requested slice time -> L2(Omega) error at snapped time
    l2l2: float
    l2h1: float  # L2-in-time of the H1 seminorm
    dofs: int


def choose_epsilon(
    strategy: str,
    dofs: int,
    d: int,
    pert_norm: float = 0.0,
    explicit_value: float | None = None,
) -> float:
    if dofs < 1:
        raise ValueError("dofs must be at least 1")
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if strategy == "plain":
        return dofs ** (-1.0 / d)
    if strategy == "data-aware":
        return pert_norm + dofs ** (-1.0 / d)
    if strategy == "explicit":
        if explicit_value is None:
            raise ValueError("explicit strategy needs a value")
        return float(explicit_value)
    raise ValueError(f"unknown epsilon strategy {strategy!r}")


def build_system(
    time_mesh: TimeMesh,
    space_mesh: SpatialMesh,
    l: int,
    reg_epsilon: float,
    f=None,
    g=None,
    perturbation=None,
    quad_order: int = DEFAULT_QUAD_ORDER,
) -> LeastSquaresSystem:
    """Assemble the normal operator and data loads.

    f(t, points) is the volume source, g(points) the end-time observation;
    either may be None (zero). perturbation is added to g: a nodal FEField
    (loads via the mass matrix, exactly) or any object with evaluate(points).
    """
    if reg_epsilon < 0.0:
        raise ValueError("reg_epsilon must be nonnegative")
    b_op = assemble_B(time_mesh, space_mesh, l)
    g_y = make_G_Y(time_mesh, space_mesh, l)
    trace_end = trace_operator(time_mesh, space_mesh, time_mesh.t_end)
    trace_start = trace_operator(time_mesh, space_mesh, time_mesh.t_start)
    mass_x = space_mass(space_mesh, TRIAL_SPACE)

    if f is None:
        f_load = np.zeros(b_op.shape[0])
    else:
        f_load = load_vector_f(
            time_mesh, space_mesh, TEST_TIME, test_space_spec(l), f, quad_order
        )

    n_x = mass_x.shape[0]
    g_load = (
        np.zeros(n_x)
        if g is None
        else space_load(space_mesh, TRIAL_SPACE, g, quad_order)
    )
    g_sq = 0.0 if g is None else integrate_squared(space_mesh, g, quad_order)

    if isinstance(perturbation, FEField):
        if perturbation.coeffs.size != n_x:
            raise ValueError("perturbation field lives on a different space")
        c = perturbation.coeffs
        g_sq += float(c @ (mass_x @ c)) + 2.0 * float(c @ g_load)
        g_load = g_load + mass_x @ c
    elif perturbation is not None:
        pert_eval = perturbation.evaluate
        g_load = g_load + space_load(space_mesh, TRIAL_SPACE, pert_eval, quad_order)
        if g is None:
            g_sq = integrate_squared(space_mesh, pert_eval, quad_order)
        else:
            g_sq = integrate_squared(
                space_mesh, lambda x: g(x) + pert_eval(x), quad_order
            )

    return LeastSquaresSystem(
        b_op, g_y, trace_end, trace_start, mass_x, reg_epsilon, f_load, g_load, g_sq
    )


def pcg(
    system,
    g_x: RieszPreconditioner,
    threshold: float,
    max_iter: int,
    variant: str = "cr",
):
    """Preconditioned Krylov iteration on the normal system.

    variant "cr" (default) is the conjugate residual method in the G_X
    geometry: it minimizes r(G_X r) over the Krylov space, so the monitored
    stopping quantity is monotone. variant "cg" is textbook preconditioned
    CG (monotone in the S-energy norm instead).
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    if variant not in ("cr", "cg"):
        raise ValueError(f"unknown variant {variant!r}")
    t0 = _time.perf_counter()
    h = system.rhs
    x = np.zeros_like(h)
    apply_s = system.apply
    apply_g = g_x.apply

    r = h.copy()
    z = apply_g(r)
    rz = float(r @ z)
    history = [rz]
    iterations = 0
    converged = rz <= threshold

    if not converged and variant == "cr":
        s_z = apply_s(z)
        z_s_z = float(z @ s_z)
        p = z.copy()
        s_p = s_z.copy()
        for iterations in range(1, max_iter + 1):
            g_s_p = apply_g(s_p)
            denom = float(s_p @ g_s_p)
            if denom <= 0.0 or z_s_z <= 0.0:
                break  # roundoff exhausted; residual no longer decreases
            alpha = z_s_z / denom
            x += alpha * p
            r -= alpha * s_p
            z -= alpha * g_s_p
            rz = float(r @ z)
            history.append(rz)
            if rz <= threshold:
                converged = True
                break
            s_z = apply_s(z)
            z_s_z_next = float(z @ s_z)
            beta = z_s_z_next / z_s_z
            z_s_z = z_s_z_next
            p = z + beta * p
            s_p = s_z + beta * s_p
    elif not converged:
        p = z.copy()
        for iterations in range(1, max_iter + 1):
            s_p = apply_s(p)
            denom = float(p @ s_p)
            if denom <= 0.0:
                break
            alpha = rz / denom
            x += alpha * p
            r -= alpha * s_p
            z = apply_g(r)
            rz_next = float(r @ z)
            history.append(rz_next)
            if rz_next <= threshold:
                converged = True
                break
            beta = rz_next / rz
            rz = rz_next
            p = z + beta * p

    report = SolveReport(
        iterations=iterations,
        residual_history=np.asarray(history),
        stopping_value=history[-1],
        threshold=threshold,
        epsilon=getattr(system, "reg_epsilon", float("nan")),
        wall_time=_time.perf_counter() - t0,
        converged=converged,
        variant=variant,
    )
    return x, report


def interior_points(space_mesh: SpatialMesh) -> np.ndarray:
    """Coordinates of the retained (non-Dirichlet) vertices in dof order."""
    return space_mesh.vertices[~space_mesh.boundary_vertex_flags]


def nodal_interpolant(
    time_mesh: TimeMesh, space_mesh: SpatialMesh, solution: ManufacturedSolution
) -> np.ndarray:
    """Trial coefficients interpolating the solution at breakpoints/vertices."""
    pts = interior_points(space_mesh)
    rows = [solution.u(t, pts) for t in time_mesh.breakpoints]
    return np.concatenate(rows)


def _tensor_error_sq(time_mesh, space_mesh, coeffs, solution, quad_order, mode):
    """Accumulate squared space-time errors by tensor quadrature.

    mode "l2": values; "h1": gradients; "dt": time derivatives (discrete one
    is piecewise constant in time).
    """
    n_x = coeffs.size // time_mesh.breakpoints.size
    mat = coeffs.reshape(-1, n_x)
    pts, w = _cell_rule(space_mesh, quad_order)
    vol = cell_volumes(space_mesh)
    phys = quad_points_physical(space_mesh, pts)
    flat = phys.reshape(-1, space_mesh.dimension)
    sq, wq = gauss_1d_for_degree(quad_order)
    total = 0.0
    for e in range(time_mesh.n_elements):
        t0, t1 = time_mesh.breakpoints[e], time_mesh.breakpoints[e + 1]
        h = t1 - t0
        for s, tw in zip(sq, wq):
            t = t0 + h * s
            if mode == "dt":
                c = (mat[e + 1] - mat[e]) / h
                approx = fe_values_on_cells(space_mesh, TRIAL_SPACE, c, pts)
                exact = solution.du_dt(t, flat).reshape(approx.shape)
                diff_sq = (approx - exact) ** 2
            elif mode == "h1":
                c = (1.0 - s) * mat[e] + s * mat[e + 1]
                approx = fe_gradients_on_cells(space_mesh, TRIAL_SPACE, c, pts)
                exact = solution.grad(t, flat).reshape(approx.shape)
                diff_sq = np.sum((approx - exact) ** 2, axis=2)
            else:
                c = (1.0 - s) * mat[e] + s * mat[e + 1]
                approx = fe_values_on_cells(space_mesh, TRIAL_SPACE, c, pts)
                exact = solution.u(t, flat).reshape(approx.shape)
                diff_sq = (approx - exact) ** 2
            total += h * tw * float(np.einsum("c,q,cq->", vol, w, diff_sq))
    return total


def interpolation_gap_xnorm(
    time_mesh: TimeMesh,
    space_mesh: SpatialMesh,
    coeffs: np.ndarray,
    solution: ManufacturedSolution,
    quad_order: int = DEFAULT_QUAD_ORDER,
) -> float:
    """Surrogate for the trial-norm distance between coeffs and the solution.

    The dual-norm part of the time-derivative term is bounded through the
    smallest Dirichlet eigenvalue of the Laplacian on the unit box, which
    keeps the estimate computable without another global solve.
    """
    lam1 = space_mesh.dimension * math.pi**2
    grad_sq = _tensor_error_sq(
        time_mesh, space_mesh, coeffs, solution, quad_order, "h1"
    )
    dt_sq = _tensor_error_sq(time_mesh, space_mesh, coeffs, solution, quad_order, "dt")
    return math.sqrt(grad_sq + dt_sq / lam1)


def error_report(
    time_mesh: TimeMesh,
    space_mesh: SpatialMesh,
    coeffs: np.ndarray,
    solution: ManufacturedSolution,
    slice_times,
    quad_order: int = DEFAULT_QUAD_ORDER,
) -> ErrorReport:
    """Errors against the exact solution: time slices and space-time norms."""
    bp = time_mesh.breakpoints
    n_x = coeffs.size // bp.size
    mat = coeffs.reshape(-1, n_x)
    pts, w = _cell_rule(space_mesh, quad_order)
    vol = cell_volumes(space_mesh)
    phys = quad_points_physical(space_mesh, pts)
    flat = phys.reshape(-1, space_mesh.dimension)

    slices = {}
    for t_req in slice_times:
        idx = int(np.argmin(np.abs(bp - t_req)))
        snap = abs(bp[idx] - t_req)
        h_loc = time_mesh.lengths[min(max(idx - 1, 0), time_mesh.n_elements - 1)]
        if snap > 0.5 * h_loc:
            warnings.warn(
                f"slice time {t_req} snapped to breakpoint {bp[idx]} "
                f"(distance {snap:.3g} exceeds half an element)"
            )
        approx = fe_values_on_cells(space_mesh, TRIAL_SPACE, mat[idx], pts)
        exact = solution.u(bp[idx], flat).reshape(approx.shape)
        err_sq = float(np.einsum("c,q,cq->", vol, w, (approx - exact) ** 2))
        slices[float(t_req)] = math.sqrt(max(err_sq, 0.0))

    l2l2 = math.sqrt(
        _tensor_error_sq(time_mesh, space_mesh, coeffs, solution, quad_order, "l2")
    )
    l2h1 = math.sqrt(
        _tensor_error_sq(time_mesh, space_mesh, coeffs, solution, quad_order, "h1")
    )
    return ErrorReport(slices, l2l2, l2h1, coeffs.size)


def fit_rate(dofs, errors) -> float:
    """Log-log least-squares slope of error against degrees of freedom."""
    dofs = np.asarray(dofs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if dofs.size < 3:
        raise ValueError("need at least 3 points to fit a rate")
    if np.any(dofs <= 0.0) or np.any(errors <= 0.0):
        raise ValueError("rate fit needs positive dofs and errors")
    return float(np.polyfit(np.log(dofs), np.log(errors), 1)[0])


def build_meshes(config, k: int) -> tuple[TimeMesh, SpatialMesh]:
    """Level-k mesh pair for an experiment configuration.

    Time: 2^k elements on (T-L, T); the interval-length study instead uses
    the restriction of a 2^(k+3)-element mesh of (0, T), which for dyadic
    L/T is again uniform. Space: d*k bisection sweeps of the initial mesh.
    """
    t_start = config.T - config.L
    if config.experiment == "interval-length":
        doublings = k + 3 + int(round(math.log2(config.L / config.T)))
        if abs(math.log2(config.L / config.T) % 1.0) > 1e-12 or doublings < 0:
            raise ValueError("interval-length study needs L/T a power of two")
        time_mesh = uniform_time_mesh(t_start, config.T, doublings)
    else:
        time_mesh = uniform_time_mesh(t_start, config.T, k)
    initial = unit_square_initial() if config.d == 2 else unit_interval_mesh(1)
    space_mesh = refine_uniform(initial, config.d * k)
    return time_mesh, space_mesh


def _perturbation_for(config, space_mesh):
    if config.experiment == "perturb-random":
        pert = random_perturbation(
            space_mesh, TRIAL_SPACE, config.target_norm, config.seed
        )
        return pert, config.target_norm
    if config.experiment == "perturb-mode":
        pert = mode_perturbation(config.mode_n, config.T, config.amplitude)
        return pert, pert.l2_norm()
    return None, 0.0


def solve_backward(config, k: int | None = None, epsilon_strategy: str | None = None):
    """End-to-end solve at one refinement level of a configuration.

    Returns (coefficients, SolveReport, ErrorReport). k defaults to the sole
    entry of config.k_range; epsilon_strategy overrides the configured one
    (used by the perturbation studies that compare both strategies).
    """
    if k is None:
        if len(config.k_range) != 1:
            raise ValueError("config has several levels; pass k explicitly")
        k = config.k_range[0]
    strategy = epsilon_strategy or config.epsilon_strategy
    time_mesh, space_mesh = build_meshes(config, k)
    solution = get_solution(config.solution, config.d)
    dofs = time_mesh.breakpoints.size * int(
        (~space_mesh.boundary_vertex_flags).sum()
    )

    perturbation, pert_norm = _perturbation_for(config, space_mesh)
    explicit = None
    if strategy == "explicit":
        explicit = config.epsilon_values[config.k_range.index(k)]
    reg_epsilon = choose_epsilon(strategy, dofs, config.d, pert_norm, explicit)

    f = None if solution.f_is_zero else solution.f
    g = (lambda x: solution.u(config.T, x)) if solution.name != "zero" else None
    system = build_system(
        time_mesh, space_mesh, config.l, reg_epsilon, f, g, perturbation
    )

    if config.threshold is not None:
        threshold = config.threshold
    else:
        if solution.name == "zero" and pert_norm == 0.0:
            threshold = 1e-30  # zero data: the iteration stops immediately
        else:
            interp = nodal_interpolant(time_mesh, space_mesh, solution)
            e_appr = interpolation_gap_xnorm(time_mesh, space_mesh, interp, solution)
            # Residual scale the accuracy argument grants the accepted
            # iterate: the regularization weight times the total data plus
            # approximation error.  With the exact Riesz solve the
            # preconditioned spectrum is so clustered that this scale alone
            # is crossed within a step or two, short of the discrete
            # minimizer; one extra order parks the accepted iterate at the
            # minimizer without changing how the threshold scales.
            threshold = STOPPING_SAFETY * reg_epsilon * (pert_norm + e_appr)

    g_x = make_G_X(time_mesh, space_mesh)
    coeffs, solve_rep = pcg(system, g_x, threshold, config.max_iter)
    err_rep = error_report(
        time_mesh, space_mesh, coeffs, solution, config.slice_times
    )
    return coeffs, solve_rep, err_rep

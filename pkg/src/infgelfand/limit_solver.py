"""Solvers for the gradient-constrained exponential problem.

Two nested iterations:

* inner: monotone value iteration (fast sweeping) for the frozen problem
  min{ |grad w| - f(x), -L_inf w } = 0 with f fixed;
* outer: refresh f = lam * exp(u_k) and re-solve, starting from
  u_0 = lam * dist, which climbs monotonically to the minimal solution.

Divergence of the outer iterates past u_cap signals the no-solution regime;
bisection on that signal locates the extinction threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ._sweep import sweep_pass
from .errors import BracketInvalidError, InvalidLambdaError, NonPositiveRHSError, UsageError
from .geometry import GridDomain, ScalarField, distance_field


class SolveStatus(str, Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    MAX_ITER = "MaxIter"


@dataclass
class LimitConfig:
    """Solver knobs.  lam is the load; the rest are iteration controls."""

    lam: float = 0.0
    inner_tol: float = 1e-10
    inner_max_rounds: int | None = None  # default: 10 * n_interior**(1/dim)
    outer_tol: float = 1e-8
    outer_max_iters: int = 200
    u_cap: float = 3.0
    stencil: str = "standard"

    def validate(self):
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise UsageError("tolerances must be positive")
        if self.u_cap <= 1.0:
            raise UsageError(f"u_cap must exceed 1, got {self.u_cap}")

    def inner_rounds(self, domain):
        if self.inner_max_rounds is not None:
            return self.inner_max_rounds
        return 10 * int(math.ceil(domain.n_interior ** (1.0 / domain.dim)))


@dataclass
class SolveReport:
    status: SolveStatus
    outer_iters: int
    final_change: float
    sup_norm: float
    residual_sup: float

    def as_dict(self):
        return {"status": self.status.value, "outer_iters": self.outer_iters,
                "final_change": self.final_change, "sup_norm": self.sup_norm,
                "residual_sup": self.residual_sup}


@dataclass
class BranchPoint:
    lam: float
    sup_norm: float
    status: SolveStatus
    outer_iters: int
    residual_sup: float


def _field_values(f, domain):
    if isinstance(f, ScalarField):
        return f.values
    arr = np.asarray(f, dtype=float)
    if arr.shape == (domain.n_nodes,):
        return arr
    raise UsageError(f"field array has shape {arr.shape}, expected ({domain.n_nodes},)")


def _ray_values(w, tab):
    """Clipped neighbor values, shape (n_interior, K)."""
    return np.where(tab.nb >= 0, w[np.maximum(tab.nb, 0)], 0.0)


def _interior_positions(domain):
    """Full-grid lookup: flat node index -> position in the interior arrays."""
    if not hasattr(domain, "_interior_pos"):
        pos = np.full(domain.n_nodes, -1, dtype=np.int64)
        pos[domain.interior_flat] = np.arange(domain.n_interior)
        domain._interior_pos = pos
    return domain._interior_pos


def _defect(w, tab, fi, interior_flat):
    vals = _ray_values(w, tab)
    upd = nodal_update(vals, tab.step, fi, w[interior_flat])
    return float(np.abs(w[interior_flat] - upd).max())


def harmonic_value(vals, steps, z0):
    """Vectorized root of max_r (v_r - z)/s_r + min_r (v_r - z)/s_r = 0.

    Mirrors the sweep kernel: Newton steps on the frozen extreme-ray
    selection, safeguarded by the sign bracket [min v, max v].
    """
    from ._sweep import HARMONIC_ITERS

    lo = vals.min(axis=1)
    hi = vals.max(axis=1)
    z = np.clip(z0, lo, hi)
    rows = np.arange(len(z))
    for _ in range(HARMONIC_ITERS):
        s = (vals - z[:, None]) / steps
        ia = np.argmax(s, axis=1)
        ib = np.argmin(s, axis=1)
        phi = s[rows, ia] + s[rows, ib]
        lo = np.where(phi > 0.0, z, lo)
        hi = np.where(phi > 0.0, hi, z)
        va, sa = vals[rows, ia], steps[rows, ia]
        vb, sb = vals[rows, ib], steps[rows, ib]
        z_new = (va * sb + vb * sa) / (sa + sb)
        z_new = np.where((z_new < lo) | (z_new > hi), 0.5 * (lo + hi), z_new)
        z = z_new
    return z


def nodal_update(vals, steps, f_int, z0):
    """Vectorized nodal update over interior nodes; mirrors the sweep kernel."""
    ce = (vals + steps * f_int[:, None]).min(axis=1)
    cl = harmonic_value(vals, steps, z0)
    return np.maximum(ce, cl)


def frozen_defect(domain, w_field, f, stencil="standard"):
    """Sup over interior nodes of |w - nodal_update(w)| for the frozen problem."""
    tab = domain.ray_table(stencil)
    w = _field_values(w_field, domain)
    fi = _field_values(f, domain)[domain.interior_flat]
    vals = _ray_values(w, tab)
    upd = nodal_update(vals, tab.step, fi, w[domain.interior_flat])
    return float(np.abs(w[domain.interior_flat] - upd).max())


def solve_frozen_rhs(domain, f, config=None, w0=None):
    """Solve min{ |grad w| - f(x), -L_inf w } = 0 with f frozen.

    f must be strictly positive on interior nodes.  w0 defaults to zero;
    any nonnegative field that vanishes on the boundary is admissible.

    Gauss-Seidel fast sweeps (2^dim alternating lexicographic orders per
    round) handle the causal gradient branch.  The pair-averaging branch
    relaxes only diffusively under sweeps, so whenever the round-to-round
    change settles into a stable geometric decay, the iterate is jumped
    along the dominant error mode (vector Aitken extrapolation); value
    iteration is globally convergent, so sweeps mop up after each jump.
    Stops when a full sweep round changes no node by more than the inner
    tolerance, so the returned field satisfies the nodal fixed-point
    equation at that tolerance.  Never raises on a stalled iteration:
    the report carries MaxIter.
    """
    config = config or LimitConfig()
    config.validate()
    fvals = _field_values(f, domain)
    fi = np.ascontiguousarray(fvals[domain.interior_flat])
    if fi.min() <= 0.0:
        raise NonPositiveRHSError(f"min interior f = {fi.min()}; need f > 0")
    if w0 is None:
        w = np.zeros(domain.n_nodes)
    else:
        w = _field_values(w0, domain).copy()
        mask = np.ones(domain.n_nodes, dtype=bool)
        mask[domain.interior_flat] = False
        w[mask] = 0.0
    tab = domain.ray_table(config.stencil)
    orders = domain.sweep_orders()
    max_rounds = config.inner_rounds(domain)
    intf = domain.interior_flat
    change = np.inf
    rounds = 0
    w_prev = w[intf].copy()
    delta_prev = None
    rho_prev = None
    for rounds in range(1, max_rounds + 1):
        change = 0.0
        for order in orders:
            c = sweep_pass(w, order, intf, tab.nb, tab.step, fi)
            change = max(change, c)
        if change <= config.inner_tol:
            break
        delta = w[intf] - w_prev
        if delta_prev is not None:
            dd = float(delta_prev @ delta_prev)
            rho = float(delta @ delta_prev) / dd if dd > 0 else 0.0
            if (rho_prev is not None and 0.3 < rho < 0.99995
                    and abs(rho - rho_prev) < 0.5 * (1.0 - rho)):
                # stable geometric decay: jump along the dominant mode
                w[intf] = np.maximum(w[intf] + delta * min(rho / (1 - rho), 1e6), 0.0)
                delta = None
                rho = None
            rho_prev = rho
        w_prev = w[intf].copy()
        delta_prev = delta
    out = ScalarField(domain, w)
    status = SolveStatus.CONVERGED if change <= config.inner_tol else SolveStatus.MAX_ITER
    report = SolveReport(status=status, outer_iters=rounds, final_change=float(change),
                         sup_norm=out.sup_norm(),
                         residual_sup=frozen_defect(domain, out, fvals, config.stencil))
    return out, report


def gelfand_residual(domain, u, lam, stencil="standard"):
    """Discrete residual min( |grad u|_h - lam e^u, -L_inf,h u ) per interior node.

    |grad u|_h is the max backward difference quotient over rays.  The
    discrete infinity Laplacian is the unequal-arm second difference along
    the antipodal pair of the steepest-descent ray (the ray with the
    smallest clipped value; ties broken toward the shortest step), which is
    the direction pair realizing the gradient.
    """
    tab = domain.ray_table(stencil)
    w = _field_values(u, domain)
    ui = w[domain.interior_flat]
    vals = _ray_values(w, tab)
    grad_h = ((ui[:, None] - vals) / tab.step).max(axis=1)

    minval = vals.min(axis=1)
    candidate_steps = np.where(vals <= minval[:, None], tab.step, np.inf)
    ridx = np.argmin(candidate_steps, axis=1)
    rows = np.arange(len(ui))
    pidx = tab.antipode[ridx]
    ua, ha = vals[rows, ridx], tab.step[rows, ridx]
    ub, hb = vals[rows, pidx], tab.step[rows, pidx]
    lap = 2.0 * ((ua - ui) / ha + (ub - ui) / hb) / (ha + hb)

    res = np.zeros(domain.n_nodes)
    res[domain.interior_flat] = np.minimum(grad_h - lam * np.exp(ui), -lap)
    return ScalarField(domain, res)


def solve_limit_gelfand(domain, config, u0=None, warm_inner=True):
    """Outer monotone iteration u_{k+1} = frozen_solve(lam * exp(u_k)).

    Starts from u_0 = lam * dist (or the supplied u0).  Reports Diverged as
    soon as sup u_k exceeds u_cap, Converged when the outer sup-change drops
    below the outer tolerance.

    Intermediate frozen solves run at a loose tolerance tied to the current
    outer change (inexact Picard, warm starts only); the final iterate is
    always polished at the full inner tolerance before Converged is
    reported, so the returned solution satisfies the nodal equation at
    config.inner_tol.
    """
    config.validate()
    lam = config.lam
    if lam <= 0:
        raise InvalidLambdaError(f"lam must be > 0, got {lam}")
    if u0 is None:
        u = lam * distance_field(domain).values
    else:
        u = _field_values(u0, domain).copy()
    change = np.inf
    for k in range(1, config.outer_max_iters + 1):
        if warm_inner:
            loose = max(config.inner_tol, min(0.05 * change, 1e-2))
            inner_cfg = replace(config, inner_tol=loose)
        else:
            inner_cfg = config
        f = lam * np.exp(u)
        w_field, inner = solve_frozen_rhs(domain, f, inner_cfg,
                                          w0=u if warm_inner else None)
        w = w_field.values
        change = float(np.abs(w - u)[domain.interior_flat].max())
        u = w
        sup = float(u[domain.interior_flat].max())
        if sup > config.u_cap:
            return ScalarField(domain, u), SolveReport(
                status=SolveStatus.DIVERGED, outer_iters=k, final_change=change,
                sup_norm=sup, residual_sup=math.nan)
        if inner.status is SolveStatus.MAX_ITER:
            return ScalarField(domain, u), SolveReport(
                status=SolveStatus.MAX_ITER, outer_iters=k, final_change=change,
                sup_norm=sup, residual_sup=math.nan)
        if change <= config.outer_tol:
            w_field, inner = solve_frozen_rhs(domain, lam * np.exp(u), config, w0=u)
            polish = float(np.abs(w_field.values - u)[domain.interior_flat].max())
            u = w_field.values
            if inner.status is SolveStatus.MAX_ITER:
                return ScalarField(domain, u), SolveReport(
                    status=SolveStatus.MAX_ITER, outer_iters=k, final_change=polish,
                    sup_norm=float(np.abs(u[domain.interior_flat]).max()),
                    residual_sup=math.nan)
            if polish > config.outer_tol:
                change = polish
                continue
            out = ScalarField(domain, u)
            res = gelfand_residual(domain, out, lam, config.stencil)
            return out, SolveReport(
                status=SolveStatus.CONVERGED, outer_iters=k,
                final_change=max(change, polish), sup_norm=out.sup_norm(),
                residual_sup=res.sup_norm())
    out = ScalarField(domain, u)
    return out, SolveReport(status=SolveStatus.MAX_ITER,
                            outer_iters=config.outer_max_iters,
                            final_change=change, sup_norm=out.sup_norm(),
                            residual_sup=math.nan)


def compute_branch(domain, lam_values, config):
    """Continuation in lam, warm-starting each solve from the previous
    minimal solution.  One Diverged/MaxIter point never aborts the branch."""
    lams = [float(v) for v in lam_values]
    if any(v <= 0 for v in lams):
        raise InvalidLambdaError("all lambda values must be > 0")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise InvalidLambdaError("lambda values must be strictly ascending")
    dist = distance_field(domain).values
    points = []
    solutions = []
    u_prev = None
    for lam in lams:
        cfg = replace(config, lam=lam)
        u0 = lam * dist if u_prev is None else np.maximum(lam * dist, u_prev)
        fld, rep = solve_limit_gelfand(domain, cfg, u0=ScalarField(domain, u0))
        points.append(BranchPoint(lam=lam, sup_norm=rep.sup_norm, status=rep.status,
                                  outer_iters=rep.outer_iters,
                                  residual_sup=rep.residual_sup))
        solutions.append(fld if rep.status is SolveStatus.CONVERGED else None)
        if rep.status is SolveStatus.CONVERGED:
            u_prev = fld.values
    return points, solutions


@dataclass
class LambdaMaxEstimate:
    value: float
    lo: float
    hi: float
    solves: int

    @property
    def bracket_width(self):
        return self.hi - self.lo


def estimate_lambda_max(domain, bracket, rel_tol=0.02, config=None):
    """Bisection on solver status for the extinction threshold.

    The bracket must solve at the low end and diverge at the high end; both
    ends are auto-expanded a few times before giving up.  A MaxIter outcome
    counts as not-converged only after one retry at 4x the outer budget.
    """
    config = config or LimitConfig()
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 < lo < hi):
        raise BracketInvalidError(f"need 0 < lo < hi, got ({lo}, {hi})")
    solves = 0

    def converged_at(lam):
        nonlocal solves
        cfg = replace(config, lam=lam)
        _, rep = solve_limit_gelfand(domain, cfg)
        solves += 1
        if rep.status is SolveStatus.MAX_ITER:
            cfg = replace(cfg, outer_max_iters=4 * cfg.outer_max_iters,
                          inner_max_rounds=4 * cfg.inner_rounds(domain))
            _, rep = solve_limit_gelfand(domain, cfg)
            solves += 1
        return rep.status is SolveStatus.CONVERGED

    expansions = 0
    while not converged_at(lo):
        lo *= 0.5
        expansions += 1
        if expansions > 6:
            raise BracketInvalidError(f"no converged solve down to lam={lo}")
    expansions = 0
    while converged_at(hi):
        hi *= 2.0
        expansions += 1
        if expansions > 6:
            raise BracketInvalidError(f"no diverged solve up to lam={hi}")
    while (hi - lo) > rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if converged_at(mid):
            lo = mid
        else:
            hi = mid
    return LambdaMaxEstimate(value=0.5 * (lo + hi), lo=lo, hi=hi, solves=solves)


@dataclass
class ProbeResult:
    max_pairwise_distance: float
    reports: list = field(default_factory=list)


def uniqueness_probe(domain, lam, starts, config):
    """Run the outer iteration from each start and measure how far apart the
    converged fixed points land (max pairwise sup distance).

    Starts must vanish on the boundary, be nonnegative, and have sup < 1.
    Inner solves run from zero so that starts above the fixed point can
    relax downward as well.
    """
    cfg = replace(config, lam=lam)
    fields = []
    reports = []
    for s in starts:
        vals = _field_values(s, domain)
        si = vals[domain.interior_flat]
        if si.size and (si.min() < 0 or np.abs(si).max() >= 1.0):
            raise UsageError("each start must be nonnegative with sup < 1")
        if len(domain.boundary_flat) and np.abs(vals[domain.boundary_flat]).max() > 0:
            raise UsageError("starts must vanish on boundary nodes")
        fld, rep = solve_limit_gelfand(domain, cfg, u0=s, warm_inner=False)
        reports.append(rep)
        if rep.status is SolveStatus.CONVERGED:
            fields.append(fld.values[domain.interior_flat])
    dist = 0.0
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            dist = max(dist, float(np.abs(fields[i] - fields[j]).max()))
    return ProbeResult(max_pairwise_distance=dist, reports=reports)

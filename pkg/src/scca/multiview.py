"""Multi-view stage one: per-view sparsity patterns with successive shrinkage.

For a target view s, all other views' iterates are swept cyclically; the
summed projections of view s's coordinates are thresholded by the row sum
of the sparsity parameter matrix. Patterns are computed last view first,
each one shrinking every block that touches its view before the next solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import SparsityPattern, ViewMatrix, cross_covariance
from .errors import DegenerateInputError, DimensionError, EmptySupportError
from .pattern import ConvergenceSpec, init_direction
from .solve import CcaSolution, _fix_sign, _pearson, multiview_gep, multiview_power


@dataclass(frozen=True, eq=False)
class GammaMatrix:
    """m x m non-negative sparsity parameter matrix with zero diagonal.

    Row s's sum is the effective threshold for view s's coordinates.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError("gamma matrix must be square")
        if np.any(values < 0):
            raise ValueError("gamma matrix entries must be non-negative")
        if np.any(np.diag(values) != 0):
            raise ValueError("gamma matrix diagonal must be zero")
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    def threshold(self, s: int) -> float:
        return float(self.values[s].sum())

    @classmethod
    def for_pair(cls, gamma1: float, gamma2: float) -> "GammaMatrix":
        """Two-view matrix whose row sums reproduce the pair thresholds."""
        return cls(np.array([[0.0, gamma1], [gamma2, 0.0]]))


@dataclass(eq=False)
class MultiViewProblem:
    """Views plus their (possibly shrunken) upper-triangular covariance blocks.

    ``active[r]`` maps the current coordinates of view r back to global
    indices; blocks are stored once per unordered pair and re-oriented on
    access so that ``tilde(r, s)`` always has view r's coordinates as rows.
    """

    views: list[ViewMatrix]
    blocks: dict[tuple[int, int], np.ndarray]
    active: list[np.ndarray]

    @classmethod
    def from_views(cls, views, divisor: str = "n") -> "MultiViewProblem":
        views = list(views)
        if len(views) < 2:
            raise DimensionError("need at least two views")
        blocks = {}
        for r in range(len(views)):
            for s in range(r + 1, len(views)):
                blocks[(r, s)] = cross_covariance(views[r], views[s], divisor=divisor,
                                                  view_ids=(r, s)).block
        return cls(views=views, blocks=blocks,
                   active=[np.arange(v.p) for v in views])

    @property
    def m(self) -> int:
        return len(self.views)

    def dim(self, r: int) -> int:
        return int(self.active[r].size)

    def tilde(self, r: int, s: int) -> np.ndarray:
        """Block between views r and s oriented with r's coordinates as rows."""
        return self.blocks[(r, s)] if r < s else self.blocks[(s, r)].T

    def restrict(self, s: int, bits: np.ndarray) -> "MultiViewProblem":
        """Shrink view s's coordinates to the active bits (over current coords)."""
        bits = np.asarray(bits, dtype=bool)
        if bits.size != self.dim(s):
            raise DimensionError("pattern length does not match the current view size")
        if not bits.any():
            raise EmptySupportError(f"view {s + 1} pattern has no active coordinates",
                                    side=f"view {s + 1}")
        blocks = {}
        for (r, t), block in self.blocks.items():
            if r == s:
                blocks[(r, t)] = block[bits, :]
            elif t == s:
                blocks[(r, t)] = block[:, bits]
            else:
                blocks[(r, t)] = block
        active = list(self.active)
        active[s] = active[s][bits]
        return MultiViewProblem(views=self.views, blocks=blocks, active=active)


def _sweep_objective(problem: MultiViewProblem, s: int, zs: dict[int, np.ndarray],
                     thresh: float) -> float:
    """Ascent functional of the sweep: squared hinge plus doubled pair terms."""
    others = [r for r in range(problem.m) if r != s]
    proj = np.zeros(problem.dim(s))
    for q in others:
        proj += problem.tilde(q, s).T @ zs[q]
    w = np.maximum(np.abs(proj) - thresh, 0.0)
    value = float(w @ w)
    for a_i, a in enumerate(others):
        for b in others[a_i + 1:]:
            value += 2.0 * float(zs[a] @ problem.tilde(a, b) @ zs[b])
    return value


def multiview_pattern(problem: MultiViewProblem, gam: GammaMatrix, s: int,
                      inits: dict[int, np.ndarray] | None = None,
                      conv: ConvergenceSpec | None = None,
                      ) -> tuple[SparsityPattern, dict[int, np.ndarray], int, np.ndarray | None]:
    """Sparsity pattern of view s from a cyclic sweep over the other views.

    Returns (pattern over view s's current coordinates, final per-view
    iterates, sweep count, optional objective trace). Joint convergence is
    the maximum per-view direction change falling below tol.
    """
    if gam.m != problem.m:
        raise DimensionError("gamma matrix size does not match the number of views")
    if not 0 <= s < problem.m:
        raise DimensionError(f"view index {s} out of range")
    conv = conv or ConvergenceSpec()
    others = [r for r in range(problem.m) if r != s]
    thresh = gam.threshold(s)

    zs: dict[int, np.ndarray] = {}
    for r in others:
        if inits is not None and r in inits:
            z = np.asarray(inits[r], dtype=float)
            if z.shape != (problem.dim(r),):
                raise DimensionError(f"init for view {r} has the wrong length")
            zs[r] = z / np.linalg.norm(z)
        else:
            zs[r] = init_direction(problem.tilde(r, s)).values

    trace = [] if conv.objective_track else None
    sweeps = 0
    for _ in range(conv.max_iter):
        if trace is not None:
            trace.append(_sweep_objective(problem, s, zs, thresh))
        max_move = 0.0
        for r in others:
            proj = np.zeros(problem.dim(s))
            for q in others:
                proj += problem.tilde(q, s).T @ zs[q]
            w = np.maximum(np.abs(proj) - thresh, 0.0)
            update = problem.tilde(r, s) @ (w * np.sign(proj))
            for l in others:
                if l != r:
                    update = update + problem.tilde(r, l) @ zs[l]
            nrm = np.linalg.norm(update)
            if nrm == 0.0:
                raise DegenerateInputError(f"zero update for view {r + 1}")
            z_new = update / nrm
            max_move = max(max_move, float(np.linalg.norm(z_new - zs[r])))
            zs[r] = z_new
        sweeps += 1
        if max_move <= conv.tol:
            break
    if trace is not None:
        trace.append(_sweep_objective(problem, s, zs, thresh))

    proj = np.zeros(problem.dim(s))
    for q in others:
        proj += problem.tilde(q, s).T @ zs[q]
    bits = np.abs(proj) > thresh
    if not bits.any():
        raise EmptySupportError(
            f"every coordinate of view {s + 1} is at or below the threshold",
            side=f"view {s + 1}")
    return (SparsityPattern(bits), zs, sweeps,
            np.asarray(trace) if trace is not None else None)


def multiview_screen(problem: MultiViewProblem, gam: GammaMatrix, s: int) -> SparsityPattern:
    """Data-only prefilter: coordinates whose summed block-column norms are
    at or below the row-sum threshold can never be active."""
    if gam.m != problem.m:
        raise DimensionError("gamma matrix size does not match the number of views")
    norms = np.zeros(problem.dim(s))
    for r in range(problem.m):
        if r != s:
            norms += np.linalg.norm(problem.tilde(r, s), axis=0)
    return SparsityPattern(norms > gam.threshold(s))


def multiview_scca(views, gam: GammaMatrix, penalty: str = "l1",
                   conv: ConvergenceSpec | None = None, stage2: str | None = None,
                   ridge: float = 0.0, divisor: str = "n") -> CcaSolution:
    """Two-stage multi-view fit: successive-shrinkage patterns, then stage two.

    Patterns are computed for the last view first; every block touching that
    view is restricted to its support before the next view is solved. Stage
    two runs on the doubly shrunken blocks via the cyclic power method
    (default) or the block generalized eigenproblem, and directions are
    re-expanded to full length. Only the absolute-value threshold rule is
    defined for more than two views.
    """
    if penalty != "l1":
        raise ValueError("multi-view stage one is defined for the 'l1' penalty only")
    conv = conv or ConvergenceSpec()
    problem = MultiViewProblem.from_views(views, divisor=divisor)
    m = problem.m
    if gam.m != m:
        raise DimensionError("gamma matrix size does not match the number of views")
    if stage2 is None:
        stage2 = "power"
    if stage2 not in ("power", "gep"):
        raise ValueError("stage2 must be 'power' or 'gep'")

    patterns: list[SparsityPattern | None] = [None] * m
    iterations: dict = {}
    traces: dict = {}
    for s in range(m - 1, -1, -1):
        try:
            pat, _zs, sweeps, trace = multiview_pattern(problem, gam, s, conv=conv)
        except (EmptySupportError, DegenerateInputError) as err:
            raise type(err)(f"stage one failed at view {s + 1}: {err}") from err
        # view s is still full length when its own pattern is solved
        patterns[s] = pat
        iterations[f"view{s + 1}"] = sweeps
        if trace is not None:
            traces[f"view{s + 1}"] = trace
        problem = problem.restrict(s, pat.bits)

    warnings: tuple[str, ...] = ()
    if stage2 == "power":
        actives = multiview_power(problem.blocks, conv=conv)
        normalization = "unit"
    else:
        diag = []
        for r in range(m):
            sub = problem.views[r].data[:, problem.active[r]]
            div = sub.shape[0] if divisor == "n" else sub.shape[0] - 1
            diag.append(sub.T @ sub / div)
        result = multiview_gep(problem.blocks, diag, ridge=ridge)
        actives = result.directions
        normalization = "cov"
        if result.uninformative:
            warnings += ("leading eigenvalue is ~0: cross blocks are uninformative",)

    directions = []
    covariates = []
    for r in range(m):
        z = np.zeros(problem.views[r].p)
        z[problem.active[r]] = actives[r]
        directions.append(z)
    _fix_sign(directions[0], [])
    covariates.append(problem.views[0].data @ directions[0])
    for r in range(1, m):
        cov = problem.views[r].data @ directions[r]
        # per-view signs from stage two are arbitrary; align to the first view
        if float(covariates[0] @ cov) < 0:
            directions[r] *= -1.0
            cov *= -1.0
        covariates.append(cov)

    pair_rho = np.zeros((m, m))
    flags = []
    for r in range(m):
        for s in range(r + 1, m):
            rho, flagged = _pearson(covariates[r], covariates[s])
            pair_rho[r, s] = pair_rho[s, r] = rho
            if flagged:
                flags.append(f"degenerate covariate pair ({r + 1},{s + 1})")
    warnings += tuple(flags)
    mean_rho = float(pair_rho[np.triu_indices(m, k=1)].mean())

    info = dict(iterations)
    if traces:
        info["traces"] = traces
    return CcaSolution(
        directions=[z[:, None] for z in directions],
        correlations=np.array([mean_rho]),
        factor_count=1,
        normalization=normalization,
        covariates=[cv[:, None] for cv in covariates],
        patterns=[[patterns[r]] for r in range(m)],
        iterations=[info],
        pairwise_correlations=[pair_rho],
        warnings=warnings)

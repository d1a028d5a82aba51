"""Directed sparse CCA: steer canonical directions toward an accessory vector.

An observed length-n accessory vector y enters stage one either through
dot-product alignment terms (with the per-view cross products X_i'y),
through regression coefficients substituted for those products, through a
stacked symmetric reformulation of the squared-error loss, or through a
select-then-solve two-stage baseline.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass

import numpy as np

from .covariance import (SparsityPattern, ViewMatrix, cross_covariance)
from .errors import (DegenerateInputError, DimensionError, EmptySupportError,
                     IndefiniteMatrixError, SingularityError)
from .pattern import (ConvergenceSpec, Direction, PatternResult, _as_block,
                      _partner_l1, _solve)
from .solve import CcaSolution, _expand, _fix_sign, _pearson, _stage_two, fit_pair


@dataclass(eq=False)
class AccessoryVector:
    """Observed length-n vector toward which directions are steered."""

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DimensionError("accessory vector must be 1-d")

    def center(self) -> "AccessoryVector":
        if self.centered:
            return self
        return AccessoryVector(self.values - self.values.mean(), centered=True)


@dataclass(frozen=True)
class DirectedParams:
    """Sparsity thresholds and alignment weights (all non-negative)."""

    gamma1: float
    gamma2: float
    eps1: float = 1.0
    eps2: float = 1.0

    def __post_init__(self):
        if min(self.gamma1, self.gamma2, self.eps1, self.eps2) < 0:
            raise ValueError("all directed parameters must be non-negative")

    def swapped(self) -> "DirectedParams":
        return DirectedParams(self.gamma2, self.gamma1, self.eps2, self.eps1)


def _directed_result(block, proj, z, gamma2, its, trace) -> PatternResult:
    bits = np.abs(proj) > gamma2
    if not bits.any():
        raise EmptySupportError("every aligned projection is at or below the threshold",
                                side="partner", last_iterate=z)
    return PatternResult(Direction(z), SparsityPattern(bits),
                         Direction(_partner_l1(proj, gamma2)), its, trace)


def directed_pattern_dot(c, x1ty, x2ty, params: DirectedParams, z0=None,
                         conv: ConvergenceSpec | None = None, restarts: int = 0,
                         seed: int = 0) -> PatternResult:
    """Partner support with dot-product alignment toward the accessory vector.

    ``x1ty`` and ``x2ty`` are the per-view products with y (the caller picks
    the scaling convention). The alignment terms shift the thresholded
    projections by eps2*x2ty and add a constant pull eps1*x1ty to the
    update; with both eps at zero this is bit-for-bit the undirected solver.
    The tracked functional doubles the linear alignment term, making it the
    exact ascent functional of the update.
    """
    block = _as_block(c)
    x1ty = np.asarray(x1ty, dtype=float)
    x2ty = np.asarray(x2ty, dtype=float)
    if x1ty.shape != (block.shape[0],):
        raise DimensionError("x1ty length does not match block rows")
    if x2ty.shape != (block.shape[1],):
        raise DimensionError("x2ty length does not match block columns")
    conv = conv or ConvergenceSpec()
    gamma2, eps1, eps2 = params.gamma2, params.eps1, params.eps2
    if z0 is None and not np.any(block):
        # a zero block is still solvable when the alignment term drives the update
        pull = eps1 * x1ty
        if not np.any(pull):
            raise DegenerateInputError("zero block and zero alignment")
        z0 = pull / np.linalg.norm(pull)

    def step(z):
        proj = block.T @ z + eps2 * x2ty
        w = np.maximum(np.abs(proj) - gamma2, 0.0)
        obj = float(w @ w) + 2.0 * eps1 * float(x1ty @ z)
        return obj, block @ (w * np.sign(proj)) + eps1 * x1ty

    z, its, trace = _solve(block, step, lambda z: step(z)[0], z0, conv,
                           restarts, seed, side="partner")
    proj = block.T @ z + eps2 * x2ty
    return _directed_result(block, proj, z, gamma2, its, trace)


def directed_pattern_reg(c, beta1, beta2, params: DirectedParams, z0=None,
                         conv: ConvergenceSpec | None = None, restarts: int = 0,
                         seed: int = 0) -> PatternResult:
    """Dot-product variant with regression coefficients in place of X_i'y."""
    return directed_pattern_dot(c, beta1, beta2, params, z0=z0, conv=conv,
                                restarts=restarts, seed=seed)


def compute_beta(x: ViewMatrix, y: AccessoryVector, ridge: float = 0.0,
                 univariate: bool = False) -> np.ndarray:
    """Ridge least-squares coefficients of y on a view.

    ``univariate=True`` returns per-column marginal coefficients
    x_j'y / (x_j'x_j + ridge) instead of solving the joint normal equations.
    """
    if x.n != y.values.size:
        raise DimensionError("accessory length does not match the view")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    yv = y.values
    if univariate:
        col_ss = (x.data * x.data).sum(axis=0) + ridge
        if np.any(col_ss == 0.0):
            raise SingularityError("zero-variance column with ridge=0 in univariate mode")
        return x.data.T @ yv / col_ss
    gram = x.data.T @ x.data + ridge * np.eye(x.p)
    vals = np.linalg.eigvalsh(gram)
    if vals[0] <= 1e-10 * max(vals[-1], 1e-300):
        raise SingularityError("normal equations are singular; re-run with ridge > 0")
    return np.linalg.solve(gram, x.data.T @ yv)


@dataclass(eq=False)
class StackedProblem:
    """Symmetric stacked form of the squared-error-directed program.

    ``tilde_c`` is the (p1+p2) square block matrix [[eps1*C11, C12],
    [C12', eps2*C22]]; ``tilde_x`` the n x (p1+p2) concatenation
    [eps1*X1, eps2*X2]; ``split`` = p1.
    """

    tilde_c: np.ndarray
    tilde_x: np.ndarray
    split: int

    def __post_init__(self):
        self.tilde_c = np.asarray(self.tilde_c, dtype=float)
        self.tilde_x = np.asarray(self.tilde_x, dtype=float)
        p = self.tilde_c.shape[0]
        if self.tilde_c.shape != (p, p):
            raise DimensionError("tilde_c must be square")
        scale = np.abs(self.tilde_c).max(initial=0.0) + 1.0
        if np.abs(self.tilde_c - self.tilde_c.T).max(initial=0.0) > 1e-10 * scale:
            raise DimensionError("tilde_c must be symmetric")
        if self.tilde_x.shape[1] != p:
            raise DimensionError("tilde_x width must equal tilde_c size")
        if not 1 <= self.split <= p - 1:
            raise DimensionError("split must lie strictly inside the stacked coordinate")

    @classmethod
    def build(cls, x1: ViewMatrix, x2: ViewMatrix, eps1: float, eps2: float,
              divisor: str = "n") -> "StackedProblem":
        c11 = cross_covariance(x1, x1, divisor=divisor).block
        c22 = cross_covariance(x2, x2, divisor=divisor).block
        c12 = cross_covariance(x1, x2, divisor=divisor).block
        tilde_c = np.block([[eps1 * c11, c12], [c12.T, eps2 * c22]])
        tilde_x = np.hstack([eps1 * x1.data, eps2 * x2.data])
        return cls(tilde_c, tilde_x, x1.p)


def _symmetric_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; mildly negative eigenvalues are clipped."""
    vals, vecs = np.linalg.eigh(m)
    lam_max = max(float(vals.max(initial=0.0)), 0.0)
    floor = -1e-8 * max(lam_max, 1.0)
    if vals.min(initial=0.0) < floor:
        raise IndefiniteMatrixError(
            f"stacked matrix has negative eigenvalue {vals.min():.3e} beyond tolerance")
    clipped = np.clip(vals, 0.0, None)
    if np.any(vals < 0):
        _warnings.warn("clipped slightly negative eigenvalues of the stacked matrix",
                       RuntimeWarning, stacklevel=3)
    return (vecs * np.sqrt(clipped)) @ vecs.T


def directed_stacked(sp: StackedProblem, y: AccessoryVector, gamma1: float,
                     gamma2: float, v0=None, conv: ConvergenceSpec | None = None,
                     restarts: int = 0, seed: int = 0,
                     ) -> tuple[SparsityPattern, Direction, Direction]:
    """Single-sphere ascent on the stacked squared-error-directed program.

    The hinge offsets are the literal 2*x_tilde_i'y terms and the columns of
    the symmetric square root of ``tilde_c`` play the role of the covariance
    columns; per-side thresholds apply below/above ``split``. Returns the
    stacked pattern, the sphere maximizer v*, and the closed-form stacked
    direction z*.
    """
    if gamma1 < 0 or gamma2 < 0:
        raise ValueError("thresholds must be non-negative")
    conv = conv or ConvergenceSpec()
    y = y.center()
    if y.values.size != sp.tilde_x.shape[0]:
        raise DimensionError("accessory length does not match the stacked views")
    root = _symmetric_sqrt(sp.tilde_c)
    offsets = 2.0 * (sp.tilde_x.T @ y.values)
    p = root.shape[0]
    gamma_vec = np.where(np.arange(p) < sp.split, gamma1, gamma2)

    def step(v):
        proj = root @ v + offsets
        w = np.maximum(np.abs(proj) - gamma_vec, 0.0)
        return float(w @ w), root @ (w * np.sign(proj))

    v, its, _trace = _solve(root, step, lambda v: step(v)[0], v0, conv,
                            restarts, seed, side="stacked")
    proj = root @ v + offsets
    bits = np.abs(proj) > gamma_vec
    if not bits.any():
        raise EmptySupportError("both sides of the stacked pattern are empty",
                                side="stacked", last_iterate=v)
    w = np.maximum(np.abs(proj) - gamma_vec, 0.0)
    denom = np.sqrt(float(w @ w))
    z = np.sign(proj) * w / denom if denom > 0 else np.zeros_like(proj)
    return SparsityPattern(bits), Direction(v), Direction(z)


@dataclass(frozen=True)
class UnivariateSelector:
    """Marginal-association ranking: keep the top fraction per view."""

    keep_fraction: float = 0.5
    min_keep: int = 1

    def __post_init__(self):
        if not 0.0 <= self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in [0, 1]")

    def select(self, x: ViewMatrix, y: AccessoryVector) -> np.ndarray:
        yc = y.center().values
        xc = x.data - x.data.mean(axis=0)
        ys = np.linalg.norm(yc)
        norms = np.linalg.norm(xc, axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        scores = np.where(norms > 0, np.abs(xc.T @ yc) / (safe * max(ys, 1e-300)), 0.0)
        keep = max(int(np.ceil(self.keep_fraction * x.p)), self.min_keep)
        keep = min(keep, x.p)
        if keep == 0:
            return np.array([], dtype=int)
        order = np.argsort(-scores, kind="stable")
        return np.sort(order[:keep])


def directed_fit(x1: ViewMatrix, x2: ViewMatrix, y: AccessoryVector,
                 params: DirectedParams, mode: str = "dot", penalty: str = "l1",
                 conv: ConvergenceSpec | None = None, stage2: str = "svd",
                 ridge: float = 0.0, beta_ridge: float = 0.0, restarts: int = 0,
                 seed: int = 0, divisor: str = "n") -> CcaSolution:
    """Full directed pipeline for the dot-product and regression variants.

    Stage one solves the aligned program for view 2's pattern (alignment
    vectors are the view-accessory cross-covariances for ``mode="dot"`` and
    ridge regression coefficients for ``mode="reg"``), shrinks, solves the
    transposed problem for view 1, then stage two fills in active entries.
    """
    if penalty != "l1":
        raise ValueError("directed stage one is defined for the 'l1' penalty only")
    if mode not in ("dot", "reg"):
        raise ValueError("mode must be 'dot' or 'reg'")
    if y.values.size != x1.n:
        raise DimensionError("accessory length does not match the views")
    conv = conv or ConvergenceSpec()
    y = y.center()

    c12 = cross_covariance(x1, x2, divisor=divisor)
    div = x1.n if divisor == "n" else x1.n - 1
    if mode == "dot":
        a1 = x1.data.T @ y.values / div
        a2 = x2.data.T @ y.values / div
    else:
        a1 = compute_beta(x1, y, ridge=beta_ridge)
        a2 = compute_beta(x2, y, ridge=beta_ridge)

    res2 = directed_pattern_dot(c12.block, a1, a2, params, conv=conv,
                                restarts=restarts, seed=seed)
    tau2 = res2.pattern
    sub = c12.block[:, tau2.indices()]
    res1 = directed_pattern_dot(sub.T, a2[tau2.indices()], a1, params.swapped(),
                                conv=conv, restarts=restarts, seed=seed)
    tau1 = res1.pattern

    ix1, ix2 = tau1.indices(), tau2.indices()
    sub2 = c12.block[np.ix_(ix1, ix2)]
    need_gep = stage2 == "gep"
    c11s = cross_covariance(x1, x1, divisor=divisor).block[np.ix_(ix1, ix1)] if need_gep else None
    c22s = cross_covariance(x2, x2, divisor=divisor).block[np.ix_(ix2, ix2)] if need_gep else None
    a1v, a2v, normalization, warn = _stage_two(sub2, c11s, c22s, stage2, ridge, conv)
    z1 = _expand(a1v, ix1, x1.p)
    z2 = _expand(a2v, ix2, x2.p)
    _fix_sign(z1, [z2])
    cov1, cov2 = x1.data @ z1, x2.data @ z2
    rho, flagged = _pearson(cov1, cov2)
    if flagged:
        warn += ("degenerate covariate, correlation set to 0",)
    info = {"side2": res2.iterations, "side1": res1.iterations}
    if conv.objective_track:
        info["traces"] = {"side2": res2.objective_trace, "side1": res1.objective_trace}
    return CcaSolution(directions=[z1[:, None], z2[:, None]],
                       correlations=np.array([rho]), factor_count=1,
                       normalization=normalization,
                       covariates=[cov1[:, None], cov2[:, None]],
                       patterns=[[tau1], [tau2]], iterations=[info], warnings=warn)


def directed_two_stage(x1: ViewMatrix, x2: ViewMatrix, y: AccessoryVector,
                       selector: UnivariateSelector, gamma1: float, gamma2: float,
                       penalty: str = "l1", conv: ConvergenceSpec | None = None,
                       stage2: str = "svd", ridge: float = 0.0, order: str = "auto",
                       restarts: int = 0, seed: int = 0,
                       divisor: str = "n") -> CcaSolution:
    """Select-then-solve baseline: univariate screening against y, then the
    undirected pipeline on the selected columns, re-expanded to full length."""
    if y.values.size != x1.n:
        raise DimensionError("accessory length does not match the views")
    q1 = selector.select(x1, y)
    q2 = selector.select(x2, y)
    for q, view, label in ((q1, x1, "view 1"), (q2, x2, "view 2")):
        if q.size == 0:
            raise EmptySupportError(f"selector kept no columns of {label}", side=label)

    def subset(view: ViewMatrix, q: np.ndarray) -> ViewMatrix:
        return ViewMatrix(view.data[:, q], [view.names[j] for j in q],
                          centered=view.centered, scaled=view.scaled)

    sol = fit_pair(subset(x1, q1), subset(x2, q2), gamma1, gamma2, factors=1,
                   penalty=penalty, conv=conv, stage2=stage2, ridge=ridge,
                   order=order, restarts=restarts, seed=seed, divisor=divisor)

    z1 = _expand(sol.directions[0][:, 0], q1, x1.p)
    z2 = _expand(sol.directions[1][:, 0], q2, x2.p)
    patterns = [[SparsityPattern(z1 != 0)], [SparsityPattern(z2 != 0)]]
    return CcaSolution(directions=[z1[:, None], z2[:, None]],
                       correlations=sol.correlations, factor_count=1,
                       normalization=sol.normalization,
                       covariates=[(x1.data @ z1)[:, None], (x2.data @ z2)[:, None]],
                       patterns=patterns, iterations=sol.iterations,
                       warnings=sol.warnings)

"""Stage-two estimation on shrunken problems and multi-factor deflation.

Active entries of the canonical directions are filled in on the doubly
shrunken cross-covariance, either by a power-iteration SVD (inversion-free
default) or by the block generalized eigenvalue formulation that normalizes
against the within-view covariances. Additional factors come from deflating
the cross-covariance by fitted rank-one terms. Multi-view stage-two
back-ends (block GEP and cyclic power iteration) live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .covariance import SparsityPattern, ViewMatrix, cross_covariance
from .errors import (DegenerateInputError, DimensionError, EmptySupportError,
                     SingularityError)
from .pattern import (ConvergenceSpec, Direction, _as_block, init_direction,
                      pattern_pair)

_UNIT_TOL = 1e-8


@dataclass(eq=False)
class CcaSolution:
    """Fitted canonical factors for two or more views.

    Directions are full-length with exact zeros off-support and are stored
    one column per factor. ``normalization`` records the convention:
    ``"unit"`` (unit Euclidean norm over active entries, SVD back-end) or
    ``"cov"`` (unit z'C_ii z, GEP back-ends). Correlations are sorted
    non-increasing across factors.
    """

    directions: list[np.ndarray]
    correlations: np.ndarray
    factor_count: int
    normalization: str
    covariates: list[np.ndarray] | None = None
    patterns: list[list[SparsityPattern]] | None = None
    iterations: list[dict] = field(default_factory=list)
    pairwise_correlations: list[np.ndarray] | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        self.correlations = np.asarray(self.correlations, dtype=float)
        if self.correlations.size > 1 and np.any(np.diff(self.correlations) > 1e-12):
            raise ValueError("correlations must be sorted non-increasing")


@dataclass(eq=False)
class ResidualState:
    """A cross-covariance block minus the rank-one terms fitted so far."""

    base: np.ndarray
    history: list[tuple[np.ndarray, np.ndarray, float]]
    current: np.ndarray

    @classmethod
    def from_block(cls, c) -> "ResidualState":
        block = np.array(_as_block(c), dtype=float)
        return cls(base=block.copy(), history=[], current=block)

    def reconstruction_error(self) -> float:
        acc = self.base.copy()
        for z1, z2, scale in self.history:
            acc -= scale * np.outer(z1, z2)
        return float(np.abs(acc - self.current).max(initial=0.0))


def deflate(state: ResidualState, z1, z2) -> ResidualState:
    """Subtract the fitted rank-one term scaled by z1' C z2 from the residual."""
    z1 = np.asarray(z1.values if isinstance(z1, Direction) else z1, dtype=float)
    z2 = np.asarray(z2.values if isinstance(z2, Direction) else z2, dtype=float)
    if z1.shape != (state.current.shape[0],) or z2.shape != (state.current.shape[1],):
        raise DimensionError("deflation directions do not match the block")
    if abs(np.linalg.norm(z1) - 1.0) > _UNIT_TOL or abs(np.linalg.norm(z2) - 1.0) > _UNIT_TOL:
        raise DimensionError("deflation directions must have unit Euclidean norm")
    scale = float(z1 @ state.current @ z2)
    return ResidualState(base=state.base,
                         history=state.history + [(z1.copy(), z2.copy(), scale)],
                         current=state.current - scale * np.outer(z1, z2))


def power_svd(c, conv: ConvergenceSpec | None = None,
              trace: list | None = None) -> tuple[Direction, Direction, float]:
    """Leading singular triple of a block by alternating power iteration.

    The singular value estimate u'Cv is non-decreasing across iterations;
    pass a list as ``trace`` to record it. The sign is absorbed into v so
    sigma >= 0.
    """
    block = _as_block(c)
    conv = conv or ConvergenceSpec()
    if not np.any(block):
        raise DegenerateInputError("cannot factor an all-zero block")
    u = init_direction(block).values
    vraw = block.T @ u
    nv = np.linalg.norm(vraw)
    if nv == 0.0:
        raise DegenerateInputError("initial iterate is orthogonal to the row space")
    v = vraw / nv
    sigma = float(u @ block @ v)
    if trace is not None:
        trace.append(abs(sigma))
    for _ in range(conv.max_iter):
        unew = block @ v
        nu = np.linalg.norm(unew)
        if nu == 0.0:
            raise DegenerateInputError("power iteration collapsed to zero")
        unew /= nu
        vnew = block.T @ unew
        nv = np.linalg.norm(vnew)
        if nv == 0.0:
            raise DegenerateInputError("power iteration collapsed to zero")
        vnew /= nv
        sigma_new = float(unew @ block @ vnew)
        if trace is not None:
            trace.append(abs(sigma_new))
        # steps measured up to a joint sign flip of the pair
        step = min(max(np.linalg.norm(unew - u), np.linalg.norm(vnew - v)),
                   max(np.linalg.norm(unew + u), np.linalg.norm(vnew + v)))
        stalled = abs(abs(sigma_new) - abs(sigma)) <= conv.tol * max(1.0, abs(sigma))
        u, v, sigma = unew, vnew, sigma_new
        if stalled and step <= conv.tol:
            break
    if sigma < 0:
        v = -v
        sigma = -sigma
    return Direction(u), Direction(v), float(sigma)


def _check_square_symmetric(m: np.ndarray, name: str):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square")
    scale = np.abs(m).max(initial=0.0) + 1.0
    if np.abs(m - m.T).max(initial=0.0) > 1e-10 * scale:
        raise DimensionError(f"{name} must be symmetric")


def _fix_sign(z1: np.ndarray, partners: list[np.ndarray]) -> None:
    """Flip the factor jointly so z1's first non-zero entry is positive."""
    nz = np.flatnonzero(z1)
    if nz.size and z1[nz[0]] < 0:
        z1 *= -1.0
        for z in partners:
            z *= -1.0


def cca_gep(c11, c12, c22, ridge: float = 0.0, factors: int | None = None) -> CcaSolution:
    """Canonical directions from the block generalized eigenvalue problem.

    Solves [[0, C12],[C21, 0]] w = rho [[C11+ridge I, 0],[0, C22+ridge I]] w;
    the positive generalized eigenvalues are the canonical correlations and
    each direction is normalized so z'(C_ii+ridge I)z = 1. Intended for
    shrunken blocks of size O(n).
    """
    c11 = _as_block(c11)
    c22 = _as_block(c22)
    c12 = _as_block(c12)
    _check_square_symmetric(c11, "c11")
    _check_square_symmetric(c22, "c22")
    p1, p2 = c12.shape
    if c11.shape[0] != p1 or c22.shape[0] != p2:
        raise DimensionError("within-view blocks do not match the cross block")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")

    a = np.zeros((p1 + p2, p1 + p2))
    a[:p1, p1:] = c12
    a[p1:, :p1] = c12.T
    b = scipy.linalg.block_diag(c11 + ridge * np.eye(p1), c22 + ridge * np.eye(p2))
    try:
        vals, vecs = scipy.linalg.eigh(a, b)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as err:
        raise SingularityError(
            "within-view covariance is singular; re-run with ridge > 0") from err

    order = np.argsort(vals)[::-1]
    k_max = min(p1, p2)
    k = k_max if factors is None else min(factors, k_max)
    warnings: tuple[str, ...] = ()
    z1s = np.zeros((p1, k))
    z2s = np.zeros((p2, k))
    rhos = np.empty(k)
    for j in range(k):
        w = vecs[:, order[j]]
        z1, z2 = w[:p1].copy(), w[p1:].copy()
        n1 = float(z1 @ (c11 + ridge * np.eye(p1)) @ z1)
        n2 = float(z2 @ (c22 + ridge * np.eye(p2)) @ z2)
        if n1 <= 0 or n2 <= 0:
            raise SingularityError("eigenvector has zero within-view norm; increase ridge")
        z1 /= np.sqrt(n1)
        z2 /= np.sqrt(n2)
        _fix_sign(z1, [z2])
        rho = max(float(vals[order[j]]), 0.0)
        if z1 @ c12 @ z2 < 0:
            z2 *= -1.0
        z1s[:, j], z2s[:, j], rhos[j] = z1, z2, rho
    if k and rhos[0] <= 1e-14:
        warnings += ("leading generalized eigenvalue is ~0: uninformative cross block",)
    return CcaSolution(directions=[z1s, z2s], correlations=rhos, factor_count=k,
                       normalization="cov", warnings=warnings)


class MultiviewGepResult(NamedTuple):
    directions: list[np.ndarray]
    value: float
    uninformative: bool


def _oriented(cross: Mapping[tuple[int, int], np.ndarray], r: int, s: int) -> np.ndarray:
    return cross[(r, s)] if r < s else cross[(s, r)].T


def _multiview_dims(cross: Mapping[tuple[int, int], np.ndarray]) -> list[int]:
    m = max(max(pair) for pair in cross) + 1
    dims = [0] * m
    for (r, s), block in cross.items():
        if not (0 <= r < s < m):
            raise DimensionError("cross blocks must be keyed by (r, s) with r < s")
        for idx, size in ((r, block.shape[0]), (s, block.shape[1])):
            if dims[idx] and dims[idx] != size:
                raise DimensionError(f"inconsistent dimensions for view {idx}")
            dims[idx] = size
    if any(d == 0 for d in dims):
        raise DimensionError("every view must appear in at least one cross block")
    return dims


def multiview_gep(cross: Mapping[tuple[int, int], np.ndarray],
                  diag: Sequence[np.ndarray], ridge: float = 0.0) -> MultiviewGepResult:
    """Top eigenvector of the m-view block pencil, split per view.

    The left matrix stacks the shrunken cross blocks with a zero diagonal;
    the right is block-diagonal in the within-view blocks. A zero leading
    eigenvalue is flagged as uninformative rather than raised.
    """
    dims = _multiview_dims(cross)
    m = len(dims)
    if m < 2:
        raise DimensionError("need at least two views")
    if len(diag) != m:
        raise DimensionError(f"expected {m} within-view blocks, got {len(diag)}")
    offs = np.concatenate([[0], np.cumsum(dims)])
    total = offs[-1]
    a = np.zeros((total, total))
    for (r, s), block in cross.items():
        a[offs[r]:offs[r + 1], offs[s]:offs[s + 1]] = block
        a[offs[s]:offs[s + 1], offs[r]:offs[r + 1]] = block.T
    b_parts = []
    for r, d in enumerate(diag):
        d = _as_block(d)
        _check_square_symmetric(d, f"diag[{r}]")
        if d.shape[0] != dims[r]:
            raise DimensionError(f"diag[{r}] does not match view dimension")
        b_parts.append(d + ridge * np.eye(dims[r]))
    b = scipy.linalg.block_diag(*b_parts)
    try:
        vals, vecs = scipy.linalg.eigh(a, b)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as err:
        raise SingularityError(
            "within-view covariance is singular; re-run with ridge > 0") from err
    top = int(np.argmax(vals))
    w = vecs[:, top]
    directions = []
    for r in range(m):
        z = w[offs[r]:offs[r + 1]].copy()
        nrm = float(z @ b_parts[r] @ z)
        if nrm > 0:
            z /= np.sqrt(nrm)
        directions.append(z)
    value = float(vals[top])
    return MultiviewGepResult(directions, value, uninformative=value <= 1e-12)


def multiview_power(cross: Mapping[tuple[int, int], np.ndarray],
                    inits: Sequence[np.ndarray] | None = None,
                    conv: ConvergenceSpec | None = None) -> list[np.ndarray]:
    """Leading multi-view directions by per-view power sweeps.

    Views are processed last to first; already-estimated partners enter the
    update linearly, the rest through their squared block so the sweep needs
    no within-view inversion. Returns unit vectors per view.
    """
    conv = conv or ConvergenceSpec()
    dims = _multiview_dims(cross)
    m = len(dims)
    if m < 2:
        raise DimensionError("need at least two views")
    zs: list[np.ndarray] = []
    if inits is None:
        for r in range(m):
            partner = m - 1 if r != m - 1 else m - 2
            zs.append(init_direction(_oriented(cross, r, partner)).values)
    else:
        if len(inits) != m:
            raise DimensionError(f"expected {m} inits")
        for r, z in enumerate(inits):
            z = np.asarray(z, dtype=float)
            if z.shape != (dims[r],):
                raise DimensionError(f"init for view {r} has the wrong length")
            zs.append(z / np.linalg.norm(z))

    for r in range(m - 1, -1, -1):
        z = zs[r]
        for _ in range(conv.max_iter):
            update = np.zeros(dims[r])
            for s in range(m):
                if s == r:
                    continue
                block = _oriented(cross, s, r)  # p_s x p_r
                if s > r:
                    update += block.T @ zs[s]
                else:
                    update += block.T @ (block @ z)
            nrm = np.linalg.norm(update)
            if nrm == 0.0:
                raise DegenerateInputError(f"zero update for view {r}")
            z_new = update / nrm
            step = float(np.linalg.norm(z_new - z))
            z = z_new
            if step <= conv.tol:
                break
        zs[r] = z
    return zs


def _pearson(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    """Sample correlation; returns (0.0, True-flag) for degenerate inputs."""
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0, True
    return float(a @ b / (na * nb)), False


def _expand(values: np.ndarray, indices: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros(p)
    out[indices] = values
    return out


def _stage_two(sub: np.ndarray, c11_sub, c22_sub, stage2: str, ridge: float,
               conv: ConvergenceSpec):
    """Estimate active entries on the doubly shrunken block.

    Returns (z1_active, z2_active, warnings). The GEP back-end retries once
    with an automatic ridge when the within-view blocks are singular.
    """
    warnings: tuple[str, ...] = ()
    if stage2 == "svd":
        u, v, _sigma = power_svd(sub, conv)
        return u.values, v.values, "unit", warnings
    if stage2 != "gep":
        raise ValueError("stage2 must be 'svd' or 'gep'")
    try:
        sol = cca_gep(c11_sub, sub, c22_sub, ridge=ridge, factors=1)
    except SingularityError:
        auto = 1e-8 * (np.trace(c11_sub) / c11_sub.shape[0]
                       + np.trace(c22_sub) / c22_sub.shape[0]) / 2.0
        auto = max(auto, 1e-12)
        sol = cca_gep(c11_sub, sub, c22_sub, ridge=ridge + auto, factors=1)
        warnings += (f"singular within-view covariance: applied ridge {ridge + auto:.3e}",)
    return sol.directions[0][:, 0], sol.directions[1][:, 0], "cov", warnings


def multi_factor(x1: ViewMatrix, x2: ViewMatrix, gammas1: Sequence[float],
                 gammas2: Sequence[float], penalty: str = "l1",
                 conv: ConvergenceSpec | None = None, stage2: str = "svd",
                 ridge: float = 0.0, order: str = "auto", restarts: int = 0,
                 seed: int = 0, divisor: str = "n") -> CcaSolution:
    """Fit several canonical factors by pattern/estimate/deflate cycles.

    Parameters
    ----------
    gammas1, gammas2 : sequences of float
        Per-factor sparsity thresholds (equal length m <= min(n, p1, p2)).
    stage2 : {"svd", "gep"}
        Back-end filling in active entries on each shrunken residual.

    Each factor's patterns come from the current residual cross-covariance;
    the residual is then deflated by the fitted rank-one term (directions
    renormalized to unit Euclidean norm). A factor whose support collapses
    truncates the solution with a diagnostic instead of raising. Factors are
    ordered by decreasing sample canonical correlation.
    """
    gammas1 = list(gammas1)
    gammas2 = list(gammas2)
    if len(gammas1) != len(gammas2):
        raise DimensionError("gamma vectors must have equal length")
    m = len(gammas1)
    bound = min(x1.n, x1.p, x2.p)
    if not 1 <= m <= bound:
        raise DimensionError(f"factor count must be in [1, {bound}]")
    conv = conv or ConvergenceSpec()

    c12 = cross_covariance(x1, x2, divisor=divisor)
    need_gep = stage2 == "gep"
    c11 = cross_covariance(x1, x1, divisor=divisor).block if need_gep else None
    c22 = cross_covariance(x2, x2, divisor=divisor).block if need_gep else None

    state = ResidualState.from_block(c12)
    base_scale = np.linalg.norm(state.base)
    factors = []
    warnings: tuple[str, ...] = ()
    normalization = "unit"
    for i, (g1, g2) in enumerate(zip(gammas1, gammas2)):
        if np.linalg.norm(state.current) <= 1e-7 * max(base_scale, 1e-300):
            warnings += (f"factor {i + 1}: residual numerically exhausted "
                         "(data rank reached)",)
            break
        try:
            pair = pattern_pair(state.current, g1, g2, penalty=penalty, conv=conv,
                                order=order, restarts=restarts, seed=seed)
        except (EmptySupportError, DegenerateInputError) as err:
            warnings += (f"factor {i + 1}: {err}",)
            break
        ix1, ix2 = pair.tau1.indices(), pair.tau2.indices()
        sub = state.current[np.ix_(ix1, ix2)]
        c11_sub = c11[np.ix_(ix1, ix1)] if need_gep else None
        c22_sub = c22[np.ix_(ix2, ix2)] if need_gep else None
        try:
            a1, a2, normalization, extra = _stage_two(sub, c11_sub, c22_sub,
                                                      stage2, ridge, conv)
        except (DegenerateInputError, SingularityError) as err:
            warnings += (f"factor {i + 1}: {err}",)
            break
        warnings += extra
        z1 = _expand(a1, ix1, x1.p)
        z2 = _expand(a2, ix2, x2.p)
        _fix_sign(z1, [z2])
        cov1 = x1.data @ z1
        cov2 = x2.data @ z2
        rho, flagged = _pearson(cov1, cov2)
        if flagged:
            warnings += (f"factor {i + 1}: degenerate covariate, correlation set to 0",)
        u1 = z1 / np.linalg.norm(z1) if np.linalg.norm(z1) else z1
        u2 = z2 / np.linalg.norm(z2) if np.linalg.norm(z2) else z2
        state = deflate(state, u1, u2)
        info = dict(pair.iterations)
        if conv.objective_track:
            info["traces"] = pair.traces
        factors.append((rho, z1, z2, cov1, cov2, pair.tau1, pair.tau2, info))

    if not factors:
        raise EmptySupportError("no factor could be fitted: " + "; ".join(warnings))

    factors.sort(key=lambda f: -f[0])
    k = len(factors)
    d1 = np.column_stack([f[1] for f in factors])
    d2 = np.column_stack([f[2] for f in factors])
    cv1 = np.column_stack([f[3] for f in factors])
    cv2 = np.column_stack([f[4] for f in factors])
    return CcaSolution(
        directions=[d1, d2],
        correlations=np.array([f[0] for f in factors]),
        factor_count=k,
        normalization=normalization,
        covariates=[cv1, cv2],
        patterns=[[f[5] for f in factors], [f[6] for f in factors]],
        iterations=[f[7] for f in factors],
        warnings=warnings)


def fit_pair(x1: ViewMatrix, x2: ViewMatrix, gamma1: float, gamma2: float,
             factors: int = 1, **kwargs) -> CcaSolution:
    """Single-call pipeline: constant per-factor thresholds through multi_factor."""
    return multi_factor(x1, x2, [gamma1] * factors, [gamma2] * factors, **kwargs)

"""Stage-one solvers: support recovery by gradient ascent on the unit sphere.

The sparsity pattern of one canonical direction is found by maximizing a
convex functional of the partner direction over the sphere; the maximizer's
thresholded projections give the pattern, and the partner direction itself
has a closed form. Both an absolute-value (L1) and a squared (L0) threshold
rule are provided, together with data-only screening bounds and the
two-sided pattern pass used by the full pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import CrossCovariance, SparsityPattern, ViewMatrix, cross_covariance
from .errors import DegenerateInputError, DimensionError, EmptySupportError

_UNIT_TOL = 1e-8
_STALL_LIMIT = 16

PENALTIES = ("l1", "l0")


@dataclass(frozen=True)
class ConvergenceSpec:
    """Stopping rule for the sphere ascent.

    The iteration stops once the relative change of the tracked functional
    falls below ``tol`` and the iterate has stopped moving (step below
    ``tol``), or after ``max_iter`` updates. A short stall guard terminates
    sign-pattern cycles whose objective has flatlined.
    """

    tol: float = 1e-8
    max_iter: int = 10000
    objective_track: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(eq=False)
class Direction:
    """A direction vector with its Euclidean norm cached."""

    values: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DimensionError("direction must be a 1-d vector")
        self.norm = float(np.linalg.norm(self.values))


@dataclass(eq=False)
class PatternResult:
    """Output of one stage-one solve.

    ``z_lead`` is the sphere maximizer, ``pattern`` the inferred support of
    the partner direction, and ``z_partner`` the partner's closed form
    (all-zero when fully thresholded). ``objective_trace`` holds the tracked
    functional at every visited iterate when requested.
    """

    z_lead: Direction
    pattern: SparsityPattern
    z_partner: Direction
    iterations: int
    objective_trace: np.ndarray | None = None


def _as_block(c) -> np.ndarray:
    if isinstance(c, CrossCovariance):
        return c.block
    block = np.asarray(c, dtype=float)
    if block.ndim != 2:
        raise DimensionError("covariance block must be 2-d")
    return block


def _require_unit(z: np.ndarray, what: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if abs(np.linalg.norm(z) - 1.0) > _UNIT_TOL:
        raise DimensionError(f"{what} must have unit Euclidean norm")
    return z


def init_direction(c) -> Direction:
    """Initial iterate parallel to the block column with the largest norm.

    Guarantees the first update is non-zero whenever the threshold is below
    the largest column norm. Ties break toward the lowest column index.
    """
    block = _as_block(c)
    norms = np.linalg.norm(block, axis=0)
    if not norms.max() > 0:
        raise DegenerateInputError("all columns of the block are zero")
    i_star = int(np.argmax(norms))
    return Direction(block[:, i_star] / norms[i_star])


def _ascend(step, z0: np.ndarray, conv: ConvergenceSpec, side: str):
    """Iterate z <- update(z)/||update(z)|| until the tracked functional stalls.

    ``step(z)`` returns ``(functional value at z, update vector)``; the update
    maximizes the linearization of a convex functional over the sphere, so
    the tracked values are non-decreasing.
    """
    z = np.array(z0, dtype=float)
    trace = [] if conv.objective_track else None
    prev_obj = None
    stall_run = 0
    iterations = 0
    for _ in range(conv.max_iter):
        obj, update = step(z)
        if trace is not None:
            trace.append(obj)
        nrm = np.linalg.norm(update)
        if nrm == 0.0:
            raise EmptySupportError(
                f"update vanished while solving for {side}: the threshold exceeds "
                "every projection", side=side, last_iterate=z.copy())
        z_new = update / nrm
        iterations += 1
        move = float(np.linalg.norm(z_new - z))
        stalled = prev_obj is not None and abs(obj - prev_obj) <= conv.tol * max(1.0, abs(prev_obj))
        z = z_new
        prev_obj = obj
        if stalled:
            stall_run += 1
            if move <= conv.tol or stall_run >= _STALL_LIMIT:
                break
        else:
            stall_run = 0
    if trace is not None:
        trace.append(step(z)[0])
    return z, iterations, (np.asarray(trace) if trace is not None else None)


def _random_units(rng: np.random.Generator, p: int, count: int) -> list[np.ndarray]:
    inits = []
    for _ in range(count):
        v = rng.standard_normal(p)
        n = np.linalg.norm(v)
        while n == 0.0:
            v = rng.standard_normal(p)
            n = np.linalg.norm(v)
        inits.append(v / n)
    return inits


def _solve(block, step, program_objective, z0, conv, restarts, seed, side):
    """Run the ascent from the deterministic init plus optional random restarts,
    keeping the candidate with the best program objective."""
    if z0 is None:
        start = init_direction(block).values
    else:
        start = _require_unit(z0.values if isinstance(z0, Direction) else z0, "z0")
        if start.size != block.shape[0]:
            raise DimensionError(f"z0 has length {start.size}, block has {block.shape[0]} rows")
    inits = [start]
    if restarts > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        inits.extend(_random_units(rng, block.shape[0], restarts))

    best = None
    first_err: EmptySupportError | None = None
    for z_init in inits:
        try:
            z, its, trace = _ascend(step, z_init, conv, side)
        except EmptySupportError as err:
            if first_err is None:
                first_err = err
            continue
        score = program_objective(z)
        if best is None or score > best[0]:
            best = (score, z, its, trace)
    if best is None:
        raise first_err
    return best[1], best[2], best[3]


def _partner_l1(proj: np.ndarray, gamma2: float) -> np.ndarray:
    w = np.maximum(np.abs(proj) - gamma2, 0.0)
    denom = np.sqrt(float(w @ w))
    if denom == 0.0:
        return np.zeros_like(proj)
    return np.sign(proj) * w / denom


def _partner_l0(proj: np.ndarray, gamma2: float) -> np.ndarray:
    active = (proj * proj - gamma2) > 0
    denom = np.sqrt(float((proj * proj)[active].sum()))
    if denom == 0.0:
        return np.zeros_like(proj)
    return np.where(active, proj, 0.0) / denom


def objective_l1(c, z: np.ndarray, gamma2: float) -> float:
    """Sum of squared soft-thresholded projections (the L1 program objective)."""
    proj = _as_block(c).T @ np.asarray(z, dtype=float)
    w = np.maximum(np.abs(proj) - gamma2, 0.0)
    return float(w @ w)


def objective_l0(c, z: np.ndarray, gamma2: float) -> float:
    """Sum of clipped squared projections (the L0 program objective)."""
    proj = _as_block(c).T @ np.asarray(z, dtype=float)
    return float(np.maximum(proj * proj - gamma2, 0.0).sum())


def pattern_l1(c, gamma2: float, z0=None, conv: ConvergenceSpec | None = None,
               restarts: int = 0, seed: int = 0) -> PatternResult:
    """Infer the partner support under the absolute-value threshold rule.

    Parameters
    ----------
    c : CrossCovariance or array
        p_lead x p_partner cross-covariance block.
    gamma2 : float
        Non-negative sparsity threshold applied to |c_i' z|.
    z0 : Direction or array, optional
        Unit-norm start; defaults to the largest-norm column of the block.
    restarts : int
        Extra random unit restarts (seeded); the candidate with the best
        program objective is kept.

    Coordinates with |c_i' z*| <= gamma2 are inactive (the boundary counts
    as inactive). Raises EmptySupportError when everything is thresholded.
    """
    block = _as_block(c)
    if gamma2 < 0:
        raise ValueError("gamma2 must be non-negative")
    conv = conv or ConvergenceSpec()

    def step(z):
        proj = block.T @ z
        w = np.maximum(np.abs(proj) - gamma2, 0.0)
        return float(w @ w), block @ (w * np.sign(proj))

    z, its, trace = _solve(block, step, lambda z: objective_l1(block, z, gamma2),
                           z0, conv, restarts, seed, side="partner")
    proj = block.T @ z
    bits = np.abs(proj) > gamma2
    if not bits.any():
        raise EmptySupportError("every coordinate is at or below the threshold",
                                side="partner", last_iterate=z)
    return PatternResult(Direction(z), SparsityPattern(bits),
                         Direction(_partner_l1(proj, gamma2)), its, trace)


def pattern_l0(c, gamma2: float, z0=None, conv: ConvergenceSpec | None = None,
               restarts: int = 0, seed: int = 0) -> PatternResult:
    """Infer the partner support under the squared threshold rule.

    Same contract as :func:`pattern_l1` with (c_i' z)^2 <= gamma2 marking a
    coordinate inactive. The update weights active projections by an
    indicator, the exact subgradient of the program objective, so the
    tracked objective is non-decreasing.
    """
    block = _as_block(c)
    if gamma2 < 0:
        raise ValueError("gamma2 must be non-negative")
    conv = conv or ConvergenceSpec()

    def step(z):
        proj = block.T @ z
        clipped = np.maximum(proj * proj - gamma2, 0.0)
        active = clipped > 0
        return float(clipped.sum()), block @ np.where(active, proj, 0.0)

    z, its, trace = _solve(block, step, lambda z: objective_l0(block, z, gamma2),
                           z0, conv, restarts, seed, side="partner")
    proj = block.T @ z
    bits = (proj * proj) > gamma2
    if not bits.any():
        raise EmptySupportError("every squared projection is at or below the threshold",
                                side="partner", last_iterate=z)
    return PatternResult(Direction(z), SparsityPattern(bits),
                         Direction(_partner_l0(proj, gamma2)), its, trace)


def reconstruct_l1(c, z1, gamma2: float) -> Direction:
    """Closed-form partner direction for the absolute-value rule.

    Returns the all-zero vector when every projection is thresholded; the
    caller decides whether that is an error.
    """
    block = _as_block(c)
    z = np.asarray(z1.values if isinstance(z1, Direction) else z1, dtype=float)
    return Direction(_partner_l1(block.T @ z, gamma2))


def reconstruct_l0(c, z1, gamma2: float) -> Direction:
    """Closed-form partner direction for the squared rule (zero when clipped out)."""
    block = _as_block(c)
    z = np.asarray(z1.values if isinstance(z1, Direction) else z1, dtype=float)
    return Direction(_partner_l0(block.T @ z, gamma2))


def screen_l1(c, gamma2: float) -> SparsityPattern:
    """Data-only bound: columns with ||c_i|| <= gamma2 can never be active."""
    block = _as_block(c)
    return SparsityPattern(np.linalg.norm(block, axis=0) > gamma2)


def screen_l0(c, gamma2: float) -> SparsityPattern:
    """Data-only bound for the squared rule: ||c_i||^2 <= gamma2 is inactive."""
    block = _as_block(c)
    return SparsityPattern((block * block).sum(axis=0) > gamma2)


_PATTERN_FN = {"l1": pattern_l1, "l0": pattern_l0}


@dataclass(eq=False)
class PairPatterns:
    """Both patterns from the two-sided stage-one pass, plus diagnostics."""

    tau1: SparsityPattern
    tau2: SparsityPattern
    first_side: int
    iterations: dict
    traces: dict


def pattern_pair(c12, gamma1: float, gamma2: float, penalty: str = "l1",
                 conv: ConvergenceSpec | None = None, order: str = "auto",
                 restarts: int = 0, seed: int = 0) -> PairPatterns:
    """Run the stage-one solver on both sides with successive shrinkage.

    One side's pattern is computed on the full block; the block is then
    restricted to that support and the other side is solved on the
    transposed, shrunken block. ``order`` picks which side goes first:
    "auto" patterns the larger side first, "2-first"/"1-first" force it.
    """
    if penalty not in _PATTERN_FN:
        raise ValueError(f"penalty must be one of {PENALTIES}")
    solver = _PATTERN_FN[penalty]
    block = _as_block(c12)
    p1, p2 = block.shape
    if order == "auto":
        first = 1 if p1 > p2 else 2
    elif order in ("1-first", "2-first"):
        first = int(order[0])
    else:
        raise ValueError("order must be 'auto', '1-first' or '2-first'")
    conv = conv or ConvergenceSpec()

    def run(b, gamma, side):
        try:
            return solver(b, gamma, conv=conv, restarts=restarts, seed=seed)
        except EmptySupportError as err:
            raise EmptySupportError(f"view {side} support collapsed: {err}",
                                    side=f"view {side}",
                                    last_iterate=err.last_iterate) from None

    if first == 2:
        res2 = run(block, gamma2, side=2)
        sub = block[:, res2.pattern.indices()]
        res1 = run(sub.T, gamma1, side=1)
        tau1, tau2 = res1.pattern, res2.pattern
        iterations = {"side2": res2.iterations, "side1": res1.iterations}
        traces = {"side2": res2.objective_trace, "side1": res1.objective_trace}
    else:
        res1 = run(block.T, gamma1, side=1)
        sub = block[res1.pattern.indices(), :]
        res2 = run(sub, gamma2, side=2)
        tau1, tau2 = res1.pattern, res2.pattern
        iterations = {"side1": res1.iterations, "side2": res2.iterations}
        traces = {"side1": res1.objective_trace, "side2": res2.objective_trace}
    return PairPatterns(tau1, tau2, first, iterations, traces)


def scca_pair(x1: ViewMatrix, x2: ViewMatrix, gamma1: float, gamma2: float,
              penalty: str = "l1", conv: ConvergenceSpec | None = None,
              order: str = "auto", restarts: int = 0, seed: int = 0,
              ) -> tuple[SparsityPattern, SparsityPattern]:
    """Stage-one patterns for a pair of centered views (full-length both sides)."""
    c12 = cross_covariance(x1, x2)
    pair = pattern_pair(c12.block, gamma1, gamma2, penalty=penalty, conv=conv,
                        order=order, restarts=restarts, seed=seed)
    return pair.tau1, pair.tau2

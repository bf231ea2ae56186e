"""B-spline basis evaluation on uniform extended knot grids.

Every edge activation in a network is a linear combination of the basis
functions defined here. Grids are uniform on [domain_lo, domain_hi] with
``degree`` extra knots continuing the spacing on each side, so evaluation
outside the domain extrapolates smoothly instead of clamping.

Evaluation runs the Cox-de Boor recursion restricted to the single knot span
containing each point (at most degree+1 bases are nonzero there). On a
uniform grid the recursion's knot differences are all multiples of the
spacing, so the local values depend only on the fractional position inside
the span.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SplineGrid:
    """Knot vector and degree shared by all edges of a layer.

    ``knots`` has ``num_intervals + 2 * degree + 1`` nondecreasing entries;
    the central ``num_intervals + 1`` of them partition the domain uniformly.
    The basis has ``num_intervals + degree`` functions.
    """

    degree: int
    num_intervals: int
    domain_lo: float
    domain_hi: float
    knots: np.ndarray = field(repr=False)

    @property
    def num_basis(self) -> int:
        return self.num_intervals + self.degree

    @property
    def spacing(self) -> float:
        return (self.domain_hi - self.domain_lo) / self.num_intervals


def make_grid(degree: int, num_intervals: int, domain_lo: float, domain_hi: float) -> SplineGrid:
    """Build a uniform grid with ``degree`` extension knots on each side."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if num_intervals < 1:
        raise ValueError(f"num_intervals must be >= 1, got {num_intervals}")
    if not domain_lo < domain_hi:
        raise ValueError(f"need domain_lo < domain_hi, got [{domain_lo}, {domain_hi}]")
    h = (domain_hi - domain_lo) / num_intervals
    knots = domain_lo + h * np.arange(-degree, num_intervals + degree + 1, dtype=float)
    knots.setflags(write=False)
    return SplineGrid(degree, num_intervals, float(domain_lo), float(domain_hi), knots)


def _locate(grid: SplineGrid, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Knot span index, fractional position in the span, and validity mask.

    Span s satisfies knots[s] <= x < knots[s+1] (half-open); points outside
    the extended knot range get ``valid == False`` and an all-zero basis row.
    """
    u = (x - grid.domain_lo) / grid.spacing
    cell = np.floor(u)
    with np.errstate(invalid="ignore"):  # non-finite points land in no span
        span = cell.astype(np.int64) + grid.degree
    valid = (span >= 0) & (span <= len(grid.knots) - 2) & np.isfinite(cell)
    return span, u - cell, valid


def _raise_local(vals: np.ndarray, w: np.ndarray, degree: int, j: int) -> None:
    """One Cox-de Boor step in place: degree j-1 span values -> degree j.

    Degree-d values occupy the trailing d+1 columns; column r of the final
    result corresponds to basis index span - degree + r.
    """
    start = degree - j
    saved = 0.0
    for r in range(j):
        prev = vals[..., start + 1 + r]
        vals[..., start + r] = saved + (r + 1 - w) * prev / j
        saved = (w + j - r - 1) * prev / j
    vals[..., degree] = saved


def _local_values(w: np.ndarray, degree: int, up_to: int | None = None) -> np.ndarray:
    """Values of the ``degree+1`` bases that can be nonzero on a span, as a
    function of the fractional position ``w``.

    On a uniform grid the recursion's denominators collapse to the degree, so
    each Cox-de Boor step is plain arithmetic in ``w``.
    """
    target = degree if up_to is None else up_to
    vals = np.zeros(w.shape + (degree + 1,))
    vals[..., degree] = 1.0
    for j in range(1, target + 1):
        _raise_local(vals, w, degree, j)
    return vals


def _flat_index(grid: SplineGrid, span: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, int]:
    """Raveled positions of each point's k+1 local values inside a padded
    (M, num_basis + 2*degree) matrix; padding absorbs extension-zone columns.
    """
    k = grid.degree
    ncols = grid.num_basis + 2 * k
    safe = span if valid.all() else np.clip(span, 0, len(grid.knots) - 2)
    # column of local r is (span - k + r) + k = span + r in the padded matrix
    flat = (np.arange(span.shape[0], dtype=np.int64) * ncols + safe)[:, None]
    flat = flat + np.arange(k + 1, dtype=np.int64)[None, :]
    return flat, ncols


def _scatter(
    grid: SplineGrid,
    valid: np.ndarray,
    local: np.ndarray,
    flat: np.ndarray,
    ncols: int,
) -> np.ndarray:
    k = grid.degree
    if not valid.all():
        local = np.where(valid[:, None], local, 0.0)
    dense = np.zeros((local.shape[0], ncols))
    dense.ravel()[flat.ravel()] = local.ravel()
    return dense[:, k : k + grid.num_basis] if k else dense


def design_matrix(grid: SplineGrid, x: np.ndarray) -> np.ndarray:
    """Dense (M, num_basis) basis values at the flat points ``x``."""
    x = np.asarray(x, dtype=float)
    span, w, valid = _locate(grid, x)
    flat, ncols = _flat_index(grid, span, valid)
    return _scatter(grid, valid, _local_values(w, grid.degree), flat, ncols)


def design_and_derivative(grid: SplineGrid, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense basis values and first derivatives in one pass.

    The derivative of a degree-k basis is the scaled difference of two
    degree k-1 bases; on a uniform grid the scale is 1 over the spacing.
    """
    x = np.asarray(x, dtype=float)
    k = grid.degree
    span, w, valid = _locate(grid, x)
    flat, ncols = _flat_index(grid, span, valid)
    if k == 0:
        vals = _scatter(grid, valid, _local_values(w, 0), flat, ncols)
        return vals, np.zeros_like(vals)
    lower = _local_values(w, k, up_to=k - 1)
    dlocal = np.empty_like(lower)
    dlocal[:, 0] = -lower[:, 1]
    dlocal[:, 1:k] = lower[:, 1:k] - lower[:, 2:]
    dlocal[:, k] = lower[:, k]
    dlocal /= grid.spacing
    _raise_local(lower, w, k, k)  # lower now holds the degree-k values
    return (
        _scatter(grid, valid, lower, flat, ncols),
        _scatter(grid, valid, dlocal, flat, ncols),
    )


def basis_values(grid: SplineGrid, x) -> np.ndarray:
    """Evaluate every basis function at ``x``.

    ``x`` may be a scalar or a 1-d array; the result has one row per point
    and ``grid.num_basis`` columns (a single vector for scalar input).
    Inside the domain the values are nonnegative and sum to 1.
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    values = design_matrix(grid, arr)
    if np.isscalar(x) or np.ndim(x) == 0:
        return values[0]
    return values


def basis_derivatives(grid: SplineGrid, x) -> np.ndarray:
    """First derivative of every basis function at ``x``."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    _, derivs = design_and_derivative(grid, arr)
    if np.isscalar(x) or np.ndim(x) == 0:
        return derivs[0]
    return derivs

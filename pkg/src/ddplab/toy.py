"""A 1-D toy detection problem with restriction, moving and mixing operators.

Inputs are functions on [0, 1] discretized to n uniform cells.  A detector
only reads a support mask S (a restriction operator); inputs supported off
S look like zero to it, so a sup-norm bound checked through the mask alone
has "annihilators": functions with large norm the detector passes anyway.
Additional operators close the gap:

* moving by the shifts {0, +0.25, -0.25} lets the masked reads tile the
  whole interval (the coverage lemma below is exact in cells),
* mixing (window means) makes any cell value visible through the window
  containing only that cell.

``annihilator_empty`` runs an adversarial search for a passing
above-threshold input and reports a witness when one exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

DEFAULT_RESOLUTION = 256


@dataclass(frozen=True)
class GridFunction:
    """Real values over a uniform discretization of [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or len(v) == 0:
            raise ConfigurationError("grid function must be a nonempty 1-D array")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return len(self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class SupportMask:
    """Boolean cells the detector is allowed to read."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 1 or not m.any():
            raise ConfigurationError("support mask must be 1-D and nonempty")
        object.__setattr__(self, "mask", m)

    @property
    def resolution(self) -> int:
        return len(self.mask)


def default_support_mask(n: int = DEFAULT_RESOLUTION) -> SupportMask:
    """Cells covering [0, 0.25) and [0.5, 0.75); n must be divisible by 4."""
    if n % 4:
        raise ConfigurationError("resolution must be divisible by 4 for exact quarter shifts")
    m = np.zeros(n, dtype=bool)
    m[: n // 4] = True
    m[n // 2: 3 * n // 4] = True
    return SupportMask(mask=m)


def restrict(r: GridFunction, support: SupportMask) -> GridFunction:
    """Zero the values outside the mask; the detector reads only inside it."""
    if r.resolution != support.resolution:
        raise ConfigurationError("resolution mismatch between function and mask")
    return GridFunction(values=np.where(support.mask, r.values, 0.0))


@dataclass(frozen=True)
class MoveOp:
    """Translation by a fraction of the interval: g(x) = r(x + shift).

    Cells shifted in from outside [0, 1] are zero (truncation padding); the
    shift must land on whole cells.
    """

    shift: float

    def cells(self, n: int) -> int:
        c = round(self.shift * n)
        if abs(c - self.shift * n) > 1e-9:
            raise ConfigurationError(f"shift {self.shift} is not a whole number of cells at n={n}")
        return int(c)

    def apply(self, r: GridFunction) -> GridFunction:
        n = r.resolution
        c = self.cells(n)
        out = np.zeros(n)
        src_lo, src_hi = max(c, 0), min(n + c, n)
        if src_lo < src_hi:
            out[src_lo - c: src_hi - c] = r.values[src_lo:src_hi]
        return GridFunction(values=out)

    def read_cells(self, support: SupportMask) -> np.ndarray:
        """Which original cells the masked output exposes."""
        n = support.resolution
        c = self.cells(n)
        read = np.zeros(n, dtype=bool)
        idx = np.where(support.mask)[0] + c
        idx = idx[(idx >= 0) & (idx < n)]
        read[idx] = True
        return read


@dataclass(frozen=True)
class MixOp:
    """Window averaging: g is the constant equal to the mean of r over [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not 0.0 <= self.a < self.b <= 1.0:
            raise ConfigurationError(f"need 0 <= a < b <= 1, got ({self.a}, {self.b})")

    def window_cells(self, n: int) -> tuple[int, int]:
        lo, hi = round(self.a * n), round(self.b * n)
        return int(lo), int(max(hi, lo + 1))

    def apply(self, r: GridFunction) -> GridFunction:
        lo, hi = self.window_cells(r.resolution)
        return GridFunction(values=np.full(r.resolution, r.values[lo:hi].mean()))

    def read_cells(self, support: SupportMask) -> np.ndarray:
        # the constant output is visible anywhere on a nonempty mask
        lo, hi = self.window_cells(support.resolution)
        read = np.zeros(support.resolution, dtype=bool)
        read[lo:hi] = True
        return read


def apply_operator(op, r: GridFunction) -> GridFunction:
    return op.apply(r)


def moving_operators(shifts=(0.0, 0.25, -0.25)):
    return [MoveOp(shift=s) for s in shifts]


def dyadic_mixing_operators(n: int = DEFAULT_RESOLUTION):
    """All dyadic windows [j/2^k, (j+1)/2^k] down to single cells."""
    if n & (n - 1):
        raise ConfigurationError("dyadic windows need a power-of-two resolution")
    ops = []
    k = 0
    while (1 << k) <= n:
        pieces = 1 << k
        for j in range(pieces):
            ops.append(MixOp(a=j / pieces, b=(j + 1) / pieces))
        k += 1
    return ops


def detector_passes(r: GridFunction, sigma: float, support: SupportMask, operators) -> bool:
    """True when every operator-then-restrict read stays within the bound."""
    return all(restrict(op.apply(r), support).sup_norm() <= sigma for op in operators)


def covered_cells(support: SupportMask, operators) -> np.ndarray:
    """Union of original cells exposed by the operator-restricted reads."""
    read = np.zeros(support.resolution, dtype=bool)
    for op in operators:
        read |= op.read_cells(support)
    return read


@dataclass(frozen=True)
class AnnihilatorResult:
    empty: bool
    witness: GridFunction | None
    candidates_tried: int


def annihilator_empty(sigma: float, support: SupportMask, operators,
                      budget: int = 200, rng=None) -> AnnihilatorResult:
    """Search for an above-threshold input the operator-checked detector passes.

    Structured candidates concentrate mass on cells no operator read
    exposes (when such cells exist, a bump there is an immediate witness);
    the remaining budget goes to random candidates.  Any witness returned
    has been re-verified directly against the definition.
    """
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    n = support.resolution
    tried = 0

    def is_witness(vals) -> GridFunction | None:
        nonlocal tried
        tried += 1
        r = GridFunction(values=vals)
        if r.sup_norm() > sigma and detector_passes(r, sigma, support, operators):
            return r
        return None

    uncovered = ~covered_cells(support, operators)
    if uncovered.any():
        # one bump per maximal uncovered run
        runs = np.split(np.where(uncovered)[0], np.where(np.diff(np.where(uncovered)[0]) > 1)[0] + 1)
        for run in runs:
            vals = np.zeros(n)
            vals[run] = 2.0 * sigma
            w = is_witness(vals)
            if w is not None:
                return AnnihilatorResult(empty=False, witness=w, candidates_tried=tried)

    for _ in range(budget):
        vals = np.zeros(n)
        kind = rng.integers(0, 3)
        if kind == 0 and uncovered.any():  # random field off the covered region
            vals[uncovered] = rng.uniform(-2.0 * sigma, 2.0 * sigma, uncovered.sum())
        elif kind == 1:  # localized random spike
            width = int(rng.integers(1, max(2, n // 8)))
            start = int(rng.integers(0, n - width + 1))
            vals[start:start + width] = rng.choice([-2.0, 2.0]) * sigma
        else:  # dense random field
            vals = rng.uniform(-2.0 * sigma, 2.0 * sigma, n)
        w = is_witness(vals)
        if w is not None:
            return AnnihilatorResult(empty=False, witness=w, candidates_tried=tried)
    return AnnihilatorResult(empty=True, witness=None, candidates_tried=tried)


def verify_witness(witness: GridFunction, sigma: float, support: SupportMask, operators) -> bool:
    """Independent re-check of the witness conditions."""
    return witness.sup_norm() > sigma and detector_passes(witness, sigma, support, operators)

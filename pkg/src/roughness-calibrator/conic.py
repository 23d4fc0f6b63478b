"""Degenerate conic sections: classification and factorization into line pairs.

A conic a x² + 2h xy + b y² + 2f x + 2g y + c factors as
ν(Ax + By + C)(Dx + Ey + F) when its determinant vanishes. The cross
products DB, AF, EC are roots of quadratics,

    DB = h ± √(h² - ab),  AF = f ± √(f² - ac),  EC = g ± √(g² - bc),

and a sign triple is feasible when DB·AF·EC = abc.
"""

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from errors import NotFactorizableError
from models import ConicClass


logger = get_logger("conic")

Number = Union[float, complex]
Line = Tuple[complex, complex, complex]
SignTriple = Tuple[int, int, int]

# +++, ++-, +-+, +--, -++, -+-, --+, ---
SIGN_TRIPLES: List[SignTriple] = list(itertools.product((1, -1), repeat=3))

# feasible triples must also reproduce the conic to this relative accuracy
RECONSTRUCTION_RTOL = 1e-6


def triple_label(triple: Sequence[int]) -> str:
    return "".join("+" if s > 0 else "-" for s in triple)


@dataclass(frozen=True)
class Conic:
    """Coefficients of a x² + 2h xy + b y² + 2f x + 2g y + c."""

    a: Number
    h: Number
    b: Number
    f: Number
    g: Number
    c: Number

    def __post_init__(self):
        if not all(np.isfinite(v) for v in self.coefficients()):
            raise ValueError("conic coefficients must be finite")

    def coefficients(self) -> Tuple[Number, ...]:
        return (self.a, self.h, self.b, self.f, self.g, self.c)

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.a, self.h, self.f],
            [self.h, self.b, self.g],
            [self.f, self.g, self.c],
        ])

    @property
    def delta(self) -> Number:
        a, h, b, f, g, c = self.coefficients()
        return a * b * c + 2 * f * g * h - a * g * g - b * f * f - c * h * h

    @property
    def delta_hat(self) -> Number:
        return self.a * self.b - self.h * self.h

    @property
    def scale(self) -> float:
        return max(1.0, max(abs(v) for v in self.coefficients()))

    def swapped(self) -> "Conic":
        """Same conic with x and y exchanged."""
        return Conic(self.b, self.h, self.a, self.g, self.f, self.c)

    def evaluate(self, x: Number, y: Number) -> Number:
        a, h, b, f, g, c = self.coefficients()
        return a * x * x + 2 * h * x * y + b * y * y + 2 * f * x + 2 * g * y + c


@dataclass(frozen=True)
class LinePair:
    """ν·(Ax + By + C)(Dx + Ey + F)."""

    first: Line
    second: Line
    nu: complex = 1.0
    triple: Optional[str] = None

    def evaluate(self, x: Number, y: Number) -> complex:
        A, B, C = self.first
        D, E, F = self.second
        return self.nu * (A * x + B * y + C) * (D * x + E * y + F)


@dataclass
class PairProducts:
    """Cross products of the two line factors for one sign triple."""

    DB: np.ndarray
    AE: np.ndarray
    AF: np.ndarray
    DC: np.ndarray
    EC: np.ndarray
    BF: np.ndarray


def pair_products(a, h, b, f, g, c, triple: Sequence[int]) -> PairProducts:
    """Cross products for a sign triple; vectorized, complex square roots."""
    s1, s2, s3 = triple
    r1 = np.sqrt(np.asarray(h * h - a * b, dtype=complex))
    r2 = np.sqrt(np.asarray(f * f - a * c, dtype=complex))
    r3 = np.sqrt(np.asarray(g * g - b * c, dtype=complex))
    return PairProducts(
        DB=h + s1 * r1,
        AE=h - s1 * r1,
        AF=f + s2 * r2,
        DC=f - s2 * r2,
        EC=g + s3 * r3,
        BF=g - s3 * r3,
    )


def consistency_gap(products: PairProducts, a, b, c) -> np.ndarray:
    """|DB·AF·EC - abc|, zero for a feasible triple."""
    return np.abs(products.DB * products.AF * products.EC - np.asarray(a * b * c, dtype=complex))


def _tolerances(conic: Conic, tol: Optional[float]) -> Tuple[float, float]:
    tol = settings.conic_tol if tol is None else tol
    scale = conic.scale
    return tol * scale**3, tol * scale**2


def classify(conic: Conic, tol: Optional[float] = None) -> ConicClass:
    """Classify by Δ (3×3 determinant) and Δ̂ = ab - h²."""
    tol_delta, tol_hat = _tolerances(conic, tol)
    if abs(conic.delta) > tol_delta:
        return ConicClass.NON_DEGENERATE
    hat = np.real(conic.delta_hat)
    if hat < -tol_hat:
        return ConicClass.TWO_INTERSECTING_LINES
    if hat <= tol_hat:
        return ConicClass.PARALLEL_LINES_OR_SINGLE
    return ConicClass.SINGLE_POINT


def is_real_factorizable(conic: Conic, tol: Optional[float] = None) -> bool:
    """True when the conic splits into two real lines."""
    tol_delta, tol_hat = _tolerances(conic, tol)
    kind = classify(conic, tol)
    if kind == ConicClass.TWO_INTERSECTING_LINES:
        return True
    if kind != ConicClass.PARALLEL_LINES_OR_SINGLE:
        return False

    a, h, b, f, g, c = (np.real(v) for v in conic.coefficients())
    by_sum = f * f + g * g - c * (a + b) >= -tol_hat
    by_parts = (f * f - a * c >= -tol_hat) and (g * g - b * c >= -tol_hat)
    if by_sum != by_parts:
        logger.warning(
            "Real factorization criteria disagree",
            sum_form=by_sum,
            component_form=by_parts,
            coefficients=[float(v) for v in (a, h, b, f, g, c)],
        )
    return bool(by_sum)


def _normalize(line: Line) -> Tuple[Line, complex]:
    values = np.asarray(line, dtype=complex)
    pivot = values[np.argmax(np.abs(values))]
    if pivot == 0:
        return tuple(values), 1.0
    return tuple(values / pivot), pivot


def _make_pair(first: Line, second: Line, nu: complex, triple: Optional[str]) -> LinePair:
    first, m1 = _normalize(first)
    second, m2 = _normalize(second)
    return LinePair(first=first, second=second, nu=nu * m1 * m2, triple=triple)


def _matches(lp: LinePair, conic: Conic) -> bool:
    got = np.asarray(expand(lp).coefficients(), dtype=complex)
    want = np.asarray(conic.coefficients(), dtype=complex)
    return bool(np.max(np.abs(got - want)) <= RECONSTRUCTION_RTOL * conic.scale)


def _factor_anchored(conic: Conic, tol_delta: float) -> List[LinePair]:
    """Closed-form factors for a ≠ 0 over the eight sign triples."""
    a, h, b, f, g, c = conic.coefficients()
    pairs: List[LinePair] = []
    for triple in SIGN_TRIPLES:
        p = pair_products(a, h, b, f, g, c, triple)
        if consistency_gap(p, a, b, c) > tol_delta:
            continue
        DB, AE, AF, DC, EC, BF = (complex(v) for v in (p.DB, p.AE, p.AF, p.DC, p.EC, p.BF))
        if abs(DB) > abs(AE):
            lp = _make_pair((a, DB, DC), (DB, b, BF), 1.0 / DB, triple_label(triple))
        elif AE != 0:
            lp = _make_pair((AE, b, EC), (a, AE, AF), 1.0 / AE, triple_label(triple))
        else:
            # h = b = 0 and g = 0: a x² + 2f x + c
            root = np.sqrt(complex(f * f - a * c))
            lp = _make_pair((1, 0, (f + root) / a), (1, 0, (f - root) / a), a, triple_label(triple))
        if _matches(lp, conic):
            pairs.append(lp)
    return pairs


def _factor_bilinear(conic: Conic) -> List[LinePair]:
    """a = b = 0: 2h xy + 2f x + 2g y + c."""
    _, h, _, f, g, c = conic.coefficients()
    if h != 0:
        lp = _make_pair((1, 0, g / h), (0, 1, f / h), 2 * h, None)
    else:
        lp = _make_pair((2 * f, 2 * g, c), (0, 0, 1), 1.0, None)
    return [lp] if _matches(lp, conic) else []


def factor(conic: Conic, tol: Optional[float] = None) -> List[LinePair]:
    """
    Factor a degenerate conic into line pairs, one per feasible sign triple.

    Args:
        conic: Conic with vanishing determinant
        tol: Relative tolerance (defaults to settings.conic_tol)

    Returns:
        LinePair per feasible sign triple; each expands back to the conic

    Raises:
        NotFactorizableError: if Δ is not zero within tolerance
    """
    tol_delta, _ = _tolerances(conic, tol)
    if abs(conic.delta) > tol_delta:
        raise NotFactorizableError(conic.delta)

    small = (tol if tol is not None else settings.conic_tol) * conic.scale
    if abs(conic.a) > small:
        pairs = _factor_anchored(conic, tol_delta)
    elif abs(conic.b) > small:
        pairs = [
            LinePair(
                first=(lp.first[1], lp.first[0], lp.first[2]),
                second=(lp.second[1], lp.second[0], lp.second[2]),
                nu=lp.nu,
                triple=lp.triple,
            )
            for lp in _factor_anchored(conic.swapped(), tol_delta)
        ]
    else:
        pairs = _factor_bilinear(conic)

    logger.debug("Conic factored", triples=[lp.triple for lp in pairs])
    return pairs


def expand(lp: LinePair) -> Conic:
    """Multiply the line pair out, AD = a, BE = b, CF = c, AE + DB = 2h, ..."""
    A, B, C = lp.first
    D, E, F = lp.second
    nu = lp.nu
    return Conic(
        a=nu * A * D,
        h=nu * (A * E + D * B) / 2,
        b=nu * B * E,
        f=nu * (A * F + D * C) / 2,
        g=nu * (B * F + E * C) / 2,
        c=nu * C * F,
    )

"""Factorization analysis of the per-pipe quadratic model.

For one pipe of one measurement set, with x = d_ε and y = (AᵀC̄_hᵀ d_hN)_j,
the model m̄ = ½p_ε²x² - p_εΔh xy + ½p_Δh²y² + p_ε x - p_Δh y + f̄_0 is a
conic; 2m̄ has coefficients (a, h, b, f, g, c) = (p_ε², -p_εΔh, p_Δh², p_ε,
-p_Δh, 2f̄_0). Writing m̄ = (b x + c y + v)(e x + f̃ y + w), the separator
pair products are half the conic cross products: ec = DB/2, bw = AF/2,
f̃v = EC/2, bf̃ = AE/2, ev = DC/2, cw = BF/2 and be = ½p_ε².
"""

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from conic import SIGN_TRIPLES, SignTriple, consistency_gap, pair_products, triple_label
from system_assembly import CalibrationProblem, numerical_rank
from tensor_solver import SearchDirection
from turbulent_flow import FlowDerivativeBundle


logger = get_logger("tensor-factorization")

# pairing of a measurement set's rows: multiply the first factor by e or the second by b
PAIR_E = 0
PAIR_B = 1


@dataclass
class SeparatorPairs:
    """Separator pair products of one sign triple per pipe (scalars or per-pipe arrays).

    `delta`, `delta_hat` and `admissible` carry the factorization precondition
    Δ = 0 ∧ Δ̂ ≤ 0 of every pipe.
    """

    be: np.ndarray
    ec: np.ndarray
    bw: np.ndarray
    fv: np.ndarray
    bf: np.ndarray
    ev: np.ndarray
    cw: np.ndarray
    triples: List[SignTriple]
    gap: np.ndarray
    feasible: np.ndarray
    delta: np.ndarray
    delta_hat: np.ndarray
    admissible: np.ndarray

    @property
    def labels(self) -> List[str]:
        return [triple_label(t) for t in self.triples]


@dataclass
class CandidateDirection:
    """Real part of one candidate linear-system solution."""

    pairing: Tuple[int, ...]
    direction: SearchDirection
    imag_norm: float
    lstsq_residual: float
    # (measurement set id, pipe id) failing the determinant check
    inadmissible: List[Tuple[int, str]] = field(default_factory=list)


@dataclass
class KernelTransform:
    """Kernel-form data of the tensor equation for every pairing variant."""

    variants: List[Tuple[Tuple[int, ...], np.ndarray]]
    s: np.ndarray
    r_f: np.ndarray
    S_b: np.ndarray
    alpha: np.ndarray
    A_b: np.ndarray

    def pipe_equation(self, d: np.ndarray, variant: int = 0) -> np.ndarray:
        """½(M d)^⊙2 + (M d)⊙s + r_f - S_b α, one entry per (set, pipe)."""
        u = self.variants[variant][1] @ d
        return 0.5 * u**2 + u * self.s + self.r_f - self.S_b @ self.alpha

    def kernel_equation(self, d: np.ndarray, variant: int = 0) -> np.ndarray:
        """blockdiag(A)·pipe_equation(d); independent of α since A·Sᵀ = 0."""
        return self.A_b @ self.pipe_equation(d, variant)

    def consistency_gap(self, d: np.ndarray, tensor_stacked: np.ndarray, variant: int = 0) -> float:
        """Relative difference between the kernel form and the tensor residual."""
        diff = np.linalg.norm(self.kernel_equation(d, variant) - tensor_stacked)
        return float(diff / max(np.linalg.norm(tensor_stacked), np.finfo(float).tiny))


@dataclass
class BetaTransform:
    """W = [M | 0]·M̃^# and the maps of the β formulation."""

    M_tilde: np.ndarray
    M_tilde_pinv: np.ndarray
    W: np.ndarray
    r_f: np.ndarray
    n_d: int
    inversion_defect: float
    equation: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)
    recover: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]] = field(repr=False, default=None)


@dataclass
class RootDiagnostic:
    """Per (set, pipe) determinant expressions expected to vanish at a real root."""

    corollary: np.ndarray
    hat: np.ndarray


def _doubled_conic(bundle: FlowDerivativeBundle, fbar0):
    return (
        bundle.p_eps2,
        -bundle.p_epsdh,
        bundle.p_dh2,
        bundle.p_eps,
        -bundle.p_dh,
        2.0 * np.asarray(fbar0, dtype=float),
    )


def determinants(bundle: FlowDerivativeBundle, fbar0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Determinants of the per-pipe quadratic model.

    Args:
        bundle: Derivatives (scalars or per-pipe arrays)
        fbar0: Kernel-distributed residual f̄_0

    Returns:
        (Δ, Δ̂) with Δ = ½det[[p_ε², -p_εΔh, p_ε], [-p_εΔh, p_Δh², -p_Δh],
        [p_ε, -p_Δh, 2f̄_0]] and Δ̂ = p_ε²p_Δh² - p_εΔh²
    """
    a, h, b, f, g, c = _doubled_conic(bundle, fbar0)
    det = a * b * c + 2 * f * g * h - a * g * g - b * f * f - c * h * h
    return 0.5 * det, a * b - h * h


def admissibility(
    bundle: FlowDerivativeBundle,
    fbar0,
    tol: float = settings.determinant_tol,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Whether each pipe's model factors into real lines.

    Args:
        bundle: Derivatives (scalars or per-pipe arrays)
        fbar0: Kernel-distributed residual f̄_0
        tol: Relative tolerance; Δ is compared against tol·s³ and Δ̂ against
            tol·s², s being the largest doubled conic coefficient of the pipe

    Returns:
        (Δ, Δ̂, admissible) with admissible = |Δ| ≤ tol·s³ ∧ Δ̂ ≤ tol·s²
    """
    delta, hat = determinants(bundle, fbar0)
    coeffs = np.broadcast_arrays(*(np.abs(np.atleast_1d(c)) for c in _doubled_conic(bundle, fbar0)))
    scale = np.max(np.vstack(coeffs), axis=0)
    ok = (np.abs(np.atleast_1d(delta)) <= tol * scale**3) & (np.atleast_1d(hat) <= tol * scale**2)
    return delta, hat, ok


def _separators_for(bundle: FlowDerivativeBundle, fbar0, triple: SignTriple) -> Tuple[SeparatorPairs, np.ndarray]:
    a, h, b, f, g, c = _doubled_conic(bundle, fbar0)
    p = pair_products(a, h, b, f, g, c, triple)
    gap = consistency_gap(p, a, b, c)
    size = np.maximum(np.abs(p.DB * p.AF * p.EC), np.abs(a * b * c))
    delta, hat, ok = admissibility(bundle, fbar0)
    pairs = SeparatorPairs(
        be=0.5 * np.asarray(a, dtype=complex),
        ec=p.DB / 2,
        bw=p.AF / 2,
        fv=p.EC / 2,
        bf=p.AE / 2,
        ev=p.DC / 2,
        cw=p.BF / 2,
        triples=[triple] * np.size(gap),
        gap=gap,
        feasible=np.zeros(np.shape(gap), dtype=bool),
        delta=delta,
        delta_hat=hat,
        admissible=ok,
    )
    return pairs, gap / np.maximum(size, np.finfo(float).tiny)


def separator_pairs(
    bundle: FlowDerivativeBundle,
    fbar0: float,
    tol: float = settings.separator_tol,
) -> List[SeparatorPairs]:
    """
    Feasible sign triples of one pipe's tensor separators.

    Args:
        bundle: Derivatives of a single pipe (scalar fields)
        fbar0: f̄_0 of that pipe
        tol: Relative tolerance on the consistency product

    Returns:
        SeparatorPairs for every sign triple whose product (2ec)(2bw)(2f̃v)
        equals 2p_ε²p_Δh²f̄_0; empty when the model does not factor
    """
    feasible = []
    for triple in SIGN_TRIPLES:
        pairs, rel_gap = _separators_for(bundle, fbar0, triple)
        if rel_gap <= tol:
            pairs.feasible = np.asarray(True)
            feasible.append(pairs)
    return feasible


def select_separators(
    bundle: FlowDerivativeBundle,
    fbar0: np.ndarray,
    tol: float = settings.separator_tol,
    determinant_tol: float = settings.determinant_tol,
) -> SeparatorPairs:
    """
    One sign triple per pipe: the first feasible one, else the least inconsistent.

    Args:
        bundle: Per-pipe derivatives of one measurement set
        fbar0: Per-pipe f̄_0 of that set
        tol: Relative tolerance on the consistency product
        determinant_tol: Relative tolerance of the Δ = 0 ∧ Δ̂ ≤ 0 check

    Returns:
        SeparatorPairs with per-pipe arrays; `feasible` marks exact
        factorizations and `admissible` the pipes passing the determinant check
    """
    candidates = [_separators_for(bundle, fbar0, t) for t in SIGN_TRIPLES]
    rel = np.vstack([np.atleast_1d(r) for _, r in candidates])
    ok = rel <= tol
    choice = np.where(ok.any(axis=0), ok.argmax(axis=0), rel.argmin(axis=0))
    cols = np.arange(rel.shape[1])
    delta, hat, admissible = admissibility(bundle, fbar0, determinant_tol)

    def gather(name: str) -> np.ndarray:
        stack = np.vstack([np.atleast_1d(getattr(p, name)) for p, _ in candidates])
        return stack[choice, cols]

    return SeparatorPairs(
        be=np.atleast_1d(candidates[0][0].be),
        ec=gather("ec"),
        bw=gather("bw"),
        fv=gather("fv"),
        bf=gather("bf"),
        ev=gather("ev"),
        cw=gather("cw"),
        triples=[SIGN_TRIPLES[k] for k in choice],
        gap=gather("gap").real,
        feasible=ok[choice, cols],
        delta=np.atleast_1d(delta),
        delta_hat=np.atleast_1d(hat),
        admissible=admissible,
    )


def inadmissible_pipes(separators: Sequence[SeparatorPairs]) -> List[Tuple[int, int]]:
    """(set position, pipe index) of every pipe failing the determinant check."""
    return [
        (i, int(j))
        for i, sep in enumerate(separators)
        for j in np.flatnonzero(~np.atleast_1d(sep.admissible))
    ]


def _pairing_rows(problem: CalibrationProblem, sep: SeparatorPairs, choice: int, i: int):
    """Rows of set i: [diag(eb) | diag(ec)AᵀC̄ᵀ] = -ev or [diag(be) | diag(bf̃)AᵀC̄ᵀ] = -bw."""
    coupling, rhs = (sep.ec, -sep.ev) if choice == PAIR_E else (sep.bf, -sep.bw)
    rows = np.zeros((problem.n_l, problem.size), dtype=complex)
    rows[:, : problem.n_l] = np.diag(sep.be)
    if problem.n_u:
        cols = slice(problem.n_l + i * problem.n_u, problem.n_l + (i + 1) * problem.n_u)
        rows[:, cols] = coupling[:, None] * problem.AtCbar
    return rows, rhs


def candidate_directions(
    separators: Sequence[SeparatorPairs],
    problem: CalibrationProblem,
    rtol: float = settings.rank_rtol,
) -> List[CandidateDirection]:
    """
    Solve the 2^{n_m} linear systems obtained by picking one factor per set.

    Args:
        separators: Per-set separator pairs (from select_separators)
        problem: Calibration problem
        rtol: Rank threshold; rank-deficient systems are skipped

    Returns:
        Candidates in pairing order, real parts with imaginary-magnitude
        diagnostics; pipes failing the determinant check are reported, not dropped
    """
    not_factored = sum(int(np.sum(~np.asarray(sep.feasible))) for sep in separators)
    if not_factored:
        logger.debug("Separators without exact factorization", pipes=not_factored)
    inadmissible = [
        (problem.sets[i].id, problem.topo.pipe_ids[j]) for i, j in inadmissible_pipes(separators)
    ]
    if inadmissible:
        logger.info("Pipes fail the factorization determinant check", pipes=inadmissible)

    candidates = []
    for pairing in itertools.product((PAIR_E, PAIR_B), repeat=len(separators)):
        blocks = [_pairing_rows(problem, sep, choice, i) for i, (sep, choice) in enumerate(zip(separators, pairing))]
        M = np.vstack([rows for rows, _ in blocks])
        rhs = np.concatenate([r for _, r in blocks])
        rank = numerical_rank(M, rtol)
        if rank < problem.size:
            logger.info("Candidate system rank deficient, skipped", pairing=list(pairing), rank=rank)
            continue
        d, *_ = linalg.lstsq(M, rhs)
        candidates.append(
            CandidateDirection(
                pairing=tuple(pairing),
                direction=SearchDirection(np.real(d), problem.n_l, problem.n_u),
                imag_norm=float(np.linalg.norm(np.imag(d))),
                lstsq_residual=float(np.linalg.norm(M @ d - rhs)),
                inadmissible=inadmissible,
            )
        )
    return candidates


def kernel_transform(
    problem: CalibrationProblem,
    bundles: Sequence[FlowDerivativeBundle],
    separators: Sequence[SeparatorPairs],
    f_slices: Sequence[np.ndarray],
    alpha: Optional[Sequence[np.ndarray]] = None,
) -> KernelTransform:
    """
    Kernel form of the tensor equation for every pairing variant.

    M_𝔜 rows of set i are 2·diag(p_ε²^{-1/2})·[diag(eb) | diag(ec)AᵀC̄ᵀ] or the
    b-pairing; s = p_ε⊙p_ε²^{-1/2}; r_f stacks diag(c_l)AᵀL⁻¹f^(i). The
    kernel coordinates α^(i) (zero by default) shift the per-pipe equation by
    -Sᵀα^(i).
    """
    n_m, n_l = len(bundles), problem.n_l
    _, r_f = problem.kernel_rhs(f_slices)
    inv_root = [1.0 / np.sqrt(np.asarray(b.p_eps2, dtype=complex)) for b in bundles]
    s = np.concatenate([b.p_eps * r for b, r in zip(bundles, inv_root)])

    variants = []
    for pairing in itertools.product((PAIR_E, PAIR_B), repeat=n_m):
        M = np.vstack([
            2.0 * inv_root[i][:, None] * _pairing_rows(problem, sep, choice, i)[0]
            for i, (sep, choice) in enumerate(zip(separators, pairing))
        ])
        variants.append((tuple(pairing), M))

    n_c = problem.S.shape[0]
    S_b = linalg.block_diag(*([problem.S.T] * n_m)) if n_c else np.zeros((n_m * n_l, 0))
    if alpha is None:
        alpha_stacked = np.zeros(n_m * n_c)
    else:
        alpha_stacked = np.concatenate([np.asarray(a, dtype=float) for a in alpha])
        if alpha_stacked.shape != (n_m * n_c,):
            raise ValueError(f"expected {n_c} kernel coordinates per set, got {alpha_stacked.size} in total")

    return KernelTransform(
        variants=variants,
        s=s,
        r_f=r_f,
        S_b=S_b,
        alpha=alpha_stacked,
        A_b=linalg.block_diag(*([problem.A] * n_m)),
    )


def beta_transform(
    kt: KernelTransform,
    variant: int = 0,
    pseudo_inverse_tol: float = settings.pinv_rtol,
) -> BetaTransform:
    """
    β formulation: Wβ^⊙2 + 2β + 2W r_f = 0 with [d; α] = -M̃^#(½β^⊙2 + r_f).

    Args:
        kt: Kernel transform
        variant: Index of the pairing variant
        pseudo_inverse_tol: Relative singular value cutoff of the pseudo-inverse

    Returns:
        BetaTransform; inversion_defect = ‖M̃^#M̃ - I‖ reports whether the
        inversion premise holds
    """
    M = kt.variants[variant][1]
    n_d = M.shape[1]
    M_tilde = np.hstack([kt.s[:, None] * M, -kt.S_b.astype(complex)])
    pinv = linalg.pinv(M_tilde, rtol=pseudo_inverse_tol)
    W = np.hstack([M, np.zeros((M.shape[0], kt.S_b.shape[1]), dtype=complex)]) @ pinv
    defect = float(np.linalg.norm(pinv @ M_tilde - np.eye(M_tilde.shape[1])))
    r_f = kt.r_f

    def equation(beta: np.ndarray) -> np.ndarray:
        return W @ beta**2 + 2.0 * beta + 2.0 * W @ r_f

    def recover(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        y = -pinv @ (0.5 * beta**2 + r_f)
        return y[:n_d], y[n_d:]

    if defect > 1e-8:
        logger.info("Pseudo-inverse is not a left inverse", defect=defect)
    return BetaTransform(
        M_tilde=M_tilde,
        M_tilde_pinv=pinv,
        W=W,
        r_f=r_f,
        n_d=n_d,
        inversion_defect=defect,
        equation=equation,
        recover=recover,
    )


def root_diagnostic(x: np.ndarray, problem: CalibrationProblem) -> RootDiagnostic:
    """
    Per (set, pipe): 2p_Δh p_εΔh p_ε - p_ε²p_Δh² - p_Δh²p_ε² and p_εΔh² - p_ε²p_Δh².

    Both vanish where the model at a real root factors; reported, not enforced.
    """
    bundles = problem.bundles(x)
    corollary = np.vstack([
        2 * b.p_dh * b.p_epsdh * b.p_eps - b.p_eps2 * b.p_dh**2 - b.p_dh2 * b.p_eps**2 for b in bundles
    ])
    hat = np.vstack([b.p_epsdh**2 - b.p_eps2 * b.p_dh2 for b in bundles])
    return RootDiagnostic(corollary=corollary, hat=hat)

"""Fixed points and their Lyapunov and Jacobi classification.

Eigenvalues go through the characteristic polynomial (Faddeev-LeVerrier
recurrence, integer divisions only) and an Aberth-Ehrlich simultaneous root
iteration, so the module needs no external eigensolver. That route is fine
at desk scale (n up to ~10); for badly conditioned or much larger matrices
a similarity-reduction eigensolver would be preferable, since polynomial
coefficients can lose accuracy the roots themselves would keep.

The Jacobi side rests on the fixed-point identity P = 1/4 A^2: the spectrum
of the deviation tensor is {lambda^2 / 4} for Jacobian eigenvalues lambda,
so a fixed point is Jacobi stable iff the dimension is even, every lambda
is strictly complex, and Re(lambda^2) = alpha^2 - beta^2 < 0 for all pairs.
Odd-dimensional systems always carry a real eigenvalue with lambda^2 >= 0
and therefore are never Jacobi stable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exprdsl import DomainError
from .odesys import FieldDomainError, VectorField, eval_field, jacobian

__all__ = [
    "CharPoly",
    "FixedPointReport",
    "FixedPointSearch",
    "NotAFixedPointError",
    "RootConvergenceError",
    "SeedFailure",
    "analyze_fixed_point",
    "characteristic_polynomial",
    "descartes_bound",
    "eigenvalues",
    "find_fixed_points",
    "hurwitz_determinants",
    "hurwitz_matrix",
    "is_hurwitz_stable",
    "jacobi_classify",
    "lyapunov_classify",
    "polynomial_roots",
]

HYPERBOLIC_TOL = 1e-9


class RootConvergenceError(Exception):
    """Aberth iteration failed; carries the best iterates and residuals."""

    def __init__(self, message: str, iterates, residuals):
        self.iterates = list(iterates)
        self.residuals = list(residuals)
        super().__init__(message)


class NotAFixedPointError(Exception):
    def __init__(self, location, residual: float, tol: float):
        self.location = np.asarray(location, dtype=float)
        self.residual = float(residual)
        super().__init__(
            f"residual {residual:.3e} exceeds {tol:.1e} at {self.location.tolist()}")


@dataclass(eq=False)
class CharPoly:
    """Monic characteristic polynomial, coefficients [1, a1, ..., an] for
    lambda^n + a1 lambda^(n-1) + ... + an."""

    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("coefficients must be a non-empty 1-d sequence")
        if coeffs[0] != 1.0:
            raise ValueError(f"polynomial must be monic, got leading {coeffs[0]!r}")
        self.coefficients = coeffs

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    def __call__(self, z: complex) -> complex:
        out = 0.0 + 0.0j
        for c in self.coefficients:
            out = out * z + c
        return out


def characteristic_polynomial(A) -> CharPoly:
    """Faddeev-LeVerrier recurrence: trace-based, divides by integers only."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    M = np.eye(n)
    for k in range(1, n + 1):
        AM = A @ M
        coeffs[k] = -np.trace(AM) / k
        if k < n:
            M = AM + coeffs[k] * np.eye(n)
    return CharPoly(coefficients=coeffs)


def _aberth(coeffs: np.ndarray, tol: float = 1e-13, max_sweeps: int = 500) -> np.ndarray:
    """Simultaneous root iteration on a monic polynomial with a_n != 0."""
    m = coeffs.size - 1
    if m == 1:
        return np.array([-coeffs[1]], dtype=complex)
    deriv = coeffs[:-1] * np.arange(m, 0, -1)
    radius = 1.0 + float(np.max(np.abs(coeffs[1:])))
    # Uniform on a circle of that radius; the phase offset breaks conjugate
    # symmetry so the iteration cannot stall on a symmetric configuration.
    angles = 2.0 * np.pi * np.arange(m) / m + 0.4
    z = radius * np.exp(1j * angles)
    for _ in range(max_sweeps):
        converged = True
        for k in range(m):
            p_k = complex(np.polyval(coeffs, z[k]))
            if p_k == 0:
                continue
            dp_k = complex(np.polyval(deriv, z[k]))
            if dp_k == 0:
                z[k] += tol * 100.0 * (1.0 + abs(z[k]))
                converged = False
                continue
            newton = p_k / dp_k
            repulsion = 0.0 + 0.0j
            for j in range(m):
                if j != k:
                    gap = z[k] - z[j]
                    if gap == 0:
                        gap = tol * (1.0 + abs(z[k]))
                    repulsion += 1.0 / gap
            denom = 1.0 - newton * repulsion
            if denom == 0:
                z[k] += tol * 100.0 * (1.0 + abs(z[k]))
                converged = False
                continue
            w = newton / denom
            z[k] -= w
            if abs(w) > tol * (1.0 + abs(z[k])):
                converged = False
        if converged:
            return z
    residuals = [abs(complex(np.polyval(coeffs, zk))) for zk in z]
    raise RootConvergenceError(
        f"Aberth iteration did not converge in {max_sweeps} sweeps", z, residuals)


def polynomial_roots(p: CharPoly) -> list[complex]:
    """All roots, sorted by (Re, Im). Exact-zero trailing coefficients are
    stripped first, each contributing an explicit zero root."""
    coeffs = list(p.coefficients)
    zero_roots = 0
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
        zero_roots += 1
    roots = [0j] * zero_roots
    if len(coeffs) > 1:
        roots.extend(_aberth(np.asarray(coeffs)))
    return sorted(roots, key=lambda z: (z.real, z.imag))


def eigenvalues(A) -> list[complex]:
    """Roots of the characteristic polynomial, sorted by (Re, Im). Complex
    eigenvalues of a real matrix come out in conjugate pairs."""
    return polynomial_roots(characteristic_polynomial(A))


# ---------------------------------------------------------------------------
# Routh-Hurwitz and Descartes


def hurwitz_matrix(p: CharPoly) -> np.ndarray:
    """H[i, j] = a_(2(j+1)-(i+1)) with a_0 = 1 and zero outside 0..n."""
    a = p.coefficients
    n = p.degree
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            k = 2 * (j + 1) - (i + 1)
            if 0 <= k <= n:
                H[i, j] = a[k]
    return H


def _bareiss_determinant(M: np.ndarray) -> float:
    """Fraction-free elimination with partial pivoting."""
    M = np.array(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 1.0
    sign = 1.0
    prev = 1.0
    for k in range(n - 1):
        pivot_row = k + int(np.argmax(np.abs(M[k:, k])))
        if M[pivot_row, k] == 0.0:
            return 0.0
        if pivot_row != k:
            M[[k, pivot_row]] = M[[pivot_row, k]]
            sign = -sign
        for i in range(k + 1, n):
            M[i, k + 1:] = (M[k, k] * M[i, k + 1:] - M[i, k] * M[k, k + 1:]) / prev
            M[i, k] = 0.0
        prev = M[k, k]
    return sign * M[n - 1, n - 1]


def hurwitz_determinants(p: CharPoly) -> np.ndarray:
    """Leading principal minors D_1 .. D_n of the Hurwitz matrix."""
    H = hurwitz_matrix(p)
    return np.array([_bareiss_determinant(H[:k, :k]) for k in range(1, p.degree + 1)])


def is_hurwitz_stable(p: CharPoly) -> bool:
    """a_n > 0 and every D_k > 0: all roots strictly in the left half-plane."""
    if p.degree == 0:
        return True
    if p.coefficients[-1] <= 0.0:
        return False
    return bool(np.all(hurwitz_determinants(p) > 0.0))


def descartes_bound(p: CharPoly) -> int:
    """Sign changes m in the coefficient sequence after factoring out exact
    zero roots; the positive real root count is m, m-2, m-4, ..."""
    coeffs = list(p.coefficients)
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    nonzero = [c for c in coeffs if c != 0.0]
    if not nonzero:
        raise ValueError("all-zero polynomial")
    changes = 0
    for a, b in itertools.pairwise(nonzero):
        if (a > 0) != (b > 0):
            changes += 1
    return changes


# ---------------------------------------------------------------------------
# Classification


def lyapunov_classify(eigs: Sequence[complex], tol: float = HYPERBOLIC_TOL) -> str:
    """Label the linearization. For n = 3 the five labels are node, saddle,
    focus, saddle-focus, and center; planar systems use stable-/unstable-
    focus and center. Any other eigenvalue within tol of the imaginary axis
    gives non-hyperbolic."""
    eigs = [complex(z) for z in eigs]
    n = len(eigs)
    if n == 0:
        raise ValueError("empty eigenvalue list")
    complex_eigs = [z for z in eigs if abs(z.imag) > tol]
    real_eigs = [z for z in eigs if abs(z.imag) <= tol]
    if any(abs(z.real) <= tol for z in real_eigs):
        return "non-hyperbolic"
    central = [z for z in complex_eigs if abs(z.real) <= tol]
    if central:
        # Pure-imaginary pairs: a center when everything else is hyperbolic
        # and the dimension taxonomy has the label, otherwise non-hyperbolic.
        if len(central) == len(complex_eigs) and not real_eigs:
            return "center"
        if n == 3 and len(central) == 2 and len(real_eigs) == 1:
            return "center"
        return "non-hyperbolic"
    if not complex_eigs:
        positives = sum(1 for z in eigs if z.real > 0)
        if positives == 0:
            return "stable-node"
        if positives == n:
            return "unstable-node"
        return "saddle"
    if n == 3:
        pair_sign = complex_eigs[0].real > 0
        real_sign = real_eigs[0].real > 0
        return "focus" if pair_sign == real_sign else "saddle-focus"
    if all(z.real < 0 for z in eigs):
        return "stable-focus"
    if all(z.real > 0 for z in eigs):
        return "unstable-focus"
    return "saddle-focus"


def _sorted_complex(values) -> list[complex]:
    return sorted((complex(z) for z in values), key=lambda z: (z.real, z.imag))


def jacobi_classify(eigs: Sequence[complex], dimension: int | None = None,
                    tol: float = HYPERBOLIC_TOL) -> tuple[str, float, list[complex]]:
    """(verdict, margin, spectrum of 1/4 A^2) from Jacobian eigenvalues.

    margin = max_j Re(lambda_j^2) = max_j (alpha_j^2 - beta_j^2). Strictly
    negative margin means every deviation-tensor eigenvalue sits in the open
    left half-plane (Jacobi stable); strictly positive means some sits in
    the right half-plane (Jacobi unstable); within tol is indeterminate.
    """
    eigs = [complex(z) for z in eigs]
    if not eigs:
        raise ValueError("empty eigenvalue list")
    n = len(eigs) if dimension is None else int(dimension)
    squares = [z * z for z in eigs]
    margin = max(s.real for s in squares)
    if margin > tol:
        verdict = "Jacobi-unstable"
    elif margin < -tol:
        verdict = "Jacobi-stable"
    else:
        verdict = "indeterminate"
    spectrum = _sorted_complex(s / 4.0 for s in squares)
    # Structural route: even dimension, all eigenvalues strictly complex,
    # alpha^2 < beta^2 for every pair. Must agree with the margin route.
    structural = (n % 2 == 0
                  and all(abs(z.imag) > tol for z in eigs)
                  and all(z.real ** 2 - z.imag ** 2 < -tol for z in eigs))
    if structural != (verdict == "Jacobi-stable"):
        raise RuntimeError(
            f"internal inconsistency: margin route says {verdict}, structural "
            f"route says {'stable' if structural else 'not stable'} for {eigs}")
    return verdict, float(margin), spectrum


# ---------------------------------------------------------------------------
# Fixed-point search


@dataclass(frozen=True)
class SeedFailure:
    seed: tuple[float, ...]
    reason: str


@dataclass(eq=False)
class FixedPointSearch:
    points: list[np.ndarray]
    failures: list[SeedFailure] = field(default_factory=list)


class _SeedError(Exception):
    pass


def _residual(vf: VectorField, x: np.ndarray) -> tuple[np.ndarray, float]:
    fx = eval_field(vf, x)
    return fx, float(np.max(np.abs(fx)))


def _newton(vf: VectorField, seed: np.ndarray, tol: float,
            max_iterations: int, max_halvings: int) -> np.ndarray:
    x = np.array(seed, dtype=float)
    try:
        fx, res = _residual(vf, x)
    except (FieldDomainError, DomainError) as err:
        raise _SeedError(f"field undefined at seed: {err}") from err
    for _ in range(max_iterations):
        if res <= tol:
            return x
        jac = jacobian(vf, x).entries
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError as err:
            raise _SeedError(f"singular Jacobian at {x.tolist()}") from err
        scale = 1.0
        for _ in range(max_halvings + 1):
            trial = x + scale * step
            try:
                f_trial, r_trial = _residual(vf, trial)
            except (FieldDomainError, DomainError):
                r_trial = np.inf
                f_trial = None
            if r_trial < res:
                break
            scale *= 0.5
        else:
            raise _SeedError(
                f"stalled at {x.tolist()} (no residual decrease after "
                f"{max_halvings} halvings)")
        x, fx, res = trial, f_trial, r_trial
    if res <= tol:
        return x
    raise _SeedError(
        f"no convergence after {max_iterations} iterations (residual {res:.3e})")


def _box_seeds(box, grid: int, dimension: int) -> list[np.ndarray]:
    intervals = [(float(lo), float(hi)) for lo, hi in box]
    if len(intervals) != dimension:
        raise ValueError(f"box has {len(intervals)} axes, expected {dimension}")
    if grid < 1:
        raise ValueError("grid count must be at least 1")
    axes = [np.linspace(lo, hi, grid) for lo, hi in intervals]
    return [np.array(combo) for combo in itertools.product(*axes)]


def find_fixed_points(vf: VectorField, seeds=None, box=None, grid: int = 5,
                      tol: float = 1e-10, merge_tol: float = 1e-7,
                      max_iterations: int = 100, max_halvings: int = 30) -> FixedPointSearch:
    """Damped Newton iteration from explicit seeds or a box grid.

    Convergence is max|f(x)| <= tol; converged points within merge_tol in
    the max norm are merged. Per-seed failures are reported, not fatal.
    """
    if seeds is None and box is None:
        raise ValueError("provide seeds or a box")
    seed_list = [np.asarray(s, dtype=float) for s in seeds] if seeds is not None else []
    if box is not None:
        seed_list.extend(_box_seeds(box, grid, vf.dimension))
    if not seed_list:
        raise ValueError("empty seed list")
    points: list[np.ndarray] = []
    failures: list[SeedFailure] = []
    for seed in seed_list:
        if seed.shape != (vf.dimension,):
            failures.append(SeedFailure(tuple(np.ravel(seed)),
                                        f"seed has shape {seed.shape}"))
            continue
        try:
            found = _newton(vf, seed, tol, max_iterations, max_halvings)
        except _SeedError as err:
            failures.append(SeedFailure(tuple(seed), str(err)))
            continue
        if not any(np.max(np.abs(found - p)) <= merge_tol for p in points):
            points.append(found)
    points.sort(key=lambda p: tuple(p))
    return FixedPointSearch(points=points, failures=failures)


# ---------------------------------------------------------------------------
# Full per-point report


@dataclass(eq=False)
class FixedPointReport:
    location: np.ndarray
    residual: float
    jacobian: np.ndarray
    charpoly: CharPoly
    eigenvalues: list[complex]
    hurwitz: np.ndarray
    descartes_bound: int
    lyapunov_class: str
    jacobi_spectrum: list[complex]
    jacobi_verdict: str
    jacobi_margin: float
    jacobi_saddle_focus: bool = False


def _match_multisets(a: Sequence[complex], b: Sequence[complex], tol: float) -> bool:
    """Greedy nearest-neighbour matching of two complex multisets."""
    if len(a) != len(b):
        return False
    remaining = list(b)
    for z in a:
        best = min(range(len(remaining)), key=lambda i: abs(remaining[i] - z),
                   default=None)
        if best is None or abs(remaining[best] - z) > tol:
            return False
        remaining.pop(best)
    return True


def analyze_fixed_point(vf: VectorField, location, residual_tol: float = 1e-8,
                        tol: float = HYPERBOLIC_TOL) -> FixedPointReport:
    """Classify one fixed point under both stability notions.

    The deviation-tensor spectrum is computed twice, as eigenvalues(A^2/4)
    and as {lambda^2/4}, and the two are required to agree within 1e-7.
    """
    x = np.asarray(location, dtype=float)
    fx, residual = _residual(vf, x)
    if residual > residual_tol:
        raise NotAFixedPointError(x, residual, residual_tol)
    A = jacobian(vf, x).entries
    poly = characteristic_polynomial(A)
    eigs = polynomial_roots(poly)
    verdict, margin, spectrum_from_eigs = jacobi_classify(eigs, vf.dimension, tol)
    spectrum_direct = eigenvalues(0.25 * (A @ A))
    if not _match_multisets(spectrum_direct, spectrum_from_eigs, 1e-7):
        raise RootConvergenceError(
            "deviation spectrum routes disagree beyond 1e-7",
            spectrum_direct, [abs(a - b) for a, b in
                              zip(spectrum_direct, spectrum_from_eigs)])
    saddle_focus = False
    if vf.dimension == 3:
        pair = [z for z in eigs if abs(z.imag) > tol]
        saddle_focus = (len(pair) == 2
                        and pair[0].real ** 2 - pair[0].imag ** 2 < -tol)
    return FixedPointReport(
        location=x.copy(),
        residual=residual,
        jacobian=A,
        charpoly=poly,
        eigenvalues=eigs,
        hurwitz=hurwitz_determinants(poly),
        descartes_bound=descartes_bound(poly),
        lyapunov_class=lyapunov_classify(eigs, tol),
        jacobi_spectrum=spectrum_direct,
        jacobi_verdict=verdict,
        jacobi_margin=margin,
        jacobi_saddle_focus=saddle_focus,
    )

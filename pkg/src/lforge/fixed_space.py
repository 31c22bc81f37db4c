"""Smallest fixed space of a quantum channel containing a set of operators.

A fixed space has the form ``U (0_{d0} + sum_j rho_j (x) M_{d_j}) U^dagger`` with
positive diagonal ``rho_j``. The search first block-diagonalizes the
self-adjoint span. It then rescales every block by the inverse root of its
summed squared probe eigenvalues, so that the rho weights become uniform.
The algebra generated by the rescaled operators is recovered next. Undoing
the rescaling maps that algebra back onto the fixed space.
"""

from dataclasses import dataclass, field

import numpy as np

from .algebra_decomp import finest_block_diagonalization, smallest_observable_algebra, oracle_closure
from .errors import NumericalError, StructureInvalid
from .numerics import (
    DEFAULT_TOL, as_sampler, check_operators, hermitian_span_basis, orthonormalize_span,
    row_space, superoperator,
)


@dataclass
class FixedSpaceStructure:
    """``U (0_{d0} + sum_j rho_j (x) M_{d_j}) U^dagger``.

    ``U`` columns follow the algebra layout (dead space, then factor by
    factor, copy-major). ``V`` is the diagonal rescaling in that frame, equal
    to 1 on the dead space; ``rhos[j]`` is V^{-1} on factor j normalized to
    trace one (one weight per copy).
    """

    U: np.ndarray
    d0: int
    factors: list
    rhos: list
    V: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=complex)
        self.rhos = [np.asarray(r, dtype=float) for r in self.rhos]
        if len(self.rhos) != len(self.factors):
            raise StructureInvalid("one rho per factor required")
        for (k, _), r in zip(self.factors, self.rhos):
            if r.shape != (k,) or np.any(r <= 0):
                raise StructureInvalid("rho factors must be positive with one weight per copy")
        if self.d0 + sum(k * d for k, d in self.factors) != self.U.shape[0]:
            raise StructureInvalid("d0 + sum k_j d_j must equal the matrix size")

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def dimension(self):
        return sum(d * d for _, d in self.factors)

    def factor_slices(self):
        out, off = [], self.d0
        for k, d in self.factors:
            out.append(slice(off, off + k * d))
            off += k * d
        return out

    def rho_spectra(self):
        return [np.sort(r / r.sum()) for r in self.rhos]

    def signature(self):
        return (self.d0, tuple(sorted(self.factors)))

    def member_basis(self):
        """Dense spanning set U (0 + ... rho_j (x) E_rs ...) U^dagger, sum_j d_j^2 elements."""
        out = []
        for (k, d), sl, rho in zip(self.factors, self.factor_slices(), self.rhos):
            cols = self.U[:, sl].reshape(self.n, k, d)
            w = rho / rho.sum()
            for r in range(d):
                for s in range(d):
                    out.append(np.einsum("a,ia,ja->ij", w, cols[:, :, r], cols[:, :, s].conj()))
        return out

    def basis(self, tol=DEFAULT_TOL):
        return orthonormalize_span(self.member_basis(), tol)

    def contains(self, ops, tol=DEFAULT_TOL):
        """Largest relative defect ||X - E(X)|| / ||X||; zero iff every X lies in the space.

        E is the conditional expectation, an idempotent map with range
        exactly this space, so no basis of the space is formed.
        """
        ch = ProjectionChannel(self)
        worst = 0.0
        for X in check_operators(ops):
            nx = np.linalg.norm(X)
            if nx > 0:
                worst = max(worst, np.linalg.norm(X - ch(X)) / nx)
        return worst


# ---------------------------------------------------------------------------
# projection channel


class ProjectionChannel:
    """Conditional expectation onto a fixed-space structure.

    In the ``U`` frame: compress to each factor, trace out the copy index,
    re-tensor with ``rho_j``. Dead-block trace is re-routed to the reference
    state ``rho_1 (x) 1/d_1`` so the map stays trace preserving.
    """

    def __init__(self, structure):
        if not structure.factors:
            raise StructureInvalid("cannot project onto an empty structure")
        self.structure = structure
        self._matrix = None

    @property
    def n(self):
        return self.structure.n

    def __call__(self, X):
        f = self.structure
        X = np.asarray(X, dtype=complex)
        Y = f.U.conj().T @ X @ f.U
        out = np.zeros_like(Y)
        for (k, d), sl, rho in zip(f.factors, f.factor_slices(), f.rhos):
            red = np.einsum("aiaj->ij", Y[sl, sl].reshape(k, d, k, d))
            out[sl, sl] = np.kron(np.diag(rho / rho.sum()), red)
        if f.d0:
            dead = np.trace(Y[: f.d0, : f.d0])
            (k, d), sl, rho = f.factors[0], f.factor_slices()[0], f.rhos[0]
            out[sl, sl] += dead * np.kron(np.diag(rho / rho.sum()), np.eye(d) / d)
        return f.U @ out @ f.U.conj().T

    @property
    def matrix(self):
        """Superoperator (column stacking), built on first use."""
        if self._matrix is None:
            self._matrix = superoperator(self, self.n)
        return self._matrix


def projection_channel(f):
    return ProjectionChannel(f)


# ---------------------------------------------------------------------------
# search


def build_scaling(blockdec):
    """Per-block rescaling: 1 on the dead block, 1/sqrt(sum Sigma_ii^2) elsewhere."""
    sigma = np.asarray(blockdec.sigma, dtype=float)
    V = np.ones(sigma.size)
    for b, sl in enumerate(blockdec.block_slices()):
        if b == 0 or sl.stop == sl.start:
            continue
        mass = float(np.sum(sigma[sl] ** 2))
        if mass <= 0.0:
            raise NumericalError("probe has zero mass on a nonzero block; re-seed")
        V[sl] = 1.0 / np.sqrt(mass)
    return V


def smallest_fixed_space(ops, sampler=None, tol=DEFAULT_TOL, repeats=2):
    """Smallest fixed-space structure containing ``ops``.

    Raises ``NotDaggerClosed`` if span(ops) is not closed under adjoints.
    """
    ops = check_operators(ops)
    sampler = as_sampler(sampler)
    S = np.stack(hermitian_span_basis(ops, tol))
    bd = finest_block_diagonalization(S, sampler.child(0), tol, repeats=repeats)
    V = build_scaling(bd)
    sv = np.sqrt(V)
    X = sv[:, None] * (bd.Q.conj().T @ S @ bd.Q) * sv
    X = 0.5 * (X + X.conj().transpose(0, 2, 1))
    alg, trace = smallest_observable_algebra(
        X, sampler.child(1), tol, blocks=bd.block_dims[1:], d0=bd.d0, repeats=repeats)

    # each copy of the algebra lives inside one block of the decomposition
    owner = np.zeros(bd.Q.shape[0], dtype=int)
    for b, sl in enumerate(bd.block_slices()):
        owner[sl] = b
    mass = np.zeros((len(bd.block_dims), alg.n))
    np.add.at(mass, owner, np.abs(alg.U) ** 2)
    col_block = np.argmax(mass, axis=0)
    leak = 1.0 - mass[col_block, np.arange(alg.n)]
    if leak.size and leak.max() > np.sqrt(tol.zero_block_tol):
        raise StructureInvalid(f"recovered copies straddle rescaling blocks (leak {leak.max():.2e})")
    Vw = V[np.array([bd.block_slices()[b].start for b in col_block], dtype=int)] if alg.n else V

    rhos = []
    for (k, d), sl in zip(alg.factors, alg.factor_slices()):
        v = Vw[sl].reshape(k, d)
        if np.ptp(v, axis=1).max(initial=0.0) > 1e-12 * v.max():
            raise StructureInvalid("rescaling is not constant on a copy")
        inv = 1.0 / v[:, 0]
        rhos.append(inv / inv.sum())
    f = FixedSpaceStructure(bd.Q @ alg.U, alg.d0, list(alg.factors), rhos, V=Vw,
                            meta={"probe": [bd.trace.probe, trace.probe], "block_dims": bd.block_dims})
    res = f.contains(ops, tol)
    if res > 1e-9:
        raise StructureInvalid(f"structure does not contain its inputs (residual {res:.2e})")
    return f


@dataclass
class LocalVerdict:
    exists: bool
    fixed_dim: int
    span_dim: int

    @property
    def label(self):
        return "exists" if self.exists else "too_large"


def local_term_verdict(window, f):
    """``exists`` iff the fixed space is no larger than the window span."""
    return LocalVerdict(f.dimension == window.span_dim, f.dimension, window.span_dim)


# ---------------------------------------------------------------------------
# oracle


def _psd_power(H, power, tol):
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (v * w**power) @ v.conj().T


def oracle_smallest_fixed_space(ops, tol=DEFAULT_TOL):
    """Independent basis of the smallest fixed-space-form span containing ``ops``.

    Uses rho = sum_i |S_i| over a Hermitian basis S_i. Fixed spaces are closed
    under X -> |X|, so rho is a faithful state of the answer on the joint
    support. The answer is rho^{1/2} A rho^{1/2}, where A is the smallest
    *-algebra that contains the identity and rho^{-1/2} S_i rho^{-1/2} and is
    invariant under X -> rho X rho^{-1}.
    """
    ops = check_operators(ops)
    S = np.stack(hermitian_span_basis(ops, tol))
    n = S.shape[1]
    absval = []
    for H in S:
        w, v = np.linalg.eigh(H)
        absval.append((v * np.abs(w)) @ v.conj().T)
    rho = sum(absval)
    rows = row_space(S.reshape(-1, n), tol)
    P = rows.conj().T                                 # orthonormal support basis
    rs = P.conj().T @ rho @ P
    Ss = P.conj().T @ S @ P
    half, mhalf = _psd_power(rs, 0.5, tol), _psd_power(rs, -0.5, tol)
    gens = np.concatenate([np.eye(P.shape[1])[None], mhalf @ Ss @ mhalf])
    A = oracle_closure(gens, tol, modular=rs)
    return [P @ half @ a @ half @ P.conj().T for a in A]


def structure_equivalence(a, b, tol=DEFAULT_TOL, rho_rtol=1e-6):
    """Compare two fixed-space structures on gauge-invariant data."""
    from .numerics import mutual_span_residual

    out = {
        "factors": sorted(a.factors) == sorted(b.factors),
        "d0": a.d0 == b.d0,
        "span_residual": mutual_span_residual(a.member_basis(), b.member_basis(), tol),
    }
    sa = sorted((tuple(np.round(s, 12)) for s in a.rho_spectra()))
    sb = sorted((tuple(np.round(s, 12)) for s in b.rho_spectra()))
    out["rho"] = len(sa) == len(sb) and all(
        len(x) == len(y) and np.allclose(x, y, rtol=rho_rtol, atol=0) for x, y in zip(sa, sb))
    out["equivalent"] = out["factors"] and out["d0"] and out["rho"] and out["span_residual"] < 1e-8
    return out


__all__ = [
    "FixedSpaceStructure", "ProjectionChannel", "projection_channel", "build_scaling",
    "smallest_fixed_space", "local_term_verdict", "LocalVerdict", "oracle_smallest_fixed_space",
    "structure_equivalence",
]

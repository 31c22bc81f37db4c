"""Dense complex-matrix utilities with explicit tolerance and seeding contracts.

Conventions fixed here and used by every other module:

* Operators are ``complex128`` arrays of shape ``(n, n)``.
* Superoperators act on column-stacked vectors, ``vec(X)[a + n*b] = X[a, b]``,
  so that ``vec(A X B) = (B.T kron A) vec(X)``.
* The Choi matrix is ``J = sum_ij T(|i><j|) kron |i><j|`` (output factor first).
* Every tolerance is relative to the scale of the object being tested.
"""

from dataclasses import dataclass, asdict, replace

import numpy as np

from .errors import DimensionError, NotDaggerClosed


@dataclass(frozen=True)
class ToleranceConfig:
    """Relative thresholds for the numerical decisions of the pipeline."""

    rank_tol: float = 1e-10
    zero_block_tol: float = 1e-10
    eig_cluster_tol: float = 1e-8
    cptp_tol: float = 1e-9

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (0.0 < float(value) < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")

    def updated(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


DEFAULT_TOL = ToleranceConfig()


def _child_seed(seed, index):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class SeededSampler:
    """Deterministic source of uniform [0, 1) coefficients.

    Draws come from a Philox counter-based generator keyed by ``seed`` and are
    consumed strictly in call order, so ``(seed, draw_count)`` pins down the
    next coefficient. Child samplers for independent repetitions are derived
    with ``numpy.random.SeedSequence`` spawn keys, never from the draw stream.
    """

    def __init__(self, seed=0):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.draw_count = 0
        self._gen = np.random.Generator(np.random.Philox(seed))

    def uniform(self, size):
        x = self._gen.random(int(size))
        self.draw_count += int(size)
        return x

    def child(self, index):
        return SeededSampler(_child_seed(self.seed, index))

    def __repr__(self):
        return f"SeededSampler(seed={self.seed}, draw_count={self.draw_count})"


def derive_seeds(master, count):
    """Independent per-task seeds split from a master seed."""
    return [_child_seed(master, i) for i in range(count)]


def as_sampler(sampler):
    if isinstance(sampler, SeededSampler):
        return sampler
    if sampler is None:
        return SeededSampler(0)
    return SeededSampler(int(sampler))


# ---------------------------------------------------------------------------
# input validation


def as_operator(A, name="operator"):
    """Return ``A`` as a finite square complex matrix."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def check_operators(ops, name="ops", allow_empty=False):
    """Validate a list of equally sized square matrices; returns an (m, n, n) array."""
    if isinstance(ops, np.ndarray) and ops.ndim == 2:
        ops = [ops]
    ops = [as_operator(O, name) for O in ops]
    if not ops:
        if allow_empty:
            return np.zeros((0, 0, 0), dtype=complex)
        raise ValueError(f"{name} must be nonempty")
    n = ops[0].shape[0]
    if any(O.shape != (n, n) for O in ops):
        raise DimensionError(f"{name} must share one shape")
    return np.stack(ops)


def is_hermitian(A, tol=DEFAULT_TOL):
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    return np.linalg.norm(A - A.conj().T) <= tol.zero_block_tol * scale


# ---------------------------------------------------------------------------
# spans and ranks


def hs_inner(A, B):
    """Hilbert-Schmidt inner product tr(A^dagger B)."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B))


def singular_values(M):
    M = np.asarray(M)
    if M.size == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return np.linalg.svd(M, compute_uv=False)


def numerical_rank(M, tol=DEFAULT_TOL, scale=0.0):
    """Number of singular values above ``rank_tol * max(sigma_max, scale)``.

    ``scale`` is a floor for objects whose natural size is known (for example
    maps assembled from orthonormal bases, scale 1), so that a matrix made of
    round-off alone is not mistaken for a full-rank one.
    """
    sv = singular_values(M)
    if sv.size == 0 or max(sv[0], scale) == 0.0:
        return 0
    return int(np.sum(sv > tol.rank_tol * max(sv[0], scale)))


def row_space(M, tol=DEFAULT_TOL):
    """Orthonormal rows spanning the row space of ``M``."""
    M = np.asarray(M)
    if M.shape[0] == 0:
        return np.zeros((0, M.shape[1]), dtype=M.dtype)
    _, sv, vh = np.linalg.svd(M, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros((0, M.shape[1]), dtype=M.dtype)
    r = int(np.sum(sv > tol.rank_tol * sv[0]))
    return vh[:r]


def null_space(M, tol=DEFAULT_TOL, scale=0.0):
    """Orthonormal columns spanning the kernel of ``M`` (cutoff as in numerical_rank)."""
    M = np.asarray(M)
    if M.shape[0] == 0:
        return np.eye(M.shape[1], dtype=M.dtype)
    _, sv, vh = np.linalg.svd(M, full_matrices=True)
    top = max(sv[0] if sv.size else 0.0, scale)
    if top == 0.0:
        return np.eye(M.shape[1], dtype=M.dtype)
    r = int(np.sum(sv > tol.rank_tol * top))
    return vh[r:].conj().T


def orthonormalize_span(ops, tol=DEFAULT_TOL):
    """Orthonormal basis (trace inner product) of the span of ``ops``."""
    ops = check_operators(ops)
    n = ops.shape[1]
    rows = row_space(ops.reshape(len(ops), -1), tol)
    return [r.reshape(n, n) for r in rows]


def span_dimension(ops, tol=DEFAULT_TOL):
    ops = check_operators(ops)
    return numerical_rank(ops.reshape(len(ops), -1), tol)


def _herm_to_real(H):
    v = H.reshape(len(H), -1)
    return np.concatenate([v.real, v.imag], axis=1)


def hermitian_span_basis(ops, tol=DEFAULT_TOL):
    """Linearly independent self-adjoint matrices whose real span is span(ops).

    Raises ``NotDaggerClosed`` when span(ops) is not closed under adjoints.
    """
    ops = check_operators(ops)
    m, n, _ = ops.shape
    adj = ops.conj().transpose(0, 2, 1)
    cand = np.concatenate([ops + adj, 1j * (ops - adj)])
    real_rows = row_space(_herm_to_real(cand), tol)
    r_herm = len(real_rows)
    r_ops = span_dimension(ops, tol)
    if r_herm != r_ops:
        raise NotDaggerClosed(
            f"span of inputs has dimension {r_ops} but its adjoint closure has {r_herm}")
    half = n * n
    basis = []
    for row in real_rows:
        H = (row[:half] + 1j * row[half:]).reshape(n, n)
        basis.append(0.5 * (H + H.conj().T))
    return basis


def projector_onto(basis):
    """Orthogonal projector (on vectorized operators) onto span(basis)."""
    B = np.stack([np.asarray(b, dtype=complex).ravel() for b in basis], axis=1)
    q, _ = np.linalg.qr(B)
    return q @ q.conj().T


def span_residual(ops, basis, tol=DEFAULT_TOL):
    """Largest relative distance of an element of ``ops`` from span(basis)."""
    ops = check_operators(ops)
    if len(basis) == 0:
        return 1.0 if np.any(ops) else 0.0
    Q = np.stack([np.asarray(b).ravel() for b in orthonormalize_span(basis, tol)], axis=1)
    worst = 0.0
    for O in ops:
        v = O.ravel()
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        r = v - Q @ (Q.conj().T @ v)
        worst = max(worst, np.linalg.norm(r) / nv)
    return worst


def mutual_span_residual(a, b, tol=DEFAULT_TOL):
    """Symmetric span-equality defect; 0 when span(a) == span(b)."""
    if span_dimension(a, tol) != span_dimension(b, tol):
        return float("inf")
    return max(span_residual(a, b, tol), span_residual(b, a, tol))


# ---------------------------------------------------------------------------
# probes and eigendecompositions


def random_combination(ops, sampler):
    """Sum_i x_i O_i with x_i uniform on [0, 1) drawn in list order."""
    ops = check_operators(ops)
    x = as_sampler(sampler).uniform(len(ops))
    return np.tensordot(x, ops, axes=1)


def eigh_sorted(A):
    """Hermitian eigendecomposition with ascending eigenvalues and orthonormal vectors."""
    A = 0.5 * (A + A.conj().T)
    w, v = np.linalg.eigh(A)
    return w, v


def cluster_eigenvalues(w, tol=DEFAULT_TOL):
    """Split sorted eigenvalues where a gap exceeds eig_cluster_tol * spectral range."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return []
    span = w[-1] - w[0]
    top = np.max(np.abs(w))
    # gaps at the level of eigensolver roundoff never separate clusters
    floor = 64 * w.size * np.finfo(float).eps * top
    gap = max(tol.eig_cluster_tol * span, floor, np.finfo(float).tiny)
    cuts = np.flatnonzero(np.diff(w) > gap) + 1
    bounds = [0, *cuts.tolist(), w.size]
    return [list(range(bounds[i], bounds[i + 1])) for i in range(len(bounds) - 1)]


# ---------------------------------------------------------------------------
# superoperators


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, n=None):
    v = np.asarray(v)
    if n is None:
        n = _isqrt(v.size)
    return v.reshape(n, n, order="F")


def _isqrt(m):
    n = int(round(np.sqrt(m)))
    if n * n != m:
        raise DimensionError(f"{m} is not a perfect square")
    return n


def superoperator(fn, n):
    """Matrix of the linear map ``fn`` on n x n operators (column stacking)."""
    S = np.zeros((n * n, n * n), dtype=complex)
    E = np.zeros((n, n), dtype=complex)
    for b in range(n):
        for a in range(n):
            E[a, b] = 1.0
            S[:, a + n * b] = vec(fn(E))
            E[a, b] = 0.0
    return S


def apply_superoperator(S, X):
    X = np.asarray(X)
    return unvec(S @ vec(X), X.shape[0])


def choi_matrix(channel):
    """Choi matrix sum_ij T(|i><j|) kron |i><j| of a superoperator matrix."""
    S = np.asarray(channel, dtype=complex)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("superoperator must be square")
    n = _isqrt(S.shape[0])
    # S[a + n b, i + n j] = T(|i><j|)[a, b]; reshaped C-order this is S4[b, a, j, i]
    S4 = S.reshape(n, n, n, n)
    return S4.transpose(1, 3, 0, 2).reshape(n * n, n * n)


def is_cptp(channel, tol=DEFAULT_TOL):
    """(ok, diagnostics) for complete positivity and trace preservation."""
    J = choi_matrix(channel)
    n = _isqrt(J.shape[0])
    Jh = 0.5 * (J + J.conj().T)
    herm_defect = float(np.linalg.norm(J - Jh))
    min_eig = float(np.linalg.eigvalsh(Jh)[0])
    tr_out = np.einsum("aiaj->ij", J.reshape(n, n, n, n))
    tp_residual = float(np.linalg.norm(tr_out - np.eye(n)))
    ok = min_eig > -tol.cptp_tol and tp_residual < tol.cptp_tol and herm_defect < tol.cptp_tol
    return ok, {"min_eig": min_eig, "tp_residual": tp_residual, "hermiticity_defect": herm_defect}


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out

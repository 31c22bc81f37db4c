"""Site-by-site growth of the joint kernel of the local terms.

Solutions on ``l`` sites are kept as a left-canonical MPO: tensors
``R[n]`` of shape ``(s_{n-1}, d, d, s_n)`` (left bond, ket, bra, right bond),
each an isometry from its right bond into ``(left bond, ket, bra)``. Adding a
site means finding all tensors ``X`` of shape ``(s_l, d, d, s_{l+1})`` for
which the newest k-site window lies in the fixed space F. These are the
kernel of the constraint matrix C.

* rows of C: (alpha_{l-k+1}, v) with v running over an orthonormal basis of
  the HS complement of F, so r = d^{2k} - dim F;
* columns of C: (alpha_l, i_{l+1}, j_{l+1}), so C has d^2 s_l columns.

Two starting points are supported. ``exact`` starts from an orthonormal basis
of F with a trivial left bond; there s_l is the dimension of the joint kernel
on l sites. ``mpdo_form`` starts from the family's own tensors with the left
bond kept open. There each step tests whether the bond dimension survives,
i.e. whether rank(C) = s (d^2 - 1).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceError
from .numerics import DEFAULT_TOL, null_space, numerical_rank, superoperator
from .fixed_space import projection_channel


@dataclass
class GrowthState:
    k: int
    d: int
    tensors: list
    mode: str = "exact"

    @property
    def l(self):
        return len(self.tensors)

    @property
    def bonds(self):
        return [self.tensors[0].shape[0]] + [R.shape[3] for R in self.tensors]

    @property
    def s_l(self):
        return self.tensors[-1].shape[3]

    def tail(self):
        """Last k-1 tensors contracted: shape (s_{l-k+1}, d^{2(k-1)}, s_l)."""
        T = self.tensors[self.l - self.k + 1]
        a = T.shape[0]
        X = T.reshape(a, -1, T.shape[3])
        for R in self.tensors[self.l - self.k + 2:]:
            X = np.einsum("apb,bqc->apqc", X, R.reshape(R.shape[0], -1, R.shape[3]))
            X = X.reshape(a, -1, R.shape[3])
        return X

    def operators(self):
        """Dense operators of the represented space, shape (s_0, s_l, d^l, d^l)."""
        d = self.d
        X = self.tensors[0]
        for R in self.tensors[1:]:
            a, n = X.shape[0], X.shape[1]
            X = np.einsum("aIJb,bijc->aIiJjc", X, R).reshape(a, n * d, n * d, R.shape[3])
        return X.transpose(0, 3, 1, 2)


@dataclass
class ConstraintMatrix:
    C: np.ndarray
    r: int
    rank: int


@dataclass
class PatchReport:
    sequence: list                     # (l, s_l, rank C used to reach l)
    verdict: str                       # stable_space_matches | extra_states | contracted_below_target | undetermined
    target_dims: dict
    mpdo_form_condition_met: bool | None = None
    mpdo_form: list = field(default_factory=list)   # (l, s_l, rank C, threshold)
    stabilized: bool = False
    s_k: int = 0

    @property
    def ranks(self):
        return [r for _, _, r in self.sequence]

    @property
    def s_sequence(self):
        return [(l, s) for l, s, _ in self.sequence]


# ---------------------------------------------------------------------------
# helpers


def to_pair_order(A, d, k):
    """Operator on k sites (kron order) -> vector indexed (i1 j1 i2 j2 ... ik jk)."""
    X = np.asarray(A).reshape((d,) * (2 * k))
    perm = [ax for n in range(k) for ax in (n, k + n)]
    return X.transpose(perm).reshape(-1)


def from_pair_order(v, d, k):
    X = np.asarray(v).reshape((d,) * (2 * k))
    inv = [2 * n for n in range(k)] + [2 * n + 1 for n in range(k)]
    return X.transpose(inv).reshape(d**k, d**k)


def violation_basis(f, d, k, tol=DEFAULT_TOL):
    """Orthonormal basis (pair order, as columns) of the HS complement of F."""
    B = np.stack([to_pair_order(b, d, k) for b in f.basis(tol)], axis=1)
    q, _ = np.linalg.qr(B)
    return null_space(q.conj().T, tol)


def _split_sites(Phi, left_dim, d, k, tol):
    """Left-canonical tensors whose contraction spans the columns of ``Phi``.

    ``Phi`` has rows (left bond, pair-ordered sites) and one column per
    element; every cut is an SVD truncated at ``rank_tol``.
    """
    tensors = []
    m = Phi.shape[1]
    rest = Phi.reshape(left_dim, -1, m)
    a = left_dim
    for n in range(k):
        X = rest.reshape(a * d * d, -1)
        u, sv, vh = np.linalg.svd(X, full_matrices=False)
        r = int(np.sum(sv > tol.rank_tol * sv[0])) if sv.size and sv[0] > 0 else 0
        tensors.append(u[:, :r].reshape(a, d, d, r))
        rest = (sv[:r, None] * vh[:r]).reshape(r, -1, m)
        a = r
    return tensors


def initialize_growth(window, f, tol=DEFAULT_TOL):
    """Exact mode: l = k, solution basis = orthonormal basis of F, s_k = dim F."""
    from .fixed_space import local_term_verdict

    if not local_term_verdict(window, f).exists:
        raise ValueError("growth requires a local term (dim F == window span)")
    d, k = window.d, window.k
    Phi = np.stack([to_pair_order(b, d, k) for b in f.basis(tol)], axis=1)
    return GrowthState(k, d, _split_sites(Phi, 1, d, k, tol), mode="exact")


def initialize_mpdo_form(spec, k, tol=DEFAULT_TOL):
    """MPDO-form mode: the family's own k-site tensors with the left bond open."""
    d, s = spec.d, spec.s
    X = spec.tensor.transpose(2, 0, 1, 3)          # (a, i, j, b)
    Phi = X.reshape(s, d * d, s)
    for _ in range(k - 1):
        Phi = np.einsum("apb,bqc->apqc", Phi, X.reshape(s, d * d, s)).reshape(s, -1, s)
    return GrowthState(k, d, _split_sites(Phi.reshape(s * (d * d) ** k, s), s, d, k, tol), mode="mpdo_form")


def constraint_matrix(state, fperp, tol=DEFAULT_TOL):
    """C for adding site l+1; ``fperp`` is ``violation_basis(f, d, k)``."""
    d, k = state.d, state.k
    r = fperp.shape[1]
    tail = state.tail()
    a, _, b = tail.shape
    if r == 0:
        C = np.zeros((0, b * d * d), dtype=complex)
        return ConstraintMatrix(C, 0, 0)
    Fp = fperp.reshape(-1, d * d, r)
    C = np.einsum("pqv,apb->avbq", Fp.conj(), tail).reshape(a * r, b * d * d)
    return ConstraintMatrix(C, r, numerical_rank(C, tol, scale=1.0))


def grow_one_site(state, fperp, tol=DEFAULT_TOL):
    """Return (new state, constraint matrix); s_{l+1} = d^2 s_l - rank C."""
    c = constraint_matrix(state, fperp, tol)
    N = null_space(c.C, tol, scale=1.0)
    new = N.reshape(state.s_l, state.d, state.d, N.shape[1])
    return GrowthState(state.k, state.d, state.tensors + [new], state.mode), c


def check_mpdo_form_condition(c, s, d):
    """rank C == s (d^2 - 1); ``c`` is a ConstraintMatrix or a rank."""
    rank = c.rank if isinstance(c, ConstraintMatrix) else c
    return int(rank) == int(s) * (d * d - 1)


def run_mpdo_form(spec, f, k, steps, tol=DEFAULT_TOL):
    """Ranks of the MPDO-form growth: list of (l, s_l, rank C, s (d^2-1))."""
    state = initialize_mpdo_form(spec, k, tol)
    fperp = violation_basis(f, spec.d, k, tol)
    out = []
    for _ in range(steps):
        s = state.s_l
        state, c = grow_one_site(state, fperp, tol)
        out.append((state.l, state.s_l, c.rank, s * (spec.d**2 - 1)))
        if state.s_l == 0:
            break
    return out


def run_patching(window, f, target_dims, max_sites, stabilization_window=None, tol=DEFAULT_TOL,
                 spec=None, mpdo_steps=1):
    """Grow from k to ``max_sites`` sites and compare s_l with the target dimensions."""
    k = window.k
    if max_sites < k + 2:
        raise ValueError("max_sites must be at least k + 2")
    stabilization_window = k if stabilization_window is None else stabilization_window
    state = initialize_growth(window, f, tol)
    fperp = violation_basis(f, window.d, k, tol)
    seq = [(k, state.s_l, None)]
    verdict = None
    while state.l < max_sites:
        state, c = grow_one_site(state, fperp, tol)
        l, s = state.l, state.s_l
        seq.append((l, s, c.rank))
        target = target_dims.get(l)
        if target is None:
            continue
        if s > target:
            verdict = "extra_states"
            break
        if s < target:
            verdict = "contracted_below_target"
            break
    steps = seq[1:]
    tailseq = steps[-stabilization_window:]
    stabilized = len(steps) >= stabilization_window and len({(s, r) for _, s, r in tailseq}) == 1
    if verdict is None:
        verdict = "stable_space_matches" if stabilized else "undetermined"
    rep = PatchReport(seq, verdict, dict(target_dims), stabilized=stabilized, s_k=seq[0][1])
    if spec is not None:
        rep.mpdo_form = run_mpdo_form(spec, f, k, mpdo_steps, tol)
        rep.mpdo_form_condition_met = all(r == t for _, _, r, t in rep.mpdo_form)
    return rep


# ---------------------------------------------------------------------------
# oracle


def apply_local(S, X, d, k, i, L):
    """Apply the k-site superoperator ``S`` (column stacking) on sites i..i+k-1."""
    n = d**k
    p, q = d**i, d ** (L - i - k)
    X6 = X.reshape(p, n, q, p, n, q)
    S4 = S.reshape(n, n, n, n)          # [e, c, b, a]: output (c, e), input (a, b)
    out = np.einsum("ecba,xayzbw->xcyzew", S4, X6)
    return out.reshape(p * n * q, p * n * q)


def growth_sequence(window, f, max_sites, tol=DEFAULT_TOL):
    """s_l for l = k..max_sites from exact growth, ignoring any target."""
    state = initialize_growth(window, f, tol)
    fperp = violation_basis(f, window.d, window.k, tol)
    out = {state.l: state.s_l}
    while state.l < max_sites and state.s_l > 0:
        state, _ = grow_one_site(state, fperp, tol)
        out[state.l] = state.s_l
    return out


def oracle_global_kernel(window, f, L, tol=DEFAULT_TOL, max_sites=6):
    """dim ker sum_i (T_i - id) for the dense L-site superoperator."""
    S = projection_channel(f).matrix
    return global_kernel_dim(S, window.d, window.k, L, tol, max_sites)


def global_kernel_dim(S, d, k, L, tol=DEFAULT_TOL, max_sites=6):
    """Same as ``oracle_global_kernel`` for a given k-site channel matrix ``S``."""
    if L > max_sites or d ** (2 * L) > 4096:
        raise ResourceError(f"dense oracle limited to d^(2L) <= 4096 (got d={d}, L={L})")
    if L < k:
        raise ValueError("L must be at least k")
    N = d**L

    def gen(X):
        out = np.zeros_like(X)
        for i in range(L - k + 1):
            out += apply_local(S, X, d, k, i, L) - X
        return out

    G = superoperator(gen, N)
    return N * N - numerical_rank(G, tol, scale=1.0)


def kernel_residual(S, ops, d, k, L):
    """Largest relative norm of sum_i (T_i - id) applied to the given L-site operators."""
    worst = 0.0
    for X in ops:
        nrm = np.linalg.norm(X)
        if nrm == 0:
            continue
        out = np.zeros_like(X)
        for i in range(L - k + 1):
            out += apply_local(S, X, d, k, i, L) - X
        worst = max(worst, np.linalg.norm(out) / nrm)
    return worst


__all__ = [
    "GrowthState", "ConstraintMatrix", "PatchReport", "initialize_growth", "initialize_mpdo_form",
    "constraint_matrix", "grow_one_site", "check_mpdo_form_condition", "run_patching",
    "run_mpdo_form", "growth_sequence", "oracle_global_kernel", "global_kernel_dim", "kernel_residual", "violation_basis",
    "to_pair_order", "from_pair_order", "apply_local",
]

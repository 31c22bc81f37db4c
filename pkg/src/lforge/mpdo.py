"""Translation-invariant MPDO families: window contraction, model library, JSON I/O.

Site tensors are indexed ``M[i, j, a, b]`` with ``i``/``j`` the ket/bra physical
indices and ``a``/``b`` the left/right bond. Multi-site operators use the
``kron`` ordering, i.e. the first site is the most significant index.
"""

from dataclasses import dataclass, field
import json

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError
from .numerics import DEFAULT_TOL, check_operators, numerical_rank, orthonormalize_span, kron_all

FORMAT_VERSION = 1

PAULI = {
    0: np.eye(2, dtype=complex) / 2,
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}
SX, SY, SZ = PAULI[1], PAULI[2], PAULI[3]


@dataclass
class MpdoSpec:
    """Site tensor of a translation-invariant MPDO plus an optional closed boundary.

    ``closed`` holds the (left, right) boundary pair that produces the
    physical state of the model; it is metadata for tests and examples and
    plays no role in the synthesis pipeline, which works with spans.
    """

    tensor: np.ndarray
    k_default: int = 2
    translation_invariant: bool = True
    closed: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        T = np.asarray(self.tensor, dtype=complex)
        if T.ndim != 4 or T.shape[0] != T.shape[1] or T.shape[2] != T.shape[3]:
            raise DimensionError(f"site tensor must have shape (d, d, s, s), got {T.shape}")
        if not np.all(np.isfinite(T)):
            raise ValueError("site tensor has non-finite entries")
        if not self.translation_invariant:
            raise NotImplementedError("only translation-invariant tensors are supported")
        self.tensor = T
        if self.closed is not None:
            l, r = (np.asarray(v, dtype=complex) for v in self.closed)
            if l.shape != (self.s,) or r.shape != (self.s,):
                raise DimensionError("closed boundary vectors must have length s")
            self.closed = (l, r)

    @property
    def d(self):
        return self.tensor.shape[0]

    @property
    def s(self):
        return self.tensor.shape[2]


@dataclass
class BoundarySpace:
    """Left/right boundary vectors and the admissible (l, r) pairs."""

    left: list
    right: list
    pairing: str | list = "product"

    def __post_init__(self):
        self.left = [np.asarray(v, dtype=complex) for v in self.left]
        self.right = [np.asarray(v, dtype=complex) for v in self.right]
        if not self.left or not self.right:
            raise ValueError("boundary vector lists must be nonempty")
        for v in self.left + self.right:
            if not np.any(v):
                raise ValueError("boundary vectors must be nonzero")
        if self.pairing != "product":
            pairs = [(int(a), int(b)) for a, b in self.pairing]
            if not pairs:
                raise ValueError("explicit pairing must be nonempty")
            for a, b in pairs:
                if not (0 <= a < len(self.left) and 0 <= b < len(self.right)):
                    raise ValueError(f"pair {(a, b)} out of range")
            self.pairing = pairs

    def index_pairs(self):
        if self.pairing == "product":
            return [(a, b) for a in range(len(self.left)) for b in range(len(self.right))]
        return list(self.pairing)

    def check(self, s):
        for v in self.left + self.right:
            if v.shape != (s,):
                raise DimensionError(f"boundary vector of length {v.shape} for bond dimension {s}")

    @classmethod
    def canonical(cls, s, right=None):
        basis = list(np.eye(s, dtype=complex))
        return cls(basis, basis if right is None else [basis[b] for b in right])


@dataclass
class OperatorWindow:
    """Dense k-site operators spanned by one window of the family."""

    k: int
    ops: np.ndarray
    span_dim: int
    d: int = 2

    @property
    def n(self):
        return self.ops.shape[1]

    def basis(self, tol=DEFAULT_TOL):
        return orthonormalize_span(self.ops, tol)


# ---------------------------------------------------------------------------
# contraction


def _open_chain(spec, L, left):
    """Operators with the left boundary applied and the right bond left open.

    Returns shape (n_left, d^L, d^L, s).
    """
    d, s = spec.d, spec.s
    M = spec.tensor
    X = np.asarray(left, dtype=complex).reshape(len(left), 1, 1, s)
    for _ in range(L):
        m, n = X.shape[0], X.shape[1]
        X = np.einsum("xIJa,ijab->xIiJjb", X, M).reshape(m, n * d, n * d, s)
    return X


def contract_pairs(spec, boundaries, L):
    """Dense operators O_b for each admissible pair, shape (n_pairs, d^L, d^L)."""
    if L < 1:
        raise ValueError("window length must be >= 1")
    boundaries.check(spec.s)
    X = _open_chain(spec, L, boundaries.left)
    R = np.stack(boundaries.right)
    ops = np.einsum("xIJb,yb->xyIJ", X, R)
    pairs = boundaries.index_pairs()
    return np.stack([ops[a, b] for a, b in pairs])


def contract_window(spec, boundaries, k, tol=DEFAULT_TOL):
    """k-site window operators of the family and their span dimension."""
    ops = contract_pairs(spec, boundaries, k)
    dim = numerical_rank(ops.reshape(len(ops), -1), tol)
    return OperatorWindow(k=k, ops=ops, span_dim=dim, d=spec.d)


def contract_closed(spec, L):
    """Full-chain operator for the model's closed boundary pair."""
    if spec.closed is None:
        raise ValueError("spec carries no closed boundary pair")
    l, r = spec.closed
    X = _open_chain(spec, L, [l])[0]
    return X @ r


def _gram_span_dim(spec, boundaries, L, tol):
    # Gram matrix of the pair operators via the transfer matrix, columns normalized
    M = spec.tensor
    s = spec.s
    E = np.einsum("ijab,ijcd->acbd", M.conj(), M).reshape(s * s, s * s)
    pairs = boundaries.index_pairs()
    Ls = [boundaries.left[a] for a, _ in pairs]
    Rs = [boundaries.right[b] for _, b in pairs]
    P = len(pairs)
    left = np.stack([np.kron(Ls[p].conj(), Ls[q]) for p in range(P) for q in range(P)])
    for _ in range(L):
        left = left @ E
    right = np.stack([np.kron(Rs[p].conj(), Rs[q]) for p in range(P) for q in range(P)])
    G = np.einsum("xa,xa->x", left, right).reshape(P, P)
    G = 0.5 * (G + G.conj().T)
    diag = np.real(np.diag(G))
    keep = diag > tol.rank_tol * max(diag.max(), np.finfo(float).tiny)
    if not np.any(keep):
        return 0
    G = G[np.ix_(keep, keep)]
    dn = np.sqrt(diag[keep])
    C = G / np.outer(dn, dn)
    w = np.linalg.eigvalsh(C)
    return int(np.sum(w > tol.rank_tol * w[-1]))


DENSE_LIMIT = 1 << 23


def full_chain_span_dim(spec, boundaries, L, tol=DEFAULT_TOL, method="auto"):
    """Dimension of span{O_b} for the length-L chain.

    Small chains are contracted densely. Larger ones use the normalized Gram
    matrix from transfer-matrix powers; there the cutoff ``rank_tol`` applies
    to Gram eigenvalues, i.e. singular values are resolved down to
    ``sqrt(rank_tol)`` relative.
    """
    n_pairs = len(boundaries.index_pairs())
    if method == "auto":
        method = "dense" if n_pairs * spec.d ** (2 * L) <= DENSE_LIMIT else "gram"
    if method == "dense":
        ops = contract_pairs(spec, boundaries, L)
        return numerical_rank(ops.reshape(len(ops), -1), tol)
    if method == "gram":
        return _gram_span_dim(spec, boundaries, L, tol)
    raise ValueError(f"unknown method {method!r}")


def target_dims(spec, boundaries, lengths, tol=DEFAULT_TOL):
    return {int(L): full_chain_span_dim(spec, boundaries, L, tol) for L in lengths}


# ---------------------------------------------------------------------------
# model library


def _spin(x):
    return 1 - 2 * x


def model_pauli_strings(J, alphas=None):
    """Span of (1/2)^{xL} and sigma_i^{xL}, i in J, with bond dimension |J|+1."""
    J = sorted({int(j) for j in J})
    if not J or any(j not in (1, 2, 3) for j in J):
        raise ValueError("J must be a nonempty subset of {1, 2, 3}")
    D = len(J) + 1
    T = np.zeros((2, 2, D, D), dtype=complex)
    for a, j in enumerate([0, *J]):
        T[:, :, a, a] = PAULI[j]
    if alphas is None:
        alphas = [0.0] * len(J)
    if len(alphas) != len(J):
        raise ValueError("need one coefficient per element of J")
    l = np.array([1.0, *alphas], dtype=complex)
    spec = MpdoSpec(T, closed=(l, np.ones(D)), meta={"model": "pauli", "J": J, "alphas": list(map(float, alphas))})
    return spec, BoundarySpace.canonical(D)


def _ising_tensor(beta):
    T = np.zeros((2, 2, 2, 2), dtype=complex)
    for a in range(2):
        for x in range(2):
            T[x, x, a, x] = np.exp(-beta * _spin(a) * _spin(x))
    return T


def model_ising_thermal(beta):
    """Classical Ising chain exp(-beta sum Z Z) with open boundary bonds (s = 2)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    l = np.ones(2) / (2 * np.cosh(beta))
    spec = MpdoSpec(_ising_tensor(beta), closed=(l, np.ones(2)),
                    meta={"model": "ising", "beta": float(beta)})
    return spec, BoundarySpace.canonical(2)


TROTTER_ORDERS = ("field_outer", "coupling_outer")


def model_tfim_trotter(beta, h, order="field_outer"):
    """First-order Trotter splittings of the transverse-field Ising thermal state.

    ``field_outer``:   e^{-b h X/2} e^{-b ZZ} e^{-b h X/2}   (bond dimension 2)
    ``coupling_outer``: e^{-b ZZ/2} e^{-b h X} e^{-b ZZ/2}   (bond dimension 4)
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    meta = {"model": "tfim", "beta": float(beta), "h": float(h), "order": order}
    if order == "field_outer":
        E = sla.expm(-beta * h * SX / 2)
        M = _ising_tensor(beta)
        T = np.einsum("ix,xxab,xj->ijab", E, M, E)
        l = np.ones(2) / (2 * np.cosh(beta))
        return MpdoSpec(T, closed=(l, np.ones(2)), meta=meta), BoundarySpace.canonical(2)
    if order == "coupling_outer":
        E = sla.expm(-beta * h * SX)
        half = np.exp(-0.5 * beta * np.outer(_spin(np.arange(2)), _spin(np.arange(2))))
        T = np.zeros((2, 2, 4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                for a in range(2):
                    for a2 in range(2):
                        T[i, j, 2 * a + a2, 2 * i + j] = half[a, i] * half[a2, j] * E[i, j]
        lh = np.ones(2) / (2 * np.cosh(beta / 2))
        return MpdoSpec(T, closed=(np.kron(lh, lh), np.ones(4)), meta=meta), BoundarySpace.canonical(4)
    raise ValueError(f"order must be one of {TROTTER_ORDERS}")


def _dw_index(x, t, start=False):
    return 4 * int(start) + 2 * t + x


def model_domain_wall(p, psi=(1.0, 1.0)):
    """Domain walls placed between neighbouring sites with probability ``p``.

    Starting from |psi><psi| with psi = a|0..0> + b|1..1>, every bond
    independently flips the whole remaining suffix (ket and bra) with
    probability p. The bond carries (current ket bit x, ket/bra parity t);
    four extra start states let the left boundary fix x on the first site.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    w = np.array([[1 - p, p], [p, 1 - p]])
    T = np.zeros((2, 2, 8, 8), dtype=complex)
    for t in range(2):
        for x in range(2):
            out = _dw_index(x, t)
            for a in range(2):
                T[x, x ^ t, _dw_index(a, t), out] = w[a, x]
            T[x, x ^ t, _dw_index(x, t, start=True), out] = 1.0
    a, b = (complex(z) for z in psi)
    nrm = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    a, b = a / nrm, b / nrm
    l = np.zeros(8, dtype=complex)
    l[_dw_index(0, 0, True)] = abs(a) ** 2
    l[_dw_index(1, 0, True)] = abs(b) ** 2
    l[_dw_index(0, 1, True)] = a * np.conj(b)
    l[_dw_index(1, 1, True)] = b * np.conj(a)
    r = np.zeros(8, dtype=complex)
    r[:4] = 1.0
    meta = {"model": "domain-wall", "p": float(p), "psi": [[a.real, a.imag], [b.real, b.imag]]}
    spec = MpdoSpec(T, closed=(l, r), meta=meta)
    return spec, BoundarySpace.canonical(8, right=range(4))


# ---------------------------------------------------------------------------
# dense closed-form references (used as oracles in tests and examples)


def ising_hamiltonian(L):
    H = np.zeros((2**L, 2**L), dtype=complex)
    for i in range(L - 1):
        ops = [np.eye(2)] * L
        ops[i] = ops[i + 1] = SZ
        H += kron_all(ops)
    return H


def site_operator(op, i, L):
    ops = [np.eye(2)] * L
    ops[i] = op
    return kron_all(ops)


def domain_wall_recursion(p, L, psi=(1.0, 1.0)):
    """Density matrix from applying the domain-wall recursion literally."""
    a, b = (complex(z) for z in psi)
    nrm = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    v = np.zeros(2**L, dtype=complex)
    v[0], v[-1] = a / nrm, b / nrm
    rho = np.outer(v, v.conj())
    for n in range(1, L):
        X = kron_all([np.eye(2)] * n + [SX] * (L - n))
        rho = (1 - p) * rho + p * X @ rho @ X
    return rho


# ---------------------------------------------------------------------------
# JSON


def _enc(z):
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        return [float(z.real), float(z.imag)]
    return [_enc(x) for x in z]


def _dec(a):
    arr = np.asarray(a, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def encode_complex(z):
    return _enc(z)


def decode_complex(a):
    return _dec(a)


def spec_to_dict(spec, boundaries):
    out = {
        "format_version": FORMAT_VERSION,
        "d": spec.d,
        "s": spec.s,
        "tensor": _enc(spec.tensor),
        "left": [_enc(v) for v in boundaries.left],
        "right": [_enc(v) for v in boundaries.right],
        "pairing": boundaries.pairing if boundaries.pairing == "product"
        else [list(p) for p in boundaries.pairing],
    }
    if spec.closed is not None:
        out["closed"] = {"left": _enc(spec.closed[0]), "right": _enc(spec.closed[1])}
    if spec.meta:
        out["meta"] = spec.meta
    return out


def spec_from_dict(obj):
    if not isinstance(obj, dict):
        raise ValueError("MPDO spec must be a JSON object")
    version = obj.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r}")
    for key in ("d", "s", "tensor", "left", "right"):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
    T = _dec(obj["tensor"])
    d, s = int(obj["d"]), int(obj["s"])
    if T.shape != (d, d, s, s):
        raise ValueError(f"tensor shape {T.shape} does not match d={d}, s={s}")
    closed = None
    if "closed" in obj:
        closed = (_dec(obj["closed"]["left"]), _dec(obj["closed"]["right"]))
    spec = MpdoSpec(T, closed=closed, meta=dict(obj.get("meta", {})))
    pairing = obj.get("pairing", "product")
    bnd = BoundarySpace([_dec(v) for v in obj["left"]], [_dec(v) for v in obj["right"]], pairing)
    bnd.check(s)
    return spec, bnd


def dumps_spec(spec, boundaries):
    return json.dumps(spec_to_dict(spec, boundaries), indent=1)


def loads_spec(text):
    return spec_from_dict(json.loads(text))


MODELS = ("pauli", "ising", "tfim", "domain-wall")


def build_model(name, J=(3,), beta=1.0, h=1.0, order="field_outer", p=0.5, alphas=None):
    if name == "pauli":
        return model_pauli_strings(J, alphas)
    if name == "ising":
        return model_ising_thermal(beta)
    if name == "tfim":
        return model_tfim_trotter(beta, h, order)
    if name in ("domain-wall", "domain_wall"):
        return model_domain_wall(p)
    raise ValueError(f"unknown model {name!r}; available: {', '.join(MODELS)}")


__all__ = [
    "MpdoSpec", "BoundarySpace", "OperatorWindow", "contract_window", "contract_pairs",
    "contract_closed", "full_chain_span_dim", "target_dims", "model_pauli_strings",
    "model_ising_thermal", "model_tfim_trotter", "model_domain_wall", "build_model",
    "spec_to_dict", "spec_from_dict", "dumps_spec", "loads_spec", "check_operators",
]

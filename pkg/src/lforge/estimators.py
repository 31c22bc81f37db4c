"""scikit-learn style wrappers around the pipeline stages.

Every estimator takes its seed and tolerances as constructor parameters, so
``get_params``/``set_params``/``clone`` work as usual. ``fit`` accepts an
operator set of shape (m, n, n) (or a list of n x n matrices); the Lindbladian
estimator accepts an MPDO family instead.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .algebra_decomp import algebra_member_basis, finest_block_diagonalization, smallest_observable_algebra
from .fixed_space import projection_channel, smallest_fixed_space
from .mpdo import BoundarySpace, MpdoSpec, spec_from_dict, loads_spec
from .numerics import DEFAULT_TOL, ToleranceConfig, SeededSampler, check_operators, orthonormalize_span
from .patching import apply_local
from .synthesis import synthesize


class _StageEstimator(BaseEstimator):
    def __init__(self, seed=0, rank_tol=DEFAULT_TOL.rank_tol, zero_block_tol=DEFAULT_TOL.zero_block_tol,
                 eig_cluster_tol=DEFAULT_TOL.eig_cluster_tol, repeats=2):
        self.seed = seed
        self.rank_tol = rank_tol
        self.zero_block_tol = zero_block_tol
        self.eig_cluster_tol = eig_cluster_tol
        self.repeats = repeats

    def _tol(self):
        return ToleranceConfig(rank_tol=self.rank_tol, zero_block_tol=self.zero_block_tol,
                               eig_cluster_tol=self.eig_cluster_tol)

    def _sampler(self):
        return SeededSampler(self.seed)

    def _check(self, X):
        X = check_operators(X, "X")
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has matrix size {X.shape[1]}, estimator was fitted with {self.n_features_in_}")
        return X


class BlockDiagonalizer(TransformerMixin, _StageEstimator):
    """Finest common block diagonalization of a self-adjoint set.

    ``transform`` rotates operators into the block frame, Q^dagger X Q.
    """

    def fit(self, X, y=None):
        X = self._check(X)
        self.decomposition_ = finest_block_diagonalization(X, self._sampler(), self._tol(), self.repeats)
        self.Q_ = self.decomposition_.Q
        self.block_dims_ = list(self.decomposition_.block_dims)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "Q_")
        X = self._check(X)
        return self.Q_.conj().T @ X @ self.Q_


class ObservableAlgebra(TransformerMixin, _StageEstimator):
    """Smallest observable algebra containing a self-adjoint set.

    ``transform`` is the trace-orthogonal projection onto the algebra.
    """

    def fit(self, X, y=None):
        X = self._check(X)
        self.structure_, self.trace_ = smallest_observable_algebra(
            X, self._sampler(), self._tol(), repeats=self.repeats)
        self.factors_ = list(self.structure_.factors)
        self.d0_ = self.structure_.d0
        self.basis_ = np.stack(orthonormalize_span(algebra_member_basis(self.structure_), self._tol()))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = self._check(X)
        c = np.einsum("bij,pij->pb", self.basis_.conj(), X)
        return np.einsum("pb,bij->pij", c, self.basis_)


class FixedSpaceProjector(TransformerMixin, _StageEstimator):
    """Smallest fixed space containing the inputs, with its projection channel.

    ``transform`` applies the channel (a conditional expectation) to each operator.
    """

    def fit(self, X, y=None):
        X = self._check(X)
        self.structure_ = smallest_fixed_space(X, self._sampler(), self._tol(), self.repeats)
        self.channel_ = projection_channel(self.structure_)
        self.factors_ = list(self.structure_.factors)
        self.d0_ = self.structure_.d0
        self.dimension_ = self.structure_.dimension
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "channel_")
        return np.stack([self.channel_(O) for O in self._check(X)])


def check_family(family, boundaries=None):
    """Normalize an MPDO family given as (spec, boundaries), a spec dict or JSON text."""
    if isinstance(family, tuple) and len(family) == 2 and boundaries is None:
        family, boundaries = family
    if isinstance(family, str):
        return loads_spec(family)
    if isinstance(family, dict):
        return spec_from_dict(family)
    if not isinstance(family, MpdoSpec):
        raise TypeError("expected an MpdoSpec, a (spec, boundaries) pair, a spec dict or JSON text")
    if boundaries is None:
        boundaries = BoundarySpace.canonical(family.s)
    if not isinstance(boundaries, BoundarySpace):
        raise TypeError("boundaries must be a BoundarySpace")
    boundaries.check(family.s)
    return family, boundaries


class ParentLindbladian(_StageEstimator):
    """k-local parent Lindbladian of an MPDO family.

    ``fit(family)`` runs the full pipeline and stores the report. After a
    positive verdict, ``transform(X)`` applies sum_i L_i to L-site operators
    and ``predict(X)`` flags the ones in the kernel.
    """

    def __init__(self, k=2, max_sites=None, seed=0, rank_tol=DEFAULT_TOL.rank_tol,
                 zero_block_tol=DEFAULT_TOL.zero_block_tol, eig_cluster_tol=DEFAULT_TOL.eig_cluster_tol,
                 repeats=2, kernel_tol=1e-8):
        super().__init__(seed, rank_tol, zero_block_tol, eig_cluster_tol, repeats)
        self.k = k
        self.max_sites = max_sites
        self.kernel_tol = kernel_tol

    def fit(self, family, boundaries=None):
        spec, bnd = check_family(family, boundaries)
        self.report_ = synthesize(spec, bnd, self.k, self._sampler(), self._tol(), self.max_sites, self.repeats)
        self.verdict_ = self.report_.verdict
        self.structure_ = self.report_.structure
        self.term_ = self.report_.term
        self.d_ = spec.d
        return self

    def transform(self, X):
        check_is_fitted(self, "report_")
        if self.term_ is None:
            raise ValueError(f"no local term available (verdict {self.verdict_})")
        X = check_operators(X, "X")
        d, k = self.d_, self.k
        L = int(round(np.log(X.shape[1]) / np.log(d)))
        if d**L != X.shape[1] or L < k:
            raise ValueError(f"operators must act on L >= k sites of dimension {d}")
        S = self.term_.channel
        out = np.zeros_like(X)
        for p, O in enumerate(X):
            for i in range(L - k + 1):
                out[p] += apply_local(S, O, d, k, i, L) - O
        return out

    def predict(self, X):
        X = check_operators(X, "X")
        res = self.transform(X)
        scale = np.maximum(np.linalg.norm(X, axis=(1, 2)), np.finfo(float).tiny)
        return np.linalg.norm(res, axis=(1, 2)) / scale < self.kernel_tol


__all__ = [
    "BlockDiagonalizer", "ObservableAlgebra", "FixedSpaceProjector", "ParentLindbladian",
    "check_family", "check_operators",
]

"""Parent Lindbladian pipeline: local fixed space, local term, patching.

The local term on sites i..i+k-1 is ``L_i = T - id``, with ``T`` the
conditional expectation onto the smallest fixed space F that contains the
window operators. Its kernel is exactly F, and ``exp(t L_i) = e^{-t} exp(t T)``
is completely positive for every t >= 0. The opposite sign ``id - T`` does not
generate a semigroup of channels and is not used.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import warnings

import numpy as np

from .errors import NotDaggerClosed, NumericalError, ProbabilisticFailure, StructureInconsistent, StructureInvalid
from .fixed_space import local_term_verdict, projection_channel, smallest_fixed_space
from .mpdo import contract_pairs, contract_window, target_dims
from .numerics import DEFAULT_TOL, as_sampler, derive_seeds, is_cptp, numerical_rank
from .patching import global_kernel_dim, growth_sequence, kernel_residual, run_patching

VERDICTS = ("parent_exists", "local_stage_failed", "patching_failed")
SIGN_NOTE = "L_i = T_i - id (generator of a CPTP semigroup); kernel(L_i) = local fixed space"

# largest window (d^k) for which the dense k-site superoperator is certified inline
CERTIFY_LIMIT = 32


@dataclass
class LindbladTerm:
    """Local generator ``T - id`` on a d^k-dimensional window (column stacking)."""

    k: int
    d: int
    superop: np.ndarray
    offset: int = 0

    @property
    def channel(self):
        return self.superop + np.eye(self.superop.shape[0])

    def kernel_dim(self, tol=DEFAULT_TOL):
        return self.superop.shape[0] - numerical_rank(self.superop, tol, scale=1.0)


@dataclass
class SynthesisReport:
    verdict: str
    k: int
    seed: int
    tolerances: dict
    span_dim: int | None = None
    structure: object = None           # FixedSpaceStructure
    local: object = None               # LocalVerdict
    patch: object = None               # PatchReport
    term: LindbladTerm | None = None
    target: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)
    error: str | None = None
    max_sites: int | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def fixed_dim(self):
        return None if self.structure is None else self.structure.dimension

    @property
    def factors(self):
        return [] if self.structure is None else [list(f) for f in self.structure.factors]

    def mpdo_form(self):
        """(rank C, s (d^2 - 1)) of the first MPDO-form growth step, if run."""
        if self.patch is None or not self.patch.mpdo_form:
            return None
        _, _, r, t = self.patch.mpdo_form[0]
        return {"rank_C": int(r), "threshold": int(t)}

    def summary(self):
        parts = [f"k={self.k}: {self.verdict}"]
        if self.span_dim is not None:
            parts.append(f"window span {self.span_dim}")
        if self.structure is not None:
            fs = ", ".join(f"1_{k} x M_{d}" for k, d in self.structure.factors)
            parts.append(f"fixed space dim {self.fixed_dim} (d0={self.structure.d0}; {fs})")
            spectra = "; ".join(
                "[" + ", ".join(f"{x:.4g}" for x in r) + "]" for r in self.structure.rho_spectra())
            parts.append(f"rho spectra {spectra}")
        if self.patch is not None:
            parts.append("s_l " + ", ".join(f"{l}:{s}" for l, s in self.patch.s_sequence))
            parts.append("rank C " + ", ".join(str(r) for r in self.patch.ranks[1:]))
            parts.append(f"patching {self.patch.verdict}")
            mf = self.mpdo_form()
            if mf is not None:
                parts.append(f"MPDO-form rank C {mf['rank_C']} vs {mf['threshold']}")
        if self.error:
            parts.append(f"error: {self.error}")
        return "; ".join(parts) + "."


def synthesize(spec, boundaries, k, sampler=None, tol=DEFAULT_TOL, max_sites=None, repeats=2):
    """Decide whether a frustration-free k-local parent Lindbladian exists.

    Stage errors are recorded in the report; the verdict is then
    ``local_stage_failed`` and ``error`` names the cause.
    """
    k = int(k)
    if k < 2:
        raise ValueError("k must be at least 2")
    max_sites = k + 6 if max_sites is None else int(max_sites)
    if max_sites <= k:
        raise ValueError("max_sites must exceed k")
    sampler = as_sampler(sampler)
    rep = SynthesisReport("local_stage_failed", k, sampler.seed, tol.as_dict(), max_sites=max_sites)

    window = contract_window(spec, boundaries, k, tol)
    rep.span_dim = window.span_dim
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ProbabilisticFailure)
        try:
            f = smallest_fixed_space(window.ops, sampler, tol, repeats=repeats)
        except (NotDaggerClosed, StructureInconsistent, StructureInvalid, NumericalError) as exc:
            rep.error = f"{type(exc).__name__}: {exc}"
            return rep
    rep.warnings = [str(w.message) for w in caught if issubclass(w.category, ProbabilisticFailure)]
    rep.structure = f
    rep.local = local_term_verdict(window, f)
    if not rep.local.exists:
        return rep

    ch = projection_channel(f)
    rep.term = LindbladTerm(k, window.d, ch.matrix - np.eye(window.n**2))
    rep.certificate = certify_term(rep.term, f, tol)
    rep.target = target_dims(spec, boundaries, range(k, max_sites + 1), tol)
    rep.patch = run_patching(window, f, rep.target, max_sites, tol=tol, spec=spec)
    rep.verdict = "parent_exists" if rep.patch.verdict == "stable_space_matches" else "patching_failed"
    return rep


def certify_term(term, f, tol=DEFAULT_TOL):
    """CPTP, idempotence and kernel checks of the local channel."""
    S = term.channel
    n = term.d**term.k
    if n > CERTIFY_LIMIT:
        return {"skipped": f"window dimension {n} above {CERTIFY_LIMIT}"}
    ok, diag = is_cptp(S, tol)
    idem = float(np.linalg.norm(S @ S - S) / max(np.linalg.norm(S), 1.0))
    kdim = term.kernel_dim(tol)
    return {
        "cptp": bool(ok),
        "idempotence_residual": idem,
        "kernel_dim": int(kdim),
        "kernel_matches_fixed_space": kdim == f.dimension,
        **{key: float(v) for key, v in diag.items()},
    }


def oracle_report(rep, spec, boundaries, lengths=None, tol=DEFAULT_TOL):
    """Desk-scale cross-checks of a report: dense kernels, growth agreement, annihilation."""
    from .fixed_space import oracle_smallest_fixed_space
    from .numerics import mutual_span_residual

    out = {}
    window = contract_window(spec, boundaries, rep.k, tol)
    if rep.structure is not None:
        try:
            ref = oracle_smallest_fixed_space(window.ops, tol)
            out["fixed_space_dim"] = len(ref)
            out["fixed_space_residual"] = mutual_span_residual(ref, rep.structure.member_basis(), tol)
        except NotDaggerClosed as exc:
            out["fixed_space_error"] = str(exc)
    if rep.term is None:
        return out
    d, k = window.d, rep.k
    if lengths is None:
        lengths = [L for L in range(k, 6) if d ** (2 * L) <= 4096]
    lengths = [L for L in lengths if L >= k]
    S = rep.term.channel
    grown = growth_sequence(window, rep.structure, max(lengths, default=k), tol)
    kernel, growth, target, annihilation = {}, {}, {}, {}
    for L in lengths:
        kernel[L] = global_kernel_dim(S, d, k, L, tol)
        growth[L] = grown.get(L)
        target[L] = rep.target.get(L)
        annihilation[L] = kernel_residual(S, contract_pairs(spec, boundaries, L), d, k, L)
    out.update({
        "lengths": list(lengths),
        "kernel_dims": kernel,
        "growth_dims": growth,
        "target_dims": target,
        "annihilation_residual": annihilation,
        "growth_matches_kernel": all(kernel[L] == growth[L] for L in lengths),
        "kernel_matches_target": all(kernel[L] == target[L] for L in lengths),
    })
    return out


def _sweep_one(args):
    spec, boundaries, k, seed, tol, max_sites = args
    try:
        return synthesize(spec, boundaries, k, seed, tol, max_sites)
    except Exception as exc:                          # isolate per-k failures
        rep = SynthesisReport("local_stage_failed", k, seed, tol.as_dict())
        rep.error = f"{type(exc).__name__}: {exc}"
        return rep


def k_sweep(spec, boundaries, k_range, seed=0, tol=DEFAULT_TOL, max_sites=None, jobs=1):
    """One report per k; seed for the i-th k is ``derive_seeds(seed, len)[i]``."""
    ks = [int(k) for k in k_range]
    if not ks or min(ks) < 2:
        raise ValueError("k_range must be nonempty with every k >= 2")
    seeds = derive_seeds(seed, len(ks))
    tasks = [(spec, boundaries, k, s, tol, None if max_sites is None else max_sites) for k, s in zip(ks, seeds)]
    if jobs <= 1 or len(tasks) == 1:
        return [_sweep_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
        return list(pool.map(_sweep_one, tasks))


__all__ = [
    "LindbladTerm", "SynthesisReport", "synthesize", "k_sweep", "certify_term", "oracle_report",
    "VERDICTS", "SIGN_NOTE",
]

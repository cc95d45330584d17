"""Source generators and the weakly almost i.i.d. defect.

Randomness uses numpy's Philox counter-based generator.  Streams are keyed
by (seed, n) for single draws and by (seed XOR trial-index, n) for
independent trials, so parallel trials are reproducible and
order-independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import pure_cap
from .core import (
    DensityOperator,
    StateN,
    ValidationError,
    load_operator,
    load_state,
    partial_trace,
    trace_norm,
)

# exact subset enumeration is used whenever C(n, k) is at most this
EXACT_SUBSET_LIMIT = 10_000

_MASK64 = (1 << 64) - 1


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    key = (seed & _MASK64) | ((stream & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def trial_seed(seed: int, trial: int) -> int:
    """Derived per-trial stream: seed XOR trial index."""
    return (seed ^ trial) & _MASK64


@dataclass(frozen=True)
class SourceSpec:
    """Descriptor of a source sequence.

    kind "iid" emits rho^{\\otimes n}; "haar_pure" emits a Haar-random unit
    vector (reference state is maximally mixed); "file" reads states from
    the package JSON format, one file per n (path may contain "{n}").
    """

    kind: str
    reference: DensityOperator
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("iid", "haar_pure", "file"):
            raise ValidationError(f"unknown source kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValidationError("file source needs a path")

    @property
    def d(self) -> int:
        return self.reference.dim


@dataclass(frozen=True)
class DefectReport:
    n: int
    k: int
    mode: str
    defect: float
    subsets_evaluated: int
    std_error: float = 0.0


def haar_state(d: int, n: int, seed: int) -> StateN:
    """Haar-random pure state on (C^d)^{\\otimes n}.

    Sampled by normalizing a vector of independent standard complex
    Gaussians, which is exactly Haar-distributed by unitary invariance.
    Deterministic given (seed, n).
    """
    dim = d**n
    if dim > pure_cap():
        raise ValidationError(f"d^n = {dim} exceeds pure payload cap")
    rng = philox(seed, stream=n)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return StateN(d, n, "pure", v / np.linalg.norm(v))


def generate(spec: SourceSpec, n: int, trial: int = 0) -> StateN:
    """Emit the n-site state of the source (trial selects a derived stream)."""
    if n < 1:
        raise ValidationError("n must be positive")
    if spec.kind == "iid":
        return StateN.tensor_power(spec.reference, n)
    if spec.kind == "haar_pure":
        return haar_state(spec.d, n, trial_seed(spec.seed, trial))
    path = spec.path.replace("{n}", str(n))
    return load_state(path)


def expected_purity_exact(d: int, n: int, k: int) -> float:
    """Expected purity of a k-site marginal of a Haar-random n-site pure
    state: (d^k + d^{n-k}) / (d^n + 1)."""
    _check_nk(n, k)
    return (d**k + d ** (n - k)) / (d**n + 1)


def haar_defect_bound(d: int, n: int, k: int) -> float:
    """Upper bound sqrt((d^{2k}-1)/(d^n+1)) on the expected k-site defect of
    the Haar source."""
    _check_nk(n, k)
    return math.sqrt((d ** (2 * k) - 1) / (d**n + 1))


def _check_nk(n: int, k: int):
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")


def waiid_defect(
    spec: SourceSpec,
    n: int,
    k: int,
    mode: str = "auto",
    sample_count: int = 1000,
    seed: int = 0,
    state: Optional[StateN] = None,
) -> DefectReport:
    """Average over site subsets I of ||(rho_n)_I - rho^{\\otimes k}||_1.

    "exact" mode enumerates all C(n, k) subsets; "sampled" averages over
    uniformly drawn subsets and reports the sample standard error.  "auto"
    picks exact when C(n, k) <= 10^4.
    """
    _check_nk(n, k)
    if state is None:
        state = generate(spec, n)
    ref_k = DensityOperator(_kron_power(spec.reference.matrix, k))
    total = math.comb(n, k)
    if mode == "auto":
        mode = "exact" if total <= EXACT_SUBSET_LIMIT else "sampled"
    if mode == "exact":
        vals = [
            _subset_defect(state, subset, ref_k)
            for subset in itertools.combinations(range(1, n + 1), k)
        ]
        return DefectReport(n, k, "exact", float(np.mean(vals)), total)
    if mode != "sampled":
        raise ValidationError(f"unknown mode {mode!r}")
    rng = philox(seed, stream=n)
    vals = []
    for _ in range(sample_count):
        subset = tuple(np.sort(rng.choice(n, size=k, replace=False)) + 1)
        vals.append(_subset_defect(state, subset, ref_k))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return DefectReport(n, k, "sampled", float(vals.mean()), len(vals), se)


def _subset_defect(state: StateN, subset, ref_k: DensityOperator) -> float:
    marg = partial_trace(state, subset)
    return trace_norm(marg.matrix - ref_k.matrix)


def _kron_power(m: np.ndarray, k: int) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for _ in range(k):
        out = np.kron(out, m)
    return out


def parse_source(descriptor: str) -> SourceSpec:
    """Parse a CLI source descriptor.

    Formats: "iid:rho=<file>", "iid:diag=p1,p2,...", "haar:d=2:seed=7",
    "file:path=<template>:rho=<file>".
    """
    parts = descriptor.split(":")
    kind = parts[0]
    kv = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ValidationError(f"malformed source field {part!r}")
        key, val = part.split("=", 1)
        kv[key] = val
    if kind == "iid":
        return SourceSpec("iid", _parse_reference(kv))
    if kind == "haar":
        if "d" not in kv:
            raise ValidationError("haar source needs d=<dim>")
        d = int(kv["d"])
        seed = int(kv.get("seed", 0))
        return SourceSpec("haar_pure", DensityOperator.maximally_mixed(d), seed)
    if kind == "file":
        if "path" not in kv:
            raise ValidationError("file source needs path=<template>")
        return SourceSpec("file", _parse_reference(kv), path=kv["path"])
    raise ValidationError(f"unknown source kind {kind!r}")


def _parse_reference(kv: dict) -> DensityOperator:
    if "rho" in kv:
        return DensityOperator(load_operator(kv["rho"]))
    if "diag" in kv:
        probs = [float(x) for x in kv["diag"].split(",")]
        return DensityOperator.diag(probs)
    raise ValidationError("source needs a reference state (rho=<file> or diag=...)")

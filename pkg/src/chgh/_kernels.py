"""Counting and ranking kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy one.
The numba path is used when numba imports and ``CHGH_DISABLE_NUMBA`` is not
set to a truthy value.  Both paths return identical integers, so downstream
divisions produce bit-identical floats regardless of the backend.

Documents are passed in CSR form: ``indptr`` (n_docs + 1), ``indices``
(skill ids, unique within a document) and ``timesteps`` (n_docs).
"""
from __future__ import annotations

import os

import numpy as np
from scipy import sparse

_DISABLED = os.environ.get("CHGH_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by CHGH_DISABLE_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference path

def _share_counts_np(indptr, indices, timesteps, n_skills, n_steps):
    doc_of = np.repeat(np.arange(len(timesteps)), np.diff(indptr))
    counts = np.zeros((n_skills, n_steps), dtype=np.int64)
    np.add.at(counts, (indices, timesteps[doc_of]), 1)
    totals = np.bincount(timesteps, minlength=n_steps).astype(np.int64)
    return counts, totals


def _cooccurrence_np(indptr, indices, n_skills):
    n_docs = len(indptr) - 1
    incidence = sparse.csr_matrix((np.ones(len(indices), dtype=np.int64), indices, indptr),
                                  shape=(n_docs, n_skills))
    incidence.sum_duplicates()
    incidence.data[:] = 1
    return np.asarray((incidence.T @ incidence).toarray(), dtype=np.int64)


def _equal_frequency_np(values, n_classes):
    order = np.argsort(values, kind="stable")
    size = len(values)
    base, extra = divmod(size, n_classes)
    sizes = np.full(n_classes, base, dtype=np.int64)
    sizes[:extra] += 1
    ranked_class = np.repeat(np.arange(n_classes, dtype=np.int64), sizes)
    labels = np.empty(size, dtype=np.int64)
    labels[order] = ranked_class
    return labels


# ---------------------------------------------------------------------------
# numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _share_counts_nb(indptr, indices, timesteps, n_skills, n_steps):
        counts = np.zeros((n_skills, n_steps), dtype=np.int64)
        totals = np.zeros(n_steps, dtype=np.int64)
        for doc in range(timesteps.shape[0]):
            t = timesteps[doc]
            totals[t] += 1
            for p in range(indptr[doc], indptr[doc + 1]):
                counts[indices[p], t] += 1
        return counts, totals

    @njit(cache=True)
    def _cooccurrence_nb(indptr, indices, n_skills):
        counts = np.zeros((n_skills, n_skills), dtype=np.int64)
        for doc in range(indptr.shape[0] - 1):
            lo = indptr[doc]
            hi = indptr[doc + 1]
            for p in range(lo, hi):
                i = indices[p]
                for q in range(lo, hi):
                    counts[i, indices[q]] += 1
        return counts

    @njit(cache=True)
    def _equal_frequency_nb(values, n_classes):
        order = np.argsort(values, kind="mergesort")
        size = values.shape[0]
        base = size // n_classes
        extra = size - base * n_classes
        labels = np.empty(size, dtype=np.int64)
        pos = 0
        for c in range(n_classes):
            width = base + 1 if c < extra else base
            for _ in range(width):
                labels[order[pos]] = c
                pos += 1
        return labels


def _as_csr(indptr, indices, timesteps=None):
    out = [np.ascontiguousarray(indptr, dtype=np.int64), np.ascontiguousarray(indices, dtype=np.int64)]
    if timesteps is not None:
        out.append(np.ascontiguousarray(timesteps, dtype=np.int64))
    return out


def _use_numba(backend: str | None) -> bool:
    backend = backend or BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return backend == "numba"


def share_counts(indptr, indices, timesteps, n_skills: int, n_steps: int, backend: str | None = None):
    """Per-(skill, step) document counts and per-step document totals."""
    indptr, indices, timesteps = _as_csr(indptr, indices, timesteps)
    if _use_numba(backend):
        return _share_counts_nb(indptr, indices, timesteps, n_skills, n_steps)
    return _share_counts_np(indptr, indices, timesteps, n_skills, n_steps)


def cooccurrence_counts(indptr, indices, n_skills: int, backend: str | None = None):
    """Symmetric matrix of joint document counts; the diagonal holds occurrence counts."""
    indptr, indices = _as_csr(indptr, indices)
    if _use_numba(backend):
        return _cooccurrence_nb(indptr, indices, n_skills)
    return _cooccurrence_np(indptr, indices, n_skills)


def equal_frequency_labels(values, n_classes: int, backend: str | None = None):
    """Rank ``values`` (stable, ascending) and cut the ranking into ``n_classes`` bins.

    Bin sizes differ by at most one; the lowest bins take the remainder.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if _use_numba(backend):
        return _equal_frequency_nb(values, n_classes)
    return _equal_frequency_np(values, n_classes)

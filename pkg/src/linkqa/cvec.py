"""Arithmetic on packed complex vectors.

A complex vector of dimension ``h`` is stored as ``2h`` floats along the
last axis: the first ``h`` entries are real parts, the last ``h``
imaginary parts.  All functions broadcast over leading axes.

The trilinear scoring function is ``Re(sum_i s_i r_i conj(o_i))``; its
gradients have closed complex forms (``d/ds = conj(r) * o`` etc.) which
the training code relies on.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sigmoid  # noqa: F401  (re-exported)


def split(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = v.shape[-1] // 2
    return v[..., :h], v[..., h:]


def pack(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    return np.concatenate([re, im], axis=-1)


def conj(v: np.ndarray) -> np.ndarray:
    re, im = split(v)
    return pack(re, -im)


def cmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise complex product in the packed layout."""
    ar, ai = split(a)
    br, bi = split(b)
    return pack(ar * br - ai * bi, ar * bi + ai * br)


def score(s: np.ndarray, r: np.ndarray, o: np.ndarray) -> np.ndarray:
    """Re(sum_i s_i r_i conj(o_i)) over the last axis."""
    if not (s.shape[-1] == r.shape[-1] == o.shape[-1]):
        raise ValueError(
            f"dimension mismatch: {s.shape[-1]}, {r.shape[-1]}, {o.shape[-1]}"
        )
    sr, si = split(s)
    rr, ri = split(r)
    or_, oi = split(o)
    return (
        (sr * rr * or_).sum(-1)
        + (si * rr * oi).sum(-1)
        + (sr * ri * oi).sum(-1)
        - (si * ri * or_).sum(-1)
    )


def score_grads(
    s: np.ndarray, r: np.ndarray, o: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`score` w.r.t. each packed input vector."""
    return cmul(conj(r), o), cmul(conj(s), o), cmul(s, r)


def score_against_table(composed: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Scores of composed subject*relation vectors against every table row.

    ``composed`` is the elementwise complex product of subject and
    relation vectors, shape (..., 2h); ``table`` holds candidate object
    vectors, shape (n, 2h).  Returns shape (..., n).
    """
    cr, ci = split(composed)
    tr, ti = split(table)
    return cr @ tr.T + ci @ ti.T

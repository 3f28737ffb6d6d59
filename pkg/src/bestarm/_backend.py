"""Kernel backend selection.

The compiled Cython core is used when importable; the pure-Python kernels are
the fallback. Set ``BESTARM_BACKEND=python`` (or ``compiled``) to force one.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels
from ._pykernels import DegenerateVariance

_choice = os.environ.get("BESTARM_BACKEND", "auto").lower()
if _choice not in ("auto", "compiled", "python"):
    raise RuntimeError(f"BESTARM_BACKEND must be auto/compiled/python, got {_choice!r}")

_core = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        _core = None
        if _choice == "compiled":
            raise RuntimeError("BESTARM_BACKEND=compiled but the extension is not built")


def backend_name() -> str:
    return "compiled" if _core is not None else "python"


def snr_kernel(mu, denom, arm, gamma0=None, tol=1e-9, max_outer=200):
    """Dinkelbach solve; returns (weight vector, ratio, outer iterations)."""
    if _core is None:
        return _pykernels.snr_dinkelbach(np.ascontiguousarray(mu, dtype=float),
                                         np.ascontiguousarray(denom, dtype=float),
                                         int(arm), gamma0, tol, max_outer)
    status, w, val, outer = _core.snr_dinkelbach(
        np.ascontiguousarray(mu, dtype=float),
        np.ascontiguousarray(denom, dtype=float),
        int(arm),
        None if gamma0 is None else np.ascontiguousarray(gamma0, dtype=float),
        tol, max_outer)
    if status != 0:
        raise DegenerateVariance("quadratic form vanished or ratio diverged")
    return w, val, outer


def psgd_kernel(mu, vgeo, ltilde, theta0, box, n_iters,
                active_tol=1e-8, snr_tol=1e-9, snr_max_outer=200,
                targets=None):
    """Full projected-subgradient-descent loop; returns (theta, objective)."""
    if _core is None:
        return _pykernels.psgd_minimize(
            np.ascontiguousarray(mu, dtype=float),
            np.ascontiguousarray(vgeo, dtype=float),
            np.ascontiguousarray(ltilde, dtype=float),
            np.ascontiguousarray(theta0, dtype=float),
            box, n_iters, active_tol, snr_tol, snr_max_outer, targets)
    status, theta, best = _core.psgd_minimize(
        np.ascontiguousarray(mu, dtype=float),
        np.ascontiguousarray(vgeo, dtype=float),
        np.ascontiguousarray(ltilde, dtype=float),
        np.ascontiguousarray(theta0, dtype=float),
        box, n_iters, active_tol, snr_tol, snr_max_outer, targets)
    if status != 0:
        raise DegenerateVariance("inner weight solve degenerated")
    return theta, best

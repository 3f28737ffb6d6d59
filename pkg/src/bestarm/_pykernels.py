"""Pure-Python reference implementation of the hot kernels.

`_core` (Cython) mirrors these routines one-for-one; the backend is chosen at
import in `_backend`. Keep the algorithms here in lockstep with the compiled
versions: tests assert parity between the two.
"""

from __future__ import annotations

import numpy as np

EXP_CLIP = 500.0
DEGENERATE_QUAD = 1e-14
SNR_CAP = 1e9


class DegenerateVariance(RuntimeError):
    """The quadratic form vanished (or the ratio diverged); the caller is
    expected to fall back to the default weight vector."""


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u * ind > css)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def snr_dinkelbach(mu: np.ndarray, denom: np.ndarray, arm: int,
                   gamma0: np.ndarray | None = None,
                   tol: float = 1e-9, max_outer: int = 200,
                   max_inner: int = 400,
                   trace: list | None = None) -> tuple[np.ndarray, float, int]:
    """Maximize (w . mu) / sqrt(w' denom w) over the arm-pinned weight set.

    Parameterized on the simplex over the remaining arms (the pinned
    coordinate is -1), this is an affine-over-convex fractional program.
    Solved by Dinkelbach iteration: each outer step fixes the current ratio
    ``lam`` and maximizes the concave surrogate c.g - lam * sqrt(Q(g)) by
    projected gradient ascent with Armijo backtracking. Returns the full
    weight vector, the achieved ratio, and the outer-iteration count.

    Raises DegenerateVariance when the quadratic form collapses below
    1e-14 or the ratio exceeds 1e9.
    """
    k = mu.shape[0]
    rest = np.delete(np.arange(k), arm)
    c = mu[rest] - mu[arm]
    dtt = denom[np.ix_(rest, rest)]
    da = denom[rest, arm]
    daa = denom[arm, arm]

    def quad(g):
        return float(g @ dtt @ g - 2.0 * (da @ g) + daa)

    def embed(g):
        w = np.empty(k)
        w[rest] = g
        w[arm] = -1.0
        return w

    if k == 2:
        g = np.ones(1)
        q = quad(g)
        if q <= DEGENERATE_QUAD:
            raise DegenerateVariance("two-arm quadratic form vanished")
        return embed(g), float(c[0] / np.sqrt(q)), 0

    if gamma0 is not None and gamma0.size == k - 1 and gamma0.min() >= 0.0 \
            and gamma0.sum() > 0.0:
        g = gamma0 / gamma0.sum()
    else:
        g = np.full(k - 1, 1.0 / (k - 1))

    q = quad(g)
    if q <= DEGENERATE_QUAD:
        g = project_simplex(g + 1e-3 * np.ones(k - 1))
        q = quad(g)
        if q <= DEGENERATE_QUAD:
            raise DegenerateVariance("quadratic form vanished at the start")
    lam = max(float(c @ g) / np.sqrt(q), 0.0)

    outer = 0
    val = lam
    for outer in range(1, max_outer + 1):
        g, q = _ascend_surrogate(c, dtt, da, daa, g, lam, max_inner)
        if q <= DEGENERATE_QUAD:
            raise DegenerateVariance("quadratic form vanished during ascent")
        val = float(c @ g) / np.sqrt(q)
        if trace is not None:
            trace.append(val)
        if val > SNR_CAP:
            raise DegenerateVariance("ratio diverged")
        if abs(val - lam) <= tol * max(1.0, abs(val)):
            break
        lam = val
    s = g.sum()
    if s > 0:
        g = g / s
    return embed(g), val, outer


def _ascend_surrogate(c, dtt, da, daa, g, lam, max_inner):
    """Projected gradient ascent on the concave s(g) = c.g - lam*sqrt(Q(g))."""

    def qval(g):
        return float(g @ dtt @ g - 2.0 * (da @ g) + daa)

    q = qval(g)
    s_cur = float(c @ g) - lam * np.sqrt(q)
    eta = 1.0
    for _ in range(max_inner):
        if q <= DEGENERATE_QUAD:
            return g, q
        grad = c - lam * (dtt @ g - da) / np.sqrt(q)
        accepted = False
        while eta > 1e-16:
            cand = project_simplex(g + eta * grad)
            qc = qval(cand)
            s_new = float(c @ cand) - lam * np.sqrt(max(qc, 0.0))
            if s_new >= s_cur + 1e-4 * float(grad @ (cand - g)):
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        move = float(np.max(np.abs(cand - g)))
        g, q, s_cur = cand, qc, s_new
        eta = min(eta * 2.0, 1e8)
        if move < 1e-13 * (1.0 + float(np.max(np.abs(g)))):
            break
    return g, q


def policy_exponents(theta: np.ndarray) -> np.ndarray:
    """Pairwise clipped exponent matrix exp(theta_a - theta_b)."""
    diff = np.clip(theta[:, None] - theta[None, :], -EXP_CLIP, EXP_CLIP)
    return np.exp(diff)


def variance_diag(theta: np.ndarray, vgeo: np.ndarray) -> np.ndarray:
    """Diagonal of the theta-weighted variance matrix: entry b sums
    vgeo[a, b] * exp(theta_a - theta_b) over a."""
    return np.einsum("ab,ab->b", vgeo, policy_exponents(theta))


def inv_snr_value(theta: np.ndarray, w: np.ndarray, vgeo: np.ndarray,
                  ltilde: np.ndarray, mu: np.ndarray) -> float:
    """Squared inverse SNR of weight ``w`` under sampling exponents ``theta``."""
    num = float(w * w @ variance_diag(theta, vgeo)) + float(w @ ltilde @ w)
    den = float(w @ mu)
    if den == 0.0:
        raise DegenerateVariance("weighted mean vanished")
    return num / (den * den)


def inv_snr_gradient(theta: np.ndarray, w: np.ndarray, vgeo: np.ndarray,
                     mu: np.ndarray) -> np.ndarray:
    """Gradient of the squared inverse SNR in the first K-1 theta coordinates."""
    k = theta.shape[0]
    den = float(w @ mu) ** 2
    if den == 0.0:
        raise DegenerateVariance("weighted mean vanished")
    e = policy_exponents(theta)
    w2 = w * w
    # entry c: sum_b vgeo[b,c] * (w_b^2 e^{th_c - th_b} - w_c^2 e^{th_b - th_c})
    out = np.einsum("bc,bc->c", vgeo, w2[:, None] * e.T - w2[None, :] * e)
    return out[: k - 1] / den


def psgd_minimize(mu: np.ndarray, vgeo: np.ndarray, ltilde: np.ndarray,
                  theta0: np.ndarray, box: float, n_iters: int,
                  active_tol: float = 1e-8, snr_tol: float = 1e-9,
                  snr_max_outer: int = 200,
                  targets: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Projected subgradient descent on the worst-arm squared inverse SNR.

    Per iterate: solve the inner weight problem for every apparently
    suboptimal arm (optionally restricted to ``targets``), take the active
    set within ``active_tol`` (relative) of the max, average their gradients,
    step by 1/(n * ||d||), project the free coordinates onto [-box, box], and
    keep the iterate with the smallest objective. The last coordinate stays
    pinned at zero.
    """
    k = mu.shape[0]
    top = float(mu.max())
    eligible = range(k) if targets is None else [int(a) for a in targets]
    subopt = [a for a in eligible if mu[a] < top]
    theta = theta0.astype(float).copy()
    theta[k - 1] = 0.0
    theta[: k - 1] = np.clip(theta[: k - 1], -box, box)
    if not subopt or n_iters <= 0:
        return theta, np.inf

    best_theta = theta.copy()
    best_g = np.inf
    warm: dict[int, np.ndarray | None] = {a: None for a in subopt}
    for n in range(1, n_iters + 1):
        dmat = ltilde + np.diag(variance_diag(theta, vgeo))
        fvals = {}
        weights = {}
        for a in subopt:
            w, val, _ = snr_dinkelbach(mu, dmat, a, warm[a],
                                       tol=snr_tol, max_outer=snr_max_outer)
            warm[a] = np.delete(w, a)
            weights[a] = w
            fvals[a] = 1.0 / (val * val)
        g = max(fvals.values())
        if g < best_g:
            best_g = g
            best_theta = theta.copy()
        active = [a for a in subopt if fvals[a] >= g * (1.0 - active_tol)]
        d = np.zeros(k - 1)
        for a in active:
            d += inv_snr_gradient(theta, weights[a], vgeo, mu)
        d /= len(active)
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            break  # stationary
        theta = theta.copy()
        theta[: k - 1] = np.clip(theta[: k - 1] - d / (n * norm), -box, box)
    return best_theta, best_g

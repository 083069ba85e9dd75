"""Numerical checks of the robust discriminator objective.

For a point ``x`` the robust real term is ``min_{|delta|_p <= eps} log D(x - delta)``.
To first order in ``eps`` it equals ``log D(x) - eps * |grad log D(x)|_q`` with
``q`` the dual exponent, and the minimizing perturbation is ``eps * sign(g)``
(``p = inf``) or ``eps * g / |g|_2`` (``p = 2``). The functions here compare a
brute-force lattice search against those closed forms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import metrics as M
from . import nn

_LOG_FLOOR = math.log(np.finfo(float).tiny)
_SHRINK = 1.0 - 1e-15


def _check_p(p) -> float:
    p = float(p)
    if p not in (2.0, math.inf):
        raise ValueError(f"p must be 2 or inf, got {p}")
    return p


def dual_exponent(p) -> float:
    """``q = p / (p - 1)``: 1 for ``p = inf``, 2 for ``p = 2``."""
    return 1.0 if _check_p(p) == math.inf else 2.0


def log_d(spec: nn.NetworkSpec, params, pts: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -nn.predict(spec, params, np.atleast_2d(pts)).ravel())


def _feasible(deltas: np.ndarray, eps: float, p: float) -> np.ndarray:
    if p == math.inf:
        return np.all(np.abs(deltas) <= eps, axis=1)
    return np.sqrt((deltas ** 2).sum(axis=1)) <= eps


def _lattice(d: int, ticks: np.ndarray) -> np.ndarray:
    grids = np.meshgrid(*([ticks] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _project_to_ball(deltas: np.ndarray, eps: float, p: float) -> np.ndarray:
    if p == math.inf:
        return np.clip(deltas, -eps, eps)
    norms = np.sqrt((deltas ** 2).sum(axis=1, keepdims=True))
    # shrink by a few ulps so rounding cannot leave a projected point outside
    scale = np.where(norms > eps, _SHRINK * eps / np.where(norms > 0, norms, 1.0), 1.0)
    return deltas * scale


def brute_force_argmin(spec: nn.NetworkSpec, params, x: np.ndarray, epsilon: float,
                       p=math.inf, grid_n: int = 41, refine: int = 3) -> Tuple[float, np.ndarray]:
    """Minimum of ``log D(x - delta)`` over the eps-ball and the minimizing delta.

    Searches a ``grid_n``-per-axis lattice of the cube ``[-eps, eps]^d``. For
    ``p = 2`` the lattice points inside the ball are joined by their radial
    projections onto the sphere, since the cube lattice never touches it.
    Then ``refine`` rounds each search a 21-per-axis local lattice spanning
    one coarse cell around the incumbent, projected back into the ball, at
    10x finer spacing per round. Only ``d <= 3`` is supported.
    """
    p = _check_p(p)
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x.size
    if d > 3:
        raise ValueError(f"brute-force search is limited to d <= 3, got d = {d}")
    if grid_n < 41:
        raise ValueError(f"grid_n must be >= 41, got {grid_n}")
    if epsilon == 0:
        return float(log_d(spec, params, x)[0]), np.zeros(d)
    ticks = np.linspace(-epsilon, epsilon, grid_n)
    deltas = _lattice(d, ticks)
    if p == 2:
        norms = np.sqrt((deltas ** 2).sum(axis=1))
        inside = deltas[norms <= epsilon]
        shell = deltas[norms > 0] * (_SHRINK * epsilon / norms[norms > 0])[:, None]
        deltas = np.concatenate([inside, shell])
        deltas = deltas[_feasible(deltas, epsilon, p)]
    vals = log_d(spec, params, x[None, :] - deltas)
    best = int(vals.argmin())
    best_val, center = float(vals[best]), deltas[best]

    h = ticks[1] - ticks[0]
    for _ in range(refine):
        local = _project_to_ball(center[None, :] + _lattice(d, np.linspace(-h, h, 21)), epsilon, p)
        local = local[_feasible(local, epsilon, p)]
        lvals = log_d(spec, params, x[None, :] - local)
        lbest = int(lvals.argmin())
        # the incumbent is kept unless strictly beaten
        if lvals[lbest] < best_val:
            best_val, center = float(lvals[lbest]), local[lbest]
        h /= 10.0
    return best_val, center


def brute_force_robust_term(spec, params, x, epsilon: float, p=math.inf, grid_n: int = 41,
                            refine: int = 3) -> float:
    return brute_force_argmin(spec, params, x, epsilon, p, grid_n, refine)[0]


def sampled_robust_term(spec, params, x, epsilon: float, p=math.inf,
                        n_dirs: int = 10_000, seed: int = 0) -> float:
    """Upper bound on the robust term from random boundary directions.

    Weaker than the lattice search; usable in any dimension.
    """
    p = _check_p(p)
    x = np.asarray(x, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    if p == math.inf:
        deltas = epsilon * rng.choice([-1.0, 1.0], size=(n_dirs, x.size))
    else:
        u = rng.standard_normal((n_dirs, x.size))
        deltas = epsilon * u / np.linalg.norm(u, axis=1, keepdims=True)
    vals = log_d(spec, params, x[None, :] - deltas)
    return float(min(vals.min(), log_d(spec, params, x)[0]))


def _grad_log_d(spec, params, x: np.ndarray) -> Tuple[float, np.ndarray]:
    ld, g = M.log_d_and_grad(spec, params, np.atleast_2d(x))
    return float(ld[0]), g[0]


def first_order_estimate(spec, params, x, epsilon: float, p=math.inf) -> float:
    """``log D(x) - eps * |grad_x log D(x)|_q``."""
    q = dual_exponent(p)
    ld, g = _grad_log_d(spec, params, np.asarray(x, dtype=np.float64).ravel())
    if ld <= _LOG_FLOOR:
        raise ValueError(f"D(x) underflows to 0 (log D = {ld}); first-order estimate undefined")
    return ld - epsilon * float(np.linalg.norm(g, ord=q))


def lagrange_delta(spec, params, x, epsilon: float, p=math.inf) -> np.ndarray:
    """Optimal first-order perturbation ``delta*``."""
    p = _check_p(p)
    _, g = _grad_log_d(spec, params, np.asarray(x, dtype=np.float64).ravel())
    if not np.any(g):
        raise ValueError("stationary point: grad log D(x) is zero, delta* is undefined")
    if p == math.inf:
        return epsilon * np.sign(g)
    return epsilon * g / np.linalg.norm(g)


@dataclass
class ExpansionReport:
    p: float
    q: float
    epsilon: List[float]
    brute_force_min: List[float]
    first_order_estimate: List[float]
    residual: List[float]
    residual_ratio: List[Optional[float]]
    n_points: int
    grid_n: int
    method: str = "lattice"

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["p"] = "inf" if self.p == math.inf else self.p
        return d


def expansion_residual_sweep(spec, params, x_set: np.ndarray, p, eps_list: Sequence[float],
                             grid_n: int = 41) -> ExpansionReport:
    """Mean |brute force - first order| over ``x_set`` for each epsilon.

    ``residual_ratio[i] = residual[i] / residual[i+1]``; ``None`` when the
    denominator is zero.
    """
    p = _check_p(p)
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least 3 entries")
    x_set = np.atleast_2d(np.asarray(x_set, dtype=np.float64))
    bf_mean, fo_mean, res = [], [], []
    for eps in eps_list:
        bfs, fos, rs = [], [], []
        # fixed index order keeps the sums reproducible
        for x in x_set:
            bf = brute_force_robust_term(spec, params, x, eps, p, grid_n)
            fo = first_order_estimate(spec, params, x, eps, p)
            bfs.append(bf)
            fos.append(fo)
            rs.append(abs(bf - fo))
        bf_mean.append(float(np.mean(bfs)))
        fo_mean.append(float(np.mean(fos)))
        res.append(float(np.mean(rs)))
    ratios = [a / b if b > 0 else None for a, b in zip(res, res[1:])]
    return ExpansionReport(p, dual_exponent(p), eps_list, bf_mean, fo_mean, res, ratios,
                           len(x_set), grid_n)


def direction_agreement(spec, params, x_set: np.ndarray, epsilon: float, p,
                        grid_n: int = 41, zero_tol: float = 1e-6) -> dict:
    """Compare the lattice minimizer with ``delta*`` at each point.

    For ``p = 2`` reports the cosine between them; for ``p = inf`` whether
    the minimizer is exactly the vertex ``eps * sign(g)``. Points with a
    gradient component within ``zero_tol`` of zero are skipped for ``p = inf``.
    """
    p = _check_p(p)
    scores, skipped = [], 0
    for x in np.atleast_2d(x_set):
        _, g = _grad_log_d(spec, params, x)
        if p == math.inf and np.any(np.abs(g) <= zero_tol):
            skipped += 1
            continue
        if not np.any(g):
            skipped += 1
            continue
        _, bf_delta = brute_force_argmin(spec, params, x, epsilon, p, grid_n)
        star = lagrange_delta(spec, params, x, epsilon, p)
        if p == math.inf:
            scores.append(float(np.array_equal(bf_delta, star)))
        else:
            nb = np.linalg.norm(bf_delta)
            scores.append(float(bf_delta @ star / (nb * np.linalg.norm(star))) if nb > 0 else 0.0)
    return {"scores": scores, "skipped": skipped}

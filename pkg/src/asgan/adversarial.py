"""Perturbed-sample crafting for discriminator adversarial training.

All crafting functions move *against* the gradient of the discriminator
objective, i.e. they push real samples toward looking fake.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

METHODS = ("none", "fgsm", "pgd", "gaussian")

GradFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AdvConfig:
    method: str = "none"
    epsilon: float = 0.0
    norm_order: float = math.inf
    pgd_steps: int = 1
    pgd_step_size: Optional[float] = None  # None -> 2*epsilon/pgd_steps
    pgd_random_init: bool = True
    warmup_iters: int = 0
    clip_lo: Optional[float] = None
    clip_hi: Optional[float] = None
    adv_on_fake: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"adv method must be one of {METHODS}, got {self.method!r}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.norm_order not in (2, math.inf):
            raise ValueError(f"norm_order must be 2 or inf, got {self.norm_order}")
        if self.norm_order == 2 and self.method != "none":
            # crafting is L-inf only; L2 lives in the theory checks
            raise ValueError("crafting supports only the L-inf ball")
        if self.pgd_steps < 1:
            raise ValueError(f"pgd_steps must be >= 1, got {self.pgd_steps}")
        if self.pgd_step_size is not None:
            if not self.pgd_step_size > 0:
                raise ValueError("pgd_step_size must be > 0")
            if self.pgd_step_size > 2 * self.epsilon:
                raise ValueError(f"pgd_step_size {self.pgd_step_size} exceeds 2*epsilon")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        if (self.clip_lo is not None and self.clip_hi is not None
                and self.clip_lo > self.clip_hi):
            raise ValueError("clip_lo must not exceed clip_hi")

    @property
    def step_size(self) -> float:
        if self.pgd_step_size is not None:
            return self.pgd_step_size
        return 2.0 * self.epsilon / self.pgd_steps

    def check_horizon(self, total_iters: int) -> None:
        if self.warmup_iters > total_iters:
            raise ValueError(f"warmup_iters {self.warmup_iters} exceeds total iterations {total_iters}")


def _clip(x: np.ndarray, lo: Optional[float], hi: Optional[float]) -> np.ndarray:
    if lo is None and hi is None:
        return x
    return np.clip(x, -np.inf if lo is None else lo, np.inf if hi is None else hi)


def _within_budget(x: np.ndarray, x_hat: np.ndarray, epsilon: float) -> np.ndarray:
    """Project ``x_hat`` onto the ball, then fix rounding by single ulps toward ``x``.

    The ball wins over the domain clip when ``x`` itself lies outside the domain.
    """
    bad = np.abs(x_hat - x) > epsilon
    if np.any(bad):
        x_hat[bad] = np.clip(x_hat[bad], x[bad] - epsilon, x[bad] + epsilon)
        bad = np.abs(x_hat - x) > epsilon
    while np.any(bad):
        x_hat[bad] = np.nextafter(x_hat[bad], x[bad])
        bad = np.abs(x_hat - x) > epsilon
    return x_hat


def craft_fgsm(x: np.ndarray, grad_x: np.ndarray, epsilon: float,
               clip_lo: Optional[float] = None, clip_hi: Optional[float] = None) -> np.ndarray:
    """``clip(x - epsilon * sign(grad_x))``."""
    x = np.asarray(x, dtype=np.float64)
    grad_x = np.asarray(grad_x, dtype=np.float64)
    if x.shape != grad_x.shape:
        raise ValueError(f"craft_fgsm: x has shape {x.shape}, grad_x has {grad_x.shape}")
    if epsilon == 0:
        return x.copy()
    return _within_budget(x, _clip(x - epsilon * np.sign(grad_x), clip_lo, clip_hi), epsilon)


def craft_pgd(x: np.ndarray, grad_fn: GradFn, epsilon: float, steps: int,
              step_size: Optional[float] = None, random_init: bool = True,
              rng=None, clip_lo: Optional[float] = None,
              clip_hi: Optional[float] = None) -> np.ndarray:
    """Signed-gradient descent on the objective inside the L-inf ball around ``x``.

    Each step is ``x_k - step_size * sign(grad_fn(x_k))``, clipped to the
    domain and projected back onto the ball. ``rng`` may be a seed or a
    ``numpy.random.Generator``; it is only used for the random start.
    """
    if steps < 1:
        raise ValueError(f"craft_pgd needs steps >= 1, got {steps}")
    x = np.asarray(x, dtype=np.float64)
    if epsilon == 0:
        return x.copy()
    if step_size is None:
        step_size = 2.0 * epsilon / steps
    lo, hi = x - epsilon, x + epsilon
    if random_init:
        rng = np.random.default_rng(rng)
        xk = _clip(x + rng.uniform(-epsilon, epsilon, size=x.shape), clip_lo, clip_hi)
    else:
        xk = x
    for _ in range(steps):
        g = np.asarray(grad_fn(xk), dtype=np.float64)
        if g.shape != x.shape:
            raise ValueError(f"grad_fn returned shape {g.shape}, expected {x.shape}")
        xk = np.clip(_clip(xk - step_size * np.sign(g), clip_lo, clip_hi), lo, hi)
    return _within_budget(x, xk, epsilon)


def craft_gaussian(x: np.ndarray, epsilon: float, rng=None,
                   clip_lo: Optional[float] = None, clip_hi: Optional[float] = None) -> np.ndarray:
    """Same L-inf budget as FGSM but along the sign of standard normal noise."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(rng)
    noise = rng.standard_normal(x.shape)
    if epsilon == 0:
        return x.copy()
    return _within_budget(x, _clip(x - epsilon * np.sign(noise), clip_lo, clip_hi), epsilon)


def epsilon_at(iteration: int, config: AdvConfig) -> float:
    """Effective epsilon: zero during warmup, ``config.epsilon`` afterwards."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return 0.0 if iteration < config.warmup_iters else config.epsilon


def default_warmup(total_iters: int, fraction: float = 0.05) -> int:
    return int(round(fraction * total_iters))

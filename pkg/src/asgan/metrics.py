"""Desk-scale evaluation: distribution distances, mode coverage,
discriminator gradient statistics and robust accuracy."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import nn
from . import tensor as T
from .datasets import MixtureSpec

METRICS_FORMAT = "asgan_metrics_v1"


@dataclass
class MetricsRecord:
    iter: int
    V_m: float = math.nan
    D_loss: float = math.nan
    G_loss: float = math.nan
    mean_D_real: float = math.nan
    mean_D_adv: float = math.nan
    grad_l1_mean: float = math.nan
    mode_coverage: float = math.nan
    hq_fraction: float = math.nan
    mmd2: float = math.nan
    frechet2d: float = math.nan
    adv_accuracy: float = math.nan
    std_accuracy: float = math.nan
    std_accuracy_real: float = math.nan
    wall_ms_clean: float = 0.0
    wall_ms_craft: float = 0.0
    wall_ms_adv: float = 0.0
    wall_ms_gen: float = 0.0
    flags: str = ""


CSV_FIELDS = [f.name for f in fields(MetricsRecord)]
TIMING_FIELDS = [k for k in CSV_FIELDS if k.startswith("wall_ms_")]
# wall times vary run to run, so the deterministic metrics file leaves them out
DETERMINISTIC_FIELDS = [k for k in CSV_FIELDS if k not in TIMING_FIELDS]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: Iterable[MetricsRecord], columns: Optional[List[str]] = None,
                   comments: Sequence[str] = ()) -> str:
    """Serialize records: a ``# asgan_metrics_v1`` line, optional ``#`` comment
    lines, a header row, then one row per record.

    ``columns`` defaults to every field and must start with ``iter``.
    """
    columns = list(CSV_FIELDS if columns is None else columns)
    if columns[0] != "iter" or any(c not in CSV_FIELDS for c in columns):
        raise ValueError(f"columns must start with 'iter' and be MetricsRecord fields: {columns}")
    buf = io.StringIO()
    buf.write(f"# {METRICS_FORMAT}\n")
    for c in comments:
        if "\n" in c:
            raise ValueError("comment lines must not contain newlines")
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        d = asdict(r)
        w.writerow([_fmt(d[k]) for k in columns])
    return buf.getvalue()


def read_metrics_csv(text: str) -> List[MetricsRecord]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {METRICS_FORMAT}":
        raise ValueError(f"not an {METRICS_FORMAT} file")
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    rows = list(csv.reader(body))
    if not rows or not rows[0] or rows[0][0] != "iter" or any(c not in CSV_FIELDS for c in rows[0]):
        raise ValueError(f"unexpected header {rows[0] if rows else None}")
    header = rows[0]
    types = {f.name: f.type for f in fields(MetricsRecord)}
    out = []
    for row in rows[1:]:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        kw = {}
        for k, v in zip(header, row):
            t = types[k]
            kw[k] = int(v) if t in (int, "int") else (v if t in (str, "str") else float(v))
        out.append(MetricsRecord(**kw))
    return out


# -- distribution distances -------------------------------------------------------

def _sqrtm_2x2(m: np.ndarray) -> np.ndarray:
    s = math.sqrt(max(np.linalg.det(m), 0.0))
    t = math.sqrt(max(np.trace(m) + 2.0 * s, 0.0))
    if t == 0.0:
        return np.zeros((2, 2))
    return (m + s * np.eye(2)) / t


def _gauss_fit(x: np.ndarray, ridge: float):
    mu = x.mean(axis=0)
    cov = np.cov(x, rowvar=False) + ridge * np.eye(x.shape[1])
    return mu, cov


def frechet_gaussian_2d(real: np.ndarray, fake: np.ndarray, ridge: float = 1e-8) -> float:
    """Frechet (W2) distance between Gaussian fits of two 2-D point sets.

    Uses the closed-form principal square root of a 2x2 matrix.
    """
    real, fake = np.asarray(real, float), np.asarray(fake, float)
    if real.ndim != 2 or fake.ndim != 2 or real.shape[1] != 2 or fake.shape[1] != 2:
        raise ValueError("frechet_gaussian_2d expects (n, 2) point sets")
    if len(real) < 3 or len(fake) < 3:
        raise ValueError("frechet_gaussian_2d needs at least 3 points per set")
    mu1, s1 = _gauss_fit(real, ridge)
    mu2, s2 = _gauss_fit(fake, ridge)
    covmean = _sqrtm_2x2(s1 @ s2)
    d = float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(covmean))
    return max(d, 0.0)


def frechet_diagonal(real: np.ndarray, fake: np.ndarray) -> float:
    """Frechet distance under a diagonal-covariance approximation (for pixel data)."""
    mu1, mu2 = real.mean(axis=0), fake.mean(axis=0)
    v1, v2 = real.var(axis=0, ddof=1), fake.var(axis=0, ddof=1)
    return float(np.sum((mu1 - mu2) ** 2) + np.sum(v1 + v2 - 2.0 * np.sqrt(v1 * v2)))


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def median_bandwidth(pooled: np.ndarray) -> float:
    """Lower median of the pairwise distances ``i < j``."""
    n = len(pooled)
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, k=1)
    d = np.sqrt(_sqdist(pooled, pooled)[iu])
    k = (d.size - 1) // 2
    h = float(np.partition(d, k)[k])
    return h if h > 0 else 1.0


def mmd2_rbf(real: np.ndarray, fake: np.ndarray, bandwidth: Optional[float] = None) -> float:
    """Biased (V-statistic) squared MMD with kernel ``exp(-|x-y|^2 / (2 h^2))``."""
    real, fake = np.atleast_2d(np.asarray(real, float)), np.atleast_2d(np.asarray(fake, float))
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("mmd2_rbf needs non-empty sets")
    if bandwidth is None:
        bandwidth = median_bandwidth(np.concatenate([real, fake]))
    g = 1.0 / (2.0 * bandwidth ** 2)
    kxx = np.exp(-g * _sqdist(real, real)).mean()
    kyy = np.exp(-g * _sqdist(fake, fake)).mean()
    kxy = np.exp(-g * _sqdist(real, fake)).mean()
    return max(float(kxx + kyy - 2.0 * kxy), 0.0)


def mode_metrics(fake: np.ndarray, spec: MixtureSpec) -> Dict[str, float]:
    """Mode coverage and high-quality fraction of samples in original units."""
    centers = spec.centers()
    if centers is None:
        raise ValueError(f"{spec.kind} has no explicit mode centers")
    fake = np.asarray(fake, float)
    n = len(fake)
    d2 = _sqdist(fake, centers)
    nearest = d2.argmin(axis=1)
    hq = np.sqrt(d2[np.arange(n), nearest]) <= 3.0 * spec.sigma
    counts = np.bincount(nearest[hq], minlength=len(centers))
    need = max(1.0, 0.1 * n / len(centers))
    return {"coverage": int((counts >= need).sum()),
            "hq_fraction": float(hq.mean()) if n else 0.0}


# -- discriminator diagnostics -----------------------------------------------------------

def log_d_and_grad(spec: nn.NetworkSpec, params, x: np.ndarray):
    """Per-sample ``log D(x)`` and its gradient with respect to ``x``."""
    xt = T.Tensor(x, requires_grad=True)
    with T.Tape() as tape:
        logd = T.log_sigmoid(nn.forward(spec, params, xt))
        total = T.total(logd)
    tape.backward(total)
    return logd.values.ravel(), xt.grad


def grad_stats(spec: nn.NetworkSpec, params, x: np.ndarray, bins: int = 64) -> dict:
    """Mean per-sample L1 norm of ``grad_x log D(x)`` and a histogram of its entries.

    The histogram range is the componentwise mean +/- 3 standard deviations;
    entries outside it are clipped into the edge bins.
    """
    _, g = log_d_and_grad(spec, params, x)
    l1 = np.abs(g).sum(axis=1)
    flat = g.ravel()
    mu, sd = float(flat.mean()), float(flat.std())
    lo, hi = (mu - 3 * sd, mu + 3 * sd) if sd > 0 else (mu - 0.5, mu + 0.5)
    counts, edges = np.histogram(np.clip(flat, lo, hi), bins=bins, range=(lo, hi))
    return {"l1_mean": float(l1.mean()), "histogram": counts, "edges": edges}


def d_prob(spec: nn.NetworkSpec, params, x: np.ndarray) -> np.ndarray:
    return T._sigmoid(nn.predict(spec, params, x).ravel())


def robust_accuracy(spec: nn.NetworkSpec, params, x: np.ndarray, fake: np.ndarray,
                    epsilon: float, clip=None) -> dict:
    """Accuracy of D at threshold 0.5 (ties wrong) on clean data and on FGSM-attacked reals."""
    from .adversarial import craft_fgsm

    p_real = d_prob(spec, params, x)
    p_fake = d_prob(spec, params, fake)
    real_ok = p_real > 0.5
    fake_ok = p_fake < 0.5
    _, g = log_d_and_grad(spec, params, x)
    lo, hi = clip if clip else (None, None)
    x_hat = craft_fgsm(x, g, epsilon, lo, hi)
    p_adv = d_prob(spec, params, x_hat)
    return {
        "std_acc": float((real_ok.sum() + fake_ok.sum()) / (len(x) + len(fake))),
        "std_acc_real": float(real_ok.mean()),
        "adv_acc": float((p_adv > 0.5).mean()),
        "mean_d_real": float(p_real.mean()),
        "mean_d_adv": float(p_adv.mean()),
    }

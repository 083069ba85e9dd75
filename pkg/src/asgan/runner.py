"""Experiment orchestration: configs, seeded runs, sweeps and reports.

Configs are flat ``section.key = value`` text files; ``#`` starts a comment.
Sections: ``data``, ``train``, ``adv``, ``eval``, ``run``, ``sweep``,
``theory``. Every output file carries the resolved config and a format tag.
"""

from __future__ import annotations

import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from . import engine as E
from . import metrics as M
from . import nn
from . import theory as th
from .adversarial import AdvConfig, default_warmup
from .datasets import (MixtureSpec, TrainData, image_data, load_idx, mixture_data,
                       rescale_and_downsample)

SUMMARY_FORMAT = "asgan_summary_v1"
COMPARISON_FORMAT = "asgan_comparison_v1"
EXPANSION_FORMAT = "asgan_expansion_v1"
OUTPUT_ENV = "ASGAN_OUTPUT_DIR"
SWEEP_AXES = ("epsilon", "method", "pgd_steps")
# "double" is the explicit two-clean-steps ablation
SWEEP_METHODS = ("none", "fgsm", "pgd", "gaussian", "double")
# relative epsilon: fraction of the per-dimension std of the training data
DEFAULT_EPS_FRACTION = 0.01
# images: one grey level of the [0, 255] range, applied literally in [-1, 1]
DEFAULT_IMAGE_EPS = 1.0 / 255


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class DataConfig:
    kind: str = "ring"
    n_modes: int = 8
    radius: float = 2.0
    sigma: float = 0.04
    seed: int = 0
    n_train: int = 20000
    n_heldout: int = 2048
    idx_path: str = ""
    image_hw: Tuple[int, ...] = (14, 14)


@dataclass(frozen=True)
class RunConfig:
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    output_dir: str = "runs"
    workers: int = 1
    name: str = ""


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "epsilon"
    values: Tuple[str, ...] = ()
    k_last: int = 5


@dataclass(frozen=True)
class TheoryConfig:
    checkpoint: str = ""
    p: Tuple[str, ...] = ("inf", "2")
    eps: Tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
    n_points: int = 24
    grid_n: int = 41
    direction_eps: float = 1e-2


# adv.epsilon and adv.warmup_iters accept "auto"; kept as strings until resolved
@dataclass(frozen=True)
class AdvSection:
    method: str = "none"
    epsilon: str = "auto"
    norm_order: str = "inf"
    pgd_steps: int = 1
    pgd_step_size: str = "auto"
    pgd_random_init: bool = True
    warmup_iters: str = "auto"
    clip: str = "auto"
    adv_on_fake: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = DataConfig()
    train: E.TrainConfig = E.TrainConfig()
    adv: AdvSection = AdvSection()
    eval: E.EvalConfig = E.EvalConfig()
    run: RunConfig = RunConfig()
    sweep: SweepConfig = SweepConfig()
    theory: TheoryConfig = TheoryConfig()

    def to_flat(self) -> Dict[str, Any]:
        out = {}
        for sec in SECTIONS:
            for k, v in asdict(getattr(self, sec)).items():
                out[f"{sec}.{k}"] = list(v) if isinstance(v, tuple) else v
        return out


SECTIONS = ("data", "train", "adv", "eval", "run", "sweep", "theory")


# -- parsing ---------------------------------------------------------------------------

def _convert(raw: str, current: Any, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            proto = current[0] if current else ""
            if isinstance(proto, str):
                return tuple(items)
            return tuple(type(proto)(s) for s in items)
        if current is None or key == "eval.epsilon":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(current).__name__}") from None


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; later duplicates win."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} has no section")
        out[key] = value
    return out


def build_config(flat: Dict[str, str], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Apply string overrides to ``base`` (defaults if omitted) and validate."""
    cfg = base or ExperimentConfig()
    updates: Dict[str, Dict[str, Any]] = {s: {} for s in SECTIONS}
    for key, raw in flat.items():
        sec, _, name = key.partition(".")
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section {sec!r} in key {key!r}")
        obj = getattr(cfg, sec)
        names = {f.name for f in fields(obj)}
        if name not in names:
            raise ConfigError(f"unknown key {key!r}; {sec} accepts {sorted(names)}")
        updates[sec][name] = _convert(raw, getattr(obj, name), key)
    try:
        cfg = replace(cfg, **{s: replace(getattr(cfg, s), **u) for s, u in updates.items() if u})
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    validate(cfg)
    return cfg


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    flat = parse_config_text(Path(path).read_text()) if path else {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        flat[k.strip()] = v
    return build_config(flat)


def validate(cfg: ExperimentConfig) -> None:
    if not cfg.run.seeds:
        raise ConfigError("run.seeds must not be empty")
    if cfg.run.workers < 1:
        raise ConfigError("run.workers must be >= 1")
    if cfg.data.kind not in ("ring", "grid", "swiss_roll", "idx"):
        raise ConfigError(f"data.kind must be ring, grid, swiss_roll or idx, got {cfg.data.kind!r}")
    if cfg.data.kind == "idx" and not cfg.data.idx_path:
        raise ConfigError("data.kind = idx needs data.idx_path")
    if cfg.data.n_train < cfg.train.batch_size and cfg.data.kind != "idx":
        raise ConfigError("data.n_train must be at least train.batch_size")
    if cfg.sweep.axis not in SWEEP_AXES:
        raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}")
    if cfg.sweep.k_last < 1:
        raise ConfigError("sweep.k_last must be >= 1")
    for v in cfg.sweep.values:
        _sweep_override(cfg.sweep.axis, v)
    if cfg.theory.n_points < 1 or cfg.theory.grid_n < 41:
        raise ConfigError("theory.n_points must be >= 1 and theory.grid_n >= 41")
    if cfg.data.kind != "idx":
        try:
            MixtureSpec(cfg.data.kind, cfg.data.n_modes, cfg.data.radius, cfg.data.sigma, cfg.data.seed)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    # resolving the adversarial section exercises its own validation
    resolve_adv(cfg, data_std=1.0)


# -- resolution -----------------------------------------------------------------------

def build_data(cfg: DataConfig) -> TrainData:
    if cfg.kind == "idx":
        images = rescale_and_downsample(load_idx(cfg.idx_path), tuple(cfg.image_hw) or None)
        return image_data(images, min(cfg.n_heldout, images.n // 5))
    spec = MixtureSpec(cfg.kind, cfg.n_modes, cfg.radius, cfg.sigma, cfg.seed)
    return mixture_data(spec, cfg.n_train, cfg.n_heldout)


def data_std(data: TrainData) -> float:
    """Mean per-dimension standard deviation of the training pool."""
    return float(np.mean(data.points.std(axis=0)))


def resolve_adv(cfg: ExperimentConfig, data_std: float, clip=None) -> AdvConfig:
    a = cfg.adv
    try:
        if a.epsilon != "auto":
            eps = float(a.epsilon)
        else:
            eps = DEFAULT_IMAGE_EPS if cfg.data.kind == "idx" else DEFAULT_EPS_FRACTION * data_std
        warm = default_warmup(cfg.train.total_iters) if a.warmup_iters == "auto" else int(a.warmup_iters)
        step = None if a.pgd_step_size == "auto" else float(a.pgd_step_size)
        p = math.inf if a.norm_order == "inf" else float(a.norm_order)
        if a.clip == "auto":
            lo, hi = clip if clip else (None, None)
        elif a.clip == "none":
            lo, hi = None, None
        else:
            lo, hi = (float(s) for s in a.clip.split(","))
        adv = AdvConfig(a.method, eps, p, a.pgd_steps, step, a.pgd_random_init, warm, lo, hi, a.adv_on_fake)
        adv.check_horizon(cfg.train.total_iters)
        return adv
    except ValueError as e:
        raise ConfigError(f"adv: {e}") from None


def resolved_dict(cfg: ExperimentConfig, adv: AdvConfig, data: TrainData) -> dict:
    d = cfg.to_flat()
    d["resolved.epsilon"] = adv.epsilon
    d["resolved.warmup_iters"] = adv.warmup_iters
    d["resolved.data_std"] = data_std(data)
    d["resolved.data_scale"] = data.scale
    return d


def _sweep_override(axis: str, value: str) -> Dict[str, str]:
    if axis == "epsilon":
        try:
            if float(value) < 0:
                raise ValueError
        except ValueError:
            raise ConfigError(f"epsilon sweep value must be a number >= 0, got {value!r}") from None
        return {"adv.epsilon": value}
    if axis == "method":
        if value not in SWEEP_METHODS:
            raise ConfigError(f"method sweep value must be one of {SWEEP_METHODS}, got {value!r}")
        if value == "double":
            return {"adv.method": "none", "train.double_clean_step": "true"}
        return {"adv.method": value}
    try:
        if int(value) < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"pgd_steps sweep value must be an integer >= 1, got {value!r}") from None
    return {"adv.method": "pgd", "adv.pgd_steps": value}


# -- single runs ------------------------------------------------------------------------

FINAL_KEYS = ("mmd2", "frechet2d", "mode_coverage", "hq_fraction", "grad_l1_mean",
              "adv_accuracy", "std_accuracy", "std_accuracy_real", "mean_D_real", "mean_D_adv",
              "V_m", "D_loss", "G_loss")
LOWER_IS_BETTER = {"mmd2": True, "frechet2d": True, "mode_coverage": False, "hq_fraction": False}


def _finite(values):
    return [v for v in values if isinstance(v, (int, float)) and math.isfinite(v)]


def run_seed(cfg: ExperimentConfig, seed: int, out_dir: Path) -> dict:
    """Train one seed and write its metrics, timings and checkpoints."""
    data = build_data(cfg.data)
    adv = resolve_adv(cfg, data_std(data), data.clip)
    tcfg = replace(cfg.train, seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_line = json.dumps(resolved_dict(cfg, adv, data), sort_keys=True)
    status, records, state = "ok", [], None
    start = time.perf_counter()
    try:
        state, records = E.train(tcfg, adv, data, cfg.eval)
    except E.TrainingCollapse as exc:
        status, records = f"collapsed: {exc}", exc.records
    wall = time.perf_counter() - start
    comments = [f"version {__version__}", f"config {config_line}"]
    (out_dir / "metrics.csv").write_text(
        M.records_to_csv(records, M.DETERMINISTIC_FIELDS, comments))
    (out_dir / "timing.csv").write_text(
        M.records_to_csv(records, ["iter", *M.TIMING_FIELDS], comments))
    result = {"seed": seed, "status": status, "n_records": len(records), "flags": [],
              "wall_time_s": wall}
    if state is not None:
        meta = {"iteration": state.iteration, "seed": seed, "version": __version__,
                "config": resolved_dict(cfg, adv, data)}
        nn.save_params(out_dir / "d.params", state.d_params, state.d_spec, meta)
        nn.save_params(out_dir / "g.params", state.g_params, state.g_spec, meta)
        tm = state.timings
        result["timings_s"] = dict(tm)
        result["step_time_s"] = tm["clean"] + tm["craft"] + tm["adv"] + tm["gen"]
        result["flags"] = list(state.flags)
    if records:
        last = records[-1]
        result["final"] = {k: getattr(last, k) for k in FINAL_KEYS}
        result["best"] = {}
        for k, low in LOWER_IS_BETTER.items():
            vals = _finite(getattr(r, k) for r in records)
            if vals:
                result["best"][k] = min(vals) if low else max(vals)
        k_last = cfg.sweep.k_last
        result["last_k_mean"] = {k: _mean(_finite(getattr(r, k) for r in records[-k_last:]))
                                 for k in FINAL_KEYS}
    return result


def _mean(vals):
    return float(np.mean(vals)) if vals else math.nan


def _median(vals):
    vals = _finite(vals)
    return float(statistics.median(vals)) if vals else math.nan


def _iqr(vals):
    vals = _finite(vals)
    if not vals:
        return math.nan
    q1, q3 = np.percentile(vals, [25, 75])
    return float(q3 - q1)


def _run_job(job):
    cfg, seed, path = job
    return run_seed(cfg, seed, Path(path))


def output_root(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.run.output_dir)


def _execute(jobs, workers: int) -> List[dict]:
    # results come back in job order regardless of completion order
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def summarize(cfg: ExperimentConfig, results: List[dict]) -> dict:
    data = build_data(cfg.data)
    adv = resolve_adv(cfg, data_std(data), data.clip)
    ok = [r for r in results if "final" in r and r["status"] == "ok"]
    summary = {
        "format": SUMMARY_FORMAT,
        "version": __version__,
        "config": resolved_dict(cfg, adv, data),
        "seeds": results,
        "n_ok": len(ok),
        "n_collapsed": sum(r["status"] != "ok" for r in results),
        "median_final": {k: _median(r["final"][k] for r in ok) for k in FINAL_KEYS},
        "iqr_final": {k: _iqr(r["final"][k] for r in ok) for k in FINAL_KEYS},
        "median_best": {k: _median(r["best"].get(k, math.nan) for r in ok) for k in LOWER_IS_BETTER},
        "median_last_k": {k: _median(r["last_k_mean"][k] for r in ok) for k in FINAL_KEYS},
        "median_step_time_s": _median(r.get("step_time_s", math.nan) for r in ok),
        "total_wall_time_s": float(sum(r["wall_time_s"] for r in results)),
    }
    return summary


def run(cfg: ExperimentConfig, out: Optional[str] = None) -> dict:
    """Train every seed in ``cfg.run.seeds``; returns and writes ``summary.json``."""
    root = output_root(cfg, out)
    if cfg.run.name:
        root = root / cfg.run.name
    jobs = [(cfg, s, str(root / f"seed_{s}")) for s in cfg.run.seeds]
    summary = summarize(cfg, _execute(jobs, cfg.run.workers))
    root.mkdir(parents=True, exist_ok=True)
    _write_json(root / "summary.json", summary)
    return summary


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


# -- sweeps --------------------------------------------------------------------------

COMPARISON_COLUMNS = (
    "value", "n_ok", "median_final_mmd2", "iqr_final_mmd2", "median_best_mmd2", "median_last_k_mmd2",
    "median_final_frechet2d", "iqr_final_frechet2d", "median_best_frechet2d", "median_last_k_frechet2d",
    "median_final_mode_coverage", "median_final_grad_l1_mean", "median_final_adv_accuracy",
    "median_final_std_accuracy", "median_final_std_accuracy_real", "median_step_time_s", "overhead",
)


def sweep(cfg: ExperimentConfig, out: Optional[str] = None) -> dict:
    """Run every axis value over the shared seed list and write a comparison table."""
    if not cfg.sweep.values:
        raise ConfigError("sweep.values must not be empty")
    root = output_root(cfg, out)
    if cfg.run.name:
        root = root / cfg.run.name
    axis = cfg.sweep.axis
    cfgs = [build_config(_sweep_override(axis, v), cfg) for v in cfg.sweep.values]
    jobs = []
    for v, c in zip(cfg.sweep.values, cfgs):
        jobs += [(c, s, str(root / f"{axis}={v}" / f"seed_{s}")) for s in c.run.seeds]
    results = _execute(jobs, cfg.run.workers)
    n = len(cfg.run.seeds)
    rows, summaries = [], []
    for i, (v, c) in enumerate(zip(cfg.sweep.values, cfgs)):
        summary = summarize(c, results[i * n:(i + 1) * n])
        _write_json(root / f"{axis}={v}" / "summary.json", summary)
        summaries.append(summary)
        rows.append(_comparison_row(v, summary))
    base = next((r for v, r in zip(cfg.sweep.values, rows) if axis == "method" and v == "none"), rows[0])
    for r in rows:
        r["overhead"] = r["median_step_time_s"] / base["median_step_time_s"] - 1.0 \
            if base["median_step_time_s"] and math.isfinite(base["median_step_time_s"]) else math.nan
    table = {"format": COMPARISON_FORMAT, "version": __version__, "axis": axis,
             "config": cfg.to_flat(), "rows": rows}
    root.mkdir(parents=True, exist_ok=True)
    _write_json(root / "comparison.json", table)
    lines = [f"# {COMPARISON_FORMAT}", f"# config {json.dumps(cfg.to_flat(), sort_keys=True)}",
             ",".join(COMPARISON_COLUMNS)]
    lines += [",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in COMPARISON_COLUMNS)
              for r in rows]
    (root / "comparison.csv").write_text("\n".join(lines) + "\n")
    return table


def _comparison_row(value: str, s: dict) -> dict:
    row = {"value": value, "n_ok": s["n_ok"]}
    for k in ("mmd2", "frechet2d"):
        row[f"median_final_{k}"] = s["median_final"][k]
        row[f"iqr_final_{k}"] = s["iqr_final"][k]
        row[f"median_best_{k}"] = s["median_best"][k]
        row[f"median_last_k_{k}"] = s["median_last_k"][k]
    for k in ("mode_coverage", "grad_l1_mean", "adv_accuracy", "std_accuracy", "std_accuracy_real"):
        row[f"median_final_{k}"] = s["median_final"][k]
    row["median_step_time_s"] = s["median_step_time_s"]
    row["overhead"] = math.nan
    return row


# -- theory and gradient checks -------------------------------------------------------------

def theory_check(cfg: ExperimentConfig, checkpoint: Optional[str] = None,
                 out: Optional[str] = None) -> dict:
    """Expansion-residual sweep and direction agreement on a saved discriminator."""
    path = Path(checkpoint or cfg.theory.checkpoint)
    if not path.is_file():
        raise ConfigError(f"checkpoint {str(path)!r} does not exist")
    params, spec, meta = nn.load_params(path)
    if spec is None or spec.role != "discriminator":
        raise ConfigError(f"{path} does not hold a discriminator")
    data = build_data(cfg.data)
    x = data.heldout[: cfg.theory.n_points]
    t = cfg.theory
    report = {"format": EXPANSION_FORMAT, "version": __version__, "checkpoint": str(path),
              "config": cfg.to_flat(), "sweeps": [], "directions": []}
    for p_raw in t.p:
        p = math.inf if p_raw == "inf" else float(p_raw)
        rep = th.expansion_residual_sweep(spec, params, x, p, t.eps, t.grid_n)
        d = rep.to_json_dict()
        d["quadratic_window"] = all(r is not None and 2.5 <= r <= 6.0 for r in rep.residual_ratio)
        report["sweeps"].append(d)
        agree = th.direction_agreement(spec, params, x, t.direction_eps, p, t.grid_n)
        scores = np.asarray(agree["scores"])
        good = scores >= 0.95 if p == 2 else scores == 1.0
        report["directions"].append({"p": p_raw, "epsilon": t.direction_eps, "skipped": agree["skipped"],
                                     "n_tested": int(scores.size),
                                     "agree_fraction": float(good.mean()) if scores.size else math.nan})
    dest = output_root(cfg, out)
    dest.mkdir(parents=True, exist_ok=True)
    _write_json(dest / "expansion.json", report)
    return report


def gradcheck_report(seed: int = 0, sabotage: bool = False, cfg: Optional[ExperimentConfig] = None) -> dict:
    """Finite-difference check of the configured G and D architectures."""
    from .gradcheck import grad_check

    cfg = cfg or ExperimentConfig()
    dim = 2 if cfg.data.kind != "idx" else int(np.prod(cfg.data.image_hw))
    g = nn.generator_spec(cfg.train.latent_dim, dim, cfg.train.g_hidden)
    d = nn.discriminator_spec(dim, cfg.train.d_hidden, cfg.train.leaky_slope)
    out = {"seed": seed, "sabotage": sabotage, "nets": {}}
    for name, spec in (("generator", g), ("discriminator", d)):
        rep = grad_check(spec, seed=seed, sabotage=sabotage)
        out["nets"][name] = {"layer_max_rel_error": [max(rep.block_errors[i:i + 2])
                                                     for i in range(0, len(rep.block_errors), 2)],
                             **rep.to_dict()}
    out["passed"] = all(v["passed"] for v in out["nets"].values())
    return out


# -- reports --------------------------------------------------------------------------

def report(path: str) -> str:
    """Human-readable table from a run or sweep directory."""
    root = Path(path)
    if (root / "comparison.json").is_file():
        table = json.loads((root / "comparison.json").read_text())
        cols = ["value", "median_final_mmd2", "median_final_frechet2d", "median_final_mode_coverage",
                "median_final_grad_l1_mean", "median_final_adv_accuracy", "overhead"]
        lines = [f"sweep over {table['axis']}", "  ".join(f"{c:>14s}" for c in ["value", "mmd2", "frechet",
                                                                          "coverage", "grad_l1", "adv_acc",
                                                                          "overhead"])]
        for r in table["rows"]:
            lines.append("  ".join(f"{_cell(r[c]):>14s}" for c in cols))
        return "\n".join(lines)
    if (root / "summary.json").is_file():
        s = json.loads((root / "summary.json").read_text())
        lines = [f"{s['n_ok']} ok, {s['n_collapsed']} collapsed"]
        for k in FINAL_KEYS:
            lines.append(f"  {k:18s} median {_cell(s['median_final'][k]):>12s}  "
                         f"iqr {_cell(s['iqr_final'][k]):>12s}")
        lines.append(f"  step time (s)      median {_cell(s['median_step_time_s']):>12s}")
        return "\n".join(lines)
    if (root / "expansion.json").is_file():
        e = json.loads((root / "expansion.json").read_text())
        lines = []
        for sw, dr in zip(e["sweeps"], e["directions"]):
            ratios = ", ".join(_cell(r) for r in sw["residual_ratio"])
            lines.append(f"p={sw['p']}: residual ratios [{ratios}], window "
                         f"{'ok' if sw['quadratic_window'] else 'violated'}, "
                         f"direction agreement {_cell(dr['agree_fraction'])}")
        return "\n".join(lines)
    raise FileNotFoundError(f"{root} holds no summary.json, comparison.json or expansion.json")


def _cell(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)

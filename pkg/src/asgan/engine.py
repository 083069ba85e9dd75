"""AS-GAN training loop.

One iteration runs, in order: sample z, sample x, a clean discriminator
ascent step, crafting of perturbed reals from that step's input gradient, a
second discriminator ascent step on the perturbed reals, and a generator
step. With ``method="none"`` the crafting and second step are skipped and
the loop is a vanilla GAN.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import metrics as M
from . import nn
from . import tensor as T
from .adversarial import AdvConfig, craft_fgsm, craft_gaussian, craft_pgd, epsilon_at
from .datasets import TrainData

GENERATOR_LOSSES = ("saturating", "nonsaturating")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    latent_dim: int = 16
    lr_d: float = 2e-4
    lr_g: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps_hat: float = 1e-8
    total_iters: int = 6000
    generator_loss: str = "nonsaturating"
    d_steps_per_g: int = 1
    seed: int = 0
    g_hidden: Tuple[int, ...] = (128, 128)
    d_hidden: Tuple[int, ...] = (128, 128)
    init: str = "xavier"
    leaky_slope: float = 0.2
    fresh_z_adv: bool = False
    # ablation: a second clean D step on the same batch instead of crafting
    double_clean_step: bool = False
    record_trace: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not (self.lr_d > 0 and self.lr_g > 0):
            raise ValueError("learning rates must be > 0")
        if self.generator_loss not in GENERATOR_LOSSES:
            raise ValueError(f"generator_loss must be one of {GENERATOR_LOSSES}")
        if self.d_steps_per_g < 1 or self.total_iters < 1 or self.latent_dim < 1:
            raise ValueError("d_steps_per_g, total_iters and latent_dim must be >= 1")


TTUR_LR_D = 5e-5


@dataclass(frozen=True)
class EvalConfig:
    cadence: int = 200
    n_eval: int = 512
    # attack strength for robust accuracy; None -> the training epsilon
    epsilon: Optional[float] = None
    # real points for the discriminator diagnostics: "train" pool or "heldout"
    diag_source: str = "train"
    seed_offset: int = 7919

    def __post_init__(self):
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        if self.diag_source not in ("train", "heldout"):
            raise ValueError("diag_source must be 'train' or 'heldout'")


@dataclass
class TrainState:
    iteration: int
    d_spec: nn.NetworkSpec
    g_spec: nn.NetworkSpec
    d_params: nn.ParamSet
    g_params: nn.ParamSet
    d_opt: nn.AdamState
    g_opt: nn.AdamState
    rng_data: np.random.Generator
    rng_z: np.random.Generator
    rng_adv: np.random.Generator
    timings: Dict[str, float] = field(default_factory=lambda: dict(clean=0.0, craft=0.0, adv=0.0, gen=0.0, total=0.0))
    trace: List[str] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def log(self, op: str, cfg: TrainConfig) -> None:
        if cfg.record_trace:
            self.trace.append(op)


class TrainingCollapse(RuntimeError):
    """Raised when the loss becomes non-finite; carries the records so far."""

    def __init__(self, message: str, iteration: int, records: List[M.MetricsRecord]):
        super().__init__(message)
        self.iteration = iteration
        self.records = records


def init_state(cfg: TrainConfig, data_dim: int) -> TrainState:
    ss = np.random.SeedSequence(cfg.seed)
    s_d, s_g, s_data, s_z, s_adv = ss.spawn(5)
    g_spec = nn.generator_spec(cfg.latent_dim, data_dim, cfg.g_hidden)
    d_spec = nn.discriminator_spec(data_dim, cfg.d_hidden, cfg.leaky_slope)
    d_params = nn.init_params(d_spec, cfg.init, s_d)
    g_params = nn.init_params(g_spec, cfg.init, s_g)
    return TrainState(
        iteration=0, d_spec=d_spec, g_spec=g_spec, d_params=d_params, g_params=g_params,
        d_opt=nn.AdamState.for_params(d_params, cfg.lr_d, cfg.beta1, cfg.beta2, cfg.eps_hat),
        g_opt=nn.AdamState.for_params(g_params, cfg.lr_g, cfg.beta1, cfg.beta2, cfg.eps_hat),
        rng_data=np.random.default_rng(s_data), rng_z=np.random.default_rng(s_z),
        rng_adv=np.random.default_rng(s_adv))


# -- objective and steps ---------------------------------------------------------------

def objective_from_logits(real_logits: T.Tensor, fake_logits: T.Tensor) -> T.Tensor:
    """``mean log D(x) + mean log(1 - D(G(z)))`` evaluated from logits."""
    return T.neg(T.add(T.bce_from_logits(real_logits, 1.0), T.bce_from_logits(fake_logits, 0.0)))


def minibatch_objective(d_spec, d_weights, g_spec, g_weights, x, z) -> T.Tensor:
    """Mini-batch GAN value ``V_m``; traced through whichever inputs require grad."""
    x, z = T.as_tensor(x), T.as_tensor(z)
    if x.shape[0] != z.shape[0]:
        raise ValueError(f"batch sizes differ: {x.shape[0]} real vs {z.shape[0]} latent")
    fake = nn.forward(g_spec, g_weights, z)
    return objective_from_logits(nn.forward(d_spec, d_weights, x), nn.forward(d_spec, d_weights, fake))


@dataclass
class DStepResult:
    value: float
    grad_x: np.ndarray
    grad_fake: Optional[np.ndarray]
    mean_d_real: float


def _d_update(state: TrainState, x: np.ndarray, fake: np.ndarray,
              want_fake_grad: bool = False) -> DStepResult:
    theta = state.d_params.as_tensors(True)
    xt = T.Tensor(x, requires_grad=True)
    ft = T.Tensor(fake, requires_grad=want_fake_grad)
    with T.Tape() as tape:
        real_logits = nn.forward(state.d_spec, theta, xt)
        v = objective_from_logits(real_logits, nn.forward(state.d_spec, theta, ft))
    tape.backward(v)
    nn.adam_step(state.d_opt, state.d_params, [t.grad for t in theta], "ascent")
    return DStepResult(v.item(), xt.grad, ft.grad,
                       float(T._sigmoid(real_logits.values).mean()))


def generate(state: TrainState, z: np.ndarray) -> np.ndarray:
    return nn.predict(state.g_spec, state.g_params, z)


def discriminator_step(state: TrainState, x: np.ndarray, z: np.ndarray,
                       fake: Optional[np.ndarray] = None, want_fake_grad: bool = False) -> DStepResult:
    """One Adam ascent step on V_m; returns the value and the input gradient
    at the pre-update parameters."""
    if len(x) != len(z):
        raise ValueError(f"batch sizes differ: {len(x)} real vs {len(z)} latent")
    if fake is None:
        fake = generate(state, z)
    return _d_update(state, x, fake, want_fake_grad)


def grad_x_objective(state: TrainState, x: np.ndarray) -> np.ndarray:
    """Gradient of V_m with respect to the real batch at the current parameters.

    Only the real term of V_m depends on x.
    """
    xt = T.Tensor(x, requires_grad=True)
    with T.Tape() as tape:
        v = T.neg(T.bce_from_logits(nn.forward(state.d_spec, state.d_params, xt), 1.0))
    tape.backward(v)
    return xt.grad


def craft(state: TrainState, adv: AdvConfig, x: np.ndarray, grad_x: np.ndarray,
          epsilon: float) -> np.ndarray:
    lo, hi = adv.clip_lo, adv.clip_hi
    if adv.method == "fgsm":
        return craft_fgsm(x, grad_x, epsilon, lo, hi)
    if adv.method == "gaussian":
        return craft_gaussian(x, epsilon, state.rng_adv, lo, hi)
    if adv.method == "pgd":
        step = adv.pgd_step_size if adv.pgd_step_size is not None else 2.0 * epsilon / adv.pgd_steps
        # re-evaluated at the post-update parameters, unlike FGSM
        return craft_pgd(x, lambda xk: grad_x_objective(state, xk), epsilon, adv.pgd_steps,
                         step, adv.pgd_random_init, state.rng_adv, lo, hi)
    raise ValueError(f"no crafting for method {adv.method!r}")


def adversarial_discriminator_step(state: TrainState, x_hat: np.ndarray, fake: np.ndarray) -> DStepResult:
    """Adam ascent step on ``V_m(theta, phi, x_hat, z)``."""
    return _d_update(state, x_hat, fake)


def generator_step(state: TrainState, z: np.ndarray, cfg: TrainConfig) -> float:
    """One Adam descent step for the generator; returns its loss."""
    phi = state.g_params.as_tensors(True)
    with T.Tape() as tape:
        logits = nn.forward(state.d_spec, state.d_params, nn.forward(state.g_spec, phi, z))
        if cfg.generator_loss == "nonsaturating":
            loss = T.bce_from_logits(logits, 1.0)  # -mean log D(G(z))
        else:
            loss = T.neg(T.bce_from_logits(logits, 0.0))  # mean log(1 - D(G(z)))
    tape.backward(loss)
    nn.adam_step(state.g_opt, state.g_params, [t.grad for t in phi], "descent")
    return loss.item()


def sample_generator(state: TrainState, n: int, seed: int = 0) -> np.ndarray:
    """``G(z)`` for ``n`` draws of ``z ~ N(0, I)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.random.default_rng(seed).standard_normal((n, state.g_spec.in_dim))
    return generate(state, z)


# -- evaluation ---------------------------------------------------------------------------

def evaluate(state: TrainState, data: TrainData, eval_z: np.ndarray, eval_eps: float,
             diag_real: Optional[np.ndarray] = None) -> dict:
    real = data.heldout[: len(eval_z)]
    diag = real if diag_real is None else diag_real
    fake = generate(state, eval_z)
    out = {}
    if data.dim == 2:
        real_o, fake_o = real * data.scale, fake * data.scale
        out["frechet2d"] = M.frechet_gaussian_2d(real_o, fake_o)
    else:
        real_o, fake_o = real, fake
        out["frechet2d"] = M.frechet_diagonal(real, fake)
    out["mmd2"] = M.mmd2_rbf(real_o, fake_o)
    if data.mixture is not None and data.mixture.centers() is not None:
        mm = M.mode_metrics(fake_o, data.mixture)
        out["mode_coverage"] = mm["coverage"]
        out["hq_fraction"] = mm["hq_fraction"]
    out["grad_l1_mean"] = M.grad_stats(state.d_spec, state.d_params, diag)["l1_mean"]
    ra = M.robust_accuracy(state.d_spec, state.d_params, diag, fake, eval_eps, data.clip)
    out.update(adv_accuracy=ra["adv_acc"], std_accuracy=ra["std_acc"],
               std_accuracy_real=ra["std_acc_real"], mean_D_real=ra["mean_d_real"],
               mean_D_adv=ra["mean_d_adv"])
    return out


Callback = Callable[[TrainState, M.MetricsRecord], None]


def train(cfg: TrainConfig, adv: AdvConfig, data: TrainData,
          eval_cfg: EvalConfig = EvalConfig(),
          callbacks: Sequence[Callback] = ()) -> Tuple[TrainState, List[M.MetricsRecord]]:
    """Run the full loop and return the final state and the metric records.

    Raises:
        TrainingCollapse: if a loss becomes non-finite.
    """
    adv.check_horizon(cfg.total_iters)
    if adv.method != "none" and cfg.double_clean_step:
        raise ValueError("double_clean_step is an alternative to crafting, not an addition")
    state = init_state(cfg, data.dim)
    m = cfg.batch_size
    eval_rng = np.random.default_rng([cfg.seed, eval_cfg.seed_offset])
    eval_z = eval_rng.standard_normal((eval_cfg.n_eval, cfg.latent_dim))
    eval_eps = eval_cfg.epsilon if eval_cfg.epsilon is not None else adv.epsilon
    if eval_cfg.diag_source == "train":
        diag_real = data.points[eval_rng.integers(0, len(data.points), eval_cfg.n_eval)]
    else:
        diag_real = data.heldout[: eval_cfg.n_eval]
    records: List[M.MetricsRecord] = []
    acc = dict(n=0, v=0.0, d=0.0, g=0.0)
    low_cover = 0
    tm = state.timings
    clock = time.perf_counter
    loop_start = clock()

    for it in range(cfg.total_iters):
        state.iteration = it
        for _ in range(cfg.d_steps_per_g):
            z = state.rng_z.standard_normal((m, cfg.latent_dim))
            state.log("sample_z", cfg)
            x = data.batch(state.rng_data, m)
            state.log("sample_x", cfg)

            t0 = clock()
            fake = generate(state, z)
            res = _d_update(state, x, fake, want_fake_grad=adv.adv_on_fake)
            state.log("d_step", cfg)
            t1 = clock()
            tm["clean"] += t1 - t0
            d_loss = -res.value

            if adv.method != "none":
                eps = epsilon_at(it, adv)
                x_hat = craft(state, adv, x, res.grad_x, eps)
                state.log("craft", cfg)
                t2 = clock()
                tm["craft"] += t2 - t1
                fake_adv = fake
                if cfg.fresh_z_adv:
                    fake_adv = generate(state, state.rng_z.standard_normal((m, cfg.latent_dim)))
                adversarial_discriminator_step(state, x_hat, fake_adv)
                state.log("adv_d_step", cfg)
                if adv.adv_on_fake:
                    fake_hat = craft_fgsm(fake, res.grad_fake, eps, adv.clip_lo, adv.clip_hi)
                    _d_update(state, x, fake_hat)
                    state.log("adv_fake_d_step", cfg)
                tm["adv"] += clock() - t2
            elif cfg.double_clean_step:
                t2 = clock()
                _d_update(state, x, fake)
                state.log("d_step", cfg)
                tm["adv"] += clock() - t2

        t3 = clock()
        g_loss = generator_step(state, z, cfg)
        state.log("g_step", cfg)
        tm["gen"] += clock() - t3

        if not (math.isfinite(res.value) and math.isfinite(g_loss)):
            rec = M.MetricsRecord(iter=it + 1, V_m=res.value, D_loss=d_loss, G_loss=g_loss,
                                  flags="nonfinite_loss")
            records.append(rec)
            raise TrainingCollapse(f"non-finite loss at iteration {it + 1}: "
                                   f"V_m={res.value}, G_loss={g_loss}", it + 1, records)
        acc["n"] += 1
        acc["v"] += res.value
        acc["d"] += d_loss
        acc["g"] += g_loss

        if (it + 1) % eval_cfg.cadence == 0 or it + 1 == cfg.total_iters:
            tm["total"] = clock() - loop_start
            ev = evaluate(state, data, eval_z, eval_eps, diag_real)
            n = acc["n"]
            rec = M.MetricsRecord(
                iter=it + 1, V_m=acc["v"] / n, D_loss=acc["d"] / n, G_loss=acc["g"] / n,
                wall_ms_clean=1e3 * tm["clean"], wall_ms_craft=1e3 * tm["craft"],
                wall_ms_adv=1e3 * tm["adv"], wall_ms_gen=1e3 * tm["gen"], **ev)
            if "mode_coverage" in ev:
                low_cover = low_cover + 1 if ev["mode_coverage"] < 2 else 0
                if low_cover >= 3:
                    rec.flags = "mode_collapse_suspected"
                    if rec.flags not in state.flags:
                        state.flags.append(rec.flags)
            records.append(rec)
            acc = dict(n=0, v=0.0, d=0.0, g=0.0)
            for cb in callbacks:
                cb(state, rec)
            # evaluation time is kept out of the step timings
            loop_start = clock() - tm["total"]
    state.iteration = cfg.total_iters
    return state, records


def overhead_fraction(as_timings: Dict[str, float], base_timings: Dict[str, float]) -> float:
    """Relative extra step time of a run over a baseline run."""
    step = lambda t: t["clean"] + t["craft"] + t["adv"] + t["gen"]
    return step(as_timings) / step(base_timings) - 1.0

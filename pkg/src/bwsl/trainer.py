"""Sharpe-ratio policy-gradient training.

A trajectory is T consecutive holding periods: at each period the policy
scores the eligible universe, the generator picks the legs, and the
period return is realized. The trajectory reward is the Sharpe ratio of
its T returns; the market's Sharpe over the same window is subtracted as
a threshold, so ascent only reinforces trajectories that beat an
equal-weight buy-and-hold.

The surrogate differentiated on the tape is sum_t sum_{supported i}
log b_c(i): leg selection is treated as non-differentiable, gradients
flow through the within-leg softmaxes, and the advantage (H_pi - H0)
weights each trajectory's gradient as a constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import DataError, NonFiniteError, TrainingDivergedError, ZeroVolatilityError
from .features import PreparedPanel
from .market import MarketPanel, format_month, substream
from .metrics import sharpe
from .policy import PolicyParams, WinnerScores, policy_forward
from .portfolio import (
    LONG_SHORT,
    MODES,
    PortfolioPair,
    ReturnsSlice,
    generate,
    realize_return,
    select_legs,
)


@dataclass(frozen=True)
class TrainConfig:
    """Trajectory and optimization settings."""

    t: int = 12
    n: int = 16
    epochs: int = 200
    eta: float = 1e-3
    clip: float = 5.0
    k: int = 12
    g: int = 0  # 0 = quarter of the eligible universe, per period
    mode: str = LONG_SHORT
    theta: float = 0.0
    tc: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.t < 2:
            raise DataError("train: t must be at least 2")
        if self.n < 1:
            raise DataError("train: n must be at least 1")
        # eta == 0 is allowed as an explicit no-op update
        if self.eta < 0:
            raise DataError("train: eta must be non-negative")
        if self.mode not in MODES:
            raise DataError(f"train: unknown mode {self.mode!r}")


@dataclass
class Trajectory:
    """One simulated T-period investment with its differentiable surrogate."""

    t0: int
    pairs: list[PortfolioPair]
    returns: np.ndarray
    tape: Tape
    logprob: Tensor
    sharpe: float
    score_dev: float  # mean |score - 1/2| across periods, degeneracy probe


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_sharpe: float
    mean_advantage: float
    grad_norm: float


@dataclass
class TrainResult:
    params: PolicyParams
    best_params: PolicyParams
    best_epoch: int
    log: list[EpochStats] = field(default_factory=list)


def leg_size(universe_size: int, g: int) -> int:
    """Configured leg size, or a quarter of the universe when g == 0."""
    if g > 0:
        return int(g)
    return max(1, universe_size // 4)


def _prepared(panel, k: int) -> PreparedPanel:
    if isinstance(panel, PreparedPanel):
        if panel.k != k:
            raise DataError(f"prepared panel has k={panel.k}, config wants k={k}")
        return panel
    return PreparedPanel(panel, k)


def _rollout(prep: PreparedPanel, t0: int, params: PolicyParams, cfg: TrainConfig):
    """T periods of score -> select -> realize under the caller's tape."""
    returns = np.zeros(cfg.t)
    pairs: list[PortfolioPair] = []
    score_dev = 0.0
    logprob = None
    for step in range(cfg.t):
        t = t0 + step
        ws = prep.windows(t)
        if ws is None:
            raise DataError(f"fewer than 2 eligible stocks at {format_month(t)}")
        scores = policy_forward(ws.features, ws.ranks, params)
        g = leg_size(len(ws), cfg.g)
        long_idx, short_idx = select_legs(scores.data, ws.stock_ids, g, cfg.mode)
        term = _leg_logprob(scores, long_idx, short_idx)
        logprob = term if logprob is None else logprob + term
        pair = generate(WinnerScores(ws.stock_ids, scores.data.copy()), g, cfg.mode)
        z, _ = prep.forward_ratios(t, ws.stock_ids)
        returns[step] = realize_return(pair, ReturnsSlice(ws.stock_ids, z))
        pairs.append(pair)
        score_dev += float(np.mean(np.abs(scores.data - 0.5)))
    return logprob, returns, pairs, score_dev / cfg.t


def trajectory_logprob(panel, t0, params: PolicyParams, cfg: TrainConfig) -> Tensor:
    """The trainer surrogate sum_t sum_i log b_c as a tape expression.

    Runs under whatever tape is currently active (none records nothing),
    which makes the surrogate directly checkable by finite differences.
    """
    prep = _prepared(panel, cfg.k)
    t0 = prep.panel.index_of(t0) + prep.panel.start
    logprob, _, _, _ = _rollout(prep, t0, params, cfg)
    return logprob


def simulate_trajectory(panel, t0, params: PolicyParams, cfg: TrainConfig) -> Trajectory:
    """Roll the policy forward for cfg.t periods starting at t0.

    Deterministic given its inputs; the returned tape differentiates the
    trajectory's log-probability surrogate with respect to the parameters.
    """
    prep = _prepared(panel, cfg.k)
    t0 = prep.panel.index_of(t0) + prep.panel.start
    tape = Tape()
    with tape:
        logprob, returns, pairs, score_dev = _rollout(prep, t0, params, cfg)
    tape.root = logprob
    h_pi = sharpe(returns, cfg.theta, cfg.tc)
    return Trajectory(
        t0=t0,
        pairs=pairs,
        returns=returns,
        tape=tape,
        logprob=logprob,
        sharpe=h_pi,
        score_dev=score_dev,
    )


def _leg_logprob(scores: Tensor, long_idx, short_idx) -> Tensor:
    """sum over supported stocks of log b_c, built from tape primitives."""
    long_term = ad.tsum(ad.log(ad.softmax(ad.take(scores, np.asarray(long_idx)))))
    if not short_idx:
        return long_term
    short_scores = ad.take(scores, np.asarray(short_idx))
    short_term = ad.tsum(ad.log(ad.softmax(1.0 - short_scores)))
    return long_term + short_term


def market_threshold(panel, t0, t: int, theta: float, tc: float, k: int = 12):
    """Sharpe of the equal-weight buy-and-hold over the same T periods.

    Returns (h0, degenerate): when the market return series has zero
    volatility, h0 is 0.0 and the flag is set.
    """
    prep = _prepared(panel, k)
    t0 = prep.panel.index_of(t0) + prep.panel.start
    returns = np.zeros(t)
    for step in range(t):
        at = t0 + step
        universe = prep.universe(at)
        if not universe:
            raise DataError(f"empty universe at {format_month(at)}")
        ids = tuple(prep.panel.stock_ids[i] for i in universe)
        z, _ = prep.forward_ratios(at, ids)
        returns[step] = float(np.mean(z)) - 1.0
    try:
        return sharpe(returns, theta, tc), False
    except ZeroVolatilityError:
        return 0.0, True


def _accumulate(acc: dict, traj: Trajectory, advantage: float, params: PolicyParams, index: int):
    if advantage == 0.0:
        return
    grads = ad.backward(traj.tape)
    for name, tensor in params.tensors().items():
        g = grads[tensor]
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"trajectory {index}: non-finite gradient for {name}")
        acc[name] += advantage * g


def batch_gradient(
    trajectories: list[Trajectory],
    thresholds: list[float],
    params: PolicyParams,
) -> dict[str, np.ndarray]:
    """(1/N) sum_n (H_n - H0_n) * grad of the trajectory surrogate."""
    if len(trajectories) != len(thresholds):
        raise DataError("batch_gradient: one threshold per trajectory required")
    for i, traj in enumerate(trajectories):
        if not np.isfinite(traj.sharpe):
            raise NonFiniteError(f"trajectory {i}: non-finite sharpe")
    acc = {name: np.zeros(t.shape) for name, t in params.tensors().items()}
    for i, (traj, h0) in enumerate(zip(trajectories, thresholds)):
        _accumulate(acc, traj, traj.sharpe - float(h0), params, i)
    n = len(trajectories)
    return {name: g / n for name, g in acc.items()}


def grad_global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def train(panel, cfg: TrainConfig, params: PolicyParams | None = None) -> TrainResult:
    """Gradient-ascend the Sharpe objective over sampled trajectories.

    Start times are sampled uniformly with replacement from every t0 whose
    T periods all trade. Updates use global-norm gradient clipping. The
    epoch with the highest mean trajectory Sharpe is kept as best_params.
    Aborts when the policy degenerates: scores pinned to 1/2 with zero
    advantage for 10 straight epochs.
    """
    prep = _prepared(panel, cfg.k)
    if params is None:
        params = PolicyParams.init(substream(cfg.seed, "init"))
    tradable = prep.tradable_times
    starts = [t0 for t0 in tradable if t0 + cfg.t - 1 <= tradable[-1]] if tradable else []
    if not starts:
        raise DataError("train: panel too short for a single trajectory")
    sampler = substream(cfg.seed, "sampling")
    h0_cache: dict[int, float] = {}
    log: list[EpochStats] = []
    best_params = params.copy()
    best_epoch = 0
    best_mean = -np.inf
    degenerate_streak = 0
    for epoch in range(1, cfg.epochs + 1):
        picks = sampler.integers(0, len(starts), size=cfg.n)
        acc = {name: np.zeros(t.shape) for name, t in params.tensors().items()}
        sharpes = np.zeros(cfg.n)
        advantages = np.zeros(cfg.n)
        score_dev = 0.0
        for i, pick in enumerate(picks):
            t0 = starts[int(pick)]
            traj = simulate_trajectory(prep, t0, params, cfg)
            if t0 not in h0_cache:
                h0_cache[t0], _ = market_threshold(
                    prep, t0, cfg.t, cfg.theta, cfg.tc, cfg.k
                )
            advantage = traj.sharpe - h0_cache[t0]
            _accumulate(acc, traj, advantage, params, i)
            sharpes[i] = traj.sharpe
            advantages[i] = advantage
            score_dev += traj.score_dev
        grads = {name: g / cfg.n for name, g in acc.items()}
        norm = grad_global_norm(grads)
        if norm > 0.0 and cfg.eta > 0.0:
            scale = cfg.eta * (min(1.0, cfg.clip / norm) if cfg.clip > 0 else 1.0)
            params.apply_update({name: scale * g for name, g in grads.items()})
        mean_sharpe = float(sharpes.mean())
        mean_advantage = float(advantages.mean())
        log.append(EpochStats(epoch, mean_sharpe, mean_advantage, norm))
        if mean_sharpe > best_mean:
            best_mean = mean_sharpe
            best_params = params.copy()
            best_epoch = epoch
        if score_dev / cfg.n < 1e-6 and mean_advantage == 0.0:
            degenerate_streak += 1
            if degenerate_streak >= 10:
                raise TrainingDivergedError(
                    f"policy degenerate for {degenerate_streak} epochs at epoch {epoch}"
                )
        else:
            degenerate_streak = 0
    return TrainResult(params=params, best_params=best_params, best_epoch=best_epoch, log=log)


def learning_log_csv(log: list[EpochStats]) -> str:
    """CSV rows ``epoch,mean_H,mean_advantage,grad_norm``."""
    lines = ["epoch,mean_H,mean_advantage,grad_norm"]
    for row in log:
        lines.append(
            f"{row.epoch},{row.mean_sharpe!r},{row.mean_advantage!r},{row.grad_norm!r}"
        )
    return "\n".join(lines) + "\n"

"""Explain winner scores by differentiating them against input features.

For stock i at one decision time, the sensitivity is the gradient of its
winner score with respect to every entry of its own standardized window,
holding all other stocks' windows fixed (cross-stock terms that exist
through the cross-asset attention are excluded from the report).
Averaging those gradients over every (period, eligible stock) sample
gives the dataset-level influence of each feature at each look-back lag.

Lag orientation: lag 1 is the most recent window row (the period ending
at the decision time), lag K the oldest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import DataError
from .features import FEATURE_NAMES, PreparedPanel, WindowSet
from .market import format_month
from .policy import PolicyParams, policy_forward


def input_sensitivity(
    windows, ranks, params: PolicyParams, stock_index: int
) -> np.ndarray:
    """(K, F) gradient of stock ``stock_index``'s score w.r.t. its window.

    ``windows`` is the (I, K, F) block of all eligible stocks; scores are
    computed jointly (the attention couples stocks) but only the stock's
    own window block of the gradient is returned.
    """
    x = Tensor(np.asarray(windows, dtype=float), requires_grad=True)
    if x.ndim != 3:
        raise DataError(f"windows must be (I, K, F), got {x.shape}")
    i = int(stock_index)
    if not 0 <= i < x.shape[0]:
        raise DataError(f"stock index {i} out of range for {x.shape[0]} stocks")
    tape = Tape()
    with tape:
        scores = policy_forward(x, np.asarray(ranks), params)
        root = scores[i]
    tape.root = root
    return ad.backward(tape)[x][i]


def _all_sensitivities(window_set: WindowSet, params: PolicyParams) -> np.ndarray:
    """(I, K, F) own-window gradients for every stock, one forward pass."""
    x = Tensor(window_set.features, requires_grad=True)
    tape = Tape()
    with tape:
        scores = policy_forward(x, window_set.ranks, params)
        roots = [scores[i] for i in range(x.shape[0])]
    out = np.zeros(x.shape)
    for i, root in enumerate(roots):
        out[i] = tape.gradients(root)[x][i]
    return out


@dataclass(frozen=True)
class SensitivityReport:
    """Averaged feature-by-lag sensitivities of the winner score."""

    delta_bar: np.ndarray  # (F, K); column L-1 is lag L
    feature_means: np.ndarray  # (F,) average over lags
    samples: int
    k: int
    features: tuple[str, ...] = FEATURE_NAMES

    def to_csv(self) -> str:
        header = ["feature"] + [f"lag_{l}" for l in range(1, self.k + 1)] + ["mean"]
        lines = [",".join(header)]
        for f, name in enumerate(self.features):
            cells = [name]
            cells += [repr(float(v)) for v in self.delta_bar[f]]
            cells.append(repr(float(self.feature_means[f])))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def average_sensitivity(
    panel, params: PolicyParams, start=None, end=None, k: int = 12
) -> SensitivityReport:
    """Mean own-window sensitivity over all (decision time, stock) samples.

    ``start``/``end`` bound the decision times (inclusive); by default every
    time with a full look-back window on the panel is used. Windows (not
    realized returns) are all that is needed, so the panel's last month is
    a valid decision time.
    """
    prep = panel if isinstance(panel, PreparedPanel) else PreparedPanel(panel, k)
    if prep.k != k:
        raise DataError(f"prepared panel has k={prep.k}, requested k={k}")
    times = prep.decision_times
    if start is not None:
        s = prep.panel.index_of(start) + prep.panel.start
        times = [t for t in times if t >= s]
    if end is not None:
        e = prep.panel.index_of(end) + prep.panel.start
        times = [t for t in times if t <= e]
    acc = np.zeros((k, len(FEATURE_NAMES)))
    samples = 0
    for t in times:
        ws = prep.windows(t)
        if ws is None:
            continue
        sens = _all_sensitivities(ws, params)
        acc += sens.sum(axis=0)
        samples += len(ws)
    if samples == 0:
        raise DataError(
            "no valid decision time in range"
            + (
                f" [{format_month(s)}, {format_month(e)}]"
                if start is not None and end is not None
                else ""
            )
        )
    mean_kf = acc / samples
    delta_bar = mean_kf[::-1].T  # flip steps so column 0 is lag 1 (most recent)
    return SensitivityReport(
        delta_bar=delta_bar,
        feature_means=delta_bar.mean(axis=1),
        samples=samples,
        k=k,
    )

"""
Multiplier block bootstrap for the ratio estimators.

The series is cut into disjoint blocks of ``block_length`` time points (a
partial trailing block is dropped). Windows fully inside a block are counted
for that block. A replicate reweights block j by (1 + xi_j):

    sum_j (1 + xi_j) N_j(label) / sum_j (1 + xi_j) D_j

All multipliers are drawn up front from the seed, so the replicate stream, and
hence the intervals, are bit-reproducible and independent of the thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from app_logging import get_logger
from config import settings
from errors import DegenerateBootstrapError, InvalidArgumentError, ZeroDenominatorError
from models.bootstrap import BlockCounts, BootstrapConfig, BootstrapSummary, LabelInterval
from models.cluster import LabeledWindows, PatternDistribution

logger = get_logger(__name__)

# Degenerate-replicate fraction above which a warning is logged
DEGENERATE_WARN_FRACTION = 0.05

# Replicates evaluated per work item
REPLICATE_CHUNK = 256


def block_counts(windows: LabeledWindows, config: BootstrapConfig) -> BlockCounts:
    """
    Per-block numerator counts (per label) and denominator counts.

    Raises:
        InvalidArgumentError: If the block is shorter than the window span or the
            series holds fewer than two blocks
    """
    length = config.block_length
    if length < windows.span:
        raise InvalidArgumentError(
            f"block length {length} shorter than the window span {windows.span}"
        )
    n_blocks = windows.n_times // length
    if n_blocks < 2:
        raise InvalidArgumentError(
            f"series of {windows.n_times} time points is shorter than 2 blocks of {length}"
        )

    block_of_first = windows.first // length
    inside = (block_of_first == windows.last // length) & (block_of_first < n_blocks)
    blocks = block_of_first[inside]
    labels = windows.label_index[inside]

    numerators = np.zeros((n_blocks, len(windows.labels)), dtype=np.int64)
    np.add.at(numerators, (blocks, labels), 1)
    denominators = np.bincount(blocks, minlength=n_blocks).astype(np.int64)

    logger.debug(
        "Block counts computed",
        family=windows.family,
        n_blocks=n_blocks,
        windows_total=windows.n_windows,
        windows_in_blocks=int(inside.sum()),
    )
    return BlockCounts(
        labels=windows.labels,
        numerators=numerators,
        denominators=denominators,
        block_length=length,
    )


def draw_multipliers(config: BootstrapConfig, n_blocks: int) -> np.ndarray:
    """(replicates, n_blocks) matrix of i.i.d. mean-0, variance-1 multipliers."""
    rng = np.random.default_rng(config.rng_seed)
    shape = (config.replicates, n_blocks)
    if config.multiplier_law == "gaussian":
        return rng.standard_normal(shape)
    return rng.choice(np.array([-1.0, 1.0]), size=shape)


def _replicate_block(weights: np.ndarray, bc: BlockCounts) -> np.ndarray:
    # Explicit sums over blocks keep every replicate independent of chunking
    num = (weights[:, :, None] * bc.numerators[None, :, :]).sum(axis=1)
    den = (weights * bc.denominators[None, :]).sum(axis=1)
    return np.column_stack([num, den])


def bootstrap_ci(
    bc: BlockCounts,
    config: BootstrapConfig,
    multipliers: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> BootstrapSummary:
    """
    Percentile intervals of the multiplier bootstrap replicates, per label.

    Args:
        bc: Block counts of one estimator family
        config: Bootstrap settings
        multipliers: Optional explicit (replicates, n_blocks) multiplier matrix
        threads: Worker threads for evaluating replicates

    Returns:
        Per-label point estimate sum N_j / sum D_j with its interval

    Raises:
        ZeroDenominatorError: If no window falls inside a block
        DegenerateBootstrapError: If every replicate has a nonpositive denominator
    """
    total = int(bc.denominators.sum())
    if total == 0:
        raise ZeroDenominatorError("no counted window lies inside a block")

    xi = draw_multipliers(config, bc.n_blocks) if multipliers is None else np.asarray(multipliers, dtype=np.float64)
    if xi.ndim != 2 or xi.shape[1] != bc.n_blocks:
        raise InvalidArgumentError(f"multipliers must be (replicates, {bc.n_blocks})")
    weights = 1.0 + xi

    chunks = [weights[a:a + REPLICATE_CHUNK] for a in range(0, weights.shape[0], REPLICATE_CHUNK)]
    workers = threads or settings.threads
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda w: _replicate_block(w, bc), chunks))
    else:
        parts = [_replicate_block(w, bc) for w in chunks]
    stacked = np.concatenate(parts)
    num, den = stacked[:, :-1], stacked[:, -1]

    valid = den > 0
    n_degenerate = int((~valid).sum())
    if not valid.any():
        raise DegenerateBootstrapError("all bootstrap replicates are degenerate")
    replicates = num[valid] / den[valid, None]

    alpha = (1.0 - config.ci_level) / 2.0
    lo, hi = np.quantile(replicates, [alpha, 1.0 - alpha], axis=0)
    point = bc.numerators.sum(axis=0) / total

    fraction = n_degenerate / weights.shape[0]
    if fraction > DEGENERATE_WARN_FRACTION:
        logger.warning(
            "High fraction of degenerate bootstrap replicates",
            n_degenerate=n_degenerate,
            replicates=weights.shape[0],
            n_blocks=bc.n_blocks,
        )

    intervals = [
        LabelInterval(label=label, point=float(p), ci_lo=float(a), ci_hi=float(b))
        for label, p, a, b in zip(bc.labels, point, lo, hi)
    ]
    return BootstrapSummary(
        intervals=intervals,
        n_degenerate=n_degenerate,
        replicates=int(weights.shape[0]),
        n_blocks=bc.n_blocks,
        degenerate_fraction=fraction,
    )


def attach_intervals(dist: PatternDistribution, summary: BootstrapSummary) -> PatternDistribution:
    """Copy of ``dist`` with the bootstrap bounds filled in."""
    by_label = {iv.label: iv for iv in summary.intervals}
    return dist.model_copy(
        update={
            "ci_lo": [by_label[label].ci_lo for label in dist.labels],
            "ci_hi": [by_label[label].ci_hi for label in dist.labels],
            "n_degenerate": summary.n_degenerate,
        }
    )

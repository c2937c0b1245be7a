"""Normalized-margin computations and numeric checks of the two
margin-dominance results behind the augmentation approach.

The first result: under relevance enhancement, irrelevance consistency,
and orthogonality, some generated vector of the target text separates it
from a competitor at least as well as the original vector does. The
second: pooling both kinds of generated vectors dominates either kind
alone. Both are conditional statements, so the checkers refuse instances
that violate the conditions instead of reporting counterexamples.

Instances are built on exact orthonormal frames; the margin comparisons
additionally place the instance in the regime the results address (the
target text is the query-relevant one), which the builder enforces via a
non-negative relevance gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ORTHO_TOL = 1e-12
DEFAULT_SLACK = 1e-9


class PreconditionError(ValidationError):
    """The instance does not satisfy the stated conditions."""


def normalized_margin(v_q: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> float:
    """<v_q, v1 - v2> / (|v_q| * |v1 - v2|)."""
    v_q = np.asarray(v_q, dtype=np.float64)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    q_norm = float(np.linalg.norm(v_q))
    if q_norm == 0.0:
        raise ValidationError("query vector must be non-zero")
    diff = v1 - v2
    diff_norm = float(np.linalg.norm(diff))
    if diff_norm == 0.0:
        raise ValidationError("normalized margin is undefined for v1 == v2")
    return float(np.dot(v_q, diff)) / (q_norm * diff_norm)


@dataclass(frozen=True)
class InstanceConfig:
    n_gen1: int = 2
    n_gen2: int = 2
    relevance_gap: float = 0.1
    noise_scale: float = 1.0
    qa_count: int | None = None  # split of the target's generated set, for the union check

    def __post_init__(self) -> None:
        if self.n_gen1 < 1 or self.n_gen2 < 1:
            raise ValidationError("n_gen1 and n_gen2 must be >= 1")
        if self.relevance_gap < 0:
            raise ValidationError("relevance_gap must be >= 0")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale must be >= 0")
        if self.qa_count is not None and not 1 <= self.qa_count <= self.n_gen1 - 1:
            raise ValidationError(
                "qa_count must leave both subsets non-empty (1 <= qa_count <= n_gen1 - 1)"
            )


@dataclass(frozen=True)
class SyntheticInstance:
    """One constructed configuration: query, generated sets (row-major
    matrices), noise vectors, and the composed originals."""

    dimension: int
    v_q: np.ndarray
    v1_gen: np.ndarray  # shape (n_gen1, d)
    v2_gen: np.ndarray  # shape (n_gen2, d)
    noise1: np.ndarray
    noise2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    qa_count: int | None = None


@dataclass(frozen=True)
class MarginComparison:
    baseline_margin: float
    best_index: int
    best_margin: float
    member_margins: tuple[float, ...]
    worst_slack: float
    holds: bool


def build_instance(seed: int, d: int, config: InstanceConfig) -> SyntheticInstance:
    """Random instance satisfying all three conditions by construction.

    Generated vectors sit on disjoint axes of one orthonormal frame (all
    unit norm), noise vectors on two further axes. The query is laid out
    so the target side dominates the competitor side by at least the
    configured relevance gap.
    """
    frame_size = config.n_gen1 + config.n_gen2 + 2
    if d < frame_size:
        raise ValidationError(
            f"d={d} too small: need at least {frame_size} orthogonal directions"
        )
    rng = np.random.default_rng(seed)

    # QR of a Gaussian matrix: exactly orthonormal columns up to rounding
    q_mat, _ = np.linalg.qr(rng.standard_normal((d, frame_size)))
    frame = np.ascontiguousarray(q_mat.T)  # rows are the frame vectors
    v1_gen = frame[: config.n_gen1]
    v2_gen = frame[config.n_gen1 : config.n_gen1 + config.n_gen2]
    u_noise1, u_noise2 = frame[-2], frame[-1]

    s1 = config.noise_scale * rng.uniform(0.5, 1.5) if config.noise_scale > 0 else 0.0
    s2 = config.noise_scale * rng.uniform(0.5, 1.5) if config.noise_scale > 0 else 0.0
    noise1 = s1 * u_noise1
    noise2 = s2 * u_noise2
    v1 = v1_gen[0] + noise1
    v2 = v2_gen[0] + noise2

    # target-side query alignments, then competitor-side below them by the gap
    alphas = rng.uniform(0.5, 1.0, size=config.n_gen1)
    beta_cap = max(0.0, float(alphas.min()) - config.relevance_gap)
    betas = rng.uniform(0.0, beta_cap, size=config.n_gen2) if beta_cap > 0 else np.zeros(
        config.n_gen2
    )
    # the competitor's decomposition member must be its most query-aligned one
    best_beta = int(np.argmax(betas))
    betas[0], betas[best_beta] = betas[best_beta], betas[0]

    headroom = float(alphas.max()) - float(betas[0])
    gamma1 = rng.uniform(-0.5, 0.0)  # <v_q, noise1> <= 0 strengthens condition (i)
    if s2 > 0:
        gamma2 = rng.uniform(0.0, 0.8 * headroom / s2)  # keeps the margin regime valid
    else:
        gamma2 = rng.uniform(0.0, 0.3)

    coeffs = np.concatenate([alphas, betas, [gamma1, gamma2]])
    v_q = coeffs @ frame
    # a component outside the frame's span changes only the query norm
    extra = rng.standard_normal(d) * 0.1
    extra -= (frame @ extra) @ frame
    v_q = v_q + extra

    return SyntheticInstance(
        dimension=d,
        v_q=v_q,
        v1_gen=v1_gen,
        v2_gen=v2_gen,
        noise1=noise1,
        noise2=noise2,
        v1=v1,
        v2=v2,
        qa_count=config.qa_count,
    )


def hand_instance() -> SyntheticInstance:
    """The four-dimensional standard-basis instance used as a hand check."""
    e = np.eye(4)
    return SyntheticInstance(
        dimension=4,
        v_q=e[0].copy(),
        v1_gen=e[0:1].copy(),
        v2_gen=e[2:3].copy(),
        noise1=e[1].copy(),
        noise2=e[3].copy(),
        v1=e[0] + e[1],
        v2=e[2] + e[3],
    )


def _check_orthogonality(instance: SyntheticInstance) -> None:
    blocks = [instance.v1_gen, instance.v2_gen]
    labels = [f"gen{i}" for i in range(len(instance.v1_gen) + len(instance.v2_gen))]
    for name, noise in (("noise1", instance.noise1), ("noise2", instance.noise2)):
        if float(np.dot(noise, noise)) > 0:
            blocks.append(noise[None, :])
            labels.append(name)
    mat = np.concatenate(blocks, axis=0)
    norms = np.linalg.norm(mat, axis=1)
    cos = np.abs(mat @ mat.T) / np.outer(norms, norms)
    np.fill_diagonal(cos, 0.0)
    if float(cos.max()) <= ORTHO_TOL:
        return
    for i, j in np.argwhere(cos > ORTHO_TOL):
        if i >= j:
            continue
        if np.array_equal(mat[i], mat[j]):
            continue  # a duplicated vector is the same text, not a distinct one
        raise PreconditionError(
            f"orthogonality violated between {labels[i]} and {labels[j]}: "
            f"|cos|={cos[i, j]:.3e}"
        )


def _check_conditions(instance: SyntheticInstance) -> None:
    _check_orthogonality(instance)
    v_q = instance.v_q
    target_alignments = instance.v1_gen @ v_q
    if float(target_alignments.max()) < float(np.dot(v_q, instance.v1)) - 1e-12:
        raise PreconditionError(
            "relevance enhancement unmet: no generated target vector aligns "
            "with the query at least as well as the original"
        )
    v2_alignment = float(np.dot(v_q, instance.v2))
    competitor_alignments = instance.v2_gen @ v_q
    worst = int(np.argmax(competitor_alignments))
    if float(competitor_alignments[worst]) > v2_alignment + 1e-12:
        raise PreconditionError(
            f"irrelevance consistency unmet: competitor generated vector {worst} "
            "aligns with the query better than the competitor original"
        )


def _margins_against(v_q: np.ndarray, anchor: np.ndarray, others: np.ndarray) -> np.ndarray:
    """normalized_margin(v_q, anchor, row) for every row, vectorized."""
    diffs = anchor[None, :] - others
    dens = np.linalg.norm(diffs, axis=1) * float(np.linalg.norm(v_q))
    if np.any(dens == 0.0):
        raise ValidationError("normalized margin is undefined for identical vectors")
    return (diffs @ v_q) / dens


def verify_theorem1(
    instance: SyntheticInstance, slack: float = DEFAULT_SLACK
) -> MarginComparison:
    """Margin dominance of the best generated target vector.

    Checks that it beats the original-vs-original margin both against the
    competitor original and against every competitor generated vector.
    """
    _check_conditions(instance)
    v_q = instance.v_q
    best_index = int(np.argmax(instance.v1_gen @ v_q))
    v1_best = instance.v1_gen[best_index]

    baseline = normalized_margin(v_q, instance.v1, instance.v2)
    best_margin = normalized_margin(v_q, v1_best, instance.v2)
    member_margins = _margins_against(v_q, v1_best, instance.v2_gen)
    worst = min(best_margin - baseline, float(member_margins.min()) - baseline)
    return MarginComparison(
        baseline_margin=baseline,
        best_index=best_index,
        best_margin=best_margin,
        member_margins=tuple(float(m) for m in member_margins),
        worst_slack=worst,
        holds=worst >= -slack,
    )


def verify_theorem2(
    instance: SyntheticInstance, slack: float = DEFAULT_SLACK
) -> MarginComparison:
    """Margin dominance of the pooled generated set over each subset.

    The best vector of the union must match or beat every per-member
    margin against the competitor original, across both subsets.
    """
    if instance.qa_count is None:
        raise ValidationError("instance carries no qa/event split (qa_count is None)")
    _check_conditions(instance)
    v_q = instance.v_q
    union = instance.v1_gen
    best_index = int(np.argmax(union @ v_q))
    diffs = union - instance.v2[None, :]
    dens = np.linalg.norm(diffs, axis=1) * float(np.linalg.norm(v_q))
    if np.any(dens == 0.0):
        raise ValidationError("normalized margin is undefined for identical vectors")
    member_margins = (diffs @ v_q) / dens
    best_margin = float(member_margins[best_index])
    worst = best_margin - float(member_margins.max())
    return MarginComparison(
        baseline_margin=normalized_margin(v_q, instance.v1, instance.v2),
        best_index=best_index,
        best_margin=best_margin,
        member_margins=tuple(float(m) for m in member_margins),
        worst_slack=worst,
        holds=worst >= -slack,
    )


def proof_step_slacks(instance: SyntheticInstance) -> dict[str, float]:
    """Signed slacks of the intermediate inequalities behind the margin
    dominance argument (denominator growth and numerator dominance);
    non-negative values mean the step holds."""
    v_q, v1, v2 = instance.v_q, instance.v1, instance.v2
    best_index = int(np.argmax(instance.v1_gen @ v_q))
    v1_best = instance.v1_gen[best_index]
    den_full_sq = float(np.dot(v1 - v2, v1 - v2))
    base_num = float(np.dot(v_q, v1)) - float(np.dot(v_q, v2))

    member_diffs = v1_best[None, :] - instance.v2_gen
    den_vs_original = den_full_sq - float(np.dot(v1_best - v2, v1_best - v2))
    den_vs_members = den_full_sq - float((member_diffs * member_diffs).sum(axis=1).max())
    num_vs_original = float(np.dot(v_q, v1_best - v2)) - base_num
    num_vs_members = float((member_diffs @ v_q).min()) - base_num
    return {
        "denominator_vs_original": den_vs_original,
        "denominator_vs_members": den_vs_members,
        "numerator_vs_original": num_vs_original,
        "numerator_vs_members": num_vs_members,
    }


@dataclass(frozen=True)
class SweepResult:
    instances: int
    violations: int
    worst_slack: float


def sweep_theorem1(
    n_instances: int, seed: int, d_max: int = 64, slack: float = DEFAULT_SLACK
) -> SweepResult:
    rng = np.random.default_rng(seed)
    worst = float("inf")
    violations = 0
    for _ in range(n_instances):
        config = InstanceConfig(
            n_gen1=int(rng.integers(1, 5)),
            n_gen2=int(rng.integers(1, 5)),
            relevance_gap=float(rng.uniform(0.0, 0.3)),
            noise_scale=float(rng.uniform(0.0, 2.0)),
        )
        d_min = config.n_gen1 + config.n_gen2 + 2
        d = int(rng.integers(d_min, d_max + 1))
        instance = build_instance(int(rng.integers(0, 2**31)), d, config)
        result = verify_theorem1(instance, slack)
        worst = min(worst, result.worst_slack)
        if not result.holds:
            violations += 1
    return SweepResult(instances=n_instances, violations=violations, worst_slack=worst)


def sweep_theorem2(
    n_instances: int, seed: int, d_max: int = 64, slack: float = DEFAULT_SLACK
) -> SweepResult:
    rng = np.random.default_rng(seed)
    worst = float("inf")
    violations = 0
    for _ in range(n_instances):
        n_qa = int(rng.integers(1, 4))
        n_event = int(rng.integers(1, 4))
        config = InstanceConfig(
            n_gen1=n_qa + n_event,
            n_gen2=int(rng.integers(1, 5)),
            relevance_gap=float(rng.uniform(0.0, 0.3)),
            noise_scale=float(rng.uniform(0.0, 2.0)),
            qa_count=n_qa,
        )
        d_min = config.n_gen1 + config.n_gen2 + 2
        d = int(rng.integers(d_min, d_max + 1))
        instance = build_instance(int(rng.integers(0, 2**31)), d, config)
        result = verify_theorem2(instance, slack)
        worst = min(worst, result.worst_slack)
        if not result.holds:
            violations += 1
    return SweepResult(instances=n_instances, violations=violations, worst_slack=worst)

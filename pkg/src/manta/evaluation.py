"""Evaluation: pairwise judge win rates, Fréchet distance between feature
sets, the synthetic-data admission loop, and token reporting.

Judge verdicts are collected in both presentation orders; only order-stable
preferences count as wins, everything else is surfaced as inconsistent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NoVerdicts
from .gateway import CRITERIA

logger = logging.getLogger(__name__)

FD_JITTER = 1e-6

OUTCOME_A = "A"
OUTCOME_B = "B"
OUTCOME_INCONSISTENT = "inconsistent"
OUTCOME_FAILED = "failed"


@dataclass(frozen=True)
class FeatureSet:
    vectors: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.vectors) < 2:
            raise ValueError("a feature set needs at least 2 vectors")
        dims = {len(v) for v in self.vectors}
        if len(dims) != 1:
            raise DimensionMismatch(f"ragged feature set: dims {sorted(dims)}")

    @classmethod
    def of(cls, rows) -> "FeatureSet":
        return cls(vectors=tuple(tuple(float(x) for x in row) for row in rows))

    @property
    def dimension(self) -> int:
        return len(self.vectors[0])

    def array(self) -> np.ndarray:
        return np.asarray(self.vectors, dtype=np.float64)

    def merged(self, other: "FeatureSet") -> "FeatureSet":
        if other.dimension != self.dimension:
            raise DimensionMismatch("cannot merge feature sets of different dims")
        return FeatureSet(vectors=self.vectors + other.vectors)


def _moments(fs: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    arr = fs.array()
    mu = arr.mean(axis=0)
    sigma = np.cov(arr, rowvar=False)
    return mu, np.atleast_2d(sigma)


def frechet_distance(a: FeatureSet, b: FeatureSet) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    A small diagonal jitter keeps the matrix square root stable when the
    sample covariances are near-singular.
    """
    if a.dimension != b.dimension:
        raise DimensionMismatch(
            f"feature dims differ: {a.dimension} vs {b.dimension}"
        )
    mu_a, sig_a = _moments(a)
    mu_b, sig_b = _moments(b)
    eye = np.eye(a.dimension) * FD_JITTER
    sig_a = sig_a + eye
    sig_b = sig_b + eye
    covmean, _ = linalg.sqrtm(sig_a @ sig_b, disp=False)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mu_a - mu_b
    fd = float(diff @ diff + np.trace(sig_a) + np.trace(sig_b) - 2.0 * np.trace(covmean))
    return max(fd, 0.0)


@dataclass(frozen=True)
class ExpansionStep:
    batch_index: int
    distance: float
    accepted: bool


def synthetic_expand(dataset_features: FeatureSet,
                     candidate_batches: list[FeatureSet],
                     threshold: float) -> tuple[list[FeatureSet], list[ExpansionStep]]:
    """Admit candidate batches whose distance to the growing reference set is
    below the threshold; accepted batches merge into the reference."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    reference = dataset_features
    accepted: list[FeatureSet] = []
    trace: list[ExpansionStep] = []
    for i, batch in enumerate(candidate_batches):
        fd = frechet_distance(reference, batch)
        ok = fd < threshold
        trace.append(ExpansionStep(batch_index=i, distance=fd, accepted=ok))
        if ok:
            accepted.append(batch)
            reference = reference.merged(batch)
    return accepted, trace


# --- pairwise judge evaluation ------------------------------------------------

@dataclass(frozen=True)
class PromptOutcome:
    prompt: str
    outcome: str  # A | B | inconsistent | failed
    detail: str = ""


@dataclass
class EvalRun:
    system_a: str
    system_b: str
    prompt_set: list[str]
    results: dict[str, list[PromptOutcome]] = field(default_factory=dict)

    def rates(self, criterion: str) -> dict[str, float]:
        outcomes = [o for o in self.results.get(criterion, ())
                    if o.outcome != OUTCOME_FAILED]
        if not outcomes:
            raise NoVerdicts(f"no verdicts for criterion {criterion!r}")
        n = len(outcomes)
        return {
            "win_rate": sum(o.outcome == OUTCOME_A for o in outcomes) / n,
            "loss_rate": sum(o.outcome == OUTCOME_B for o in outcomes) / n,
            "inconsistent_rate":
                sum(o.outcome == OUTCOME_INCONSISTENT for o in outcomes) / n,
            "judged": n,
        }

    def summary(self) -> dict:
        return {
            "system_a": self.system_a,
            "system_b": self.system_b,
            "prompts": len(self.prompt_set),
            "criteria": {c: self.rates(c) for c in self.results},
        }

    def to_dict(self) -> dict:
        return {
            "system_a": self.system_a,
            "system_b": self.system_b,
            "prompt_set": list(self.prompt_set),
            "results": {
                c: [{"prompt": o.prompt, "outcome": o.outcome, "detail": o.detail}
                    for o in outs]
                for c, outs in self.results.items()
            },
            "summary": self.summary(),
        }


def win_rate(verdicts, criterion: str) -> float:
    """Fraction of verdicts for a criterion where system A won."""
    relevant = [v for v in verdicts if v.criterion == criterion]
    if not relevant:
        raise NoVerdicts(f"no verdicts for criterion {criterion!r}")
    return sum(v.winner == "A" for v in relevant) / len(relevant)


def evaluate_pair(prompts, gen_a, gen_b, judge, criteria=CRITERIA,
                  system_a: str = "A", system_b: str = "B") -> EvalRun:
    """Generate with both systems per prompt and judge each criterion in both
    presentation orders; a verdict counts only when the orders agree.

    ``gen_a``/``gen_b`` map a prompt to a list of images; ``judge`` maps
    (images_a, images_b, criterion) to a JudgeVerdict. Per-prompt failures
    are recorded and the run continues.
    """
    run = EvalRun(system_a=system_a, system_b=system_b, prompt_set=list(prompts),
                  results={c: [] for c in criteria})
    for prompt in prompts:
        try:
            images_a = gen_a(prompt)
            images_b = gen_b(prompt)
        except Exception as exc:  # per-prompt failure is a recorded outcome
            logger.warning("generation failed for %r: %s", prompt, exc)
            for c in criteria:
                run.results[c].append(
                    PromptOutcome(prompt=prompt, outcome=OUTCOME_FAILED,
                                  detail=str(exc))
                )
            continue
        for c in criteria:
            forward = judge(images_a, images_b, c)
            backward = judge(images_b, images_a, c)
            # backward winner "B" means the first system again
            agree_a = forward.winner == "A" and backward.winner == "B"
            agree_b = forward.winner == "B" and backward.winner == "A"
            if agree_a:
                outcome = OUTCOME_A
            elif agree_b:
                outcome = OUTCOME_B
            else:
                outcome = OUTCOME_INCONSISTENT
            run.results[c].append(PromptOutcome(prompt=prompt, outcome=outcome))
    return run


def token_report(ledgers_by_system: dict, images_by_system: dict) -> dict:
    """Mean tokens per generated image per system, plus pairwise ratio."""
    report: dict = {"systems": {}}
    for system, ledgers in ledgers_by_system.items():
        total = sum(l.total for l in ledgers)
        images = images_by_system.get(system, 0)
        report["systems"][system] = {
            "total_tokens": total,
            "images": images,
            "tokens_per_image": (total / images) if images else None,
        }
    names = list(report["systems"])
    if len(names) == 2:
        a, b = (report["systems"][n]["tokens_per_image"] for n in names)
        if a and b:
            report["ratio"] = {f"{names[0]}/{names[1]}": a / b,
                               f"{names[1]}/{names[0]}": b / a}
    return report

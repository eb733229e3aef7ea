"""Group-relative policy optimization at desk scale.

The policy here is a deliberately tiny autoregressive model: logits are
a linear map over [context one-hot ; previous-token one-hot], so the
whole update is hand-differentiable and the analytic gradient can be
checked against finite differences. The context one-hot (positive or
negative image label) stands in for image embeddings; the optimizer and
reward machinery never look at pixels.

Objective, per sampled group of G completions o_1..o_G with normalized
advantages A_i:

    loss = -(1/G) sum_i (1/|o_i|) sum_t [ min(rho_t*A_i,
                clip(rho_t, 1-eps, 1+eps)*A_i) - beta*k3_t ]

with rho_t the new/old probability ratio of the sampled token and
k3 = pi_ref/pi - log(pi_ref/pi) - 1, a nonnegative per-token KL
estimator against a frozen reference policy. One optimization step per
sampled batch (the sampling policy is the old policy, so rho starts at
1); plain gradient descent keeps the finite-difference oracle exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import PipelineError
from .rewards import RewardConfig, total_reward
from .text import flag_output, parse_output


class GrpoError(PipelineError):
    pass


class UnknownToken(GrpoError):
    def __init__(self, token: str):
        super().__init__(f"token {token!r} is not in the policy vocabulary")
        self.token = token


class NonFiniteLoss(GrpoError):
    def __init__(self, message: str, episode: Optional[int] = None):
        super().__init__(message if episode is None else f"{message} (episode {episode})")
        self.episode = episode


EOS = "<eos>"

# Tags + keywords + filler words + EOS. The fillers are plentiful enough
# that a uniform policy emits a keyword in well under 90% of rollouts
# (otherwise the zero-start learning task would be trivial), and the
# demonstration chains below keep reasoning/answer fillers disjoint so a
# first-order policy can represent the tagged format exactly.
DEFAULT_VOCAB: tuple[str, ...] = (
    "<reasoning>", "</reasoning>", "<answer>", "</answer>",
    "military", "missile", "silo",
    "fields", "roads", "buildings", "terrain", "hills", "river", "trees", "dust", "rock",
    "area", "plain", "the", "shows", "open", "flat", "wide", "land",
    EOS,
)

CONTEXT_LABELS = ("negative", "positive")
EPS_NUM = 1e-8


def context_index(label: str) -> int:
    try:
        return CONTEXT_LABELS.index(label)
    except ValueError:
        raise ValueError(f"context label must be one of {CONTEXT_LABELS}, got {label!r}") from None


class ToyPolicy:
    """Linear-softmax autoregressive policy over a small vocabulary."""

    def __init__(
        self,
        vocab: Sequence[str] = DEFAULT_VOCAB,
        weights: Optional[np.ndarray] = None,
        bias: Optional[np.ndarray] = None,
    ):
        if len(vocab) > 64:
            raise ValueError("toy vocabulary is capped at 64 tokens")
        if len(set(vocab)) != len(vocab):
            raise ValueError("vocabulary tokens must be unique")
        self.vocab = tuple(vocab)
        self.token_index = {tok: i for i, tok in enumerate(self.vocab)}
        self.context_dim = 2
        v = len(self.vocab)
        d = self.context_dim + v
        self.weights = np.zeros((d, v)) if weights is None else np.asarray(weights, dtype=float)
        self.bias = np.zeros(v) if bias is None else np.asarray(bias, dtype=float)
        if self.weights.shape != (d, v) or self.bias.shape != (v,):
            raise ValueError("parameter shapes do not match the vocabulary")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("policy parameters must be finite")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def eos_id(self) -> Optional[int]:
        return self.token_index.get(EOS)

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.vocab, self.weights.copy(), self.bias.copy())

    def input_vector(self, context_id: int, prev_token: Optional[int]) -> np.ndarray:
        x = np.zeros(self.context_dim + self.vocab_size)
        x[context_id] = 1.0
        if prev_token is not None:
            x[self.context_dim + prev_token] = 1.0
        return x

    def log_probs(self, context_id: int, prev_token: Optional[int]) -> np.ndarray:
        z = self.input_vector(context_id, prev_token) @ self.weights + self.bias
        zmax = z.max()
        return z - (zmax + math.log(np.exp(z - zmax).sum()))

    def probs(self, context_id: int, prev_token: Optional[int]) -> np.ndarray:
        return np.exp(self.log_probs(context_id, prev_token))

    def sample_completion(
        self, context_id: int, max_len: int, rng: np.random.Generator
    ) -> tuple[list[int], np.ndarray]:
        """One ancestral sample plus the per-token log-probabilities."""
        tokens: list[int] = []
        logps: list[float] = []
        prev: Optional[int] = None
        for _ in range(max_len):
            lp = self.log_probs(context_id, prev)
            tok = int(rng.choice(self.vocab_size, p=np.exp(lp)))
            tokens.append(tok)
            logps.append(float(lp[tok]))
            if tok == self.eos_id:
                break
            prev = tok
        return tokens, np.array(logps)

    def encode(self, words: Sequence[str]) -> list[int]:
        ids = []
        for word in words:
            if word not in self.token_index:
                raise UnknownToken(word)
            ids.append(self.token_index[word])
        return ids

    def decode(self, tokens: Sequence[int]) -> str:
        return " ".join(self.vocab[t] for t in tokens if t != self.eos_id)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def with_flat_params(self, flat: np.ndarray) -> "ToyPolicy":
        d, v = self.weights.shape
        return ToyPolicy(self.vocab, flat[: d * v].reshape(d, v).copy(), flat[d * v :].copy())

    def to_json(self) -> dict:
        return {
            "vocab": list(self.vocab),
            "context_labels": list(CONTEXT_LABELS),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ToyPolicy":
        return cls(tuple(obj["vocab"]), np.array(obj["weights"]), np.array(obj["bias"]))


@dataclass
class GroupSample:
    """One GRPO group: G completions for a single context."""

    context_id: int
    completions: list[list[int]]
    logprobs_old: list[np.ndarray]
    rewards: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.completions)


@dataclass
class GrpoConfig:
    group_size: int = 4
    clip_epsilon: float = 0.2
    kl_beta: float = 0.04
    # Full-scale parity default; toy runs override to 0.5 (see toy_config).
    learning_rate: float = 1e-6
    batch_size: int = 8
    episodes: int = 6000
    seed: int = 0
    max_len: int = 12
    sft_passes: int = 3000
    sft_learning_rate: float = 6.0

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def toy_config(**overrides) -> GrpoConfig:
    """Defaults for desk-scale runs.

    The step size is 0.5 rather than the full-scale parity value: with the
    per-group and per-length normalization in the loss, anything below
    ~0.1 cannot move the toy policy measurably inside a 6000-completion
    budget.
    """
    params = {"learning_rate": 0.5, "seed": 42}
    params.update(overrides)
    return GrpoConfig(**params)


@dataclass
class PolicyGradient:
    weights: np.ndarray
    bias: np.ndarray

    def __iadd__(self, other: "PolicyGradient") -> "PolicyGradient":
        self.weights += other.weights
        self.bias += other.bias
        return self

    def scaled(self, factor: float) -> "PolicyGradient":
        return PolicyGradient(self.weights * factor, self.bias * factor)


def sample_group(
    policy: ToyPolicy,
    context_id: int,
    group_size: int,
    max_len: int,
    rng: np.random.Generator,
) -> GroupSample:
    """Draw G independent completions, recording sampling log-probs."""
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    completions, logps = [], []
    for _ in range(group_size):
        tokens, lp = policy.sample_completion(context_id, max_len, rng)
        completions.append(tokens)
        logps.append(lp)
    return GroupSample(context_id=context_id, completions=completions, logprobs_old=logps)


def compute_advantages(rewards: Sequence[float]) -> np.ndarray:
    """Group-normalized advantages: centered, divided by population std.

    A zero-variance group yields exact zeros (the centered rewards are
    already zero; EPS_NUM only keeps the division defined), so every
    all-tie group contributes no gradient.
    """
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValueError("need at least 2 rewards per group")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    centered = r - r.mean()
    std = float(r.std())
    return centered / (std if std > 0.0 else EPS_NUM)


def grpo_loss(
    policy: ToyPolicy,
    ref_policy: ToyPolicy,
    group: GroupSample,
    cfg: GrpoConfig,
) -> tuple[float, PolicyGradient]:
    """Clipped-surrogate loss with KL penalty, plus its exact gradient.

    Gradient flow per token: the surrogate contributes A*rho when the
    unclipped branch is active, the k3 penalty contributes
    beta*(pi_ref/pi - 1); both are chained through the log-softmax of the
    linear policy analytically.
    """
    if group.advantages is None:
        raise ValueError("group advantages must be computed before grpo_loss")
    g = group.size
    if g < 2:
        raise ValueError("group must hold at least 2 completions")

    grad_w = np.zeros_like(policy.weights)
    grad_b = np.zeros_like(policy.bias)
    total = 0.0
    lo, hi = 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon

    for i, (tokens, lp_old_seq) in enumerate(zip(group.completions, group.logprobs_old)):
        if not tokens:
            raise ValueError("completions must be non-empty")
        adv = float(group.advantages[i])
        t_len = len(tokens)
        scale = -1.0 / (g * t_len)
        prev: Optional[int] = None
        for t, tok in enumerate(tokens):
            x = policy.input_vector(group.context_id, prev)
            lp_row = policy.log_probs(group.context_id, prev)
            lp_new = float(lp_row[tok])
            lp_ref = float(ref_policy.log_probs(group.context_id, prev)[tok])
            rho = math.exp(lp_new - float(lp_old_seq[t]))
            unclipped = rho * adv
            clipped = min(max(rho, lo), hi) * adv
            r_ref = math.exp(lp_ref - lp_new)
            k3 = r_ref - (lp_ref - lp_new) - 1.0
            total += scale * (min(unclipped, clipped) - cfg.kl_beta * k3)

            dterm_dlp = cfg.kl_beta * (r_ref - 1.0)
            if unclipped <= clipped:
                dterm_dlp += adv * rho
            coeff = scale * dterm_dlp
            delta = -np.exp(lp_row)
            delta[tok] += 1.0
            grad_w += coeff * np.outer(x, delta)
            grad_b += coeff * delta
            prev = tok

    if not (math.isfinite(total) and np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise NonFiniteLoss("non-finite loss or gradient in grpo_loss")
    return total, PolicyGradient(grad_w, grad_b)


def init_from_sft(
    policy: ToyPolicy,
    demonstrations: Sequence[tuple[str, Sequence[str]]],
    passes: int = 40,
    learning_rate: float = 0.5,
) -> ToyPolicy:
    """Cross-entropy fit of the policy on (context label, token words) demos.

    Full-batch gradient steps on mean per-token negative log-likelihood;
    zero passes returns an identical copy. Models the SFT-then-RL
    sequencing at toy scale.
    """
    fitted = policy.copy()
    encoded = [(context_index(label), fitted.encode(words)) for label, words in demonstrations]
    n_tokens = sum(len(toks) for _, toks in encoded)
    if n_tokens == 0 or passes == 0:
        return fitted
    for _ in range(passes):
        grad_w = np.zeros_like(fitted.weights)
        grad_b = np.zeros_like(fitted.bias)
        for ctx, tokens in encoded:
            prev: Optional[int] = None
            for tok in tokens:
                x = fitted.input_vector(ctx, prev)
                delta = -fitted.probs(ctx, prev)
                delta[tok] += 1.0
                grad_w -= np.outer(x, delta) / n_tokens
                grad_b -= delta / n_tokens
                prev = tok
        fitted.weights -= learning_rate * grad_w
        fitted.bias -= learning_rate * grad_b
    return fitted


def toy_demonstrations() -> list[tuple[str, list[str]]]:
    """Ideal tagged rollouts used for the toy SFT stage.

    Within each context the successor of every filler token is unique, so
    the fitted chain has branch points only at the span starts and no
    cycles: rollouts stay exactly nine tokens long and the format survives
    sampling.
    """
    demos = [
        ("positive", ["fields", "roads"], ["military", "area"]),
        ("positive", ["buildings", "terrain"], ["missile", "area"]),
        ("positive", ["hills", "river"], ["silo", "plain"]),
        ("negative", ["trees", "dust"], ["open", "land"]),
        ("negative", ["rock", "flat"], ["wide", "land"]),
        ("negative", ["the", "shows"], ["plain", "area"]),
    ]
    return [
        (label, ["<reasoning>", *body, "</reasoning>", "<answer>", *answer, "</answer>", EOS])
        for label, body, answer in demos
    ]


@dataclass
class LogRow:
    episode: int          # cumulative completions sampled
    mean_reward: float
    pos_emit_rate: float  # nan when the step saw no positive contexts
    neg_emit_rate: float
    format_rate: float
    loss: float


@dataclass
class ToyTrainResult:
    policy: ToyPolicy
    log: list[LogRow] = field(default_factory=list)


def _group_rng(seed: int, step: int, slot: int) -> np.random.Generator:
    # Per-group streams split from the master seed, so results do not
    # depend on whether groups are sampled sequentially or in parallel.
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(step, slot))))


def train_toy(
    dataset: Sequence[tuple[str, bool]],
    cfg: GrpoConfig,
    reward_cfg: RewardConfig = RewardConfig(),
    policy: Optional[ToyPolicy] = None,
) -> ToyTrainResult:
    """Run the group-sampling / reward / advantage / update loop.

    ``dataset`` holds (context label, is_positive) pairs; episodes count
    completions, so each optimization step consumes batch_size*group_size
    of the budget and the loop never exceeds ``cfg.episodes``.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    current = (policy or ToyPolicy()).copy()
    reference = current.copy()
    per_step = cfg.batch_size * cfg.group_size
    steps = cfg.episodes // per_step
    log: list[LogRow] = []

    for step in range(steps):
        grad_w = np.zeros_like(current.weights)
        grad_b = np.zeros_like(current.bias)
        losses = []
        rewards_seen: list[float] = []
        emitted = {True: [], False: []}
        well_formed = []

        for slot in range(cfg.batch_size):
            label, is_positive = dataset[(step * cfg.batch_size + slot) % len(dataset)]
            ctx = context_index(label)
            rng = _group_rng(cfg.seed, step, slot)
            group = sample_group(current, ctx, cfg.group_size, cfg.max_len, rng)
            texts = [current.decode(toks) for toks in group.completions]
            group.rewards = np.array([total_reward(t, is_positive, reward_cfg).total for t in texts])
            group.advantages = compute_advantages(group.rewards)
            try:
                loss, grad = grpo_loss(current, reference, group, cfg)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(str(exc), episode=(step + 1) * per_step) from exc
            losses.append(loss)
            grad_w += grad.weights / cfg.batch_size
            grad_b += grad.bias / cfg.batch_size
            rewards_seen.extend(group.rewards.tolist())
            for text in texts:
                emitted[is_positive].append(
                    flag_output(text, reward_cfg.keywords, reward_cfg.reasoning_model)
                )
                well_formed.append(parse_output(text).format_ok)

        current.weights -= cfg.learning_rate * grad_w
        current.bias -= cfg.learning_rate * grad_b
        log.append(
            LogRow(
                episode=(step + 1) * per_step,
                mean_reward=float(np.mean(rewards_seen)),
                pos_emit_rate=float(np.mean(emitted[True])) if emitted[True] else float("nan"),
                neg_emit_rate=float(np.mean(emitted[False])) if emitted[False] else float("nan"),
                format_rate=float(np.mean(well_formed)),
                loss=float(np.mean(losses)),
            )
        )
    return ToyTrainResult(policy=current, log=log)


def rollout_stats(
    policy: ToyPolicy,
    reward_cfg: RewardConfig = RewardConfig(),
    n_per_context: int = 200,
    max_len: int = 16,
    seed: int = 0,
) -> dict[str, float]:
    """Seeded post-training evaluation of emission and format rates."""
    rng = np.random.default_rng(seed)
    stats: dict[str, float] = {}
    formats = []
    for label in CONTEXT_LABELS:
        ctx = context_index(label)
        flags = []
        for _ in range(n_per_context):
            tokens, _ = policy.sample_completion(ctx, max_len, rng)
            text = policy.decode(tokens)
            flags.append(flag_output(text, reward_cfg.keywords, reward_cfg.reasoning_model))
            formats.append(parse_output(text).format_ok)
        stats[f"{label[:3]}_emit_rate"] = float(np.mean(flags))
    stats["format_rate"] = float(np.mean(formats))
    return stats


def write_training_log(path: Union[str, Path], rows: Sequence[LogRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_reward", "pos_emit_rate", "neg_emit_rate", "format_rate", "loss"])
        for row in rows:
            writer.writerow(
                [row.episode, row.mean_reward, row.pos_emit_rate, row.neg_emit_rate, row.format_rate, row.loss]
            )


def save_checkpoint(path: Union[str, Path], policy: ToyPolicy) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(policy.to_json()), encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> ToyPolicy:
    return ToyPolicy.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

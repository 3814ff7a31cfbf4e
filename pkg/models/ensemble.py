"""
GAN Ensemble Lab - Ensembles
Mixtures of GAN members: independent ensembles, class-wise bagging,
AdaGAN-style boosting, and mixture sampling with fixed-budget bookkeeping.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from data.grid import GridSpec, LabeledDataset
from models.gan import (GanConfig, GanMember, WeightedDataset, discriminator_scores, generate,
                        train_gan, with_seed)
from utils.errors import ConfigError, DegenerateWeightsError, InsufficientDataError, MissingArtifactError
from utils.helpers import calculate_progress
from utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

ScoreHook = Callable[[GanMember, np.ndarray], np.ndarray]


@dataclass
class MixtureComponent:
    member: GanMember
    weight: float
    class_id: int = 0
    iteration: int = 0


@dataclass
class EnsembleMixture:
    """
    The mixture G_T = 1/K sum_k sum_t p_t G_{t,k}.

    Component weights p_t sum to 1 within each class; classes are mixed at 1/K.
    """
    components: List[MixtureComponent]
    T: int
    K: int = 1
    method: str = 'independent'
    master_seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.K < 1:
            raise ConfigError("mixtures need T >= 1 and K >= 1")
        for k in range(self.K):
            weights = [c.weight for c in self.components if c.class_id == k]
            if not weights:
                raise ConfigError(f"class {k} has no members")
            if abs(sum(weights) - 1.0) > 1e-12:
                raise ConfigError(f"class {k} weights sum to {sum(weights)!r}, expected 1")
            if any(w < 0 for w in weights):
                raise ConfigError(f"class {k} has a negative weight")

    @property
    def members(self) -> List[GanMember]:
        return [c.member for c in self.components]

    def class_weights(self) -> np.ndarray:
        """Mixture probability of each component (p_t / K)."""
        return np.array([c.weight / self.K for c in self.components])

    def prefix(self, T: int) -> 'EnsembleMixture':
        """Mixture of the first T iterations of every class, reweighted to 1/T."""
        if not 1 <= T <= self.T:
            raise ConfigError(f"T={T} outside 1..{self.T}")
        chosen = [MixtureComponent(c.member, 1.0 / T, c.class_id, c.iteration)
                  for c in self.components if c.iteration < T]
        return EnsembleMixture(chosen, T, self.K, self.method, self.master_seed)


@dataclass
class BoostState:
    """Per-class boosting progress: current data weights and the β history."""
    class_id: int
    iteration: int
    weights: WeightedDataset
    betas: List[float] = field(default_factory=list)
    mixture_weights: List[float] = field(default_factory=list)
    weight_history: List[np.ndarray] = field(default_factory=list)


# -- training ------------------------------------------------------------------

def split_by_class(data: LabeledDataset, config: GanConfig) -> Dict[int, np.ndarray]:
    per_class = {}
    for k in range(data.class_count):
        points = data.class_points(k)
        if len(points) < config.batch_size:
            raise InsufficientDataError(
                f"class {k} has {len(points)} points, fewer than batch size {config.batch_size}")
        per_class[k] = points
    return per_class


def member_seed(master_seed: int, t: int, k: int) -> int:
    """Seed of member (iteration t, class k)."""
    return derive_seed(master_seed, 'member', t, k)


def _train_job(args: Tuple[np.ndarray, GanConfig]) -> GanMember:
    points, config = args
    return train_gan(WeightedDataset.uniform(points), config)


def train_members(payloads: Sequence[Tuple[np.ndarray, GanConfig]], workers: int = 1,
                  on_done: Optional[Callable[[int, GanMember], None]] = None) -> List[GanMember]:
    """
    Train one member per (points, config) payload on uniform weights.

    Results are returned in payload order; every member depends only on its
    own config seed, so the worker count never changes them.

    Args:
        payloads: (class points, seeded config) per member
        workers: Process count
        on_done: Called with (payload index, member) as members finish, in order

    Returns:
        Trained members
    """
    members: List[GanMember] = []

    def finish(index: int, member: GanMember) -> None:
        members.append(member)
        if on_done is not None:
            on_done(index, member)
        progress = calculate_progress(index + 1, len(payloads))
        logger.info(f"Trained member {progress['completed']}/{progress['total']} ({progress['percentage']}%)")

    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, member in enumerate(pool.map(_train_job, payloads)):
                finish(index, member)
    else:
        for index, payload in enumerate(payloads):
            finish(index, _train_job(payload))
    return members


def train_independent(data: LabeledDataset, T: int, config: GanConfig, master_seed: int,
                      workers: int = 1) -> EnsembleMixture:
    """
    Train T members per class in isolation, each on uniform weights.

    Args:
        data: Labeled training data (one class for an unlabeled ensemble)
        T: Ensemble iterations
        config: GAN configuration template (its seed is replaced per member)
        master_seed: Seed from which member seeds are derived
        workers: Process count for parallel training

    Returns:
        EnsembleMixture with T*K members, p_t = 1/T
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    per_class = split_by_class(data, config)
    jobs = [(t, k) for k in range(data.class_count) for t in range(T)]
    payloads = [(per_class[k], with_seed(config, member_seed(master_seed, t, k))) for t, k in jobs]
    members = train_members(payloads, workers)

    components = [MixtureComponent(member, 1.0 / T, k, t) for (t, k), member in zip(jobs, members)]
    return EnsembleMixture(components, T, data.class_count, 'independent', master_seed)


def next_beta(iteration: int, schedule: Union[str, Sequence[float]] = 'uniform',
              constant: float = 0.5) -> float:
    """
    Mixture weight β_t of the member added at (1-based) iteration t.

    'uniform' gives β_t = 1/t (equal final weights); 'constant' gives β_t = c
    for t >= 2; a sequence gives its (t-1)-th entry. β_1 is always 1.
    """
    if iteration == 1:
        return 1.0
    if isinstance(schedule, str):
        if schedule == 'uniform':
            return 1.0 / iteration
        if schedule == 'constant':
            if not 0.0 < constant < 1.0:
                raise ConfigError(f"constant beta must lie in (0, 1), got {constant}")
            return float(constant)
        raise ConfigError(f"Unknown beta schedule '{schedule}'")
    beta = float(schedule[iteration - 1])
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta_{iteration} must lie in (0, 1), got {beta}")
    return beta


def density_ratio(scores: np.ndarray) -> np.ndarray:
    """
    h = dP_model/dP_data estimated from a logistic discriminator.

    With D(x) = sigmoid(score), (1 - D)/D = exp(-score).
    """
    return np.exp(-np.clip(np.asarray(scores, dtype=np.float64).ravel(), -500.0, 500.0))


def adagan_weights(ratios: np.ndarray, beta: float) -> Tuple[np.ndarray, Optional[float]]:
    """
    Projected AdaGAN reweighting w_i ∝ max(0, λ* - ((1 - β)/β) h_i).

    λ* is found by an exact 1-D search over the sorted ratios so that the
    weights sum to one. Equal ratios (no signal) return exactly uniform
    weights.

    Returns:
        (weights, lambda_star); lambda_star is None when no reweighting happened
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    n = ratios.shape[0]
    uniform = np.full(n, 1.0 / n)
    if n == 0:
        raise InsufficientDataError("no points to reweight")
    if np.ptp(ratios) == 0.0:
        return uniform, None
    c = (1.0 - beta) / beta
    ordered = np.sort(ratios)
    cumulative = np.cumsum(ordered)
    lam = None
    for i in range(n):
        # with the i+1 smallest ratios active: sum_j (lam - c h_j) / n = 1
        candidate = (n + c * cumulative[i]) / (i + 1)
        upper_ok = i == n - 1 or candidate <= c * ordered[i + 1]
        if candidate >= c * ordered[i] and upper_ok:
            lam = candidate
            break
    if lam is None:
        logger.warning("lambda* search failed; passing uniform weights")
        return uniform, None
    weights = np.maximum(0.0, lam - c * ratios) / n
    return weights / weights.sum(), float(lam)


def train_boosted(data: LabeledDataset, T: int, config: GanConfig, master_seed: int,
                  beta_schedule: Union[str, Sequence[float]] = 'uniform', beta_constant: float = 0.5,
                  score_hook: Optional[ScoreHook] = None,
                  on_iteration: Optional[Callable[[BoostState, GanMember], None]] = None,
                  resume: Optional[Dict[int, Tuple[BoostState, List[GanMember]]]] = None) -> EnsembleMixture:
    """
    AdaGAN-style boosting, sequential in t and independent across classes.

    Iteration t trains G_t on the current weights, scores the class's training
    points with G_t's discriminator (or ``score_hook``), and reweights toward
    points the discriminator singles out as real. Final mixture weights are
    1/T regardless of the running β_t.

    Args:
        data: Labeled training data
        T: Boosting iterations
        config: GAN configuration template
        master_seed: Seed from which member seeds are derived
        beta_schedule: 'uniform', 'constant' or an explicit sequence
        beta_constant: β for the 'constant' schedule
        score_hook: Replaces discriminator scoring (test hook)
        on_iteration: Called after every iteration (persistence)
        resume: class -> (state, members) to continue from an iteration boundary

    Returns:
        EnsembleMixture with p_t = 1/T
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    per_class = split_by_class(data, config)
    scorer = score_hook or discriminator_scores
    components: List[MixtureComponent] = []

    for k, points in per_class.items():
        if resume and k in resume:
            state, members = resume[k]
            members = list(members)
            logger.info(f"Boosting class {k}: resuming at iteration {state.iteration + 1}")
        else:
            state = BoostState(class_id=k, iteration=0, weights=WeightedDataset.uniform(points))
            state.weight_history.append(state.weights.weights.copy())
            members = []

        while state.iteration < T:
            t = state.iteration + 1
            if state.weights.support < config.batch_size:
                logger.error(f"Boosting class {k} iteration {t}: weight support {state.weights.support}")
                raise DegenerateWeightsError(
                    f"weights of class {k} concentrate on {state.weights.support} points "
                    f"(< batch size {config.batch_size}) at iteration {t}",
                    iteration=t, class_id=k, support=state.weights.support)

            member = train_gan(state.weights, with_seed(config, member_seed(master_seed, t - 1, k)))
            members.append(member)
            beta = next_beta(t, beta_schedule, beta_constant)
            state.mixture_weights = [w * (1.0 - beta) for w in state.mixture_weights] + [beta]
            state.betas.append(beta)

            if t < T:
                ratios = density_ratio(scorer(member, points))
                new_weights, lam = adagan_weights(ratios, next_beta(t + 1, beta_schedule, beta_constant))
                state.weights = WeightedDataset(points, new_weights)
                if lam is not None:
                    logger.info(f"Boosting class {k} iteration {t}: lambda*={lam:.4f}, "
                                f"zero-weight points={np.mean(new_weights == 0):.3f}")
            state.iteration = t
            state.weight_history.append(state.weights.weights.copy())
            if on_iteration is not None:
                on_iteration(state, member)

        components.extend(MixtureComponent(m, 1.0 / T, k, t) for t, m in enumerate(members))

    return EnsembleMixture(components, T, data.class_count, 'boosted', master_seed)


# -- sampling ------------------------------------------------------------------

def allocate_quotas(weights: np.ndarray, n_total: int) -> np.ndarray:
    """
    Largest-remainder rounding of weights * n_total.

    Remainders go to the largest fractional parts, ties to the lowest index.
    The quotas always sum to n_total.
    """
    weights = np.asarray(weights, dtype=np.float64)
    targets = weights / weights.sum() * n_total
    base = np.floor(targets + 1e-9).astype(np.int64)
    remainder = int(n_total - base.sum())
    if remainder > 0:
        order = np.argsort(-(targets - base), kind='stable')
        base[order[:remainder]] += 1
    elif remainder < 0:
        order = np.argsort(targets - base, kind='stable')
        for index in order[:(-remainder)]:
            base[index] -= 1
    return base


def sample_mixture(mix: EnsembleMixture, n_total: int, seed: int, allocation: str = 'exact_quota',
                   spec: Optional[GridSpec] = None) -> LabeledDataset:
    """
    Synthesize a labeled dataset from the mixture.

    exact_quota: member t of class k contributes its largest-remainder quota of
    p_t * n_total / K points. proportional: each sample independently picks a
    member with probability p_t / K. Labels come from the member's class and
    ``origin`` records the member index.

    Args:
        mix: Mixture to sample from
        n_total: Total number of points
        seed: Stream seed
        allocation: 'exact_quota' or 'proportional'
        spec: Grid the data lives on (provenance only)

    Returns:
        LabeledDataset of n_total points
    """
    if n_total <= 0:
        raise ConfigError(f"n_total must be positive, got {n_total}")
    probabilities = mix.class_weights()
    if allocation == 'exact_quota':
        if n_total < len(mix.components):
            raise ConfigError(f"n_total={n_total} is smaller than the {len(mix.components)} members")
        counts = allocate_quotas(probabilities, n_total)
    elif allocation == 'proportional':
        counts = make_rng(seed, 'mixture-allocation').multinomial(n_total, probabilities / probabilities.sum())
    else:
        raise ConfigError(f"Unknown allocation '{allocation}'")

    points, labels, origin = [], [], []
    for index, (component, count) in enumerate(zip(mix.components, counts)):
        samples = generate(component.member, int(count), derive_seed(seed, 'mixture-member', index))
        points.append(samples)
        labels.append(np.full(int(count), component.class_id, dtype=np.int64))
        origin.append(np.full(int(count), index, dtype=np.int64))

    return LabeledDataset(np.concatenate(points, axis=0), np.concatenate(labels), mix.K,
                          spec=spec or GridSpec(), seed=seed, scheme='mixture', origin=np.concatenate(origin))


# -- bootstrap pool ------------------------------------------------------------

@dataclass
class SampleCache:
    """Cached generator samples of one pool member (optionally per class)."""
    member_index: int
    member_seed: int
    points: np.ndarray
    class_id: int = 0

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'wb') as f:
            np.savez(f, points=self.points, member_index=np.array(self.member_index),
                     member_seed=np.array(self.member_seed), class_id=np.array(self.class_id))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SampleCache':
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"Sample cache not found: {path}")
        with np.load(path, allow_pickle=False) as archive:
            return cls(int(archive['member_index']), int(archive['member_seed']),
                       archive['points'].copy(), int(archive['class_id']))


@dataclass
class SamplePool:
    """Per-member sample caches, indexed by (member index, class id)."""
    caches: List[SampleCache]

    @property
    def member_indices(self) -> List[int]:
        return sorted({c.member_index for c in self.caches})

    @property
    def class_ids(self) -> List[int]:
        return sorted({c.class_id for c in self.caches})

    @property
    def total_points(self) -> int:
        return int(sum(len(c.points) for c in self.caches))

    def cache(self, member_index: int, class_id: int = 0) -> SampleCache:
        for c in self.caches:
            if c.member_index == member_index and c.class_id == class_id:
                return c
        raise MissingArtifactError(f"no cache for member {member_index}, class {class_id}")


def cache_seed(member: GanMember) -> int:
    return derive_seed(member.seed, 'pool-cache')


def bootstrap_pool(members: Sequence[GanMember], samples_per_member: int,
                   class_ids: Optional[Sequence[int]] = None,
                   member_indices: Optional[Sequence[int]] = None,
                   directory: Optional[Union[str, Path]] = None) -> SamplePool:
    """
    Generate and (optionally) persist per-member sample caches.

    Each cache is drawn from the stream derived from its member's seed, so a
    regenerated pool is bit-identical.

    Args:
        members: Trained members
        samples_per_member: Points cached per member
        class_ids: Class of each member (default 0)
        member_indices: Pool index of each member (default 0..len-1)
        directory: When given, caches are written as ``samples_<class>_<index>.npz``

    Returns:
        SamplePool
    """
    class_ids = list(class_ids) if class_ids is not None else [0] * len(members)
    member_indices = list(member_indices) if member_indices is not None else list(range(len(members)))
    caches = []
    for member, k, index in zip(members, class_ids, member_indices):
        cache = SampleCache(index, member.seed, generate(member, samples_per_member, cache_seed(member)), k)
        if directory is not None:
            cache.save(Path(directory) / cache_filename(index, k))
        caches.append(cache)
    return SamplePool(caches)


def cache_filename(member_index: int, class_id: int) -> str:
    return f"samples_c{class_id:02d}_m{member_index:03d}.npz"

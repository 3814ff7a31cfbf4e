"""
GAN Ensemble Lab - Pool Commands
Training the member pool, boosting, assembling mixtures and sampling them.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click
import numpy as np

from commands import pass_run
from commands.workspace import RunLayout, open_manifest, prepare_data, training_view
from config import ExperimentConfig
from data.manifest import MixtureEntry, MixtureManifest, RunManifest
from data.store import save_dataset, sidecar_path
from models.ensemble import (BoostState, SampleCache, SamplePool, bootstrap_pool, cache_filename, member_seed,
                             sample_mixture, split_by_class, train_boosted, train_members)
from models.gan import GanMember, WeightedDataset, member_sidecar, with_seed
from models.model_manager import ModelManager
from utils.errors import ConfigError, MissingArtifactError
from utils.helpers import read_json, write_json
from utils.rng import derive_seed

logger = logging.getLogger(__name__)

pool_commands = click.Group('pool')


def _member_key(index: int, class_id: int) -> str:
    return f"c{class_id:02d}_m{index:03d}"


def pool_classes(config: ExperimentConfig, manifest: RunManifest) -> List[int]:
    stage = manifest.stage('train_pool')
    if 'classes' not in stage:
        raise MissingArtifactError("No trained pool in this run directory (run train-pool first)")
    return list(range(stage['classes']))


def _check_stage_hash(stage: Dict, key: str, expected: str, what: str) -> None:
    recorded = stage.get(key)
    if recorded is not None and recorded != expected:
        raise ConfigError(f"The output directory holds a {what} trained with a different configuration "
                          f"({recorded[:12]} != {expected[:12]}); choose another --out")


# ============================================
# train-pool
# ============================================

def cmd_train_pool(config: ExperimentConfig, resume: bool = False) -> RunManifest:
    """
    Train the member pool (per class when bagged) and cache its samples.

    Member m of class k is trained with seed (master_seed, 'member', m, k) and
    cached with ``samples_per_member`` points. A rerun of a complete pool is a
    no-op; a partial pool is completed only with ``resume``.

    Args:
        config: Resolved experiment
        resume: Complete a partially trained pool

    Returns:
        The run manifest
    """
    if config.pool.size < 1:
        raise ConfigError(f"pool size must be >= 1, got {config.pool.size}")
    manifest = open_manifest(config)
    layout = RunLayout(config.output_dir)
    stage = manifest.stage('train_pool')
    _check_stage_hash(stage, 'pool_hash', config.pool_hash(), 'pool')

    train, _ = prepare_data(config, manifest)
    per_class = split_by_class(training_view(train, config.train_scheme), config.gan)
    jobs = [(m, k) for k in sorted(per_class) for m in range(config.pool.size)]
    completed = set(stage.get('completed', []))
    missing = [(m, k) for m, k in jobs if _member_key(m, k) not in completed]

    if not missing:
        manifest.verify()
        logger.info(f"Pool of {len(jobs)} members already complete; nothing to do")
        return manifest
    if completed and not resume:
        raise ConfigError(f"Partial pool found ({len(completed)}/{len(jobs)} members); "
                          f"rerun with --resume to complete it")

    stage.update({'pool_hash': config.pool_hash(), 'size': config.pool.size, 'classes': len(per_class),
                  'train_scheme': config.train_scheme, 'completed': sorted(completed)})
    manifest.save()
    logger.info(f"Training {len(missing)} of {len(jobs)} pool members with {config.workers} worker(s)")

    def store(index: int, member: GanMember) -> None:
        m, k = missing[index]
        checkpoint = member.save(layout.pool_member(m, k))
        bootstrap_pool([member], config.pool.samples_per_member, [k], [m], layout.pool_samples)
        manifest.register(checkpoint, member_sidecar(checkpoint), layout.pool_samples / cache_filename(m, k))
        stage['completed'] = sorted(set(stage['completed']) | {_member_key(m, k)})
        manifest.save()

    payloads = [(per_class[k], with_seed(config.gan, member_seed(config.master_seed, m, k))) for m, k in missing]
    train_members(payloads, config.workers, on_done=store)
    logger.info(f"Pool complete: {len(jobs)} members in {layout.root / 'pool'}")
    return manifest


def load_sample_pool(config: ExperimentConfig, manifest: RunManifest) -> SamplePool:
    """Per-member sample caches of the trained pool."""
    layout = RunLayout(config.output_dir)
    stage = manifest.stage('train_pool')
    caches = []
    for k in pool_classes(config, manifest):
        for m in range(stage['size']):
            path = layout.pool_samples / cache_filename(m, k)
            if not manifest.has(path):
                raise MissingArtifactError(f"Pool sample cache missing: {path}")
            caches.append(SampleCache.load(path))
    return SamplePool(caches)


@pool_commands.command('train-pool')
@pass_run
def train_pool(run):
    """Train the GAN member pool and cache per-member samples."""
    cmd_train_pool(run.config, resume=run.resume)


# ============================================
# boost
# ============================================

def _load_boost_state(config: ExperimentConfig, layout: RunLayout, class_id: int,
                      points: np.ndarray) -> Optional[Tuple[BoostState, List[GanMember]]]:
    path = layout.boost_state(class_id)
    if not path.exists():
        return None
    saved = read_json(path)
    iteration = int(saved['iteration'])
    history = [np.load(layout.boost_weights(t, class_id)) for t in range(iteration + 1)]
    state = BoostState(class_id, iteration, WeightedDataset(points, history[-1]),
                       list(saved['betas']), list(saved['mixture_weights']), history)
    members = [ModelManager.get_member(layout.boost_member(t, class_id)) for t in range(iteration)]
    return state, members


def cmd_boost(config: ExperimentConfig, resume: bool = False, score_hook=None) -> RunManifest:
    """
    Run boosting per class up to the largest configured T.

    The data weights after every iteration are persisted (``t000`` is the
    initial uniform vector), so a run can resume at any iteration boundary.

    Args:
        config: Resolved experiment
        resume: Continue from persisted state
        score_hook: Replaces discriminator scoring (test hook)

    Returns:
        The run manifest
    """
    manifest = open_manifest(config)
    layout = RunLayout(config.output_dir)
    stage = manifest.stage('boost')
    _check_stage_hash(stage, 'boost_hash', config.boost_hash(), 'boosting run')
    T = config.max_T

    train, _ = prepare_data(config, manifest)
    view = training_view(train, config.train_scheme)
    per_class = split_by_class(view, config.gan)

    saved = {k: _load_boost_state(config, layout, k, points) for k, points in per_class.items()}
    saved = {k: value for k, value in saved.items() if value is not None}
    if saved and all(state.iteration >= T for state, _ in saved.values()) and len(saved) == len(per_class):
        manifest.verify()
        logger.info(f"Boosting already complete at T={T}; nothing to do")
        return manifest
    if saved and not resume:
        raise ConfigError("Partial boosting run found; rerun with --resume to continue it")

    stage.update({'boost_hash': config.boost_hash(), 'T': T, 'classes': len(per_class),
                  'beta_schedule': config.boost.beta_schedule, 'beta_constant': config.boost.beta_constant})
    for k, points in per_class.items():
        if k not in saved:
            initial = layout.boost_weights(0, k)
            initial.parent.mkdir(parents=True, exist_ok=True)
            np.save(initial, WeightedDataset.uniform(points).weights)
            manifest.register(initial)
    manifest.save()

    def persist(state: BoostState, member: GanMember) -> None:
        t, k = state.iteration, state.class_id
        checkpoint = member.save(layout.boost_member(t - 1, k))
        weights_path = layout.boost_weights(t, k)
        np.save(weights_path, state.weights.weights)
        state_path = write_json(layout.boost_state(k), {
            'class_id': k, 'iteration': t, 'betas': state.betas, 'mixture_weights': state.mixture_weights,
            'support': state.weights.support,
        })
        manifest.register(checkpoint, member_sidecar(checkpoint), weights_path, state_path)
        stage[f"class_{k}_iteration"] = t
        manifest.save()
        logger.info(f"Boosting class {k}: iteration {t}/{T} persisted")

    train_boosted(view, T, config.gan, config.master_seed, config.boost.beta_schedule,
                  config.boost.beta_constant, score_hook=score_hook, on_iteration=persist,
                  resume=saved or None)
    logger.info(f"Boosting complete: T={T}, {len(per_class)} class(es)")
    return manifest


@pool_commands.command('boost')
@pass_run
def boost(run):
    """Run boosted ensemble training, persisting weights per iteration."""
    cmd_boost(run.config, resume=run.resume)


# ============================================
# assemble / sample
# ============================================

def running_weights(betas: List[float]) -> List[float]:
    """Mixture weights produced by the β sequence (the new member gets β_t)."""
    weights: List[float] = []
    for beta in betas:
        weights = [w * (1.0 - beta) for w in weights] + [beta]
    return weights


def cmd_assemble(config: ExperimentConfig, method: str, T: int,
                 manifest: Optional[RunManifest] = None) -> Path:
    """
    Write the mixture manifest of a T-member ensemble (p_t = 1/T per class).

    Independent mixtures take pool members 0..T-1 of every class; boosted
    mixtures take the first T boosting iterations.

    Returns:
        Path of the mixture manifest
    """
    manifest = manifest or open_manifest(config)
    layout = RunLayout(config.output_dir)
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    entries: List[MixtureEntry] = []
    running: Dict[str, List[float]] = {}

    if method == 'independent':
        stage = manifest.stage('train_pool')
        classes = pool_classes(config, manifest)
        if T > stage['size']:
            raise ConfigError(f"T={T} exceeds the pool size {stage['size']} (T must be <= pool size)")
        for k in classes:
            for m in range(T):
                path = layout.pool_member(m, k)
                if not manifest.has(path):
                    raise MissingArtifactError(f"Pool member missing: {path}")
                entries.append(MixtureEntry(manifest.relative(path), 1.0 / T, k, m,
                                            member_seed(config.master_seed, m, k)))
    elif method == 'boosted':
        stage = manifest.stage('boost')
        if 'classes' not in stage:
            raise MissingArtifactError("No boosting run in this run directory (run boost first)")
        classes = list(range(stage['classes']))
        for k in classes:
            reached = stage.get(f"class_{k}_iteration", 0)
            if T > reached:
                raise ConfigError(f"T={T} exceeds the {reached} boosting iterations of class {k}")
            for t in range(T):
                entries.append(MixtureEntry(manifest.relative(layout.boost_member(t, k)), 1.0 / T, k, t,
                                            member_seed(config.master_seed, t, k)))
            betas = read_json(layout.boost_state(k))['betas'][:T]
            running[str(k)] = running_weights(betas)
    else:
        raise ConfigError(f"Unknown method '{method}'")

    mixture = MixtureManifest(method, T, len(classes), config.master_seed, entries, running)
    path = mixture.save(layout.mixture(method, T))
    manifest.register(path)
    manifest.save()
    return path


def cmd_sample(config: ExperimentConfig, method: str, T: int, n_total: Optional[int] = None,
               seed: Optional[int] = None, manifest: Optional[RunManifest] = None) -> Path:
    """
    Synthesize a labeled dataset from an assembled mixture.

    Defaults follow the fixed-budget rule: n_total is the real training size.

    Returns:
        Path of the CSV dataset
    """
    manifest = manifest or open_manifest(config)
    layout = RunLayout(config.output_dir)
    mixture_path = layout.mixture(method, T)
    if not manifest.has(mixture_path):
        mixture_path = cmd_assemble(config, method, T, manifest)
    mixture = ModelManager.get_mixture(config.output_dir, MixtureManifest.load(mixture_path))
    n_total = config.train_points if n_total is None else n_total
    seed = derive_seed(config.master_seed, 'sample', T) if seed is None else seed
    dataset = sample_mixture(mixture, n_total, seed, config.pool.allocation, config.grid)
    path = save_dataset(dataset, layout.samples(method, T), provenance={
        'mixture': manifest.relative(mixture_path), 'method': method, 'T': T, 'seed': seed,
        'allocation': config.pool.allocation, 'train_scheme': config.train_scheme,
    })
    manifest.register(path, sidecar_path(path))
    manifest.save()
    return path


@pool_commands.command('assemble')
@click.option('--method', type=click.Choice(['independent', 'boosted']), default=None,
              help='Ensemble method (defaults to the config method)')
@click.option('-T', 'T', type=int, required=True, help='Ensemble iterations')
@pass_run
def assemble(run, method, T):
    """Write the mixture manifest of a T-member ensemble."""
    path = cmd_assemble(run.config, method or run.config.method, T)
    click.echo(str(path))


@pool_commands.command('sample')
@click.option('--method', type=click.Choice(['independent', 'boosted']), default=None,
              help='Ensemble method (defaults to the config method)')
@click.option('-T', 'T', type=int, required=True, help='Ensemble iterations')
@click.option('-n', '--n-total', type=int, default=None, help='Number of points (default: training size)')
@click.option('--sample-seed', type=int, default=None, help='Sampling stream seed')
@pass_run
def sample(run, method, T, n_total, sample_seed):
    """Synthesize a labeled CSV dataset from a mixture."""
    path = cmd_sample(run.config, method or run.config.method, T, n_total, sample_seed)
    click.echo(str(path))

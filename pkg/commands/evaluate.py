"""
GAN Ensemble Lab - Evaluation Commands
Mode metrics, Frechet distance, memorization audit, discriminator heatmaps,
downstream classification and the combined report.

Report files carry no timestamps or absolute paths, so evaluating the same
run twice writes identical bytes.
"""
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd
import psutil

from commands import pass_run
from commands.pool import cmd_assemble, load_sample_pool, pool_classes
from commands.workspace import RunLayout, open_manifest, prepare_data, training_view
from config import VERSION, ExperimentConfig
from data.grid import LabeledDataset, assign_labels, coarsen_labels, scheme_class_count
from data.manifest import MixtureManifest, RunManifest
from models.classifier import (AccuracyCurve, curve_stability, diversity_effect, summarize_runs,
                               train_classifier)
from models.ensemble import (EnsembleMixture, SampleCache, SamplePool, bootstrap_pool, cache_filename,
                             sample_mixture, train_boosted, train_independent)
from models.model_manager import ModelManager
from utils.errors import ConfigError, MissingArtifactError
from utils.helpers import write_json
from utils.metrics import (audit_frame, bootstrap_table, frechet_2d, missed_mode_contrast, nn_audit,
                           score_heatmap)
from utils.rng import derive_seed

logger = logging.getLogger(__name__)

evaluate_commands = click.Group('evaluate')

STEPS = ('modes', 'frechet', 'audit', 'heatmap', 'downstream')

UNLABELED_POOL = ("downstream classification needs class-wise members: set train_scheme to the label scheme "
                  "or 'modes', or choose downstream.labels: nearest_mode")


def _write_csv(frame: pd.DataFrame, path: Path, manifest: RunManifest) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n')
    manifest.register(path)
    return path


def _write_json(payload: Any, path: Path, manifest: RunManifest) -> Path:
    write_json(path, payload)
    manifest.register(path)
    return path


def available_methods(config: ExperimentConfig, manifest: RunManifest) -> List[str]:
    """Methods with trained members covering every configured T."""
    methods = []
    if 'classes' in manifest.stage('train_pool'):
        methods.append('independent')
    boost = manifest.stage('boost')
    if 'classes' in boost and all(boost.get(f"class_{k}_iteration", 0) >= config.max_T
                                  for k in range(boost['classes'])):
        methods.append('boosted')
    if not methods:
        raise MissingArtifactError("Nothing to evaluate: run train-pool or boost first")
    return methods


def check_t_values(config: ExperimentConfig, manifest: RunManifest) -> None:
    stage = manifest.stage('train_pool')
    if 'size' in stage and config.max_T > stage['size']:
        raise ConfigError(f"T={config.max_T} exceeds the pool size {stage['size']} (every T must be <= pool size)")


def load_mixture(config: ExperimentConfig, manifest: RunManifest, method: str, T: int) -> EnsembleMixture:
    path = RunLayout(config.output_dir).mixture(method, T)
    if not manifest.has(path):
        path = cmd_assemble(config, method, T, manifest)
    return ModelManager.get_mixture(config.output_dir, MixtureManifest.load(path))


def boosted_sample_pool(config: ExperimentConfig, manifest: RunManifest) -> SamplePool:
    """Sample caches of the boosted members (member index = iteration)."""
    layout = RunLayout(config.output_dir)
    directory = layout.boost_samples
    mixture = load_mixture(config, manifest, 'boosted', config.max_T)
    caches = []
    for component in mixture.components:
        path = directory / cache_filename(component.iteration, component.class_id)
        if manifest.has(path):
            caches.append(SampleCache.load(path))
            continue
        pool = bootstrap_pool([component.member], config.pool.samples_per_member, [component.class_id],
                              [component.iteration], directory)
        manifest.register(path)
        caches.extend(pool.caches)
    return SamplePool(caches)


# ============================================
# Mode coverage
# ============================================

def eval_modes(config: ExperimentConfig, manifest: RunManifest) -> Dict[str, Path]:
    """Bootstrap mode metrics per (method, T)."""
    layout = RunLayout(config.output_dir)
    tables, iteration_frames = [], []
    seed = derive_seed(config.master_seed, 'bootstrap')
    for method in available_methods(config, manifest):
        if method == 'independent':
            check_t_values(config, manifest)
            pool, fixed = load_sample_pool(config, manifest), False
        else:
            pool, fixed = boosted_sample_pool(config, manifest), True
        table, summaries = bootstrap_table(pool, config.t_values, config.grid, config.bootstrap.n_eval,
                                           config.bootstrap.iterations, seed, fixed_members=fixed)
        table.insert(0, 'method', method)
        tables.append(table)
        for summary in summaries:
            frame = summary.iteration_frame()
            frame.insert(0, 'method', method)
            iteration_frames.append(frame)

    table = pd.concat(tables, ignore_index=True)
    return {
        'modes': _write_csv(table, layout.reports / 'modes.csv', manifest),
        'modes_iterations': _write_csv(pd.concat(iteration_frames, ignore_index=True),
                                       layout.reports / 'modes_iterations.csv', manifest),
    }


# ============================================
# Frechet distance
# ============================================

def eval_frechet(config: ExperimentConfig, manifest: RunManifest, train: LabeledDataset,
                 test: LabeledDataset) -> Dict[str, Path]:
    """Frechet distance of every mixture (and of real training data) to the real test set."""
    layout = RunLayout(config.output_dir)
    n = config.bootstrap.n_eval
    rows = [{'method': 'real', 'T': 0, 'frechet': frechet_2d(test.points, train.points[:n])}]
    for method in available_methods(config, manifest):
        if method == 'independent':
            check_t_values(config, manifest)
        for T in config.t_values:
            synth = sample_mixture(load_mixture(config, manifest, method, T), n,
                                   derive_seed(config.master_seed, 'frechet', T), config.pool.allocation)
            rows.append({'method': method, 'T': T, 'frechet': frechet_2d(test.points, synth.points)})
    return {'frechet': _write_csv(pd.DataFrame(rows), layout.reports / 'frechet.csv', manifest)}


# ============================================
# Memorization audit
# ============================================

def eval_nn_audit(config: ExperimentConfig, manifest: RunManifest, train: LabeledDataset) -> Dict[str, Path]:
    """Closest real/synthetic pairs for the configured method at every T."""
    layout = RunLayout(config.output_dir)
    outputs, summary = {}, []
    method = config.method if config.method in available_methods(config, manifest) else 'independent'
    if method == 'independent':
        check_t_values(config, manifest)
    for T in config.t_values:
        synth = sample_mixture(load_mixture(config, manifest, method, T), config.audit.n_points,
                               derive_seed(config.master_seed, 'audit', T), config.pool.allocation)
        pairs = nn_audit(train.points, synth.points, config.audit.top_m)
        outputs[f"audit_T{T}"] = _write_csv(audit_frame(pairs), layout.reports / 'audit' / f"{method}_T{T}.csv",
                                            manifest)
        summary.append({'method': method, 'T': T, 'min_distance': pairs[0].distance,
                        'mean_top_distance': float(np.mean([p.distance for p in pairs]))})
    outputs['audit'] = _write_csv(pd.DataFrame(summary), layout.reports / 'audit.csv', manifest)
    return outputs


# ============================================
# Discriminator heatmaps
# ============================================

def eval_heatmaps(config: ExperimentConfig, manifest: RunManifest) -> Dict[str, Path]:
    """Score heatmaps of the first pool members plus missed-vs-covered disk scores."""
    layout = RunLayout(config.output_dir)
    pool = load_sample_pool(config, manifest)
    stage = manifest.stage('train_pool')
    outputs, contrast = {}, []
    bounds = config.grid.bounds(config.heatmap.margin)
    for k in pool_classes(config, manifest):
        for m in range(min(config.heatmap.members, stage['size'])):
            member = ModelManager.get_member(layout.pool_member(m, k))
            heatmap = score_heatmap(member, bounds, config.heatmap.resolution)
            path = heatmap.save_csv(layout.reports / 'heatmaps' / f"c{k:02d}_m{m:03d}.csv")
            manifest.register(path)
            outputs[f"heatmap_c{k}_m{m}"] = path
            samples = pool.cache(m, k).points[:config.bootstrap.n_eval]
            result = missed_mode_contrast(member, samples, config.grid,
                                          seed=derive_seed(config.master_seed, 'disk', m, k))
            contrast.append({'class_id': k, 'member': m, **(result or {'missed_modes': 0})})
    outputs['heatmap_contrast'] = _write_json(contrast, layout.reports / 'heatmaps' / 'contrast.json', manifest)
    return outputs


# ============================================
# Downstream classification
# ============================================

def downstream_view(synthetic: LabeledDataset, config: ExperimentConfig) -> LabeledDataset:
    """
    Labels of the downstream task for points synthesized under the training scheme.

    With ``downstream.labels: members`` each point keeps the class of the
    member that drew it, so a member that collapses onto the wrong region
    hands the classifier wrong labels. ``nearest_mode`` relabels every point
    by the closest grid mode instead.
    """
    scheme, grid = config.label_scheme, config.grid
    if config.downstream.labels == 'nearest_mode':
        labels = assign_labels(synthetic.points, grid, scheme).labels
    elif config.train_scheme == scheme:
        labels = synthetic.labels
    elif config.train_scheme == 'modes':
        labels = coarsen_labels(synthetic.labels, grid, scheme)
    else:
        raise ConfigError(UNLABELED_POOL)
    return LabeledDataset(synthetic.points, labels, scheme_class_count(grid, scheme), grid,
                          synthetic.seed, scheme, synthetic.origin)


def downstream_available(config: ExperimentConfig) -> bool:
    return config.class_wise or config.downstream.labels == 'nearest_mode'


def _retrained_mixture(config: ExperimentConfig, train: LabeledDataset, method: str, seed_index: int) -> EnsembleMixture:
    view = training_view(train, config.train_scheme)
    master = derive_seed(config.master_seed, 'retrain', seed_index)
    if method == 'independent':
        return train_independent(view, config.max_T, config.gan, master, config.workers)
    return train_boosted(view, config.max_T, config.gan, master, config.boost.beta_schedule,
                         config.boost.beta_constant)


def eval_downstream(config: ExperimentConfig, manifest: RunManifest, train: LabeledDataset,
                    test: LabeledDataset) -> Dict[str, Path]:
    """
    Train-on-synthetic / test-on-real accuracy curves per (method, T, seed).

    Every synthetic set has the size of the real training set. The mixture is
    fixed across classifier seeds unless ``retrain_mixtures`` is set.
    """
    layout = RunLayout(config.output_dir)
    settings = config.downstream
    real_test = test.relabel(config.label_scheme)
    rows: List[Dict[str, Any]] = []
    curve_frames: List[pd.DataFrame] = []
    outputs: Dict[str, Path] = {}

    def run(method: str, T: int, seed_index: int, synthetic: LabeledDataset) -> AccuracyCurve:
        classifier = replace(settings.classifier, seed=derive_seed(config.master_seed, 'classifier', seed_index))
        curve = train_classifier(synthetic, real_test, classifier, train_size=config.train_points)
        tail_mean, tail_std, drop = curve_stability(curve, settings.tail_fraction)
        rows.append({'method': method, 'T': T, 'seed': seed_index, 'best_accuracy': curve.best_accuracy,
                     'final_accuracy': curve.final_accuracy, 'tail_mean': tail_mean, 'tail_std': tail_std,
                     'best_minus_final': drop, 'missing_classes': len(curve.missing_classes)})
        frame = curve.frame()
        frame.insert(0, 'seed', seed_index)
        frame.insert(0, 'T', T)
        frame.insert(0, 'method', method)
        curve_frames.append(frame)
        name = f"{method}_T{T}_seed{seed_index:02d}"
        outputs[f"curve_{name}"] = _write_csv(curve.frame(), layout.reports / 'curves' / f"{name}.csv", manifest)
        return curve

    if settings.real_baseline:
        real_train = train.relabel(config.label_scheme)
        for s in range(settings.seeds):
            run('real', 0, s, real_train)

    for method in available_methods(config, manifest):
        if method == 'independent':
            check_t_values(config, manifest)
        for s in range(settings.seeds):
            full = _retrained_mixture(config, train, method, s) if settings.retrain_mixtures else None
            for T in config.t_values:
                mixture = full.prefix(T) if full is not None else load_mixture(config, manifest, method, T)
                sample_seed = derive_seed(config.master_seed, 'downstream-sample', T,
                                          s if settings.retrain_mixtures else 0)
                synthetic = sample_mixture(mixture, config.train_points, sample_seed, config.pool.allocation,
                                           config.grid)
                run(method, T, s, downstream_view(synthetic, config))

    runs = pd.DataFrame(rows)
    outputs['downstream_runs'] = _write_csv(runs, layout.reports / 'downstream_runs.csv', manifest)
    outputs['downstream_summary'] = _write_csv(summarize_runs(rows), layout.reports / 'downstream_summary.csv',
                                               manifest)
    outputs['downstream_curves'] = _write_csv(pd.concat(curve_frames, ignore_index=True),
                                              layout.reports / 'downstream_curves.csv', manifest)

    effects = {}
    low, high = min(config.t_values), config.max_T
    for method in sorted(set(runs['method']) - {'real'}):
        if low == high or settings.seeds < 2:
            break
        subset = runs[runs['method'] == method]
        base, comp = subset[subset['T'] == low], subset[subset['T'] == high]
        effect = diversity_effect(base['best_accuracy'], comp['best_accuracy'], low, high)
        effects[method] = {**effect.to_dict(), 'tail_std_baseline': float(base['tail_std'].mean()),
                           'tail_std_compared': float(comp['tail_std'].mean())}
    outputs['diversity'] = _write_json(effects, layout.reports / 'diversity.json', manifest)
    return outputs


# ============================================
# eval / report
# ============================================

def cmd_eval(config: ExperimentConfig, steps: Optional[Sequence[str]] = None) -> Dict[str, Path]:
    """
    Run the selected evaluation steps over a trained pool (and boosting run).

    Args:
        config: Resolved experiment
        steps: Subset of 'modes', 'frechet', 'audit', 'heatmap', 'downstream'

    Returns:
        Report name -> path
    """
    requested = steps is not None
    steps = list(steps or STEPS)
    unknown = set(steps) - set(STEPS)
    if unknown:
        raise ConfigError(f"Unknown evaluation step(s): {', '.join(sorted(unknown))}")
    if 'downstream' in steps and not downstream_available(config):
        if requested:
            raise ConfigError(UNLABELED_POOL)
        logger.warning("Skipping downstream classification: the pool is unlabeled (train_scheme none)")
        steps.remove('downstream')
    manifest = open_manifest(config)
    available_methods(config, manifest)
    train, test = prepare_data(config, manifest)
    outputs: Dict[str, Path] = {}
    try:
        if 'modes' in steps:
            outputs.update(eval_modes(config, manifest))
        if 'frechet' in steps:
            outputs.update(eval_frechet(config, manifest, train, test))
        if 'audit' in steps:
            outputs.update(eval_nn_audit(config, manifest, train))
        if 'heatmap' in steps:
            outputs.update(eval_heatmaps(config, manifest))
        if 'downstream' in steps:
            outputs.update(eval_downstream(config, manifest, train, test))
    finally:
        manifest.save()
    memory = psutil.Process().memory_info().rss / 1024 / 1024
    logger.info(f"Evaluation wrote {len(outputs)} report(s); resident memory {memory:.0f} MB")
    return outputs


def _render_figures(config: ExperimentConfig, manifest: RunManifest, test: LabeledDataset) -> Dict[str, Path]:
    from utils import plots

    layout = RunLayout(config.output_dir)
    outputs = {}
    modes = pd.read_csv(layout.reports / 'modes.csv')
    outputs['fig_modes'] = plots.plot_modes(modes, layout.figures / 'modes.png')

    method = config.method if config.method in available_methods(config, manifest) else 'independent'
    panels = {}
    for T in sorted({min(config.t_values), config.max_T}):
        synth = sample_mixture(load_mixture(config, manifest, method, T), config.bootstrap.n_eval,
                               derive_seed(config.master_seed, 'figure', T), config.pool.allocation)
        panels[f"{method} T={T}"] = (synth.points, synth.origin)
    outputs['fig_samples'] = plots.plot_samples(test.points, panels, config.grid, layout.figures / 'samples.png')

    pool = load_sample_pool(config, manifest)
    stage = manifest.stage('train_pool')
    for k in pool_classes(config, manifest):
        for m in range(min(config.heatmap.members, stage['size'])):
            member = ModelManager.get_member(layout.pool_member(m, k))
            heatmap = score_heatmap(member, config.grid.bounds(config.heatmap.margin), config.heatmap.resolution)
            outputs[f"fig_heatmap_c{k}_m{m}"] = plots.plot_heatmap(
                heatmap, pool.cache(m, k).points[:config.bootstrap.n_eval],
                layout.figures / f"heatmap_c{k:02d}_m{m:03d}.png")

    if downstream_available(config):
        curves = pd.read_csv(layout.reports / 'downstream_curves.csv')
        outputs['fig_curves'] = plots.plot_curves(curves, layout.figures / 'curves.png', config.t_values)
    manifest.register(*outputs.values())
    return outputs


def cmd_report(config: ExperimentConfig) -> Dict[str, Path]:
    """Every evaluation step, the figures, and a JSON bundle of the headline numbers."""
    outputs = cmd_eval(config)
    manifest = open_manifest(config)
    _, test = prepare_data(config, manifest)
    layout = RunLayout(config.output_dir)
    outputs.update(_render_figures(config, manifest, test))
    bundle = {
        'config_hash': config.hash(),
        'master_seed': config.master_seed,
        'tool_version': VERSION,
        'modes': pd.read_csv(outputs['modes']).to_dict(orient='records'),
        'frechet': pd.read_csv(outputs['frechet']).to_dict(orient='records'),
        'audit': pd.read_csv(outputs['audit']).to_dict(orient='records'),
        'downstream': (pd.read_csv(outputs['downstream_summary']).to_dict(orient='records')
                       if 'downstream_summary' in outputs else []),
    }
    outputs['report'] = _write_json(bundle, layout.reports / 'report.json', manifest)
    manifest.save()
    return outputs


# ============================================
# Click commands
# ============================================

def _echo(outputs: Dict[str, Path]) -> None:
    for name in sorted(outputs):
        click.echo(f"{name}: {outputs[name]}")


@evaluate_commands.command('eval-modes')
@pass_run
def eval_modes_command(run):
    """Bootstrap mode recovery and high-quality fraction per T."""
    _echo(cmd_eval(run.config, ['modes']))


@evaluate_commands.command('eval-frechet')
@pass_run
def eval_frechet_command(run):
    """Frechet distance of each mixture to the real test data."""
    _echo(cmd_eval(run.config, ['frechet']))


@evaluate_commands.command('nn-audit')
@pass_run
def nn_audit_command(run):
    """Nearest real/synthetic pairs (memorization audit)."""
    _echo(cmd_eval(run.config, ['audit']))


@evaluate_commands.command('heatmap')
@pass_run
def heatmap_command(run):
    """Discriminator score heatmaps of pool members."""
    _echo(cmd_eval(run.config, ['heatmap']))


@evaluate_commands.command('downstream')
@pass_run
def downstream_command(run):
    """Train-on-synthetic / test-on-real classification curves."""
    _echo(cmd_eval(run.config, ['downstream']))


@evaluate_commands.command('report')
@pass_run
def report_command(run):
    """Run every evaluation and render the figures."""
    _echo(cmd_report(run.config))

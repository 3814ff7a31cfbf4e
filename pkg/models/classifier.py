"""
GAN Ensemble Lab - Downstream Classifier
Train-on-synthetic / test-on-real evaluation with accuracy-over-steps curves.

The classifier is a dense/ReLU MLP with a K-way softmax head. Test accuracy
on the real held-out set is recorded every ``eval_every`` steps and the best
value is the headline metric; the real test set doubles as validation set,
reproducing the evaluation protocol of the experiment.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import accuracy_score

from data.grid import LabeledDataset
from models.layers import DenseLayer, ReLULayer
from models.losses import cross_entropy
from models.mlp import MlpModel
from models.optim import AdamState, adam_step
from utils.errors import ConfigError, InsufficientDataError, NonFiniteError
from utils.rng import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierConfig:
    hidden_widths: Tuple[int, ...] = (64, 64)
    epochs: int = 10
    batch_size: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eval_every: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_widths', tuple(int(w) for w in self.hidden_widths))
        if any(w <= 0 for w in self.hidden_widths):
            raise ConfigError("classifier widths must be positive")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("classifier epochs and batch_size must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['hidden_widths'] = list(self.hidden_widths)
        return data


@dataclass
class AccuracyCurve:
    """Test accuracy at strictly increasing training steps."""
    steps: List[int] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)
    missing_classes: List[int] = field(default_factory=list)

    def record(self, step: int, accuracy: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"curve steps must increase ({step} after {self.steps[-1]})")
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy {accuracy} outside [0, 1]")
        self.steps.append(int(step))
        self.accuracies.append(float(accuracy))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def best_accuracy(self) -> float:
        return max(self.accuracies)

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({'step': self.steps, 'accuracy': self.accuracies})


def build_classifier(input_width: int, class_count: int, config: ClassifierConfig) -> MlpModel:
    rng = make_rng(config.seed, 'init-classifier')
    layers = []
    width = input_width
    for hidden in config.hidden_widths:
        layers.append(DenseLayer(width, hidden, rng))
        layers.append(ReLULayer(hidden))
        width = hidden
    layers.append(DenseLayer(width, class_count, rng))
    return MlpModel(layers, name='classifier')


def _evaluate(model: MlpModel, test_x: np.ndarray, test_y: np.ndarray) -> float:
    predictions = model.predict(test_x).argmax(axis=1)
    return float(accuracy_score(test_y, predictions))


def train_classifier(synthetic: LabeledDataset, real_test: LabeledDataset, config: ClassifierConfig,
                     train_size: Optional[int] = None) -> AccuracyCurve:
    """
    Train on synthetic data only and track accuracy on real test data.

    Inputs are standardized with the synthetic set's statistics. The final
    step is always evaluated, so the curve is never empty.

    Args:
        synthetic: Labeled synthetic training data
        real_test: Labeled real held-out data
        config: Classifier configuration
        train_size: Expected size of the synthetic set (the real training size)

    Returns:
        AccuracyCurve
    """
    if synthetic.class_count != real_test.class_count:
        raise ConfigError(f"class count mismatch: synthetic {synthetic.class_count}, "
                          f"real {real_test.class_count}")
    if train_size is not None and len(synthetic) != train_size:
        raise ConfigError(f"synthetic set has {len(synthetic)} points, budget is {train_size}")
    if len(synthetic) == 0 or len(real_test) == 0:
        raise InsufficientDataError("classifier training needs non-empty datasets")

    curve = AccuracyCurve()
    counts = synthetic.class_counts()
    curve.missing_classes = [int(k) for k in np.flatnonzero(counts == 0)]
    if curve.missing_classes:
        logger.warning(f"Classes {curve.missing_classes} absent from synthetic data (mode collapse?)")

    mean = synthetic.points.mean(axis=0)
    scale = synthetic.points.std(axis=0)
    scale[scale == 0] = 1.0
    train_x = (synthetic.points - mean) / scale
    test_x = (real_test.points - mean) / scale

    model = build_classifier(train_x.shape[1], synthetic.class_count, config).train()
    optimizer = AdamState(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    rng = make_rng(config.seed, 'classifier-train')
    n = len(synthetic)
    batch = min(config.batch_size, n)
    step = 0

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            rows = order[start:start + batch]
            logits = model.forward(train_x[rows])
            loss, grad = cross_entropy(logits, synthetic.labels[rows])
            if not np.isfinite(loss):
                raise NonFiniteError(f"classifier loss non-finite at step {step}",
                                     state={'step': step, 'seed': config.seed})
            model.backward(grad)
            adam_step(optimizer, model.parameters(), model.gradients())
            step += 1
            if step % config.eval_every == 0:
                curve.record(step, _evaluate(model, test_x, real_test.labels))

    if not curve.steps or curve.steps[-1] != step:
        curve.record(max(step, 1), _evaluate(model, test_x, real_test.labels))
    logger.debug(f"Classifier seed {config.seed}: best {curve.best_accuracy:.4f}, "
                 f"final {curve.final_accuracy:.4f} after {step} steps")
    return curve


def curve_stability(curve: AccuracyCurve, tail_fraction: float = 0.5) -> Tuple[float, float, float]:
    """
    Tail statistics of an accuracy curve.

    Returns:
        (tail_mean, tail_std, best_minus_final); the tail is the last
        ceil(tail_fraction * len) evaluation points, std with ddof=0
    """
    if len(curve) == 0:
        raise InsufficientDataError("empty accuracy curve")
    if not 0.0 < tail_fraction <= 1.0:
        raise ConfigError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    size = max(1, math.ceil(tail_fraction * len(curve)))
    tail = np.asarray(curve.accuracies[-size:])
    return float(tail.mean()), float(tail.std(ddof=0)), curve.best_accuracy - curve.final_accuracy


@dataclass
class DiversityEffect:
    """One-sided Welch comparison of best accuracies: larger T vs T=1."""
    baseline_T: int
    compared_T: int
    baseline_mean: float
    compared_mean: float
    statistic: float
    p_value: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return bool(self.compared_mean > self.baseline_mean and self.p_value < self.alpha)

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), 'significant': self.significant}


def diversity_effect(baseline: Sequence[float], compared: Sequence[float], baseline_T: int = 1,
                     compared_T: int = 5, alpha: float = 0.05) -> DiversityEffect:
    """Test whether ``compared`` best accuracies exceed ``baseline`` ones."""
    baseline, compared = np.asarray(baseline, dtype=np.float64), np.asarray(compared, dtype=np.float64)
    if baseline.size < 2 or compared.size < 2:
        raise InsufficientDataError("the Welch test needs at least 2 runs per group")
    if np.ptp(baseline) == 0 and np.ptp(compared) == 0:
        # zero variance in both groups: the test statistic is undefined
        better = compared.mean() > baseline.mean()
        statistic, p_value = (np.inf, 0.0) if better else (-np.inf if compared.mean() < baseline.mean() else 0.0, 1.0)
    else:
        result = stats.ttest_ind(compared, baseline, equal_var=False, alternative='greater')
        statistic, p_value = float(result.statistic), float(result.pvalue)
    return DiversityEffect(baseline_T, compared_T, float(baseline.mean()), float(compared.mean()),
                           float(statistic), float(p_value), alpha)


def summarize_runs(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    """
    Aggregate per-run rows keyed by (method, T, seed) into mean/std per (method, T).

    Each row carries 'method', 'T', 'seed', 'best_accuracy', 'final_accuracy'
    and 'tail_std'.
    """
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    grouped = frame.groupby(['method', 'T'], sort=True)
    summary = grouped.agg(
        runs=('seed', 'count'),
        best_mean=('best_accuracy', 'mean'),
        best_std=('best_accuracy', lambda s: float(np.std(s, ddof=0))),
        final_mean=('final_accuracy', 'mean'),
        tail_std_mean=('tail_std', 'mean'),
    )
    return summary.reset_index()

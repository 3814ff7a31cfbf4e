"""
GAN Ensemble Lab - Layers
Fixed layer vocabulary of the engine: dense, batch normalization, ReLU and
maxout, each with an exact hand-written backward pass.

Every layer keeps its trainable arrays in ``params`` and a gradient slot of the
same shape in ``grads``. ``forward(x, training, store)`` caches what
``backward`` needs only when ``store`` is true, so inference through
``store=False`` leaves the layer untouched and is safe to share across threads.
"""
import logging
from typing import Dict, Optional

import numpy as np

from models.tensor import DTYPE, check_width, glorot_uniform, zeros
from utils.errors import BackwardBeforeForwardError, ShapeError

logger = logging.getLogger(__name__)


class Layer:
    """Base class: parameter registry, gradient slots and cache handling."""

    kind = 'layer'

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self._cache: Optional[dict] = None

    @property
    def in_width(self) -> int:
        raise NotImplementedError

    @property
    def out_width(self) -> int:
        raise NotImplementedError

    def forward(self, x: np.ndarray, training: bool = True, store: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for name, value in self.params.items():
            self.grads[name] = np.zeros_like(value)

    def _require_cache(self) -> dict:
        if self._cache is None:
            raise BackwardBeforeForwardError(f"{self.kind}: backward called before forward")
        return self._cache

    def describe(self) -> dict:
        return {'kind': self.kind, 'in': self.in_width, 'out': self.out_width}


class DenseLayer(Layer):
    """Affine map y = x W + b with W of shape [in x out]."""

    kind = 'dense'

    def __init__(self, in_dim: int, out_dim: int, rng: Optional[np.random.Generator] = None,
                 init: str = 'glorot'):
        super().__init__()
        if in_dim <= 0 or out_dim <= 0:
            raise ShapeError(f"Dense widths must be positive, got {in_dim}->{out_dim}")
        if init == 'glorot':
            if rng is None:
                raise ValueError("glorot init needs an rng")
            weight = glorot_uniform(rng, in_dim, out_dim)
        elif init == 'zeros':
            weight = zeros((in_dim, out_dim))
        elif init == 'identity':
            if in_dim != out_dim:
                raise ShapeError("identity init needs a square layer")
            weight = np.eye(in_dim, dtype=DTYPE)
        else:
            raise ValueError(f"Unknown init '{init}'")
        self.params = {'weight': weight, 'bias': zeros((out_dim,))}
        self.zero_grad()

    @property
    def in_width(self) -> int:
        return self.params['weight'].shape[0]

    @property
    def out_width(self) -> int:
        return self.params['weight'].shape[1]

    def forward(self, x, training=True, store=True):
        check_width(x, self.in_width, 'dense input')
        if store:
            self._cache = {'x': x}
        return x @ self.params['weight'] + self.params['bias']

    def backward(self, grad_out):
        x = self._require_cache()['x']
        self.grads['weight'] = x.T @ grad_out
        self.grads['bias'] = grad_out.sum(axis=0)
        return grad_out @ self.params['weight'].T


class BatchNormLayer(Layer):
    """
    Batch normalization over the feature axis.

    Training mode normalizes with (biased) batch statistics and updates the
    running statistics as ``running = momentum * running + (1 - momentum) * batch``.
    Inference mode uses the running statistics, making the output a pure
    function of each row.
    """

    kind = 'batchnorm'

    def __init__(self, width: int, epsilon: float = 1e-5, momentum: float = 0.9):
        super().__init__()
        if width <= 0:
            raise ShapeError(f"BatchNorm width must be positive, got {width}")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        self.epsilon = float(epsilon)
        self.momentum = float(momentum)
        self.params = {'gamma': np.ones(width, dtype=DTYPE), 'beta': zeros((width,))}
        self.buffers = {'running_mean': zeros((width,)), 'running_var': np.ones(width, dtype=DTYPE)}
        self.zero_grad()

    @property
    def in_width(self) -> int:
        return self.params['gamma'].shape[0]

    @property
    def out_width(self) -> int:
        return self.in_width

    @staticmethod
    def batch_statistics(x: np.ndarray):
        """Mean and biased variance over the batch axis."""
        if x.shape[0] < 2:
            raise ShapeError("batchnorm in training mode needs at least 2 rows")
        mean = x.mean(axis=0)
        centered = x - mean
        return mean, (centered * centered).mean(axis=0)

    def forward(self, x, training=True, store=True):
        check_width(x, self.in_width, 'batchnorm input')
        gamma, beta = self.params['gamma'], self.params['beta']
        if training:
            mean, var = self.batch_statistics(x)
            centered = x - mean
            if store:
                m = self.momentum
                self.buffers['running_mean'] = m * self.buffers['running_mean'] + (1.0 - m) * mean
                self.buffers['running_var'] = m * self.buffers['running_var'] + (1.0 - m) * var
        else:
            centered = x - self.buffers['running_mean']
            var = self.buffers['running_var']
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = centered * inv_std
        if store:
            self._cache = {'x_hat': x_hat, 'inv_std': inv_std, 'training': training}
        return x_hat * gamma + beta

    def backward(self, grad_out):
        cache = self._require_cache()
        x_hat, inv_std = cache['x_hat'], cache['inv_std']
        self.grads['gamma'] = (grad_out * x_hat).sum(axis=0)
        self.grads['beta'] = grad_out.sum(axis=0)
        d_xhat = grad_out * self.params['gamma']
        if not cache['training']:
            return d_xhat * inv_std
        n = grad_out.shape[0]
        return (inv_std / n) * (n * d_xhat - d_xhat.sum(axis=0) - x_hat * (d_xhat * x_hat).sum(axis=0))

    def describe(self) -> dict:
        info = super().describe()
        info.update({'epsilon': self.epsilon, 'momentum': self.momentum})
        return info


class ReLULayer(Layer):
    kind = 'relu'

    def __init__(self, width: int):
        super().__init__()
        self.width = width

    @property
    def in_width(self) -> int:
        return self.width

    @property
    def out_width(self) -> int:
        return self.width

    def forward(self, x, training=True, store=True):
        check_width(x, self.width, 'relu input')
        mask = x > 0
        if store:
            self._cache = {'mask': mask}
        return x * mask

    def backward(self, grad_out):
        return grad_out * self._require_cache()['mask']


class MaxoutLayer(Layer):
    """
    Max over contiguous pools of ``pool_size`` pre-activations.

    Input width W*pool_size is viewed as [W x pool_size]; the output keeps the
    maximum of each pool. The gradient flows to the first maximal entry.
    """

    kind = 'maxout'

    def __init__(self, in_dim: int, pool_size: int):
        super().__init__()
        if pool_size <= 0:
            raise ShapeError(f"pool_size must be positive, got {pool_size}")
        if in_dim % pool_size != 0:
            raise ShapeError(f"maxout input width {in_dim} is not divisible by pool size {pool_size}")
        self.width = in_dim
        self.pool_size = pool_size

    @property
    def in_width(self) -> int:
        return self.width

    @property
    def out_width(self) -> int:
        return self.width // self.pool_size

    def forward(self, x, training=True, store=True):
        check_width(x, self.width, 'maxout input')
        pools = x.reshape(x.shape[0], self.out_width, self.pool_size)
        which = pools.argmax(axis=2)
        if store:
            self._cache = {'which': which, 'batch': x.shape[0]}
        return np.take_along_axis(pools, which[:, :, None], axis=2)[:, :, 0]

    def backward(self, grad_out):
        cache = self._require_cache()
        grad_pools = np.zeros((cache['batch'], self.out_width, self.pool_size), dtype=DTYPE)
        np.put_along_axis(grad_pools, cache['which'][:, :, None], grad_out[:, :, None], axis=2)
        return grad_pools.reshape(cache['batch'], self.width)

    def describe(self) -> dict:
        info = super().describe()
        info['pool_size'] = self.pool_size
        return info

"""
GAN Ensemble Lab - MLP Model
Ordered stack of layers with a named parameter registry.
"""
import logging
from typing import Dict, List, Optional

import numpy as np

from models.layers import BatchNormLayer, Layer
from models.tensor import as_tensor, check_finite, check_width
from utils.errors import BackwardBeforeForwardError, ShapeError

logger = logging.getLogger(__name__)


class MlpModel:
    """
    Sequential model over the layer vocabulary.

    Parameters are addressed as ``"<layer index>.<name>"`` (``"0.weight"``,
    ``"1.gamma"``); running statistics of batchnorm layers are buffers under the
    same scheme. ``forward`` caches intermediates for ``backward``; ``predict``
    runs inference without touching any state.
    """

    def __init__(self, layers: List[Layer], name: str = 'mlp'):
        if not layers:
            raise ShapeError("An MLP needs at least one layer")
        for left, right in zip(layers, layers[1:]):
            if left.out_width != right.in_width:
                raise ShapeError(f"{name}: layer widths incompatible "
                                 f"({left.kind} out {left.out_width} -> {right.kind} in {right.in_width})")
        self.layers = layers
        self.name = name
        self.training = True
        self._has_forward = False

    # -- mode --------------------------------------------------------------

    def train(self) -> 'MlpModel':
        self.training = True
        return self

    def eval(self) -> 'MlpModel':
        self.training = False
        return self

    # -- shape -------------------------------------------------------------

    @property
    def input_width(self) -> int:
        return self.layers[0].in_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def has_batchnorm(self) -> bool:
        return any(isinstance(layer, BatchNormLayer) for layer in self.layers)

    # -- registry ----------------------------------------------------------

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live references to every trainable array."""
        return {f"{i}.{key}": value
                for i, layer in enumerate(self.layers) for key, value in layer.params.items()}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {f"{i}.{key}": value
                for i, layer in enumerate(self.layers) for key, value in layer.grads.items()}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {f"{i}.{key}": value
                for i, layer in enumerate(self.layers) for key, value in layer.buffers.items()}

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.parameters().values()))

    def parameter_vector(self) -> np.ndarray:
        """All parameters flattened in registry order."""
        return np.concatenate([value.ravel() for value in self.parameters().values()])

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        """Replace a parameter array in place (shape must match)."""
        index, key = name.split('.', 1)
        layer = self.layers[int(index)]
        store = layer.params if key in layer.params else layer.buffers
        if key not in store:
            raise KeyError(name)
        value = as_tensor(value, name)
        if value.shape != store[key].shape:
            raise ShapeError(f"{name}: expected shape {store[key].shape}, got {value.shape}")
        store[key][...] = value

    def state_dict(self) -> Dict[str, Dict[str, np.ndarray]]:
        return {
            'params': {k: v.copy() for k, v in self.parameters().items()},
            'buffers': {k: v.copy() for k, v in self.buffers().items()},
        }

    def load_state_dict(self, state: Dict[str, Dict[str, np.ndarray]]) -> None:
        expected = set(self.parameters()) | set(self.buffers())
        provided = set(state.get('params', {})) | set(state.get('buffers', {}))
        if expected != provided:
            missing = sorted(expected - provided)
            extra = sorted(provided - expected)
            raise ShapeError(f"{self.name}: state mismatch (missing={missing}, unexpected={extra})")
        for group in ('params', 'buffers'):
            for name, value in state.get(group, {}).items():
                self.set_parameter(name, value)

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    # -- passes ------------------------------------------------------------

    def forward(self, batch: np.ndarray) -> np.ndarray:
        """
        Run the model and cache intermediates for backward.

        Args:
            batch: [B x input_width] array

        Returns:
            [B x output_width] activations
        """
        out = as_tensor(batch, f"{self.name} input", ndim=2)
        check_width(out, self.input_width, f"{self.name} input")
        check_finite(out, f"{self.name} input")
        for layer in self.layers:
            out = layer.forward(out, training=self.training, store=True)
        self._has_forward = True
        return out

    def backward(self, loss_grad: np.ndarray) -> np.ndarray:
        """
        Backpropagate dL/d(output) through the cached forward pass.

        Fills every layer's gradient slots and returns dL/d(input), which is
        what lets the generator learn from the discriminator.

        Args:
            loss_grad: [B x output_width] gradient of the loss w.r.t. the output

        Returns:
            [B x input_width] gradient w.r.t. the input batch
        """
        if not self._has_forward:
            raise BackwardBeforeForwardError(f"{self.name}: backward called before forward")
        grad = as_tensor(loss_grad, f"{self.name} loss_grad", ndim=2)
        check_width(grad, self.output_width, f"{self.name} loss_grad")
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict(self, batch: np.ndarray, chunk_size: Optional[int] = 8192) -> np.ndarray:
        """Stateless inference (batchnorm uses running statistics)."""
        data = as_tensor(batch, f"{self.name} input", ndim=2)
        check_width(data, self.input_width, f"{self.name} input")
        if data.shape[0] == 0:
            return np.zeros((0, self.output_width))
        outputs = []
        step = chunk_size or data.shape[0]
        for start in range(0, data.shape[0], step):
            out = data[start:start + step]
            for layer in self.layers:
                out = layer.forward(out, training=False, store=False)
            outputs.append(out)
        return np.concatenate(outputs, axis=0)

    def batch_forward(self, batch: np.ndarray) -> np.ndarray:
        """Training-mode normalization (batch statistics) without touching running statistics or caches."""
        out = as_tensor(batch, f"{self.name} input", ndim=2)
        check_width(out, self.input_width, f"{self.name} input")
        for layer in self.layers:
            out = layer.forward(out, training=True, store=False)
        return out

    def recalibrate_batchnorm(self, batch: np.ndarray) -> np.ndarray:
        """
        Replace every running mean/variance with the exact statistics the
        layer sees on ``batch`` in training mode.

        Afterwards ``predict(batch)`` reproduces ``batch_forward(batch)``.
        Returns the model output on ``batch``.
        """
        out = as_tensor(batch, f"{self.name} input", ndim=2)
        check_width(out, self.input_width, f"{self.name} input")
        check_finite(out, f"{self.name} input")
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                mean, var = layer.batch_statistics(out)
                layer.buffers['running_mean'] = mean
                layer.buffers['running_var'] = var
            out = layer.forward(out, training=True, store=False)
        return out

    def describe(self) -> List[dict]:
        return [layer.describe() for layer in self.layers]

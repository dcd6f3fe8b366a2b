# src/network.py
"""Capas como objetos con estado (caché del forward y gradientes) y el contenedor Network."""
import hashlib
import logging

import numpy as np

from .errors import ShapeError, ValidationError
from .layers import (
    ConvParams, LstmParams, check_finite,
    temporal_conv_forward, temporal_conv_backward,
    max_pool_forward, max_pool_backward,
    fully_connected_forward, fully_connected_backward,
    lstm_forward, lstm_backward,
    relu_forward, relu_backward,
    dropout, dropout_backward,
)
from .losses import sigmoid, softmax


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, mode, rng):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def iter_slots(self, prefix):
        """Pares (nombre, capa, clave) de los parámetros en orden de construcción."""
        for key in self.params:
            yield f"{prefix}{self.kind}.{key}", self, key

    def describe(self):
        return self.kind

    def walk(self):
        yield self


class TemporalConv(Layer):
    kind = "conv"

    def __init__(self, filter_size, c_in, c_out, rng):
        super().__init__()
        self.params = {
            "weights": glorot_uniform(rng, (filter_size, 1, c_in, c_out), filter_size * c_in, filter_size * c_out),
            "bias": np.zeros(c_out),
        }
        self._x = None

    def forward(self, x, mode, rng):
        self._x = x
        return temporal_conv_forward(x, ConvParams(self.params["weights"], self.params["bias"]))

    def backward(self, grad):
        grad_x, gw, gb = temporal_conv_backward(grad, self._x, ConvParams(self.params["weights"], self.params["bias"]))
        self.grads = {"weights": gw, "bias": gb}
        return grad_x

    def describe(self):
        F, _, c_in, c_out = self.params["weights"].shape
        return f"conv[{F}x1] {c_in}->{c_out}"


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode, rng):
        self._x = x
        return relu_forward(x)

    def backward(self, grad):
        return relu_backward(grad, self._x)


class MaxPool(Layer):
    kind = "pool"

    def __init__(self, size, stride):
        super().__init__()
        self.size, self.stride = size, stride

    def forward(self, x, mode, rng):
        self._shape = x.shape
        out, self._indices = max_pool_forward(x, self.size, self.stride, return_indices=True)
        return out

    def backward(self, grad):
        return max_pool_backward(grad, self._shape, self._indices)

    def describe(self):
        return f"maxpool[{self.size}x1]/{self.stride}"


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, mode, rng):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class TimeFlatten(Layer):
    """[B, T, D, C] -> [B, T, D*C]: cada paso de la LSTM ve todos los canales convolucionados."""
    kind = "time_flatten"

    def forward(self, x, mode, rng):
        self._shape = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        self.rate = rate
        self._mask = None

    def forward(self, x, mode, rng):
        out, self._mask = dropout(x, self.rate, mode, rng, return_mask=True)
        return out

    def backward(self, grad):
        return dropout_backward(grad, self._mask)

    def describe(self):
        return f"dropout({self.rate})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.params = {
            "weights": glorot_uniform(rng, (n_in, n_out), n_in, n_out),
            "bias": np.zeros(n_out),
        }

    def forward(self, x, mode, rng):
        self._x = x
        return fully_connected_forward(x, self.params["weights"], self.params["bias"])

    def backward(self, grad):
        grad_x, gw, gb = fully_connected_backward(grad, self._x, self.params["weights"])
        self.grads = {"weights": gw, "bias": gb}
        return grad_x

    def describe(self):
        return f"dense {self.params['weights'].shape[0]}->{self.params['weights'].shape[1]}"


class LSTM(Layer):
    kind = "lstm"

    def __init__(self, n_in, hidden, rng, return_sequences, forget_bias=1.0):
        super().__init__()
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = forget_bias
        self.params = {
            "w_x": glorot_uniform(rng, (n_in, 4 * hidden), n_in, hidden),
            "w_h": glorot_uniform(rng, (hidden, 4 * hidden), hidden, hidden),
            "b": bias,
        }
        self.return_sequences = return_sequences

    def _lstm_params(self):
        return LstmParams(self.params["w_x"], self.params["w_h"], self.params["b"])

    def forward(self, x, mode, rng):
        hs, h_last, _, self._cache = lstm_forward(x, self._lstm_params(), return_cache=True)
        return hs if self.return_sequences else h_last

    def backward(self, grad):
        if self.return_sequences:
            grad_seq, g, _, _ = lstm_backward(grad, None, self._lstm_params(), self._cache)
        else:
            grad_seq, g, _, _ = lstm_backward(None, grad, self._lstm_params(), self._cache)
        self.grads = {"w_x": g.w_x, "w_h": g.w_h, "b": g.b}
        return grad_seq

    def describe(self):
        return f"lstm {self.params['w_x'].shape[0]}->{self.params['w_h'].shape[0]}" + \
            (" (seq)" if self.return_sequences else "")


class SigmoidHead(Layer):
    kind = "sigmoid"

    def forward(self, x, mode, rng):
        self._out = sigmoid(x)
        return self._out

    def backward(self, grad):
        return grad * self._out * (1.0 - self._out)


class SoftmaxHead(Layer):
    kind = "softmax"

    def forward(self, x, mode, rng):
        self._out = softmax(x, axis=-1)
        return self._out

    def backward(self, grad):
        s = self._out
        return s * (grad - np.sum(grad * s, axis=-1, keepdims=True))


def run_sequence(layers, x, mode, rng):
    for layer in layers:
        x = layer.forward(x, mode, rng)
    return x


def backprop_sequence(layers, grad):
    for layer in reversed(layers):
        grad = layer.backward(grad)
    return grad


class ChannelBranches(Layer):
    """Un bloque por grupo de canales (IMU); las salidas planas se concatenan en orden de grupo."""
    kind = "branches"

    def __init__(self, groups, branches):
        super().__init__()
        if len(groups) != len(branches) or not groups:
            raise ValidationError("Cada grupo de canales necesita exactamente una rama")
        self.groups = [np.asarray(g, dtype=np.int64) for g in groups]
        self.branches = branches

    def forward(self, x, mode, rng):
        self._shape = x.shape
        outs = [run_sequence(branch, x[:, :, idx, :], mode, rng) for idx, branch in zip(self.groups, self.branches)]
        self._widths = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1)

    def backward(self, grad):
        grad_x = np.zeros(self._shape)
        offsets = np.cumsum([0] + self._widths)
        for k, (idx, branch) in enumerate(zip(self.groups, self.branches)):
            grad_x[:, :, idx, :] += backprop_sequence(branch, grad[:, offsets[k]:offsets[k + 1]])
        return grad_x

    def iter_slots(self, prefix):
        for k, branch in enumerate(self.branches):
            for i, layer in enumerate(branch):
                yield from layer.iter_slots(f"{prefix}branch{k}.{i}.")

    def walk(self):
        yield self
        for branch in self.branches:
            for layer in branch:
                yield from layer.walk()

    def describe(self):
        return f"branches x{len(self.branches)}"


class Network:
    """Secuencia ordenada de capas. La última es siempre la cabeza (sigmoide o softmax)."""

    def __init__(self, layers, config, seed):
        if not layers or not isinstance(layers[-1], (SigmoidHead, SoftmaxHead)):
            raise ValidationError("La red debe terminar en una cabeza sigmoide o softmax")
        self.layers = layers
        self.config = config
        self.seed = seed

    @property
    def architecture(self):
        return self.config.architecture

    def _slots(self):
        for i, layer in enumerate(self.layers):
            yield from layer.iter_slots(f"{i}.")

    def get_parameters(self):
        return {name: layer.params[key] for name, layer, key in self._slots()}

    def get_gradients(self):
        return {name: layer.grads[key] for name, layer, key in self._slots()}

    def set_parameters(self, params):
        slots = list(self._slots())
        if set(params) != {name for name, _, _ in slots}:
            raise ShapeError("El conjunto de parámetros no coincide con la arquitectura")
        for name, layer, key in slots:
            value = np.asarray(params[name], dtype=np.float64)
            if value.shape != layer.params[key].shape:
                raise ShapeError(f"Parámetro {name}: forma {value.shape} != {layer.params[key].shape}")
            layer.params[key] = value.copy()

    def set_dropout(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValidationError(f"La tasa de dropout debe estar en [0,1), recibido {rate}")
        for layer in self.layers:
            for inner in layer.walk():
                if isinstance(inner, Dropout):
                    inner.rate = rate

    @property
    def parameter_count(self):
        return int(sum(p.size for p in self.get_parameters().values()))

    def digest(self):
        h = hashlib.sha256()
        for name, value in self.get_parameters().items():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(value, dtype=np.float64).tobytes())
        return h.hexdigest()

    def forward(self, batch, mode="eval", rng=None):
        x = np.asarray(batch, dtype=np.float64)
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.window, cfg.channels):
            raise ShapeError(f"Lote con forma {x.shape}, se esperaba [B, {cfg.window}, {cfg.channels}]")
        check_finite(x, "entrada de la red")
        if mode == "train" and rng is None and cfg.dropout > 0:
            raise ValidationError("El modo de entrenamiento necesita un generador aleatorio")
        return run_sequence(self.layers, x[..., None], mode, rng)

    def backward(self, grad, from_logits=False):
        """Propaga ``grad`` hasta la entrada. Con ``from_logits`` el gradiente ya es respecto a la preactivación de la cabeza."""
        layers = self.layers[:-1] if from_logits else self.layers
        return backprop_sequence(layers, grad)

    def summary(self):
        lines = [f"{self.architecture}: {self.parameter_count} parámetros"]
        lines += [f"  {i}: {layer.describe()}" for i, layer in enumerate(self.layers)]
        logging.debug("\n".join(lines))
        return lines

# src/layers.py
"""Forward y backward de las capas que usan las tres arquitecturas.

Todas las operaciones aceptan un eje de lote opcional al principio: una convolución
recibe ``[B, T, D, C]`` o ``[T, D, C]`` y devuelve la misma variante. Todo se calcula
en float64.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, ValidationError
from .losses import sigmoid

ACTIVATIONS = ("identity", "relu", "sigmoid")


@dataclass
class ConvParams:
    weights: np.ndarray  # [F, 1, C_in, C_out]
    bias: np.ndarray     # [C_out]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[1] != 1 or self.weights.shape[0] < 1:
            raise ShapeError(f"Pesos de convolución deben ser [F,1,C_in,C_out], recibido {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[3],):
            raise ShapeError(f"Bias {self.bias.shape} no coincide con C_out={self.weights.shape[3]}")


@dataclass
class LstmParams:
    """Compuertas en orden (entrada, olvido, celda, salida) concatenadas en el último eje."""
    w_x: np.ndarray  # [M, 4H]
    w_h: np.ndarray  # [H, 4H]
    b: np.ndarray    # [4H]

    def __post_init__(self):
        self.w_x = np.asarray(self.w_x, dtype=np.float64)
        self.w_h = np.asarray(self.w_h, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        H = self.w_h.shape[0]
        if self.w_h.shape != (H, 4 * H) or self.w_x.ndim != 2 or self.w_x.shape[1] != 4 * H \
                or self.b.shape != (4 * H,):
            raise ShapeError("Matrices de la LSTM dimensionalmente inconsistentes")

    @property
    def hidden_size(self):
        return self.w_h.shape[0]

    @property
    def input_size(self):
        return self.w_x.shape[0]


def check_finite(x, where):
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"Valores no finitos en {where}")


def _as_batch(x, ndim, where):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim == ndim:
        return x, False
    raise ShapeError(f"{where}: se esperaban {ndim - 1} o {ndim} dimensiones, recibido {x.shape}")


def _unbatch(x, single):
    return x[0] if single else x


def _activate(z, activation):
    if activation == "identity":
        return z
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return sigmoid(z)
    raise ValidationError(f"Activación desconocida: {activation}")


def _activation_grad(grad_out, out, activation):
    if activation == "identity":
        return grad_out
    if activation == "relu":
        return grad_out * (out > 0)
    if activation == "sigmoid":
        return grad_out * out * (1.0 - out)
    raise ValidationError(f"Activación desconocida: {activation}")


# --- ReLU ---

def relu_forward(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(grad_out, x):
    return grad_out * (np.asarray(x) > 0)


# --- Convolución temporal ---

def _im2col(xb, F):
    B, T, D, C = xb.shape
    windows = sliding_window_view(xb, F, axis=1)  # [B, T', D, C, F]
    return windows.transpose(0, 1, 2, 4, 3).reshape(B, T - F + 1, D, F * C)


def _conv_linear(xb, p):
    F, _, C_in, C_out = p.weights.shape
    B, T, D, C = xb.shape
    if C != C_in:
        raise ShapeError(f"La entrada tiene {C} canales y los filtros esperan {C_in}")
    if T < F:
        raise ShapeError(f"Longitud temporal {T} menor que el filtro F={F}")
    return _im2col(xb, F) @ p.weights.reshape(F * C_in, C_out) + p.bias


def temporal_conv_forward(x, p: ConvParams, activation="identity"):
    """Convolución válida a lo largo del tiempo con filtros [F,1] compartidos entre los D sensores."""
    xb, single = _as_batch(x, 4, "temporal_conv_forward")
    check_finite(xb, "temporal_conv_forward")
    return _unbatch(_activate(_conv_linear(xb, p), activation), single)


def temporal_conv_backward(grad_out, x, p: ConvParams, activation="identity", out=None):
    xb, single = _as_batch(x, 4, "temporal_conv_backward")
    gb, _ = _as_batch(grad_out, 4, "temporal_conv_backward")
    F, _, C_in, C_out = p.weights.shape
    B, T, D, _ = xb.shape
    T_out = T - F + 1
    if gb.shape != (B, T_out, D, C_out):
        raise ShapeError(f"grad_out {gb.shape} no coincide con la salida {(B, T_out, D, C_out)}")
    if activation != "identity":
        if out is None:
            out = _activate(_conv_linear(xb, p), activation)
        out, _ = _as_batch(out, 4, "temporal_conv_backward")
        gb = _activation_grad(gb, out, activation)

    cols = _im2col(xb, F).reshape(-1, F * C_in)
    g2 = gb.reshape(-1, C_out)
    grad_w = (cols.T @ g2).reshape(F, 1, C_in, C_out)
    grad_b = g2.sum(axis=0)
    gcols = (g2 @ p.weights.reshape(F * C_in, C_out).T).reshape(B, T_out, D, F, C_in)
    grad_x = np.zeros_like(xb)
    for f in range(F):
        grad_x[:, f:f + T_out] += gcols[:, :, :, f, :]
    return _unbatch(grad_x, single), grad_w, grad_b


# --- Max-pooling temporal ---

def max_pool_forward(x, P, stride, return_indices=False):
    """Máximo sobre ventanas de P pasos temporales. Los índices absolutos del máximo se usan en el backward."""
    if P < 1 or stride < 1:
        raise ValidationError("P y stride deben ser >= 1")
    xb, single = _as_batch(x, 4, "max_pool_forward")
    check_finite(xb, "max_pool_forward")
    T = xb.shape[1]
    if T < P:
        raise ShapeError(f"Longitud temporal {T} menor que la ventana de pooling P={P}")
    windows = sliding_window_view(xb, P, axis=1)[:, ::stride]  # [B, T', D, C, P]
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    if not return_indices:
        return _unbatch(out, single)
    T_out = out.shape[1]
    indices = arg + (np.arange(T_out) * stride)[None, :, None, None]
    return _unbatch(out, single), _unbatch(indices, single)


def max_pool_backward(grad_out, x_shape, indices):
    single = len(x_shape) == 3
    gb = np.asarray(grad_out, dtype=np.float64)
    idx = np.asarray(indices)
    if single:
        gb, idx, x_shape = gb[None], idx[None], (1,) + tuple(x_shape)
    if gb.shape != idx.shape:
        raise ShapeError("grad_out e índices de pooling no coinciden")
    grad_x = np.zeros(x_shape, dtype=np.float64)
    B, T_out, D, C = gb.shape
    bi, _, di, ci = np.ogrid[:B, :T_out, :D, :C]
    np.add.at(grad_x, (bi, idx, di, ci), gb)
    return _unbatch(grad_x, single)


# --- Capa totalmente conectada ---

def fully_connected_forward(x, weights, bias, activation="identity"):
    xb, single = _as_batch(x, 2, "fully_connected_forward")
    check_finite(xb, "fully_connected_forward")
    if weights.ndim != 2 or xb.shape[1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise ShapeError(f"Anchos incompatibles: x {xb.shape}, W {weights.shape}, b {bias.shape}")
    return _unbatch(_activate(xb @ weights + bias, activation), single)


def fully_connected_backward(grad_out, x, weights, activation="identity", out=None, bias=None):
    xb, single = _as_batch(x, 2, "fully_connected_backward")
    gb, _ = _as_batch(grad_out, 2, "fully_connected_backward")
    if gb.shape != (xb.shape[0], weights.shape[1]):
        raise ShapeError(f"grad_out {gb.shape} no coincide con la salida")
    if activation != "identity":
        if out is None:
            out = _activate(xb @ weights + (0.0 if bias is None else bias), activation)
        out, _ = _as_batch(out, 2, "fully_connected_backward")
        gb = _activation_grad(gb, out, activation)
    grad_w = xb.T @ gb
    grad_b = gb.sum(axis=0)
    grad_x = gb @ weights.T
    return _unbatch(grad_x, single), grad_w, grad_b


# --- LSTM ---

def lstm_forward(seq, p: LstmParams, h0=None, c0=None, return_cache=False):
    """Recurrencia LSTM estándar paso a paso. Devuelve (secuencia oculta, h_T, c_T)."""
    sb, single = _as_batch(seq, 3, "lstm_forward")
    check_finite(sb, "lstm_forward")
    B, T, M = sb.shape
    H = p.hidden_size
    if T < 1:
        raise ShapeError("La secuencia de la LSTM necesita T >= 1")
    if M != p.input_size:
        raise ShapeError(f"Ancho de entrada {M} distinto de {p.input_size}")
    h = np.zeros((B, H)) if h0 is None else np.broadcast_to(np.asarray(h0, dtype=np.float64), (B, H)).copy()
    c = np.zeros((B, H)) if c0 is None else np.broadcast_to(np.asarray(c0, dtype=np.float64), (B, H)).copy()
    h_init, c_init = h.copy(), c.copy()

    xz = sb @ p.w_x + p.b  # [B, T, 4H]
    hs = np.empty((B, T, H))
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T, H))
    tanh_cs = np.empty((B, T, H))
    for t in range(T):
        z = xz[:, t] + h @ p.w_h
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        cs[:, t] = c
        tanh_cs[:, t] = tanh_c
        hs[:, t] = h

    result = (_unbatch(hs, single), _unbatch(h, single), _unbatch(c, single))
    if not return_cache:
        return result
    cache = {"seq": sb, "h0": h_init, "c0": c_init, "gates": gates, "cs": cs,
             "tanh_cs": tanh_cs, "hs": hs, "single": single}
    return result + (cache,)


def lstm_backward(grad_hs, grad_hT, p: LstmParams, cache, grad_cT=None):
    """Retropropagación a través del tiempo. Devuelve (grad_seq, LstmParams de gradientes, grad_h0, grad_c0)."""
    single = cache["single"]
    sb, hs, cs, tanh_cs, gates = cache["seq"], cache["hs"], cache["cs"], cache["tanh_cs"], cache["gates"]
    B, T, M = sb.shape
    H = p.hidden_size
    g_hs = np.zeros((B, T, H)) if grad_hs is None else _as_batch(grad_hs, 3, "lstm_backward")[0]
    dh_next = np.zeros((B, H)) if grad_hT is None else _as_batch(grad_hT, 2, "lstm_backward")[0].copy()
    dc_next = np.zeros((B, H)) if grad_cT is None else _as_batch(grad_cT, 2, "lstm_backward")[0].copy()
    if g_hs.shape != (B, T, H):
        raise ShapeError("grad_hs no coincide con la secuencia oculta")

    dz_all = np.empty((B, T, 4 * H))
    for t in reversed(range(T)):
        i, f, g, o = (gates[:, t, k * H:(k + 1) * H] for k in range(4))
        c_prev = cs[:, t - 1] if t > 0 else cache["c0"]
        dh = g_hs[:, t] + dh_next
        do = dh * tanh_cs[:, t]
        dc = dh * o * (1.0 - tanh_cs[:, t] ** 2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g ** 2), do * o * (1.0 - o)], axis=1)
        dz_all[:, t] = dz
        dh_next = dz @ p.w_h.T

    h_prev = np.concatenate([cache["h0"][:, None], hs[:, :-1]], axis=1)
    flat_dz = dz_all.reshape(-1, 4 * H)
    grads = LstmParams(
        w_x=sb.reshape(-1, M).T @ flat_dz,
        w_h=h_prev.reshape(-1, H).T @ flat_dz,
        b=flat_dz.sum(axis=0),
    )
    grad_seq = dz_all @ p.w_x.T
    return _unbatch(grad_seq, single), grads, _unbatch(dh_next, single), _unbatch(dc_next, single)


# --- Dropout ---

def dropout(x, rate, mode, rng, return_mask=False):
    """Dropout invertido: en entrenamiento anula con probabilidad ``rate`` y escala por 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"La tasa de dropout debe estar en [0,1), recibido {rate}")
    if mode not in ("train", "eval"):
        raise ValidationError(f"Modo desconocido: {mode}")
    x = np.asarray(x, dtype=np.float64)
    if mode == "eval" or rate == 0.0:
        return (x, None) if return_mask else x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = x * mask
    return (out, mask) if return_mask else out


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask

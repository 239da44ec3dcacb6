"""Stacked LSTM in plain numpy, float64 throughout.

One memory block per layer: sigmoid forget/input/output gates over the
concatenation [h_prev, x], tanh candidate cell, multiplicative state
update, tanh-squashed gated output.  A linear projection maps the last
layer's hidden sequence to 2-D position outputs.  Training is truncated
backpropagation through time with Adam and global-norm gradient clipping;
gradients are exact over the truncation window, which is what makes the
finite-difference checks in the test suite meaningful.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

_GATE_NAMES = ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")
_MAGIC = b"LSTM1"
_VERSION = 1


@dataclass
class LayerParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def arrays(self):
        return [getattr(self, n) for n in _GATE_NAMES]


@dataclass
class CellState:
    h: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class StackSpec:
    hidden_sizes: tuple = (64, 64, 64)
    input_dim: int = 2
    output_dim: int = 2

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)


@dataclass
class StackParams:
    layers: list  # list[LayerParams]
    W_proj: np.ndarray  # (output_dim, last_hidden)
    b_proj: np.ndarray  # (output_dim,)

    def arrays(self):
        out = []
        for layer in self.layers:
            out.extend(layer.arrays())
        out.extend([self.W_proj, self.b_proj])
        return out


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 1e-2
    lr_decay: float = 0.99  # per-epoch multiplier; Adam needs decay to settle
    epochs: int = 100
    bptt_window: int = 60
    grad_clip: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.bptt_window < 1:
            raise ValueError("bptt_window must be >= 1")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(spec: StackSpec, rng: np.random.Generator) -> StackParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, forget bias +1."""
    layers = []
    in_dim = spec.input_dim
    for hidden in spec.hidden_sizes:
        fan_in = hidden + in_dim
        bound = 1.0 / np.sqrt(fan_in)
        mats = {n: rng.uniform(-bound, bound, (hidden, fan_in)) for n in _GATE_NAMES[:4]}
        biases = {n: np.zeros(hidden) for n in _GATE_NAMES[4:]}
        biases["b_f"] = np.ones(hidden)
        layers.append(LayerParams(**mats, **biases))
        in_dim = hidden
    bound = 1.0 / np.sqrt(spec.hidden_sizes[-1])
    W_proj = rng.uniform(-bound, bound, (spec.output_dim, spec.hidden_sizes[-1]))
    b_proj = np.zeros(spec.output_dim)
    return StackParams(layers, W_proj, b_proj)


def zero_states(spec: StackSpec, batch=None) -> list:
    shape = lambda h: (h,) if batch is None else (h, batch)
    return [CellState(np.zeros(shape(h)), np.zeros(shape(h))) for h in spec.hidden_sizes]


def cell_forward(params: LayerParams, x_t, state_prev: CellState) -> CellState:
    """One memory-block step.  x_t is (input,) or (input, batch)."""
    v = np.concatenate([state_prev.h, np.asarray(x_t, dtype=np.float64)], axis=0)
    f = _sigmoid(params.W_f @ v + _col(params.b_f, v))
    i = _sigmoid(params.W_i @ v + _col(params.b_i, v))
    o = _sigmoid(params.W_o @ v + _col(params.b_o, v))
    g = np.tanh(params.W_c @ v + _col(params.b_c, v))
    C = f * state_prev.C + i * g
    h = o * np.tanh(C)
    return CellState(h, C)


def _col(b, v):
    # broadcast a bias vector against (H,) or (H, batch) activations
    return b if v.ndim == 1 else b[:, None]


class _StackedLayer:
    """One (4H, H+I) matrix per layer so a step is a single GEMM; the
    row blocks are f, i, o, c in that order."""

    def __init__(self, layer: LayerParams):
        self.W = np.vstack([layer.W_f, layer.W_i, layer.W_o, layer.W_c])
        self.b = np.concatenate([layer.b_f, layer.b_i, layer.b_o, layer.b_c])
        self.hidden = layer.W_f.shape[0]

    def forward(self, x_t, state_prev):
        H = self.hidden
        v = np.concatenate([state_prev.h, x_t], axis=0)
        z = self.W @ v + _col(self.b, v)
        f = _sigmoid(z[:H])
        i = _sigmoid(z[H:2 * H])
        o = _sigmoid(z[2 * H:3 * H])
        g = np.tanh(z[3 * H:])
        C = f * state_prev.C + i * g
        tC = np.tanh(C)
        h = o * tC
        return CellState(h, C), (v, f, i, o, g, state_prev.C, tC)


def stack_forward(spec: StackSpec, params: StackParams, input_seq,
                  init_states=None):
    """Run the full stack over a sequence.

    input_seq is (T, input_dim) or (T, batch, input_dim).  Returns
    (output_seq of matching leading shape with output_dim, final states).
    """
    x = np.asarray(input_seq, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[0] == 0:
        raise ValueError("input_seq must be a nonempty (T, D) or (T, B, D) array")
    batched = x.ndim == 3
    states = init_states if init_states is not None else zero_states(
        spec, x.shape[1] if batched else None)
    states = [CellState(s.h.copy(), s.C.copy()) for s in states]
    outputs = []
    for t in range(x.shape[0]):
        inp = x[t].T if batched else x[t]  # (D, B) or (D,)
        for li, layer in enumerate(params.layers):
            states[li] = cell_forward(layer, inp, states[li])
            inp = states[li].h
        y = params.W_proj @ inp + _col(params.b_proj, inp)
        outputs.append(y.T if batched else y)
    return np.stack(outputs), states


def mse_loss(pred_seq, target_seq) -> float:
    p = np.asarray(pred_seq, dtype=np.float64)
    t = np.asarray(target_seq, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def _forward_cached(spec, params, x, init_states, stacked=None):
    """Batched forward keeping every per-step intermediate for BPTT.

    x is (T, B, D).  Returns (pred (T, B, out), caches, final states).
    """
    layers = stacked if stacked is not None else [_StackedLayer(l) for l in params.layers]
    states = [CellState(s.h.copy(), s.C.copy()) for s in init_states]
    caches = []
    preds = []
    for t in range(x.shape[0]):
        inp = x[t].T  # (D, B)
        step = []
        for li, layer in enumerate(layers):
            states[li], cache = layer.forward(inp, states[li])
            step.append(cache)
            inp = states[li].h
        preds.append((params.W_proj @ inp + params.b_proj[:, None]).T)
        caches.append(step)
    return np.stack(preds), caches, states


def _zero_grads(params):
    g = StackParams(
        [LayerParams(*[np.zeros_like(a) for a in layer.arrays()]) for layer in params.layers],
        np.zeros_like(params.W_proj), np.zeros_like(params.b_proj))
    return g


def bptt_grads(spec: StackSpec, params: StackParams, input_seq, target_seq,
               window=None, init_states=None):
    """Exact reverse-mode gradients of mse_loss over the last `window`
    steps of the sequence.

    The state entering the window is computed with the current parameters
    but treated as a constant (truncated BPTT).  Returns (grads, loss,
    final states); grads mirror the StackParams layout.
    """
    x = np.asarray(input_seq, dtype=np.float64)
    tgt = np.asarray(target_seq, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
        tgt = tgt[:, None, :]
    T, B, _ = x.shape
    if window is None:
        window = T
    if window > T:
        raise ValueError("window exceeds sequence length")
    states = init_states if init_states is not None else zero_states(spec, B)
    if window < T:
        _, states = stack_forward(spec, params, x[: T - window], init_states=states)
    stacked = [_StackedLayer(l) for l in params.layers]
    pred, caches, final_states = _forward_cached(spec, params, x[T - window:],
                                                 states, stacked=stacked)
    seg_tgt = tgt[T - window:]
    loss = float(np.mean((pred - seg_tgt) ** 2))

    n_layers = spec.n_layers
    dW = [np.zeros_like(sl.W) for sl in stacked]
    db = [np.zeros_like(sl.b) for sl in stacked]
    dW_proj = np.zeros_like(params.W_proj)
    db_proj = np.zeros_like(params.b_proj)
    dh = [np.zeros_like(final_states[li].h) for li in range(n_layers)]
    dC = [np.zeros_like(final_states[li].C) for li in range(n_layers)]
    scale = 2.0 / pred.size
    for t in range(window - 1, -1, -1):
        dy = scale * (pred[t] - seg_tgt[t]).T  # (out, B)
        top_h = caches[t][-1][3] * caches[t][-1][6]  # o * tanh(C) of top layer
        dW_proj += dy @ top_h.T
        db_proj += dy.sum(axis=1)
        d_from_above = params.W_proj.T @ dy
        for li in range(n_layers - 1, -1, -1):
            v, f, i, o, g, C_prev, tC = caches[t][li]
            H = stacked[li].hidden
            dh_t = dh[li] + d_from_above
            do = dh_t * tC
            dC_t = dC[li] + dh_t * o * (1.0 - tC ** 2)
            dC[li] = dC_t * f
            dz = np.concatenate([
                dC_t * C_prev * f * (1.0 - f),
                dC_t * g * i * (1.0 - i),
                do * o * (1.0 - o),
                dC_t * i * (1.0 - g ** 2),
            ], axis=0)
            dW[li] += dz @ v.T
            db[li] += dz.sum(axis=1)
            dv = stacked[li].W.T @ dz
            dh[li] = dv[:H]
            d_from_above = dv[H:]
        # d_from_above now holds the gradient w.r.t. x[t]; discarded.
    grads = _zero_grads(params)
    for li in range(n_layers):
        H = stacked[li].hidden
        gl = grads.layers[li]
        gl.W_f[:], gl.W_i[:], gl.W_o[:], gl.W_c[:] = (
            dW[li][:H], dW[li][H:2 * H], dW[li][2 * H:3 * H], dW[li][3 * H:])
        gl.b_f[:], gl.b_i[:], gl.b_o[:], gl.b_c[:] = (
            db[li][:H], db[li][H:2 * H], db[li][2 * H:3 * H], db[li][3 * H:])
    grads.W_proj = dW_proj
    grads.b_proj = db_proj
    return grads, loss, final_states


@dataclass
class AdamMoments:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def _clip_global_norm(grad_arrays, max_norm):
    total = np.sqrt(sum(float(np.sum(g ** 2)) for g in grad_arrays))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        return [g * scale for g in grad_arrays], total
    return [g.copy() for g in grad_arrays], total


def optimizer_step(params: StackParams, grads: StackParams, hyper: TrainHyper,
                   moments: AdamMoments) -> AdamMoments:
    """In-place Adam update with global-norm clipping, bias-corrected."""
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    names = _param_names(params)
    for name, g in zip(names, g_arrays):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    g_arrays, _ = _clip_global_norm(g_arrays, hyper.grad_clip)
    if not moments.m:
        moments.m = [np.zeros_like(a) for a in p_arrays]
        moments.v = [np.zeros_like(a) for a in p_arrays]
    moments.step += 1
    b1, b2 = hyper.adam_beta1, hyper.adam_beta2
    correction1 = 1.0 - b1 ** moments.step
    correction2 = 1.0 - b2 ** moments.step
    for p, g, m, v in zip(p_arrays, g_arrays, moments.m, moments.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g ** 2
        m_hat = m / correction1
        v_hat = v / correction2
        p -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
    return moments


def _param_names(params):
    names = []
    for li in range(len(params.layers)):
        names.extend(f"layer{li}.{n}" for n in _GATE_NAMES)
    names.extend(["W_proj", "b_proj"])
    return names


class CheckpointError(ValueError):
    pass


def save_checkpoint(spec: StackSpec, params: StackParams) -> bytes:
    """Little-endian binary: magic, version, dims, then row-major float64
    arrays in StackParams order."""
    head = struct.pack("<5sBBII", _MAGIC, _VERSION, spec.n_layers,
                       spec.input_dim, spec.output_dim)
    head += struct.pack(f"<{spec.n_layers}I", *spec.hidden_sizes)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in params.arrays())
    return head + body


def load_checkpoint(blob: bytes):
    """Inverse of save_checkpoint; returns (spec, params)."""
    fixed = struct.calcsize("<5sBBII")
    if len(blob) < fixed:
        raise CheckpointError("checkpoint truncated before header")
    magic, version, n_layers, input_dim, output_dim = struct.unpack(
        "<5sBBII", blob[:fixed])
    if magic != _MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise CheckpointError(f"unsupported version {version}")
    off = fixed
    need = struct.calcsize(f"<{n_layers}I")
    if len(blob) < off + need:
        raise CheckpointError("checkpoint truncated in dimension table")
    hidden_sizes = struct.unpack(f"<{n_layers}I", blob[off:off + need])
    off += need
    spec = StackSpec(tuple(hidden_sizes), input_dim, output_dim)

    def take(shape):
        nonlocal off
        n = int(np.prod(shape)) * 8
        if len(blob) < off + n:
            raise CheckpointError("checkpoint truncated in parameter data")
        arr = np.frombuffer(blob[off:off + n], dtype="<f8").reshape(shape).copy()
        off += n
        return arr

    layers = []
    in_dim = input_dim
    for hidden in hidden_sizes:
        fan_in = hidden + in_dim
        mats = [take((hidden, fan_in)) for _ in range(4)]
        biases = [take((hidden,)) for _ in range(4)]
        layers.append(LayerParams(*mats, *biases))
        in_dim = hidden
    W_proj = take((output_dim, hidden_sizes[-1]))
    b_proj = take((output_dim,))
    if off != len(blob):
        raise CheckpointError("trailing bytes after parameter data")
    return spec, StackParams(layers, W_proj, b_proj)


def expect_spec(blob: bytes, expected: StackSpec):
    """Load a checkpoint and reject it if the architecture differs."""
    spec, params = load_checkpoint(blob)
    if spec != expected:
        raise CheckpointError(f"checkpoint spec {spec} != expected {expected}")
    return params

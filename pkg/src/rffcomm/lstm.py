"""Single-layer LSTM fed by (optionally Fourier-mapped) features, with a
per-timestep logistic head for binary LOS/NLOS labels.

Gate layout follows the usual formulation::

    f_t = sig(Wf x_t + Uf h_{t-1} + bf)        forget
    i_t = sig(Wi x_t + Ui h_{t-1} + bi)        input
    o_t = sig(Wo x_t + Uo h_{t-1} + bo)        output
    c_t = c_{t-1} * f_t + i_t * tanh(Wc x_t + Uc h_{t-1} + bc)
    h_t = o_t * tanh(c_t)
    p_t = sig(w_out . h_t + c_out)

Gradients are exact full-sequence BPTT of the mean per-timestep binary
cross-entropy.  Sequences of equal length are processed together, so a
batch of many short sequences is much faster than one long one.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import (
    DataError,
    DegenerateLabelsError,
    NumericError,
    ParameterError,
    TrainingDivergenceError,
)
from .features import FourierFeatureMap

__all__ = [
    "LstmParameters",
    "LstmState",
    "SequenceBatch",
    "evaluate",
    "evaluate_probabilities",
    "init_parameters",
    "lstm_forward",
    "lstm_gradients",
    "predict",
    "train",
    "write_loss_csv",
    "write_roc_csv",
]

GATE_WEIGHTS = ("wi", "wf", "wo", "wc")
RECURRENT_WEIGHTS = ("ui", "uf", "uo", "uc")
GATE_BIASES = ("bi", "bf", "bo", "bc")
_HEADER = struct.Struct("<qqqq")


@dataclass(frozen=True, eq=False)
class LstmParameters:
    wi: np.ndarray
    wf: np.ndarray
    wo: np.ndarray
    wc: np.ndarray
    ui: np.ndarray
    uf: np.ndarray
    uo: np.ndarray
    uc: np.ndarray
    bi: np.ndarray
    bf: np.ndarray
    bo: np.ndarray
    bc: np.ndarray
    w_out: np.ndarray
    c_out: float
    # optional affine stage followed by a fixed Fourier map, ahead of the LSTM
    fc_w: np.ndarray | None = None
    fc_b: np.ndarray | None = None
    fc_map: FourierFeatureMap | None = None

    def __post_init__(self):
        n_h, n_in = np.shape(self.wi)
        for name in GATE_WEIGHTS:
            if np.shape(getattr(self, name)) != (n_h, n_in):
                raise ParameterError(f"{name} must have shape {(n_h, n_in)}")
        for name in RECURRENT_WEIGHTS:
            if np.shape(getattr(self, name)) != (n_h, n_h):
                raise ParameterError(f"{name} must have shape {(n_h, n_h)}")
        for name in GATE_BIASES + ("w_out",):
            if np.shape(getattr(self, name)) != (n_h,):
                raise ParameterError(f"{name} must have shape {(n_h,)}")
        for name in self.names():
            if not np.all(np.isfinite(getattr(self, name))):
                raise ParameterError(f"{name} contains non-finite values")
        if (self.fc_w is None) != (self.fc_map is None) or (self.fc_w is None) != (self.fc_b is None):
            raise ParameterError("fc_w, fc_b and fc_map must be given together")
        if self.fc_w is not None:
            if self.fc_map.n_features != n_in or self.fc_map.n_input != self.fc_w.shape[0]:
                raise ParameterError("extra Fourier stage dimensions are inconsistent")
            if np.shape(self.fc_b) != (self.fc_w.shape[0],):
                raise ParameterError("fc_b length must equal fc_w rows")

    @property
    def n_hidden(self) -> int:
        return self.wi.shape[0]

    @property
    def n_input(self) -> int:
        """Dimension of the raw per-timestep input."""
        return self.fc_w.shape[1] if self.fc_w is not None else self.wi.shape[1]

    def names(self):
        base = GATE_WEIGHTS + RECURRENT_WEIGHTS + GATE_BIASES + ("w_out", "c_out")
        return base + (("fc_w", "fc_b") if self.fc_w is not None else ())

    def tensors(self) -> dict:
        return {name: np.asarray(getattr(self, name), dtype=np.float64) for name in self.names()}

    def with_tensors(self, tensors: dict) -> "LstmParameters":
        updates = dict(tensors)
        if "c_out" in updates:
            updates["c_out"] = float(updates["c_out"])
        return replace(self, **updates)

    def to_bytes(self) -> bytes:
        """Header (n_input, lstm_input, n_hidden, n_fc) then every tensor in declaration order."""
        n_fc = 0 if self.fc_w is None else self.fc_w.shape[0]
        parts = [_HEADER.pack(self.n_input, self.wi.shape[1], self.n_hidden, n_fc)]
        parts += [t.astype("<f8").tobytes() for t in self.tensors().values()]
        if self.fc_map is not None:
            parts.append(self.fc_map.to_bytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LstmParameters":
        if len(data) < _HEADER.size:
            raise ParameterError("truncated parameter record")
        n_in, lstm_in, n_h, n_fc = _HEADER.unpack_from(data)
        if min(n_in, lstm_in, n_h) < 1 or n_fc < 0:
            raise ParameterError("corrupt parameter header")
        shapes = {name: (n_h, lstm_in) for name in GATE_WEIGHTS}
        shapes.update({name: (n_h, n_h) for name in RECURRENT_WEIGHTS})
        shapes.update({name: (n_h,) for name in GATE_BIASES + ("w_out",)})
        shapes["c_out"] = ()
        if n_fc:
            shapes["fc_w"] = (n_fc, n_in)
            shapes["fc_b"] = (n_fc,)
        offset = _HEADER.size
        need = offset + 8 * sum(int(np.prod(s)) for s in shapes.values())
        if len(data) < need or (not n_fc and len(data) != need):
            raise ParameterError(f"parameter record has {len(data)} bytes, expected {need}")
        values = {}
        for name, shape in shapes.items():
            count = int(np.prod(shape))
            values[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
            offset += 8 * count
        values["c_out"] = float(values["c_out"])
        fc_map = FourierFeatureMap.from_bytes(data[offset:]) if n_fc else None
        return cls(**values, fc_map=fc_map)


@dataclass(frozen=True)
class LstmState:
    cell: np.ndarray
    hidden: np.ndarray


@dataclass(frozen=True)
class SequenceBatch:
    features: list
    labels: list

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ParameterError("features and labels must hold the same number of sequences")
        for k, (x, y) in enumerate(zip(self.features, self.labels)):
            if len(x) != len(y):
                raise ParameterError(f"sequence {k}: {len(x)} feature vectors but {len(y)} labels")

    def __len__(self):
        return len(self.features)

    @property
    def n_timesteps(self) -> int:
        return sum(len(y) for y in self.labels)

    @classmethod
    def from_stream(cls, features, labels, seq_len: int) -> "SequenceBatch":
        """Cut one long labelled stream into consecutive chunks of ``seq_len`` steps."""
        features = np.asarray(features)
        labels = np.asarray(labels)
        starts = range(0, len(labels), int(seq_len))
        return cls([features[s:s + seq_len] for s in starts], [labels[s:s + seq_len] for s in starts])


def init_parameters(n_input: int, n_hidden: int, seed=None, fc_map: FourierFeatureMap | None = None) -> LstmParameters:
    """Uniform(-1/sqrt(n_h), 1/sqrt(n_h)) weights, forget bias 1, other biases 0.

    With ``fc_map`` an affine layer (n_input -> fc_map.n_input) and that fixed
    Fourier map are inserted ahead of the LSTM.
    """
    if n_input < 1 or n_hidden < 1:
        raise ParameterError("n_input and n_hidden must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(n_hidden)
    lstm_in = n_input if fc_map is None else fc_map.n_features
    t = {}
    for name in GATE_WEIGHTS:
        t[name] = rng.uniform(-bound, bound, (n_hidden, lstm_in))
    for name in RECURRENT_WEIGHTS:
        t[name] = rng.uniform(-bound, bound, (n_hidden, n_hidden))
    for name in GATE_BIASES:
        t[name] = np.zeros(n_hidden)
    t["bf"] = np.ones(n_hidden)
    t["w_out"] = rng.uniform(-bound, bound, n_hidden)
    if fc_map is not None:
        fb = 1.0 / math.sqrt(n_input)
        t["fc_w"] = rng.uniform(-fb, fb, (fc_map.n_input, n_input))
        t["fc_b"] = np.zeros(fc_map.n_input)
    return LstmParameters(c_out=0.0, fc_map=fc_map, **t)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _stacked(params: LstmParameters):
    W = np.vstack([getattr(params, n) for n in GATE_WEIGHTS])
    U = np.vstack([getattr(params, n) for n in RECURRENT_WEIGHTS])
    b = np.concatenate([getattr(params, n) for n in GATE_BIASES])
    return W, U, b


def _front(params: LstmParameters, X):
    """Apply the optional affine + Fourier stage; returns (LSTM input, cache)."""
    if params.fc_w is None:
        return X, None
    a = X @ params.fc_w.T + params.fc_b
    z = a @ params.fc_map.omegas.T + params.fc_map.biases
    scale = math.sqrt(2.0 / params.fc_map.n_features)
    return scale * np.cos(z), (z, scale)


def _forward_batch(params: LstmParameters, X: np.ndarray):
    """X has shape (B, T, n_input); returns inputs, per-step caches and logits."""
    n_h = params.n_hidden
    U_in, front_cache = _front(params, X)
    W, U, b = _stacked(params)
    B, T = X.shape[:2]
    pre = U_in @ W.T + b
    gates = np.empty((B, T, 4 * n_h))
    cells = np.empty((B, T + 1, n_h))
    hidden = np.empty((B, T + 1, n_h))
    cells[:, 0] = 0.0
    hidden[:, 0] = 0.0
    for t in range(T):
        z = pre[:, t] + hidden[:, t] @ U.T
        g = gates[:, t]
        g[:, : 3 * n_h] = _sigmoid(z[:, : 3 * n_h])
        g[:, 3 * n_h:] = np.tanh(z[:, 3 * n_h:])
        i, f, o, cand = g[:, :n_h], g[:, n_h:2 * n_h], g[:, 2 * n_h:3 * n_h], g[:, 3 * n_h:]
        cells[:, t + 1] = cells[:, t] * f + i * cand
        hidden[:, t + 1] = o * np.tanh(cells[:, t + 1])
    logits = hidden[:, 1:] @ params.w_out + params.c_out
    return U_in, front_cache, gates, cells, hidden, logits


def _check_inputs(params: LstmParameters, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != params.n_input:
        raise ParameterError(f"sequence shape {x.shape} incompatible with input dimension {params.n_input}")
    if not np.all(np.isfinite(x)):
        raise DataError("sequence contains non-finite values")
    return x


def lstm_forward(params: LstmParameters, sequence):
    """Run one sequence from a zero state; returns (states, probabilities)."""
    x = _check_inputs(params, sequence)
    _, _, _, cells, hidden, logits = _forward_batch(params, x[None])
    states = [LstmState(cells[0, t], hidden[0, t]) for t in range(1, x.shape[0] + 1)]
    return states, _sigmoid(logits[0])


def predict(params: LstmParameters, sequences) -> list:
    """Per-timestep NLOS probabilities for each sequence."""
    out = [None] * len(sequences)
    for length, idx in _group_by_length(sequences).items():
        X = np.stack([_check_inputs(params, sequences[k]) for k in idx])
        probs = _sigmoid(_forward_batch(params, X)[-1])
        for row, k in enumerate(idx):
            out[k] = probs[row]
    return out


def _group_by_length(sequences) -> dict:
    groups = {}
    for k, seq in enumerate(sequences):
        groups.setdefault(len(seq), []).append(k)
    return groups


def _bce(logits, y):
    return np.where(y > 0.5, np.logaddexp(0.0, -logits), np.logaddexp(0.0, logits))


def lstm_gradients(params: LstmParameters, batch: SequenceBatch):
    """Gradients of the mean per-timestep cross-entropy; returns (grads, loss).

    ``grads`` is an :class:`LstmParameters` holding derivatives in place of values.
    """
    if len(batch) == 0:
        raise ParameterError("batch is empty")
    total_steps = batch.n_timesteps
    n_h = params.n_hidden
    W, U, _ = _stacked(params)
    grads = {name: np.zeros_like(v) for name, v in params.tensors().items()}
    loss_sum = 0.0

    for length, idx in _group_by_length(batch.features).items():
        X = np.stack([_check_inputs(params, batch.features[k]) for k in idx])
        Y = np.stack([np.asarray(batch.labels[k], dtype=np.float64) for k in idx])
        U_in, front_cache, gates, cells, hidden, logits = _forward_batch(params, X)
        losses = _bce(logits, Y)
        bad = ~np.isfinite(losses).all(axis=1) | ~np.isfinite(hidden).all(axis=(1, 2))
        if bad.any():
            k = idx[int(np.flatnonzero(bad)[0])]
            raise NumericError(f"non-finite intermediate in sequence {k}", index=k)
        loss_sum += losses.sum()

        dlogit = (_sigmoid(logits) - Y) / total_steps
        grads["w_out"] += np.einsum("bt,bth->h", dlogit, hidden[:, 1:])
        grads["c_out"] += dlogit.sum()
        dh_head = dlogit[..., None] * params.w_out

        B, T = X.shape[:2]
        dpre = np.empty((B, T, 4 * n_h))
        dh_next = np.zeros((B, n_h))
        dc_next = np.zeros((B, n_h))
        dU = np.zeros_like(U)
        for t in range(T - 1, -1, -1):
            g = gates[:, t]
            i, f, o, cand = g[:, :n_h], g[:, n_h:2 * n_h], g[:, 2 * n_h:3 * n_h], g[:, 3 * n_h:]
            tc = np.tanh(cells[:, t + 1])
            dh = dh_head[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dpre[:, t]
            dz[:, :n_h] = dc * cand * i * (1.0 - i)
            dz[:, n_h:2 * n_h] = dc * cells[:, t] * f * (1.0 - f)
            dz[:, 2 * n_h:3 * n_h] = dh * tc * o * (1.0 - o)
            dz[:, 3 * n_h:] = dc * i * (1.0 - cand * cand)
            dU += dz.T @ hidden[:, t]
            dh_next = dz @ U
            dc_next = dc * f
        flat_dpre = dpre.reshape(-1, 4 * n_h)
        dW = flat_dpre.T @ U_in.reshape(-1, U_in.shape[-1])
        db = flat_dpre.sum(axis=0)
        for k, name in enumerate(GATE_WEIGHTS):
            grads[name] += dW[k * n_h:(k + 1) * n_h]
        for k, name in enumerate(RECURRENT_WEIGHTS):
            grads[name] += dU[k * n_h:(k + 1) * n_h]
        for k, name in enumerate(GATE_BIASES):
            grads[name] += db[k * n_h:(k + 1) * n_h]
        if front_cache is not None:
            z, scale = front_cache
            du = dpre @ W
            dz_front = -scale * np.sin(z) * du
            da = dz_front @ params.fc_map.omegas
            grads["fc_w"] += da.reshape(-1, da.shape[-1]).T @ X.reshape(-1, X.shape[-1])
            grads["fc_b"] += da.sum(axis=(0, 1))

    loss = loss_sum / total_steps
    return params.with_tensors(grads), float(loss)


def _global_norm(tensors: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(v))) for v in tensors.values()))


def train(params: LstmParameters, batch: SequenceBatch, learning_rate: float = 0.05, epochs: int = 300,
          seed=0, gradient_clip: float = 5.0, batch_size: int | None = None, history: list | None = None,
          loss_limit: float = 1e6) -> LstmParameters:
    """Mini-batch gradient descent with global-norm clipping.

    ``batch_size`` counts sequences (default: the whole batch, i.e. full-batch
    descent); ``seed`` drives the per-epoch shuffling.  Per-epoch mean loss is
    appended to ``history`` when given.
    """
    if learning_rate < 0 or not gradient_clip > 0:
        raise ParameterError("learning_rate must be >= 0 and gradient_clip > 0")
    if int(epochs) < 1:
        raise ParameterError("epochs must be >= 1")
    rng = np.random.default_rng(seed)
    n_seq = len(batch)
    size = n_seq if batch_size is None else max(1, min(int(batch_size), n_seq))
    current = params.tensors()
    for epoch in range(int(epochs)):
        order = rng.permutation(n_seq) if size < n_seq else np.arange(n_seq)
        epoch_loss = 0.0
        for start in range(0, n_seq, size):
            sel = order[start:start + size]
            sub = SequenceBatch([batch.features[k] for k in sel], [batch.labels[k] for k in sel])
            try:
                grads, loss = lstm_gradients(params.with_tensors(current), sub)
            except NumericError as exc:
                raise TrainingDivergenceError(f"epoch {epoch + 1}: {exc}", index=exc.index) from None
            if not math.isfinite(loss) or loss > loss_limit:
                raise TrainingDivergenceError(f"epoch {epoch + 1}: loss {loss}")
            g = grads.tensors()
            norm = _global_norm(g)
            factor = learning_rate * (gradient_clip / norm if norm > gradient_clip else 1.0)
            if factor != 0.0:
                current = {name: current[name] - factor * g[name] for name in current}
            epoch_loss += loss * sub.n_timesteps
        if history is not None:
            history.append(epoch_loss / batch.n_timesteps)
    return params.with_tensors(current)


def evaluate_probabilities(probabilities, labels, n_thresholds: int = 101) -> dict:
    """F1 / accuracy at threshold 0.5 (NLOS = positive) plus an ROC sweep.

    The ROC is a list of (threshold, fpr, tpr) over ``n_thresholds`` evenly
    spaced thresholds in [0, 1]; a step is called positive when p >= threshold.
    Raises :class:`DegenerateLabelsError` (with the ROC attached as ``.roc``)
    when only one class is present.
    """
    p = np.concatenate([np.ravel(np.asarray(v, dtype=np.float64)) for v in probabilities])
    y = np.concatenate([np.ravel(np.asarray(v)) for v in labels]).astype(bool)
    if p.size == 0 or p.size != y.size:
        raise ParameterError("need equally many (nonzero) probabilities and labels")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    roc = []
    for thr in np.linspace(0.0, 1.0, int(n_thresholds)):
        pred = p >= thr
        tpr = (pred & y).sum() / n_pos if n_pos else 0.0
        fpr = (pred & ~y).sum() / n_neg if n_neg else 0.0
        roc.append((float(thr), float(fpr), float(tpr)))
    if n_pos == 0 or n_neg == 0:
        err = DegenerateLabelsError("test labels contain a single class; F1 is undefined")
        err.roc = roc
        raise err
    pred = p >= 0.5
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    fn = int((~pred & y).sum())
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if tp else 0.0
    return {"f1": f1, "accuracy": float(np.mean(pred == y)), "roc": roc}


def evaluate(params: LstmParameters, batch: SequenceBatch, n_thresholds: int = 101) -> dict:
    if len(batch) == 0:
        raise ParameterError("test batch is empty")
    return evaluate_probabilities(predict(params, batch.features), batch.labels, n_thresholds)


def write_roc_csv(roc, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        w.writerows((repr(t), repr(f), repr(r)) for t, f, r in roc)


def write_loss_csv(losses, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        w.writerows((k, repr(float(v))) for k, v in enumerate(losses, 1))

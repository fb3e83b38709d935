"""Dense predictors over hop banks, with hand-written gradients.

Two backbones share one calling convention: parameters live in a flat
``dict[str, ndarray]``, ``forward`` takes the bank slabs plus a node id
batch and returns ``(logits, hidden, cache)``, and ``backward`` consumes
the cache with the logits gradient and returns a gradient dict with the
same keys as the parameters. Everything is plain numpy; float32 is the
training dtype and float64 is used for finite-difference verification.

``ConcatMLP`` flattens the K+1 hop rows of each node into one vector and
runs it through a ReLU trunk. ``HopGRU`` feeds the hop rows in order
through a shared GRU cell (update form s = (1-z) * cand + z * s_prev) and
reads out either the final state or the mean state. Both end in an affine
projection to the bank's channel width, whose output is the per-node
hidden state reused by staged re-propagation, followed by a linear
classifier. That projection is deliberately activation-free so the hidden
state can carry signed values on the same scale as the input features.

Dropout is the inverted kind and is driven by an explicit generator
argument; evaluation passes train=False and gets a deterministic network.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "ConcatMLP",
    "HopGRU",
    "TrainConfig",
    "init_adam",
    "adam_step",
    "softmax_xent",
    "accuracy",
    "roc_auc",
    "model_scores",
    "label_features",
]


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 0.0
    batch_size: int = 512
    epochs: int = 100
    trunk: tuple = (256, 256)
    state_dim: int = 64
    dropout: float = 0.0
    input_dropout: float = 0.0
    readout: str = "last"
    metric: str = "accuracy"
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if not (0.0 <= self.dropout < 1.0 and 0.0 <= self.input_dropout < 1.0):
            raise ConfigError("dropout rates must lie in [0, 1)")
        if self.readout not in ("last", "mean"):
            raise ConfigError(f"unknown readout {self.readout!r}")
        if self.metric not in ("accuracy", "roc_auc"):
            raise ConfigError(f"unknown metric {self.metric!r}")


def _glorot(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _dropout_mask(rng, shape, rate, dtype):
    keep = np.dtype(dtype).type(1.0 - rate)
    return (rng.random(shape) < keep).astype(dtype) / keep


class ConcatMLP:
    """MLP over the concatenated hop rows of each node."""

    def __init__(self, hops: int, width: int, num_classes: int, trunk=(256, 256)):
        self.hops = hops
        self.width = width
        self.num_classes = num_classes
        self.trunk = tuple(int(w) for w in trunk)
        self.in_dim = (hops + 1) * width

    def init(self, seed: int = 0, dtype=np.float32) -> dict:
        rng = np.random.default_rng(seed)
        params = {}
        prev = self.in_dim
        for i, w in enumerate(self.trunk):
            params[f"trunk{i}.w"] = _glorot(rng, prev, w, dtype)
            params[f"trunk{i}.b"] = np.zeros(w, dtype=dtype)
            prev = w
        params["pre.w"] = _glorot(rng, prev, self.width, dtype)
        params["pre.b"] = np.zeros(self.width, dtype=dtype)
        params["cls.w"] = _glorot(rng, self.width, self.num_classes, dtype)
        params["cls.b"] = np.zeros(self.num_classes, dtype=dtype)
        return params

    def forward(self, params, slabs, ids, *, train=False, dropout=0.0,
                input_dropout=0.0, rng=None):
        if slabs.shape[0] != self.hops + 1:
            raise ValueError(f"bank has {slabs.shape[0] - 1} hops, model expects {self.hops}")
        dtype = params["cls.w"].dtype
        x = slabs[:, ids, :].transpose(1, 0, 2).reshape(len(ids), -1).astype(dtype)
        cache = {"inputs": [], "masks": [], "x_mask": None}
        if train and input_dropout > 0.0:
            m = _dropout_mask(rng, x.shape, input_dropout, dtype)
            x = x * m
            cache["x_mask"] = m
        h = x
        cache["gates"] = []
        for i in range(len(self.trunk)):
            cache["inputs"].append(h)
            a = h @ params[f"trunk{i}.w"] + params[f"trunk{i}.b"]
            cache["gates"].append(a > 0)
            h = np.maximum(a, 0)
            if train and dropout > 0.0:
                m = _dropout_mask(rng, h.shape, dropout, dtype)
                h = h * m
                cache["masks"].append(m)
            else:
                cache["masks"].append(None)
        cache["pre_in"] = h
        hidden = h @ params["pre.w"] + params["pre.b"]
        cache["hidden"] = hidden
        logits = hidden @ params["cls.w"] + params["cls.b"]
        return logits, hidden, cache

    def backward(self, params, cache, dlogits):
        grads = {}
        hidden = cache["hidden"]
        grads["cls.w"] = hidden.T @ dlogits
        grads["cls.b"] = dlogits.sum(axis=0)
        dh = dlogits @ params["cls.w"].T
        grads["pre.w"] = cache["pre_in"].T @ dh
        grads["pre.b"] = dh.sum(axis=0)
        dh = dh @ params["pre.w"].T
        for i in reversed(range(len(self.trunk))):
            if cache["masks"][i] is not None:
                dh = dh * cache["masks"][i]
            inp = cache["inputs"][i]
            dh = dh * cache["gates"][i]
            grads[f"trunk{i}.w"] = inp.T @ dh
            grads[f"trunk{i}.b"] = dh.sum(axis=0)
            dh = dh @ params[f"trunk{i}.w"].T
        return grads


class HopGRU:
    """Shared GRU cell scanned across hop slabs, then an affine readout."""

    def __init__(self, hops: int, width: int, num_classes: int,
                 state_dim: int = 64, readout: str = "last"):
        if readout not in ("last", "mean"):
            raise ConfigError(f"unknown readout {readout!r}")
        self.hops = hops
        self.width = width
        self.num_classes = num_classes
        self.state_dim = state_dim
        self.readout = readout

    def init(self, seed: int = 0, dtype=np.float32) -> dict:
        rng = np.random.default_rng(seed)
        d, h = self.width, self.state_dim
        params = {}
        for gate in ("r", "z", "c"):
            params[f"gru.w{gate}"] = _glorot(rng, d, h, dtype)
            params[f"gru.u{gate}"] = _glorot(rng, h, h, dtype)
            params[f"gru.b{gate}"] = np.zeros(h, dtype=dtype)
        params["pre.w"] = _glorot(rng, h, self.width, dtype)
        params["pre.b"] = np.zeros(self.width, dtype=dtype)
        params["cls.w"] = _glorot(rng, self.width, self.num_classes, dtype)
        params["cls.b"] = np.zeros(self.num_classes, dtype=dtype)
        return params

    def forward(self, params, slabs, ids, *, train=False, dropout=0.0,
                input_dropout=0.0, rng=None):
        if slabs.shape[0] != self.hops + 1:
            raise ValueError(f"bank has {slabs.shape[0] - 1} hops, model expects {self.hops}")
        dtype = params["cls.w"].dtype
        batch = len(ids)
        s = np.zeros((batch, self.state_dim), dtype=dtype)
        steps = []
        states = [s]
        for k in range(self.hops + 1):
            x = slabs[k][ids].astype(dtype)
            xm = None
            if train and input_dropout > 0.0:
                xm = _dropout_mask(rng, x.shape, input_dropout, dtype)
                x = x * xm
            r = _sigmoid(x @ params["gru.wr"] + s @ params["gru.ur"] + params["gru.br"])
            z = _sigmoid(x @ params["gru.wz"] + s @ params["gru.uz"] + params["gru.bz"])
            rs = r * s
            c = np.tanh(x @ params["gru.wc"] + rs @ params["gru.uc"] + params["gru.bc"])
            s_next = (1.0 - z) * c + z * s
            steps.append({"x": x, "xm": xm, "s_prev": s, "r": r, "z": z, "c": c})
            s = s_next
            states.append(s)

        if self.readout == "last":
            pooled = s
        else:
            pooled = np.mean(np.stack(states[1:], axis=0), axis=0)
        pm = None
        if train and dropout > 0.0:
            pm = _dropout_mask(rng, pooled.shape, dropout, dtype)
            pooled = pooled * pm
        hidden = pooled @ params["pre.w"] + params["pre.b"]
        logits = hidden @ params["cls.w"] + params["cls.b"]
        cache = {"steps": steps, "pooled": pooled, "pm": pm, "hidden": hidden,
                 "batch": batch}
        return logits, hidden, cache

    def backward(self, params, cache, dlogits):
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        hidden = cache["hidden"]
        grads["cls.w"] = hidden.T @ dlogits
        grads["cls.b"] = dlogits.sum(axis=0)
        dh = dlogits @ params["cls.w"].T
        grads["pre.w"] = cache["pooled"].T @ dh
        grads["pre.b"] = dh.sum(axis=0)
        dpool = dh @ params["pre.w"].T
        if cache["pm"] is not None:
            dpool = dpool * cache["pm"]

        steps = cache["steps"]
        n_steps = len(steps)
        if self.readout == "last":
            ds = dpool
            per_step = None
        else:
            ds = dpool / n_steps
            per_step = dpool / n_steps

        for k in reversed(range(n_steps)):
            st = steps[k]
            x, s_prev, r, z, c = st["x"], st["s_prev"], st["r"], st["z"], st["c"]
            dz = ds * (s_prev - c)
            dc = ds * (1.0 - z)
            ds_prev = ds * z
            dc_pre = dc * (1.0 - c * c)
            grads["gru.wc"] += x.T @ dc_pre
            grads["gru.uc"] += (r * s_prev).T @ dc_pre
            grads["gru.bc"] += dc_pre.sum(axis=0)
            drs = dc_pre @ params["gru.uc"].T
            dr = drs * s_prev
            ds_prev += drs * r
            dz_pre = dz * z * (1.0 - z)
            grads["gru.wz"] += x.T @ dz_pre
            grads["gru.uz"] += s_prev.T @ dz_pre
            grads["gru.bz"] += dz_pre.sum(axis=0)
            ds_prev += dz_pre @ params["gru.uz"].T
            dr_pre = dr * r * (1.0 - r)
            grads["gru.wr"] += x.T @ dr_pre
            grads["gru.ur"] += s_prev.T @ dr_pre
            grads["gru.br"] += dr_pre.sum(axis=0)
            ds_prev += dr_pre @ params["gru.ur"].T
            ds = ds_prev
            if per_step is not None and k > 0:
                ds = ds + per_step
        return grads


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_xent(logits, labels, mask=None):
    """Mean cross-entropy over masked rows.

    Returns (loss, dlogits) where dlogits already carries the 1/|mask|
    factor and is zero on unmasked rows. ``mask=None`` means all rows.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if mask is None:
        mask = np.ones(logits.shape[0], dtype=bool)
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        raise ValueError("empty mask in cross-entropy")
    sel = logits[idx]
    y = labels[idx]
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise DataError("label outside [0, num_classes)")
    shifted = sel - sel.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(logz - shifted[np.arange(idx.size), y]))
    soft = np.exp(shifted - logz[:, None])
    soft[np.arange(idx.size), y] -= 1.0
    dlogits = np.zeros_like(logits)
    dlogits[idx] = soft / idx.size
    return loss, dlogits


def init_adam(params: dict) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params, grads, state, lr, *, weight_decay=0.0,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update with decoupled weight decay.

    The decay term subtracts lr * weight_decay * p computed from the
    pre-update parameter, so a zero gradient still shrinks weights by
    exactly (1 - lr * weight_decay) per step.
    """
    state["t"] += 1
    t = state["t"]
    b1c = 1.0 - beta1 ** t
    b2c = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads[k].astype(p.dtype, copy=False)
        m = state["m"][k]
        v = state["v"][k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / b1c) / (np.sqrt(v / b2c) + eps)
        if weight_decay:
            update = update + weight_decay * p
        p -= (lr * update).astype(p.dtype, copy=False)
    return state


def accuracy(logits, labels, mask):
    idx = np.nonzero(np.asarray(mask))[0]
    if idx.size == 0:
        raise ValueError("empty mask in accuracy")
    pred = np.argmax(np.asarray(logits)[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


def roc_auc(scores, labels, mask):
    """Binary ROC AUC from scores, ties handled by midranks."""
    idx = np.nonzero(np.asarray(mask))[0]
    s = np.asarray(scores, dtype=np.float64)[idx]
    y = np.asarray(labels)[idx]
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(idx.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes present in the mask")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(idx.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < idx.size:
        j = i
        while j + 1 < idx.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    r_pos = ranks[pos].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def model_scores(logits):
    """Positive-class score for binary AUC: logit difference."""
    logits = np.asarray(logits)
    if logits.shape[1] != 2:
        raise ValueError("ROC AUC is defined here for two-class outputs")
    return logits[:, 1] - logits[:, 0]


def label_features(lv, operator=None):
    """One-hot training labels as features, zero elsewhere.

    When an operator is given the indicator block is diffused once, which
    for the random-walk kind keeps every row sum at most 1.
    """
    from .graph import spmm

    n = lv.labels.shape[0]
    out = np.zeros((n, lv.num_classes), dtype=np.float32)
    train = np.nonzero(lv.train_mask)[0]
    out[train, lv.labels[train]] = 1.0
    if operator is not None:
        out = spmm(operator, out)
    return out

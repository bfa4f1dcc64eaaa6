"""Recurrent beat-sequence classifier with hand-written backpropagation through time.

Wiring: a time-distributed MLP embeds every beat, ``LSTM_0`` turns the
embedded sequence into a new sequence, and three LSTMs read that sequence in
parallel. ``LSTM_1`` is mean-pooled over time, ``LSTM_2`` contributes its final
state and ``LSTM_3`` is max-pooled. The three vectors are concatenated and an
MLP with a softmax head gives the class probabilities. Sequences are
right-padded with a mask; padded steps carry the state forward and are
ignored by the pooling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .utils import seeded_rng

N_CLASSES = 4


@dataclass(frozen=True)
class SeqHyperParams:
    mlp_hidden: int = 256
    embed: int = 128
    lstm_hidden: int = 128
    out_hidden: int = 256
    mlp_dropout: float = 0.25
    lstm0_dropout: tuple = (0.22, 0.44)
    lstm_dropout: tuple = (0.35, 0.36)
    l2: float = 1e-4
    learning_rate: float = 0.002
    lr_factor: float = math.sqrt(2.0)
    lr_patience: int = 3
    early_stop: int = 15
    batch_size: int = 32
    max_epochs: int = 200
    dtype: str = "float64"

    def scaled(self, **kw) -> "SeqHyperParams":
        return replace(self, **kw)


# ------------------------------------------------------------------ params

def _uniform(rng, shape, fan_in, dtype):
    lim = math.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


def _orthogonal(rng, n, dtype):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.sign(np.diag(r))).astype(dtype)


def init_params(n_features: int, hp: SeqHyperParams, seed) -> dict:
    """Seeded initial weights: fan-in uniform kernels, orthogonal recurrences, forget bias 1."""
    rng = seeded_rng(seed)
    dt = np.dtype(hp.dtype)
    M, E, H, O = hp.mlp_hidden, hp.embed, hp.lstm_hidden, hp.out_hidden
    p = {
        "W1": _uniform(rng, (n_features, M), n_features, dt), "b1": np.zeros(M, dt),
        "W2": _uniform(rng, (M, E), M, dt), "b2": np.zeros(E, dt),
    }
    for name, L, D in (("l0", 1, E), ("l123", 3, H)):
        W = np.stack([_uniform(rng, (D, 4 * H), D, dt) for _ in range(L)])
        U = np.stack([np.concatenate([_orthogonal(rng, H, dt) for _ in range(4)], axis=1)
                      for _ in range(L)])
        b = np.zeros((L, 4 * H), dt)
        b[:, H:2 * H] = 1.0
        p[name + "_W"], p[name + "_U"], p[name + "_b"] = W, U, b
    p["W3"] = _uniform(rng, (3 * H, O), 3 * H, dt)
    p["b3"] = np.zeros(O, dt)
    p["W4"] = _uniform(rng, (O, N_CLASSES), O, dt)
    p["b4"] = np.zeros(N_CLASSES, dt)
    return p


KERNELS = ("W1", "W2", "l0_W", "l0_U", "l123_W", "l123_U", "W3", "W4")


# ------------------------------------------------------------------- layers

def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def _lstm_forward(x, mask, W, U, b, in_mask, rec_mask):
    """Parallel LSTMs over a shared or per-layer input.

    x: (L, B, T, D) inputs; mask: (B, T); W: (L, D, 4H); U: (L, H, 4H);
    in_mask (L, B, D) and rec_mask (L, B, H) are dropout multipliers constant
    over time. Returns the output sequence (L, B, T, H) and a cache.
    """
    L, B, T, D = x.shape
    H = U.shape[1]
    dt = x.dtype
    h = np.zeros((L, B, H), dt)
    c = np.zeros((L, B, H), dt)
    out = np.empty((L, B, T, H), dt)
    xin = x * in_mask[:, :, None, :]
    # input projections for all steps at once
    zx = np.matmul(xin.reshape(L, B * T, D), W).reshape(L, B, T, 4 * H) + b[:, None, None, :]
    cache = []
    for t in range(T):
        m = mask[None, :, t, None]
        hr = h * rec_mask
        z = zx[:, :, t] + np.matmul(hr, U)
        i = _sigmoid(z[..., :H])
        f = _sigmoid(z[..., H:2 * H])
        g = np.tanh(z[..., 2 * H:3 * H])
        o = _sigmoid(z[..., 3 * H:])
        cn = f * c + i * g
        tc = np.tanh(cn)
        hn = o * tc
        cache.append((hr, c, i, f, g, o, tc))
        c = m * cn + (1.0 - m) * c
        h = m * hn + (1.0 - m) * h
        out[:, :, t] = h
    return out, (xin, mask, cache, in_mask, rec_mask)


def _lstm_backward(dout, cache, W, U):
    """Gradients of the parallel LSTMs given dL/d(output sequence)."""
    xin, mask, steps, in_mask, rec_mask = cache
    L, B, T, D = xin.shape
    H = U.shape[1]
    dt = xin.dtype
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros((L, 4 * H), dt)
    dz_all = np.empty((L, B, T, 4 * H), dt)
    dh = np.zeros((L, B, H), dt)
    dc = np.zeros((L, B, H), dt)
    for t in range(T - 1, -1, -1):
        hr, c_prev, i, f, g, o, tc = steps[t]
        m = mask[None, :, t, None]
        dh = dh + dout[:, :, t]
        dhn = m * dh
        dcn = m * dc + dhn * o * (1.0 - tc * tc)
        do = dhn * tc
        di = dcn * g
        dg = dcn * i
        df = dcn * c_prev
        dz = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f),
                             dg * (1.0 - g * g), do * o * (1.0 - o)], axis=-1)
        dz_all[:, :, t] = dz
        dU += np.matmul(hr.transpose(0, 2, 1), dz)
        dc = dcn * f + (1.0 - m) * dc
        dh = np.matmul(dz, U.transpose(0, 2, 1)) * rec_mask + (1.0 - m) * dh
    dzf = dz_all.reshape(L, B * T, 4 * H)
    dW += np.matmul(xin.reshape(L, B * T, D).transpose(0, 2, 1), dzf)
    db += dzf.sum(axis=1)
    dx = np.matmul(dzf, W.transpose(0, 2, 1)).reshape(L, B, T, D) * in_mask[:, :, None, :]
    return dx, dW, dU, db


# ------------------------------------------------------------------ network

def _dropout_mask(rng, shape, rate, dt):
    if rng is None or rate <= 0.0:
        return np.ones(shape, dt)
    keep = 1.0 - rate
    return ((rng.random(shape) < keep) / keep).astype(dt)


def forward(p, x, mask, hp: SeqHyperParams, rng=None):
    """Class probabilities (B, 4) and a cache; ``rng=None`` disables dropout."""
    dt = p["W1"].dtype
    x = x.astype(dt, copy=False)
    mask = mask.astype(dt, copy=False)
    B, T, _ = x.shape
    H = hp.lstm_hidden
    a1 = x @ p["W1"] + p["b1"]
    r1 = np.maximum(a1, 0.0)
    m1 = _dropout_mask(rng, r1.shape, hp.mlp_dropout, dt)
    d1 = r1 * m1
    e = d1 @ p["W2"] + p["b2"]
    im0 = _dropout_mask(rng, (1, B, e.shape[-1]), hp.lstm0_dropout[0], dt)
    rm0 = _dropout_mask(rng, (1, B, H), hp.lstm0_dropout[1], dt)
    h0, c0 = _lstm_forward(e[None], mask, p["l0_W"], p["l0_U"], p["l0_b"], im0, rm0)
    im = _dropout_mask(rng, (3, B, H), hp.lstm_dropout[0], dt)
    rm = _dropout_mask(rng, (3, B, H), hp.lstm_dropout[1], dt)
    hs, c123 = _lstm_forward(np.broadcast_to(h0, (3, B, T, H)), mask, p["l123_W"],
                             p["l123_U"], p["l123_b"], im, rm)
    lens = mask.sum(axis=1)
    v1 = (hs[0] * mask[:, :, None]).sum(axis=1) / lens[:, None]
    v2 = hs[1][:, -1]
    masked = np.where(mask[:, :, None] > 0, hs[2], -np.inf)
    arg = np.argmax(masked, axis=1)  # (B, H)
    v3 = np.take_along_axis(hs[2], arg[:, None, :], axis=1)[:, 0]
    v = np.concatenate([v1, v2, v3], axis=1)
    a3 = v @ p["W3"] + p["b3"]
    r3 = np.maximum(a3, 0.0)
    m3 = _dropout_mask(rng, r3.shape, hp.mlp_dropout, dt)
    d3 = r3 * m3
    logits = d3 @ p["W4"] + p["b4"]
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    prob = ez / ez.sum(axis=1, keepdims=True)
    cache = (x, mask, a1, m1, d1, e, c0, h0, c123, hs, lens, arg, v, a3, m3, d3)
    return prob, cache


def loss_and_grads(p, x, mask, y, hp: SeqHyperParams, rng=None):
    """Mean cross-entropy plus L2 on every kernel, and its gradient."""
    prob, cache = forward(p, x, mask, hp, rng)
    x, mask, a1, m1, d1, e, c0, h0, c123, hs, lens, arg, v, a3, m3, d3 = cache
    B, T, _ = x.shape
    H = hp.lstm_hidden
    dt = prob.dtype
    ce = -np.log(np.clip(prob[np.arange(B), y], 1e-300, None)).mean()
    reg = hp.l2 * sum(float(np.sum(p[k] * p[k])) for k in KERNELS)
    g = {}
    dlog = prob.copy()
    dlog[np.arange(B), y] -= 1.0
    dlog /= B
    g["W4"] = d3.T @ dlog
    g["b4"] = dlog.sum(axis=0)
    dd3 = dlog @ p["W4"].T
    da3 = dd3 * m3 * (a3 > 0)
    g["W3"] = v.T @ da3
    g["b3"] = da3.sum(axis=0)
    dv = da3 @ p["W3"].T
    dv1, dv2, dv3 = dv[:, :H], dv[:, H:2 * H], dv[:, 2 * H:]
    dhs = np.zeros_like(hs)
    dhs[0] = mask[:, :, None] * (dv1 / lens[:, None])[:, None, :]
    dhs[1][:, -1] = dv2
    np.put_along_axis(dhs[2], arg[:, None, :], dv3[:, None, :], axis=1)
    dx123, g["l123_W"], g["l123_U"], g["l123_b"] = _lstm_backward(dhs, c123, p["l123_W"],
                                                                   p["l123_U"])
    dh0 = dx123.sum(axis=0, keepdims=True)
    de, g["l0_W"], g["l0_U"], g["l0_b"] = _lstm_backward(dh0, c0, p["l0_W"], p["l0_U"])
    de = de[0]
    g["W2"] = d1.reshape(B * T, -1).T @ de.reshape(B * T, -1)
    g["b2"] = de.sum(axis=(0, 1))
    dd1 = de @ p["W2"].T
    da1 = dd1 * m1 * (a1 > 0)
    g["W1"] = x.reshape(B * T, -1).T @ da1.reshape(B * T, -1)
    g["b1"] = da1.sum(axis=(0, 1))
    for k in KERNELS:
        g[k] = g[k] + 2.0 * hp.l2 * p[k]
    return float(ce + reg), {k: g[k].astype(dt, copy=False) for k in p}


# ---------------------------------------------------------------- training

def pad_batch(seqs, dtype="float64"):
    """Right-pad variable-length (T_i, D) sequences into (B, T, D) plus a mask."""
    if any(len(s) == 0 for s in seqs):
        raise ValueError("sequences must contain at least one step")
    T = max(len(s) for s in seqs)
    D = np.asarray(seqs[0]).shape[1]
    X = np.zeros((len(seqs), T, D), dtype=dtype)
    M = np.zeros((len(seqs), T), dtype=dtype)
    for i, s in enumerate(seqs):
        X[i, :len(s)] = s
        M[i, :len(s)] = 1.0
    return X, M


@dataclass
class SequenceModel:
    params: dict
    hp: SeqHyperParams
    feature_means: np.ndarray
    feature_scales: np.ndarray
    log: list = field(default_factory=list)

    def _prep(self, seqs):
        return [(np.asarray(s, dtype=np.float64) - self.feature_means) / self.feature_scales
                for s in seqs]

    def predict_proba(self, seqs, batch: int = 64) -> np.ndarray:
        """Dropout-free class probabilities, one row per sequence."""
        seqs = self._prep(seqs)
        out = np.empty((len(seqs), N_CLASSES))
        order = np.argsort([len(s) for s in seqs], kind="stable")
        for k in range(0, len(seqs), batch):
            idx = order[k:k + batch]
            X, M = pad_batch([seqs[i] for i in idx], self.hp.dtype)
            out[idx] = forward(self.params, X, M, self.hp, None)[0]
        return out


def _adam_init(p):
    return {k: np.zeros_like(v) for k, v in p.items()}, {k: np.zeros_like(v) for k, v in p.items()}


def _mean_loss(p, seqs, y, hp, batch=64):
    total = 0.0
    order = np.argsort([len(s) for s in seqs], kind="stable")
    for k in range(0, len(seqs), batch):
        idx = order[k:k + batch]
        X, M = pad_batch([seqs[i] for i in idx], hp.dtype)
        prob, _ = forward(p, X, M, hp, None)
        total += -np.log(np.clip(prob[np.arange(len(idx)), y[idx]], 1e-300, None)).sum()
    return total / len(seqs)


def seq_train(seqs, labels, hp: SeqHyperParams = SeqHyperParams(), seed=0, val_idx=None,
              val_fraction: float = 0.15) -> SequenceModel:
    """Train with Adam, plateau learning-rate decay and early stopping.

    ``val_idx`` selects the validation sequences; by default a stratified
    ``val_fraction`` split is drawn with ``seed``. The weights with the best
    validation loss are returned.
    """
    from .utils import stratified_split

    if len(seqs) == 0:
        raise ValueError("no training sequences")
    if any(len(s) == 0 for s in seqs):
        raise ValueError("sequences must contain at least one step")
    y = np.asarray(labels, dtype=np.int64)
    if val_idx is None:
        _, val_idx = stratified_split(y, val_fraction, seeded_rng(seed, 1))
    val_idx = np.asarray(sorted(val_idx), dtype=np.int64)
    tr_idx = np.setdiff1d(np.arange(len(seqs)), val_idx)
    tr_beats = np.concatenate([np.asarray(seqs[i], dtype=np.float64) for i in tr_idx])
    means = tr_beats.mean(axis=0)
    scales = tr_beats.std(axis=0)
    scales[~(scales > 1e-12)] = 1.0
    model = SequenceModel({}, hp, means, scales)
    data = model._prep(seqs)
    tr = [data[i] for i in tr_idx]
    ytr = y[tr_idx]
    va = [data[i] for i in val_idx]
    yva = y[val_idx]
    D = tr[0].shape[1]
    p = init_params(D, hp, [seed, 2])
    rng = seeded_rng(seed, 3)
    m, s = _adam_init(p)
    b1, b2, eps = 0.9, 0.999, 1e-7
    lr = hp.learning_rate
    step = 0
    best = (math.inf, {k: v.copy() for k, v in p.items()})
    since_best = since_lr = 0
    plateau_best = math.inf
    for epoch in range(hp.max_epochs):
        perm = rng.permutation(len(tr))
        tr_loss = 0.0
        for k in range(0, len(tr), hp.batch_size):
            idx = perm[k:k + hp.batch_size]
            X, M = pad_batch([tr[i] for i in idx], hp.dtype)
            loss, g = loss_and_grads(p, X, M, ytr[idx], hp, rng)
            tr_loss += loss * len(idx)
            step += 1
            for key in p:
                m[key] = b1 * m[key] + (1 - b1) * g[key]
                s[key] = b2 * s[key] + (1 - b2) * g[key] * g[key]
                mh = m[key] / (1 - b1 ** step)
                sh = s[key] / (1 - b2 ** step)
                p[key] -= (lr * mh / (np.sqrt(sh) + eps)).astype(p[key].dtype)
        vl = _mean_loss(p, va, yva, hp) if va else tr_loss / len(tr)
        model.log.append({"epoch": epoch, "train_loss": float(tr_loss / len(tr)), "val_loss": float(vl),
                          "lr": float(lr)})
        if vl < best[0]:
            best = (vl, {k: v.copy() for k, v in p.items()})
            since_best = 0
        else:
            since_best += 1
        if vl < plateau_best:
            plateau_best = vl
            since_lr = 0
        else:
            since_lr += 1
            if since_lr >= hp.lr_patience:
                lr /= hp.lr_factor
                since_lr = 0
        if since_best >= hp.early_stop:
            break
    model.params = best[1]
    return model


def seq_predict_proba(m: SequenceModel, seq) -> np.ndarray:
    return m.predict_proba([seq])[0]


def model_state(m: SequenceModel) -> tuple:
    """Split a model into a JSON-able manifest and a dict of float arrays."""
    hp = {k: (list(v) if isinstance(v, tuple) else v) for k, v in m.hp.__dict__.items()}
    arrays = {f"param.{k}": v for k, v in m.params.items()}
    arrays["feature_means"] = m.feature_means
    arrays["feature_scales"] = m.feature_scales
    return {"hp": hp, "log": [{k: float(v) for k, v in e.items()} for e in m.log]}, arrays


def model_from_state(meta: dict, arrays: dict) -> SequenceModel:
    hp = SeqHyperParams(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in meta["hp"].items()})
    dt = np.dtype(hp.dtype)
    params = {k[len("param."):]: np.asarray(v, dtype=dt) for k, v in arrays.items()
              if k.startswith("param.")}
    return SequenceModel(params, hp, np.asarray(arrays["feature_means"], dtype=np.float64),
                         np.asarray(arrays["feature_scales"], dtype=np.float64),
                         [dict(e) for e in meta.get("log", [])])

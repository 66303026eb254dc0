"""Minimal reverse-mode differentiable array engine.

Values are float64 numpy arrays. A :class:`Tape` records every primitive op
applied to its :class:`Var` objects; :func:`backward` walks the record in
reverse and returns gradients for the trainable leaves.

GELU uses the tanh approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiffnumError",
    "Tape",
    "Var",
    "backward",
    "forward",
    "sgd_step",
    "OptimState",
    "adam_init",
    "adam_step",
    "cross_entropy_loss",
]


class DiffnumError(ValueError):
    """Shape mismatch, non-finite value, or misuse of the tape."""


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class Var:
    __slots__ = ("tape", "id", "value", "name")

    def __init__(self, tape: "Tape", vid: int, value: np.ndarray, name: str | None = None):
        self.tape = tape
        self.id = vid
        self.value = value
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape}, name={self.name!r})"

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __neg__(self):
        return self.tape.mul(self, -1.0)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


@dataclass
class _Node:
    op: str
    inputs: tuple[int, ...]
    out: int
    backward: object  # callable(grad_out) -> tuple of input grads (or None)


class Tape:
    """Records primitive ops for one forward pass.

    ``record=False`` gives a value-only tape (no closures kept), used for
    inference where gradients are never needed.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[_Node] = []
        self.parameters: dict[str, int] = {}
        self._shapes: dict[int, tuple[int, ...]] = {}
        self._next_id = 0

    # ------------------------------------------------------------------ leaves
    def _new(self, value: np.ndarray, name: str | None = None) -> Var:
        if not np.all(np.isfinite(value)):
            raise DiffnumError(f"non-finite value produced ({name or 'op'})")
        v = Var(self, self._next_id, value, name)
        self._shapes[v.id] = value.shape
        self._next_id += 1
        return v

    def constant(self, value, name: str | None = None) -> Var:
        return self._new(np.asarray(value, dtype=np.float64), name)

    def param(self, name: str, value) -> Var:
        if name in self.parameters:
            raise DiffnumError(f"parameter {name!r} declared twice")
        v = self._new(np.asarray(value, dtype=np.float64), name)
        self.parameters[name] = v.id
        return v

    def params(self, values: dict[str, np.ndarray]) -> dict[str, Var]:
        return {k: self.param(k, w) for k, w in values.items()}

    def _lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise DiffnumError("variable belongs to a different tape")
            return x
        return self.constant(x)

    def _emit(self, op: str, inputs: tuple[Var, ...], value: np.ndarray, bwd) -> Var:
        if not np.all(np.isfinite(value)):
            shapes = ", ".join(str(i.shape) for i in inputs)
            raise DiffnumError(f"{op}: non-finite output (inputs {shapes})")
        out = self._new(value)
        if self.record:
            self.nodes.append(_Node(op, tuple(i.id for i in inputs), out.id, bwd))
        return out

    # ----------------------------------------------------------- elementwise
    def add(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        try:
            val = a.value + b.value
        except ValueError:
            raise DiffnumError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
        sa, sb = a.shape, b.shape
        return self._emit("add", (a, b), val, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        try:
            val = a.value - b.value
        except ValueError:
            raise DiffnumError(f"sub: incompatible shapes {a.shape} and {b.shape}") from None
        sa, sb = a.shape, b.shape
        return self._emit("sub", (a, b), val, lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def mul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        try:
            val = a.value * b.value
        except ValueError:
            raise DiffnumError(f"multiply: incompatible shapes {a.shape} and {b.shape}") from None
        av, bv = a.value, b.value
        return self._emit(
            "multiply", (a, b), val,
            lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        )

    def div(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        if np.any(b.value == 0):
            raise DiffnumError("div: division by zero")
        try:
            val = a.value / b.value
        except ValueError:
            raise DiffnumError(f"div: incompatible shapes {a.shape} and {b.shape}") from None
        av, bv = a.value, b.value
        return self._emit(
            "div", (a, b), val,
            lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)),
        )

    def tanh(self, x) -> Var:
        x = self._lift(x)
        y = np.tanh(x.value)
        return self._emit("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))

    def sigmoid(self, x) -> Var:
        x = self._lift(x)
        y = _sigmoid(x.value)
        return self._emit("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))

    def gelu(self, x) -> Var:
        x = self._lift(x)
        xv = x.value
        inner = _SQRT_2_OVER_PI * (xv + 0.044715 * xv ** 3)
        t = np.tanh(inner)
        y = 0.5 * xv * (1.0 + t)

        def bwd(g):
            dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * xv * xv)
            return (g * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * dinner),)

        return self._emit("gelu", (x,), y, bwd)

    def softplus(self, x) -> Var:
        x = self._lift(x)
        xv = x.value
        y = np.logaddexp(0.0, xv)
        return self._emit("softplus", (x,), y, lambda g: (g * _sigmoid(xv),))

    def exp(self, x) -> Var:
        x = self._lift(x)
        with np.errstate(over="ignore"):  # overflow is reported by _emit
            y = np.exp(x.value)
        return self._emit("exp", (x,), y, lambda g: (g * y,))

    def log(self, x) -> Var:
        x = self._lift(x)
        if np.any(x.value <= 0):
            raise DiffnumError("log: non-positive input")
        xv = x.value
        return self._emit("log", (x,), np.log(xv), lambda g: (g / xv,))

    def square(self, x) -> Var:
        x = self._lift(x)
        xv = x.value
        return self._emit("square", (x,), xv * xv, lambda g: (2.0 * g * xv,))

    # ------------------------------------------------------------ structural
    def matmul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        if a.value.ndim < 1 or b.value.ndim != 2 or a.shape[-1] != b.shape[0]:
            raise DiffnumError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        av, bv = a.value, b.value
        val = av @ bv

        def bwd(g):
            ga = g @ bv.T
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return self._emit("matmul", (a, b), val, bwd)

    def softmax(self, x) -> Var:
        x = self._lift(x)
        y = _softmax(x.value)

        def bwd(g):
            return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

        return self._emit("softmax", (x,), y, bwd)

    def layer_norm(self, x, gamma, beta, eps: float = 1e-5) -> Var:
        x, gamma, beta = self._lift(x), self._lift(gamma), self._lift(beta)
        n = x.shape[-1]
        if gamma.shape != (n,) or beta.shape != (n,):
            raise DiffnumError(
                f"layer-norm: scale/shift shapes {gamma.shape}, {beta.shape} do not match last dim {n}"
            )
        xv = x.value
        mu = xv.mean(axis=-1, keepdims=True)
        xc = xv - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        gv = gamma.value
        y = xhat * gv + beta.value

        def bwd(g):
            gxhat = g * gv
            gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
            lead = tuple(range(g.ndim - 1))
            return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

        return self._emit("layer-norm", (x, gamma, beta), y, bwd)

    def embedding(self, table, ids) -> Var:
        table = self._lift(table)
        ids = np.asarray(ids, dtype=np.int64)
        V = table.shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= V):
            raise DiffnumError(f"embedding-lookup: id out of range [0, {V})")
        tshape = table.shape

        def bwd(g):
            gt = np.zeros(tshape)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, tshape[1]))
            return (gt,)

        return self._emit("embedding-lookup", (table,), table.value[ids], bwd)

    def concat(self, xs, axis: int = -1) -> Var:
        xs = [self._lift(x) for x in xs]
        try:
            val = np.concatenate([x.value for x in xs], axis=axis)
        except ValueError:
            raise DiffnumError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
        sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
        return self._emit("concat", tuple(xs), val, lambda g: tuple(np.split(g, sizes, axis=axis)))

    def stack(self, xs, axis: int = 0) -> Var:
        xs = [self._lift(x) for x in xs]
        try:
            val = np.stack([x.value for x in xs], axis=axis)
        except ValueError:
            raise DiffnumError(f"stack: incompatible shapes {[x.shape for x in xs]}") from None
        n = len(xs)
        return self._emit(
            "stack", tuple(xs), val,
            lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
        )

    def take(self, x, index: int, axis: int) -> Var:
        """Select one slice along ``axis`` (dropping that axis)."""
        x = self._lift(x)
        shape = x.shape

        def bwd(g):
            gx = np.zeros(shape)
            idx = [slice(None)] * len(shape)
            idx[axis] = index
            gx[tuple(idx)] = g
            return (gx,)

        return self._emit("take", (x,), np.take(x.value, index, axis=axis), bwd)

    def reshape(self, x, shape) -> Var:
        x = self._lift(x)
        old = x.shape
        try:
            val = x.value.reshape(shape)
        except ValueError:
            raise DiffnumError(f"reshape: cannot reshape {old} to {shape}") from None
        return self._emit("reshape", (x,), val, lambda g: (g.reshape(old),))

    def broadcast_to(self, x, shape) -> Var:
        x = self._lift(x)
        old = x.shape
        try:
            val = np.broadcast_to(x.value, shape).copy()
        except ValueError:
            raise DiffnumError(f"broadcast: cannot broadcast {old} to {shape}") from None
        return self._emit("broadcast", (x,), val, lambda g: (_unbroadcast(g, old),))

    def mean(self, x, axis: int | None = None) -> Var:
        x = self._lift(x)
        shape = x.shape
        if axis is None:
            n = x.value.size
            if n == 0:
                raise DiffnumError("mean: empty input")
            return self._emit("mean", (x,), np.asarray(x.value.mean()),
                              lambda g: (np.full(shape, g / n),))
        n = shape[axis]
        if n == 0:
            raise DiffnumError(f"mean: empty axis {axis} in shape {shape}")

        def bwd(g):
            return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

        return self._emit("mean", (x,), x.value.mean(axis=axis), bwd)

    def sum(self, x) -> Var:
        x = self._lift(x)
        shape = x.shape
        return self._emit("sum", (x,), np.asarray(x.value.sum()), lambda g: (np.full(shape, g),))

    def dropout(self, x, mask, p: float) -> Var:
        """Apply an explicit Bernoulli keep-mask scaled by 1/(1-p)."""
        x = self._lift(x)
        mask = np.asarray(mask, dtype=np.float64)
        if not 0.0 <= p < 1.0:
            raise DiffnumError(f"dropout: p={p} outside [0, 1)")
        try:
            scale = np.broadcast_to(mask, x.shape) / (1.0 - p)
        except ValueError:
            raise DiffnumError(f"dropout: mask shape {mask.shape} vs input {x.shape}") from None
        return self._emit("dropout", (x,), x.value * scale, lambda g: (g * scale,))

    # -------------------------------------------------------------- composite
    def lstm_cell(self, xw, h, c, w_hh) -> tuple[Var, Var]:
        """One fused LSTM step.

        ``xw`` is the precomputed input projection plus bias (B x 4H), gate
        order i, f, g, o. Returns (h_new, c_new).
        """
        xw, h, c, w_hh = (self._lift(t) for t in (xw, h, c, w_hh))
        H = h.shape[-1]
        if xw.shape[-1] != 4 * H or w_hh.shape != (H, 4 * H) or c.shape != h.shape:
            raise DiffnumError(
                f"lstm-cell: shapes xw {xw.shape}, h {h.shape}, c {c.shape}, w_hh {w_hh.shape}"
            )
        hv, cv, wv = h.value, c.value, w_hh.value
        z = xw.value + hv @ wv
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * cv + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc
        # Pack both outputs into one node; split with take-like views below.
        packed = np.stack([h_new, c_new])

        def bwd(g):
            gh, gc = g[0], g[1]
            gc = gc + gh * o * (1.0 - tc * tc)
            go = gh * tc
            gi = gc * gg
            gf = gc * cv
            gg_ = gc * i
            dz = np.concatenate([
                gi * i * (1.0 - i),
                gf * f * (1.0 - f),
                gg_ * (1.0 - gg * gg),
                go * o * (1.0 - o),
            ], axis=-1)
            return dz, dz @ wv.T, gc * f, hv.T @ dz

        both = self._emit("lstm-cell", (xw, h, c, w_hh), packed, bwd)
        return self.take(both, 0, 0), self.take(both, 1, 0)

    def lstm_sequence(self, xw, h0, c0, w_hh) -> Var:
        """Run an LSTM layer over a whole sequence as one node.

        ``xw`` is B x L x 4H (input projection plus bias); returns the hidden
        states B x L x H. Backward is truncation-free BPTT.
        """
        xw, h0, c0, w_hh = (self._lift(t) for t in (xw, h0, c0, w_hh))
        if xw.value.ndim != 3:
            raise DiffnumError(f"lstm-sequence: expected B x L x 4H input, got {xw.shape}")
        B, L, H4 = xw.shape
        H = H4 // 4
        if H4 != 4 * H or h0.shape != (B, H) or c0.shape != (B, H) or w_hh.shape != (H, 4 * H):
            raise DiffnumError(
                f"lstm-sequence: shapes xw {xw.shape}, h0 {h0.shape}, c0 {c0.shape}, w_hh {w_hh.shape}"
            )
        wv = w_hh.value
        xv = xw.value
        hs = np.empty((B, L + 1, H))
        cs = np.empty((B, L + 1, H))
        gates = np.empty((B, L, 4 * H))
        hs[:, 0], cs[:, 0] = h0.value, c0.value
        for t in range(L):
            h, c, gate = lstm_step(xv[:, t], hs[:, t], cs[:, t], wv)
            hs[:, t + 1], cs[:, t + 1], gates[:, t] = h, c, gate
        out = hs[:, 1:].copy()

        def bwd(g):
            gxw = np.empty_like(xv)
            gw = np.zeros_like(wv)
            gh_next = np.zeros((B, H))
            gc_next = np.zeros((B, H))
            for t in range(L - 1, -1, -1):
                i, f = gates[:, t, :H], gates[:, t, H:2 * H]
                gg, o = gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:]
                tc = np.tanh(cs[:, t + 1])
                gh = g[:, t] + gh_next
                gc = gc_next + gh * o * (1.0 - tc * tc)
                dz = np.concatenate([
                    gc * gg * i * (1.0 - i),
                    gc * cs[:, t] * f * (1.0 - f),
                    gc * i * (1.0 - gg * gg),
                    gh * tc * o * (1.0 - o),
                ], axis=-1)
                gxw[:, t] = dz
                gw += hs[:, t].T @ dz
                gh_next = dz @ wv.T
                gc_next = gc * f
            return gxw, gh_next, gc_next, gw

        return self._emit("lstm-sequence", (xw, h0, c0, w_hh), out, bwd)

    def log_softmax_nll(self, logits, targets, weights) -> Var:
        """Sum over positions of ``weights * -log softmax(logits)[target]``."""
        logits = self._lift(logits)
        targets = np.asarray(targets, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        lv = logits.value
        if targets.shape != lv.shape[:-1] or weights.shape != targets.shape:
            raise DiffnumError(
                f"cross-entropy: logits {lv.shape}, targets {targets.shape}, weights {weights.shape}"
            )
        V = lv.shape[-1]
        if targets.size and (targets.min() < 0 or targets.max() >= V):
            raise DiffnumError(f"cross-entropy: target outside [0, {V})")
        m = lv.max(axis=-1, keepdims=True)
        lse = m + np.log(np.exp(lv - m).sum(axis=-1, keepdims=True))
        logp = lv - lse
        picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
        val = np.asarray(-(weights * picked).sum())

        def bwd(g):
            p = np.exp(logp)
            onehot = np.zeros_like(p)
            np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
            return (g * weights[..., None] * (p - onehot),)

        return self._emit("cross-entropy", (logits,), val, bwd)


def lstm_step(xw_t: np.ndarray, h: np.ndarray, c: np.ndarray, w_hh: np.ndarray):
    """Numpy LSTM step; returns (h_new, c_new, activated gates i|f|g|o)."""
    H = h.shape[-1]
    z = xw_t + h @ w_hh
    gate = np.empty_like(z)
    gate[:, :2 * H] = _sigmoid(z[:, :2 * H])
    gate[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
    gate[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
    c_new = gate[:, H:2 * H] * c + gate[:, :H] * gate[:, 2 * H:3 * H]
    h_new = gate[:, 3 * H:] * np.tanh(c_new)
    return h_new, c_new, gate


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x) -> np.ndarray:
    """Plain numpy softmax over the last axis."""
    return _softmax(np.asarray(x, dtype=np.float64))


def forward(tape: Tape, fn, inputs: dict[str, np.ndarray]) -> dict[str, Var]:
    """Run ``fn(tape, **leaves)`` with the named inputs declared as constants."""
    leaves = {k: tape.constant(v, name=k) for k, v in inputs.items()}
    out = fn(tape, **leaves)
    if isinstance(out, Var):
        return {"out": out}
    return dict(out)


def backward(tape: Tape, loss: Var) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar ``loss``; returns grads keyed by parameter name."""
    if not tape.record:
        raise DiffnumError("backward on a non-recording tape")
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise DiffnumError("loss is not a variable of this tape")
    if loss.value.size != 1:
        raise DiffnumError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._next_id == 0:
        raise DiffnumError("backward called before any forward pass")
    grads: dict[int, np.ndarray] = {loss.id: np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        if node.out > loss.id:
            continue
        g = grads.pop(node.out, None)
        if g is None:
            continue
        for vid, gi in zip(node.inputs, node.backward(g)):
            if gi is None:
                continue
            if vid in grads:
                grads[vid] = grads[vid] + gi
            else:
                grads[vid] = gi
    out = {}
    for name, vid in tape.parameters.items():
        g = grads.get(vid)
        out[name] = np.zeros(tape._shapes[vid]) if g is None else np.asarray(g, dtype=np.float64).reshape(tape._shapes[vid])
    return out


# ----------------------------------------------------------------- optimizers

def _check_congruent(params, grads):
    if params.keys() != grads.keys():
        raise DiffnumError("parameter and gradient names differ")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise DiffnumError(f"{k}: parameter shape {np.shape(params[k])} vs grad {np.shape(grads[k])}")
        if not np.all(np.isfinite(grads[k])):
            raise DiffnumError(f"{k}: non-finite gradient")


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    """Return ``params - lr * grads`` as a new dict."""
    if not lr > 0:
        raise DiffnumError(f"learning rate must be positive, got {lr}")
    _check_congruent(params, grads)
    return {k: params[k] - lr * grads[k] for k in params}


@dataclass
class OptimState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    initialized: bool = False


def adam_init(params: dict[str, np.ndarray], learning_rate: float = 1e-3,
              weight_decay: float = 0.0, **kw) -> OptimState:
    state = OptimState(kind="adam", learning_rate=learning_rate, weight_decay=weight_decay, **kw)
    state.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
    state.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
    state.initialized = True
    return state


def adam_step(state: OptimState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Bias-corrected Adam followed by decoupled weight decay.

    Mutates the moment buffers in ``state``; returns new parameter arrays.
    """
    if not state.initialized:
        raise DiffnumError("Adam state is not initialized")
    _check_congruent(params, grads)
    if params.keys() != state.m.keys():
        raise DiffnumError("Adam state was initialized for different parameters")
    state.step += 1
    t = state.step
    b1, b2, lr = state.beta1, state.beta2, state.learning_rate
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    decay = 1.0 - lr * state.weight_decay
    out = {}
    for k in params:
        g = grads[k]
        m = state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        p = params[k] - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        out[k] = p * decay
    return out


def cross_entropy_loss(tape: Tape, logits: Var, targets, pad_id: int = 0) -> Var:
    """Mean token NLL over non-PAD targets. ``logits`` is B x L x V."""
    targets = np.asarray(targets, dtype=np.int64)
    weights = (targets != pad_id).astype(np.float64)
    count = weights.sum()
    if count == 0:
        raise DiffnumError("cross-entropy: every target position is PAD")
    total = tape.log_softmax_nll(logits, targets, weights)
    return tape.mul(total, 1.0 / count)

"""Dense float64 tensors with reverse-mode automatic differentiation.

The tape is define-by-run: ops executed on tracked tensors append nodes to
the tape they live on, and `backward` replays the recording in reverse.
Everything is float64 and single-threaded within one tape; distinct tapes
are independent.
"""

import numpy as np

from .rng import make_rng


class _Node:
    """One recorded op: ids of its inputs plus the local backward rule."""

    __slots__ = ("inputs", "backward", "shape")

    def __init__(self, inputs, backward, shape=None):
        self.inputs = inputs      # tuple of node ids, -1 for untracked inputs
        self.backward = backward  # fn(out_grad) -> tuple of input grads; None for leaves
        self.shape = shape        # recorded for leaves so unused params get zeros


class Tape:
    """Append-only record of one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.leaf_ids: list[int] = []

    def _record(self, inputs, backward_fn, shape=None) -> int:
        node_id = len(self.nodes)
        self.nodes.append(_Node(inputs, backward_fn, shape))
        return node_id

    def leaf(self, data) -> "Tensor":
        """Register a tracked parameter; `backward` will report its gradient."""
        t = Tensor(data)
        t.tape = self
        t.node_id = self._record((), None, t.data.shape)
        self.leaf_ids.append(t.node_id)
        return t

    def adopt(self, t: "Tensor") -> None:
        """Re-register an existing tensor as a leaf on this tape (in place)."""
        t.tape = self
        t.node_id = self._record((), None, t.data.shape)
        self.leaf_ids.append(t.node_id)


class Tensor:
    """Row-major float64 array, optionally recorded on a tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape=None, node_id=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    @property
    def tracked(self):
        return self.tape is not None

    def __repr__(self):
        tag = f", node={self.node_id}" if self.tracked else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- unary ops as methods --------------------------------------------
    def relu(self):
        out = np.maximum(self.data, 0.0)
        x = self.data

        def back(g):
            return (g * (x > 0.0),)

        return _result(out, (self,), back)

    def exp(self):
        out = np.exp(self.data)

        def back(g):
            return (g * out,)

        return _result(out, (self,), back)

    def log(self):
        if np.any(self.data <= 0.0):
            raise ValueError("log requires strictly positive inputs")
        x = self.data

        def back(g):
            return (g / x,)

        return _result(np.log(x), (self,), back)

    def sum(self):
        shape = self.data.shape
        out = np.asarray(np.sum(self.data))

        def back(g):
            return (np.full(shape, float(g)),)

        return _result(out, (self,), back)

    def mean(self):
        shape = self.data.shape
        size = self.data.size
        out = np.asarray(np.mean(self.data))

        def back(g):
            return (np.full(shape, float(g) / size),)

        return _result(out, (self,), back)

    def transpose(self):
        if self.data.ndim != 2:
            raise ValueError("transpose expects a 2-d tensor")
        out = self.data.T.copy()

        def back(g):
            return (g.T.copy(),)

        return _result(out, (self,), back)

    @property
    def T(self):
        return self.transpose()


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _result(data, parents, backward_fn) -> Tensor:
    """Build the output tensor, recording a node if any parent is tracked."""
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is None:
                tape = p.tape
            elif tape is not p.tape:
                raise ValueError("inputs live on different tapes")
    if tape is None:
        return Tensor(data)
    ids = tuple(p.node_id if p.tape is not None else -1 for p in parents)
    node_id = tape._record(ids, backward_fn)
    return Tensor(data, tape, node_id)


def _validated_shape(shape):
    dims = tuple(int(d) for d in shape)
    if len(dims) == 0:
        raise ValueError("shape must be non-empty")
    for d in dims:
        if d < 1:
            raise ValueError(f"invalid shape {dims}: dimensions must be >= 1")
    return dims


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(_validated_shape(shape)))


def randn(shape, seed, stddev=1.0) -> Tensor:
    """Gaussian samples from a Philox stream; identical for identical seeds."""
    dims = _validated_shape(shape)
    if stddev <= 0:
        raise ValueError("stddev must be > 0")
    rng = make_rng(seed)
    return Tensor(rng.normal(0.0, stddev, size=dims))


def _reduce_to(g, shape):
    # inverse of the size-1 broadcast allowed in elementwise ops
    if g.shape == shape:
        return g
    return np.asarray(np.sum(g)).reshape(shape)


def _check_elementwise(a: Tensor, b: Tensor, opname: str):
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ValueError(
        f"{opname}: shape mismatch {a.data.shape} vs {b.data.shape} "
        "(only size-1 broadcast is supported)"
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise(a, b, "add")
    sa, sb = a.data.shape, b.data.shape

    def back(g):
        return (_reduce_to(g, sa), _reduce_to(g, sb))

    return _result(a.data + b.data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise(a, b, "sub")
    sa, sb = a.data.shape, b.data.shape

    def back(g):
        return (_reduce_to(g, sa), _reduce_to(-g, sb))

    return _result(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise(a, b, "mul")
    da, db = a.data, b.data

    def back(g):
        return (_reduce_to(g * db, da.shape), _reduce_to(g * da, db.shape))

    return _result(da * db, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def back(g):
        return (g * c,)

    return _result(a.data * c, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-d tensors")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: inner dimensions differ, {a.data.shape} @ {b.data.shape}"
        )
    da, db = a.data, b.data

    def back(g):
        return (g @ db.T, da.T @ g)

    return _result(da @ db, (a, b), back)


def concat_rows(tensors) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise ValueError("concat_rows needs at least one tensor")
    for t in ts:
        if t.data.ndim != 2 or t.data.shape[1] != ts[0].data.shape[1]:
            raise ValueError("concat_rows: tensors must be 2-d with equal column counts")
    counts = [t.data.shape[0] for t in ts]
    edges = np.cumsum(counts)[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, edges, axis=0))

    return _result(np.concatenate([t.data for t in ts], axis=0), tuple(ts), back)


def gather_rows(x: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    n = x.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")
    shape = x.data.shape

    def back(g):
        buf = np.zeros(shape)
        np.add.at(buf, idx, g)
        return (buf,)

    return _result(x.data[idx], (x,), back)


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log-softmax; rows satisfy logsumexp(row) == 0."""
    if x.data.ndim != 2:
        raise ValueError("log_softmax expects a 2-d tensor")
    m = np.max(x.data, axis=1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def back(g):
        return (g - soft * np.sum(g, axis=1, keepdims=True),)

    return _result(out, (x,), back)


def l2_normalize_rows(x: Tensor, eps=1e-12) -> Tensor:
    """Scale each row to unit norm; rows with norm < eps are divided by eps."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if x.data.ndim != 2:
        raise ValueError("l2_normalize_rows expects a 2-d tensor")
    norms = np.sqrt(np.sum(x.data * x.data, axis=1, keepdims=True))
    denom = np.maximum(norms, eps)
    out = x.data / denom
    clamped = norms < eps

    def back(g):
        dot = np.sum(out * g, axis=1, keepdims=True)
        full = (g - out * dot) / denom
        return (np.where(clamped, g / eps, full),)

    return _result(out, (x,), back)


def backward(loss: Tensor) -> dict[int, Tensor]:
    """Gradient of a scalar loss w.r.t. every leaf on its tape.

    Returns a map from leaf node id to gradient tensor; leaves the loss does
    not depend on get zero gradients.
    """
    if loss.tape is None:
        raise ValueError("loss is not recorded on any tape")
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    tape = loss.tape
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    for nid in range(loss.node_id, -1, -1):
        g = grads.pop(nid, None)
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.backward is None:
            leaf_grads[nid] = g
            continue
        for iid, ig in zip(node.inputs, node.backward(g)):
            if iid < 0 or ig is None:
                continue
            if iid in grads:
                grads[iid] = grads[iid] + ig
            else:
                grads[iid] = ig
    out = {}
    for nid in tape.leaf_ids:
        if nid in leaf_grads:
            out[nid] = Tensor(leaf_grads[nid])
        else:
            out[nid] = Tensor(np.zeros(tape.nodes[nid].shape))
    return out

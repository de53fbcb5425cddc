"""Minimal reverse-mode automatic differentiation over a closed op set.

The training stack only needs a handful of operations (affine maps, ReLU,
row-wise l2 normalization, a scaled similarity matrix, cross-entropy against
the diagonal, elementwise add, scalar scale, row gather, and a full sum), so
the engine records exactly those on a forward-ordered tape and replays it in
reverse. Keeping the set closed means every backward rule is small enough to
verify independently against central finite differences.

All values are dense float64. A `Graph` is single-writer: build a fresh one
per forward pass; distinct graphs over distinct parameter copies are
independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ContractError,
    ClassIndexError,
    DegenerateEmbeddingError,
    DimensionError,
    InvalidTemperatureError,
)

# rows with l2 norm below this are rejected rather than divided by ~0
NORM_FLOOR = 1e-12


class Tensor:
    """Dense float64 array plus an optional gradient buffer of equal shape.

    `frozen` marks tensors exposed through a frozen parameter view; the
    optimizer refuses to update them and the underlying array is read-only.
    """

    __slots__ = ("data", "grad", "name", "frozen")

    def __init__(self, data, name: str | None = None, frozen: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.name = name
        self.frozen = frozen

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), name=self.name)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"


@dataclass
class _Node:
    op: str
    inputs: tuple[Tensor, ...]
    out: Tensor
    backward: Callable[[np.ndarray], None]


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    checked: int
    passed: bool


@dataclass
class GradCheckReport:
    """Per-parameter finite-difference comparison results."""

    entries: list[GradCheckEntry] = field(default_factory=list)
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)


class Graph:
    """Forward-ordered tape of op records.

    Every op appends one record whose inputs were all created earlier, so
    walking the tape in reverse visits consumers before producers and plain
    gradient accumulation is correct even when a tensor fans out.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __len__(self) -> int:
        return len(self._nodes)

    def ops(self) -> list[str]:
        return [n.op for n in self._nodes]

    def _record(self, op: str, inputs: tuple[Tensor, ...], out: Tensor,
                backward: Callable[[np.ndarray], None]) -> Tensor:
        self._nodes.append(_Node(op, inputs, out, backward))
        self._produced.add(id(out))
        return out

    # ---- ops ------------------------------------------------------------

    def affine(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """out[i, j] = sum_k x[i, k] w[k, j] + b[j]."""
        if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
            raise DimensionError(
                f"affine expects x 2-d, w 2-d, b 1-d; got {x.shape}, {w.shape}, {b.shape}")
        if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
            raise DimensionError(
                f"affine shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
        out = Tensor(x.data @ w.data + b.data)

        def backward(g: np.ndarray) -> None:
            x.grad += g @ w.data.T
            w.grad += x.data.T @ g
            b.grad += g.sum(axis=0)

        return self._record("affine", (x, w, b), out, backward)

    def relu(self, x: Tensor) -> Tensor:
        out = Tensor(np.maximum(x.data, 0.0))
        mask = x.data > 0.0

        def backward(g: np.ndarray) -> None:
            x.grad += g * mask

        return self._record("relu", (x,), out, backward)

    def l2_normalize(self, x: Tensor) -> Tensor:
        """Row-wise x_i / ||x_i||; rejects rows with norm below NORM_FLOOR."""
        if x.data.ndim != 2:
            raise DimensionError(f"l2_normalize expects a 2-d input, got {x.shape}")
        norms = np.linalg.norm(x.data, axis=1)
        bad = np.flatnonzero(norms < NORM_FLOOR)
        if bad.size:
            raise DegenerateEmbeddingError(
                f"row {int(bad[0])} has norm {norms[bad[0]]:.3e} < {NORM_FLOOR:g}")
        y = x.data / norms[:, None]
        out = Tensor(y)

        def backward(g: np.ndarray) -> None:
            # d/dx_i of x_i/||x_i||: remove the component of g along y_i
            inner = np.sum(g * y, axis=1, keepdims=True)
            x.grad += (g - y * inner) / norms[:, None]

        return self._record("l2_normalize", (x,), out, backward)

    def similarity_matrix(self, v: Tensor, u: Tensor, tau: float) -> Tensor:
        """out[i, j] = (v_i . u_j) / tau. Inputs are expected row-normalized."""
        if tau <= 0.0:
            raise InvalidTemperatureError(f"temperature must be > 0, got {tau}")
        if v.data.ndim != 2 or u.data.ndim != 2 or v.shape[1] != u.shape[1]:
            raise DimensionError(
                f"similarity_matrix expects matching widths, got {v.shape} and {u.shape}")
        out = Tensor(v.data @ u.data.T / tau)

        def backward(g: np.ndarray) -> None:
            v.grad += g @ u.data / tau
            u.grad += g.T @ v.data / tau

        return self._record("similarity_matrix", (v, u), out, backward)

    def diagonal_cross_entropy(self, logits: Tensor) -> Tensor:
        """-(1/N) sum_i log softmax(logits[i, :])[i], stabilized by row max."""
        if logits.data.ndim != 2 or logits.shape[0] != logits.shape[1]:
            raise DimensionError(
                f"diagonal_cross_entropy expects a square matrix, got {logits.shape}")
        n = logits.shape[0]
        row_max = logits.data.max(axis=1, keepdims=True)
        shifted = logits.data - row_max
        exp = np.exp(shifted)
        denom = exp.sum(axis=1, keepdims=True)
        log_probs = shifted - np.log(denom)
        out = Tensor(-np.mean(np.diagonal(log_probs)))
        softmax = exp / denom

        def backward(g: np.ndarray) -> None:
            scale = float(g) / n
            delta = softmax.copy()
            delta[np.diag_indices(n)] -= 1.0
            logits.grad += scale * delta

        return self._record("diagonal_cross_entropy", (logits,), out, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; shapes must match exactly (no broadcasting)."""
        if a.shape != b.shape:
            raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")
        out = Tensor(a.data + b.data)

        def backward(g: np.ndarray) -> None:
            a.grad += g
            b.grad += g

        return self._record("add", (a, b), out, backward)

    def scale(self, x: Tensor, c: float) -> Tensor:
        c = float(c)
        out = Tensor(x.data * c)

        def backward(g: np.ndarray) -> None:
            x.grad += g * c

        return self._record("scale", (x,), out, backward)

    def gather(self, table: Tensor, ids: Sequence[int]) -> Tensor:
        """Select rows of `table`; gradients scatter-add back into those rows only."""
        if table.data.ndim != 2:
            raise DimensionError(f"gather expects a 2-d table, got {table.shape}")
        idx = np.asarray(ids, dtype=np.int64)
        if idx.ndim != 1:
            raise DimensionError(f"gather expects a flat id list, got shape {idx.shape}")
        rows = table.shape[0]
        bad = np.flatnonzero((idx < 0) | (idx >= rows))
        if bad.size:
            raise ClassIndexError(
                f"id {int(idx[bad[0]])} out of range for table with {rows} rows")
        out = Tensor(table.data[idx])

        def backward(g: np.ndarray) -> None:
            np.add.at(table.grad, idx, g)

        return self._record("gather", (table,), out, backward)

    def sum(self, x: Tensor) -> Tensor:
        """Sum of all entries, as a scalar; the usual way to close a test loss."""
        out = Tensor(x.data.sum())

        def backward(g: np.ndarray) -> None:
            x.grad += g * np.ones_like(x.data)

        return self._record("sum", (x,), out, backward)

    # ---- reverse pass ----------------------------------------------------

    def backward(self, loss: Tensor, params: Sequence[Tensor] = ()) -> None:
        """Populate .grad with dLoss/d(tensor) for everything in the graph.

        `loss` must be a scalar produced by this graph. Tensors passed in
        `params` that the loss never touches end up with an all-zero grad
        rather than None.
        """
        if loss.data.shape != ():
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.data.shape}")
        if id(loss) not in self._produced:
            raise ContractError("backward requires a loss produced by this graph")

        seen: set[int] = set()
        for node in self._nodes:
            for t in node.inputs + (node.out,):
                if id(t) not in seen:
                    seen.add(id(t))
                    t.grad = np.zeros_like(t.data)
        for t in params:
            if id(t) not in seen:
                seen.add(id(t))
                t.grad = np.zeros_like(t.data)

        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            node.backward(node.out.grad)


# ---- gradient checking ----------------------------------------------------

def analytic_gradients(build_loss: Callable[[Graph], Tensor],
                       params: Sequence[tuple[str, Tensor]]) -> dict[str, np.ndarray]:
    """Run one forward/backward pass and return copies of each parameter grad."""
    g = Graph()
    loss = build_loss(g)
    g.backward(loss, params=[t for _, t in params])
    return {name: t.grad.copy() for name, t in params}


def finite_difference_check(build_loss: Callable[[Graph], Tensor],
                            params: Sequence[tuple[str, Tensor]],
                            grads: dict[str, np.ndarray],
                            eps: float = 1e-5,
                            tol: float = 1e-4,
                            samples: int = 20,
                            rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare `grads` against central finite differences of the loss.

    For each parameter up to `samples` coordinates are probed (all of them
    when the parameter is small). Relative error uses a floored denominator
    so coordinates whose true gradient is ~0 compare absolutely.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    report = GradCheckReport(tol=tol)

    def loss_value() -> float:
        return float(build_loss(Graph()).data)

    for name, t in params:
        flat = t.data.reshape(-1)
        n = flat.size
        if n <= samples:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples, replace=False)
        analytic = grads[name].reshape(-1)
        worst = 0.0
        for c in coords:
            keep = flat[c]
            flat[c] = keep + eps
            up = loss_value()
            flat[c] = keep - eps
            down = loss_value()
            flat[c] = keep
            numeric = (up - down) / (2.0 * eps)
            a = float(analytic[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, rel)
        report.entries.append(GradCheckEntry(name, worst, len(coords), worst < tol))
    return report


def grad_check(build_loss: Callable[[Graph], Tensor],
               params: Sequence[tuple[str, Tensor]],
               eps: float = 1e-5,
               tol: float = 1e-4,
               samples: int = 20,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Full check: analytic backward pass vs central finite differences.

    A zero-parameter list yields an empty, passing report.
    """
    grads = analytic_gradients(build_loss, params) if params else {}
    return finite_difference_check(build_loss, params, grads,
                                   eps=eps, tol=tol, samples=samples, rng=rng)

"""Identity softmax, contrastive margin loss, and the joint pair objective."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, add, linear, relu, sub, sum_all, mul, add_const, negate, _emit

__all__ = [
    "identity_softmax",
    "classification_loss",
    "contrastive_loss",
    "multi_task_loss",
]


def identity_softmax(u, weights) -> np.ndarray:
    """P(identity = c | u) over all K identities, max-logit stabilised.

    ``weights`` is the K x q class matrix (one row per identity); accepts
    Tensors or plain arrays and returns a plain probability vector.
    """
    s = weights.data if isinstance(weights, Tensor) else np.asarray(weights)
    ud = u.data if isinstance(u, Tensor) else np.asarray(u)
    logits = s @ ud
    logits = logits - logits.max()
    e = np.exp(logits)
    return e / e.sum()


def classification_loss(tape, u: Tensor, weights: Tensor, identity: int) -> Tensor:
    """Negative log-probability of the true identity, as one fused tape op.

    The backward is the analytic softmax-minus-onehot form, which stays
    stable where composing exp/log primitives would not.
    """
    k = weights.data.shape[0]
    if not 0 <= identity < k:
        raise ValueError(f"identity {identity} out of range for {k} classes")
    logits = linear(tape, u, weights, None)
    z = logits.data - logits.data.max()
    e = np.exp(z)
    probs = e / e.sum()
    loss_val = np.asarray(np.log(e.sum()) - z[identity], dtype=logits.data.dtype)

    def backward_fn(gy):
        g = probs.copy()
        g[identity] -= 1.0
        return (gy * g,)

    return _emit(tape, loss_val, (logits,), backward_fn)


def squared_distance(tape, u_a: Tensor, u_b: Tensor) -> Tensor:
    d = sub(tape, u_a, u_b)
    return sum_all(tape, mul(tape, d, d))


def contrastive_loss(tape, u_a: Tensor, u_b: Tensor, same: bool, margin: float = 2.0,
                     squared_margin: bool = True) -> Tensor:
    """Pair loss: squared distance for positives, hinge for negatives.

    A negative pair costs max(0, margin - d^2): the margin is compared
    against the squared distance (the literal published form). Passing
    squared_margin=False compares against the unsquared distance instead.
    The subgradient at the hinge point is 0.
    """
    d2 = squared_distance(tape, u_a, u_b)
    if same:
        return d2
    if not squared_margin:
        d2 = _sqrt_op(tape, d2)
    return relu(tape, add_const(tape, negate(tape, d2), margin))


def _sqrt_op(tape, x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return _emit(tape, y, (x,), lambda gy: (gy * 0.5 / np.maximum(y, 1e-12),))


def multi_task_loss(tape, u_a: Tensor, u_b: Tensor, same: bool, identities, weights: Tensor,
                    margin: float = 2.0) -> tuple:
    """Contrastive plus both identity terms, equally weighted.

    Returns (total, contrastive, class_a, class_b) Tensors so the trainer
    can trace each component.
    """
    c_a, c_b = identities
    l_con = contrastive_loss(tape, u_a, u_b, same, margin)
    l_a = classification_loss(tape, u_a, weights, c_a)
    l_b = classification_loss(tape, u_b, weights, c_b)
    total = add(tape, l_con, add(tape, l_a, l_b))
    return total, l_con, l_a, l_b

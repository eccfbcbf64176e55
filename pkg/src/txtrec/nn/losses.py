"""Training losses."""

import numpy as np

from txtrec.tensor import ops
from txtrec.tensor.core import Tensor


def cross_entropy_loss(logits: Tensor, labels: np.ndarray | int) -> Tensor:
    """Mean of ``-log softmax(logits)[label]`` over the batch.

    Args:
        logits: ``[V]`` for one example or ``[B, V]`` for a batch.
        labels: Item id, or ``[B]`` item ids.

    Raises:
        VocabularyError: If a label is outside ``[0, V)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim == 1:
        logits = ops.reshape(logits, (1, logits.shape[0]))
        labels = labels.reshape(1)
    picked = ops.pick(ops.log_softmax_lastdim(logits), labels)
    return ops.neg(ops.mean(picked))

import numpy as np
import pytest

from dgn.autodiff import Tape, backward
from dgn.training import cross_entropy


def central_difference(f, tensors, h=1e-5):
    """Independent finite-difference gradients of scalar f() w.r.t. tensors.

    ``f`` must re-evaluate the forward pass from the tensors' current data
    (no tape required). Returns one gradient array per tensor.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = f()
            flat[i] = original - h
            down = f()
            flat[i] = original
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(a, b, floor=1e-12):
    """Norm-based relative difference; 0/0 counts as a perfect match."""
    num = np.linalg.norm(np.asarray(a) - np.asarray(b))
    den = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return num / den


def model_loss_and_grads(model, prepared):
    """One taped forward/backward on a prepared batch."""
    params = model.parameters()
    with Tape():
        logits = model.forward(prepared)
        loss = cross_entropy(logits, prepared.labels)
    grads = backward(loss, [t for _, t in params])
    return loss, [grads[t] for _, t in params]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import sys
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT / "src"))

DATA_ROOT = REPO_ROOT / "data"


def finite_difference(fn, tensors, step: float = 1e-5):
    """Central finite differences of a scalar-valued fn wrt each tensor.

    fn must rebuild its graph from the tensors' current .data on every
    call; the returned arrays match each tensor's shape.
    """
    grads = []
    for tensor in tensors:
        grad = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = fn()
            flat[i] = original - step
            lower = fn()
            flat[i] = original
            grad_flat[i] = (upper - lower) / (2.0 * step)
        grads.append(grad)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def assert_gradients_match(fn, tensors, tolerance: float = 1e-4, step: float = 1e-5):
    """Compare backward() gradients against the finite-difference oracle."""
    for tensor in tensors:
        tensor.zero_grad()
    fn().backward()
    numeric = finite_difference(lambda: float(fn().data), tensors, step)
    for tensor, oracle in zip(tensors, numeric):
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        err = relative_error(analytic, oracle)
        assert err < tolerance, f"gradient mismatch (rel err {err:.3e}) for tensor of shape {tensor.shape}"


@pytest.fixture(scope="session")
def demo_splits():
    from aspect_gcn.data import Vocabulary, attach_token_ids, load_dataset_splits

    train_set, test_set = load_dataset_splits(DATA_ROOT, "demo")
    vocab = Vocabulary.build([train_set, test_set])
    attach_token_ids(train_set, vocab)
    attach_token_ids(test_set, vocab)
    return train_set, test_set, vocab

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def taylor_expm(a, tol=1e-20, max_terms=400):
    """Plain Taylor-series matrix exponential, the independent oracle."""
    a = np.asarray(a, dtype=np.float64)
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, max_terms):
        term = term @ a / k
        result = result + term
        if np.abs(term).max() <= tol * max(np.abs(result).max(), 1.0):
            break
    return result


def central_diff(f, x, h=1e-5):
    """Central finite difference of scalar f at scalar x."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def numeric_grad(f, arr, h=1e-6):
    """Entrywise central-difference gradient of scalar-valued f(arr)."""
    arr = np.asarray(arr, dtype=np.float64)
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(arr)
        flat[i] = orig - h
        fm = f(arr)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def check_dot_syntax(text):
    """Tiny structural check that text is one well-formed DOT digraph."""
    body = text.strip()
    assert body.startswith("digraph"), "must declare a digraph"
    assert body.count("{") == body.count("}"), "unbalanced braces"
    open_idx = body.index("{")
    assert body.endswith("}")
    for raw in body[open_idx + 1:-1].splitlines():
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        assert line.endswith(";"), f"statement missing semicolon: {line!r}"
        stmt = line[:-1].strip()
        # node statement, edge statement, or graph attribute
        if "->" in stmt:
            lhs = stmt.split("->")[0].strip()
            assert lhs, f"edge with empty tail: {line!r}"
        if "[" in stmt:
            assert stmt.count("[") == stmt.count("]"), f"unbalanced attrs: {line!r}"

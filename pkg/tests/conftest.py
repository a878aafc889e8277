import numpy as np
import pytest

from beam.rbm import RbmModel, all_binary_states, energy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def joint_table(model, beta=1.0):
    """All (v, h) states of a Bernoulli model with their exact probabilities,
    by brute-force enumeration of the energy."""
    states = all_binary_states(model.n_visible + model.n_hidden)
    v, h = states[:, : model.n_visible], states[:, model.n_visible :]
    logw = -beta * energy(model, v, h)
    p = np.exp(logw - logw.max())
    return v, h, p / p.sum()


def param_fd(fn, model, step=1e-5):
    """Central finite differences of ``fn(model)`` for every parameter,
    shaped like the model's parameter arrays."""
    out = []
    for name in ("visible_loc", "visible_log_scale", "hidden_bias", "weights"):
        base = getattr(model, name)
        grad = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1, -1):
                arr = base.copy()
                arr[idx] += sign * step
                kw = {n: getattr(model, n) for n in ("visible_loc", "visible_log_scale", "hidden_bias", "weights")}
                kw[name] = arr
                vals.append(fn(RbmModel(**kw, visible_kind=model.visible_kind)))
            grad[idx] = (vals[0] - vals[1]) / (2 * step)
        out.append(grad)
    return out


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- acceptance verdicts -------------------------------------------------------

ACCEPTANCE = {}


def record_clause(criterion: int, clause: str, ok: bool, detail: str = "") -> bool:
    """Remember one clause of an acceptance criterion for the summary lines."""
    ACCEPTANCE.setdefault(criterion, {})[clause] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        clauses = ACCEPTANCE[criterion]
        verdict = "PASS" if all(ok for ok, _ in clauses.values()) else "FAIL"
        tr.write_line(f"criterion {criterion}: {verdict}")
        for clause, (ok, detail) in clauses.items():
            tr.write_line(f"    [{'pass' if ok else 'FAIL'}] {clause}" + (f": {detail}" if detail else ""))

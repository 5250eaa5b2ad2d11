"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest
import torch

from mtac.synth import GeneratorConfig, generate

# collected by test_acceptance.py, printed after the run so every criterion
# shows up as one visible pass/fail line
ACCEPTANCE_RESULTS = []


def record_criterion(num: int, label: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((num, label, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num, label, passed, detail in sorted(ACCEPTANCE_RESULTS):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {label}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


def max_fd_error(fn, params, step=1e-5):
    """Worst gap between autograd and central finite differences.

    ``fn`` recomputes the scalar loss from the current values of ``params``
    (float64 leaf tensors, requires_grad=True). Gap is measured relative to
    max(1, |fd|) so near-zero gradients are compared absolutely.
    """
    loss = fn()
    grads = torch.autograd.grad(loss, params)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                hi = float(fn())
                flat[i] = orig - step
                lo = float(fn())
                flat[i] = orig
                fd = (hi - lo) / (2.0 * step)
                worst = max(worst, abs(gflat[i].item() - fd) / max(1.0, abs(fd)))
    return worst


def leaf(array, requires_grad=True):
    return torch.tensor(np.asarray(array), dtype=torch.float64, requires_grad=requires_grad)


@pytest.fixture(scope="session")
def small_corpus():
    """3-class, 4-AU, 8-dim feature corpus; small enough for per-test training."""
    cfg = GeneratorConfig(
        num_classes=3, num_aus=4, feature_dim=8, seed=11, cluster_separation=2.0
    )
    return generate(cfg, 40)

from __future__ import annotations

import numpy as np
import pytest

from covband import ekfgen
from covband.symmat import SymMatrix


def random_sym(rng: np.random.Generator, n: int, scale: float = 1.0) -> SymMatrix:
    a = rng.normal(0.0, scale, size=(n, n))
    return SymMatrix.from_dense(0.5 * (a + a.T))


def random_dd(rng: np.random.Generator, n: int) -> SymMatrix:
    """Off-diagonals drawn freely, diagonal = absolute row sum + slack."""
    a = rng.normal(0.0, 1.0, size=(n, n))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, np.abs(a).sum(axis=1) + rng.exponential(0.5, size=n))
    return SymMatrix.from_dense(a)


def random_spd(rng: np.random.Generator, n: int) -> SymMatrix:
    a = rng.normal(size=(n, n))
    return SymMatrix.from_dense(0.5 * ((a @ a.T) + (a @ a.T).T) + 0.1 * np.eye(n))


def synthetic_dataset(count: int, length: int, seed: int = 0) -> list:
    tracks = ekfgen.synth_trajectories(count, length, seed)
    return [ekfgen.generate_sequence(t, noise_seed=seed * 10_000 + i) for i, t in enumerate(tracks)]


@pytest.fixture(scope="session")
def small_dataset():
    return synthetic_dataset(6, 200, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Remember an acceptance outcome; printed once at the end of the run."""
    ACCEPTANCE[number] = (ok, detail)
    print(f"acceptance {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")

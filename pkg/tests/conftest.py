"""Shared fixtures: small parameter sets and one full run on the bundled data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from stressscore import pipeline as pl
from stressscore.config import RunConfig
from stressscore.distributions.metat import MetaTParams, StudentMarginal
from stressscore.marketdata import Factor

X, Y, Z = Factor("X", "1Y"), Factor("Y", "1Y"), Factor("Z", "1Y")


def make_params(mu, sigma, nu, corr, nu_bar, labels=None) -> MetaTParams:
    mu, sigma, nu = (np.broadcast_to(np.asarray(v, dtype=float), (len(corr),)) for v in (mu, sigma, nu))
    labels = labels or tuple(Factor("F", f"{k + 1}Y") for k in range(len(corr)))
    marg = tuple(StudentMarginal(float(m), float(s), float(n)) for m, s, n in zip(mu, sigma, nu))
    return MetaTParams(marg, np.asarray(corr, dtype=float), float(nu_bar), tuple(labels))


def corr2(rho: float) -> np.ndarray:
    return np.array([[1.0, rho], [rho, 1.0]])


def random_corr(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d + 2))
    c = a @ a.T
    s = np.sqrt(np.diag(c))
    c = c / np.outer(s, s)
    np.fill_diagonal(c, 1.0)
    return c


@dataclass
class FixtureRun:
    cfg: RunConfig
    returns: object
    universe: list
    cache: object
    base: object
    enriched: object
    res_base: object
    res_enriched: object


@pytest.fixture(scope="session")
def fixture_run(tmp_path_factory) -> FixtureRun:
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig.load(None, {"output_dir": str(out)})
    returns = pl.load_returns(cfg)
    universe = pl.make_universe(cfg, returns)
    cache = pl.make_cache(cfg, returns)
    base, enriched = pl.generated_sets(cfg, returns)
    rb = pl.score_set(cfg, universe, base, cache)
    re_ = pl.score_set(cfg, universe, enriched, cache)
    return FixtureRun(cfg, returns, universe, cache, base, enriched, rb, re_)


ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str = "") -> None:
    """Record one acceptance line and fail the calling test if ``ok`` is false."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)

"""PCA stress scenarios and scenario-set files."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .marketdata import Factor, ReturnMatrix

log = logging.getLogger(__name__)

ID_COLUMN = "scenario_id"


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    name: str
    factor_labels: tuple[Factor, ...]
    scenarios: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        labels = tuple(Factor(*f) for f in self.factor_labels)
        if not self.scenarios:
            raise ValidationError(f"scenario set {self.name!r} is empty")
        ids = [sid for sid, _ in self.scenarios]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate scenario ids {dupes}")
        frozen = []
        for sid, vec in self.scenarios:
            v = np.array(vec, dtype=float)
            if v.shape != (len(labels),):
                raise ValidationError(f"scenario {sid!r} has {v.size} entries, expected {len(labels)}")
            v.setflags(write=False)
            frozen.append((str(sid), v))
        object.__setattr__(self, "factor_labels", labels)
        object.__setattr__(self, "scenarios", tuple(frozen))

    def __len__(self):
        return len(self.scenarios)

    @property
    def ids(self) -> list[str]:
        return [sid for sid, _ in self.scenarios]

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([v for _, v in self.scenarios])

    def get(self, scenario_id: str) -> np.ndarray:
        for sid, v in self.scenarios:
            if sid == scenario_id:
                return v
        raise KeyError(scenario_id)

    def restricted(self, labels: Sequence) -> np.ndarray:
        """Scenario matrix (n_scenarios x len(labels)) on the given factors."""
        idx = [self.factor_labels.index(Factor(*lab)) for lab in labels]
        return self.matrix[:, idx]

    def aligned(self, labels: Sequence) -> "ScenarioSet":
        labels = [Factor(*f) for f in labels]
        missing = [str(f) for f in labels if f not in self.factor_labels]
        if missing:
            raise ValidationError(f"scenario set {self.name!r} lacks factor(s) {missing}")
        m = self.restricted(labels)
        return ScenarioSet(self.name, tuple(labels), tuple(zip(self.ids, m)))

    def to_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        with Path(path).open("w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([ID_COLUMN] + [str(f) for f in self.factor_labels])
            for sid, v in self.scenarios:
                w.writerow([sid] + [repr(float(x)) for x in v])


@dataclass(frozen=True, eq=False)
class PcaBasis:
    """Leading principal components of one curve's yield changes.

    ``components[k]`` is a unit vector over ``pillars``; ``sigmas[k]`` is the
    standard deviation it explains.
    """

    curve_id: str
    pillars: tuple[str, ...]
    components: np.ndarray
    sigmas: np.ndarray
    warnings: tuple[str, ...] = field(default=())

    @property
    def factors(self) -> list[Factor]:
        return [Factor(self.curve_id, p) for p in self.pillars]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def _fix_sign(vec: np.ndarray, k: int) -> np.ndarray:
    # level: positive sum; slope: rising to the long end; others: positive short end
    if k == 0:
        ref = vec.sum()
    elif k == 1:
        ref = vec[-1]
    else:
        ref = vec[0]
    return -vec if ref < 0 else vec


def pca_per_curve(returns: ReturnMatrix, curve_id: str, n_components: int = 3) -> PcaBasis:
    """Eigen-decomposition of the covariance of one curve's yield changes."""
    idx = [i for i, f in enumerate(returns.factor_labels) if f.curve == curve_id]
    if not idx:
        raise ValidationError(f"no factors for curve {curve_id!r}")
    pillars = tuple(returns.factor_labels[i].pillar for i in idx)
    if n_components > len(idx):
        raise ValidationError(f"{n_components} components requested from {len(idx)} pillars")
    x = returns.rows[:, idx]
    if x.shape[0] < len(idx):
        raise ValidationError(f"curve {curve_id!r}: {x.shape[0]} observations for {len(idx)} pillars")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    warnings = []
    usable = int(np.sum(vals > 1e-12 * max(vals[0], 0.0))) if vals[0] > 0 else 0
    if usable < n_components:
        msg = f"curve {curve_id!r}: covariance rank {usable} < {n_components} requested components"
        log.warning(msg)
        warnings.append(msg)
        n_components = usable
    comps = np.array([_fix_sign(vecs[:, k], k) for k in range(n_components)]).reshape(n_components, len(idx))
    sig = np.sqrt(np.maximum(vals[:n_components], 0.0))
    return PcaBasis(curve_id, pillars, comps, sig, tuple(warnings))


def _scenario_id(sign_a: int, sign_b: int, n: int) -> str:
    fmt = lambda s: f"{'+' if s > 0 else '-'}{n}"  # noqa: E731
    return f"({fmt(sign_a)}, {fmt(sign_b)})"


def _combine(aaa: PcaBasis, all_: PcaBasis, combos, name: str, scale: float) -> ScenarioSet:
    for b in (aaa, all_):
        if b.n_components < 3:
            raise ValidationError(f"curve {b.curve_id!r} has only {b.n_components} components, 3 needed")
    labels = tuple(aaa.factors + all_.factors)
    out = []
    for n, sa, sb in combos:
        k = n - 1
        va = sa * scale * aaa.sigmas[k] * aaa.components[k]
        vb = sb * scale * all_.sigmas[k] * all_.components[k]
        out.append((_scenario_id(sa, sb, n), np.concatenate([va, vb])))
    return ScenarioSet(name, labels, tuple(out))


_BASE = [(n, s, s) for n in (1, 2, 3) for s in (1, -1)]
_CROSS = [(n, s, -s) for n in (2, 3) for s in (1, -1)]


def build_base_set(aaa: PcaBasis, all_: PcaBasis, scale: float = 3.0) -> ScenarioSet:
    """Six scenarios: the n-th component of both curves with a common sign, n = 1..3."""
    return _combine(aaa, all_, _BASE, "base", scale)


def build_enriched_set(aaa: PcaBasis, all_: PcaBasis, scale: float = 3.0) -> ScenarioSet:
    """The base set plus opposite-sign combinations of components 2 and 3."""
    return _combine(aaa, all_, _BASE + _CROSS, "enriched", scale)


def load_scenario_set(file_path, factor_labels: Sequence | None = None, name: str | None = None) -> ScenarioSet:
    """Read a scenario CSV (``scenario_id`` column plus one column per factor).

    With ``factor_labels`` the columns are reordered to that order; a missing
    or unknown column is an error.
    """
    path = Path(file_path)
    if not path.is_file():
        raise ValidationError(f"missing scenario file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#"))]
    if not rows:
        raise ValidationError(f"{path}: empty scenario file")
    header = [h.strip() for h in rows[0]]
    if ID_COLUMN not in header:
        raise ValidationError(f"{path}: no {ID_COLUMN!r} column")
    id_pos = header.index(ID_COLUMN)
    try:
        cols = {Factor.parse(h): j for j, h in enumerate(header) if j != id_pos}
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if len(cols) != len(header) - 1:
        raise ValidationError(f"{path}: duplicate factor columns")
    if factor_labels is None:
        order = list(cols)
    else:
        order = [Factor(*f) for f in factor_labels]
        missing = [str(f) for f in order if f not in cols]
        if missing:
            raise ValidationError(f"{path}: missing factor column(s) {missing}")
        unknown = [str(f) for f in cols if f not in order]
        if unknown:
            raise ValidationError(f"{path}: unknown factor label(s) {unknown}")
    scenarios = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {lineno} has {len(r)} cells, header has {len(header)}")
        try:
            vec = [float(r[cols[f]]) for f in order]
        except ValueError:
            raise ValidationError(f"{path}: row {lineno}: non-numeric scenario value") from None
        scenarios.append((r[id_pos].strip(), np.array(vec)))
    return ScenarioSet(name or path.stem, tuple(order), tuple(scenarios))

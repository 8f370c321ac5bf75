"""Run configuration: a single JSON document, with CLI flags layered on top.

Relative paths are resolved against the config file's directory.  A path of
the form ``builtin:<name>`` refers to a file bundled in ``stressscore/data``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import __version__
from .distributions.fitting import FitSettings
from .errors import ValidationError
from .optimizer import SolverSettings
from .portfolios import PNL_SIGNS
from .scoring import FIT_MODES, TIE_RULES

DEFAULTS = {
    "data": {
        "curves": [
            {"id": "AAA", "path": "builtin:yields_AAA.csv"},
            {"id": "ALL", "path": "builtin:yields_ALL.csv"},
        ],
        "pillars": ["6M", "1Y", "2Y", "3Y", "4Y", "5Y"],
        "date_column": "DATE",
    },
    "fit": {
        "mode": "per-group",
        "min_observations": 250,
        "marginal_nu_bounds": [0.5, 50.0],
        "copula_nu_bounds": [1.0, 100.0],
    },
    "scenarios": {
        "source": "generate-pca",
        "scale": 3.0,
        "files": [],
    },
    "portfolios": {
        "coupon_rate": None,
        "pnl_sign": "direct",
    },
    "solver": {
        "tol_grad": 1e-8,
        "tol_con": 1e-10,
        "max_iters": 500,
        "box_halfwidth_sigmas": 8.0,
        "grid_points": 201,
    },
    "scoring": {
        "tie_break": "density",
        "jobs": 1,
        "detail_portfolios": [],
        "detail_grid_points": 41,
    },
    "output_dir": "stressscore-out",
    "seed": 0,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_path(value: str, base_dir: Path) -> Path:
    if value.startswith("builtin:"):
        return Path(str(resources.files("stressscore") / "data" / value[len("builtin:"):]))
    p = Path(value)
    return p if p.is_absolute() else (base_dir / p)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        """Defaults, then the JSON file at ``path`` (if any), then ``overrides``."""
        raw = copy.deepcopy(DEFAULTS)
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ValidationError(f"config file not found: {path}")
            try:
                doc = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON ({exc})") from None
            raw = _merge(raw, doc)
            base_dir = path.resolve().parent
        if overrides:
            raw = _merge(raw, overrides)
        cfg = cls(raw, base_dir)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        d = self.raw["data"]
        if len(d["curves"]) < 1:
            raise ValidationError("config: at least one curve is required")
        if not d["pillars"]:
            raise ValidationError("config: pillar list is empty")
        for c in d["curves"]:
            if "id" not in c or "path" not in c:
                raise ValidationError("config: each curve needs 'id' and 'path'")
            if not self.path(c["path"]).is_file():
                raise ValidationError(f"config: data file not found: {self.path(c['path'])}")
        if self.raw["fit"]["mode"] not in FIT_MODES:
            raise ValidationError(f"config: fit.mode must be one of {FIT_MODES}")
        if self.raw["portfolios"]["pnl_sign"] not in PNL_SIGNS:
            raise ValidationError(f"config: portfolios.pnl_sign must be one of {sorted(PNL_SIGNS)}")
        if self.raw["scoring"]["tie_break"] not in TIE_RULES:
            raise ValidationError(f"config: scoring.tie_break must be one of {TIE_RULES}")
        src = self.raw["scenarios"]["source"]
        if src not in ("generate-pca", "files"):
            raise ValidationError("config: scenarios.source must be 'generate-pca' or 'files'")
        for f in self.raw["scenarios"]["files"]:
            if not self.path(f).is_file():
                raise ValidationError(f"config: scenario file not found: {self.path(f)}")
        if src == "generate-pca" and len(d["curves"]) != 2:
            raise ValidationError("config: PCA scenario generation needs exactly two curves")
        if int(self.raw["scoring"]["jobs"]) < 1:
            raise ValidationError("config: scoring.jobs must be >= 1")

    def path(self, value: str) -> Path:
        return resolve_path(value, self.base_dir)

    @property
    def output_dir(self) -> Path:
        return self.path(self.raw["output_dir"])

    @property
    def curve_ids(self) -> list[str]:
        return [c["id"] for c in self.raw["data"]["curves"]]

    @property
    def pillars(self) -> list[str]:
        return [p.upper() for p in self.raw["data"]["pillars"]]

    @property
    def fit_mode(self) -> str:
        return self.raw["fit"]["mode"]

    def fit_settings(self) -> FitSettings:
        f = self.raw["fit"]
        return FitSettings(
            min_observations=int(f["min_observations"]),
            marginal_nu_bounds=tuple(f["marginal_nu_bounds"]),
            copula_nu_bounds=tuple(f["copula_nu_bounds"]),
        )

    def solver_settings(self) -> SolverSettings:
        s = self.raw["solver"]
        return SolverSettings(
            tol_grad=float(s["tol_grad"]),
            tol_con=float(s["tol_con"]),
            max_iters=int(s["max_iters"]),
            box_halfwidth_sigmas=float(s["box_halfwidth_sigmas"]),
            grid_points=int(s["grid_points"]),
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "version": __version__}

    def header_lines(self) -> list[str]:
        return [f"config_hash={self.config_hash()}", f"stressscore_version={__version__}"]

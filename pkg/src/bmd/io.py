"""Feature-bank text files, run configuration documents and result writers.

A feature bank is a CSV file with a one-line header::

    # BMDFB1 n=<n> d=<d> K=<K> logits=<0|1> labels=<0|1>

followed by ``n`` rows of ``d`` feature values, then ``K`` logits when
``logits=1``, then an integer label when ``labels=1``. Floats are written
with ``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .benchmark import GmmDomainSpec, hard_truck_profile, separable_profile
from .engine import STRATEGIES, AdaptationConfig, SourceConfig
from .objectives import LossWeights

__all__ = [
    "MAGIC",
    "FeatureBank",
    "FormatError",
    "ConfigError",
    "RunConfig",
    "read_feature_bank",
    "write_feature_bank",
    "format_feature_bank",
    "parse_feature_bank",
    "load_run_config",
    "parse_run_config",
    "write_labels_csv",
    "write_json",
    "write_curves_csv",
]

MAGIC = "BMDFB1"
_HEADER = re.compile(
    r"^#\s*BMDFB1\s+n=(\d+)\s+d=(\d+)\s+K=(\d+)\s+logits=([01])\s+labels=([01])\s*$")


class FormatError(ValueError):
    """Malformed feature-bank text; carries a 1-based line and column."""

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class ConfigError(ValueError):
    pass


@dataclass
class FeatureBank:
    features: np.ndarray  # (n, d)
    num_classes: int
    logits: np.ndarray | None = None  # (n, K)
    labels: np.ndarray | None = None  # (n,)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        n = self.features.shape[0]
        if self.num_classes < 1:
            raise ValueError("K must be at least 1")
        if self.logits is not None:
            self.logits = np.asarray(self.logits, dtype=np.float64)
            if self.logits.shape != (n, self.num_classes):
                raise ValueError(f"logits must have shape ({n}, {self.num_classes})")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ValueError(f"labels must have shape ({n},)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _fmt(v: float) -> str:
    return repr(float(v))


def format_feature_bank(bank: FeatureBank) -> str:
    out = io.StringIO()
    has_l, has_y = bank.logits is not None, bank.labels is not None
    out.write(f"# {MAGIC} n={bank.n} d={bank.d} K={bank.num_classes} "
              f"logits={int(has_l)} labels={int(has_y)}\n")
    for i in range(bank.n):
        cells = [_fmt(v) for v in bank.features[i]]
        if has_l:
            cells += [_fmt(v) for v in bank.logits[i]]
        if has_y:
            cells.append(str(int(bank.labels[i])))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def write_feature_bank(path, bank: FeatureBank) -> None:
    Path(path).write_text(format_feature_bank(bank), encoding="utf-8")


def parse_feature_bank(text: str) -> FeatureBank:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty file; expected a BMDFB1 header", 1)
    m = _HEADER.match(lines[0])
    if m is None:
        raise FormatError(f"bad header; expected '# {MAGIC} n=<n> d=<d> K=<K> logits=<0|1> labels=<0|1>'", 1)
    n, d, K, has_l, has_y = (int(g) for g in m.groups())
    if d < 1 or K < 1:
        raise FormatError("d and K must be at least 1", 1)
    width = d + (K if has_l else 0) + (1 if has_y else 0)
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != n:
        line = body[n][0] if len(body) > n else len(lines) + 1
        raise FormatError(f"header declares n={n} rows, found {len(body)}", line)
    feats = np.empty((n, d))
    logits = np.empty((n, K)) if has_l else None
    labels = np.empty(n, dtype=np.int64) if has_y else None
    for row, (lineno, ln) in enumerate(body):
        cells = next(csv.reader([ln]))
        if len(cells) != width:
            raise FormatError(f"expected {width} values, found {len(cells)}", lineno,
                              min(len(cells), width) + 1)
        for col, cell in enumerate(cells):
            is_label = has_y and col == width - 1
            try:
                v = int(cell) if is_label else float(cell)
            except ValueError:
                kind = "integer label" if is_label else "number"
                raise FormatError(f"cannot parse {cell.strip()!r} as {kind}", lineno, col + 1) from None
            if is_label:
                if not 0 <= v < K:
                    raise FormatError(f"label {v} outside [0, {K})", lineno, col + 1)
                labels[row] = v
            elif not math.isfinite(v):
                raise FormatError(f"non-finite value {cell.strip()!r}", lineno, col + 1)
            elif col < d:
                feats[row, col] = v
            else:
                logits[row, col - d] = v
    return FeatureBank(feats, K, logits, labels)


def read_feature_bank(path) -> FeatureBank:
    return parse_feature_bank(Path(path).read_text(encoding="utf-8"))


# -- run configuration -----------------------------------------------------

PROFILES = {"hard_truck": hard_truck_profile, "separable": separable_profile}


@dataclass(frozen=True)
class RunConfig:
    adaptation: AdaptationConfig = AdaptationConfig()
    source: SourceConfig = SourceConfig()
    profile: str = "hard_truck"
    data: tuple = ()  # sorted (key, value) pairs for the profile function
    model_dim: int = 16
    activation: str = "tanh"
    seeds: int = 5
    first_seed: int = 0
    strategies: tuple = STRATEGIES

    def spec_for_seed(self, seed: int) -> GmmDomainSpec:
        return PROFILES[self.profile](seed=seed, **dict(self.data))

    def to_dict(self) -> dict:
        return {
            "adaptation": self.adaptation.to_dict(),
            "source": {f.name: getattr(self.source, f.name) for f in fields(SourceConfig)},
            "data": {"profile": self.profile, **dict(self.data)},
            "model": {"dim": self.model_dim, "activation": self.activation},
            "ablation": {"seeds": self.seeds, "first_seed": self.first_seed,
                         "strategies": list(self.strategies)},
        }


def _check_keys(section: str, got: dict, allowed) -> None:
    if not isinstance(got, dict):
        raise ConfigError(f"section {section!r} must be an object")
    for key in got:
        if key not in allowed:
            raise ConfigError(f"unknown config key {section}.{key}")


def _coerce(section: str, key: str, value, default):
    if isinstance(default, bool) or default is None:
        return value
    if isinstance(default, int) and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, str) and isinstance(value, str):
        return value
    raise ConfigError(f"config key {section}.{key} has the wrong type ({type(value).__name__})")


def _build(cls, section: str, doc: dict, skip=()):
    names = {f.name for f in fields(cls)} - set(skip)
    _check_keys(section, doc, names)
    base = cls()
    return replace(base, **{k: _coerce(section, k, v, getattr(base, k)) for k, v in doc.items()})


def parse_run_config(doc: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a JSON-like document.

    Omitted keys fall back to the defaults (r=3, S=4, lambda=0.9999, 30
    epochs, batch 64, smoothing 0.1). Unknown keys raise :class:`ConfigError`.
    """
    sections = ("adaptation", "source", "data", "model", "ablation")
    _check_keys("<root>", doc, sections)

    ad = dict(doc.get("adaptation", {}))
    _check_keys("adaptation", ad, {f.name for f in fields(AdaptationConfig)})
    lw = ad.pop("loss_weights", None)
    adaptation = _build(AdaptationConfig, "adaptation", ad, skip=("loss_weights",))
    if lw is not None:
        _check_keys("adaptation.loss_weights", lw, ("alpha", "beta"))
        base = adaptation.loss_weights
        adaptation = replace(adaptation, loss_weights=LossWeights(
            float(lw.get("alpha", base.alpha)), float(lw.get("beta", base.beta))))
    try:
        adaptation.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    source = _build(SourceConfig, "source", doc.get("source", {}))

    data = dict(doc.get("data", {}))
    profile = data.pop("profile", "hard_truck")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; valid: {', '.join(PROFILES)}")
    func = PROFILES[profile]
    defaults = {k: v for k, v in zip(func.__code__.co_varnames[:func.__code__.co_argcount],
                                     _defaults_of(func))}
    defaults.pop("seed", None)
    _check_keys("data", data, set(defaults))
    data = {k: _coerce("data", k, v, defaults[k]) for k, v in data.items()}

    model = doc.get("model", {})
    _check_keys("model", model, ("dim", "activation"))
    abl = doc.get("ablation", {})
    _check_keys("ablation", abl, ("seeds", "first_seed", "strategies"))
    strategies = tuple(abl.get("strategies", STRATEGIES))
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")
    seeds = _coerce("ablation", "seeds", abl.get("seeds", 5), 5)
    if seeds < 1:
        raise ConfigError("ablation.seeds must be at least 1")
    return RunConfig(
        adaptation=adaptation,
        source=source,
        profile=profile,
        data=tuple(sorted(data.items())),
        model_dim=_coerce("model", "dim", model.get("dim", 16), 16),
        activation=_coerce("model", "activation", model.get("activation", "tanh"), "tanh"),
        seeds=seeds,
        first_seed=_coerce("ablation", "first_seed", abl.get("first_seed", 0), 0),
        strategies=strategies,
    )


def _defaults_of(func) -> list:
    code = func.__code__
    defs = func.__defaults__ or ()
    return [None] * (code.co_argcount - len(defs)) + list(defs)


def load_run_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_run_config(doc)


# -- writers -----------------------------------------------------------------

def write_labels_csv(path, hard_labels, soft_labels) -> None:
    hard = np.asarray(hard_labels, dtype=np.int64)
    soft = np.asarray(soft_labels, dtype=np.float64)
    K = soft.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "hard_label"] + [f"soft_{k}" for k in range(K)])
        for i, (h, row) in enumerate(zip(hard, soft)):
            w.writerow([i, int(h)] + [_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_curves_csv(path, record) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "pseudo_label_acc", "predicted_acc"])
        for e, (pl, pr) in enumerate(zip(record.pseudo_label_acc, record.predicted_acc)):
            w.writerow([e, _fmt(pl), _fmt(pr)])

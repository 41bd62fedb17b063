"""Run configuration: flat TOML sections, validation and a stable hash."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import tomli

SCENARIOS = ("interior", "separated", "cluster", "points")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: dict
    weight: dict
    eps_list: list
    scenario: str = "separated"
    points: list = field(default_factory=list)  # flat x, y pairs
    tags: list = field(default_factory=list)  # "b" / "i" per point
    candidates: list = field(default_factory=list)  # boundary curve parameters
    m: int = 1
    h: float = 0.05
    grading: float = 0.125
    seed: int = 0
    output: str = "layercrest-out"
    method: str = "newton"
    locate: bool = True
    solve: bool = True  # False stops after the landscape search
    max_iter: int = 80
    continuation: list = field(default_factory=list)
    lift: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def point_list(self):
        p = [float(v) for v in self.points]
        return [(p[k], p[k + 1]) for k in range(0, len(p), 2)]

    def tag_list(self):
        return [str(t).lower().startswith("b") for t in self.tags]

    @property
    def digest(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    """Short sha256 of the configuration; the output location is not part of it."""
    raw = {k: ({kk: vv for kk, vv in v.items() if kk != "output"} if k == "run" and isinstance(v, dict) else v)
           for k, v in raw.items()}
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _flat(name, value):
    if isinstance(value, dict):
        raise ConfigError(f"nested tables are not allowed ({name})")
    if isinstance(value, list) and any(isinstance(v, (list, dict)) for v in value):
        raise ConfigError(f"only flat lists are allowed ({name})")
    return value


def parse_config(raw: dict) -> RunConfig:
    for sec, body in raw.items():
        if not isinstance(body, dict):
            raise ConfigError(f"top-level key {sec!r} must be a section")
        for k, v in body.items():
            _flat(f"{sec}.{k}", v)
    if "domain" not in raw:
        raise ConfigError("missing [domain] section")
    run = dict(raw.get("run", {}))
    eps_list = [float(e) for e in run.get("eps_list", [])]
    if not eps_list:
        raise ConfigError("run.eps_list must list at least one eps")
    if any(e <= 0 for e in eps_list):
        raise ConfigError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    scenario = str(run.get("scenario", "separated")).lower()
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    h = float(run.get("h", 0.05))
    if h <= 0:
        raise ConfigError("mesh size h must be positive")
    pts = list(run.get("points", []))
    if len(pts) % 2:
        raise ConfigError("points must be a flat list of x, y pairs")
    tags = list(run.get("tags", []))
    if scenario == "points":
        if not pts:
            raise ConfigError("scenario 'points' needs run.points")
        if len(tags) != len(pts) // 2:
            raise ConfigError("one tag ('b' or 'i') per point")
    if scenario in ("interior", "separated", "cluster") and not run.get("candidates"):
        raise ConfigError(f"scenario {scenario!r} needs run.candidates")
    cont = [float(e) for e in run.get("continuation", [])]
    if cont and any(b >= a for a, b in zip(cont, cont[1:])):
        raise ConfigError("continuation schedule must be strictly decreasing")
    method = str(run.get("method", "newton")).lower()
    if method not in ("newton", "projected"):
        raise ConfigError("run.method must be 'newton' or 'projected'")
    return RunConfig(
        domain=dict(raw["domain"]),
        weight=dict(raw.get("weight", {"kind": "constant"})),
        eps_list=eps_list,
        scenario=scenario,
        points=pts,
        tags=tags,
        candidates=[float(c) for c in run.get("candidates", [])],
        m=int(run.get("m", 1)),
        h=h,
        grading=float(run.get("grading", 0.125)),
        seed=int(run.get("seed", 0)),
        output=str(run.get("output", "layercrest-out")),
        method=method,
        locate=bool(run.get("locate", True)),
        solve=bool(run.get("solve", True)),
        max_iter=int(run.get("max_iter", 80)),
        continuation=cont,
        lift=dict(raw.get("lift", {})),
        raw=raw,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(raw)

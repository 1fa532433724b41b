"""Scenario configuration: JSON schema, profiles, hashing, identifiers.

A scenario fully determines one simulation cell (architecture, rates, traffic
mix, durations, seeds). Two built-in profiles set the scale:

* ``paper``: full-scale rates (1 Tb/s backbone, 10 Gb/s distribution and UNI),
  3-hour runs with a 20-minute warmup, 28.6 Mb/s video.
* ``desk``: everything rate-related divided by 100 and runs shortened to
  600 s with a 60 s warmup, so load ratios (and therefore the trends) are
  preserved while a full sweep finishes in minutes on a workstation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .distributions import (
    ExponentialParams,
    GammaParams,
    LognormalParams,
    TruncLognormalParams,
    UniformParams,
)
from .errors import ConfigurationError
from .network import RatePlan
from .traffic import FtpSessionParams, HttpSessionParams, TrafficMix
from .video import FrameTrace, load_trace, synthesize_trace

REFERENCE = "reference"
HYBRID_PON = "hybrid_pon"

PROFILES = {
    "paper": {
        "rate_plan": RatePlan(
            backbone_bps=1_000_000_000_000,
            distribution_bps=10_000_000_000,
            uni_bps=10_000_000_000,
            rtt=0.01,
            olt_buffer_bytes=1_000_000,
            other_buffer_bytes=256_000,
        ),
        "sim_time": 10_800.0,
        "warmup": 1_200.0,
        "video_bit_rate": 28_600_000.0,
    },
    "desk": {
        "rate_plan": RatePlan(
            backbone_bps=10_000_000_000,
            distribution_bps=100_000_000,
            uni_bps=100_000_000,
            rtt=0.01,
            olt_buffer_bytes=128_000,
            other_buffer_bytes=64_000,
        ),
        "sim_time": 600.0,
        "warmup": 60.0,
        "video_bit_rate": 286_000.0,
    },
}

_DIST_BLOCK = {
    "type": "object",
    "properties": {
        "mu": {"type": "number"},
        "sigma": {"type": "number"},
        "max": {"type": "number"},
        "kappa": {"type": "number"},
        "theta": {"type": "number"},
        "lam": {"type": "number"},
        "a": {"type": "number"},
        "b": {"type": "number"},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "profile": {"enum": list(PROFILES)},
        "architecture": {
            "type": "object",
            "properties": {
                "kind": {"enum": [REFERENCE, HYBRID_PON]},
                "line_rate": {"type": "number", "exclusiveMinimum": 0},
                "n_tx": {"type": "integer", "minimum": 1},
                "tuning_time": {"type": "number", "minimum": 0},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "rate_plan": {
            "type": "object",
            "properties": {
                "backbone_bps": {"type": "number", "exclusiveMinimum": 0},
                "distribution_bps": {"type": "number", "exclusiveMinimum": 0},
                "uni_bps": {"type": "number", "exclusiveMinimum": 0},
                "rtt": {"type": "number", "minimum": 0},
                "olt_buffer_bytes": {"type": "integer", "exclusiveMinimum": 0},
                "other_buffer_bytes": {"type": "integer", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "n_onus": {"type": "integer", "minimum": 1},
        "users_per_onu": {"type": "integer", "minimum": 1},
        "traffic": {
            "type": "object",
            "properties": {
                "n_http": {"type": "integer", "minimum": 0},
                "n_ftp": {"type": "integer", "minimum": 0},
                "n_video": {"type": "integer", "minimum": 0},
                "start_stagger": {"type": "number", "minimum": 0},
                "http": {
                    "type": "object",
                    "properties": {
                        "html_size": _DIST_BLOCK,
                        "embedded_size": _DIST_BLOCK,
                        "n_embedded": _DIST_BLOCK,
                        "n_embedded_max": {"type": "integer", "minimum": 0},
                        "parsing_time": _DIST_BLOCK,
                        "reading_time": _DIST_BLOCK,
                        "request_size": _DIST_BLOCK,
                    },
                    "additionalProperties": False,
                },
                "ftp": {
                    "type": "object",
                    "properties": {
                        "file_size": _DIST_BLOCK,
                        "reading_time": _DIST_BLOCK,
                        "request_size": _DIST_BLOCK,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "video": {
            "type": "object",
            "properties": {
                "trace": {"type": "string"},
                "synthetic": {
                    "type": "object",
                    "properties": {
                        "frames": {"type": "integer", "minimum": 12},
                        "fps": {"type": "number", "exclusiveMinimum": 0},
                        "mean_bit_rate": {"type": "number", "exclusiveMinimum": 0},
                        "gop_size": {"type": "integer", "minimum": 1},
                        "b_frames": {"type": "integer", "minimum": 0},
                        "seed": {"type": "integer"},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "sim_time": {"type": "number", "exclusiveMinimum": 0},
        "warmup": {"type": "number", "minimum": 0},
        "replications": {"type": "integer", "minimum": 2},
        "base_seed": {"type": "integer"},
    },
    "required": ["architecture", "users_per_onu"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Architecture:
    kind: str
    line_rate: int = 0  # reference only
    n_tx: int = 0  # hybrid only
    tuning_time: float = 0.0

    def __post_init__(self):
        if self.kind == REFERENCE and self.line_rate <= 0:
            raise ConfigurationError("reference architecture needs line_rate > 0")
        if self.kind == HYBRID_PON and self.n_tx < 1:
            raise ConfigurationError("hybrid_pon architecture needs n_tx >= 1")

    def tag(self) -> str:
        if self.kind == REFERENCE:
            return f"R={self.line_rate}"
        return f"ntx={self.n_tx}"


@dataclass(frozen=True)
class Scenario:
    architecture: Architecture
    rate_plan: RatePlan
    users_per_onu: int
    n_onus: int = 16
    mix: TrafficMix = TrafficMix()
    video: dict = field(default_factory=dict)  # {"trace": path} | {"synthetic": {...}}
    sim_time: float = 600.0
    warmup: float = 60.0
    replications: int = 5
    base_seed: int = 1
    name: str = ""

    def __post_init__(self):
        if not self.warmup < self.sim_time:
            raise ConfigurationError(
                f"warmup ({self.warmup}) must be shorter than sim_time ({self.sim_time})"
            )
        if self.replications < 2:
            raise ConfigurationError("statistics need at least 2 replications")
        if self.architecture.kind == HYBRID_PON and self.architecture.n_tx > self.n_onus:
            raise ConfigurationError("n_tx cannot exceed n_onus")

    # -- provenance -----------------------------------------------------------

    def canonical_dict(self) -> dict:
        a = self.architecture
        mix = self.mix
        return {
            "architecture": {
                "kind": a.kind,
                "line_rate": a.line_rate,
                "n_tx": a.n_tx,
                "tuning_time": a.tuning_time,
            },
            "rate_plan": {
                "backbone_bps": self.rate_plan.backbone_bps,
                "distribution_bps": self.rate_plan.distribution_bps,
                "uni_bps": self.rate_plan.uni_bps,
                "rtt": self.rate_plan.rtt,
                "olt_buffer_bytes": self.rate_plan.olt_buffer_bytes,
                "other_buffer_bytes": self.rate_plan.other_buffer_bytes,
            },
            "n_onus": self.n_onus,
            "users_per_onu": self.users_per_onu,
            "traffic": {
                "n_http": mix.n_http,
                "n_ftp": mix.n_ftp,
                "n_video": mix.n_video,
                "start_stagger": mix.start_stagger,
                "http": _params_dict(mix.http),
                "ftp": _params_dict(mix.ftp),
            },
            "video": self.video,
            "sim_time": self.sim_time,
            "warmup": self.warmup,
            "replications": self.replications,
            "base_seed": self.base_seed,
        }

    def scenario_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def config_id(self) -> str:
        arch = "ref" if self.architecture.kind == REFERENCE else "pon"
        return f"{arch}|n={self.users_per_onu}|{self.architecture.tag()}|{self.scenario_hash()}"

    # -- assets ----------------------------------------------------------------

    def build_trace(self) -> FrameTrace | None:
        if self.mix.n_video == 0:
            return None
        if "trace" in self.video:
            return load_trace(self.video["trace"])
        spec = dict(self.video.get("synthetic", {}))
        spec.setdefault("frames", 3000)
        spec.setdefault("fps", 30.0)
        spec.setdefault("mean_bit_rate", PROFILES["desk"]["video_bit_rate"])
        spec.setdefault("seed", 12345)
        return synthesize_trace(
            n_frames=int(spec["frames"]),
            fps=float(spec["fps"]),
            mean_bit_rate=float(spec["mean_bit_rate"]),
            gop_size=int(spec.get("gop_size", 12)),
            b_frames=int(spec.get("b_frames", 2)),
            seed=int(spec["seed"]),
        )


def _params_dict(block) -> dict:
    out = {}
    for name, value in vars(block).items():
        if isinstance(
            value,
            (
                TruncLognormalParams,
                LognormalParams,
                GammaParams,
                ExponentialParams,
                UniformParams,
            ),
        ):
            out[name] = dict(vars(value))
        else:
            out[name] = value
    return out


_DIST_TYPES = {
    frozenset({"mu", "sigma", "max"}): TruncLognormalParams,
    frozenset({"mu", "sigma"}): LognormalParams,
    frozenset({"kappa", "theta"}): GammaParams,
    frozenset({"lam"}): ExponentialParams,
    frozenset({"a", "b"}): UniformParams,
}


def _dist_from_dict(d: dict, default):
    merged = dict(vars(default))
    merged.update(d)
    cls = _DIST_TYPES.get(frozenset(merged))
    if cls is None:
        raise ConfigurationError(f"cannot infer distribution from fields {sorted(merged)}")
    return cls(**merged)


def _http_from_cfg(cfg: dict) -> HttpSessionParams:
    d = HttpSessionParams()
    kw = {}
    for name in ("html_size", "embedded_size", "n_embedded", "parsing_time", "reading_time", "request_size"):
        if name in cfg:
            kw[name] = _dist_from_dict(cfg[name], getattr(d, name))
    if "n_embedded_max" in cfg:
        kw["n_embedded_max"] = cfg["n_embedded_max"]
    return HttpSessionParams(**kw)


def _ftp_from_cfg(cfg: dict) -> FtpSessionParams:
    d = FtpSessionParams()
    kw = {}
    for name in ("file_size", "reading_time", "request_size"):
        if name in cfg:
            kw[name] = _dist_from_dict(cfg[name], getattr(d, name))
    return FtpSessionParams(**kw)


def validate_scenario_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"scenario config invalid: {exc.message}") from exc


def scenario_from_config(cfg: dict, profile: str | None = None) -> Scenario:
    """Build a fully resolved scenario from a config dict, applying profile
    defaults for everything left unspecified."""
    validate_scenario_config(cfg)
    prof_name = profile or cfg.get("profile", "desk")
    if prof_name not in PROFILES:
        raise ConfigurationError(f"unknown profile {prof_name!r}")
    prof = PROFILES[prof_name]

    plan_kw = dict(vars(prof["rate_plan"]))
    plan_kw.update(cfg.get("rate_plan", {}))
    plan_kw = {k: int(v) if k.endswith("_bps") or k.endswith("bytes") else v for k, v in plan_kw.items()}
    plan = RatePlan(**plan_kw)

    a = cfg["architecture"]
    arch = Architecture(
        kind=a["kind"],
        line_rate=int(a.get("line_rate", 0)),
        n_tx=int(a.get("n_tx", 0)),
        tuning_time=float(a.get("tuning_time", 0.0)),
    )

    tr = cfg.get("traffic", {})
    mix = TrafficMix(
        n_http=int(tr.get("n_http", 1)),
        n_ftp=int(tr.get("n_ftp", 10)),
        n_video=int(tr.get("n_video", 1)),
        http=_http_from_cfg(tr.get("http", {})),
        ftp=_ftp_from_cfg(tr.get("ftp", {})),
        start_stagger=float(tr.get("start_stagger", 1.0)),
    )

    video = dict(cfg.get("video", {}))
    if "trace" not in video:
        synth = dict(video.get("synthetic", {}))
        synth.setdefault("mean_bit_rate", prof["video_bit_rate"])
        video["synthetic"] = synth

    return Scenario(
        architecture=arch,
        rate_plan=plan,
        n_onus=int(cfg.get("n_onus", 16)),
        users_per_onu=int(cfg["users_per_onu"]),
        mix=mix,
        video=video,
        sim_time=float(cfg.get("sim_time", prof["sim_time"])),
        warmup=float(cfg.get("warmup", prof["warmup"])),
        replications=int(cfg.get("replications", 5)),
        base_seed=int(cfg.get("base_seed", 1)),
        name=cfg.get("name", ""),
    )


def load_scenario(path, profile: str | None = None) -> Scenario:
    cfg = json.loads(Path(path).read_text())
    return scenario_from_config(cfg, profile)

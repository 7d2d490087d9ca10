"""Config file parsing, validation, serialization, and run manifests.

Configs are YAML mappings. A minimal config needs the class count and a
plan (image size plus at least one level); everything else has defaults:
k=65536, median kernel 3, product strategy, mean combiner, replacement
from the combined map. See README.md for the full schema.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .backends import (
    COMBINERS,
    Combiner,
    ConstantBackend,
    OracleBackend,
    OracleBackendConfig,
    SegmentationBackend,
    make_combiner,
)
from .errors import ConfigError, ParseError, ValidationError
from .maps import LabelMap
from .pipeline import FastConfig, PipelineConfig
from .tiling import build_scale_plan
from .uncertainty import ScoreStrategy

BACKEND_KINDS = ("constant", "oracle", "external")


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ValidationError(f"missing required key {key!r} in {where}")
    return mapping[key]


def _int_pair(value, where: str) -> tuple[int, int]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) for v in value)
    ):
        raise ValidationError(f"{where} must be a pair of integers, got {value!r}")
    return int(value[0]), int(value[1])


def parse_config_data(data: dict, where: str = "config") -> PipelineConfig:
    """Build a validated PipelineConfig from a parsed YAML mapping."""
    if not isinstance(data, dict):
        raise ValidationError(f"{where} must be a mapping, got {type(data).__name__}")
    known = {
        "seed", "classes", "plan", "k", "strategy", "replace_source",
        "combiner", "backend", "workers", "fast",
    }
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")

    classes = _require(data, "classes", where)
    if not isinstance(classes, int):
        raise ValidationError("classes must be an integer")

    plan_data = _require(data, "plan", where)
    if not isinstance(plan_data, dict):
        raise ValidationError("plan must be a mapping")
    img_h, img_w = _int_pair(_require(plan_data, "image", "plan"), "plan.image")
    levels_raw = _require(plan_data, "levels", "plan")
    if not isinstance(levels_raw, list) or not levels_raw:
        raise ValidationError("plan.levels must be a non-empty list of [h, w] pairs")
    levels = [_int_pair(lv, "plan.levels entry") for lv in levels_raw]
    proc = plan_data.get("proc")
    proc_h, proc_w = _int_pair(proc, "plan.proc") if proc is not None else levels[-1]
    pad = bool(plan_data.get("pad", False))
    plan = build_scale_plan(img_h, img_w, proc_h, proc_w, levels, pad=pad)

    strat_data = data.get("strategy", {})
    if not isinstance(strat_data, dict):
        raise ValidationError("strategy must be a mapping")
    try:
        strategy = ScoreStrategy(
            kind=strat_data.get("kind", "product"),
            alpha=strat_data.get("alpha"),
            median_kernel=int(strat_data.get("median_kernel", 3)),
        )
    except ValueError as e:
        raise ValidationError(str(e)) from None

    backend_data = data.get("backend", {"kind": "constant"})
    if not isinstance(backend_data, dict):
        raise ValidationError("backend must be a mapping")
    backend_kind = backend_data.get("kind", "constant")
    if backend_kind not in BACKEND_KINDS:
        raise ValidationError(f"backend.kind must be one of {BACKEND_KINDS}, got {backend_kind!r}")
    backend_options = {k: v for k, v in backend_data.items() if k != "kind"}

    combiner = data.get("combiner", "mean")
    if combiner not in set(COMBINERS) | {"external"}:
        raise ValidationError(
            f"combiner must be one of {sorted(set(COMBINERS) | {'external'})}, got {combiner!r}"
        )

    seed = data.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ValidationError("seed must be an integer")
    if backend_kind == "oracle" and seed is None:
        raise ValidationError("seed is required when the backend is stochastic (oracle)")

    fast = None
    if data.get("fast") is not None:
        fast_data = data["fast"]
        if not isinstance(fast_data, dict):
            raise ValidationError("fast must be a mapping")
        scales = fast_data.get("scales")
        if not isinstance(scales, list) or not all(isinstance(s, int) for s in scales):
            raise ValidationError("fast.scales must be a list of level indices")
        fast = FastConfig(
            scale_subset=tuple(scales),
            patches_per_scale=int(_require(fast_data, "patches_per_scale", "fast")),
        )

    try:
        return PipelineConfig(
            plan=plan,
            classes=classes,
            k=int(data.get("k", 65536)),
            strategy=strategy,
            replace_source=data.get("replace_source", "combined"),
            combiner=combiner,
            backend=backend_kind,
            backend_options=backend_options,
            seed=seed,
            workers=int(data.get("workers", 1)),
            fast=fast,
        )
    except ConfigError as e:
        raise ValidationError(str(e)) from None


def parse_config(path: str | Path) -> PipelineConfig:
    """Load and validate a YAML config file."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}" if mark else ""
        raise ParseError(f"invalid YAML in {path}{loc}: {e}") from e
    return parse_config_data(data, where=str(path))


def config_to_data(cfg: PipelineConfig) -> dict:
    """The canonical mapping form of a config (inverse of parse_config_data)."""
    data = {
        "classes": cfg.classes,
        "plan": {
            "image": [cfg.plan.image_h, cfg.plan.image_w],
            "levels": [[h, w] for h, w in cfg.plan.levels],
            "proc": [cfg.plan.proc_h, cfg.plan.proc_w],
            "pad": cfg.plan.pad,
        },
        "k": cfg.k,
        "strategy": {
            "kind": cfg.strategy.kind,
            "median_kernel": cfg.strategy.median_kernel,
        },
        "replace_source": cfg.replace_source,
        "combiner": cfg.combiner,
        "backend": {"kind": cfg.backend, **cfg.backend_options},
        "workers": cfg.workers,
    }
    if cfg.strategy.alpha is not None:
        data["strategy"]["alpha"] = cfg.strategy.alpha
    if cfg.seed is not None:
        data["seed"] = cfg.seed
    if cfg.fast is not None:
        data["fast"] = {
            "scales": list(cfg.fast.scale_subset),
            "patches_per_scale": cfg.fast.patches_per_scale,
        }
    return data


def serialize_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(config_to_data(cfg), sort_keys=True)


def config_digest(raw: bytes) -> str:
    """Stable digest of the exact config bytes."""
    return hashlib.sha256(raw).hexdigest()


def build_backend(cfg: PipelineConfig, gt: LabelMap | None = None) -> SegmentationBackend:
    """Instantiate the configured segmentation backend."""
    opts = cfg.backend_options
    if cfg.backend == "constant":
        return ConstantBackend(
            cfg.plan.proc_h, cfg.plan.proc_w, cfg.classes,
            class_index=int(opts.get("class_index", 0)),
        )
    if cfg.backend == "oracle":
        if gt is None:
            raise ConfigError("the oracle backend needs ground-truth labels")
        oracle_cfg = OracleBackendConfig(
            gt=gt,
            blur_sigma_at_coarsest=float(opts.get("blur_sigma_at_coarsest", 0.0)),
            label_noise_rate=float(opts.get("label_noise_rate", 0.0)),
            softness=float(opts.get("softness", 1.0)),
        )
        return OracleBackend(cfg.plan, cfg.classes, oracle_cfg, seed=cfg.seed)
    # external
    from .protocol import EndpointPool, ExternalSegmentationBackend

    command = opts.get("command")
    if not isinstance(command, list) or not command:
        raise ConfigError("external backend needs backend.command (a list of argv strings)")
    pool = EndpointPool(
        [str(c) for c in command],
        per_worker=bool(opts.get("per_worker", False)),
        timeout=float(opts.get("timeout", 30.0)),
    )
    return ExternalSegmentationBackend(pool, cfg.plan.proc_h, cfg.plan.proc_w, cfg.classes)


def build_combiner(cfg: PipelineConfig) -> Combiner:
    """Instantiate the configured combiner."""
    if cfg.combiner != "external":
        return make_combiner(cfg.combiner)
    from .protocol import EndpointPool, ExternalCombiner

    opts = cfg.backend_options.get("combine", {})
    command = opts.get("command")
    if not isinstance(command, list) or not command:
        raise ConfigError("external combiner needs backend.combine.command")
    pool = EndpointPool(
        [str(c) for c in command],
        per_worker=bool(opts.get("per_worker", False)),
        timeout=float(opts.get("timeout", 30.0)),
    )
    return ExternalCombiner(pool)


@dataclass
class RunManifest:
    """What a `run` produced and from which inputs, for reproducibility."""

    config_digest: str
    seed: int | None
    version: str = __version__
    stages: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

"""JSON experiment configuration: versioned schema, strict validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import (
    EuclideanGeometry,
    GeometrySchedule,
    LegendreGeometry,
    NegEntropySimplexGeometry,
    PNormGeometry,
    ScaledGeometry,
    one_plus_harmonic,
)
from .iteration import ConstantSteps, HarmonicOffsetSteps, PolynomialSteps, StepSchedule
from .noise import GaussianNoise, NoiseModel, StudentTNoise, TrimSchedule, ZeroNoise
from .operators import (
    IdentityOperator,
    Operator,
    random_affine_average,
    random_softmax_policy,
)

SCHEMA_VERSION = 1

REPORT_METRICS = ("final_avg_residual", "final_dist_to_ref_l1", "rate_fit", "envelope_check")


def _require_keys(obj: dict, where: str, required: tuple, optional: tuple = ()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{where}: missing required key {key!r}")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} (allowed: {sorted(allowed)})")


def build_operator(cfg: dict, where: str = "operator") -> Operator:
    _require_keys(cfg, where, ("kind",), ("dim", "eta", "matrix_seed", "matrix_scale",
                                          "probe_target", "matrix_norm", "lambda", "offset_scale"))
    kind = cfg["kind"]
    if kind == "softmax_policy":
        _require_keys(cfg, where, ("kind", "dim", "eta", "matrix_seed"),
                      ("matrix_scale", "probe_target"))
        return random_softmax_policy(
            dim=int(cfg["dim"]),
            eta=float(cfg["eta"]),
            matrix_seed=int(cfg["matrix_seed"]),
            matrix_scale=cfg.get("matrix_scale", "auto"),
            probe_target=float(cfg.get("probe_target", 0.95)),
        )
    if kind == "affine_average":
        _require_keys(cfg, where, ("kind", "dim", "matrix_seed"),
                      ("matrix_norm", "lambda", "offset_scale"))
        return random_affine_average(
            dim=int(cfg["dim"]),
            matrix_seed=int(cfg["matrix_seed"]),
            matrix_norm=float(cfg.get("matrix_norm", 0.5)),
            lam=float(cfg.get("lambda", 1.0)),
            offset_scale=float(cfg.get("offset_scale", 0.1)),
        )
    if kind == "identity":
        _require_keys(cfg, where, ("kind", "dim"))
        return IdentityOperator(int(cfg["dim"]))
    raise ConfigError(f"{where}: unknown operator kind {kind!r}")


def _build_base_geometry(cfg: dict, where: str) -> LegendreGeometry:
    kind = cfg.get("kind")
    if kind == "euclidean":
        _require_keys(cfg, where, ("kind",), ("modulus_c", "domain_floor"))
        kwargs = {k: float(cfg[k]) for k in ("modulus_c", "domain_floor") if k in cfg}
        return EuclideanGeometry(**kwargs)
    if kind == "neg_entropy_simplex":
        _require_keys(cfg, where, ("kind",), ("modulus_c", "domain_floor"))
        kwargs = {k: float(cfg[k]) for k in ("modulus_c", "domain_floor") if k in cfg}
        return NegEntropySimplexGeometry(**kwargs)
    if kind == "p_norm":
        _require_keys(cfg, where, ("kind", "p"), ("domain_floor",))
        kwargs = {"domain_floor": float(cfg["domain_floor"])} if "domain_floor" in cfg else {}
        return PNormGeometry(float(cfg["p"]), **kwargs)
    raise ConfigError(f"{where}: unknown geometry kind {kind!r}")


def build_geometry(cfg: dict, where: str = "geometry") -> LegendreGeometry | GeometrySchedule:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError(f"{where}: expected an object with a 'kind' key")
    if cfg["kind"] != "scaled":
        return _build_base_geometry(cfg, where)
    _require_keys(cfg, where, ("kind", "base"),
                  ("factor", "factor_schedule", "kappa_lower", "kappa_upper"))
    base = _build_base_geometry(cfg["base"], where + ".base")
    if "factor" in cfg and "factor_schedule" in cfg:
        raise ConfigError(f"{where}: give either 'factor' or 'factor_schedule', not both")
    if "factor" in cfg:
        return ScaledGeometry(float(cfg["factor"]), base)
    sched_cfg = cfg.get("factor_schedule")
    if sched_cfg is None:
        raise ConfigError(f"{where}: scaled geometry needs 'factor' or 'factor_schedule'")
    _require_keys(sched_cfg, where + ".factor_schedule", ("kind",), ("factor",))
    skind = sched_cfg["kind"]
    if skind == "one_plus_harmonic":
        scale_fn = one_plus_harmonic
        lo, hi = 1.0, 2.0
    elif skind == "constant":
        value = float(sched_cfg.get("factor", 1.0))
        scale_fn = lambda n, _v=value: _v  # noqa: E731
        lo = hi = value
    else:
        raise ConfigError(f"{where}.factor_schedule: unknown kind {skind!r}")
    lo = float(cfg.get("kappa_lower", lo))
    hi = float(cfg.get("kappa_upper", hi))
    return GeometrySchedule(base=base, scale_fn=scale_fn, kappa_lower=lo, kappa_upper=hi)


def build_steps(cfg: dict, where: str = "steps") -> StepSchedule:
    _require_keys(cfg, where, ("kind",), ("a", "gamma", "alpha"))
    kind = cfg["kind"]
    if kind == "harmonic_offset":
        _require_keys(cfg, where, ("kind", "a"))
        return HarmonicOffsetSteps(float(cfg["a"]))
    if kind == "polynomial":
        _require_keys(cfg, where, ("kind", "gamma"))
        return PolynomialSteps(float(cfg["gamma"]))
    if kind == "constant":
        _require_keys(cfg, where, ("kind", "alpha"))
        return ConstantSteps(float(cfg["alpha"]))
    raise ConfigError(f"{where}: unknown steps kind {kind!r}")


def build_noise(cfg: dict, where: str = "noise") -> NoiseModel:
    _require_keys(cfg, where, ("kind",), ("sigma", "dof", "scale", "seed"))
    kind = cfg["kind"]
    seed = int(cfg.get("seed", 0))
    if kind == "zero":
        return ZeroNoise(seed=seed)
    if kind == "gaussian":
        _require_keys(cfg, where, ("kind", "sigma"), ("seed",))
        return GaussianNoise(sigma=float(cfg["sigma"]), seed=seed)
    if kind == "student_t":
        _require_keys(cfg, where, ("kind", "dof"), ("scale", "seed"))
        return StudentTNoise(dof=float(cfg["dof"]), scale=float(cfg.get("scale", 1.0)), seed=seed)
    raise ConfigError(f"{where}: unknown noise kind {kind!r}")


def build_trim(cfg: dict, where: str = "trim") -> TrimSchedule:
    _require_keys(cfg, where, ("kind",), ("k",))
    kind = cfg["kind"]
    if kind == "fixed":
        _require_keys(cfg, where, ("kind", "k"))
        return TrimSchedule("fixed", k=int(cfg["k"]))
    if kind in ("none", "log_schedule"):
        return TrimSchedule(kind)
    raise ConfigError(f"{where}: unknown trim kind {kind!r}")


@dataclass
class VariantSpec:
    """One algorithm row of an experiment (geometry/steps/noise/trim)."""

    name: str
    geometry: LegendreGeometry | GeometrySchedule
    steps: StepSchedule
    noise: NoiseModel
    trim: TrimSchedule
    raw: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """A named comparison: several variants sharing one operator instance."""

    name: str
    operator: Operator
    variants: list[VariantSpec]
    seeds: list[int]
    n_iters: int
    record_every: int | None
    init: str
    report_metrics: tuple[str, ...]
    outputs: str | None
    raw: dict = field(default_factory=dict)


def parse_experiment(doc: dict) -> ExperimentConfig:
    _require_keys(
        doc,
        "config",
        ("schema_version", "name", "operator", "n_iters", "seeds", "variants"),
        ("record_every", "init", "report", "outputs"),
    )
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"config: schema_version {doc['schema_version']!r} unsupported (expected {SCHEMA_VERSION})"
        )
    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("config.seeds: must be a nonempty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("config.seeds: seeds must be distinct")
    report = tuple(doc.get("report", REPORT_METRICS))
    for m in report:
        if m not in REPORT_METRICS:
            raise ConfigError(f"config.report: unknown metric {m!r} (allowed: {list(REPORT_METRICS)})")
    operator = build_operator(doc["operator"])
    variants = []
    names = set()
    raw_variants = doc["variants"]
    if not isinstance(raw_variants, list) or not raw_variants:
        raise ConfigError("config.variants: must be a nonempty list")
    for i, v in enumerate(raw_variants):
        where = f"variants[{i}]"
        _require_keys(v, where, ("name", "geometry", "steps", "noise"), ("trim",))
        if v["name"] in names:
            raise ConfigError(f"{where}: duplicate variant name {v['name']!r}")
        names.add(v["name"])
        variants.append(
            VariantSpec(
                name=str(v["name"]),
                geometry=build_geometry(v["geometry"], where + ".geometry"),
                steps=build_steps(v["steps"], where + ".steps"),
                noise=build_noise(v["noise"], where + ".noise"),
                trim=build_trim(v.get("trim", {"kind": "none"}), where + ".trim"),
                raw=v,
            )
        )
    init = doc.get("init", "uniform")
    if init != "uniform":
        raise ConfigError("config.init: only 'uniform' is supported in schema v1")
    return ExperimentConfig(
        name=str(doc["name"]),
        operator=operator,
        variants=variants,
        seeds=[int(s) for s in seeds],
        n_iters=int(doc["n_iters"]),
        record_every=int(doc["record_every"]) if "record_every" in doc else None,
        init=init,
        report_metrics=report,
        outputs=doc.get("outputs"),
        raw=doc,
    )


def load_experiment(path) -> ExperimentConfig:
    """Parse and validate an experiment file, with line-anchored JSON errors."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        return parse_experiment(doc)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e

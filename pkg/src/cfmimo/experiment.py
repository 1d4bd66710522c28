"""Experiment orchestration: sweep values x setups x (pilot, AP) schemes.

Every setup owns a fixed family of random streams derived from
``(seed, setup)``, so results do not depend on execution order and parallel
runs reproduce sequential ones bit for bit.
"""
from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import apselect
from .channel import build_covariance_set, place_network, sample_channels
from .config import ConfigError, NetworkConfig
from .pilots import PILOT_SCHEMES, assign_capa, assign_random
from .similarity import SIMILARITY_KINDS, ap_similarity_matrix, ue_similarity_matrix
from .uplink import WEIGHTINGS, accumulate_uatf_many, spectral_efficiency

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EMIT_MODES = ("per-ue-samples", "cdf", "percentile-summary")
SWEEPABLE = ("L", "K", "N", "tau_p", "tau_c", "asd_deg", "uplink_power", "noise_power", "area_side")

# spawn-key slots of the per-setup streams
_GEOMETRY, _RANDOM_PILOTS, _REALIZATIONS, _SNAPSHOT = range(4)


@dataclass(frozen=True)
class Sweep:
    param: str
    values: tuple

    def __post_init__(self) -> None:
        if self.param not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.param!r}; choose from {SWEEPABLE}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ExperimentSpec:
    base: NetworkConfig = field(default_factory=NetworkConfig)
    pilot_schemes: tuple = ("capa", "random")
    ap_schemes: tuple = ("all",)
    sweep: Sweep | None = None
    output_path: str | None = None
    emit: str = "per-ue-samples"
    similarity: str = "statistical"
    weighting: str = "lsfd"
    capa_literal: bool = False
    ap_threshold: str = "quantile"
    ap_quantile: float = 0.5
    ap_complement: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "pilot_schemes", tuple(self.pilot_schemes))
        object.__setattr__(self, "ap_schemes", tuple(self.ap_schemes))
        if not self.pilot_schemes or not self.ap_schemes:
            raise ConfigError("need at least one pilot scheme and one AP scheme")
        for name in self.pilot_schemes:
            if name not in PILOT_SCHEMES:
                raise ConfigError(f"unknown pilot scheme {name!r}")
        for name in self.ap_schemes:
            _parse_ap_scheme(name)
        if self.emit not in EMIT_MODES:
            raise ConfigError(f"emit must be one of {EMIT_MODES}")
        if self.similarity not in SIMILARITY_KINDS:
            raise ConfigError(f"similarity must be one of {SIMILARITY_KINDS}")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}")
        if self.ap_threshold not in ("quantile", "literal"):
            raise ConfigError("ap_threshold must be 'quantile' or 'literal'")
        if not 0.0 <= self.ap_quantile <= 1.0:
            raise ConfigError("ap_quantile must lie in [0, 1]")
        top = [m for kind, m in map(_parse_ap_scheme, self.ap_schemes) if kind == "top_m"]
        for cfg in self.configs():
            if top and max(top) > cfg.L:
                raise ConfigError(f"top_m:{max(top)} needs at least that many APs, config has L={cfg.L}")

    def configs(self) -> list[NetworkConfig]:
        if self.sweep is None:
            return [self.base]
        try:
            return [self.base.replace(**{self.sweep.param: v}) for v in self.sweep.values]
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def scheme_labels(self) -> list[str]:
        return [f"{p}+{a}" for p in self.pilot_schemes for a in self.ap_schemes]

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["pilot_schemes"] = list(self.pilot_schemes)
        d["ap_schemes"] = list(self.ap_schemes)
        if self.sweep is not None:
            d["sweep"] = {"param": self.sweep.param, "values": list(self.sweep.values)}
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported spec schema_version {version!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
        base = NetworkConfig.from_dict(data.pop("base", {}) or {})
        sweep = data.pop("sweep", None)
        if sweep is not None:
            if not isinstance(sweep, Mapping) or set(sweep) != {"param", "values"}:
                raise ConfigError("sweep must be a mapping with 'param' and 'values'")
            sweep = Sweep(param=sweep["param"], values=tuple(sweep["values"]))
        return cls(base=base, sweep=sweep, **data)


@dataclass(frozen=True)
class ResultRecord:
    scheme: str
    sweep_param: str
    sweep_value: Any
    setup: int
    ue: int
    se: float  # NaN when missing
    seed: int
    layout_digest: str = ""
    realization_digest: str = ""
    error: str = ""

    @property
    def missing(self) -> bool:
        return math.isnan(self.se)


def _parse_ap_scheme(name: str) -> tuple[str, int]:
    if name in ("all", "capa"):
        return name, 0
    if name.startswith("top_m:"):
        try:
            m = int(name.split(":", 1)[1])
        except ValueError:
            m = 0
        if m >= 1:
            return "top_m", m
    raise ConfigError(f"unknown AP scheme {name!r}; use 'all', 'capa' or 'top_m:<M>'")


def _stream(seed: int, setup: int, slot: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(setup, slot))


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def _serving_map(name: str, spec: ExperimentSpec, cov, snapshot) -> apselect.ServingMap:
    kind, m = _parse_ap_scheme(name)
    if kind == "all":
        return apselect.select_all(cov.K, cov.L)
    if kind == "top_m":
        return apselect.select_top_m(cov.beta, m)
    if cov.L == 1:
        groups = [[0]]
    else:
        e = ap_similarity_matrix(cov).e
        if spec.ap_threshold == "literal":
            groups = apselect.group_aps(np.sqrt(e), apselect.literal_gain_threshold(snapshot))
        else:
            thr = apselect.default_similarity_threshold(e, spec.ap_quantile)
            # a zero threshold can only arise when every AP pair is orthogonal
            groups = apselect.group_aps(e, thr) if thr > 0 else [list(range(cov.L))]
    return apselect.select_capa_aps(groups, cov.beta, complement=spec.ap_complement)


def run_setup(spec: ExperimentSpec, sweep_index: int, setup: int) -> list[ResultRecord]:
    """All scheme records of one setup at one sweep point."""
    cfg = spec.configs()[sweep_index]
    param = spec.sweep.param if spec.sweep else ""
    value = spec.sweep.values[sweep_index] if spec.sweep else ""
    labels = spec.scheme_labels()

    def failed(label: str, reason: str, layout_digest: str = "") -> list[ResultRecord]:
        return [
            ResultRecord(label, param, value, setup, k, math.nan, cfg.seed, layout_digest, "", reason)
            for k in range(cfg.K)
        ]

    try:
        geo = np.random.default_rng(_stream(cfg.seed, setup, _GEOMETRY))
        layout = place_network(cfg, geo)
        cov = build_covariance_set(layout, cfg, geo)
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        log.warning("setup %d: geometry failed: %s", setup, exc)
        return [r for label in labels for r in failed(label, f"geometry: {exc}")]
    layout_digest = _digest(layout.ap_positions, layout.ue_positions)
    snapshot = sample_channels(cov, np.random.default_rng(_stream(cfg.seed, setup, _SNAPSHOT))).h

    schemes = []
    errors: dict[str, str] = {}
    pilots = {}
    for name in spec.pilot_schemes:
        try:
            if name == "capa":
                sim = ue_similarity_matrix(cov, spec.similarity, h=snapshot)
                pilots[name] = assign_capa(sim, cfg.tau_p, literal=spec.capa_literal)
            else:
                rng = np.random.default_rng(_stream(cfg.seed, setup, _RANDOM_PILOTS))
                pilots[name] = assign_random(cfg.K, cfg.tau_p, rng)
        except Exception as exc:  # noqa: BLE001
            pilots[name] = exc
    serving = {}
    for name in spec.ap_schemes:
        try:
            serving[name] = _serving_map(name, spec, cov, snapshot)
        except Exception as exc:  # noqa: BLE001
            serving[name] = exc
    for p_name in spec.pilot_schemes:
        for a_name in spec.ap_schemes:
            label = f"{p_name}+{a_name}"
            bad = next((x for x in (pilots[p_name], serving[a_name]) if isinstance(x, Exception)), None)
            if bad is not None:
                errors[label] = f"scheme: {bad}"
            else:
                schemes.append((label, pilots[p_name], serving[a_name]))

    records: list[ResultRecord] = []
    stats = []
    digest = ""
    if schemes:
        try:
            stats, digest = accumulate_uatf_many(
                cov,
                [(a, s) for _, a, s in schemes],
                cfg.uplink_power,
                cfg.noise_power,
                _stream(cfg.seed, setup, _REALIZATIONS),
                cfg.n_realizations,
                with_digest=True,
            )
        except Exception as exc:  # noqa: BLE001
            log.warning("setup %d: realization loop failed: %s", setup, exc)
            for label, _, _ in schemes:
                errors[label] = f"uatf: {exc}"
            schemes = []
    by_label = {}
    for (label, assignment, serve), st in zip(schemes, stats):
        se = spectral_efficiency(
            st, serve, cfg.uplink_power, cfg.noise_power, cfg.tau_p, cfg.tau_c, spec.weighting
        )
        by_label[label] = [
            ResultRecord(
                label, param, value, setup, k, float(se[k]), cfg.seed, layout_digest, digest,
                "" if np.isfinite(se[k]) else "undersampled: interference matrix not positive definite",
            )
            for k in range(cfg.K)
        ]
    for label in labels:
        if label in by_label:
            records.extend(by_label[label])
        else:
            records.extend(failed(label, errors.get(label, "unknown failure"), layout_digest))
    return records


def _run_task(args) -> list[ResultRecord]:
    spec, sweep_index, setup = args
    return run_setup(spec, sweep_index, setup)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[ResultRecord]:
    """Run every sweep point and setup; records come back in canonical order.

    Canonical order is (sweep point, scheme, setup, UE), independent of
    ``workers``.
    """
    tasks = [
        (spec, i, s) for i, cfg in enumerate(spec.configs()) for s in range(cfg.n_setups)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    order = {label: i for i, label in enumerate(spec.scheme_labels())}
    sweep_pos = {}
    for (_, i, _), chunk in zip(tasks, chunks):
        for r in chunk:
            sweep_pos[id(r)] = i
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (sweep_pos[id(r)], order[r.scheme], r.setup, r.ue))
    return records

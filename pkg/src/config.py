"""
Run configuration: one JSON document describing the schema, the problems,
the system under test, the intervention engine, the similarity metric and
the search parameters.

Precedence: command-line flags > CAUSESCOPE_SEED > config file > defaults.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Optional, Union

from src.analysis.influence import SimilarityMetric, get_metric
from src.analysis.intervene import (
    CatalogEngine,
    InterventionEngine,
    RemoteEngine,
    TemplateEngine,
    load_catalog,
)
from src.analysis.model import (
    DATA_DIR,
    AnalysisConfig,
    CausalGraph,
    Feature,
    Problem,
    Schema,
    load_schema,
)
from src.errors import ConfigError, InvariantViolation, ParseError
from src.pipeline.adapters import HttpAdapter, SubprocessAdapter
from src.pipeline.base import SystemUnderTest
from src.pipeline.benchmark import benchmark_features, load_benchmark
from src.pipeline.simulator import build_sim, load_sim_spec

logger = logging.getLogger(__name__)

SEED_ENV = "CAUSESCOPE_SEED"
DEFAULT_CATALOG_PATH = DATA_DIR / "metagpt_catalog.json"

TOP_LEVEL_KEYS = {"schema", "problems", "sut", "engine", "similarity", "analysis", "ledger"}
ANALYSIS_KEYS = {"budget", "max_length", "theta", "patience", "seed"}
SUT_KINDS = {"sim", "benchmark", "subprocess", "http"}
ENGINE_KINDS = {"template", "catalog", "remote"}


@dataclass(frozen=True)
class RunConfig:
    sut: Mapping[str, Any]
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    engine: Mapping[str, Any] = field(default_factory=lambda: {"kind": "template"})
    similarity: Union[str, Mapping[str, Any]] = "jaccard"
    schema_path: Optional[Path] = None
    problems_path: Optional[Path] = None
    ledger_path: Optional[Path] = None
    source: Optional[Path] = None

    def with_analysis(self, **overrides) -> "RunConfig":
        """Copy with flag overrides applied to the search parameters (None values ignored)."""
        return RunConfig(
            sut=self.sut,
            analysis=self.analysis.with_overrides(**overrides),
            engine=self.engine,
            similarity=self.similarity,
            schema_path=self.schema_path,
            problems_path=self.problems_path,
            ledger_path=self.ledger_path,
            source=self.source,
        )

    def to_dict(self) -> dict:
        return {
            "sut": {k: str(v) if isinstance(v, Path) else v for k, v in self.sut.items()},
            "analysis": self.analysis.to_dict(),
            "engine": {k: str(v) if isinstance(v, Path) else v for k, v in self.engine.items()},
            "similarity": self.similarity,
            "schema": str(self.schema_path) if self.schema_path else None,
            "problems": str(self.problems_path) if self.problems_path else None,
        }


def _resolve(base: Path, value: Any, field_name: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ParseError("expected a non-empty path string", field=field_name)
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def _env_seed(env: Mapping[str, str]) -> Optional[int]:
    raw = env.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"{SEED_ENV} must be an unsigned integer, got {raw!r}", field=SEED_ENV)


def _parse_analysis(data: Any) -> AnalysisConfig:
    if data is None:
        return AnalysisConfig()
    if not isinstance(data, dict):
        raise ParseError("expected an object", field="analysis")
    unknown = sorted(set(data) - ANALYSIS_KEYS)
    if unknown:
        raise ParseError(f"unknown keys {unknown}", field="analysis")

    values = {}
    for key, cast in (("budget", int), ("max_length", int), ("patience", int), ("seed", int), ("theta", float)):
        if key not in data:
            continue
        value = data[key]
        if isinstance(value, bool) or (cast is int and isinstance(value, float)):
            raise ParseError(f"expected {cast.__name__}, got {value!r}", field=f"analysis.{key}")
        try:
            values[key] = cast(value)
        except (TypeError, ValueError):
            raise ParseError(f"expected {cast.__name__}, got {value!r}", field=f"analysis.{key}")
    return AnalysisConfig(**values)


def _parse_sut(data: Any, base: Path) -> dict:
    if not isinstance(data, dict):
        raise ParseError("expected an object with a 'kind'", field="sut")
    kind = data.get("kind")
    if kind not in SUT_KINDS:
        raise ParseError(f"kind must be one of {sorted(SUT_KINDS)}, got {kind!r}", field="sut.kind")

    sut = dict(data)
    if kind == "sim":
        sut["spec"] = _resolve(base, data.get("spec"), "sut.spec")
    elif kind == "benchmark":
        sut["path"] = _resolve(base, data.get("path"), "sut.path")
    elif kind == "subprocess":
        command = data.get("command")
        if not isinstance(command, list) or not command or not all(isinstance(c, str) for c in command):
            raise ParseError("expected a non-empty list of strings", field="sut.command")
    elif kind == "http":
        if not isinstance(data.get("url"), str) or not data["url"]:
            raise ParseError("expected a URL string", field="sut.url")
    return sut


def _parse_engine(data: Any, base: Path) -> dict:
    if data is None:
        return {"kind": "template"}
    if not isinstance(data, dict):
        raise ParseError("expected an object with a 'kind'", field="engine")
    kind = data.get("kind", "template")
    if kind not in ENGINE_KINDS:
        raise ParseError(f"kind must be one of {sorted(ENGINE_KINDS)}, got {kind!r}", field="engine.kind")
    engine = {**data, "kind": kind}
    if kind == "catalog" and "path" in data:
        engine["path"] = _resolve(base, data["path"], "engine.path")
    if kind == "remote" and not isinstance(data.get("url"), str):
        raise ParseError("expected a URL string", field="engine.url")
    return engine


def load_config(path: Union[str, Path], env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Parse and validate a run configuration file.

    Relative paths are resolved against the config file's directory. Omitted
    search parameters take the defaults N=100, L_max=5, theta=0.5, k=10.

    Raises:
        ParseError: unreadable file, invalid JSON (with line), or a bad field
        InvariantViolation: a parameter outside its range (e.g. theta not in (0, 1))
    """
    path = Path(path)
    env = os.environ if env is None else env
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"Cannot read config file {path}: {e}") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise ParseError("Config must be a JSON object")

    unknown = sorted(set(data) - TOP_LEVEL_KEYS)
    if unknown:
        raise ParseError(f"unknown top-level keys {unknown}", field=unknown[0])

    base = path.resolve().parent
    schema_path = _resolve(base, data["schema"], "schema") if data.get("schema") else None
    if schema_path is not None and not schema_path.exists():
        raise ParseError(f"Schema file {schema_path} does not exist", field="schema")

    analysis = _parse_analysis(data.get("analysis"))
    seed = _env_seed(env)
    if seed is not None:
        analysis = analysis.with_overrides(seed=seed)

    similarity = data.get("similarity", "jaccard")
    if not isinstance(similarity, (str, dict)):
        raise ParseError("expected a metric name or object", field="similarity")

    config = RunConfig(
        sut=_parse_sut(data.get("sut"), base),
        analysis=analysis,
        engine=_parse_engine(data.get("engine"), base),
        similarity=similarity,
        schema_path=schema_path,
        problems_path=_resolve(base, data["problems"], "problems") if data.get("problems") else None,
        ledger_path=_resolve(base, data["ledger"], "ledger") if data.get("ledger") else None,
        source=path,
    )
    logger.debug(f"Loaded config {path}: sut={config.sut['kind']}, analysis={analysis.to_dict()}")
    return config


def load_problems(path: Path) -> list[Problem]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"Cannot read problems file {path}: {e}", field="problems") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in problems file {path}: {e.msg}", line=e.lineno) from e
    if not isinstance(data, list):
        raise ParseError("Problems file must hold a JSON list", field="problems")
    try:
        problems = [Problem.from_dict(entry) for entry in data]
    except (KeyError, TypeError, AttributeError) as e:
        raise ParseError(f"Malformed problem entry: {e}", field="problems") from e
    ids = [p.id for p in problems]
    if len(set(ids)) != len(ids):
        raise InvariantViolation("Problem ids must be unique")
    return problems


class Case(NamedTuple):
    """One analysis unit: a problem, the system that runs it, and the graph over its features."""
    problem: Problem
    sut: SystemUnderTest
    graph: CausalGraph


class Workload:
    """Everything a command needs, built from a RunConfig. Close it to release adapters."""

    def __init__(
        self,
        config: RunConfig,
        features: list[Feature],
        cases: list[Case],
        engine: InterventionEngine,
        metric: SimilarityMetric,
    ):
        self.config = config
        self.features = features
        self.cases = cases
        self.engine = engine
        self.metric = metric

    @property
    def problems(self) -> list[Problem]:
        return [case.problem for case in self.cases]

    @property
    def feature_ids(self) -> list[str]:
        return sorted(f.id for f in self.features)

    def sut_family(self) -> dict[str, SystemUnderTest]:
        return {case.problem.id: case.sut for case in self.cases}

    def close(self):
        seen = set()
        for case in self.cases:
            if id(case.sut) not in seen:
                seen.add(id(case.sut))
                case.sut.close()
        self.engine.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def build_engine(config: RunConfig, metric: SimilarityMetric) -> InterventionEngine:
    spec = config.engine
    theta = config.analysis.theta
    kind = spec.get("kind", "template")
    if kind == "catalog":
        return load_catalog(spec.get("path", DEFAULT_CATALOG_PATH), theta=theta, metric=metric)
    if kind == "remote":
        return RemoteEngine(
            spec["url"],
            prompt_template=spec.get("prompt_template"),
            timeout=float(spec.get("timeout", 60.0)),
            max_in_flight=int(spec.get("max_in_flight", 4)),
            theta=theta,
            metric=metric,
        )
    templates = spec.get("templates")
    if templates:
        return TemplateEngine(templates, theta=theta, metric=metric)
    return TemplateEngine(theta=theta, metric=metric)


def _schema_for_sim(config: RunConfig, sim_features: set[str]) -> Optional[Schema]:
    if config.schema_path is None:
        return None
    schema = load_schema(config.schema_path)
    if set(schema.ids()) != sim_features:
        raise ConfigError(
            f"Schema features {schema.ids()} do not match the simulator's {sorted(sim_features)}"
        )
    return schema


def _problems(config: RunConfig) -> list[Problem]:
    if config.problems_path is None:
        raise ParseError(f"required for sut kind {config.sut['kind']!r}", field="problems")
    return load_problems(config.problems_path)


def build_workload(config: RunConfig) -> Workload:
    """
    Instantiate the system under test, the problems and the engine described by config.

    Raises:
        ParseError / ConfigError: missing or inconsistent inputs
        SimSpecError: invalid simulator spec
    """
    metric = get_metric(config.similarity)
    kind = config.sut["kind"]

    if kind == "benchmark":
        instances = load_benchmark(config.sut["path"])
        if not instances:
            raise ConfigError(f"Benchmark {config.sut['path']} has no instances")
        cases = [Case(inst.problem, build_sim(inst.spec), inst.spec.graph()) for inst in instances]
        schema = _schema_for_sim(config, set(instances[0].spec.features))
        features = list(schema.features) if schema else benchmark_features(instances[0].spec)
    elif kind == "sim":
        spec = load_sim_spec(config.sut["spec"])
        sim = build_sim(spec)
        schema = _schema_for_sim(config, set(spec.features))
        graph = schema.graph if schema else spec.graph()
        features = list(schema.features) if schema else benchmark_features(spec)
        cases = [Case(p, sim, graph) for p in _problems(config)]
    else:
        schema = load_schema(config.schema_path)
        if kind == "subprocess":
            sut = SubprocessAdapter(
                config.sut["command"],
                timeout=float(config.sut.get("timeout", 60.0)),
                repeat_count=int(config.sut.get("repeat_count", 1)),
                deterministic=bool(config.sut.get("deterministic", True)),
            )
        else:
            sut = HttpAdapter(
                config.sut["url"],
                timeout=float(config.sut.get("timeout", 60.0)),
                max_in_flight=int(config.sut.get("max_in_flight", 4)),
                repeat_count=int(config.sut.get("repeat_count", 1)),
                deterministic=bool(config.sut.get("deterministic", True)),
                min_delay=float(config.sut.get("min_delay", 0.0)),
            )
        features = list(schema.features)
        cases = [Case(p, sut, schema.graph) for p in _problems(config)]

    engine = build_engine(config, metric)
    if isinstance(engine, CatalogEngine) and not engine.covers(f.id for f in features):
        raise ConfigError("Intervention catalog does not cover every schema feature")

    logger.info(f"Workload: {len(cases)} problems, {len(features)} features, sut={kind}")
    return Workload(config, features, cases, engine, metric)

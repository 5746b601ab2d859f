"""
Counterfactual intervention engines.

An engine proposes replacement values for a feature; a replacement is only
accepted when its similarity to the original is strictly below theta. Engines
try at most five candidates before giving up.
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import requests

from src.analysis.influence import SimilarityMetric, jaccard
from src.analysis.model import DEFAULT_THETA, Combination, Problem, stable_seed
from src.errors import ConfigError, NoDistinctCandidate, ParseError, RemoteUnavailable, UnknownFeature
from src.pipeline.http_client import JsonHttpClient

logger = logging.getLogger(__name__)

MAX_CANDIDATES = 5

DEFAULT_TEMPLATES = (
    "treat the {feature} output as optional and skip it entirely",
    "assume every input arrives already reversed before any processing",
    "replace this with guidance copied from an unrelated legacy module",
    "interpret all numeric values as strings and concatenate them",
    "invert each boundary condition so inclusive limits become exclusive",
    "require a network call to an external service for every step",
    "return early with a constant placeholder instead of computing anything",
)

DEFAULT_PROMPT_TEMPLATE = (
    "Rewrite the {feature} field for problem {problem_id} so that it introduces a realistic "
    "error or misunderstanding while staying superficially plausible.\n"
    "Original value:\n{original}"
)


def verify_intervention(
    original: str,
    replacement: str,
    theta: float,
    metric: Optional[SimilarityMetric] = None,
) -> bool:
    """True iff the replacement is semantically distinct: similarity strictly below theta."""
    return (metric or jaccard)(original, replacement) < theta


class InterventionEngine(ABC):
    """Produces replacement values; identical (engine, inputs, seed) give identical output."""

    def __init__(self, theta: float = DEFAULT_THETA, metric: Optional[SimilarityMetric] = None):
        self.theta = theta
        self.metric = metric or jaccard

    @abstractmethod
    def candidates(self, problem: Problem, feature: str, original: str, seed: int) -> Iterable[str]:
        """Candidate replacements in the order they should be tried."""

    def generate(self, problem: Problem, feature: str, original: str, seed: int) -> str:
        tried = 0
        for candidate in self.candidates(problem, feature, original, seed):
            if tried >= MAX_CANDIDATES:
                break
            tried += 1
            if verify_intervention(original, candidate, self.theta, self.metric):
                return candidate
            logger.debug(f"Rejected candidate {tried} for {feature} on {problem.id}: too similar")
        raise NoDistinctCandidate(
            f"No candidate for {feature} on {problem.id} fell below theta={self.theta} "
            f"after {tried} attempts"
        )

    def close(self):
        pass


def _seeded_order(items: Sequence[str], *seed_parts: object) -> list[str]:
    rng = np.random.default_rng(stable_seed(*seed_parts))
    return [items[int(i)] for i in rng.permutation(len(items))]


class CatalogEngine(InterventionEngine):
    """Curated plausible-but-wrong values per feature, tried in a seeded order."""

    def __init__(self, catalog: Mapping[str, Sequence[str]], **kwargs):
        super().__init__(**kwargs)
        empty = sorted(f for f, values in catalog.items() if not values)
        if empty:
            raise ConfigError(f"Catalog lists must be non-empty; empty for {empty}")
        self.catalog = {f: tuple(values) for f, values in catalog.items()}

    def covers(self, feature_ids: Iterable[str]) -> bool:
        return all(f in self.catalog for f in feature_ids)

    def candidates(self, problem, feature, original, seed):
        if feature not in self.catalog:
            raise UnknownFeature(f"Catalog has no entries for feature {feature}")
        return _seeded_order(self.catalog[feature], "catalog", seed, problem.id, feature)


def load_catalog(path: Path, **kwargs) -> CatalogEngine:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"Cannot read catalog {path}: {e}", field="engine.path") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in catalog {path}: {e.msg}", line=e.lineno) from e
    return CatalogEngine({str(k): [str(v) for v in vs] for k, vs in data.items()}, **kwargs)


class TemplateEngine(InterventionEngine):
    """Error templates parameterized by feature id and problem."""

    def __init__(self, templates: Sequence[str] = DEFAULT_TEMPLATES, **kwargs):
        super().__init__(**kwargs)
        if not templates:
            raise ConfigError("TemplateEngine needs at least one template")
        self.templates = tuple(templates)

    def candidates(self, problem, feature, original, seed):
        for template in _seeded_order(self.templates, "template", seed, problem.id, feature):
            yield template.format(feature=feature, problem=problem.specification, problem_id=problem.id)


class RemoteEngine(InterventionEngine):
    """
    LLM-backed engine behind HTTP: POST {"feature", "original", "problem", "seed"} -> {"replacement"}.

    The prompt template is a placeholder; when set, the rendered prompt is
    sent in an extra "prompt" field.
    """

    def __init__(
        self,
        url: str,
        prompt_template: Optional[str] = None,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.client = JsonHttpClient(url, timeout=timeout, max_in_flight=max_in_flight)
        self.prompt_template = prompt_template

    def candidates(self, problem, feature, original, seed):
        for attempt in range(MAX_CANDIDATES):
            request = {
                "feature": feature,
                "original": original,
                "problem": problem.specification,
                "seed": seed + attempt,
            }
            if self.prompt_template:
                request["prompt"] = self.prompt_template.format(
                    feature=feature, problem_id=problem.id, original=original
                )
            try:
                payload = self.client.post(request)
            except (requests.exceptions.RequestException, ValueError) as e:
                raise RemoteUnavailable(f"Intervention engine at {self.client.url} failed: {e}") from e
            replacement = payload.get("replacement")
            if not isinstance(replacement, str):
                raise RemoteUnavailable(f"Intervention engine returned no replacement: {payload}")
            yield replacement

    def close(self):
        self.client.close()


def generate_intervention(
    engine: InterventionEngine,
    problem: Problem,
    feature: str,
    original: str,
    seed: int,
) -> str:
    """
    A replacement for one feature's value that is semantically distinct from the original.

    Raises:
        NoDistinctCandidate: five candidates were all at or above theta
        RemoteUnavailable: the remote engine could not be reached
    """
    if not original:
        raise ValueError(f"Cannot intervene on {feature} for {problem.id}: original value is empty")
    return engine.generate(problem, feature, original, seed)


class InterventionPlanner:
    """Builds intervention mappings for combinations, reusing one replacement per feature."""

    def __init__(self, engine: InterventionEngine, problem: Problem, seed: int):
        self.engine = engine
        self.problem = problem
        self.seed = seed
        self._replacements: dict[str, str] = {}

    def replacement(self, feature: str) -> str:
        if feature not in self._replacements:
            original = self.problem.baseline.get(feature, "")
            self._replacements[feature] = generate_intervention(
                self.engine, self.problem, feature, original, self.seed
            )
        return self._replacements[feature]

    def plan(self, combo: Combination) -> dict[str, str]:
        return {f: self.replacement(f) for f in combo}

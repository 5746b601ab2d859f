"""
Adapter wire protocol.

Request:  {"problem_id", "interventions": {feature: text}, "run_seed"}
          plus "disabled" / "pinned" feature lists when non-empty.
Response: {"outcome": "pass"|"fail"|"error", "observed": {feature: text},
           "tokens": int, "error_detail"?}
"""

import json
from typing import Iterable, Mapping

from src.errors import MalformedResponse
from src.pipeline.base import ExecutionRecord, Outcome, OutcomeKind


def encode_request(
    problem_id: str,
    interventions: Mapping[str, str],
    run_seed: int,
    disabled: Iterable[str] = (),
    pinned: Iterable[str] = (),
) -> dict:
    request = {
        "problem_id": problem_id,
        "interventions": dict(sorted(interventions.items())),
        "run_seed": run_seed,
    }
    disabled = sorted(disabled)
    pinned = sorted(pinned)
    if disabled:
        request["disabled"] = disabled
    if pinned:
        request["pinned"] = pinned
    return request


def encode_response(record: ExecutionRecord) -> dict:
    response = {
        "outcome": record.outcome.kind.value,
        "observed": dict(sorted(record.observed.items())),
        "tokens": int(record.tokens),
    }
    if record.outcome.is_error:
        response["error_detail"] = record.outcome.detail
    return response


def decode_response(
    payload: object,
    problem_id: str,
    interventions: Mapping[str, str],
) -> ExecutionRecord:
    """Validate a response object and turn it into a record. Raises MalformedResponse."""
    if isinstance(payload, (str, bytes)):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as e:
            raise MalformedResponse(f"Response is not JSON: {e.msg}") from e
    if not isinstance(payload, dict):
        raise MalformedResponse(f"Response must be a JSON object, got {type(payload).__name__}")

    try:
        kind = OutcomeKind(payload["outcome"])
    except (KeyError, ValueError) as e:
        raise MalformedResponse(f"Bad or missing 'outcome': {payload.get('outcome')!r}") from e

    observed = payload.get("observed", {})
    if not isinstance(observed, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in observed.items()
    ):
        raise MalformedResponse("'observed' must map feature ids to text")

    tokens = payload.get("tokens", 0)
    if isinstance(tokens, bool) or not isinstance(tokens, int) or tokens < 0:
        raise MalformedResponse(f"'tokens' must be a non-negative integer, got {tokens!r}")

    if kind is OutcomeKind.ERROR:
        outcome = Outcome.error(str(payload.get("error_detail", "error reported by adapter")))
    else:
        outcome = Outcome(kind)

    return ExecutionRecord(
        problem_id=problem_id,
        intervention=dict(interventions),
        outcome=outcome,
        observed=observed,
        tokens=tokens,
    )

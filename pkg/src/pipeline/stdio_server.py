"""
Reference wire-protocol server on stdin/stdout.

Without --sim it echoes: outcome "pass", observed = the interventions,
tokens = whitespace tokens in the intervention texts. With --sim it serves a
simulator spec (and optional problem file) so SubprocessAdapter can drive it.

    python -m src.pipeline.stdio_server [--sim spec.json] [--problems problems.json]
"""

import argparse
import json
import logging
import sys
from typing import Optional, TextIO

from src.analysis.model import Problem
from src.pipeline.base import ExecutionRecord, Outcome
from src.pipeline.protocol import encode_response
from src.pipeline.simulator import SimulatedPipeline, build_sim, load_sim_spec

logger = logging.getLogger(__name__)


def _error(detail: str) -> dict:
    return {"outcome": "error", "observed": {}, "tokens": 0, "error_detail": detail}


def echo_response(request: dict) -> dict:
    interventions = request["interventions"]
    record = ExecutionRecord(
        problem_id=str(request["problem_id"]),
        intervention=interventions,
        outcome=Outcome.passed(),
        observed=interventions,
        tokens=sum(len(v.split()) for v in interventions.values()),
    )
    return encode_response(record)


def handle(request: object, sim: Optional[SimulatedPipeline], problems: dict[str, Problem]) -> dict:
    if not isinstance(request, dict) or "problem_id" not in request:
        return _error("request must be an object with a problem_id")
    interventions = request.get("interventions", {})
    if not isinstance(interventions, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in interventions.items()
    ):
        return _error("interventions must map feature ids to text")

    if sim is None:
        return echo_response({**request, "interventions": interventions})

    problem_id = str(request["problem_id"])
    problem = problems.get(problem_id, Problem(id=problem_id))
    try:
        record = sim.execute(
            problem,
            interventions,
            run_seed=int(request.get("run_seed", 0)),
            disabled=request.get("disabled", ()),
            pinned=request.get("pinned", ()),
        )
    except ValueError as e:
        return _error(str(e))
    return encode_response(record)


def serve(
    stdin: TextIO,
    stdout: TextIO,
    sim: Optional[SimulatedPipeline] = None,
    problems: Optional[dict[str, Problem]] = None,
) -> int:
    """Answer one response line per request line until EOF. Returns the request count."""
    problems = problems or {}
    count = 0
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as e:
            logger.error(f"Couldn't parse request: {e}")
            response = _error(f"invalid JSON: {e.msg}")
        else:
            response = handle(request, sim, problems)
        stdout.write(json.dumps(response, sort_keys=True) + "\n")
        stdout.flush()
        count += 1
    return count


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Wire-protocol reference server on stdio")
    parser.add_argument("--sim", help="Simulator spec JSON to serve (default: echo mode)")
    parser.add_argument("--problems", help="Problems JSON list for the simulator baselines")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )

    sim = build_sim(load_sim_spec(args.sim)) if args.sim else None
    problems = {}
    if args.problems:
        with open(args.problems, encoding="utf-8") as fh:
            problems = {p.id: p for p in (Problem.from_dict(d) for d in json.load(fh))}

    logger.info(f"Serving wire protocol on stdio ({'simulator' if sim else 'echo'} mode)")
    count = serve(sys.stdin, sys.stdout, sim, problems)
    logger.info(f"Answered {count} requests")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""
Adapters that run external pipelines over the wire protocol.

SubprocessAdapter talks to a child process, one JSON object per line on its
standard streams, serializing calls. HttpAdapter POSTs the same objects and
bounds in-flight requests. Timeouts and malformed responses become ExecError
outcomes; an unreachable system raises AdapterUnavailable.
"""

import json
import logging
import queue
import subprocess
import threading
from typing import Mapping, Optional, Sequence

import requests

from src.analysis.model import Problem
from src.errors import AdapterTimeout, AdapterUnavailable, MalformedResponse
from src.pipeline.base import ExecutionRecord, SystemUnderTest, error_record
from src.pipeline.http_client import JsonHttpClient
from src.pipeline.protocol import decode_response, encode_request

logger = logging.getLogger(__name__)

_EOF = object()


class SubprocessAdapter(SystemUnderTest):
    """Runs a child process speaking the line-delimited JSON wire protocol."""

    max_in_flight = 1

    def __init__(
        self,
        command: Sequence[str],
        timeout: float = 60.0,
        repeat_count: int = 1,
        deterministic: bool = True,
        env: Optional[Mapping[str, str]] = None,
    ):
        """
        Args:
            command: argv of the child process
            timeout: Seconds to wait for each response line
            repeat_count: Runs per execute() for majority voting
            deterministic: Whether the child declares identical requests give identical results
            env: Optional environment for the child
        """
        if repeat_count < 1:
            raise ValueError("repeat_count must be at least 1")
        self.command = list(command)
        self.timeout = timeout
        self.repeat_count = repeat_count
        self.deterministic = deterministic
        self.env = dict(env) if env is not None else None
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[object]" = queue.Queue()
        self._lock = threading.Lock()

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                env=self.env,
            )
        except OSError as e:
            raise AdapterUnavailable(f"Cannot start adapter {self.command}: {e}") from e

        self._lines = queue.Queue()
        reader = threading.Thread(
            target=self._pump, args=(self._proc.stdout, self._lines), daemon=True
        )
        reader.start()
        logger.info(f"Started adapter process {self.command[0]} (pid {self._proc.pid})")

    @staticmethod
    def _pump(stream, lines: "queue.Queue[object]"):
        for line in stream:
            lines.put(line)
        lines.put(_EOF)

    def _stop(self):
        if self._proc is None:
            return
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream is not None:
                stream.close()
        self._proc = None

    def _roundtrip(self, request: dict) -> str:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise MalformedResponse(f"Adapter process closed its input: {e}") from e

        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty as e:
            raise AdapterTimeout(f"No response within {self.timeout}s") from e
        if line is _EOF:
            raise MalformedResponse("Adapter process exited before responding")
        return line

    def _run(self, problem, intervention, run_seed, disabled, pinned) -> ExecutionRecord:
        request = encode_request(problem.id, intervention, run_seed, disabled, pinned)
        with self._lock:
            try:
                line = self._roundtrip(request)
                return decode_response(line, problem.id, intervention)
            except AdapterTimeout as e:
                logger.warning(f"Adapter timeout for {problem.id}: {e}; restarting child")
                self._stop()
                return error_record(problem, intervention, f"timeout: {e}")
            except MalformedResponse as e:
                logger.warning(f"Malformed adapter response for {problem.id}: {e}")
                if self._proc is not None and self._proc.poll() is not None:
                    self._stop()
                return error_record(problem, intervention, f"malformed response: {e}")

    def close(self):
        with self._lock:
            self._stop()


class HttpAdapter(SystemUnderTest):
    """POSTs wire-protocol requests to an HTTP endpoint."""

    def __init__(
        self,
        url: str,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        repeat_count: int = 1,
        deterministic: bool = True,
        min_delay: float = 0.0,
        session: Optional[requests.Session] = None,
    ):
        if repeat_count < 1:
            raise ValueError("repeat_count must be at least 1")
        self.client = JsonHttpClient(
            url, timeout=timeout, max_in_flight=max_in_flight, min_delay=min_delay, session=session
        )
        self.max_in_flight = max_in_flight
        self.repeat_count = repeat_count
        self.deterministic = deterministic

    def _run(self, problem: Problem, intervention, run_seed, disabled, pinned) -> ExecutionRecord:
        request = encode_request(problem.id, intervention, run_seed, disabled, pinned)
        try:
            payload = self.client.post(request)
        except requests.exceptions.Timeout as e:
            return error_record(problem, intervention, f"timeout: {e}")
        except requests.exceptions.ConnectionError as e:
            raise AdapterUnavailable(f"Cannot reach {self.client.url}: {e}") from e
        except requests.exceptions.RequestException as e:
            return error_record(problem, intervention, f"{type(e).__name__}: {e}")
        except ValueError as e:
            logger.warning(f"Malformed adapter response for {problem.id}: {e}")
            return error_record(problem, intervention, f"malformed response: {e}")

        try:
            return decode_response(payload, problem.id, intervention)
        except MalformedResponse as e:
            logger.warning(f"Malformed adapter response for {problem.id}: {e}")
            return error_record(problem, intervention, f"malformed response: {e}")

    def close(self):
        self.client.close()

"""
JSON-over-HTTP client with rate limiting and bounded in-flight requests.

Shared by the HTTP adapter, the remote intervention engine and the
remote-embedding similarity metric.
"""

import logging
import threading
import time
from typing import Optional

import requests

logger = logging.getLogger(__name__)


class RateLimiter:
    """Minimum delay between consecutive requests (0 disables it)."""

    def __init__(self, min_delay: float = 0.0):
        self.min_delay = min_delay
        self.last_request_time: Optional[float] = None
        self._lock = threading.Lock()

    def wait(self):
        """Wait if necessary to respect the rate limit."""
        if self.min_delay <= 0:
            return
        with self._lock:
            if self.last_request_time is not None:
                elapsed = time.time() - self.last_request_time
                if elapsed < self.min_delay:
                    sleep_time = self.min_delay - elapsed
                    logger.debug(f"Rate limiting: sleeping {sleep_time:.2f}s")
                    time.sleep(sleep_time)
            self.last_request_time = time.time()


class JsonHttpClient:
    """POSTs JSON bodies and returns decoded JSON responses."""

    def __init__(
        self,
        url: str,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        min_delay: float = 0.0,
        session: Optional[requests.Session] = None,
    ):
        """
        Args:
            url: Endpoint receiving the POST requests
            timeout: Seconds before a request is abandoned
            max_in_flight: Concurrent requests allowed from this client
            min_delay: Minimum seconds between requests
            session: Optional preconfigured requests session
        """
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        self.url = url
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self.rate_limiter = RateLimiter(min_delay=min_delay)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self.session = session or requests.Session()
        self.session.headers.update({"Content-Type": "application/json"})

    def post(self, payload: dict) -> dict:
        """
        POST payload and decode the JSON response.

        Raises:
            requests.exceptions.Timeout, ConnectionError, HTTPError, RequestException
            ValueError: the response body is not a JSON object
        """
        with self._slots:
            self.rate_limiter.wait()
            try:
                logger.debug(f"POST {self.url}")
                response = self.session.post(self.url, json=payload, timeout=self.timeout)
                response.raise_for_status()
            except requests.exceptions.HTTPError as e:
                status_code = e.response.status_code if e.response is not None else "unknown"
                response_text = e.response.text[:500] if e.response is not None else "no response"
                if status_code == 404:
                    logger.error(f"Endpoint not found: {self.url}")
                elif status_code == 429:
                    logger.error(f"Rate limit exceeded at {self.url}")
                else:
                    logger.error(f"HTTP error {status_code} from {self.url}")
                    logger.error(f"Response: {response_text}")
                raise
            except requests.exceptions.Timeout:
                logger.error(f"Request timeout after {self.timeout}s: {self.url}")
                raise
            except requests.exceptions.ConnectionError as e:
                logger.error(f"Connection error: {self.url} - {e}")
                raise
            except requests.exceptions.RequestException as e:
                logger.error(f"Request failed: {self.url} - {type(e).__name__}: {e}")
                raise

        data = response.json()
        if not isinstance(data, dict):
            raise ValueError(f"Expected a JSON object from {self.url}, got {type(data).__name__}")
        return data

    def close(self):
        self.session.close()

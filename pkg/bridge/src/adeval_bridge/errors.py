"""Bridge-side error hierarchy."""

import json


class BridgeError(Exception):
    """Base class for everything the bridge raises on purpose."""


class FormatError(BridgeError):
    """Input rejected before anything was written."""


class EngineNotFoundError(BridgeError):
    """The engine executable is not available on PATH."""


class EngineFailedError(BridgeError):
    """The engine ran and exited nonzero.

    Carries the exit code, the raw stderr text, and, when stderr held the
    engine's JSON error document, the parsed payload.
    """

    def __init__(self, exit_code: int, stderr: str):
        self.exit_code = exit_code
        self.stderr = stderr
        self.payload = None
        detail = stderr.strip()
        try:
            doc = json.loads(detail)
            self.payload = doc["error"]
            detail = f"{self.payload['type']}: {self.payload['message']}"
        except (ValueError, KeyError, TypeError):
            pass
        super().__init__(f"engine exited with code {exit_code}: {detail}")

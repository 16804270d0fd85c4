"""Run reports: the reproducibility record every command writes."""

from __future__ import annotations

import sys
import time

from . import __version__
from .config import SceneConfig
from .model import QUASI_STATIC_LIMIT_HZ


class RunReport:
    """Collects inputs, results, and warnings for one command invocation.

    The echoed configuration re-parses to the identical scene, so every
    number in `results` can be reproduced by re-running the command.
    """

    def __init__(self, command: str, argv: list[str], config: SceneConfig):
        self.command = command
        self.argv = list(argv)
        self.config = config
        self.results: dict = {}
        self.warnings: list[str] = []
        self._t0 = time.monotonic()
        if config.frequency > QUASI_STATIC_LIMIT_HZ:
            self.warn(
                f"drive frequency {config.frequency:.6g} Hz exceeds the "
                "quasi-static validity bound of 1 MHz; RF field profiles are "
                "still computed magnetostatically")

    def warn(self, message: str) -> None:
        if message not in self.warnings:
            self.warnings.append(message)

    def payload(self) -> dict:
        return {
            "artifact": {"name": "wiretrap", "version": __version__,
                         "python": sys.version.split()[0]},
            "command": self.command,
            "argv": self.argv,
            "config": self.config.to_dict(),
            "results": self.results,
            "warnings": self.warnings,
            "wall_time_s": time.monotonic() - self._t0,
        }
